#include "lumos/core/tensor.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace lumos {

namespace {

std::shared_ptr<float[]> alloc_aligned(int64_t n) {
  if (n == 0) return nullptr;
  // round byte count up to the alignment, aligned_alloc requires it
  size_t bytes = (size_t)n * sizeof(float);
  bytes = (bytes + 63) & ~(size_t)63;
  void* p = std::aligned_alloc(64, bytes);
  if (!p) throw std::bad_alloc();
  return std::shared_ptr<float[]>((float*)p, [](float* q) { std::free(q); });
}

int64_t count(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("tensor: negative dimension");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int64_t> shape)
    : shape_(std::move(shape)), numel_(count(shape_)) {
  storage_ = alloc_aligned(numel_);
  if (numel_) std::memset(storage_.get(), 0, (size_t)numel_ * sizeof(float));
}

Tensor Tensor::full(std::vector<int64_t> shape, float v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::from(std::vector<int64_t> shape, const std::vector<float>& values) {
  Tensor t(std::move(shape));
  if ((int64_t)values.size() != t.numel_)
    throw std::invalid_argument("tensor: value count does not match shape");
  std::memcpy(t.storage_.get(), values.data(), values.size() * sizeof(float));
  return t;
}

void Tensor::fill(float v) {
  float* p = storage_.get();
  for (int64_t i = 0; i < numel_; ++i) p[i] = v;
}

Tensor Tensor::clone() const {
  Tensor t;
  t.shape_ = shape_;
  t.numel_ = numel_;
  t.storage_ = alloc_aligned(numel_);
  if (numel_)
    std::memcpy(t.storage_.get(), storage_.get(), (size_t)numel_ * sizeof(float));
  return t;
}

Tensor Tensor::reshape(std::vector<int64_t> shape) const {
  if (count(shape) != numel_)
    throw std::invalid_argument("tensor: reshape changes element count");
  Tensor t;
  t.storage_ = storage_;
  t.shape_ = std::move(shape);
  t.numel_ = numel_;
  return t;
}

}  // namespace lumos
