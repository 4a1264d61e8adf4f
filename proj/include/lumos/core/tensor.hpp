#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <vector>

namespace lumos {

// Row-major float32 tensor. Copies share storage (numpy-style views of the
// whole buffer); clone() gives an independent buffer. Data is 64-byte aligned.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape);

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int64_t> shape, float v);
  static Tensor from(std::vector<int64_t> shape, const std::vector<float>& values);

  const std::vector<int64_t>& shape() const { return shape_; }
  int ndim() const { return (int)shape_.size(); }
  int64_t dim(int i) const { return shape_[(size_t)i]; }
  int64_t numel() const { return numel_; }
  bool defined() const { return storage_ != nullptr; }

  float* data() { return storage_.get(); }
  const float* data() const { return storage_.get(); }

  float& operator[](int64_t i) { return storage_.get()[i]; }
  float operator[](int64_t i) const { return storage_.get()[i]; }

  template <typename... Ix>
  float& at(Ix... ix) { return storage_.get()[flat(ix...)]; }
  template <typename... Ix>
  float at(Ix... ix) const { return storage_.get()[flat(ix...)]; }

  void fill(float v);
  void zero() { fill(0.0f); }
  Tensor clone() const;

  // Same buffer, new shape; element count must match.
  Tensor reshape(std::vector<int64_t> shape) const;

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  template <typename... Ix>
  int64_t flat(Ix... ix) const {
    const int64_t idx[] = {(int64_t)ix...};
    int64_t off = 0;
    for (size_t d = 0; d < sizeof...(Ix); ++d) off = off * shape_[d] + idx[d];
    return off;
  }

  std::shared_ptr<float[]> storage_;
  std::vector<int64_t> shape_;
  int64_t numel_ = 0;
};

}  // namespace lumos
