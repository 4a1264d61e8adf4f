#include "lumos/kern/backend.hpp"

#include <cstdlib>
#include <stdexcept>

namespace lumos::kern {

const Backend* avx2_backend_or_null();    // kern_avx2.cpp
const Backend* avx512_backend_or_null();  // kern_avx512.cpp

std::vector<const Backend*> available_backends() {
  std::vector<const Backend*> out{&scalar_backend()};
  if (const Backend* b = avx2_backend_or_null()) out.push_back(b);
  if (const Backend* b = avx512_backend_or_null()) out.push_back(b);
  return out;
}

namespace {

const Backend* pick_default() {
  const Backend* best = &scalar_backend();
  if (const Backend* b = avx2_backend_or_null()) best = b;
  if (const Backend* b = avx512_backend_or_null()) best = b;
  if (const char* env = std::getenv("LUMOS_KERNELS")) {
    for (const Backend* b : available_backends())
      if (std::string(b->name) == env) return b;
    throw std::runtime_error(std::string("LUMOS_KERNELS=") + env +
                             " is not an available kernel backend");
  }
  return best;
}

const Backend*& active_slot() {
  static const Backend* slot = pick_default();
  return slot;
}

}  // namespace

const Backend& active() { return *active_slot(); }

void set_active(const std::string& name) {
  for (const Backend* b : available_backends()) {
    if (name == b->name) {
      active_slot() = b;
      return;
    }
  }
  throw std::runtime_error("unknown or unsupported kernel backend: " + name);
}

}  // namespace lumos::kern
