#include "branchgan/tensor.hpp"

namespace branchgan {

std::string to_string(const Shape4& s) {
  return "[" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
         std::to_string(s.w) + "]";
}

Tensor Tensor::reshaped(Shape4 s) const {
  if (s.size() != shape_.size()) {
    throw ConfigError("reshape " + to_string(shape_) + " -> " + to_string(s) + " changes size");
  }
  Tensor t = *this;
  t.shape_ = s;
  return t;
}

Image to_image(const Tensor& batch, int i) {
  const Shape4& s = batch.shape();
  Image img(s.h, s.w, s.c);
  for (int c = 0; c < s.c; ++c)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) img.at(y, x, c) = batch.at(i, c, y, x);
  return img;
}

Tensor to_batch(std::span<const Image> images) {
  if (images.empty()) return {};
  const Image& first = images.front();
  Tensor t({static_cast<int>(images.size()), first.channels, first.height, first.width});
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!images[i].same_shape(first)) throw ConfigError("to_batch: images differ in shape");
    for (int c = 0; c < first.channels; ++c)
      for (int y = 0; y < first.height; ++y)
        for (int x = 0; x < first.width; ++x)
          t.at(static_cast<int>(i), c, y, x) = images[i].at(y, x, c);
  }
  return t;
}

std::size_t Mask::count() const {
  std::size_t n = 0;
  for (auto v : values) n += v != 0;
  return n;
}

}  // namespace branchgan
