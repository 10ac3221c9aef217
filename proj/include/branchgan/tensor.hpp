#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace branchgan {

/// Raised for invalid configuration, malformed inputs, or violated preconditions.
/// The CLI maps it to the configuration-error exit code.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Shape4 {
  int n = 0, c = 0, h = 0, w = 0;

  [[nodiscard]] std::size_t size() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  [[nodiscard]] std::size_t per_sample() const {
    return static_cast<std::size_t>(c) * h * w;
  }
  bool operator==(const Shape4&) const = default;
};

std::string to_string(const Shape4& s);

/// Dense float32 activation tensor in NCHW order.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape4 shape, float fill = 0.0f)
      : shape_(shape), data_(shape.size(), fill) {}

  [[nodiscard]] const Shape4& shape() const { return shape_; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }

  [[nodiscard]] std::span<float> data() { return data_; }
  [[nodiscard]] std::span<const float> data() const { return data_; }

  [[nodiscard]] std::span<float> sample(int i) {
    return std::span<float>(data_).subspan(i * shape_.per_sample(), shape_.per_sample());
  }
  [[nodiscard]] std::span<const float> sample(int i) const {
    return std::span<const float>(data_).subspan(i * shape_.per_sample(), shape_.per_sample());
  }

  float& at(int n, int c, int h, int w) {
    return data_[((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }
  [[nodiscard]] float at(int n, int c, int h, int w) const {
    return data_[((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }

  /// Same data, new shape with equal element count.
  [[nodiscard]] Tensor reshaped(Shape4 s) const;

 private:
  Shape4 shape_{};
  std::vector<float> data_;
};

/// Image stored height x width x channels, values nominally in [0,1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, fill) {}

  float& at(int y, int x, int ch) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + ch];
  }
  [[nodiscard]] float at(int y, int x, int ch) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + ch];
  }
  [[nodiscard]] bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  bool operator==(const Image&) const = default;
};

/// Binary per-pixel mask (values 0 or 1), row-major.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> values;

  Mask() = default;
  Mask(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}
  [[nodiscard]] std::size_t count() const;
  bool operator==(const Mask&) const = default;
};

/// Sample i of an NCHW batch as an HWC image.
Image to_image(const Tensor& batch, int i);
/// Packs HWC images (equal shapes) into an NCHW batch.
Tensor to_batch(std::span<const Image> images);

}  // namespace branchgan
