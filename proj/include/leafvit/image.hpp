#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <string>
#include <vector>

#include "leafvit/errors.hpp"

namespace leafvit {

inline constexpr std::size_t kChannels = 3;

// 8-bit RGB raster, row-major, channel-interleaved.
class Image {
 public:
  Image() = default;

  Image(std::size_t width, std::size_t height)
      : width_(width), height_(height), pixels_(width * height * kChannels, 0) {
    if (width == 0 || height == 0)
      throw ShapeError("Image dimensions must be >= 1, got " +
                       std::to_string(width) + "x" + std::to_string(height));
  }

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) {
    return pixels_[(y * width_ + x) * kChannels + c];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const {
    return pixels_[(y * width_ + x) * kChannels + c];
  }

  std::vector<std::uint8_t>& pixels() { return pixels_; }
  const std::vector<std::uint8_t>& pixels() const { return pixels_; }

  bool operator==(const Image& o) const {
    return width_ == o.width_ && height_ == o.height_ && pixels_ == o.pixels_;
  }

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

// Real-valued raster produced by min-max normalization. Same layout as Image.
class NormalizedImage {
 public:
  NormalizedImage() = default;
  NormalizedImage(std::size_t width, std::size_t height)
      : width_(width), height_(height), samples_(width * height * kChannels, 0.0) {
    if (width == 0 || height == 0)
      throw ShapeError("NormalizedImage dimensions must be >= 1");
  }

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }

  double& at(std::size_t x, std::size_t y, std::size_t c) {
    return samples_[(y * width_ + x) * kChannels + c];
  }
  double at(std::size_t x, std::size_t y, std::size_t c) const {
    return samples_[(y * width_ + x) * kChannels + c];
  }

  std::vector<double>& samples() { return samples_; }
  const std::vector<double>& samples() const { return samples_; }

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<double> samples_;
};

struct ChannelHistogram {
  std::array<std::array<std::uint64_t, 256>, kChannels> bins{};
  std::uint64_t samples_per_channel = 0;
};

// --- PPM (P6, maxval 255) codec ------------------------------------------

namespace detail {

// Skips PPM whitespace and '#' comments; returns offset of the next token.
inline std::size_t ppm_skip_space(const std::vector<std::uint8_t>& bytes,
                                  std::size_t pos) {
  while (pos < bytes.size()) {
    std::uint8_t c = bytes[pos];
    if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      ++pos;
    } else {
      break;
    }
  }
  return pos;
}

inline std::size_t ppm_parse_uint(const std::vector<std::uint8_t>& bytes,
                                  std::size_t& pos, const char* field) {
  pos = ppm_skip_space(bytes, pos);
  if (pos >= bytes.size() || bytes[pos] < '0' || bytes[pos] > '9')
    throw ParseError(std::string("PPM: expected integer for ") + field, pos);
  std::size_t value = 0;
  while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
    value = value * 10 + static_cast<std::size_t>(bytes[pos] - '0');
    if (value > 1u << 24)
      throw ParseError(std::string("PPM: ") + field + " out of range", pos);
    ++pos;
  }
  return value;
}

}  // namespace detail

inline Image decode_ppm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    std::string magic(bytes.begin(),
                      bytes.begin() + static_cast<long>(std::min<std::size_t>(bytes.size(), 2)));
    throw ParseError("PPM: unsupported magic \"" + magic + "\", expected P6", 0);
  }
  std::size_t pos = 2;
  const std::size_t width = detail::ppm_parse_uint(bytes, pos, "width");
  const std::size_t height = detail::ppm_parse_uint(bytes, pos, "height");
  const std::size_t maxval_pos = detail::ppm_skip_space(bytes, pos);
  const std::size_t maxval = detail::ppm_parse_uint(bytes, pos, "maxval");
  if (maxval != 255)
    throw ParseError("PPM: maxval must be 255, got " + std::to_string(maxval),
                     maxval_pos);
  if (pos >= bytes.size())
    throw ParseError("PPM: missing whitespace before payload", pos);
  ++pos;  // exactly one whitespace byte separates header and payload
  if (width == 0 || height == 0)
    throw ParseError("PPM: zero image dimension", pos);

  const std::size_t expected = width * height * kChannels;
  if (bytes.size() - pos < expected)
    throw ParseError("PPM: truncated payload, need " + std::to_string(expected) +
                         " bytes but " + std::to_string(bytes.size() - pos) +
                         " remain",
                     bytes.size());
  Image img(width, height);
  std::copy(bytes.begin() + static_cast<long>(pos),
            bytes.begin() + static_cast<long>(pos + expected),
            img.pixels().begin());
  return img;
}

inline std::vector<std::uint8_t> encode_ppm(const Image& img) {
  std::string header = "P6\n" + std::to_string(img.width()) + " " +
                       std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels().begin(), img.pixels().end());
  return out;
}

// --- Geometry -------------------------------------------------------------

inline double aspect_ratio(const Image& img) {
  return static_cast<double>(img.height()) / static_cast<double>(img.width());
}

// Weighted average of the 2x2 lattice neighborhood around (x, y) for one
// channel; lattice points are clamped to the image bounds.
inline double bilinear_sample(const Image& img, double x, double y,
                              std::size_t channel) {
  const auto w = static_cast<std::ptrdiff_t>(img.width());
  const auto h = static_cast<std::ptrdiff_t>(img.height());
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const double dx = x - fx;
  const double dy = y - fy;
  auto clamp = [](std::ptrdiff_t v, std::ptrdiff_t hi) {
    return std::clamp<std::ptrdiff_t>(v, 0, hi - 1);
  };
  const std::size_t x0 = static_cast<std::size_t>(clamp(static_cast<std::ptrdiff_t>(fx), w));
  const std::size_t x1 = static_cast<std::size_t>(clamp(static_cast<std::ptrdiff_t>(fx) + 1, w));
  const std::size_t y0 = static_cast<std::size_t>(clamp(static_cast<std::ptrdiff_t>(fy), h));
  const std::size_t y1 = static_cast<std::size_t>(clamp(static_cast<std::ptrdiff_t>(fy) + 1, h));
  const double p00 = img.at(x0, y0, channel);
  const double p10 = img.at(x1, y0, channel);
  const double p01 = img.at(x0, y1, channel);
  const double p11 = img.at(x1, y1, channel);
  return (1.0 - dx) * (1.0 - dy) * p00 + dx * (1.0 - dy) * p10 +
         (1.0 - dx) * dy * p01 + dx * dy * p11;
}

namespace detail {
inline std::uint8_t round_to_u8(double v) {
  double r = std::floor(v + 0.5);
  return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}
}  // namespace detail

// Aspect-preserving downscale to target_width. Never upscales: if the image
// is already at most target_width wide it is returned unchanged. Output
// height is round-half-up of target_width * aspect ratio, at least 1.
// Sampling uses the half-pixel-center convention.
inline Image thumbnail_resize(const Image& img, std::size_t target_width) {
  if (target_width == 0) throw ShapeError("thumbnail target width must be >= 1");
  if (target_width >= img.width()) return img;

  const double ar = aspect_ratio(img);
  const std::size_t out_w = target_width;
  std::size_t out_h = static_cast<std::size_t>(
      std::floor(static_cast<double>(target_width) * ar + 0.5));
  out_h = std::max<std::size_t>(out_h, 1);

  const double sx = static_cast<double>(out_w) / static_cast<double>(img.width());
  const double sy = static_cast<double>(out_h) / static_cast<double>(img.height());
  Image out(out_w, out_h);
  for (std::size_t j = 0; j < out_h; ++j) {
    const double src_y = (static_cast<double>(j) + 0.5) / sy - 0.5;
    for (std::size_t i = 0; i < out_w; ++i) {
      const double src_x = (static_cast<double>(i) + 0.5) / sx - 0.5;
      for (std::size_t c = 0; c < kChannels; ++c)
        out.at(i, j, c) = detail::round_to_u8(bilinear_sample(img, src_x, src_y, c));
    }
  }
  return out;
}

// --- Normalization ---------------------------------------------------------

// Min-max normalization into [new_min, new_max]. The extremes pool all
// channels by default; per_channel switches to per-channel extremes.
// A constant image (max == min) maps every sample to new_min.
inline NormalizedImage minmax_normalize(const Image& img, double new_min = 0.0,
                                        double new_max = 1.0,
                                        bool per_channel = false) {
  if (!(new_max > new_min))
    throw ShapeError("minmax_normalize requires new_max > new_min");
  NormalizedImage out(img.width(), img.height());
  const auto& px = img.pixels();
  auto& dst = out.samples();
  const std::size_t n_channels = per_channel ? kChannels : 1;

  for (std::size_t ch = 0; ch < n_channels; ++ch) {
    std::uint8_t lo = 255, hi = 0;
    for (std::size_t i = per_channel ? ch : 0; i < px.size();
         i += per_channel ? kChannels : 1) {
      lo = std::min(lo, px[i]);
      hi = std::max(hi, px[i]);
    }
    const double span = static_cast<double>(hi) - static_cast<double>(lo);
    for (std::size_t i = per_channel ? ch : 0; i < px.size();
         i += per_channel ? kChannels : 1) {
      if (span == 0.0) {
        dst[i] = new_min;
      } else {
        dst[i] = (static_cast<double>(px[i]) - static_cast<double>(lo)) / span *
                     (new_max - new_min) +
                 new_min;
      }
    }
  }
  return out;
}

// --- Histogram --------------------------------------------------------------

inline ChannelHistogram channel_histogram(const Image& img) {
  ChannelHistogram h;
  h.samples_per_channel = img.width() * img.height();
  const auto& px = img.pixels();
  for (std::size_t i = 0; i < px.size(); i += kChannels)
    for (std::size_t c = 0; c < kChannels; ++c) ++h.bins[c][px[i + c]];
  return h;
}

// Samples must lie in [0, 1]; bin = floor(v * 256) clamped to 255.
inline ChannelHistogram channel_histogram(const NormalizedImage& img) {
  ChannelHistogram h;
  h.samples_per_channel = img.width() * img.height();
  const auto& sm = img.samples();
  for (std::size_t i = 0; i < sm.size(); i += kChannels) {
    for (std::size_t c = 0; c < kChannels; ++c) {
      const double v = sm[i + c];
      if (v < 0.0 || v > 1.0)
        throw DataError("channel_histogram: normalized sample " +
                        std::to_string(v) + " outside [0, 1]");
      const auto bin = static_cast<std::size_t>(
          std::min(255.0, std::floor(v * 256.0)));
      ++h.bins[c][bin];
    }
  }
  return h;
}

}  // namespace leafvit
