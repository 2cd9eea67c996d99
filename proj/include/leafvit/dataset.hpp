#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "leafvit/errors.hpp"
#include "leafvit/image.hpp"
#include "leafvit/rng.hpp"
#include "leafvit/serial.hpp"

namespace leafvit {

// Dataset layout on disk: <root>/<class_name>/*.ppm. Class labels are the
// lexicographically sorted directory names, indexed from 0; files within a
// class are sorted as well so nothing depends on enumeration order.
struct DatasetLayout {
  std::vector<std::string> class_names;
  std::vector<std::vector<std::filesystem::path>> files;  // per class

  std::size_t total_images() const {
    std::size_t n = 0;
    for (const auto& f : files) n += f.size();
    return n;
  }
};

inline DatasetLayout scan_dataset(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root))
    throw DataError("dataset root " + root.string() + " is not a directory");
  DatasetLayout layout;
  for (const auto& entry : std::filesystem::directory_iterator(root))
    if (entry.is_directory())
      layout.class_names.push_back(entry.path().filename().string());
  if (layout.class_names.empty())
    throw DataError("dataset root " + root.string() + " has no class directories");
  std::sort(layout.class_names.begin(), layout.class_names.end());

  layout.files.resize(layout.class_names.size());
  for (std::size_t c = 0; c < layout.class_names.size(); ++c) {
    const std::filesystem::path dir = root / layout.class_names[c];
    for (const auto& entry : std::filesystem::directory_iterator(dir))
      if (entry.is_regular_file() && entry.path().extension() == ".ppm")
        layout.files[c].push_back(entry.path());
    if (layout.files[c].empty())
      throw DataError("class directory " + dir.string() + " has no .ppm files");
    std::sort(layout.files[c].begin(), layout.files[c].end());
  }
  return layout;
}

inline Image load_ppm(const std::filesystem::path& path) {
  try {
    return decode_ppm(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

// --- synthetic dataset -------------------------------------------------------

namespace detail {

struct Rgb {
  double r, g, b;
};

// Hue in degrees to RGB at the given saturation/value, all in [0, 255].
inline Rgb hsv_to_rgb(double hue, double sat, double val) {
  const double c = val * sat;
  const double hp = std::fmod(hue, 360.0) / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  const double m = val - c;
  return {(r + m) * 255.0, (g + m) * 255.0, (b + m) * 255.0};
}

struct Lesion {
  double u, v, radius;  // normalized center and radius
};

}  // namespace detail

// One procedural leaf-like texture. Each class has its own stripe
// orientation, stripe frequency and hue; every image adds seeded phase
// jitter, lesion blobs and per-pixel noise, so classes are learnable but
// images within a class are far from constant.
inline Image make_synth_image(std::size_t class_id, std::size_t num_classes,
                              std::size_t image_index, std::size_t size,
                              std::uint64_t seed) {
  Prng rng = derive_stream(seed, "synth",
                           (static_cast<std::uint64_t>(class_id) << 32) |
                               static_cast<std::uint64_t>(image_index));
  const double k = static_cast<double>(class_id);
  const double n_cls = static_cast<double>(num_classes);

  const double theta = 3.14159265358979323846 * k / n_cls + rng.uniform(-0.06, 0.06);
  const double freq = 4.0 + 2.0 * k + rng.uniform(-0.3, 0.3);
  const double phase = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  const detail::Rgb base = detail::hsv_to_rgb(80.0 + 240.0 * k / n_cls, 0.55, 0.62);
  const detail::Rgb lesion_color =
      detail::hsv_to_rgb(80.0 + 240.0 * k / n_cls + 45.0, 0.75, 0.35);

  std::vector<detail::Lesion> lesions(2 + rng.next_below(4));
  for (auto& l : lesions) {
    l.u = rng.uniform(0.15, 0.85);
    l.v = rng.uniform(0.15, 0.85);
    l.radius = rng.uniform(0.05, 0.13);
  }

  const double ct = std::cos(theta), st = std::sin(theta);
  Image img(size, size);
  for (std::size_t y = 0; y < size; ++y) {
    const double v = static_cast<double>(y) / static_cast<double>(size);
    for (std::size_t x = 0; x < size; ++x) {
      const double u = static_cast<double>(x) / static_cast<double>(size);
      const double stripe =
          0.5 + 0.5 * std::sin(2.0 * 3.14159265358979323846 * freq *
                                   (u * ct + v * st) +
                               phase);
      double rgb[3] = {base.r, base.g, base.b};
      for (double& ch : rgb) ch *= 0.55 + 0.45 * stripe;

      for (const auto& l : lesions) {
        const double du = u - l.u, dv = v - l.v;
        const double d = std::sqrt(du * du + dv * dv);
        if (d < l.radius) {
          const double t = 0.8 * (1.0 - d / l.radius);
          rgb[0] = rgb[0] * (1.0 - t) + lesion_color.r * t;
          rgb[1] = rgb[1] * (1.0 - t) + lesion_color.g * t;
          rgb[2] = rgb[2] * (1.0 - t) + lesion_color.b * t;
        }
      }
      for (std::size_t c = 0; c < kChannels; ++c) {
        const double noisy = rgb[c] + rng.uniform(-8.0, 8.0);
        img.at(x, y, c) = detail::round_to_u8(noisy);
      }
    }
  }
  return img;
}

// Writes <out>/class_<k>/img_<i>.ppm for every class and index. Bit-identical
// for identical arguments.
inline void synth_dataset(const std::filesystem::path& out_dir,
                          std::size_t num_classes, std::size_t per_class,
                          std::size_t size, std::uint64_t seed) {
  if (num_classes == 0 || per_class == 0 || size == 0)
    throw UsageError("synth: classes, per_class and size must all be >= 1");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());

  for (std::size_t c = 0; c < num_classes; ++c) {
    const std::filesystem::path class_dir =
        out_dir / ("class_" + std::to_string(c));
    std::filesystem::create_directories(class_dir, ec);
    if (ec)
      throw DataError("cannot create " + class_dir.string() + ": " + ec.message());
    for (std::size_t i = 0; i < per_class; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "img_%04zu.ppm", i);
      const Image img = make_synth_image(c, num_classes, i, size, seed);
      write_file_atomic(class_dir / name, encode_ppm(img));
    }
  }
}

}  // namespace leafvit
