#include "spsb/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>

#include "spsb/error.hpp"
#include "spsb/rng.hpp"

namespace spsb::tasks {

Dataset gen_random_dataset(std::size_t n_points, std::size_t n_features, std::uint64_t seed) {
  if (n_features < 1) throw ConfigError("random dataset needs at least one feature");
  if (n_points < 1) throw ConfigError("random dataset needs at least one point");
  Rng rng = make_stream(seed, {0xda7a});
  Dataset d;
  d.n_features = n_features;
  d.n_classes = 2;
  d.provenance = Provenance::SyntheticRandom;
  d.features.resize(n_points * n_features);
  d.labels.resize(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    for (std::size_t f = 0; f < n_features; ++f) {
      d.features[i * n_features + f] = uniform(rng, 0.0, std::numbers::pi);
    }
    d.labels[i] = static_cast<int>(rng() >> 63);
  }
  return d;
}

namespace {

std::string where(const std::filesystem::path& path, std::size_t offset) {
  return path.string() + " at byte offset " + std::to_string(offset);
}

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

IdxFile read_idx(const std::filesystem::path& path, std::uint32_t expected_magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open IDX file " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  if (bytes.size() < 4) throw DataError("truncated IDX header in " + where(path, bytes.size()));
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != expected_magic) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "magic 0x%08x, expected 0x%08x", magic, expected_magic);
    throw DataError(std::string("bad IDX ") + buf + " in " + where(path, 0));
  }
  const std::size_t n_dims = magic & 0xffU;
  const std::size_t header = 4 + 4 * n_dims;
  if (bytes.size() < header) {
    throw DataError("truncated IDX dimension list in " + where(path, bytes.size()));
  }
  IdxFile file;
  std::size_t payload = 1;
  for (std::size_t d = 0; d < n_dims; ++d) {
    file.dims.push_back(read_be32(bytes, 4 + 4 * d));
    payload *= file.dims.back();
  }
  if (bytes.size() != header + payload) {
    throw DataError("IDX payload has " + std::to_string(bytes.size() - header) +
                    " bytes, header declares " + std::to_string(payload) + " in " +
                    where(path, header));
  }
  file.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return file;
}

void write_idx(const std::filesystem::path& path, const IdxFile& file) {
  std::vector<std::uint8_t> out;
  put_be32(out, 0x00000800U | static_cast<std::uint32_t>(file.dims.size()));
  for (auto d : file.dims) put_be32(out, d);
  out.insert(out.end(), file.data.begin(), file.data.end());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write IDX file " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

std::vector<double> average_pool(std::span<const double> image, std::size_t rows,
                                 std::size_t cols, std::size_t window) {
  if (window == 0 || rows % window || cols % window || image.size() != rows * cols) {
    throw InvariantError("average_pool: " + std::to_string(rows) + "x" + std::to_string(cols) +
                         " image not divisible into " + std::to_string(window) + "-pixel windows");
  }
  const std::size_t out_rows = rows / window;
  const std::size_t out_cols = cols / window;
  std::vector<double> out(out_rows * out_cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      out[(r / window) * out_cols + c / window] += image[r * cols + c];
    }
  }
  const double area = static_cast<double>(window * window);
  for (double& v : out) v /= area;
  return out;
}

Dataset load_pooled_images(const std::filesystem::path& images,
                           const std::filesystem::path& labels,
                           const PooledImageOptions& options) {
  const IdxFile img = read_idx(images, kIdxImageMagic);
  const IdxFile lab = read_idx(labels, kIdxLabelMagic);
  if (img.dims.size() != 3) throw DataError("image file must be 3-dimensional: " + where(images, 3));
  if (lab.dims.size() != 1) throw DataError("label file must be 1-dimensional: " + where(labels, 3));
  const std::size_t n = img.dims[0];
  const std::size_t rows = img.dims[1];
  const std::size_t cols = img.dims[2];
  if (lab.dims[0] != n) {
    throw DataError("label count " + std::to_string(lab.dims[0]) + " does not match image count " +
                    std::to_string(n) + " in " + where(labels, 4));
  }
  if (rows % options.side || cols % options.side || rows != cols) {
    throw DataError(std::to_string(rows) + "x" + std::to_string(cols) +
                    " images cannot be pooled to " + std::to_string(options.side) + "x" +
                    std::to_string(options.side) + ": " + where(images, 8));
  }
  const std::size_t window = rows / options.side;
  const std::size_t pixels = rows * cols;

  Dataset d;
  d.n_features = options.side * options.side;
  d.n_classes = options.classes.size();
  d.provenance = Provenance::ImagePooled;
  std::vector<double> image(pixels);
  for (std::size_t i = 0; i < n && d.size() < options.count; ++i) {
    const int label = lab.data[i];
    const auto it = std::find(options.classes.begin(), options.classes.end(), label);
    if (it == options.classes.end()) continue;
    for (std::size_t p = 0; p < pixels; ++p) image[p] = img.data[i * pixels + p];
    for (double v : average_pool(image, rows, cols, window)) {
      d.features.push_back(v / 255.0 * std::numbers::pi);
    }
    d.labels.push_back(static_cast<int>(it - options.classes.begin()));
  }
  if (d.size() < options.count) {
    throw DataError("only " + std::to_string(d.size()) + " images with the requested labels, " +
                    std::to_string(options.count) + " needed: " +
                    where(labels, 8 + static_cast<std::size_t>(n)));
  }
  return d;
}

namespace {

struct Canvas {
  static constexpr int kSide = 28;
  std::vector<double> ink = std::vector<double>(kSide * kSide, 0.0);

  // Soft round brush of radius r.
  void dab(double x, double y, double r) {
    for (int py = 0; py < kSide; ++py) {
      for (int px = 0; px < kSide; ++px) {
        const double d = std::hypot(px + 0.5 - x, py + 0.5 - y);
        const double a = std::clamp(r + 0.5 - d, 0.0, 1.0);
        ink[py * kSide + px] = std::max(ink[py * kSide + px], a);
      }
    }
  }
};

struct Pose {
  double dx, dy, scale, radius;
  double x(double u) const { return 14.0 + dx + scale * (u - 14.0); }
  double y(double v) const { return 14.0 + dy + scale * (v - 14.0); }
};

void arc(Canvas& c, const Pose& p, double cx, double cy, double r, double from_deg,
         double to_deg) {
  const int steps = 48;
  for (int s = 0; s <= steps; ++s) {
    const double a = (from_deg + (to_deg - from_deg) * s / steps) * std::numbers::pi / 180.0;
    c.dab(p.x(cx + r * std::cos(a)), p.y(cy + r * std::sin(a)), p.radius);
  }
}

void line(Canvas& c, const Pose& p, double x0, double y0, double x1, double y1) {
  const int steps = 32;
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    c.dab(p.x(x0 + t * (x1 - x0)), p.y(y0 + t * (y1 - y0)), p.radius);
  }
}

// Image y grows downwards, so angles run clockwise on screen.
void draw_three(Canvas& c, const Pose& p) {
  arc(c, p, 14.0, 9.0, 4.5, -160.0, 90.0);
  arc(c, p, 14.0, 18.5, 5.0, -90.0, 160.0);
}

void draw_six(Canvas& c, const Pose& p) {
  arc(c, p, 13.0, 18.5, 4.5, 0.0, 360.0);
  arc(c, p, 19.0, 18.5, 10.5, 180.0, 250.0);
}

void draw_one(Canvas& c, const Pose& p) { line(c, p, 15.0, 5.0, 13.0, 23.0); }

}  // namespace

SyntheticDigits make_synthetic_digits(std::size_t count, std::uint64_t seed) {
  constexpr std::size_t kPixels = Canvas::kSide * Canvas::kSide;
  SyntheticDigits out;
  out.images.dims = {static_cast<std::uint32_t>(count), Canvas::kSide, Canvas::kSide};
  out.labels.dims = {static_cast<std::uint32_t>(count)};
  out.images.data.reserve(count * kPixels);
  Rng rng = make_stream(seed, {0xf1c7});
  for (std::size_t i = 0; i < count; ++i) {
    // Roughly 1 in 12 images is a distractor.
    const std::uint64_t pick = rng() % 12;
    const int label = pick == 0 ? 1 : (pick % 2 ? 3 : 6);
    const Pose pose{uniform(rng, -4.0, 4.0), uniform(rng, -3.5, 3.5), uniform(rng, 0.7, 1.15),
                    uniform(rng, 0.8, 2.2)};
    Canvas canvas;
    if (label == 3) draw_three(canvas, pose);
    else if (label == 6) draw_six(canvas, pose);
    else draw_one(canvas, pose);
    // A stray stroke anywhere on the canvas.
    const Pose clutter{0.0, 0.0, 1.0, uniform(rng, 0.6, 1.6)};
    const double cx = uniform(rng, 3.0, 25.0);
    const double cy = uniform(rng, 3.0, 25.0);
    line(canvas, clutter, cx, cy, cx + uniform(rng, -8.0, 8.0), cy + uniform(rng, -8.0, 8.0));
    const double peak = uniform(rng, 190.0, 255.0);
    for (double v : canvas.ink) {
      const double noisy = v * peak + uniform(rng, 0.0, 12.0);
      out.images.data.push_back(static_cast<std::uint8_t>(std::clamp(std::lround(noisy), 0L, 255L)));
    }
    out.labels.data.push_back(static_cast<std::uint8_t>(label));
  }
  return out;
}

}  // namespace spsb::tasks
