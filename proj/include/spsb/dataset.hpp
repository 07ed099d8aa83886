// Datasets for the two classification tasks: random memorisation data and
// pooled IDX images.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace spsb::tasks {

enum class Provenance { SyntheticRandom, ImagePooled };

struct Dataset {
  std::size_t n_features = 0;
  std::size_t n_classes = 2;
  std::vector<double> features;  // row-major, size() * n_features, each in [0, pi]
  std::vector<int> labels;
  Provenance provenance = Provenance::SyntheticRandom;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * n_features, n_features);
  }
};

// Features i.i.d. uniform on [0, pi], labels i.i.d. fair coin flips.
Dataset gen_random_dataset(std::size_t n_points, std::size_t n_features, std::uint64_t seed);

// Raw IDX content. Only unsigned-byte payloads (type code 0x08) are supported.
struct IdxFile {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// Throws DataError naming the file and byte offset on malformed input.
IdxFile read_idx(const std::filesystem::path& path, std::uint32_t expected_magic);
void write_idx(const std::filesystem::path& path, const IdxFile& file);

// Mean over non-overlapping window x window blocks of a row-major image.
std::vector<double> average_pool(std::span<const double> image, std::size_t rows,
                                 std::size_t cols, std::size_t window);

struct PooledImageOptions {
  std::vector<int> classes{3, 6};  // class k of the result is classes[k]
  std::size_t count = 1000;
  std::size_t side = 4;            // pooled image is side x side
};

// Keeps the first `count` images whose label is in `classes`, pools them to
// side x side, maps pixels to [0, pi] and relabels to class indices.
Dataset load_pooled_images(const std::filesystem::path& images,
                           const std::filesystem::path& labels,
                           const PooledImageOptions& options = {});

// Stroke-drawn 28x28 surrogates for the digits 3 and 6, plus a few "1"s
// that loaders must filter out.
struct SyntheticDigits {
  IdxFile images;
  IdxFile labels;
};

SyntheticDigits make_synthetic_digits(std::size_t count, std::uint64_t seed);

}  // namespace spsb::tasks
