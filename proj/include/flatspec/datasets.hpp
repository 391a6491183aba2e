#pragma once

// Dataset sources: Gaussian blobs and MNIST-style IDX files.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "flatspec/model.hpp"

namespace flatspec {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct IdxImages {
  std::size_t count = 0, rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;
};

IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);
void write_idx_images(const std::filesystem::path& path, const IdxImages& images);
void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels);

// Pixels scaled to [0, 1] by / 255; d_y = 10.
Dataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

// Per-feature standardization with statistics taken from `reference`
// (constant features are left centred). Returns the transformed copy.
struct Standardizer {
  Vec mean, inv_std;
  static Standardizer fit(const Dataset& reference);
  Dataset apply(const Dataset& d) const;
};

// First k rows of a seeded permutation.
Dataset random_subset(const Dataset& d, std::size_t k, std::uint64_t seed);

struct Split {
  Dataset train, validation;
};
// Seeded shuffle, then the first n_train rows train and the next n_validation rows validate.
Split train_validation_split(const Dataset& d, std::size_t n_train, std::size_t n_validation, std::uint64_t seed);
// 45,000 / 5,000 of a 50,000-sample training set scaled by `fraction`.
Split mnist_style_split(const Dataset& d, double fraction, std::uint64_t seed);

// Class c has mean separation * u_c with u_c a random unit vector and unit covariance.
// Samples are interleaved by class.
Dataset synth_blobs(std::size_t d_x, std::size_t d_y, std::size_t n_per_class, double separation, std::uint64_t seed);

}  // namespace flatspec
