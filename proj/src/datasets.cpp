#include "flatspec/datasets.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "flatspec/rng.hpp"

namespace flatspec {

namespace {

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

std::string hex(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

void check_magic(const std::vector<std::uint8_t>& b, std::uint32_t want, const std::filesystem::path& path,
                 std::size_t header) {
  if (b.size() < header) throw DataError("truncated IDX header in '" + path.string() + "'");
  const std::uint32_t magic = be32(b, 0);
  if (magic != want)
    throw DataError("bad IDX magic " + hex(magic) + " in '" + path.string() + "' (expected " + hex(want) + ")");
}

void write_all(const std::filesystem::path& path, const std::vector<std::uint8_t>& b) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

}  // namespace

IdxImages read_idx_images(const std::filesystem::path& path) {
  const auto b = read_all(path);
  check_magic(b, kIdxImagesMagic, path, 16);
  IdxImages img;
  img.count = be32(b, 4);
  img.rows = be32(b, 8);
  img.cols = be32(b, 12);
  const std::size_t need = img.count * img.rows * img.cols;
  if (b.size() - 16 < need)
    throw DataError("truncated IDX image data in '" + path.string() + "': header declares " +
                    std::to_string(img.count) + " images but only " + std::to_string(b.size() - 16) +
                    " pixel bytes follow");
  img.pixels.assign(b.begin() + 16, b.begin() + 16 + static_cast<std::ptrdiff_t>(need));
  return img;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  const auto b = read_all(path);
  check_magic(b, kIdxLabelsMagic, path, 8);
  const std::size_t count = be32(b, 4);
  if (b.size() - 8 < count)
    throw DataError("truncated IDX label data in '" + path.string() + "': header declares " + std::to_string(count) +
                    " labels");
  return {b.begin() + 8, b.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

void write_idx_images(const std::filesystem::path& path, const IdxImages& images) {
  std::vector<std::uint8_t> b;
  put_be32(b, kIdxImagesMagic);
  put_be32(b, static_cast<std::uint32_t>(images.count));
  put_be32(b, static_cast<std::uint32_t>(images.rows));
  put_be32(b, static_cast<std::uint32_t>(images.cols));
  b.insert(b.end(), images.pixels.begin(), images.pixels.end());
  write_all(path, b);
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> b;
  put_be32(b, kIdxLabelsMagic);
  put_be32(b, static_cast<std::uint32_t>(labels.size()));
  b.insert(b.end(), labels.begin(), labels.end());
  write_all(path, b);
}

Dataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const IdxImages img = read_idx_images(images);
  const auto lab = read_idx_labels(labels);
  if (lab.size() != img.count)
    throw DataError("IDX count mismatch: " + std::to_string(img.count) + " images but " + std::to_string(lab.size()) +
                    " labels");
  if (img.count == 0) throw DataError("IDX file '" + images.string() + "' holds no images");
  const std::size_t d = img.rows * img.cols;
  Dataset out;
  out.inputs = Mat(img.count, d);
  auto& x = out.inputs.data();
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(img.pixels[i]) / 255.0;
  out.labels.resize(img.count);
  for (std::size_t i = 0; i < img.count; ++i) {
    if (lab[i] > 9) throw DataError("IDX label " + std::to_string(lab[i]) + " at index " + std::to_string(i) + " out of range");
    out.labels[i] = lab[i];
  }
  out.num_classes = 10;
  out.id = "mnist:" + images.filename().string();
  return out;
}

Standardizer Standardizer::fit(const Dataset& reference) {
  const std::size_t n = reference.size(), d = reference.dim();
  Standardizer s;
  s.mean.assign(d, 0.0);
  s.inv_std.assign(d, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += reference.inputs(i, j);
  for (auto& m : s.mean) m /= static_cast<double>(n);
  Vec var(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = reference.inputs(i, j) - s.mean[j];
      var[j] += c * c;
    }
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(var[j] / static_cast<double>(n));
    s.inv_std[j] = sd > 1e-12 ? 1.0 / sd : 1.0;
  }
  return s;
}

Dataset Standardizer::apply(const Dataset& d) const {
  if (d.dim() != mean.size()) throw DataError("Standardizer: feature count mismatch");
  Dataset out = d;
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < d.dim(); ++j) out.inputs(i, j) = (d.inputs(i, j) - mean[j]) * inv_std[j];
  out.id = d.id + "+std";
  return out;
}

Dataset random_subset(const Dataset& d, std::size_t k, std::uint64_t seed) {
  if (k == 0 || k > d.size())
    throw DataError("random_subset: k = " + std::to_string(k) + " with " + std::to_string(d.size()) + " samples");
  Rng rng(seed);
  auto perm = permutation(rng, d.size());
  perm.resize(k);
  Dataset out = d.subset(perm);
  out.id = d.id + ":subset" + std::to_string(k) + "@" + std::to_string(seed);
  return out;
}

Split train_validation_split(const Dataset& d, std::size_t n_train, std::size_t n_validation, std::uint64_t seed) {
  if (n_train == 0 || n_validation == 0 || n_train + n_validation > d.size())
    throw DataError("train_validation_split: " + std::to_string(n_train) + " + " + std::to_string(n_validation) +
                    " exceeds " + std::to_string(d.size()) + " samples");
  Rng rng(seed);
  const auto perm = permutation(rng, d.size());
  const std::vector<std::size_t> tr(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  const std::vector<std::size_t> va(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                                    perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_validation));
  Split s{d.subset(tr), d.subset(va)};
  s.train.id = d.id + ":train";
  s.validation.id = d.id + ":val";
  return s;
}

Split mnist_style_split(const Dataset& d, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw DataError("mnist_style_split: fraction must be in (0, 1]");
  const auto n_train = static_cast<std::size_t>(std::llround(45000.0 * fraction));
  const auto n_val = static_cast<std::size_t>(std::llround(5000.0 * fraction));
  return train_validation_split(d, n_train, n_val, seed);
}

Dataset synth_blobs(std::size_t d_x, std::size_t d_y, std::size_t n_per_class, double separation, std::uint64_t seed) {
  if (d_x == 0 || d_y == 0 || n_per_class == 0) throw DataError("synth_blobs: dimensions must be positive");
  if (!(separation >= 0.0)) throw DataError("synth_blobs: separation must be >= 0");
  Rng rng(seed);
  std::vector<Vec> means(d_y);
  for (auto& m : means) {
    m = gaussian(rng, d_x);
    const double nrm = norm2(m);
    for (auto& x : m) x *= separation / nrm;
  }
  Dataset out;
  out.num_classes = d_y;
  out.inputs = Mat(d_y * n_per_class, d_x);
  out.labels.resize(d_y * n_per_class);
  for (std::size_t i = 0; i < n_per_class; ++i)
    for (std::size_t c = 0; c < d_y; ++c) {
      const std::size_t row = i * d_y + c;
      out.labels[row] = static_cast<int>(c);
      for (std::size_t j = 0; j < d_x; ++j) out.inputs(row, j) = means[c][j] + rng.normal();
    }
  out.id = "blobs:" + std::to_string(d_x) + "x" + std::to_string(d_y) + "x" + std::to_string(n_per_class) + "@" +
           std::to_string(seed);
  return out;
}

}  // namespace flatspec
