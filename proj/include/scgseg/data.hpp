// Dataset handling: loading slice/mask pairs, deterministic splits, synthetic
// blob data for the verification suite, and batching into rank-4 tensors.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "scgseg/errors.hpp"
#include "scgseg/image_io.hpp"
#include "scgseg/rng.hpp"
#include "scgseg/tensor.hpp"

namespace scgseg {

struct ImageSample {
  Tensor<double> image;  // {S,S} in [0,1]
  Tensor<double> mask;   // {S,S} in {0,1}
  std::string id;
};

struct DatasetSplit {
  std::vector<ImageSample> train, test;
  std::uint64_t seed = 0;
};

inline ImageSample load_sample(const std::string& image_path,
                               const std::string& mask_path, int target_size,
                               const std::string& id = "") {
  ImageSample s;
  s.image = load_image_normalized(image_path, target_size);
  s.mask = load_mask_binary(mask_path, target_size);
  if (!s.image.same_shape(s.mask))
    throw ValidationError("image/mask size mismatch after resize for " +
                          image_path);
  s.id = id.empty() ? std::filesystem::path(image_path).stem().string() : id;
  return s;
}

struct ManifestEntry {
  std::string image_path, mask_path, id;
};

// Tab-separated, one "image<TAB>mask<TAB>id" line per sample; relative paths
// resolve against the manifest's directory.
inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest: " + path);
  const auto base = std::filesystem::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    if (!std::getline(ls, e.image_path, '\t') ||
        !std::getline(ls, e.mask_path, '\t') || !std::getline(ls, e.id))
      throw ValidationError("manifest line " + std::to_string(lineno) +
                            " is not image<TAB>mask<TAB>id: " + path);
    e.image_path = resolve(e.image_path);
    e.mask_path = resolve(e.mask_path);
    out.push_back(std::move(e));
  }
  return out;
}

// Pair image and mask directories by filename stem, sorted for determinism.
inline std::vector<ManifestEntry> pair_directories(
    const std::string& image_dir, const std::string& mask_dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(image_dir))
    throw IoError("not a directory: " + image_dir);
  if (!fs::is_directory(mask_dir))
    throw IoError("not a directory: " + mask_dir);
  auto is_image = [](const fs::path& p) {
    auto e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), ::tolower);
    return e == ".png" || e == ".jpg" || e == ".jpeg";
  };
  std::vector<fs::path> images;
  for (const auto& entry : fs::directory_iterator(image_dir))
    if (entry.is_regular_file() && is_image(entry.path()))
      images.push_back(entry.path());
  std::sort(images.begin(), images.end());
  std::vector<ManifestEntry> out;
  for (const auto& img : images) {
    const std::string stem = img.stem().string();
    std::optional<fs::path> mask;
    for (const char* ext : {".png", ".jpg", ".jpeg"}) {
      fs::path cand = fs::path(mask_dir) / (stem + ext);
      if (fs::exists(cand)) {
        mask = cand;
        break;
      }
    }
    if (!mask)
      throw ValidationError("no mask found for image stem '" + stem + "' in " +
                            mask_dir);
    out.push_back({img.string(), mask->string(), stem});
  }
  return out;
}

// Deterministic function of (ids, seed, fraction): samples are ordered by id,
// permuted by a seeded shuffle, and cut at round(fraction * N).
inline DatasetSplit split_dataset(std::vector<ImageSample> samples,
                                  double train_fraction, std::uint64_t seed) {
  if (samples.size() < 2)
    throw ValidationError("split needs at least 2 samples, got " +
                          std::to_string(samples.size()));
  if (train_fraction <= 0.0 || train_fraction >= 1.0)
    throw ValidationError("train_fraction must lie in (0,1)");
  std::sort(samples.begin(), samples.end(),
            [](const ImageSample& a, const ImageSample& b) {
              return a.id < b.id;
            });
  for (std::size_t i = 1; i < samples.size(); ++i)
    if (samples[i].id == samples[i - 1].id)
      throw ValidationError("duplicate sample id: " + samples[i].id);
  Rng rng(seed);
  for (std::size_t i = samples.size() - 1; i > 0; --i)
    std::swap(samples[i], samples[rng.uniform_int(
                              static_cast<std::int64_t>(i) + 1)]);
  const auto n_train = static_cast<std::size_t>(
      std::llround(train_fraction * double(samples.size())));
  DatasetSplit split;
  split.seed = seed;
  split.train.assign(samples.begin(), samples.begin() + n_train);
  split.test.assign(samples.begin() + n_train, samples.end());
  return split;
}

namespace detail {
struct Blob {
  double cx, cy, rx, ry, cos_a, sin_a, amp;
  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double u = (dx * cos_a + dy * sin_a) / rx;
    const double v = (-dx * sin_a + dy * cos_a) / ry;
    return u * u + v * v <= 1.0;
  }
};

/// Draw order is a contract: blob count, then per-blob parameters, then pixel
// noise, so tests can re-derive the supports from the seed alone.
inline std::vector<Blob> draw_blobs(Rng& rng, int size) {
  const int k = 1 + static_cast<int>(rng.uniform_int(3));
  std::vector<Blob> blobs(k);
  for (auto& b : blobs) {
    b.cx = rng.uniform(0.2, 0.8) * size;
    b.cy = rng.uniform(0.2, 0.8) * size;
    b.rx = rng.uniform(0.06, 0.18) * size;
    b.ry = rng.uniform(0.06, 0.18) * size;
    const double angle = rng.uniform(0.0, 3.141592653589793);
    b.cos_a = std::cos(angle);
    b.sin_a = std::sin(angle);
    b.amp = rng.uniform(0.6, 0.95);
  }
  return blobs;
}
}  // namespace detail

// Noisy background plus 1-3 bright elliptical blobs; the mask is the exact
// union of the blob supports. Sample i depends only on (seed, i).
inline std::vector<ImageSample> make_synthetic_dataset(int count, int size,
                                                       std::uint64_t seed) {
  if (count < 1) throw ValidationError("synthetic count must be >= 1");
  if (size < 32)
    throw ValidationError("synthetic size must be >= 32, got " +
                          std::to_string(size));
  std::vector<ImageSample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    const auto blobs = detail::draw_blobs(rng, size);
    ImageSample s;
    s.image = Tensor<double>({size, size});
    s.mask = Tensor<double>({size, size});
    s.id = "synthetic-" + std::to_string(i);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double noise = rng.uniform(0.02, 0.30);
        double v = noise;
        bool inside = false;
        for (const auto& b : blobs)
          if (b.contains(x + 0.5, y + 0.5)) {
            inside = true;
            v = std::max(v, b.amp);
          }
        s.image.at(y, x) = v;
        s.mask.at(y, x) = inside ? 1.0 : 0.0;
      }
    out.push_back(std::move(s));
  }
  return out;
}

struct Batch {
  Tensor<double> images;  // {B,1,S,S}
  Tensor<double> masks;   // {B,1,S,S}
  std::vector<std::string> ids;
};

// ceil(N/batch_size) batches; a shuffle seed permutes sample order
// deterministically, absence preserves source order.
inline std::vector<Batch> make_batches(
    const std::vector<ImageSample>& samples, int batch_size,
    std::optional<std::uint64_t> shuffle_seed = std::nullopt) {
  if (samples.empty())
    throw ValidationError("cannot batch an empty sample list");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (shuffle_seed) {
    Rng rng(*shuffle_seed);
    for (std::size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_int(
                              static_cast<std::int64_t>(i) + 1)]);
  }
  const int S_ = samples[0].image.dim(0);
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const int b = static_cast<int>(
        std::min<std::size_t>(batch_size, order.size() - start));
    Batch batch;
    batch.images = Tensor<double>({b, 1, S_, S_});
    batch.masks = Tensor<double>({b, 1, S_, S_});
    for (int j = 0; j < b; ++j) {
      const auto& s = samples[order[start + j]];
      if (s.image.dim(0) != S_ || s.image.dim(1) != S_)
        throw ValidationError("inconsistent sample sizes in batch: " + s.id);
      const std::int64_t n = static_cast<std::int64_t>(S_) * S_;
      batch.images.data.segment(j * n, n) = s.image.data;
      batch.masks.data.segment(j * n, n) = s.mask.data;
      batch.ids.push_back(s.id);
    }
    out.push_back(std::move(batch));
  }
  return out;
}

}  // namespace scgseg
