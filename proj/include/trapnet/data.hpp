#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "trapnet/tensor.hpp"

namespace trapnet {

/// Labelled grayscale images flattened to 1 x (side*side) rows, pixels in [0,1].
struct Dataset {
  std::vector<Tensor2D> images;
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return images.size(); }
  bool empty() const noexcept { return images.empty(); }
  std::size_t input_dim() const { return images.empty() ? 0 : images.front().size(); }

  /// Throws ConfigError on length mismatch, out-of-range pixels or labels.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct GenConfig {
  std::size_t num_classes = 4;
  std::size_t image_side = 12;
  std::size_t samples_per_class = 400;
  double noise_sigma = 0.1;
  /// Templates span roughly [background, background + 2 * contrast]; low
  /// contrast keeps classes within reach of small l-infinity perturbations.
  double background = 0.0;
  double contrast = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Class templates drawn from `config.seed`, one geometric family per class
/// (stripes, rings, blobs, ramps) with seeded frequency, phase and contrast.
std::vector<Tensor2D> synthetic_templates(const GenConfig& config);

/// clamp(template_k + N(0, noise_sigma), 0, 1) for every sample; samples are
/// ordered class by class.
Dataset gen_synthetic(const GenConfig& config);

/// Seeded shuffle then split; the first part holds round(train_frac * n) samples.
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_frac, std::uint64_t seed);

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices);

// IDX (big-endian) ingestion, as used by MNIST-style files.

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);

/// Parses in-memory IDX payloads; FormatError offsets refer to these buffers.
Dataset parse_idx(std::span<const unsigned char> images, std::span<const unsigned char> labels);

/// Writes ds back as IDX; pixels are rounded to the nearest byte.
void write_idx(const Dataset& ds, std::size_t rows, std::size_t cols,
               const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

// Dataset cache: `<stem>.json` manifest plus `<stem>.bin` holding every pixel
// as a little-endian IEEE-754 double, images in order, row-major.

void write_dataset_cache(const Dataset& ds, const std::filesystem::path& stem);
Dataset read_dataset_cache(const std::filesystem::path& stem);

struct Trapdoor {
  Tensor2D mask;     // 1 inside the patch, 0 elsewhere
  Tensor2D pattern;  // in [0,1], zero outside the mask
  std::size_t target_class = 0;
  double amplitude = 1.0;

  friend bool operator==(const Trapdoor&, const Trapdoor&) = default;
};

/// A patch_side x patch_side patch in the bottom-right corner carrying a
/// seeded checkerboard-plus-noise pattern.
Trapdoor make_trapdoor(std::size_t image_side, std::size_t target_class, std::uint64_t seed,
                       std::size_t patch_side, double amplitude);

/// clamp((1-m) x + m ((1-a) x + a p), 0, 1).
Tensor2D apply_trapdoor(const Tensor2D& x, const Trapdoor& t);

}  // namespace trapnet
