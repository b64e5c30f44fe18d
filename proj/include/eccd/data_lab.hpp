#pragma once

// Synthetic segmentation data, the two label-noise families (morphological;
// omission/commission/boundary), overlap metrics and PGM/dataset-directory
// I/O.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eccd/grid.hpp"
#include "eccd/keyvalue.hpp"
#include "eccd/numerics.hpp"

namespace eccd {

/// What the trainer is allowed to see.
struct TrainingSample {
  std::string sample_id;
  Image image;
  LabelMap noisy_labels;
};

/// Observed samples plus the shared grid shape; the only dataset type the
/// trainers accept.
struct TrainingSet {
  std::vector<TrainingSample> samples;
  std::size_t num_classes = 2;
  std::size_t height = 0;
  std::size_t width = 0;
};

struct NoisySample {
  TrainingSample observed;
  std::optional<LabelMap> clean_labels;  // evaluation only
};

struct NoisyDataset {
  std::vector<NoisySample> samples;
  std::size_t num_classes = 2;
  std::size_t height = 0;
  std::size_t width = 0;
  /// Provenance written to the manifest (generator seed, noise parameters).
  KeyValueFile provenance;

  /// The observed part of every sample, in order.
  TrainingSet training_view() const;
  /// Throws std::invalid_argument unless all samples share H, W and labels < K.
  void validate() const;
};

// ---------------------------------------------------------------- generation

struct SynthOptions {
  double background = 0.35;
  double foreground_offset = 0.25;
  double texture_std = 0.10;
  std::size_t min_shapes = 1;
  std::size_t max_shapes = 4;
  std::size_t min_component_area = 16;
  double min_foreground_fraction = 0.05;
  double max_foreground_fraction = 0.6;
};

/// n clean binary samples of size H x W; images are quantised to k/255 so
/// they survive an 8-bit round trip. Sample i is drawn from stream
/// RandomStream(seed).split(i). Throws std::invalid_argument if H or W < 16.
NoisyDataset synth_shapes(std::size_t n, std::size_t height, std::size_t width,
                          std::uint64_t seed, const SynthOptions& opts = {});

// --------------------------------------------------------------------- noise

struct MorphOptions {
  double radius_per_beta = 5.0;       // radius = round(radius_per_beta * beta)
  double translate_per_beta = 0.1;    // x min(H, W) pixels
  double rotate_deg_per_beta = 15.0;
  double scale_per_beta = 0.2;
};

enum class MorphOp { none, dilate, erode, affine };

struct NoiseReport {
  MorphOp morph_op = MorphOp::none;
  std::size_t components = 0;
  std::size_t omitted = 0;
  std::size_t perturbed = 0;
  std::size_t added = 0;
};

/// With probability alpha applies one of dilation, erosion or a random affine
/// map (uniformly chosen) of strength beta; otherwise returns the mask.
/// Throws std::invalid_argument on a non-binary mask.
LabelMap morph_noise(const LabelMap& mask, double alpha, double beta, RandomStream& rng,
                     const MorphOptions& opts = {}, NoiseReport* report = nullptr);

/// Omission: each 4-connected component is removed with probability phi.
/// Boundary: each survivor is dilated or eroded (radius 1 or 2) with
/// probability lambda. Commission: ceil(zeta * #components) square blobs of
/// the median component area are placed on background, clear of existing
/// foreground. Throws std::invalid_argument on a non-binary mask.
LabelMap whu_noise(const LabelMap& mask, double phi, double zeta, double lambda,
                   RandomStream& rng, NoiseReport* report = nullptr);

// ----------------------------------------------------------- mask utilities

/// Square structuring element of side 2r + 1; pixels outside the grid count
/// as background.
LabelMap dilate(const LabelMap& mask, std::size_t radius);
LabelMap erode(const LabelMap& mask, std::size_t radius);

/// 4-connected component ids (0 = background, 1..count) and the count.
struct Components {
  Grid<std::uint32_t> ids;
  std::size_t count = 0;
  std::vector<std::size_t> areas;  // areas[c - 1] for component c
};
Components label_components(const LabelMap& mask);

bool is_binary(const LabelMap& mask);

// ------------------------------------------------------------------ metrics

/// 2|A n B| / (|A| + |B|); 1 when both are empty. Non-zero = foreground.
double dice(const LabelMap& a, const LabelMap& b);
/// |A n B| / |A u B|; 1 when both are empty.
double iou(const LabelMap& a, const LabelMap& b);
/// Area under the ROC curve of `scores` against binary `positive`, with ties
/// given half credit. NaN if either class is empty.
double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> positive);

// ----------------------------------------------------------------------- I/O

/// Binary (P5) 8-bit graymap. Throws FormatError on a malformed header,
/// maxval other than 255 or a truncated payload.
LabelMap read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const LabelMap& grid);

Grid<std::uint8_t> quantize(const Image& image);
Image dequantize(const Grid<std::uint8_t>& bytes);

/// Layout: images/<id>.pgm, noisy/<id>.pgm, clean/<id>.pgm (if present) and
/// a key=value `manifest`.
void write_dataset(const std::filesystem::path& dir, const NoisyDataset& ds);
NoisyDataset read_dataset(const std::filesystem::path& dir);

}  // namespace eccd
