#pragma once

// Per-pixel class-probability models p_theta(y* | x).

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "eccd/grid.hpp"
#include "eccd/simd/kernels.hpp"

namespace eccd {

/// Anything the trainer can fit: an image in, HW x K normalised
/// log-probabilities out, with a flat parameter vector.
class PixelClassifier {
 public:
  virtual ~PixelClassifier() = default;

  virtual std::size_t num_classes() const = 0;
  virtual std::span<const double> parameters() const = 0;
  virtual std::span<double> parameters() = 0;

  /// HW x K row-major log-probabilities.
  virtual std::vector<double> predict_logprobs(const Image& image) const = 0;
  /// Gradient of sum_ik d_logits[i][k] * score[i][k] w.r.t. parameters(),
  /// where score is the unnormalised output before log-softmax.
  virtual std::vector<double> accumulate_grad(const Image& image,
                                              std::span<const double> d_logits) const = 0;
};

/// Multinomial logistic regression on the (2r+1)^2 zero-padded intensity
/// window around each pixel plus a bias. Weights are K rows of
/// (2r+1)^2 + 1 entries; within a row the window is row-major (offset
/// (-r, -r) first) and the bias is last.
class PatchLogisticModel final : public PixelClassifier {
 public:
  PatchLogisticModel(std::size_t num_classes, std::size_t patch_radius = 2);
  PatchLogisticModel(std::size_t num_classes, std::size_t patch_radius,
                     std::vector<double> weights);

  std::size_t num_classes() const override { return k_; }
  std::size_t patch_radius() const { return radius_; }
  std::size_t feature_count() const { return (2 * radius_ + 1) * (2 * radius_ + 1) + 1; }
  std::span<const double> parameters() const override { return weights_; }
  std::span<double> parameters() override { return weights_; }

  /// Unnormalised scores, HW x K.
  std::vector<double> scores(const Image& image,
                             const simd::KernelTable& kt = simd::kernels()) const;
  std::vector<double> predict_logprobs(const Image& image) const override;
  std::vector<double> accumulate_grad(const Image& image,
                                      std::span<const double> d_logits) const override;
  std::vector<double> accumulate_grad(const Image& image, std::span<const double> d_logits,
                                      const simd::KernelTable& kt) const;

  bool operator==(const PatchLogisticModel& o) const {
    return k_ == o.k_ && radius_ == o.radius_ && weights_ == o.weights_;
  }

 private:
  std::size_t k_;
  std::size_t radius_;
  std::vector<double> weights_;
};

/// Row-wise log-softmax of HW x K scores.
std::vector<double> log_softmax_rows(std::span<const double> scores, std::size_t k);

/// Per-pixel argmax of HW x K log-probabilities.
LabelMap argmax_labels(std::span<const double> logprobs, std::size_t height,
                       std::size_t width, std::size_t k);

// Checkpoint format: "ECCDCLS1", K and patch_radius as u32 LE, then the
// weights as f64 LE.
void save_model(const PatchLogisticModel& model, const std::filesystem::path& path);
PatchLogisticModel load_model(const std::filesystem::path& path);

}  // namespace eccd
