#include "eccd/classifier.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "eccd/binary_io.hpp"
#include "eccd/numerics.hpp"

namespace eccd {

namespace {

constexpr std::string_view kModelMagic = "ECCDCLS1";

// Zero-padded copy so every window read is in bounds.
Image pad(const Image& img, std::size_t r) {
  Image out(img.height + 2 * r, img.width + 2 * r, 0.0);
  for (std::size_t i = 0; i < img.height; ++i)
    std::copy_n(img.data.begin() + static_cast<std::ptrdiff_t>(i * img.width), img.width,
                out.data.begin() + static_cast<std::ptrdiff_t>((i + r) * out.width + r));
  return out;
}

}  // namespace

PatchLogisticModel::PatchLogisticModel(std::size_t num_classes,
                                       std::size_t patch_radius)
    : k_(num_classes), radius_(patch_radius) {
  if (num_classes < 2) throw std::invalid_argument("classifier needs at least 2 classes");
  weights_.assign(k_ * feature_count(), 0.0);
}

PatchLogisticModel::PatchLogisticModel(std::size_t num_classes,
                                       std::size_t patch_radius,
                                       std::vector<double> weights)
    : PatchLogisticModel(num_classes, patch_radius) {
  if (weights.size() != weights_.size())
    throw std::invalid_argument("PatchLogisticModel: expected " +
                                std::to_string(weights_.size()) + " weights, got " +
                                std::to_string(weights.size()));
  weights_ = std::move(weights);
}

// Scores are accumulated plane by plane: for each class and window offset,
// one axpy per image row against the shifted padded row.
std::vector<double> PatchLogisticModel::scores(const Image& image,
                                               const simd::KernelTable& kt) const {
  const std::size_t h = image.height, w = image.width, n = h * w;
  const std::size_t side = 2 * radius_ + 1;
  const std::size_t f = feature_count();
  const Image padded = pad(image, radius_);

  std::vector<double> plane(n);
  std::vector<double> out(n * k_);
  for (std::size_t c = 0; c < k_; ++c) {
    const double* wc = weights_.data() + c * f;
    std::fill(plane.begin(), plane.end(), wc[f - 1]);
    for (std::size_t du = 0; du < side; ++du)
      for (std::size_t dv = 0; dv < side; ++dv) {
        const double wt = wc[du * side + dv];
        if (wt == 0.0) continue;
        for (std::size_t i = 0; i < h; ++i)
          kt.axpy(wt, padded.data.data() + (i + du) * padded.width + dv,
                  plane.data() + i * w, w);
      }
    for (std::size_t a = 0; a < n; ++a) out[a * k_ + c] = plane[a];
  }
  return out;
}

std::vector<double> PatchLogisticModel::predict_logprobs(const Image& image) const {
  return log_softmax_rows(scores(image), k_);
}

std::vector<double> PatchLogisticModel::accumulate_grad(
    const Image& image, std::span<const double> d_logits) const {
  return accumulate_grad(image, d_logits, simd::kernels());
}

std::vector<double> PatchLogisticModel::accumulate_grad(
    const Image& image, std::span<const double> d_logits,
    const simd::KernelTable& kt) const {
  const std::size_t h = image.height, w = image.width, n = h * w;
  if (d_logits.size() != n * k_)
    throw std::invalid_argument("accumulate_grad: expected " + std::to_string(n * k_) +
                                " output gradients, got " +
                                std::to_string(d_logits.size()));
  const std::size_t side = 2 * radius_ + 1;
  const std::size_t f = feature_count();
  const Image padded = pad(image, radius_);

  std::vector<double> grad(weights_.size(), 0.0);
  std::vector<double> plane(n);
  std::vector<double> rows(h);
  for (std::size_t c = 0; c < k_; ++c) {
    for (std::size_t a = 0; a < n; ++a) plane[a] = d_logits[a * k_ + c];
    double* gc = grad.data() + c * f;
    for (std::size_t du = 0; du < side; ++du)
      for (std::size_t dv = 0; dv < side; ++dv) {
        for (std::size_t i = 0; i < h; ++i)
          rows[i] = kt.dot(plane.data() + i * w,
                           padded.data.data() + (i + du) * padded.width + dv, w);
        gc[du * side + dv] = pairwise_sum(rows);
      }
    gc[f - 1] = pairwise_sum(plane);
  }
  return grad;
}

std::vector<double> log_softmax_rows(std::span<const double> scores, std::size_t k) {
  std::vector<double> out(scores.size());
  for (std::size_t a = 0; a + k <= scores.size(); a += k) {
    const double lse = logsumexp(scores.subspan(a, k));
    for (std::size_t c = 0; c < k; ++c) out[a + c] = scores[a + c] - lse;
  }
  return out;
}

LabelMap argmax_labels(std::span<const double> logprobs, std::size_t height,
                       std::size_t width, std::size_t k) {
  if (logprobs.size() != height * width * k)
    throw std::invalid_argument("argmax_labels: shape mismatch");
  LabelMap out(height, width, 0);
  for (std::size_t a = 0; a < height * width; ++a) {
    const auto row = logprobs.subspan(a * k, k);
    out[a] = static_cast<std::uint8_t>(std::max_element(row.begin(), row.end()) -
                                       row.begin());
  }
  return out;
}

void save_model(const PatchLogisticModel& model, const std::filesystem::path& path) {
  ByteWriter w;
  w.magic(kModelMagic);
  w.u32(static_cast<std::uint32_t>(model.num_classes()));
  w.u32(static_cast<std::uint32_t>(model.patch_radius()));
  for (double x : model.parameters()) w.f64(x);
  w.save(path);
}

PatchLogisticModel load_model(const std::filesystem::path& path) {
  ByteReader r = ByteReader::open(path);
  r.expect_magic(kModelMagic);
  const std::uint32_t k = r.u32();
  const std::uint32_t radius = r.u32();
  if (k < 2 || k > 255 || radius > 64)
    throw FormatError(path.string() + ": implausible model header");
  const std::size_t side = 2 * std::size_t{radius} + 1;
  std::vector<double> weights = r.f64s(std::size_t{k} * (side * side + 1));
  r.expect_end();
  return PatchLogisticModel(k, radius, std::move(weights));
}

}  // namespace eccd
