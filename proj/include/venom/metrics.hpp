#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "venom/attack.hpp"
#include "venom/classifier.hpp"
#include "venom/ddim.hpp"
#include "venom/errors.hpp"
#include "venom/model_io.hpp"
#include "venom/rng.hpp"
#include "venom/tensor.hpp"

namespace venom {

/// Fraction of successful records. Records that ended in an error count as
/// failures. An empty list has no defined rate and is rejected.
inline double asr(const std::vector<AttackRecord>& records) {
  require(!records.empty(), "ASR of an empty record list is undefined");
  std::size_t wins = 0;
  for (const auto& r : records) wins += r.success ? 1 : 0;
  return static_cast<double>(wins) / static_cast<double>(records.size());
}

namespace detail {

inline void moments(const Tensor& feats, Eigen::VectorXd& mean, Eigen::MatrixXd& cov) {
  const auto n = static_cast<Eigen::Index>(feats.rows());
  const auto d = static_cast<Eigen::Index>(feats.cols());
  const Eigen::MatrixXd x = ad::as_matrix(feats);
  mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
  cov = centered.transpose() * centered / static_cast<double>(n - 1);
  cov = 0.5 * (cov + cov.transpose());
  (void)d;
}

}  // namespace detail

/// Frechet distance between Gaussian fits of two feature sets [n, d]:
/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}). The trace of the
/// square root comes from the eigenvalues of S_a^{1/2} S_b S_a^{1/2}; both
/// covariances get a 1e-6 ridge.
inline double frechet_distance(const Tensor& features_a, const Tensor& features_b, double ridge = 1e-6) {
  require(features_a.rank() == 2 && features_b.rank() == 2, "features must be [n, d]");
  require(features_a.cols() == features_b.cols(), "feature dimensions differ");
  const std::size_t d = features_a.cols();
  require(features_a.rows() >= d + 1 && features_b.rows() >= d + 1,
          "each feature set needs at least dim+1 = " + std::to_string(d + 1) + " samples");
  if (!features_a.all_finite() || !features_b.all_finite()) throw NumericError("non-finite features");

  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd cov_a, cov_b;
  detail::moments(features_a, mu_a, cov_a);
  detail::moments(features_b, mu_b, cov_b);
  const auto eye = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  cov_a += ridge * eye;
  cov_b += ridge * eye;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_a(cov_a);
  if (eig_a.info() != Eigen::Success) throw NumericError("eigen-decomposition of covariance A failed");
  const Eigen::VectorXd root = eig_a.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd sqrt_a = eig_a.eigenvectors() * root.asDiagonal() * eig_a.eigenvectors().transpose();
  Eigen::MatrixXd inner = sqrt_a * cov_b * sqrt_a;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_m(inner, Eigen::EigenvaluesOnly);
  if (eig_m.info() != Eigen::Success) throw NumericError("eigen-decomposition of the cross term failed");
  const double tr_sqrt = eig_m.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  const double value = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
  if (!std::isfinite(value)) throw NumericError("non-finite Frechet distance");
  return std::max(0.0, value);
}

struct SsimParams {
  double dynamic_range = 2.0;  // [-1, 1] images
  double k1 = 0.01;
  double k2 = 0.03;
  std::size_t window = 7;
};

namespace detail {

struct WindowStats {
  double mx, my, vx, vy, cxy;
};

/// Uniform-window moments with population (1/N) normalisation. Variance and
/// covariance share one formula so that ssim(x, x) is exactly 1.
inline WindowStats window_stats(const Tensor& x, const Tensor& y, std::size_t r0, std::size_t c0, std::size_t w) {
  auto cov = [&](const Tensor& a, const Tensor& b, double ma, double mb) {
    double acc = 0.0;
    for (std::size_t r = r0; r < r0 + w; ++r)
      for (std::size_t c = c0; c < c0 + w; ++c) acc += (a.at(r, c) - ma) * (b.at(r, c) - mb);
    return acc / static_cast<double>(w * w);
  };
  auto mean = [&](const Tensor& a) {
    double acc = 0.0;
    for (std::size_t r = r0; r < r0 + w; ++r)
      for (std::size_t c = c0; c < c0 + w; ++c) acc += a.at(r, c);
    return acc / static_cast<double>(w * w);
  };
  const double mx = mean(x), my = mean(y);
  return {mx, my, cov(x, x, mx, mx), cov(y, y, my, my), cov(x, y, mx, my)};
}

template <class F>
double mean_over_windows(const Tensor& x, const Tensor& y, const SsimParams& p, F&& term) {
  require(x.shape() == y.shape(), "ssim: shape mismatch " + shape_string(x.shape()) + " vs " +
                                      shape_string(y.shape()));
  require(x.rank() == 2, "ssim expects 2-D images");
  require(x.dim(0) >= p.window && x.dim(1) >= p.window, "image smaller than the SSIM window");
  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r + p.window <= x.dim(0); ++r)
    for (std::size_t c = 0; c + p.window <= x.dim(1); ++c) {
      acc += term(window_stats(x, y, r, c, p.window), c1, c2);
      ++count;
    }
  return acc / static_cast<double>(count);
}

}  // namespace detail

/// Mean SSIM over all valid 7x7 uniform windows.
inline double ssim(const Tensor& x, const Tensor& y, const SsimParams& p = {}) {
  return detail::mean_over_windows(x, y, p, [](const detail::WindowStats& s, double c1, double c2) {
    return ((2.0 * s.mx * s.my + c1) * (2.0 * s.cxy + c2)) /
           ((s.mx * s.mx + s.my * s.my + c1) * (s.vx + s.vy + c2));
  });
}

/// The contrast-structure factor of SSIM alone (no luminance term).
inline double ssim_contrast_structure(const Tensor& x, const Tensor& y, const SsimParams& p = {}) {
  return detail::mean_over_windows(x, y, p, [](const detail::WindowStats& s, double, double c2) {
    return (2.0 * s.cxy + c2) / (s.vx + s.vy + c2);
  });
}

/// exp(mean_x KL(p(y|x) || p(y))) with p(y) the mean prediction over the set.
template <ProbabilisticClassifier C>
double inception_score_toy(const std::vector<Tensor>& images, const C& clf) {
  require(!images.empty(), "inception score of an empty set");
  std::vector<std::vector<double>> probs;
  probs.reserve(images.size());
  for (const auto& img : images) {
    const Tensor lp = clf.log_probs(img);
    std::vector<double> p(lp.size());
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = std::exp(lp[k]);
    probs.push_back(std::move(p));
  }
  const std::size_t K = probs.front().size();
  std::vector<double> marginal(K, 0.0);
  for (const auto& p : probs)
    for (std::size_t k = 0; k < K; ++k) marginal[k] += p[k];
  for (double& m : marginal) m /= static_cast<double>(probs.size());
  double kl_sum = 0.0;
  for (const auto& p : probs)
    for (std::size_t k = 0; k < K; ++k)
      if (p[k] > 0.0) kl_sum += p[k] * (std::log(p[k]) - std::log(marginal[k]));
  return std::exp(kl_sum / static_cast<double>(probs.size()));
}

struct MetricReport {
  std::size_t n = 0;
  std::size_t n_images = 0;  // records that produced an image
  double asr_white = 0.0;
  std::optional<double> asr_transfer;
  std::optional<double> asr_purify;
  std::optional<double> asr_advtrain;
  std::optional<double> frechet;  // absent when too few images for the feature dimension
  std::optional<double> ssim_mean;
  std::optional<double> ssim_median;
  double inception_score = 0.0;
};

struct SuiteModels {
  const VictimClassifier* white = nullptr;
  const VictimClassifier* transfer = nullptr;
  const VictimClassifier* adv_trained = nullptr;
  const DiffusionModel* purifier = nullptr;
  double purify_depth = 0.3;
  std::uint64_t seed = 0;
};

inline double median(std::vector<double> v) {
  require(!v.empty(), "median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Guidance-free samples of the records as a [n, 256] batch: the default
/// reference set for the Frechet distance. Records without one are skipped.
inline Tensor clean_batch(const std::vector<AttackRecord>& records) {
  std::vector<const Tensor*> imgs;
  for (const auto& r : records)
    if (!r.clean.empty()) imgs.push_back(&r.clean);
  if (imgs.empty()) return {};
  Tensor batch({imgs.size(), kImagePixels});
  for (std::size_t i = 0; i < imgs.size(); ++i) std::copy_n(imgs[i]->data(), kImagePixels, batch.data() + i * kImagePixels);
  return batch;
}

/// White-box, transfer, purified and adversarially-trained ASR plus image
/// metrics for a finished run. `clean_reference` is a [n, 256] batch of
/// clean images for the Frechet distance.
inline MetricReport evaluate_suite(const std::vector<AttackRecord>& records, const Tensor& clean_reference,
                                   const SuiteModels& models) {
  if (!models.white) throw ConfigError("evaluate_suite: missing model for slot 'white'");
  require(!records.empty(), "evaluate_suite: no records");
  MetricReport rep;
  rep.n = records.size();

  std::vector<Tensor> images;
  std::vector<const AttackRecord*> with_image;
  for (const auto& r : records)
    if (!r.x_star.empty()) {
      images.push_back(r.x_star);
      with_image.push_back(&r);
    }
  rep.n_images = images.size();

  auto rate = [&](const VictimClassifier& clf, auto&& transform) {
    std::size_t wins = 0;
    for (std::size_t i = 0; i < with_image.size(); ++i) {
      const AttackRecord& r = *with_image[i];
      const int pred = clf.predict(transform(r, i));
      wins += is_adversarial(pred, r.config.direction, r.y_a, r.y_true) ? 1 : 0;
    }
    return static_cast<double>(wins) / static_cast<double>(rep.n);
  };
  auto identity = [](const AttackRecord& r, std::size_t) -> const Tensor& { return r.x_star; };

  rep.asr_white = rate(*models.white, identity);
  if (models.transfer) rep.asr_transfer = rate(*models.transfer, identity);
  if (models.adv_trained) rep.asr_advtrain = rate(*models.adv_trained, identity);
  if (models.purifier) {
    rep.asr_purify = rate(*models.white, [&](const AttackRecord& r, std::size_t) {
      Rng rng({models.seed, static_cast<std::uint64_t>(r.index), 0x50555249ULL});
      return purify(models.purifier->schedule, models.purifier->predictor, r.x_star, models.purify_depth, rng);
    });
  }

  if (!images.empty()) {
    const std::size_t dim = models.white->feature_dim();
    if (images.size() >= dim + 1 && clean_reference.rows() >= dim + 1) {
      Tensor batch({images.size(), kImagePixels});
      for (std::size_t i = 0; i < images.size(); ++i)
        std::copy_n(images[i].data(), kImagePixels, batch.data() + i * kImagePixels);
      rep.frechet = frechet_distance(models.white->features(batch), models.white->features(clean_reference));
    }
    rep.inception_score = inception_score_toy(images, *models.white);
  }

  std::vector<double> ssims;
  for (const AttackRecord* r : with_image) {
    if (r->config.mode != Mode::kUae) continue;
    if (r->reference.empty()) throw ContractViolation("UAE record without a reference image");
    ssims.push_back(ssim(r->x_star.reshaped({kImageSide, kImageSide}), r->reference.reshaped({kImageSide, kImageSide})));
  }
  if (!ssims.empty()) {
    double acc = 0.0;
    for (double v : ssims) acc += v;
    rep.ssim_mean = acc / static_cast<double>(ssims.size());
    rep.ssim_median = median(ssims);
  }
  return rep;
}

}  // namespace venom
