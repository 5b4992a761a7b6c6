#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace bmtl {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t tn = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  std::int64_t total() const noexcept { return tp + tn + fp + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

enum class Metric { accuracy, balanced_accuracy, precision, recall, f1, f2, mcc };

inline constexpr std::array<Metric, 7> kAllMetrics = {
    Metric::accuracy, Metric::balanced_accuracy, Metric::precision, Metric::recall,
    Metric::f1,       Metric::f2,                Metric::mcc};

/// Column name used in CSV reports ("Accuracy", "Balanced Accuracy", ...).
std::string_view metric_name(Metric m);

/// Binary labels are given as doubles in {0, 1}; anything else throws.
ConfusionCounts confusion(std::span<const double> y, std::span<const double> yhat);

/// Zero denominators: precision, recall and the F-scores return 0, MCC
/// returns 0 when any factor under the root is 0.
double metric(const ConfusionCounts& counts, Metric which);

/// Step-wise average precision sum_k (R_k - R_{k-1}) P_k over the distinct
/// score thresholds, highest first. Tied scores form one threshold.
double average_precision(std::span<const double> y, std::span<const double> scores);

struct MetricSet {
  ConfusionCounts counts;
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double f2 = 0.0;
  double mcc = 0.0;
  double average_precision = 0.0;  // NaN when there are no positive labels

  double get(Metric m) const;
};

/// All metrics for hard predictions `yhat`, with `scores` ranking for the
/// average precision.
MetricSet evaluate_predictions(std::span<const double> y, std::span<const double> yhat,
                               std::span<const double> scores);

/// Support recovery as binary prediction: feature j is selected when
/// scores_j >= threshold, and scored against the true support z0. The
/// scores also rank features for the average precision.
MetricSet support_recovery_score(const Eigen::VectorXd& scores, const Eigen::VectorXd& z0,
                                 double threshold = 0.5);

/// 1 - <a, b> / (|a| |b|), in [0, 2]. Throws DomainError for zero vectors.
double cosine_distance(const Eigen::Ref<const Eigen::VectorXd>& a,
                       const Eigen::Ref<const Eigen::VectorXd>& b);

/// Row-major (task-major) flattening of a T x d weight matrix.
Eigen::VectorXd flatten_task_major(const Eigen::MatrixXd& W);

/// Fraction of entries with |w| <= tol.
double sparsity_ratio(const Eigen::MatrixXd& W, double tol = 0.0);

/// m_tj masked by [phi_j >= threshold], the weight matrix whose zeros
/// the sparsity ratio counts for the Bayesian model.
Eigen::MatrixXd thresholded_weights(const Eigen::MatrixXd& M, const Eigen::VectorXd& phi,
                                    double threshold = 0.5);

struct CalibrationCurve {
  std::vector<double> bin_edges;           // B + 1 values from 0 to 1
  std::vector<double> mean_predicted;      // NaN for empty bins
  std::vector<double> observed_frequency;  // NaN for empty bins
  std::vector<std::int64_t> counts;

  std::size_t num_bins() const noexcept { return counts.size(); }
  bool empty_bin(std::size_t b) const { return counts.at(b) == 0; }
};

/// Equal-width reliability curve; probability 1 falls into the last bin.
CalibrationCurve calibration_curve(std::span<const double> y, std::span<const double> probs,
                                   std::size_t bins = 10);

/// Mean binary cross-entropy, probabilities clipped to [1e-15, 1 - 1e-15].
double cross_entropy(std::span<const double> y, std::span<const double> probs);

inline std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace bmtl
