#include "bmtl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bmtl/errors.hpp"

namespace bmtl {

namespace {

bool is_positive(double label) {
  if (label == 1.0) return true;
  if (label == 0.0) return false;
  throw DomainError("labels must be 0 or 1");
}

double ratio_or_zero(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::accuracy: return "Accuracy";
    case Metric::balanced_accuracy: return "Balanced Accuracy";
    case Metric::precision: return "Precision";
    case Metric::recall: return "Recall";
    case Metric::f1: return "F1 Score";
    case Metric::f2: return "F2 Score";
    case Metric::mcc: return "MCC";
  }
  return "";
}

ConfusionCounts confusion(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw ShapeError("confusion: label vectors differ in length");
  ConfusionCounts c;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const bool truth = is_positive(y[i]);
    const bool pred = is_positive(yhat[i]);
    if (truth && pred) ++c.tp;
    else if (!truth && !pred) ++c.tn;
    else if (!truth && pred) ++c.fp;
    else ++c.fn;
  }
  return c;
}

double metric(const ConfusionCounts& c, Metric which) {
  const auto tp = static_cast<double>(c.tp);
  const auto tn = static_cast<double>(c.tn);
  const auto fp = static_cast<double>(c.fp);
  const auto fn = static_cast<double>(c.fn);
  const double precision = ratio_or_zero(tp, tp + fp);
  const double recall = ratio_or_zero(tp, tp + fn);
  switch (which) {
    case Metric::accuracy:
      return ratio_or_zero(tp + tn, static_cast<double>(c.total()));
    case Metric::balanced_accuracy:
      return 0.5 * (ratio_or_zero(tp, tp + fn) + ratio_or_zero(tn, tn + fp));
    case Metric::precision:
      return precision;
    case Metric::recall:
      return recall;
    case Metric::f1:
      return ratio_or_zero(2.0 * precision * recall, precision + recall);
    case Metric::f2:
      return ratio_or_zero(5.0 * precision * recall, 4.0 * precision + recall);
    case Metric::mcc: {
      const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
      if (den == 0.0) return 0.0;
      return (tp * tn - fp * fn) / std::sqrt(den);
    }
  }
  return 0.0;
}

double average_precision(std::span<const double> y, std::span<const double> scores) {
  if (y.size() != scores.size()) throw ShapeError("average_precision: length mismatch");
  std::size_t positives = 0;
  for (double label : y) positives += is_positive(label) ? 1 : 0;
  if (positives == 0) throw DomainError("average_precision: no positive labels");

  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double ap = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0;
  std::size_t predicted = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double threshold = scores[order[k]];
    while (k < order.size() && scores[order[k]] == threshold) {
      tp += y[order[k]] == 1.0 ? 1 : 0;
      ++predicted;
      ++k;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    const double precision = static_cast<double>(tp) / static_cast<double>(predicted);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

double MetricSet::get(Metric m) const {
  switch (m) {
    case Metric::accuracy: return accuracy;
    case Metric::balanced_accuracy: return balanced_accuracy;
    case Metric::precision: return precision;
    case Metric::recall: return recall;
    case Metric::f1: return f1;
    case Metric::f2: return f2;
    case Metric::mcc: return mcc;
  }
  return 0.0;
}

MetricSet evaluate_predictions(std::span<const double> y, std::span<const double> yhat,
                               std::span<const double> scores) {
  MetricSet out;
  out.counts = confusion(y, yhat);
  out.accuracy = metric(out.counts, Metric::accuracy);
  out.balanced_accuracy = metric(out.counts, Metric::balanced_accuracy);
  out.precision = metric(out.counts, Metric::precision);
  out.recall = metric(out.counts, Metric::recall);
  out.f1 = metric(out.counts, Metric::f1);
  out.f2 = metric(out.counts, Metric::f2);
  out.mcc = metric(out.counts, Metric::mcc);
  out.average_precision = out.counts.tp + out.counts.fn > 0
                              ? average_precision(y, scores)
                              : std::numeric_limits<double>::quiet_NaN();
  return out;
}

MetricSet support_recovery_score(const Eigen::VectorXd& scores, const Eigen::VectorXd& z0,
                                 double threshold) {
  if (scores.size() != z0.size()) throw ShapeError("support_recovery_score: length mismatch");
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw DomainError("support_recovery_score: threshold must lie in (0, 1)");
  }
  Eigen::VectorXd selected(scores.size());
  for (Eigen::Index j = 0; j < scores.size(); ++j) selected[j] = scores[j] >= threshold ? 1.0 : 0.0;
  return evaluate_predictions(as_span(z0), as_span(selected), as_span(scores));
}

double cosine_distance(const Eigen::Ref<const Eigen::VectorXd>& a,
                       const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size()) throw ShapeError("cosine_distance: length mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw DomainError("cosine_distance: zero vector");
  return std::clamp(1.0 - a.dot(b) / (na * nb), 0.0, 2.0);
}

Eigen::VectorXd flatten_task_major(const Eigen::MatrixXd& W) {
  Eigen::VectorXd out(W.size());
  Eigen::Index k = 0;
  for (Eigen::Index t = 0; t < W.rows(); ++t) {
    for (Eigen::Index j = 0; j < W.cols(); ++j) out[k++] = W(t, j);
  }
  return out;
}

double sparsity_ratio(const Eigen::MatrixXd& W, double tol) {
  if (tol < 0.0) throw DomainError("sparsity_ratio: tol must be non-negative");
  if (W.size() == 0) return 0.0;
  const auto zeros = (W.array().abs() <= tol).count();
  return static_cast<double>(zeros) / static_cast<double>(W.size());
}

Eigen::MatrixXd thresholded_weights(const Eigen::MatrixXd& M, const Eigen::VectorXd& phi,
                                    double threshold) {
  if (phi.size() != M.cols()) throw ShapeError("thresholded_weights: phi must have d entries");
  Eigen::MatrixXd out = M;
  for (Eigen::Index j = 0; j < M.cols(); ++j) {
    if (!(phi[j] >= threshold)) out.col(j).setZero();
  }
  return out;
}

CalibrationCurve calibration_curve(std::span<const double> y, std::span<const double> probs,
                                   std::size_t bins) {
  if (y.size() != probs.size()) throw ShapeError("calibration_curve: length mismatch");
  if (bins < 1) throw DomainError("calibration_curve: need at least one bin");
  CalibrationCurve c;
  c.bin_edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) {
    c.bin_edges[b] = static_cast<double>(b) / static_cast<double>(bins);
  }
  std::vector<double> sum_p(bins, 0.0);
  std::vector<double> sum_y(bins, 0.0);
  c.counts.assign(bins, 0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = probs[i];
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("calibration_curve: probabilities must be in [0, 1]");
    const bool label = is_positive(y[i]);
    auto b = static_cast<std::size_t>(p * static_cast<double>(bins));
    b = std::min(b, bins - 1);
    sum_p[b] += p;
    sum_y[b] += label ? 1.0 : 0.0;
    ++c.counts[b];
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t b = 0; b < bins; ++b) {
    const auto n = static_cast<double>(c.counts[b]);
    c.mean_predicted.push_back(c.counts[b] ? sum_p[b] / n : nan);
    c.observed_frequency.push_back(c.counts[b] ? sum_y[b] / n : nan);
  }
  return c;
}

double cross_entropy(std::span<const double> y, std::span<const double> probs) {
  if (y.size() != probs.size()) throw ShapeError("cross_entropy: length mismatch");
  if (y.empty()) throw DomainError("cross_entropy: empty input");
  constexpr double eps = 1e-15;
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = std::clamp(probs[i], eps, 1.0 - eps);
    acc -= is_positive(y[i]) ? std::log(p) : std::log1p(-p);
  }
  return acc / static_cast<double>(y.size());
}

}  // namespace bmtl
