#include "brute_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include <boost/rational.hpp>

namespace brute {

namespace {

using Q = boost::rational<long long>;

Q frac(long long a, long long b) { return b == 0 ? Q(0) : Q(a, b); }
double dbl(const Q& q) { return boost::rational_cast<double>(q); }

}  // namespace

Exact metrics(const std::vector<int>& y, const std::vector<int>& yhat) {
  long long tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    tp += (y[i] == 1 && yhat[i] == 1);
    tn += (y[i] == 0 && yhat[i] == 0);
    fp += (y[i] == 0 && yhat[i] == 1);
    fn += (y[i] == 1 && yhat[i] == 0);
  }
  Exact e{};
  e.accuracy = dbl(frac(tp + tn, tp + tn + fp + fn));
  const Q sens = frac(tp, tp + fn);
  const Q spec = frac(tn, tn + fp);
  e.balanced_accuracy = dbl((sens + spec) / 2);
  const Q p = frac(tp, tp + fp);
  const Q r = sens;
  e.precision = dbl(p);
  e.recall = dbl(r);
  e.f1 = (p + r) == Q(0) ? 0.0 : dbl(2 * p * r / (p + r));
  e.f2 = (4 * p + r) == Q(0) ? 0.0 : dbl(5 * p * r / (4 * p + r));
  // MCC = sign(num) sqrt(num^2 / den) with num^2 / den exact.
  const long long num = tp * tn - fp * fn;
  const long long den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (den == 0) {
    e.mcc = 0.0;
  } else {
    const Q sq(num * num, den);
    e.mcc = (num < 0 ? -1.0 : 1.0) * std::sqrt(dbl(sq));
  }
  return e;
}

double average_precision(const std::vector<int>& y, const std::vector<double>& scores) {
  const std::set<double, std::greater<>> cuts(scores.begin(), scores.end());
  long long positives = 0;
  for (int v : y) positives += v;
  Q ap = 0;
  Q prev_recall = 0;
  for (double c : cuts) {
    long long tp = 0, predicted = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (scores[i] >= c) {
        ++predicted;
        tp += y[i];
      }
    }
    const Q recall(tp, positives);
    ap += (recall - prev_recall) * Q(tp, predicted);
    prev_recall = recall;
  }
  return dbl(ap);
}

}  // namespace brute
