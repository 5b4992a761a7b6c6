#include "bmtl/crossval.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "bmtl/errors.hpp"
#include "bmtl/metrics.hpp"
#include "bmtl/parallel.hpp"
#include "bmtl/prediction.hpp"

namespace bmtl {

FoldAssignment stratified_folds(const MultitaskDataset& data, std::size_t folds, Rng& rng) {
  if (folds < 2) throw DomainError("cross-validation needs at least two folds");
  FoldAssignment out;
  out.fold_of.resize(data.num_tasks());
  out.task_folds.resize(data.num_tasks());
  for (std::size_t t = 0; t < data.num_tasks(); ++t) {
    const auto& task = data.task(t);
    const auto n = static_cast<std::size_t>(task.size());
    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < n; ++i) by_class[task.labels[static_cast<Eigen::Index>(i)] == 1.0 ? 1 : 0].push_back(i);

    out.fold_of[t].assign(n, -1);
    if (by_class[0].size() < 2 || by_class[1].size() < 2) {
      out.task_folds[t] = 0;
      continue;
    }
    const std::size_t k = std::min(folds, n);
    out.task_folds[t] = k;
    std::size_t position = 0;
    for (auto& members : by_class) {
      std::shuffle(members.begin(), members.end(), rng);
      for (std::size_t i : members) out.fold_of[t][i] = static_cast<int>(position++ % k);
    }
  }
  return out;
}

TaskData subset_task(const TaskData& task, const std::vector<bool>& keep) {
  const auto count = static_cast<Eigen::Index>(std::count(keep.begin(), keep.end(), true));
  TaskData out{task.task_id, Eigen::MatrixXd(count, task.design.cols()), Eigen::VectorXd(count), {}};
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < task.size(); ++i) {
    if (!keep[static_cast<std::size_t>(i)]) continue;
    out.design.row(r) = task.design.row(i);
    out.labels[r] = task.labels[i];
    if (!task.sample_ids.empty()) out.sample_ids.push_back(task.sample_ids[static_cast<std::size_t>(i)]);
    ++r;
  }
  return out;
}

CVReport cross_validate(const MultitaskDataset& data, std::size_t num_candidates,
                        const CandidateFitter& fitter, const CVOptions& options) {
  if (num_candidates < 1) throw DomainError("cross_validate: empty candidate grid");
  if (options.repeats < 1) throw DomainError("cross_validate: repeats must be >= 1");

  CVReport report;
  report.repeats = options.repeats;
  report.folds = options.folds;

  struct Split {
    MultitaskDataset train;
    std::vector<TaskData> valid;  // one entry per task, possibly empty
  };
  std::vector<Split> splits;

  for (std::size_t r = 0; r < options.repeats; ++r) {
    auto rng = make_rng(options.seed, r);
    const auto assignment = stratified_folds(data, options.folds, rng);
    if (r == 0) {
      report.task_folds = assignment.task_folds;
      for (std::size_t t = 0; t < data.num_tasks(); ++t) {
        const auto k = assignment.task_folds[t];
        if (k == 0) {
          report.notes.push_back("task " + data.task(t).task_id +
                                 ": fewer than two samples in a class, never held out");
        } else if (k < options.folds) {
          report.notes.push_back("task " + data.task(t).task_id + ": folds reduced to " +
                                 std::to_string(k));
        }
      }
    }

    for (std::size_t f = 0; f < options.folds; ++f) {
      std::vector<TaskData> train_tasks;
      std::vector<TaskData> valid_tasks;
      bool any_validation = false;
      for (std::size_t t = 0; t < data.num_tasks(); ++t) {
        const auto& fold_of = assignment.fold_of[t];
        std::vector<bool> in_valid(fold_of.size());
        std::vector<bool> in_train(fold_of.size());
        for (std::size_t i = 0; i < fold_of.size(); ++i) {
          in_valid[i] = fold_of[i] == static_cast<int>(f);
          in_train[i] = !in_valid[i];
        }
        train_tasks.push_back(subset_task(data.task(t), in_train));
        valid_tasks.push_back(subset_task(data.task(t), in_valid));
        any_validation = any_validation || valid_tasks.back().size() > 0;
      }
      if (!any_validation) continue;
      splits.push_back({MultitaskDataset(std::move(train_tasks), data.feature_names()),
                        std::move(valid_tasks)});
    }
  }
  if (splits.empty()) throw DomainError("cross_validate: no task can be split into folds");
  report.evaluated_splits = splits.size();

  // losses[c * S + s]: candidate c on split s, merged by index so the result
  // does not depend on scheduling.
  const std::size_t S = splits.size();
  std::vector<double> losses(num_candidates * S);
  parallel_for(num_candidates * S, options.threads, [&](std::size_t job) {
    const std::size_t c = job / S;
    const Split& split = splits[job % S];
    const Predictor predict = fitter(c, split.train);
    std::vector<double> y;
    std::vector<double> p;
    for (std::size_t t = 0; t < split.valid.size(); ++t) {
      const auto& v = split.valid[t];
      if (v.size() == 0) continue;
      const Eigen::VectorXd probs = predict(t, v.design);
      y.insert(y.end(), v.labels.data(), v.labels.data() + v.size());
      p.insert(p.end(), probs.data(), probs.data() + probs.size());
    }
    losses[job] = cross_entropy(y, p);
  });

  for (std::size_t c = 0; c < num_candidates; ++c) {
    const auto first = losses.begin() + static_cast<std::ptrdiff_t>(c * S);
    const std::vector<double> l(first, first + static_cast<std::ptrdiff_t>(S));
    double mean = 0.0;
    for (double v : l) mean += v;
    mean /= static_cast<double>(S);
    double var = 0.0;
    for (double v : l) var += (v - mean) * (v - mean);
    report.mean_loss.push_back(mean);
    report.std_loss.push_back(S > 1 ? std::sqrt(var / static_cast<double>(S - 1)) : 0.0);
  }
  report.selected = static_cast<std::size_t>(
      std::min_element(report.mean_loss.begin(), report.mean_loss.end()) - report.mean_loss.begin());
  return report;
}

CVReport cross_validate(const MultitaskDataset& data, const std::vector<Hyperparameters>& grid,
                        const FitConfig& config, const CVOptions& options) {
  for (const auto& h : grid) h.validate(data.num_tasks());
  const CandidateFitter fitter = [&](std::size_t c, const MultitaskDataset& train) -> Predictor {
    auto fit = std::make_shared<FitResult>(cavi_fit(train, grid[c], config));
    return [fit](std::size_t task, const Eigen::MatrixXd& X) { return predict_proba(*fit, task, X); };
  };
  return cross_validate(data, grid.size(), fitter, options);
}

}  // namespace bmtl
