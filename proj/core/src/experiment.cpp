#include "bmtl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <map>
#include <memory>
#include <sstream>

#include <boost/algorithm/string.hpp>

#include "bmtl/errors.hpp"
#include "bmtl/parallel.hpp"
#include "bmtl/prediction.hpp"
#include "bmtl/random.hpp"

namespace bmtl {

namespace {

constexpr std::uint64_t kCvStream = 0xC5;

std::vector<std::string> task_ids_of(const MultitaskDataset& data) {
  std::vector<std::string> ids;
  for (const auto& t : data.tasks()) ids.push_back(t.task_id);
  return ids;
}

std::vector<std::string> feature_names_of(const MultitaskDataset& data) {
  if (!data.feature_names().empty()) return data.feature_names();
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < data.feature_dim(); ++j) names.push_back("f" + std::to_string(j + 1));
  return names;
}

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::bayes_mtl:
      return "bayes-mtl";
    case Method::stl_lc:
      return "stl-lc";
    case Method::pooled_lc:
      return "pooled-lc";
  }
  return "unknown";
}

std::optional<Method> parse_method(const std::string& name) {
  for (Method m : kAllMethods) {
    if (method_name(m) == name) return m;
  }
  return std::nullopt;
}

Hyperparameters HyperCandidate::materialize(std::size_t num_tasks) const {
  const double v0_value = v0.value_or(static_cast<double>(num_tasks) + 2.0);
  auto h = Hyperparameters::from_ratio(ratio, concentration, v0_value, v0_scale, num_tasks);
  h.validate(num_tasks);
  return h;
}

std::string HyperCandidate::label() const {
  std::string s = "ratio=" + short_number(ratio) + ";concentration=" + short_number(concentration) +
                  ";V0=" + short_number(v0_scale) + "I";
  if (v0) s += ";v0=" + short_number(*v0);
  return s;
}

std::vector<HyperCandidate> default_hyper_grid() {
  std::vector<HyperCandidate> grid;
  for (double ratio : {0.05, 0.2, 0.5}) {
    for (double concentration : {2.0, 20.0}) {
      for (double scale : {1.0, 0.1}) grid.push_back({ratio, concentration, scale, std::nullopt});
    }
  }
  return grid;
}

std::vector<HyperCandidate> parse_hyper_grid(const std::string& text) {
  std::vector<std::string> items;
  boost::split(items, text, boost::is_any_of(","));
  std::vector<HyperCandidate> grid;
  for (auto item : items) {
    boost::trim(item);
    if (item.empty()) continue;
    std::vector<std::string> parts;
    boost::split(parts, item, boost::is_any_of(":"));
    if (parts.size() < 3 || parts.size() > 4) {
      throw DomainError("hyper-grid entry '" + item + "' must be ratio:concentration:V0scale[:v0]");
    }
    auto number = [&](const std::string& s) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(s, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != s.size() || s.empty()) throw DomainError("hyper-grid entry '" + item + "': bad number '" + s + "'");
      return v;
    };
    HyperCandidate c{number(parts[0]), number(parts[1]), number(parts[2]), std::nullopt};
    if (parts.size() == 4) c.v0 = number(parts[3]);
    if (!(c.ratio > 0.0 && c.ratio < 1.0) || !(c.concentration > 0.0) || !(c.v0_scale > 0.0)) {
      throw DomainError("hyper-grid entry '" + item + "' is out of range");
    }
    grid.push_back(c);
  }
  if (grid.empty()) throw DomainError("hyper-grid is empty");
  return grid;
}

FitOutcome fit_model(const MultitaskDataset& data, const FitOptions& options,
                     const Preprocessing& preprocessing) {
  FitOutcome out;
  auto& archive = out.archive;
  archive.method = method_name(options.method);
  archive.task_ids = task_ids_of(data);
  archive.feature_names = feature_names_of(data);
  archive.data_fingerprint = dataset_fingerprint(data);
  archive.preprocessing = preprocessing;

  CVOptions cv = options.cv;

  if (options.method == Method::bayes_mtl) {
    if (options.hyper_grid.empty()) throw DomainError("hyper-grid is empty");
    std::vector<Hyperparameters> grid;
    for (const auto& c : options.hyper_grid) {
      grid.push_back(c.materialize(data.num_tasks()));
      out.candidate_labels.push_back(c.label());
    }
    if (grid.size() > 1) {
      out.reports.push_back(cross_validate(data, grid, options.fit, cv));
      out.selected = out.reports.back().selected;
    }
    BayesModel model{grid[out.selected], options.fit, cavi_fit(data, grid[out.selected], options.fit)};
    archive.bayes = std::move(model);
    return out;
  }

  const auto lambdas = options.lambda_grid.empty()
                           ? default_lambda_grid(data, options.lambda_count, options.lambda_ratio)
                           : options.lambda_grid;
  for (double l : lambdas) out.candidate_labels.push_back("lambda=" + format_double(l));
  const BaselineConfig config{cv, options.solver};
  LinearModel linear;
  if (options.method == Method::stl_lc) {
    auto fit = fit_stl(data, lambdas, config);
    linear.models = std::move(fit.models);
    out.reports = std::move(fit.reports);
  } else {
    auto fit = fit_pooled(data, lambdas, config);
    linear.models.push_back(std::move(fit.model));
    linear.pooled = true;
    out.reports = std::move(fit.reports);
    if (!out.reports.empty()) out.selected = out.reports.front().selected;
  }
  archive.linear = std::move(linear);
  return out;
}

RecoveryReport score_recovery(const ModelArchive& model, const GroundTruth& truth) {
  if (truth.z0.size() != model.feature_dim() ||
      truth.W0.rows() != static_cast<Eigen::Index>(model.num_tasks())) {
    throw ShapeError("ground truth does not match the model dimensions");
  }
  RecoveryReport r;
  const Eigen::VectorXd selected = model.selected_support();
  const Eigen::VectorXd scores = model.support_scores();
  r.support = evaluate_predictions(as_span(truth.z0), as_span(selected), as_span(scores));

  const Eigen::VectorXd estimate = flatten_task_major(model.effective_weights());
  const Eigen::VectorXd target = flatten_task_major(truth.effective_weights());
  if (estimate.norm() > 0.0 && target.norm() > 0.0) {
    r.cosine_distance = cosine_distance(estimate, target);
  } else {
    r.cosine_distance = std::numeric_limits<double>::quiet_NaN();
  }
  r.sparsity_ratio = sparsity_ratio(model.thresholded_weights());
  return r;
}

PredictionReport score_predictions(const ModelArchive& model, const MultitaskDataset& data) {
  model.check_compatible(data);
  PredictionReport report;
  std::vector<double> all_y;
  std::vector<double> all_p;
  for (const auto& task : data.tasks()) {
    const Eigen::VectorXd p = model.predict_proba(model.task_index(task.task_id), task.design);
    const Eigen::VectorXd yhat = (p.array() >= 0.5).cast<double>();
    report.per_task.push_back(evaluate_predictions(as_span(task.labels), as_span(yhat), as_span(p)));
    report.task_ids.push_back(task.task_id);
    all_y.insert(all_y.end(), task.labels.data(), task.labels.data() + task.size());
    all_p.insert(all_p.end(), p.data(), p.data() + p.size());
  }
  std::vector<double> all_hat(all_p.size());
  std::transform(all_p.begin(), all_p.end(), all_hat.begin(), [](double p) { return p >= 0.5 ? 1.0 : 0.0; });
  report.overall = evaluate_predictions(all_y, all_hat, all_p);
  report.cross_entropy = cross_entropy(all_y, all_p);
  return report;
}

std::size_t default_thread_count() {
  if (const char* env = std::getenv("BMTL_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return 1;
}

std::vector<BenchmarkCell> run_benchmark(const BenchmarkOptions& options) {
  std::vector<Scenario> scenarios;
  if (options.scenarios.empty()) {
    scenarios = list_scenarios();
  } else {
    for (const auto& name : options.scenarios) {
      auto s = find_scenario(name);
      if (!s) throw DomainError("unknown scenario '" + name + "'");
      scenarios.push_back(*s);
    }
  }
  if (options.seeds < 1) throw DomainError("benchmark needs at least one seed");

  std::vector<BenchmarkCell> cells;
  for (const auto& s : scenarios) {
    for (Method m : options.methods) {
      for (std::size_t k = 0; k < options.seeds; ++k) {
        BenchmarkCell cell;
        cell.scenario = s.name;
        cell.method = m;
        cell.seed = options.base_seed + k;
        cells.push_back(cell);
      }
    }
  }

  parallel_for(cells.size(), options.threads, [&](std::size_t i) {
    auto& cell = cells[i];
    try {
      Scenario scenario = *find_scenario(cell.scenario);
      scenario.seed = cell.seed;
      const auto synthetic = generate(scenario);
      FitOptions fit = options.fit;
      fit.method = cell.method;
      fit.fit.seed = cell.seed;
      fit.cv.threads = 1;  // cells already run in parallel
      fit.cv.seed = mix_seed(cell.seed ^ kCvStream);
      const auto outcome = fit_model(synthetic.dataset, fit);
      cell.recovery = score_recovery(outcome.archive, synthetic.truth);
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.error = e.what();
    }
  });
  return cells;
}

namespace {

struct Column {
  std::string name;
  double (*get)(const RecoveryReport&);
};

const std::vector<Column>& report_columns() {
  static const std::vector<Column> columns = [] {
    std::vector<Column> c;
    c.push_back({"Accuracy", [](const RecoveryReport& r) { return r.support.accuracy; }});
    c.push_back({"Balanced Accuracy", [](const RecoveryReport& r) { return r.support.balanced_accuracy; }});
    c.push_back({"Precision", [](const RecoveryReport& r) { return r.support.precision; }});
    c.push_back({"Recall", [](const RecoveryReport& r) { return r.support.recall; }});
    c.push_back({"F1 Score", [](const RecoveryReport& r) { return r.support.f1; }});
    c.push_back({"F2 Score", [](const RecoveryReport& r) { return r.support.f2; }});
    c.push_back({"MCC", [](const RecoveryReport& r) { return r.support.mcc; }});
    c.push_back({"Average Precision", [](const RecoveryReport& r) { return r.support.average_precision; }});
    c.push_back({"Cosine Distance", [](const RecoveryReport& r) { return r.cosine_distance; }});
    c.push_back({"Sparsity Ratio", [](const RecoveryReport& r) { return r.sparsity_ratio; }});
    return c;
  }();
  return columns;
}

std::string csv_text(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

}  // namespace

std::string benchmark_cells_csv(const std::vector<BenchmarkCell>& cells) {
  std::ostringstream out;
  out << "scenario,method,seed,status";
  for (const auto& c : report_columns()) out << ',' << c.name;
  out << ",error\n";
  for (const auto& cell : cells) {
    out << cell.scenario << ',' << method_name(cell.method) << ',' << cell.seed << ','
        << (cell.ok ? "ok" : "failed");
    for (const auto& c : report_columns()) out << ',' << (cell.ok ? format_double(c.get(cell.recovery)) : "");
    out << ',' << csv_text(cell.error) << '\n';
  }
  return out.str();
}

std::string benchmark_summary_csv(const std::vector<BenchmarkCell>& cells) {
  std::vector<std::pair<std::string, Method>> keys;
  std::map<std::pair<std::string, Method>, std::vector<const BenchmarkCell*>> groups;
  for (const auto& cell : cells) {
    const auto key = std::make_pair(cell.scenario, cell.method);
    auto& bucket = groups[key];
    if (bucket.empty()) keys.push_back(key);
    bucket.push_back(&cell);
  }

  std::ostringstream out;
  out << "scenario,method,runs,failed";
  for (const auto& c : report_columns()) out << ',' << c.name;
  out << '\n';
  for (const auto& key : keys) {
    const auto& bucket = groups[key];
    std::size_t failed = 0;
    for (const auto* cell : bucket) failed += cell->ok ? 0 : 1;
    out << key.first << ',' << method_name(key.second) << ',' << bucket.size() << ',' << failed;
    for (const auto& c : report_columns()) {
      std::vector<double> values;
      for (const auto* cell : bucket) {
        if (!cell->ok) continue;
        const double v = c.get(cell->recovery);
        if (std::isfinite(v)) values.push_back(v);
      }
      if (values.empty()) {
        out << ",";
        continue;
      }
      double mean = 0.0;
      for (double v : values) mean += v;
      mean /= static_cast<double>(values.size());
      double var = 0.0;
      for (double v : values) var += (v - mean) * (v - mean);
      const double sd = values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
      out << ',' << format_double(mean) << " (" << format_double(sd) << ')';
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace bmtl
