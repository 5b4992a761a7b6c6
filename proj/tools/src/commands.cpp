#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <boost/algorithm/string.hpp>

#include "bmtl/dataio.hpp"
#include "bmtl/errors.hpp"
#include "bmtl/experiment.hpp"
#include "bmtl/metrics.hpp"
#include "bmtl/prediction.hpp"
#include "bmtl/synthgen.hpp"
#include "manifest.hpp"

namespace bmtl::cli {

namespace {

using nlohmann::json;

std::string num(double v) { return format_double(v); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_output(Manifest& manifest, const fs::path& path, const std::string& text) {
  write_file_atomic(path, text);
  manifest.add_output(path);
}

std::string sample_id(const TaskData& task, Eigen::Index i) {
  if (!task.sample_ids.empty()) return task.sample_ids[static_cast<std::size_t>(i)];
  return task.task_id + "_" + std::to_string(i);
}

std::string file_safe(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<std::string> parts;
  boost::split(parts, text, boost::is_any_of(","));
  std::vector<double> out;
  for (auto& p : parts) {
    boost::trim(p);
    if (p.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(p, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != p.size()) throw DomainError("not a number: '" + p + "'");
    out.push_back(v);
  }
  if (out.empty()) throw DomainError("empty number list");
  return out;
}

std::vector<HyperCandidate> hyper_grid_from(const std::string& text) {
  if (text.empty() || text == "default") return default_hyper_grid();
  return parse_hyper_grid(text);
}

/// Loads `path` the way the model's training data was loaded. A model fitted
/// on one group reads only that group's rows.
MultitaskDataset load_for_model(const ModelArchive& model, const fs::path& path,
                                const std::string& group_column) {
  LoadOptions opts;
  opts.apply_clr = model.preprocessing.apply_clr;
  opts.pseudocount = model.preprocessing.pseudocount;
  opts.append_intercept = model.preprocessing.intercept;
  opts.group_column = group_column;
  if (model.group.empty()) return load_dataset(path, opts);
  for (auto& g : load_grouped_datasets(path, opts)) {
    if (g.group == model.group) return std::move(g.dataset);
  }
  throw ParseError("group '" + model.group + "' not found in " + path.string());
}

json preprocessing_json(const Preprocessing& p) {
  return {{"clr", p.apply_clr}, {"pseudocount", p.pseudocount}, {"intercept", p.intercept}};
}

double sigmoid(double s) { return s >= 0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s)); }

}  // namespace

int run_simulate(const SimulateArgs& args) {
  auto scenario = find_scenario(args.scenario);
  if (!scenario) throw DomainError("unknown scenario '" + args.scenario + "'");
  scenario->seed = args.seed;
  const auto synthetic = generate(*scenario);

  Manifest manifest("simulate", args.out);
  manifest.set_seed(args.seed);
  manifest.config() = {{"scenario", scenario->name},
                       {"theta", scenario->theta},
                       {"balance", scenario->balance == Balance::balanced ? "balanced" : "imbalanced"},
                       {"d", scenario->d},
                       {"T", scenario->T}};
  const fs::path data_path = args.out / "data.csv";
  const fs::path truth_path = args.out / "truth.csv";
  save_dataset(synthetic.dataset, data_path);
  manifest.add_output(data_path);
  save_truth(synthetic.truth, synthetic.dataset, truth_path);
  manifest.add_output(truth_path);
  manifest.write();
  return 0;
}

int run_fit(const FitArgs& args) {
  const auto method = parse_method(args.method);
  if (!method) throw DomainError("unknown method '" + args.method + "'");

  FitOptions options;
  options.method = *method;
  options.hyper_grid = hyper_grid_from(args.hyper_grid);
  if (!args.lambda_grid.empty()) options.lambda_grid = parse_doubles(args.lambda_grid);
  options.fit.max_sweeps = args.max_sweeps;
  options.fit.elbo_rel_tol = args.tol;
  options.fit.seed = args.seed;
  if (args.init == "zeros") {
    options.fit.init_mode = InitMode::zeros;
  } else if (args.init == "small-random") {
    options.fit.init_mode = InitMode::small_random;
  } else {
    throw DomainError("unknown init mode '" + args.init + "'");
  }
  options.fit.validate();
  options.cv.repeats = args.cv_repeats;
  options.cv.folds = args.cv_folds;
  options.cv.seed = args.seed;
  options.cv.threads = std::max<std::size_t>(1, args.threads);

  LoadOptions load;
  load.apply_clr = args.load.clr;
  load.pseudocount = args.load.pseudocount;
  load.append_intercept = args.load.intercept;
  const Preprocessing preprocessing{args.load.clr, args.load.pseudocount, args.load.intercept};

  std::vector<DatasetGroup> groups;
  if (args.load.group_column) {
    load.group_column = *args.load.group_column;
    groups = load_grouped_datasets(args.data, load);
  } else {
    groups.push_back({"", load_dataset(args.data, load)});
  }

  Manifest manifest("fit", args.out);
  manifest.set_seed(args.seed);
  manifest.add_input(args.data);
  json grid = json::array();
  for (const auto& c : options.hyper_grid) grid.push_back(c.label());
  manifest.config() = {{"method", method_name(options.method)},
                       {"group_column", args.load.group_column.value_or("")},
                       {"preprocessing", preprocessing_json(preprocessing)},
                       {"cv_repeats", args.cv_repeats},
                       {"cv_folds", args.cv_folds},
                       {"max_sweeps", args.max_sweeps},
                       {"tol", args.tol},
                       {"init", args.init},
                       {"threads", options.cv.threads}};
  if (options.method == Method::bayes_mtl) {
    manifest.config()["hyper_grid"] = grid;
  } else if (!options.lambda_grid.empty()) {
    manifest.config()["lambda_grid"] = options.lambda_grid;
  }

  std::ostringstream cv_csv;
  cv_csv << "group,task_id,candidate,label,mean_cross_entropy,std_cross_entropy,selected\n";
  for (const auto& g : groups) {
    auto outcome = fit_model(g.dataset, options, preprocessing);
    outcome.archive.group = g.group;
    const fs::path model_path =
        args.out / (g.group.empty() ? std::string("model.json") : "model-" + file_safe(g.group) + ".json");
    save_model(outcome.archive, model_path);
    manifest.add_output(model_path);

    const bool per_task = options.method == Method::stl_lc;
    for (std::size_t r = 0; r < outcome.reports.size(); ++r) {
      const auto& report = outcome.reports[r];
      const std::string task = per_task ? g.dataset.task(r).task_id : "";
      for (std::size_t c = 0; c < report.mean_loss.size(); ++c) {
        cv_csv << csv_field(g.group) << ',' << csv_field(task) << ',' << c << ','
               << csv_field(outcome.candidate_labels.at(c)) << ',' << num(report.mean_loss[c]) << ','
               << num(report.std_loss[c]) << ',' << (c == report.selected ? 1 : 0) << '\n';
      }
      for (const auto& note : report.notes) {
        manifest.add_note((g.group.empty() ? "" : "[" + g.group + "] ") + (task.empty() ? "" : task + ": ") + note);
      }
    }
    if (outcome.reports.empty()) {
      manifest.add_note((g.group.empty() ? "" : "[" + g.group + "] ") +
                        std::string("single candidate, cross-validation skipped"));
    }
    if (outcome.archive.bayes && !outcome.archive.bayes->fit.converged) {
      manifest.add_note((g.group.empty() ? "" : "[" + g.group + "] ") +
                        std::string("coordinate ascent stopped at the sweep limit"));
    }
  }
  write_output(manifest, args.out / "cv_report.csv", cv_csv.str());
  manifest.write();
  return 0;
}

int run_evaluate(const EvaluateArgs& args) {
  if (args.recovery && !args.truth) throw DomainError("--recovery needs --truth");
  const auto model = load_model(args.model);
  const auto data = load_for_model(model, args.data, args.group_column);

  Manifest manifest("evaluate", args.out);
  manifest.add_input(args.model);
  manifest.add_input(args.data);
  manifest.config() = {{"method", model.method}, {"group", model.group}, {"recovery", args.truth.has_value()}};

  const auto report = score_predictions(model, data);
  std::ostringstream metrics;
  metrics << "scope,task_id,n";
  for (Metric m : kAllMetrics) metrics << ',' << metric_name(m);
  metrics << ",Average Precision,Cross Entropy\n";
  auto row = [&](const std::string& scope, const std::string& task, const MetricSet& s, double ce) {
    metrics << scope << ',' << csv_field(task) << ',' << s.counts.total();
    for (Metric m : kAllMetrics) metrics << ',' << num(s.get(m));
    metrics << ',' << num(s.average_precision) << ',' << num(ce) << '\n';
  };
  row("overall", "", report.overall, report.cross_entropy);
  for (std::size_t t = 0; t < report.per_task.size(); ++t) {
    const auto& task = data.task(t);
    const Eigen::VectorXd p = model.predict_proba(model.task_index(task.task_id), task.design);
    row("task", report.task_ids[t], report.per_task[t], cross_entropy(as_span(task.labels), as_span(p)));
  }
  write_output(manifest, args.out / "metrics.csv", metrics.str());

  const Eigen::MatrixXd thresholded = model.thresholded_weights();
  const Eigen::VectorXd selected = model.selected_support();
  std::ostringstream summary;
  summary << "method,group,tasks,features,selected_features,Sparsity Ratio\n"
          << model.method << ',' << csv_field(model.group) << ',' << model.num_tasks() << ','
          << model.feature_dim() << ',' << static_cast<long>(selected.sum()) << ','
          << num(sparsity_ratio(thresholded)) << '\n';
  write_output(manifest, args.out / "summary.csv", summary.str());

  if (args.truth) {
    manifest.add_input(*args.truth);
    const auto truth = load_truth(*args.truth);
    const auto rec = score_recovery(model, truth);
    std::ostringstream out;
    for (Metric m : kAllMetrics) out << metric_name(m) << ',';
    out << "Average Precision,Cosine Distance,Sparsity Ratio\n";
    for (Metric m : kAllMetrics) out << num(rec.support.get(m)) << ',';
    out << num(rec.support.average_precision) << ',' << num(rec.cosine_distance) << ','
        << num(rec.sparsity_ratio) << '\n';
    write_output(manifest, args.out / "recovery.csv", out.str());
    if (std::isnan(rec.cosine_distance)) manifest.add_note("cosine distance undefined: a weight matrix is all zero");
  }
  manifest.write();
  return 0;
}

namespace {

void check_posterior_args(const PosteriorArgs& args) {
  if (args.samples < 1) throw DomainError("--samples must be at least 1");
  if (!(args.level > 0.0 && args.level < 1.0)) throw DomainError("--level must lie in (0, 1)");
  if (args.bins < 1) throw DomainError("--bins must be at least 1");
}

PointEstimate point_from(const std::string& s) {
  if (s == "plug-in") return PointEstimate::plug_in;
  if (s == "mc-mean") return PointEstimate::monte_carlo_mean;
  throw DomainError("unknown point estimate '" + s + "'");
}

json posterior_config(const PosteriorArgs& args, const ModelArchive& model) {
  return {{"method", model.method}, {"group", model.group}, {"samples", args.samples},
          {"level", args.level},    {"bins", args.bins},     {"point", args.point}};
}

std::string feature_header(const ModelArchive& model) {
  std::string h;
  for (const auto& f : model.feature_names) h += ',' + csv_field(f);
  return h;
}

}  // namespace

int run_predict(const PosteriorArgs& args) {
  check_posterior_args(args);
  const auto point = point_from(args.point);
  const auto model = load_model(args.model);
  const auto data = load_for_model(model, args.data, args.group_column);
  model.check_compatible(data);

  Manifest manifest("predict", args.out);
  manifest.set_seed(args.seed);
  manifest.add_input(args.model);
  manifest.add_input(args.data);
  manifest.config() = posterior_config(args, model);

  std::ostringstream out;
  out << "sample_id,task_id,label,probability,lower,upper\n";
  for (const auto& task : data.tasks()) {
    const std::size_t t = model.task_index(task.task_id);
    std::vector<ProbabilityInterval> bands;
    if (model.bayes) {
      bands = predict_proba_interval(model.bayes->fit.state, t, task.design, args.samples, args.level,
                                     args.seed, point);
    } else {
      const Eigen::VectorXd p = model.predict_proba(t, task.design);
      for (Eigen::Index i = 0; i < p.size(); ++i) bands.push_back({p(i), p(i), p(i)});
    }
    for (Eigen::Index i = 0; i < task.size(); ++i) {
      const auto& b = bands[static_cast<std::size_t>(i)];
      out << csv_field(sample_id(task, i)) << ',' << csv_field(task.task_id) << ','
          << static_cast<int>(task.labels(i)) << ',' << num(b.point) << ',' << num(b.lower) << ','
          << num(b.upper) << '\n';
    }
  }
  if (!model.bayes) manifest.add_note("point-estimate model: bands collapse to the prediction");
  write_output(manifest, args.out / "predictions.csv", out.str());
  manifest.write();
  return 0;
}

int run_calibrate(const PosteriorArgs& args) {
  check_posterior_args(args);
  const auto model = load_model(args.model);
  const auto data = load_for_model(model, args.data, args.group_column);
  model.check_compatible(data);

  Manifest manifest("calibrate", args.out);
  manifest.set_seed(args.seed);
  manifest.add_input(args.model);
  manifest.add_input(args.data);
  manifest.config() = posterior_config(args, model);

  std::vector<double> y;
  std::vector<double> p;
  std::vector<std::size_t> task_of;
  std::vector<Eigen::Index> row_of;
  for (const auto& task : data.tasks()) {
    const std::size_t t = model.task_index(task.task_id);
    const Eigen::VectorXd prob = model.predict_proba(t, task.design);
    for (Eigen::Index i = 0; i < task.size(); ++i) {
      y.push_back(task.labels(i));
      p.push_back(prob(i));
      task_of.push_back(t);
      row_of.push_back(i);
    }
  }
  const auto curve = calibration_curve(y, p, args.bins);
  const std::size_t B = curve.num_bins();
  std::vector<std::size_t> bin_of(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    bin_of[k] = std::min(static_cast<std::size_t>(p[k] * static_cast<double>(B)), B - 1);
  }

  // Band: the spread over posterior draws of each bin's mean predicted
  // probability, with samples kept in the bins of their point prediction.
  std::vector<std::vector<double>> bin_means(B);
  if (model.bayes) {
    const auto draws = sample_posterior(model.bayes->fit.state, args.samples, args.seed);
    std::vector<Eigen::Index> first_row(data.num_tasks(), 0);
    for (std::size_t s = 0; s < draws.size(); ++s) {
      std::vector<double> sum(B, 0.0);
      std::vector<Eigen::VectorXd> probs;
      for (const auto& task : data.tasks()) {
        const std::size_t t = model.task_index(task.task_id);
        const Eigen::VectorXd w = draws.W[s].row(static_cast<Eigen::Index>(t)).transpose().cwiseProduct(draws.z[s]);
        probs.push_back((task.design * w).unaryExpr([](double v) { return sigmoid(v); }));
      }
      std::size_t k = 0;
      for (std::size_t ti = 0; ti < data.num_tasks(); ++ti) {
        for (Eigen::Index i = 0; i < probs[ti].size(); ++i, ++k) sum[bin_of[k]] += probs[ti](i);
      }
      for (std::size_t b = 0; b < B; ++b) {
        if (curve.counts[b] > 0) bin_means[b].push_back(sum[b] / static_cast<double>(curve.counts[b]));
      }
    }
  }
  const double tail = (1.0 - args.level) / 2.0;

  std::ostringstream out;
  out << "bin,lower_edge,upper_edge,count,mean_predicted,observed_frequency,band_lower,band_upper\n";
  for (std::size_t b = 0; b < B; ++b) {
    double lo = curve.mean_predicted[b];
    double hi = curve.mean_predicted[b];
    if (!bin_means[b].empty()) {
      lo = empirical_quantile(bin_means[b], tail);
      hi = empirical_quantile(bin_means[b], 1.0 - tail);
    }
    out << b << ',' << num(curve.bin_edges[b]) << ',' << num(curve.bin_edges[b + 1]) << ','
        << curve.counts[b] << ',' << num(curve.mean_predicted[b]) << ','
        << num(curve.observed_frequency[b]) << ',' << num(lo) << ',' << num(hi) << '\n';
  }
  write_output(manifest, args.out / "calibration.csv", out.str());
  manifest.write();
  return 0;
}

int run_importance(const PosteriorArgs& args) {
  check_posterior_args(args);
  const auto model = load_model(args.model);
  const auto data = load_for_model(model, args.data, args.group_column);
  model.check_compatible(data);

  Manifest manifest("importance", args.out);
  manifest.set_seed(args.seed);
  manifest.add_input(args.model);
  manifest.add_input(args.data);
  manifest.config() = posterior_config(args, model);

  const Eigen::Index d = model.feature_dim();
  const Eigen::MatrixXd W = model.effective_weights();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(d);

  // Plug-in importance per sample.
  std::ostringstream samples;
  samples << "sample_id,task_id" << feature_header(model) << '\n';
  std::vector<std::vector<double>> plug_in(static_cast<std::size_t>(d));
  for (const auto& task : data.tasks()) {
    const std::size_t t = model.task_index(task.task_id);
    const Eigen::VectorXd w = W.row(static_cast<Eigen::Index>(t)).transpose();
    for (Eigen::Index i = 0; i < task.size(); ++i) {
      const Eigen::VectorXd x = task.design.row(i).transpose();
      const Eigen::VectorXd imp = importance_vector(w, ones, x);
      samples << csv_field(sample_id(task, i)) << ',' << csv_field(task.task_id);
      for (Eigen::Index j = 0; j < d; ++j) {
        samples << ',' << num(imp(j));
        plug_in[static_cast<std::size_t>(j)].push_back(imp(j));
      }
      samples << '\n';
    }
  }

  std::vector<FeatureSummary> summary;
  Eigen::VectorXd phi = model.support_scores();
  std::vector<std::vector<double>> sparsity(static_cast<std::size_t>(d));
  if (model.bayes) {
    const auto& state = model.bayes->fit.state;
    summary = feature_importance(state, data, args.samples, args.seed).summary;
    const Eigen::MatrixXd coef = sparsity_coefficients(state, args.samples, args.seed);
    for (Eigen::Index j = 0; j < d; ++j) {
      for (Eigen::Index s = 0; s < coef.rows(); ++s) sparsity[static_cast<std::size_t>(j)].push_back(coef(s, j));
    }
  } else {
    manifest.add_note("point-estimate model: summaries are over samples of the fitted weights only");
    for (Eigen::Index j = 0; j < d; ++j) {
      auto& v = plug_in[static_cast<std::size_t>(j)];
      double mean = 0.0;
      for (double x : v) mean += x;
      mean = v.empty() ? 0.0 : mean / static_cast<double>(v.size());
      summary.push_back({mean, empirical_quantile(v, 0.05), empirical_quantile(v, 0.5), empirical_quantile(v, 0.95)});
      sparsity[static_cast<std::size_t>(j)].push_back(W.col(j).cwiseAbs().maxCoeff());
    }
  }

  std::ostringstream sum_csv;
  sum_csv << "feature,mean,q05,q50,q95\n";
  for (Eigen::Index j = 0; j < d; ++j) {
    const auto& s = summary[static_cast<std::size_t>(j)];
    sum_csv << csv_field(model.feature_names[static_cast<std::size_t>(j)]) << ',' << num(s.mean) << ','
            << num(s.q05) << ',' << num(s.q50) << ',' << num(s.q95) << '\n';
  }

  std::ostringstream sp_csv;
  sp_csv << "feature,support_score,mean,q05,q50,q95\n";
  for (Eigen::Index j = 0; j < d; ++j) {
    auto& v = sparsity[static_cast<std::size_t>(j)];
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    sp_csv << csv_field(model.feature_names[static_cast<std::size_t>(j)]) << ',' << num(phi(j)) << ','
           << num(mean) << ',' << num(empirical_quantile(v, 0.05)) << ','
           << num(empirical_quantile(v, 0.5)) << ',' << num(empirical_quantile(v, 0.95)) << '\n';
  }

  write_output(manifest, args.out / "importance_summary.csv", sum_csv.str());
  write_output(manifest, args.out / "importance_samples.csv", samples.str());
  write_output(manifest, args.out / "sparsity.csv", sp_csv.str());
  manifest.write();
  return 0;
}

int run_benchmark(const BenchmarkArgs& args) {
  if (args.suite != "synthetic") throw DomainError("unknown suite '" + args.suite + "'");
  if (args.seeds < 1) throw DomainError("--seeds must be at least 1");

  BenchmarkOptions options;
  options.seeds = args.seeds;
  options.base_seed = args.seed;
  options.threads = std::max<std::size_t>(1, args.threads);
  for (const auto& s : args.scenarios) {
    if (!find_scenario(s)) throw DomainError("unknown scenario '" + s + "'");
  }
  options.scenarios = args.scenarios;
  if (!args.methods.empty()) {
    options.methods.clear();
    for (const auto& m : args.methods) {
      const auto parsed = parse_method(m);
      if (!parsed) throw DomainError("unknown method '" + m + "'");
      options.methods.push_back(*parsed);
    }
  }
  options.fit.hyper_grid = hyper_grid_from(args.hyper_grid);
  options.fit.cv.repeats = args.cv_repeats;
  options.fit.cv.folds = args.cv_folds;

  Manifest manifest("benchmark", args.out);
  manifest.set_seed(args.seed);
  json scenarios = json::array();
  if (options.scenarios.empty()) {
    for (const auto& s : list_scenarios()) scenarios.push_back(s.name);
  } else {
    for (const auto& s : options.scenarios) scenarios.push_back(s);
  }
  json methods = json::array();
  for (Method m : options.methods) methods.push_back(method_name(m));
  json grid = json::array();
  for (const auto& c : options.fit.hyper_grid) grid.push_back(c.label());
  manifest.config() = {{"suite", args.suite},        {"seeds", args.seeds},
                       {"scenarios", scenarios},     {"methods", methods},
                       {"cv_repeats", args.cv_repeats}, {"cv_folds", args.cv_folds},
                       {"hyper_grid", grid},         {"threads", options.threads}};

  const auto cells = bmtl::run_benchmark(options);
  for (const auto& c : cells) {
    if (!c.ok) manifest.add_note(c.scenario + "/" + method_name(c.method) + "/" + std::to_string(c.seed) + ": " + c.error);
  }
  write_output(manifest, args.out / "benchmark_cells.csv", benchmark_cells_csv(cells));
  write_output(manifest, args.out / "benchmark_summary.csv", benchmark_summary_csv(cells));
  manifest.write();
  return 0;
}

}  // namespace bmtl::cli
