#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bmtl/experiment.hpp"
#include "bmtl/synthgen.hpp"
#include "commands.hpp"

namespace {

std::vector<std::string> scenario_names() {
  std::vector<std::string> names;
  for (const auto& s : bmtl::list_scenarios()) names.push_back(s.name);
  return names;
}

const std::vector<std::string> kMethods = {"bayes-mtl", "stl-lc", "pooled-lc"};

void add_posterior_options(CLI::App* cmd, bmtl::cli::PosteriorArgs& a, bool bins) {
  cmd->add_option("--model", a.model, "Model archive")->required()->check(CLI::ExistingFile);
  cmd->add_option("--data", a.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  cmd->add_option("--samples", a.samples, "Posterior draws")->capture_default_str();
  cmd->add_option("--level", a.level, "Credible level")->capture_default_str();
  if (bins) cmd->add_option("--bins", a.bins, "Calibration bins")->capture_default_str();
  cmd->add_option("--seed", a.seed, "Sampling seed")->capture_default_str();
  cmd->add_option("--point", a.point, "Point estimate")
      ->check(CLI::IsMember({"plug-in", "mc-mean"}))
      ->capture_default_str();
  cmd->add_option("--group-column", a.group_column, "Group column of grouped data")->capture_default_str();
  cmd->add_option("--out", a.out, "Output directory")->required();
}

}  // namespace

int main(int argc, char** argv) {
  using namespace bmtl::cli;
  CLI::App app{"Sparse Bayesian multitask logistic regression"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic benchmark dataset");
  simulate->add_option("--scenario", sim.scenario, "Preset name")
      ->required()
      ->check(CLI::IsMember(scenario_names()));
  simulate->add_option("--seed", sim.seed, "Generator seed")->capture_default_str();
  simulate->add_option("--out", sim.out, "Output directory")->required();

  FitArgs fit;
  fit.threads = bmtl::default_thread_count();
  auto* fitc = app.add_subcommand("fit", "Fit a model with cross-validated hyperparameters");
  fitc->add_option("--data", fit.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  fitc->add_option("--method", fit.method, "Model")->check(CLI::IsMember(kMethods))->capture_default_str();
  fitc->add_option("--group-column", fit.load.group_column, "Fit one model per value of this column");
  fitc->add_option("--hyper-grid", fit.hyper_grid, "ratio:concentration:v0_scale[:v0],... or 'default'");
  fitc->add_option("--lambda-grid", fit.lambda_grid, "Comma-separated L1 penalties");
  fitc->add_option("--cv-repeats", fit.cv_repeats, "Cross-validation repeats")->capture_default_str();
  fitc->add_option("--cv-folds", fit.cv_folds, "Cross-validation folds")->capture_default_str();
  fitc->add_option("--seed", fit.seed, "Seed")->capture_default_str();
  fitc->add_flag("--clr", fit.load.clr, "Apply the centered log-ratio transform to counts");
  fitc->add_option("--pseudocount", fit.load.pseudocount, "Added to counts before CLR")->capture_default_str();
  fitc->add_flag("--intercept", fit.load.intercept, "Append a constant feature");
  fitc->add_option("--max-sweeps", fit.max_sweeps, "Coordinate ascent sweep limit")->capture_default_str();
  fitc->add_option("--tol", fit.tol, "Relative ELBO tolerance")->capture_default_str();
  fitc->add_option("--init", fit.init, "Initial means")
      ->check(CLI::IsMember({"zeros", "small-random"}))
      ->capture_default_str();
  fitc->add_option("--threads", fit.threads, "Worker threads")->capture_default_str();
  fitc->add_option("--out", fit.out, "Output directory")->required();

  EvaluateArgs ev;
  std::string truth;
  auto* evaluate = app.add_subcommand("evaluate", "Score a model's predictions and recovery");
  evaluate->add_option("--model", ev.model, "Model archive")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--data", ev.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--truth", truth, "Ground truth CSV")->check(CLI::ExistingFile);
  evaluate->add_flag("--recovery", ev.recovery, "Require support and weight recovery scores");
  evaluate->add_option("--group-column", ev.group_column, "Group column of grouped data")->capture_default_str();
  evaluate->add_option("--out", ev.out, "Output directory")->required();

  PosteriorArgs pred;
  auto* predict = app.add_subcommand("predict", "Predictive probabilities with credible bands");
  add_posterior_options(predict, pred, false);
  PosteriorArgs cal;
  auto* calibrate = app.add_subcommand("calibrate", "Reliability curve");
  add_posterior_options(calibrate, cal, true);
  PosteriorArgs imp;
  auto* importance = app.add_subcommand("importance", "Feature importance and sparsity coefficients");
  add_posterior_options(importance, imp, false);

  BenchmarkArgs bench;
  bench.threads = bmtl::default_thread_count();
  auto* benchmark = app.add_subcommand("benchmark", "Synthetic recovery benchmark");
  benchmark->add_option("--suite", bench.suite, "Suite")->check(CLI::IsMember({"synthetic"}))->capture_default_str();
  benchmark->add_option("--seeds", bench.seeds, "Seeds per scenario and method")->capture_default_str();
  benchmark->add_option("--seed", bench.seed, "Base seed")->capture_default_str();
  benchmark->add_option("--scenarios", bench.scenarios, "Subset of presets")
      ->check(CLI::IsMember(scenario_names()))
      ->delimiter(',');
  benchmark->add_option("--methods", bench.methods, "Subset of methods")->check(CLI::IsMember(kMethods))->delimiter(',');
  benchmark->add_option("--cv-repeats", bench.cv_repeats, "Cross-validation repeats")->capture_default_str();
  benchmark->add_option("--cv-folds", bench.cv_folds, "Cross-validation folds")->capture_default_str();
  benchmark->add_option("--hyper-grid", bench.hyper_grid, "Hyperparameter grid");
  benchmark->add_option("--threads", bench.threads, "Worker threads")->capture_default_str();
  benchmark->add_option("--out", bench.out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return run_simulate(sim);
    if (fitc->parsed()) return run_fit(fit);
    if (evaluate->parsed()) {
      if (!truth.empty()) ev.truth = truth;
      return run_evaluate(ev);
    }
    if (predict->parsed()) return run_predict(pred);
    if (calibrate->parsed()) return run_calibrate(cal);
    if (importance->parsed()) return run_importance(imp);
    if (benchmark->parsed()) return run_benchmark(bench);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
