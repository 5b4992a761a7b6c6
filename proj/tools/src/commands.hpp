#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace bmtl::cli {

namespace fs = std::filesystem;

struct SimulateArgs {
  std::string scenario;
  std::uint64_t seed = 0;
  fs::path out;
};

struct LoadArgs {
  bool clr = false;
  double pseudocount = 1.0;
  bool intercept = false;
  std::optional<std::string> group_column;
};

struct FitArgs {
  fs::path data;
  std::string method = "bayes-mtl";
  LoadArgs load;
  std::string hyper_grid;   // empty: built-in default
  std::string lambda_grid;  // empty: derived from the data
  std::size_t cv_repeats = 10;
  std::size_t cv_folds = 5;
  std::uint64_t seed = 0;
  int max_sweeps = 500;
  double tol = 1e-6;
  std::string init = "zeros";
  std::size_t threads = 1;
  fs::path out;
};

struct EvaluateArgs {
  fs::path model;
  fs::path data;
  std::optional<fs::path> truth;
  bool recovery = false;
  std::string group_column = "group_id";
  fs::path out;
};

struct PosteriorArgs {
  fs::path model;
  fs::path data;
  std::size_t samples = 1000;
  double level = 0.9;
  std::size_t bins = 10;
  std::uint64_t seed = 0;
  std::string point = "plug-in";
  std::string group_column = "group_id";
  fs::path out;
};

struct BenchmarkArgs {
  std::string suite = "synthetic";
  std::size_t seeds = 10;
  std::uint64_t seed = 0;
  std::vector<std::string> scenarios;
  std::vector<std::string> methods;
  std::size_t cv_repeats = 10;
  std::size_t cv_folds = 5;
  std::string hyper_grid;
  std::size_t threads = 1;
  fs::path out;
};

int run_simulate(const SimulateArgs& args);
int run_fit(const FitArgs& args);
int run_evaluate(const EvaluateArgs& args);
int run_predict(const PosteriorArgs& args);
int run_calibrate(const PosteriorArgs& args);
int run_importance(const PosteriorArgs& args);
int run_benchmark(const BenchmarkArgs& args);

}  // namespace bmtl::cli
