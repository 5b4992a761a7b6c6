#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace bmtl::cli {

/// Record of one command invocation, written next to its outputs.
class Manifest {
 public:
  Manifest(std::string command, std::filesystem::path out_dir);

  nlohmann::json& config() { return config_; }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);
  void add_note(std::string note) { notes_.push_back(std::move(note)); }

  /// Writes <out_dir>/<command>.manifest.json atomically and returns its path.
  std::filesystem::path write() const;

 private:
  std::string command_;
  std::filesystem::path out_dir_;
  nlohmann::json config_ = nlohmann::json::object();
  std::uint64_t seed_ = 0;
  std::vector<std::pair<std::string, std::string>> inputs_;
  std::vector<std::pair<std::string, std::string>> outputs_;
  std::vector<std::string> notes_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace bmtl::cli
