#include "manifest.hpp"

#include <ctime>

#include "bmtl/dataio.hpp"

namespace bmtl::cli {

namespace {
constexpr const char* kToolVersion = "1.0.0";
}

Manifest::Manifest(std::string command, std::filesystem::path out_dir)
    : command_(std::move(command)), out_dir_(std::move(out_dir)), start_(std::chrono::steady_clock::now()) {}

void Manifest::add_input(const std::filesystem::path& path) {
  inputs_.emplace_back(path.string(), file_checksum(path));
}

void Manifest::add_output(const std::filesystem::path& path) {
  outputs_.emplace_back(path.string(), file_checksum(path));
}

std::filesystem::path Manifest::write() const {
  using nlohmann::json;
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  json inputs = json::array();
  for (const auto& [p, c] : inputs_) inputs.push_back({{"path", p}, {"checksum", c}});
  json outputs = json::array();
  for (const auto& [p, c] : outputs_) outputs.push_back({{"path", p}, {"checksum", c}});

  char stamp[32] = "";
  const std::time_t now = std::time(nullptr);
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));

  const json doc = {
      {"command", command_},
      {"config", config_},
      {"seed", seed_},
      {"inputs", inputs},
      {"outputs", outputs},
      {"notes", notes_},
      {"finished_at", stamp},
      {"wall_clock_seconds", seconds},
      {"versions", {{"bmtl", kToolVersion}, {"model_archive_format", ModelArchive::kFormatVersion}}},
  };
  const auto path = out_dir_ / (command_ + ".manifest.json");
  write_file_atomic(path, doc.dump(2) + "\n");
  return path;
}

}  // namespace bmtl::cli
