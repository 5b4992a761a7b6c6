#include "bmtl/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>

#include <boost/crc.hpp>
#include <boost/tokenizer.hpp>
#include <nlohmann/json.hpp>

#include "bmtl/errors.hpp"
#include "bmtl/metrics.hpp"
#include "bmtl/prediction.hpp"

namespace bmtl {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kLinearSelectionTol = 1e-8;

using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;

std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  try {
    Tokenizer tok(line);
    return {tok.begin(), tok.end()};
  } catch (const boost::escaped_list_error& e) {
    throw ParseError(std::string("malformed CSV field: ") + e.what(), line_no);
  }
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\\") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

double parse_double(const std::string& text, std::size_t line_no, const std::string& column) {
  const char* first = text.data();
  const char* last = first + text.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && last[-1] == ' ') --last;
  if (first < last && *first == '+') ++first;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || first == last) {
    throw ParseError("column '" + column + "': cannot parse '" + text + "' as a number", line_no);
  }
  return value;
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  return in;
}

bool read_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

struct Row {
  std::string sample_id;
  std::string task_id;
  std::string group;
  double label;
  std::vector<double> x;
  std::size_t line;
};

struct Table {
  std::vector<std::string> feature_names;
  std::vector<Row> rows;
};

Table read_table(const fs::path& path, const LoadOptions& options, bool need_group) {
  auto in = open_input(path);
  std::string line;
  std::size_t line_no = 1;
  if (!read_line(in, line)) throw ParseError("empty file, header row missing", 1);
  const auto header = split_csv_line(line, line_no);

  std::map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (!index.emplace(header[c], c).second) {
      throw ParseError("duplicate column '" + header[c] + "'", line_no);
    }
  }
  auto require = [&](const std::string& name) {
    const auto it = index.find(name);
    if (it == index.end()) throw ParseError("missing required column '" + name + "'", line_no);
    return it->second;
  };
  const std::size_t c_sample = require("sample_id");
  const std::size_t c_task = require("task_id");
  const std::size_t c_label = require("label");
  std::optional<std::size_t> c_group;
  if (need_group) {
    c_group = require(options.group_column);
  } else if (const auto it = index.find(options.group_column); it != index.end()) {
    c_group = it->second;
  }

  Table table;
  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == c_sample || c == c_task || c == c_label || (c_group && c == *c_group)) continue;
    feature_cols.push_back(c);
    table.feature_names.push_back(header[c]);
  }
  if (feature_cols.empty()) throw ParseError("no feature columns", line_no);

  while (read_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line, line_no);
    if (fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       line_no);
    }
    Row row;
    row.line = line_no;
    row.sample_id = fields[c_sample];
    row.task_id = fields[c_task];
    if (row.task_id.empty()) throw ParseError("empty task_id", line_no);
    if (c_group) row.group = fields[*c_group];
    row.label = parse_double(fields[c_label], line_no, "label");
    if (row.label != 0.0 && row.label != 1.0) {
      throw ParseError("label must be 0 or 1, found '" + fields[c_label] + "'", line_no);
    }
    row.x.reserve(feature_cols.size());
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      const double v = parse_double(fields[feature_cols[k]], line_no, table.feature_names[k]);
      if (!std::isfinite(v)) throw ParseError("non-finite value in '" + table.feature_names[k] + "'", line_no);
      if (options.apply_clr && v < 0.0) {
        throw ParseError("negative count in '" + table.feature_names[k] + "'", line_no);
      }
      row.x.push_back(v);
    }
    table.rows.push_back(std::move(row));
  }
  if (table.rows.empty()) throw ParseError("no data rows", line_no);
  return table;
}

MultitaskDataset build_dataset(const std::vector<const Row*>& rows,
                               std::vector<std::string> feature_names, const LoadOptions& options) {
  if (options.apply_clr && !(options.pseudocount >= 0.0)) {
    throw DomainError("pseudocount must be non-negative");
  }
  std::vector<std::string> order;
  std::map<std::string, std::vector<const Row*>> by_task;
  for (const Row* r : rows) {
    auto& bucket = by_task[r->task_id];
    if (bucket.empty()) order.push_back(r->task_id);
    bucket.push_back(r);
  }

  const auto raw_d = static_cast<Eigen::Index>(feature_names.size());
  const Eigen::Index d = raw_d + (options.append_intercept ? 1 : 0);
  if (options.append_intercept) feature_names.emplace_back(kInterceptFeature);

  std::vector<TaskData> tasks;
  for (const auto& id : order) {
    const auto& members = by_task[id];
    const auto n = static_cast<Eigen::Index>(members.size());
    TaskData task{id, Eigen::MatrixXd(n, d), Eigen::VectorXd(n), {}};
    for (Eigen::Index i = 0; i < n; ++i) {
      const Row& r = *members[static_cast<std::size_t>(i)];
      Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(r.x.data(), raw_d);
      if (options.apply_clr) {
        try {
          x = clr_transform(x.array() + options.pseudocount);
        } catch (const DomainError& e) {
          throw ParseError(std::string("CLR failed: ") + e.what(), r.line);
        }
      }
      task.design.row(i).head(raw_d) = x.transpose();
      if (options.append_intercept) task.design(i, raw_d) = 1.0;
      task.labels[i] = r.label;
      task.sample_ids.push_back(r.sample_id);
    }
    tasks.push_back(std::move(task));
  }
  return MultitaskDataset(std::move(tasks), std::move(feature_names));
}

std::vector<std::string> feature_names_or_default(const MultitaskDataset& data) {
  if (!data.feature_names().empty()) return data.feature_names();
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < data.feature_dim(); ++j) names.push_back("f" + std::to_string(j + 1));
  return names;
}

void write_rows(std::ostringstream& out, const MultitaskDataset& data, const std::string* group) {
  for (const auto& task : data.tasks()) {
    for (Eigen::Index i = 0; i < task.size(); ++i) {
      const auto row = static_cast<std::size_t>(i);
      const std::string id =
          task.sample_ids.empty() ? task.task_id + "_" + std::to_string(i + 1) : task.sample_ids[row];
      out << csv_field(id) << ',' << csv_field(task.task_id) << ','
          << (task.labels[i] == 1.0 ? "1" : "0");
      if (group) out << ',' << csv_field(*group);
      for (Eigen::Index j = 0; j < task.design.cols(); ++j) out << ',' << format_double(task.design(i, j));
      out << '\n';
    }
  }
}

void write_header(std::ostringstream& out, const std::vector<std::string>& names,
                  const std::string* group_column) {
  out << "sample_id,task_id,label";
  if (group_column) out << ',' << csv_field(*group_column);
  for (const auto& n : names) out << ',' << csv_field(n);
  out << '\n';
}

std::string crc_hex(const void* data, std::size_t size) {
  boost::crc_32_type crc;
  crc.process_bytes(data, size);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", static_cast<unsigned>(crc.checksum()));
  return std::string("crc32:") + buf;
}

// JSON helpers. Doubles are emitted by nlohmann in shortest round-trip form.

json to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_json(Eigen::VectorXd(m.row(r).transpose())));
  return rows;
}

Eigen::VectorXd vector_from(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Eigen::MatrixXd matrix_from(const json& j, Eigen::Index cols_if_empty = 0) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : cols_if_empty;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j.at(static_cast<std::size_t>(r));
    if (static_cast<Eigen::Index>(row.size()) != cols) throw ArchiveError("ragged matrix in archive");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

const char* init_mode_name(InitMode mode) {
  return mode == InitMode::zeros ? "zeros" : "small_random";
}

InitMode init_mode_from(const std::string& name) {
  if (name == "zeros") return InitMode::zeros;
  if (name == "small_random") return InitMode::small_random;
  throw ArchiveError("unknown init_mode '" + name + "'");
}

json bayes_to_json(const BayesModel& m) {
  const auto& s = m.fit.state;
  json sigmas = json::array();
  for (const auto& S : s.Sigmas) sigmas.push_back(to_json(S));
  return {
      {"hyperparameters",
       {{"alpha0", m.hyper.alpha0}, {"beta0", m.hyper.beta0}, {"v0", m.hyper.v0}, {"V0", to_json(m.hyper.V0)}}},
      {"fit_config",
       {{"max_sweeps", m.config.max_sweeps},
        {"elbo_rel_tol", m.config.elbo_rel_tol},
        {"seed", m.config.seed},
        {"init_mode", init_mode_name(m.config.init_mode)}}},
      {"state",
       {{"alpha", s.alpha},
        {"beta", s.beta},
        {"v", s.v},
        {"V", to_json(s.V)},
        {"phi", to_json(s.phi)},
        {"M", to_json(s.M)},
        {"Sigmas", sigmas}}},
      {"elbo_trace", m.fit.elbo_trace},
      {"converged", m.fit.converged},
      {"sweeps_run", m.fit.sweeps_run},
  };
}

BayesModel bayes_from_json(const json& j, Eigen::Index T, Eigen::Index d) {
  BayesModel m;
  const auto& h = j.at("hyperparameters");
  m.hyper.alpha0 = h.at("alpha0").get<double>();
  m.hyper.beta0 = h.at("beta0").get<double>();
  m.hyper.v0 = h.at("v0").get<double>();
  m.hyper.V0 = matrix_from(h.at("V0"));
  const auto& c = j.at("fit_config");
  m.config.max_sweeps = c.at("max_sweeps").get<int>();
  m.config.elbo_rel_tol = c.at("elbo_rel_tol").get<double>();
  m.config.seed = c.at("seed").get<std::uint64_t>();
  m.config.init_mode = init_mode_from(c.at("init_mode").get<std::string>());
  const auto& s = j.at("state");
  auto& st = m.fit.state;
  st.alpha = s.at("alpha").get<double>();
  st.beta = s.at("beta").get<double>();
  st.v = s.at("v").get<double>();
  st.V = matrix_from(s.at("V"));
  st.phi = vector_from(s.at("phi"));
  st.M = matrix_from(s.at("M"), d);
  for (const auto& S : s.at("Sigmas")) st.Sigmas.push_back(matrix_from(S));
  m.fit.elbo_trace = j.at("elbo_trace").get<std::vector<double>>();
  m.fit.converged = j.at("converged").get<bool>();
  m.fit.sweeps_run = j.at("sweeps_run").get<int>();
  if (st.M.rows() != T || st.M.cols() != d) throw ArchiveError("state shape does not match task/feature lists");
  st.validate();
  return m;
}

json linear_to_json(const LinearModel& m) {
  json models = json::array();
  for (const auto& l : m.models) {
    models.push_back({{"task_id", l.task_id},
                      {"weights", to_json(l.weights)},
                      {"intercept", l.intercept},
                      {"lambda", l.lambda},
                      {"converged", l.converged},
                      {"iterations", l.iterations}});
  }
  return {{"pooled", m.pooled}, {"models", models}};
}

LinearModel linear_from_json(const json& j, Eigen::Index d) {
  LinearModel m;
  m.pooled = j.at("pooled").get<bool>();
  for (const auto& e : j.at("models")) {
    L1LogisticModel l;
    l.task_id = e.at("task_id").get<std::string>();
    l.weights = vector_from(e.at("weights"));
    l.intercept = e.at("intercept").get<double>();
    l.lambda = e.at("lambda").get<double>();
    l.converged = e.at("converged").get<bool>();
    l.iterations = e.at("iterations").get<int>();
    l.scope = m.pooled ? TaskScope::pooled : TaskScope::single;
    if (l.weights.size() != d) throw ArchiveError("linear model weights do not match the feature list");
    m.models.push_back(std::move(l));
  }
  if (m.models.empty()) throw ArchiveError("linear model list is empty");
  return m;
}

}  // namespace

Eigen::VectorXd clr_transform(const Eigen::VectorXd& counts) {
  if (counts.size() == 0) throw DomainError("clr_transform: empty vector");
  for (Eigen::Index j = 0; j < counts.size(); ++j) {
    if (!(counts[j] > 0.0) || !std::isfinite(counts[j])) {
      throw DomainError("clr_transform: entries must be positive and finite");
    }
  }
  const Eigen::VectorXd logs = counts.array().log();
  return logs.array() - logs.mean();
}

MultitaskDataset load_dataset(const fs::path& path, const LoadOptions& options) {
  auto table = read_table(path, options, false);
  std::vector<const Row*> rows;
  for (const auto& r : table.rows) rows.push_back(&r);
  return build_dataset(rows, std::move(table.feature_names), options);
}

std::vector<DatasetGroup> load_grouped_datasets(const fs::path& path, const LoadOptions& options) {
  auto table = read_table(path, options, true);
  std::vector<std::string> order;
  std::map<std::string, std::vector<const Row*>> by_group;
  for (const auto& r : table.rows) {
    auto& bucket = by_group[r.group];
    if (bucket.empty()) order.push_back(r.group);
    bucket.push_back(&r);
  }
  std::vector<DatasetGroup> out;
  for (const auto& g : order) out.push_back({g, build_dataset(by_group[g], table.feature_names, options)});
  return out;
}

void save_dataset(const MultitaskDataset& data, const fs::path& path) {
  std::ostringstream out;
  write_header(out, feature_names_or_default(data), nullptr);
  write_rows(out, data, nullptr);
  write_file_atomic(path, out.str());
}

void save_grouped_datasets(const std::vector<DatasetGroup>& groups, const fs::path& path,
                           const std::string& group_column) {
  if (groups.empty()) throw ShapeError("no groups to save");
  const auto names = feature_names_or_default(groups.front().dataset);
  std::ostringstream out;
  write_header(out, names, &group_column);
  for (const auto& g : groups) {
    if (feature_names_or_default(g.dataset) != names) throw ShapeError("groups have different features");
    write_rows(out, g.dataset, &g.group);
  }
  write_file_atomic(path, out.str());
}

void save_truth(const GroundTruth& truth, const MultitaskDataset& data, const fs::path& path) {
  const auto T = static_cast<Eigen::Index>(data.num_tasks());
  const Eigen::Index d = data.feature_dim();
  if (truth.W0.rows() != T || truth.W0.cols() != d || truth.z0.size() != d || truth.Sigma0.rows() != T) {
    throw ShapeError("ground truth does not match the dataset");
  }
  const auto names = feature_names_or_default(data);
  std::ostringstream out;
  out << "entry,task_id";
  for (const auto& n : names) out << ',' << csv_field(n);
  out << '\n';
  auto pad = [&](Eigen::Index written) {
    for (Eigen::Index k = written; k < d; ++k) out << ',';
    out << '\n';
  };
  out << "z0,";
  for (Eigen::Index j = 0; j < d; ++j) out << ',' << (truth.z0[j] == 1.0 ? "1" : "0");
  out << '\n';
  out << "theta0,," << format_double(truth.theta0);
  pad(1);
  for (Eigen::Index t = 0; t < T; ++t) {
    out << "w0," << csv_field(data.task(static_cast<std::size_t>(t)).task_id);
    for (Eigen::Index j = 0; j < d; ++j) out << ',' << format_double(truth.W0(t, j));
    out << '\n';
  }
  for (Eigen::Index t = 0; t < T; ++t) {
    out << "sigma0," << csv_field(data.task(static_cast<std::size_t>(t)).task_id);
    for (Eigen::Index k = 0; k < T; ++k) out << ',' << format_double(truth.Sigma0(t, k));
    pad(T);
  }
  write_file_atomic(path, out.str());
}

GroundTruth load_truth(const fs::path& path) {
  auto in = open_input(path);
  std::string line;
  std::size_t line_no = 1;
  if (!read_line(in, line)) throw ParseError("empty truth file", 1);
  const auto header = split_csv_line(line, line_no);
  if (header.size() < 3 || header[0] != "entry" || header[1] != "task_id") {
    throw ParseError("truth header must start with entry,task_id", line_no);
  }
  const auto d = static_cast<Eigen::Index>(header.size() - 2);

  std::vector<std::vector<double>> w_rows;
  std::vector<std::vector<double>> sigma_rows;
  std::optional<Eigen::VectorXd> z0;
  std::optional<double> theta0;
  auto values = [&](const std::vector<std::string>& fields, std::size_t count) {
    std::vector<double> out;
    for (std::size_t k = 0; k < count; ++k) {
      if (k + 2 >= fields.size()) throw ParseError("too few values", line_no);
      out.push_back(parse_double(fields[k + 2], line_no, header[std::min(k + 2, header.size() - 1)]));
    }
    return out;
  };
  std::vector<std::vector<std::string>> sigma_fields;
  while (read_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line, line_no);
    const std::string& entry = fields.at(0);
    if (entry == "z0") {
      const auto v = values(fields, static_cast<std::size_t>(d));
      z0 = Eigen::Map<const Eigen::VectorXd>(v.data(), d);
    } else if (entry == "theta0") {
      theta0 = values(fields, 1)[0];
    } else if (entry == "w0") {
      w_rows.push_back(values(fields, static_cast<std::size_t>(d)));
    } else if (entry == "sigma0") {
      sigma_fields.push_back(fields);
    } else {
      throw ParseError("unknown truth entry '" + entry + "'", line_no);
    }
  }
  if (!z0 || !theta0 || w_rows.empty()) throw ParseError("truth file lacks z0, theta0 or w0 rows", line_no);
  const auto T = static_cast<Eigen::Index>(w_rows.size());
  GroundTruth truth;
  truth.z0 = *z0;
  truth.theta0 = *theta0;
  truth.W0.resize(T, d);
  for (Eigen::Index t = 0; t < T; ++t) {
    truth.W0.row(t) = Eigen::Map<const Eigen::RowVectorXd>(w_rows[static_cast<std::size_t>(t)].data(), d);
  }
  truth.Sigma0 = Eigen::MatrixXd::Identity(T, T);
  if (!sigma_fields.empty()) {
    if (static_cast<Eigen::Index>(sigma_fields.size()) != T) throw ParseError("sigma0 needs T rows", line_no);
    for (Eigen::Index t = 0; t < T; ++t) {
      const auto v = values(sigma_fields[static_cast<std::size_t>(t)], static_cast<std::size_t>(T));
      truth.Sigma0.row(t) = Eigen::Map<const Eigen::RowVectorXd>(v.data(), T);
    }
  }
  for (Eigen::Index j = 0; j < d; ++j) {
    if (truth.z0[j] != 0.0 && truth.z0[j] != 1.0) throw ParseError("z0 must be binary", line_no);
  }
  return truth;
}

std::string dataset_fingerprint(const MultitaskDataset& data) {
  boost::crc_32_type crc;
  auto add_string = [&](const std::string& s) { crc.process_bytes(s.c_str(), s.size() + 1); };
  for (const auto& n : data.feature_names()) add_string(n);
  for (const auto& task : data.tasks()) {
    add_string(task.task_id);
    crc.process_bytes(task.labels.data(), sizeof(double) * static_cast<std::size_t>(task.labels.size()));
    crc.process_bytes(task.design.data(), sizeof(double) * static_cast<std::size_t>(task.design.size()));
  }
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", static_cast<unsigned>(crc.checksum()));
  return std::string("crc32:") + buf;
}

std::string file_checksum(const fs::path& path) {
  auto in = open_input(path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  return crc_hex(bytes.data(), bytes.size());
}

std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_file_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
    out << text;
    out.flush();
    if (!out) throw Error("failed writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

Eigen::VectorXd ModelArchive::predict_proba(std::size_t task, const Eigen::MatrixXd& X) const {
  if (task >= num_tasks()) throw ShapeError("task index out of range");
  if (X.cols() != feature_dim()) throw ShapeError("design matrix must have d columns");
  if (bayes) return bmtl::predict_proba(bayes->fit.state, task, X);
  if (linear) {
    const auto& l = linear->pooled ? linear->models.front() : linear->models.at(task);
    return l.predict_proba(X);
  }
  throw ArchiveError("archive holds no model");
}

Eigen::MatrixXd ModelArchive::effective_weights() const {
  if (bayes) return bayes->fit.state.effective_weights();
  if (linear) return stacked_weights(linear->models, num_tasks());
  throw ArchiveError("archive holds no model");
}

Eigen::VectorXd ModelArchive::support_scores() const {
  if (bayes) return bayes->fit.state.phi;
  return effective_weights().cwiseAbs().colwise().maxCoeff().transpose();
}

Eigen::VectorXd ModelArchive::selected_support() const {
  const Eigen::VectorXd scores = support_scores();
  if (bayes) return (scores.array() >= 0.5).cast<double>();
  return (scores.array() > kLinearSelectionTol).cast<double>();
}

Eigen::MatrixXd ModelArchive::thresholded_weights() const {
  if (bayes) return bmtl::thresholded_weights(bayes->fit.state.M, bayes->fit.state.phi, 0.5);
  return effective_weights();
}

void ModelArchive::check_compatible(const MultitaskDataset& data) const {
  if (data.feature_dim() != feature_dim()) {
    throw ShapeError("data has " + std::to_string(data.feature_dim()) + " features, model expects " +
                     std::to_string(feature_dim()));
  }
  if (!data.feature_names().empty() && data.feature_names() != feature_names) {
    throw ShapeError("data feature names differ from the model's");
  }
  for (const auto& task : data.tasks()) (void)task_index(task.task_id);
}

std::size_t ModelArchive::task_index(const std::string& task_id) const {
  const auto it = std::find(task_ids.begin(), task_ids.end(), task_id);
  if (it == task_ids.end()) throw ShapeError("task '" + task_id + "' is not part of the model");
  return static_cast<std::size_t>(it - task_ids.begin());
}

void save_model(const ModelArchive& model, const fs::path& path) {
  if (model.bayes.has_value() == model.linear.has_value()) {
    throw ArchiveError("archive must hold exactly one model");
  }
  json content = {
      {"method", model.method},
      {"group", model.group},
      {"task_ids", model.task_ids},
      {"feature_names", model.feature_names},
      {"data_fingerprint", model.data_fingerprint},
      {"preprocessing",
       {{"apply_clr", model.preprocessing.apply_clr},
        {"pseudocount", model.preprocessing.pseudocount},
        {"intercept", model.preprocessing.intercept}}},
  };
  if (model.bayes) content["bayes"] = bayes_to_json(*model.bayes);
  if (model.linear) content["linear"] = linear_to_json(*model.linear);

  const std::string body = content.dump();
  const json doc = {{"format", "bmtl-model"},
                    {"format_version", ModelArchive::kFormatVersion},
                    {"checksum", crc_hex(body.data(), body.size())},
                    {"content", content}};
  write_file_atomic(path, doc.dump(1) + "\n");
}

ModelArchive load_model(const fs::path& path) {
  auto in = open_input(path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ArchiveError("'" + path.string() + "' is not a valid model archive: " + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != "bmtl-model") throw ArchiveError("not a bmtl model archive");
    const int version = doc.at("format_version").get<int>();
    if (version != ModelArchive::kFormatVersion) {
      throw ArchiveError("unsupported archive version " + std::to_string(version) + " (expected " +
                         std::to_string(ModelArchive::kFormatVersion) + ")");
    }
    const auto& content = doc.at("content");
    const std::string body = content.dump();
    if (crc_hex(body.data(), body.size()) != doc.at("checksum").get<std::string>()) {
      throw ArchiveError("checksum mismatch: '" + path.string() + "' is corrupted");
    }

    ModelArchive m;
    m.method = content.at("method").get<std::string>();
    m.group = content.at("group").get<std::string>();
    m.task_ids = content.at("task_ids").get<std::vector<std::string>>();
    m.feature_names = content.at("feature_names").get<std::vector<std::string>>();
    m.data_fingerprint = content.at("data_fingerprint").get<std::string>();
    const auto& p = content.at("preprocessing");
    m.preprocessing.apply_clr = p.at("apply_clr").get<bool>();
    m.preprocessing.pseudocount = p.at("pseudocount").get<double>();
    m.preprocessing.intercept = p.at("intercept").get<bool>();
    const auto T = static_cast<Eigen::Index>(m.task_ids.size());
    if (content.contains("bayes")) m.bayes = bayes_from_json(content.at("bayes"), T, m.feature_dim());
    if (content.contains("linear")) m.linear = linear_from_json(content.at("linear"), m.feature_dim());
    if (m.bayes.has_value() == m.linear.has_value()) throw ArchiveError("archive must hold exactly one model");
    return m;
  } catch (const json::exception& e) {
    throw ArchiveError(std::string("malformed model archive: ") + e.what());
  } catch (const ShapeError& e) {
    throw ArchiveError(std::string("inconsistent model archive: ") + e.what());
  } catch (const DomainError& e) {
    throw ArchiveError(std::string("inconsistent model archive: ") + e.what());
  }
}

}  // namespace bmtl
