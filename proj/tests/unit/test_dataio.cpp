#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <boost/multiprecision/cpp_dec_float.hpp>

#include "bmtl/dataio.hpp"
#include "bmtl/errors.hpp"
#include "bmtl/inference.hpp"
#include "instances.hpp"

using namespace bmtl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("bmtl_dataio_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& name) const { return path / name; }
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t parse_error_line(const fs::path& p, const LoadOptions& opt = {}) {
  try {
    load_dataset(p, opt);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

ModelArchive bayes_archive(const MultitaskDataset& data, std::size_t sweeps) {
  ModelArchive a;
  a.method = "bayes-mtl";
  for (const auto& t : data.tasks()) a.task_ids.push_back(t.task_id);
  a.feature_names = data.feature_names();
  a.data_fingerprint = dataset_fingerprint(data);
  BayesModel b;
  b.hyper = Hyperparameters::from_ratio(0.3, 2.0, static_cast<double>(data.num_tasks()) + 1.0, 1.0,
                                        data.num_tasks());
  b.config.max_sweeps = static_cast<int>(sweeps);
  b.fit = cavi_fit(data, b.hyper, b.config);
  a.bayes = b;
  return a;
}

}  // namespace

TEST_CASE("centered log ratio") {
  const auto c = clr_transform(Eigen::Vector4d(4, 4, 4, 4));
  CHECK(c.cwiseAbs().maxCoeff() == 0.0);

  const auto two = clr_transform(Eigen::Vector2d(1.0, std::exp(2.0)));
  CHECK(two[0] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(two[1] == doctest::Approx(1.0).epsilon(1e-15));

  // 50-digit reference for log(x) - log(24)/3.
  using Big = boost::multiprecision::cpp_dec_float_50;
  const auto r = clr_transform(Eigen::Vector3d(2, 3, 4));
  const double xs[] = {2, 3, 4};
  for (int k = 0; k < 3; ++k) {
    const Big ref = log(Big(xs[k])) - log(Big(24)) / 3;
    CHECK(std::abs(r[k] - ref.convert_to<double>()) < 1e-15);
  }
  CHECK(std::abs(r[0] - -0.36620) < 5e-6);
  CHECK(std::abs(r[1] - 0.03926) < 5e-6);
  CHECK(std::abs(r[2] - 0.32694) < 5e-6);

  CHECK_THROWS_AS(clr_transform(Eigen::Vector2d(1.0, 0.0)), DomainError);
  CHECK_THROWS_AS(clr_transform(Eigen::Vector2d(-1.0, 2.0)), DomainError);
}

TEST_CASE("CLR sums to zero and ignores the scale") {
  std::mt19937_64 g(11);
  std::uniform_real_distribution<double> u(1e-3, 1e4);
  std::uniform_real_distribution<double> lscale(-8.0, 8.0);
  for (int rep = 0; rep < 500; ++rep) {
    Eigen::VectorXd x(1 + rep % 30);
    for (auto& v : x) v = u(g);
    const auto c = clr_transform(x);
    CHECK(std::abs(c.sum()) < 1e-10);
    const double s = std::exp(lscale(g));
    CHECK((clr_transform(s * x) - c).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("format_double round-trips exactly") {
  std::mt19937_64 g(3);
  for (int k = 0; k < 20000; ++k) {
    double v;
    const std::uint64_t bits = g();
    std::memcpy(&v, &bits, sizeof v);
    if (!std::isfinite(v)) continue;
    CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);
  }
  CHECK(std::strtod(format_double(0.1).c_str(), nullptr) == 0.1);
  CHECK(std::strtod(format_double(-0.0).c_str(), nullptr) == 0.0);
}

TEST_CASE("loading a CSV") {
  TempDir dir;
  const auto p = dir / "data.csv";
  write_text(p,
             "sample_id,task_id,label,a,b\n"
             "s1,A,1,1,2\n"
             "s2,B,0,3,4\n"
             "s3,A,0,5,6\n"
             "s4,B,1,7,8\n"
             "s5,A,1,9,10\n"
             "s6,B,0,11,12\n");
  const auto data = load_dataset(p);
  REQUIRE(data.num_tasks() == 2);
  CHECK(data.task(0).task_id == "A");
  CHECK(data.task(0).size() == 3);
  CHECK(data.task(1).size() == 3);
  CHECK(data.feature_names() == std::vector<std::string>{"a", "b"});
  CHECK(data.task(0).sample_ids == std::vector<std::string>{"s1", "s3", "s5"});
  CHECK(data.task(1).design(2, 1) == 12.0);
  CHECK(data.task(1).labels[1] == 1.0);

  SUBCASE("columns in any order") {
    const auto q = dir / "reordered.csv";
    write_text(q,
               "a,label,b,task_id,sample_id\n"
               "1,1,2,A,s1\n3,0,4,B,s2\n5,0,6,A,s3\n7,1,8,B,s4\n9,1,10,A,s5\n11,0,12,B,s6\n");
    CHECK(load_dataset(q) == data);
  }
  SUBCASE("CLR matches the transform of the shifted row") {
    LoadOptions opt;
    opt.apply_clr = true;
    opt.pseudocount = 0.5;
    const auto c = load_dataset(p, opt);
    const Eigen::Vector2d row(9.5, 10.5);
    const Eigen::VectorXd expect = clr_transform(row);
    CHECK(c.task(0).design.row(2).transpose() == expect);
  }
  SUBCASE("intercept column is appended after CLR") {
    LoadOptions opt;
    opt.apply_clr = true;
    opt.append_intercept = true;
    const auto c = load_dataset(p, opt);
    CHECK(c.feature_dim() == 3);
    CHECK(c.feature_names().back() == kInterceptFeature);
    for (const auto& t : c.tasks()) {
      CHECK(t.design.col(2).minCoeff() == 1.0);
      CHECK(t.design.col(2).maxCoeff() == 1.0);
      CHECK(std::abs(t.design.leftCols(2).rowwise().sum().maxCoeff()) < 1e-12);
    }
  }
  SUBCASE("group column is ignored by the flat loader") {
    const auto q = dir / "with_group.csv";
    write_text(q, "group_id,sample_id,task_id,label,a,b\n"
                  "g,s1,A,1,1,2\ng,s2,B,0,3,4\ng,s3,A,0,5,6\ng,s4,B,1,7,8\ng,s5,A,1,9,10\ng,s6,B,0,11,12\n");
    CHECK(load_dataset(q) == data);
  }
}

TEST_CASE("grouped loading") {
  TempDir dir;
  const auto p = dir / "grouped.csv";
  write_text(p,
             "sample_id,group_id,task_id,label,x\n"
             "1,crc,s1,1,0.5\n"
             "2,ibd,s9,0,1.5\n"
             "3,crc,s1,0,2.5\n"
             "4,ibd,s9,1,3.5\n"
             "5,crc,s2,1,4.5\n"
             "6,crc,s2,0,5.5\n");
  const auto groups = load_grouped_datasets(p);
  REQUIRE(groups.size() == 2);
  CHECK(groups[0].group == "crc");
  CHECK(groups[0].dataset.num_tasks() == 2);
  CHECK(groups[1].group == "ibd");
  CHECK(groups[1].dataset.num_tasks() == 1);
  CHECK(groups[1].dataset.task(0).design(1, 0) == 3.5);

  LoadOptions other;
  other.group_column = "cohort";
  CHECK_THROWS_AS(load_grouped_datasets(p, other), ParseError);

  const auto out = dir / "regrouped.csv";
  save_grouped_datasets(groups, out);
  const auto back = load_grouped_datasets(out);
  REQUIRE(back.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(back[k].group == groups[k].group);
    CHECK(back[k].dataset == groups[k].dataset);
  }
}

TEST_CASE("parse errors carry the line number") {
  TempDir dir;
  const auto p = dir / "bad.csv";
  const std::string header = "sample_id,task_id,label,a\n";
  const std::string ok = "s1,A,1,3\ns2,A,0,4\n";

  write_text(p, "sample_id,label,a\ns1,1,3\n");
  CHECK(parse_error_line(p) == 1);
  write_text(p, "sample_id,task_id,label,a,a\ns1,A,1,3,3\n");
  CHECK(parse_error_line(p) == 1);
  write_text(p, "sample_id,task_id,label\ns1,A,1\n");
  CHECK(parse_error_line(p) == 1);
  write_text(p, header + ok + "s3,A,1\n");
  CHECK(parse_error_line(p) == 4);
  write_text(p, header + ok + "s3,A,1,3,9\n");
  CHECK(parse_error_line(p) == 4);
  write_text(p, header + "s1,A,2,3\n");
  CHECK(parse_error_line(p) == 2);
  write_text(p, header + ok + "s3,A,yes,3\n");
  CHECK(parse_error_line(p) == 4);
  write_text(p, header + ok + "s3,A,1,x1\n");
  CHECK(parse_error_line(p) == 4);
  write_text(p, header + "s1,A,1,inf\n");
  CHECK(parse_error_line(p) == 2);
  write_text(p, header);
  CHECK_THROWS_AS(load_dataset(p), ParseError);
  write_text(p, "");
  CHECK(parse_error_line(p) == 1);

  write_text(p, header + ok + "s3,A,1,-2\n");
  CHECK_NOTHROW(load_dataset(p));
  LoadOptions clr;
  clr.apply_clr = true;
  CHECK(parse_error_line(p, clr) == 4);

  CHECK_THROWS_AS(load_dataset(dir / "missing.csv"), Error);
}

TEST_CASE("generated datasets and truth survive a save and load") {
  TempDir dir;
  for (const char* name : {"dataset2", "dataset6"}) {
    auto s = *find_scenario(name);
    s.seed = 21;
    const auto syn = generate(s);
    const auto p = dir / "gen.csv";
    save_dataset(syn.dataset, p);
    const auto back = load_dataset(p);
    CHECK(back.num_tasks() == syn.dataset.num_tasks());
    for (std::size_t t = 0; t < back.num_tasks(); ++t) {
      CHECK(back.task(t).task_id == syn.dataset.task(t).task_id);
      CHECK(back.task(t).design == syn.dataset.task(t).design);
      CHECK(back.task(t).labels == syn.dataset.task(t).labels);
    }
    CHECK(dataset_fingerprint(back) == dataset_fingerprint(syn.dataset));
    // A second save is byte-identical.
    const auto p2 = dir / "gen2.csv";
    save_dataset(back, p2);
    CHECK(read_text(p) == read_text(p2));
    CHECK(file_checksum(p) == file_checksum(p2));

    const auto tp = dir / "truth.csv";
    save_truth(syn.truth, syn.dataset, tp);
    const auto truth = load_truth(tp);
    CHECK(truth.W0 == syn.truth.W0);
    CHECK(truth.z0 == syn.truth.z0);
    CHECK(truth.theta0 == syn.truth.theta0);
    CHECK(truth.Sigma0 == syn.truth.Sigma0);
  }
}

TEST_CASE("fingerprints and checksums") {
  instances::Gen g(6);
  const auto a = instances::random_dataset(g, 2, 3, 5, 8);
  const auto fp = dataset_fingerprint(a);
  CHECK(fp.rfind("crc32:", 0) == 0);
  CHECK(fp.size() == 14);
  CHECK(dataset_fingerprint(a) == fp);

  auto tasks = a.tasks();
  tasks[1].design(0, 2) = std::nextafter(tasks[1].design(0, 2), 1e9);
  CHECK(dataset_fingerprint(MultitaskDataset(tasks)) != fp);
  tasks = a.tasks();
  tasks[0].task_id = "renamed";
  CHECK(dataset_fingerprint(MultitaskDataset(tasks)) != fp);

  TempDir dir;
  // CRC-32 check value of "123456789".
  write_text(dir / "check.txt", "123456789");
  CHECK(file_checksum(dir / "check.txt") == "crc32:cbf43926");
}

TEST_CASE("atomic writes replace the target") {
  TempDir dir;
  const auto p = dir / "out.txt";
  write_file_atomic(p, "first");
  write_file_atomic(p, "second");
  CHECK(read_text(p) == "second");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path)) ++files;
  CHECK(files == 1);
}

TEST_CASE("Bayesian model archive") {
  TempDir dir;
  auto s = *find_scenario("dataset3");
  s.seed = 4;
  s.d = 25;
  const auto syn = generate(s);
  const auto archive = bayes_archive(syn.dataset, 40);
  const auto p = dir / "model.json";
  save_model(archive, p);
  const auto back = load_model(p);

  SUBCASE("numeric fields are bit-exact") {
    const auto& a = archive.bayes->fit;
    const auto& b = back.bayes->fit;
    CHECK(b.state.alpha == a.state.alpha);
    CHECK(b.state.beta == a.state.beta);
    CHECK(b.state.v == a.state.v);
    CHECK(b.state.V == a.state.V);
    CHECK(b.state.phi == a.state.phi);
    CHECK(b.state.M == a.state.M);
    REQUIRE(b.state.Sigmas.size() == a.state.Sigmas.size());
    for (std::size_t j = 0; j < a.state.Sigmas.size(); ++j) CHECK(b.state.Sigmas[j] == a.state.Sigmas[j]);
    CHECK(b.elbo_trace == a.elbo_trace);
    CHECK(b.converged == a.converged);
    CHECK(b.sweeps_run == a.sweeps_run);
    CHECK(back.bayes->hyper.V0 == archive.bayes->hyper.V0);
    CHECK(back.bayes->hyper.alpha0 == archive.bayes->hyper.alpha0);
    CHECK(back.bayes->hyper.v0 == archive.bayes->hyper.v0);
    CHECK(back.bayes->config.max_sweeps == 40);
    CHECK(back.task_ids == archive.task_ids);
    CHECK(back.feature_names == archive.feature_names);
    CHECK(back.data_fingerprint == archive.data_fingerprint);
    CHECK(back.method == "bayes-mtl");
  }
  SUBCASE("save, load, save is byte-identical") {
    const auto p2 = dir / "model2.json";
    save_model(back, p2);
    CHECK(read_text(p) == read_text(p2));
  }
  SUBCASE("reloaded model predicts identically") {
    for (std::size_t t = 0; t < syn.dataset.num_tasks(); ++t) {
      const auto& X = syn.dataset.task(t).design;
      CHECK(back.predict_proba(t, X) == archive.predict_proba(t, X));
    }
    CHECK(back.effective_weights() == archive.bayes->fit.state.effective_weights());
    CHECK(back.support_scores() == archive.bayes->fit.state.phi);
    CHECK_NOTHROW(back.check_compatible(syn.dataset));
    CHECK(back.task_index(syn.dataset.task(3).task_id) == 3);
    CHECK_THROWS_AS(back.task_index("nope"), ShapeError);
  }
  SUBCASE("selection and thresholded weights") {
    const auto& st = back.bayes->fit.state;
    const auto sel = back.selected_support();
    const auto thr = back.thresholded_weights();
    for (Eigen::Index j = 0; j < st.phi.size(); ++j) {
      CHECK(sel[j] == (st.phi[j] >= 0.5 ? 1.0 : 0.0));
      CHECK(thr.col(j) == (st.phi[j] >= 0.5 ? Eigen::VectorXd(st.M.col(j)) : Eigen::VectorXd::Zero(st.M.rows())));
    }
  }
  SUBCASE("a flipped digit fails the checksum") {
    auto text = read_text(p);
    const auto at = text.find("\"phi\"");
    REQUIRE(at != std::string::npos);
    auto digit = text.find_first_of("123456789", at);
    text[digit] = text[digit] == '1' ? '2' : '1';
    write_text(p, text);
    try {
      load_model(p);
      FAIL("corruption went unnoticed");
    } catch (const ArchiveError& e) {
      CHECK(std::string(e.what()).find("checksum") != std::string::npos);
    }
  }
  SUBCASE("version and format are checked") {
    auto text = read_text(p);
    const auto v = text.find("\"format_version\": 1");
    REQUIRE(v != std::string::npos);
    auto bumped = text;
    bumped.replace(v, 19, "\"format_version\": 2");
    write_text(p, bumped);
    try {
      load_model(p);
      FAIL("version mismatch went unnoticed");
    } catch (const ArchiveError& e) {
      CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
    auto renamed = text;
    renamed.replace(renamed.find("bmtl-model"), 10, "other-mode");
    write_text(p, renamed);
    CHECK_THROWS_AS(load_model(p), ArchiveError);
    write_text(p, text.substr(0, text.size() / 2));
    CHECK_THROWS_AS(load_model(p), ArchiveError);
  }
  SUBCASE("incompatible data is refused") {
    instances::Gen g(1);
    CHECK_THROWS_AS(back.check_compatible(instances::random_dataset(g, 10, 24, 5, 6)), ShapeError);
  }
}

TEST_CASE("linear model archive") {
  TempDir dir;
  instances::Gen g(9);
  const auto data = instances::random_dataset(g, 3, 5, 20, 30);
  ModelArchive a;
  a.method = "stl-lc";
  a.group = "crc";
  for (const auto& t : data.tasks()) a.task_ids.push_back(t.task_id);
  a.feature_names = {"a", "b", "c", "d", "e"};
  a.data_fingerprint = dataset_fingerprint(data);
  a.preprocessing = {true, 0.5, false};
  LinearModel lm;
  for (const auto& t : data.tasks()) {
    auto m = fit_l1_logistic(t.design, t.labels, 0.05);
    m.task_id = t.task_id;
    lm.models.push_back(m);
  }
  a.linear = lm;
  const auto p = dir / "stl.json";
  save_model(a, p);
  const auto b = load_model(p);
  CHECK(b.group == "crc");
  CHECK(b.preprocessing.apply_clr);
  CHECK(b.preprocessing.pseudocount == 0.5);
  REQUIRE(b.linear.has_value());
  CHECK_FALSE(b.linear->pooled);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(b.linear->models[t].weights == lm.models[t].weights);
    CHECK(b.linear->models[t].intercept == lm.models[t].intercept);
    CHECK(b.linear->models[t].lambda == lm.models[t].lambda);
    CHECK(b.linear->models[t].iterations == lm.models[t].iterations);
    CHECK(b.predict_proba(t, data.task(t).design) == lm.models[t].predict_proba(data.task(t).design));
  }
  Eigen::VectorXd scores = Eigen::VectorXd::Zero(5);
  for (const auto& m : lm.models) scores = scores.cwiseMax(m.weights.cwiseAbs());
  CHECK(b.support_scores() == scores);

  const auto p2 = dir / "stl2.json";
  save_model(b, p2);
  CHECK(read_text(p) == read_text(p2));

  ModelArchive neither = a;
  neither.linear.reset();
  CHECK_THROWS_AS(save_model(neither, p), ArchiveError);
}
