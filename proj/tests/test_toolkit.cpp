#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <unistd.h>

#include "aglr/cli.hpp"
#include "aglr/error.hpp"
#include "aglr/io.hpp"
#include "aglr/synthetic.hpp"
#include "oracles.hpp"

using namespace aglr;
namespace fs = std::filesystem;

namespace {

// Fresh directory removed on scope exit.
struct TempDir {
  fs::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("aglr-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

FeatureBag random_bag(std::size_t n, std::size_t d, std::uint64_t seed) {
  RngStream rng(seed, "bag");
  FeatureBag b;
  b.bag_id = "bag" + std::to_string(seed);
  b.label = static_cast<int>(seed % 2);
  b.domain_id = 2;
  b.synthetic = seed % 3 == 0;
  b.embeddings = MatrixF(n, d);
  for (auto& v : b.embeddings.flat()) v = static_cast<float>(rng.normal() * 1e3);
  return b;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an aglr::Error");
  return ErrorCode::InvalidArgument;
}

SyntheticDomainSpec small_spec() {
  SyntheticDomainSpec s;
  s.dim = 6;
  s.domains = 3;
  s.bags_per_class = 10;
  s.min_bag = 8;
  s.max_bag = 16;
  return s;
}

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli_main(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> tokens(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

std::string line_starting(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (line.rfind(prefix, 0) == 0) return line;
  }
  return {};
}

// Logistic regression on bag-mean features by plain gradient descent.
std::vector<double> fit_probe(const std::vector<FeatureBag>& bags) {
  const std::size_t d = bags.front().dim();
  std::vector<std::vector<double>> x;
  for (const auto& b : bags) {
    std::vector<double> m(d + 1, 0.0);
    for (std::size_t i = 0; i < b.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) m[j] += b.embeddings(i, j) / static_cast<double>(b.size());
    }
    m[d] = 1.0;
    x.push_back(m);
  }
  std::vector<double> w(d + 1, 0.0);
  for (int it = 0; it < 2000; ++it) {
    std::vector<double> g(d + 1, 0.0);
    for (std::size_t k = 0; k < x.size(); ++k) {
      double z = 0.0;
      for (std::size_t j = 0; j <= d; ++j) z += w[j] * x[k][j];
      const double p = 1.0 / (1.0 + std::exp(-z));
      for (std::size_t j = 0; j <= d; ++j) g[j] += (p - bags[k].label) * x[k][j];
    }
    for (std::size_t j = 0; j <= d; ++j) w[j] -= 0.1 * (g[j] / static_cast<double>(x.size()) + 1e-3 * w[j]);
  }
  return w;
}

double probe_auroc(const std::vector<double>& w, const std::vector<FeatureBag>& bags) {
  std::vector<int> labels;
  std::vector<double> scores;
  const std::size_t d = bags.front().dim();
  for (const auto& b : bags) {
    double z = w[d];
    for (std::size_t i = 0; i < b.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) z += w[j] * b.embeddings(i, j) / static_cast<double>(b.size());
    }
    labels.push_back(b.label);
    scores.push_back(z);
  }
  return oracle::auroc_pairs(labels, scores);
}

}  // namespace

TEST_CASE("bag files round-trip bit-exactly") {
  TempDir tmp;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto bag = random_bag(1 + seed * 7, 5, seed);
    const auto path = tmp.path / (bag.bag_id + ".bag");
    io::write_bag(path, bag);
    CHECK(io::read_bag(path) == bag);
    CHECK(fs::file_size(path) == io::kBagHeaderBytes + bag.size() * bag.dim() * 4);
  }
}

TEST_CASE("bag decoding reports corrupt inputs") {
  const auto bag = random_bag(4, 3, 4);
  const auto bytes = io::encode_bag(bag);
  CHECK(io::decode_bag(bytes, bag.bag_id) == bag);

  const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.end() - 5);
  CHECK(code_of([&] { io::decode_bag(truncated, "t"); }) == ErrorCode::TruncatedPayload);
  const std::vector<std::uint8_t> header_only(bytes.begin(), bytes.begin() + 10);
  CHECK(code_of([&] { io::decode_bag(header_only, "h"); }) == ErrorCode::TruncatedPayload);

  auto bad_magic = bytes;
  std::fill(bad_magic.begin(), bad_magic.begin() + 4, 'X');
  CHECK(code_of([&] { io::decode_bag(bad_magic, "m"); }) == ErrorCode::BadMagic);

  auto bad_version = bytes;
  bad_version[4] = 9;
  CHECK(code_of([&] { io::decode_bag(bad_version, "v"); }) == ErrorCode::BadVersion);

  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(io::decode_bag(trailing, "x"), Error);

  CHECK(code_of([] { io::read_bag("/nonexistent/dir/x.bag"); }) == ErrorCode::IoError);
}

TEST_CASE("manifest round trip") {
  TempDir tmp;
  io::Manifest m;
  m.dim = 7;
  m.sequence = "seq-a";
  m.records = {{"bags/a.bag", "a", 1, true, 0}, {"bags/b.bag", "b", 2, false, 1}};
  io::write_manifest(tmp.path / "manifest.txt", m);
  const auto back = io::read_manifest(tmp.path / "manifest.txt");
  CHECK(back.dim == 7);
  CHECK(back.sequence == "seq-a");
  REQUIRE(back.records.size() == 2);
  CHECK(back.records[1].bag_id == "b");
  CHECK(back.records[1].domain_id == 2);
  CHECK_FALSE(back.records[1].train);
  CHECK(back.records[1].label == 1);

  io::write_text(tmp.path / "broken.txt", "#aglr-manifest 1\n#dim 3\npath,bag_id,domain_id,split,label\nx,y\n");
  CHECK(code_of([&] { io::read_manifest(tmp.path / "broken.txt"); }) == ErrorCode::ParseError);
}

TEST_CASE("generated suites load back identically") {
  TempDir tmp;
  const auto episodes = generate_suite(small_spec(), RngStream(5, "suite"));
  io::write_suite(tmp.path, episodes, "small");
  const auto spec = io::load_sequence(tmp.path / "manifest.txt");
  CHECK(spec.name == "small");
  REQUIRE(spec.episodes.size() == episodes.size());
  for (std::size_t t = 0; t < episodes.size(); ++t) {
    CHECK(spec.episodes[t].domain_id == episodes[t].domain_id);
    CHECK(spec.episodes[t].train == episodes[t].train);
    CHECK(spec.episodes[t].test == episodes[t].test);
  }
}

TEST_CASE("generation is byte-identical for a fixed seed") {
  TempDir a, b;
  io::write_suite(a.path, generate_suite(small_spec(), RngStream(6, "suite")), "s");
  io::write_suite(b.path, generate_suite(small_spec(), RngStream(6, "suite")), "s");
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a.path)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a.path);
    CHECK(io::read_text(entry.path()) == io::read_text(b.path / rel));
    ++files;
  }
  CHECK(files == 61);
  const auto other = generate_suite(small_spec(), RngStream(7, "suite"));
  CHECK_FALSE(other[0].train == generate_suite(small_spec(), RngStream(6, "suite"))[0].train);
}

TEST_CASE("generator split sizes and labels") {
  auto s = small_spec();
  s.bags_per_class = 50;
  const auto episodes = generate_suite(s, RngStream(8, "suite"));
  REQUIRE(episodes.size() == 3);
  for (const auto& ep : episodes) {
    CHECK(ep.train.size() == 80);
    CHECK(ep.test.size() == 20);
    const auto [n0, n1] = split_by_class(ep.test);
    CHECK(n0.size() == 10);
    CHECK(n1.size() == 10);
    for (const auto& b : ep.train) {
      CHECK(b.size() >= 8);
      CHECK(b.size() <= 16);
      CHECK_FALSE(b.synthetic);
    }
    CHECK_NOTHROW(validate_episode(ep, 6));
  }
}

TEST_CASE("degenerate generator: all witnesses, no noise") {
  auto s = small_spec();
  s.domains = 1;
  s.witness_rate = 1.0;
  s.noise_scale = 0.0;
  const auto episodes = generate_suite(s, RngStream(9, "suite"));
  const auto [neg, pos] = split_by_class(episodes[0].train);
  REQUIRE_FALSE(pos.empty());
  const auto& first = pos.front().embeddings;
  for (const auto& bag : pos) {
    for (std::size_t i = 0; i < bag.size(); ++i) {
      for (std::size_t j = 0; j < bag.dim(); ++j) CHECK(bag.embeddings(i, j) == first(0, j));
    }
  }
  // Negatives sit at the background mean, away from the signal mean.
  double gap = 0.0;
  for (std::size_t j = 0; j < 6; ++j) gap += std::abs(neg.front().embeddings(0, j) - first(0, j));
  CHECK(gap > 1.0);
}

TEST_CASE("linear probe separates the first domain but not the last") {
  SyntheticDomainSpec s;  // desk default
  const auto episodes = generate_suite(s, RngStream(10, "suite"));
  const auto w = fit_probe(episodes.front().train);
  const double first = probe_auroc(w, episodes.front().test);
  const double last = probe_auroc(w, episodes.back().test);
  MESSAGE("probe AUROC first " << first << ", last " << last);
  CHECK(first >= 0.9);
  CHECK(last <= 0.75);

  auto single = s;
  single.domains = 1;
  const auto one = generate_suite(single, RngStream(10, "suite"));
  CHECK(one.size() == 1);
  CHECK(single.shift_of(1).rotation == 0.0);
  CHECK(single.shift_of(1).shift == 0.0);
}

TEST_CASE("matrix csv round trip reproduces the report") {
  TrainTestMatrix m(3);
  RngStream rng(11, "m");
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) m.set(i, j, {rng.uniform(), rng.uniform(), rng.uniform()});
  }
  m.set(2, 1, {0.25, std::nullopt, std::nullopt});
  const auto text = io::matrix_to_csv(m);
  CHECK(text.rfind("train_session,test_set,weighted_f1,auroc,auprc\n", 0) == 0);
  CHECK(text.find("3,2,0.25,NA,NA") != std::string::npos);
  const auto back = io::matrix_from_csv(text);
  CHECK(back == m);
  for (auto variant : {IlmVariant::LowerTriangular, IlmVariant::FullRow}) {
    const auto a = cl_report(m, variant), b = cl_report(back, variant);
    for (auto metric : kAllMetrics) {
      CHECK(a.of(metric).acc == b.of(metric).acc);
      CHECK(a.of(metric).ilm == b.of(metric).ilm);
      CHECK(a.of(metric).bwt == b.of(metric).bwt);
      CHECK(a.of(metric).excluded_cells == b.of(metric).excluded_cells);
    }
  }
  CHECK(code_of([] { io::matrix_from_csv("train_session,test_set,weighted_f1,auroc,auprc\n1,1,0.5,x,0.5\n"); }) ==
        ErrorCode::ParseError);
  const auto partial =
      io::matrix_from_csv("train_session,test_set,weighted_f1,auroc,auprc\n1,1,0.5,0.5,0.5\n2,2,1,1,1\n");
  CHECK(partial.episodes() == 2);
  CHECK(code_of([&] { cl_report(partial); }) == ErrorCode::IncompleteMatrix);
}

TEST_CASE("report csv layout") {
  TrainTestMatrix m(1);
  m.set(0, 0, {0.5, 0.6, 0.7});
  const auto csv = io::report_to_csv(cl_report(m));
  CHECK(csv.rfind("metric,acc,ilm,bwt,excluded_cells\n", 0) == 0);
  CHECK(csv.find("auroc,0.59999999999999998,0.59999999999999998,NA,0") != std::string::npos);
}

TEST_CASE("family and checkpoint json round trip") {
  RngStream src(12, "fam");
  EpisodeDataset ds;
  for (int i = 0; i < 6; ++i) ds.train.push_back(random_bag(10 + i, 3, 20 + i));
  for (auto& b : ds.train) b.bag_id += "x";
  ReplayConfig cfg;
  cfg.emb_k_candidates = {1, 2};
  cfg.count_k_candidates = {1, 2};
  const auto params = MilParams::random({3, 6, 4, true}, src);
  const auto family = fit_family(ds, params, cfg, EmConfig{}, RngStream(13, "f"));
  const auto back = io::family_from_json(io::family_to_json(family));
  CHECK(back.domain_id == family.domain_id);
  CHECK(back.class_counts == family.class_counts);
  CHECK(back.fit_sample_counts == family.fit_sample_counts);
  CHECK(back.q_used == family.q_used);
  for (int c = 0; c < 2; ++c) {
    CHECK(back.embedding_models[c].weights == family.embedding_models[c].weights);
    CHECK(back.embedding_models[c].means == family.embedding_models[c].means);
    CHECK(back.embedding_models[c].covariances == family.embedding_models[c].covariances);
    CHECK(back.count_models[c].means == family.count_models[c].means);
  }
  // Sampling from the restored family matches the original.
  RngStream r1(14, "s"), r2(14, "s");
  CHECK(synthesize_bag(back, 1, r1) == synthesize_bag(family, 1, r2));

  CHECK(io::checkpoint_from_json(io::checkpoint_to_json(params)) == params);
  CHECK(code_of([] { io::checkpoint_from_json("{\"format\": \"nope\"}"); }) == ErrorCode::BadMagic);
  CHECK(code_of([] { io::checkpoint_from_json("{\"values\": [1]}"); }) == ErrorCode::ParseError);
  CHECK(code_of([] { io::family_from_json("not json"); }) == ErrorCode::ParseError);
}

TEST_CASE("file pipeline matches the in-memory pipeline") {
  TempDir tmp;
  const auto episodes = generate_suite(small_spec(), RngStream(15, "suite"));
  io::write_suite(tmp.path, episodes, "small");
  SequenceSpec memory;
  memory.name = "small";
  memory.episodes = episodes;
  const auto disk = io::load_sequence(tmp.path / "manifest.txt");
  RunOptions opt;
  opt.train.epochs = 2;
  opt.train.embed_dim = 8;
  opt.train.attention_dim = 4;
  ReplayConfig cfg;
  cfg.emb_k_candidates = {1, 2};
  cfg.count_k_candidates = {1};
  for (const auto& strategy : {Strategy::naive(), Strategy::aglr(cfg)}) {
    const auto a = run_sequence(memory, strategy, opt, RngStream(16, "run"));
    const auto b = run_sequence(disk, strategy, opt, RngStream(16, "run"));
    CHECK(a.matrix == b.matrix);
  }
}

TEST_CASE("cli usage errors exit with code 2") {
  const auto unknown = cli({"run", "--manifest", "m.txt", "--strategy", "ewc", "--seed", "1", "--out", "o"});
  CHECK(unknown.code == 2);
  CHECK(unknown.err.find("usage error") != std::string::npos);
  CHECK(unknown.err.find("--strategy") != std::string::npos);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"run", "--strategy", "naive"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
  CHECK(cli({}).code == 2);
}

TEST_CASE("cli runtime errors exit with code 1") {
  const auto missing = cli({"report", "--matrix", "/nonexistent/matrix.csv"});
  CHECK(missing.code == 1);
  CHECK(missing.err.rfind("error: ", 0) == 0);
  CHECK(std::count(missing.err.begin(), missing.err.end(), '\n') == 1);
}

TEST_CASE("cli report on a flat matrix prints zero forgetting") {
  TempDir tmp;
  TrainTestMatrix m(3);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) m.set(i, j, {0.9, 0.9, 0.9});
  }
  io::write_text(tmp.path / "matrix.csv", io::matrix_to_csv(m));
  const auto r = cli({"report", "--matrix", (tmp.path / "matrix.csv").string()});
  REQUIRE(r.code == 0);
  const auto row = tokens(line_starting(r.out, "auroc"));
  REQUIRE(row.size() == 5);
  CHECK(row[1] == "90.00");
  CHECK(row[2] == "90.00");
  CHECK(row[3] == "0.00");
  const auto raw = cli({"report", "--matrix", (tmp.path / "matrix.csv").string(), "--raw"});
  CHECK(tokens(line_starting(raw.out, "auroc"))[3] == "0.000000");
}

TEST_CASE("cli end to end: generate, run, report, dump attention") {
  TempDir tmp;
  io::write_text(tmp.path / "gen.json",
                 R"({"dim": 6, "domains": 2, "bags_per_class": 6, "min_bag": 5, "max_bag": 9})");
  const auto data = tmp.path / "data";
  REQUIRE(cli({"gen-data", "--spec", (tmp.path / "gen.json").string(), "--out", data.string(), "--seed", "3"}).code ==
          0);
  const auto manifest = (data / "manifest.txt").string();
  CHECK(io::read_manifest(manifest).records.size() == 24);

  const auto out = tmp.path / "out";
  const auto run = cli({"run", "--manifest", manifest, "--strategy", "aglr", "--seed", "4", "--out", out.string(),
                        "--epochs", "2", "--emb-k", "1,2", "--count-k", "1", "--q", "50"});
  REQUIRE(run.code == 0);
  for (const char* f : {"matrix.csv", "report.csv", "run.json", "families/domain1.json", "families/domain2.json",
                        "checkpoints/session1.json", "checkpoints/session2.json"}) {
    CHECK(fs::exists(out / f));
  }
  const auto matrix = io::matrix_from_csv(io::read_text(out / "matrix.csv"));
  CHECK(matrix.episodes() == 2);
  CHECK(io::family_from_json(io::read_text(out / "families/domain1.json")).q_used == 50.0);

  const auto rep = cli({"report", "--matrix", (out / "matrix.csv").string()});
  CHECK(rep.code == 0);
  CHECK(line_starting(rep.out, "weighted_f1").size() > 0);

  const auto dump = tmp.path / "att.csv";
  REQUIRE(cli({"dump-attention", "--manifest", manifest, "--checkpoint", (out / "checkpoints/session2.json").string(),
               "--out", dump.string()})
              .code == 0);
  std::istringstream in(io::read_text(dump));
  std::string line;
  std::getline(in, line);
  CHECK(line == "bag_id,instance_index,attention");
  std::map<std::string, double> per_bag;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    per_bag[line.substr(0, comma)] += std::stod(line.substr(line.rfind(',') + 1));
    ++rows;
  }
  CHECK(per_bag.size() == 24);
  CHECK(rows >= 24 * 5);
  for (const auto& [id, total] : per_bag) CHECK(total == doctest::Approx(1.0).epsilon(1e-5));

  const auto mismatch = cli({"dump-attention", "--manifest", manifest, "--checkpoint",
                             (out / "families/domain1.json").string(), "--out", dump.string()});
  CHECK(mismatch.code == 1);
}
