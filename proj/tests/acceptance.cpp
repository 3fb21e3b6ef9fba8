// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. argv[1] is the path of the aglr CLI binary.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "aglr/error.hpp"
#include "aglr/gmm.hpp"
#include "aglr/harness.hpp"
#include "aglr/io.hpp"
#include "aglr/metrics.hpp"
#include "aglr/mil.hpp"
#include "aglr/synthetic.hpp"
#include "oracles.hpp"

using namespace aglr;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void verdict(int id, bool pass, const std::string& detail) {
  std::printf("AC%-2d %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Mean and standard error of a sample.
std::pair<double, double> mean_se(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, n > 1 ? std::sqrt(ss / (n - 1) / n) : 0.0};
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (double x : v) out += (out.empty() ? "" : " ") + fmt("%.3f", x);
  return out;
}

// ---------------------------------------------------------------------------
// Mixture fixtures

const std::vector<std::vector<double>> kTrueMeans = {{0.0, 0.0}, {6.0, 0.0}, {0.0, 6.0}};
// Scales every Cholesky factor; the smallest component (about 120 draws) then has
// a per-axis mean standard error near 0.05.
constexpr double kSpread = 0.5;

struct LabelledSamples {
  MatrixD x;
  std::vector<int> component;
};

LabelledSamples three_component_samples(std::uint64_t seed, std::size_t n, double scale) {
  RngStream rng(seed, "acceptance-mixture");
  LabelledSamples out{MatrixD(n, 2), std::vector<int>(n)};
  // Unequal weights and anisotropic, correlated covariances.
  const double weights[3] = {0.5, 0.3, 0.2};
  const double chol[3][3] = {{1.0, 0.0, 0.6}, {0.7, 0.3, 0.8}, {0.5, -0.2, 1.0}};  // l11, l21, l22
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    const int c = u < weights[0] ? 0 : (u < weights[0] + weights[1] ? 1 : 2);
    const double z0 = rng.normal(), z1 = rng.normal();
    out.x(i, 0) = kTrueMeans[c][0] + scale * chol[c][0] * z0;
    out.x(i, 1) = kTrueMeans[c][1] + scale * (chol[c][1] * z0 + chol[c][2] * z1);
    out.component[i] = c;
  }
  return out;
}

// Per-component means of the labelled draws: what a perfect fit can reach.
std::vector<std::vector<double>> labelled_means(const LabelledSamples& s) {
  std::vector<std::vector<double>> m(3, std::vector<double>(2, 0.0));
  std::vector<double> n(3, 0.0);
  for (std::size_t i = 0; i < s.x.rows(); ++i) {
    m[s.component[i]][0] += s.x(i, 0);
    m[s.component[i]][1] += s.x(i, 1);
    n[s.component[i]] += 1.0;
  }
  for (int c = 0; c < 3; ++c) {
    m[c][0] /= n[c];
    m[c][1] /= n[c];
  }
  return m;
}

void ac1_em() {
  const auto start = Clock::now();
  int monotone = 0, recovered = 0;
  double worst_drop = 0.0, worst_dist = 0.0, worst_fit = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto samples = three_component_samples(seed, 600, kSpread);
    const auto model = fit_em(samples.x, 3, EmConfig{}, RngStream(seed, "acceptance-em"));
    const auto& trace = model.log_likelihood_trace;
    bool ok = true;
    for (std::size_t i = 1; i < trace.size(); ++i) {
      // Slack applies to the mean per-sample log-likelihood.
      const double drop = (trace[i - 1] - trace[i]) / 600.0;
      worst_drop = std::max(worst_drop, drop);
      if (drop > 1e-8) ok = false;
    }
    monotone += ok;
    std::vector<std::vector<double>> est;
    for (int k = 0; k < 3; ++k) est.push_back({model.means(k, 0), model.means(k, 1)});
    const double d = oracle::matched_max_distance(kTrueMeans, est);
    worst_dist = std::max(worst_dist, d);
    worst_fit = std::max(worst_fit, oracle::matched_max_distance(labelled_means(samples), est));
    recovered += d < 0.2;
  }
  const double secs = seconds_since(start);
  verdict(1, monotone == 20 && recovered == 20 && secs < 10.0,
          fmt("EM: monotone %d/20 (largest per-sample drop %.2e), means within 0.2 %d/20 (worst %.3f; worst gap to "
              "labelled sample means %.3f), %.2f s",
              monotone, worst_drop, recovered, worst_dist, worst_fit, secs));
}

void ac2_bic() {
  const int candidates[] = {1, 2, 3, 4, 5};
  int hits = 0;
  std::string picks;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto samples = three_component_samples(100 + seed, 600, kSpread);
    const auto model = select_k(samples.x, candidates, EmConfig{}, RngStream(seed, "acceptance-bic"));
    hits += model.k == 3;
    picks += std::to_string(model.k);
  }
  verdict(2, hits >= 18, fmt("BIC: K=3 chosen on %d/20 seeds (picks %s)", hits, picks.c_str()));
}

// ---------------------------------------------------------------------------
// Gradients

void ac3_gradients() {
  const auto start = Clock::now();
  RngStream rng(3, "acceptance-grad");
  int done = 0, passed = 0, rejected = 0;
  double worst = 0.0;
  std::size_t coords = 0;
  while (done < 100) {
    const MilShape shape{1 + static_cast<int>(rng.index(8)), 1 + static_cast<int>(rng.index(8)),
                         1 + static_cast<int>(rng.index(6)), rng.index(2) == 1};
    auto params = MilParams::random(shape, rng).cast<double>();
    for (auto& v : params.values()) v += 0.1 * rng.normal();
    FeatureBag bag;
    bag.embeddings = MatrixF(1 + rng.index(6), static_cast<std::size_t>(shape.input_dim));
    for (auto& v : bag.embeddings.flat()) v = static_cast<float>(rng.normal());
    // ReLU is not differentiable at 0; finite differences straddling a kink
    // measure the wrong quantity.
    const auto pre = oracle::projection_preactivations(bag.embeddings, params);
    if (std::any_of(pre.begin(), pre.end(), [](double v) { return std::abs(v) < 1e-3; })) {
      ++rejected;
      continue;
    }
    const ClassWeights w{0.25 + 2.0 * rng.uniform(), 0.25 + 2.0 * rng.uniform()};
    const auto res = oracle::check_gradients(bag.embeddings, static_cast<int>(rng.index(2)), params, w);
    worst = std::max(worst, res.max_relative_error);
    coords += res.coordinates;
    passed += res.max_relative_error < 1e-4;
    ++done;
  }
  const double secs = seconds_since(start);
  verdict(3, passed == 100 && secs < 30.0,
          fmt("gradients: %d/100 instances below 1e-4 (worst %.2e over %zu coordinates, %d redrawn near ReLU kinks), "
              "%.2f s",
              passed, worst, coords, rejected, secs));
}

// ---------------------------------------------------------------------------
// Metrics

void ac4_metrics() {
  RngStream rng(4, "acceptance-auroc");
  int exact = 0, trials = 0;
  while (trials < 1000) {
    const std::size_t n = 2 + rng.index(11);
    std::vector<int> y(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.index(2));
      s[i] = static_cast<double>(rng.index(6)) / 5.0;
    }
    const auto pos = std::count(y.begin(), y.end(), 1);
    if (pos == 0 || pos == static_cast<long>(n)) continue;
    exact += auroc(y, s) == oracle::auroc_pairs(y, s);
    ++trials;
  }

  int hand = 0, hand_total = 0;
  auto expect = [&](double got, double want) {
    ++hand_total;
    hand += std::abs(got - want) <= 1e-12;
  };
  const std::vector<int> y4 = {0, 0, 1, 1};
  expect(weighted_f1(y4, y4), 1.0);
  expect(weighted_f1(y4, std::vector<int>{0, 1, 0, 1}), oracle::weighted_f1_table(y4, std::vector<int>{0, 1, 0, 1}));
  expect(weighted_f1(y4, std::vector<int>{0, 1, 0, 1}), 0.5);
  expect(weighted_f1(std::vector<int>{0, 0, 0, 1}, std::vector<int>{0, 0, 0, 0}), 0.75 * 6.0 / 7.0);
  expect(auroc(y4, std::vector<double>{0.1, 0.4, 0.35, 0.8}), 0.75);
  expect(auroc(y4, std::vector<double>{0.1, 0.2, 0.3, 0.4}), 1.0);
  expect(auroc(y4, std::vector<double>{0.5, 0.5, 0.5, 0.5}), 0.5);
  expect(auprc(std::vector<int>{0, 1, 0, 1}, std::vector<double>{0.1, 0.9, 0.2, 0.8}), 1.0);
  expect(auprc(std::vector<int>{1, 0}, std::vector<double>{0.0, 1.0}), 0.5);
  expect(auprc(std::vector<int>{1, 0, 0, 1, 0}, std::vector<double>(5, 0.4)), 0.4);
  const std::vector<int> ym = {1, 0, 1, 1, 0, 0, 1};
  const std::vector<double> sm = {0.9, 0.8, 0.8, 0.3, 0.3, 0.1, 0.05};
  expect(auprc(ym, sm), oracle::auprc_sweep(ym, sm));

  verdict(4, exact == 1000 && hand == hand_total,
          fmt("metrics: AUROC identical to pair counting on %d/1000 inputs, worked F1/AUROC/AUPRC examples %d/%d",
              exact, hand, hand_total));
}

void ac5_cl_formulas() {
  TrainTestMatrix m(2);
  auto cell = [](double v) { return MetricTriple{v, v, v}; };
  m.set(0, 0, cell(0.8));
  m.set(0, 1, cell(0.55));
  m.set(1, 0, cell(0.6));
  m.set(1, 1, cell(0.7));
  const auto r = cl_report(m);
  bool ok = true;
  std::string detail;
  for (auto metric : kAllMetrics) {
    const auto& c = r.of(metric);
    ok = ok && std::abs(c.bwt + 0.2) <= 1e-12 && std::abs(c.acc - 0.65) <= 1e-12 && std::abs(c.ilm - 0.7) <= 1e-12;
    if (metric == Metric::Auroc) detail = fmt("BWT %.15g, ACC %.15g, ILM %.15g", c.bwt, c.acc, c.ilm);
  }
  verdict(5, ok, "CL formulas on the T=2 matrix: " + detail + " (|error| <= 1e-12)");
}

// ---------------------------------------------------------------------------
// Sequence runs on the default suite

struct SeedRuns {
  RunResult naive, cumulative, aglr, no_abf;
  double naive_seconds = 0.0;
  std::size_t aglr_access_checks = 0;
  std::size_t violations = 0;
  std::size_t real_past = 0;
};

double auroc_acc(const RunResult& r) { return r.report.of(Metric::Auroc).acc; }
double auroc_bwt(const RunResult& r) { return r.report.of(Metric::Auroc).bwt; }

std::vector<SeedRuns> run_default_suites(const std::vector<std::uint64_t>& seeds) {
  std::vector<SeedRuns> all;
  RunOptions options;
  options.fit_final_family = false;
  ReplayConfig no_abf;
  no_abf.attention_filtering = false;
  for (auto seed : seeds) {
    SequenceSpec spec;
    spec.name = "default";
    spec.seed = seed;
    spec.episodes = generate_suite(SyntheticDomainSpec{}, RngStream(seed, "suite"));
    const RngStream rng(seed, "run");
    SeedRuns s;
    auto timed = [&](const Strategy& strategy, double* secs) {
      const auto start = Clock::now();
      auto r = run_sequence(spec, strategy, options, rng);
      if (secs) *secs = seconds_since(start);
      return r;
    };
    auto guarded = [&](const Strategy& strategy) {
      try {
        auto r = timed(strategy, nullptr);
        s.aglr_access_checks += r.access_checks;
        for (const auto& e : r.episodes) s.real_past += e.real_past_bags;
        return r;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::AccessViolation) throw;
        ++s.violations;
        std::printf("     access violation: %s\n", e.what());
        return RunResult{};
      }
    };
    s.naive = timed(Strategy::naive(), &s.naive_seconds);
    s.cumulative = timed(Strategy::cumulative(), nullptr);
    const auto start = Clock::now();
    s.aglr = guarded(Strategy::aglr());
    s.no_abf = guarded(Strategy::aglr(no_abf));
    std::printf("     seed %llu: naive %.3f/%+.3f  cumulative %.3f/%+.3f  aglr %.3f/%+.3f  no-ABF %.3f/%+.3f "
                "(ACC/BWT AUROC; naive %.1f s, aglr pair %.1f s)\n",
                static_cast<unsigned long long>(seed), auroc_acc(s.naive), auroc_bwt(s.naive),
                auroc_acc(s.cumulative), auroc_bwt(s.cumulative), auroc_acc(s.aglr), auroc_bwt(s.aglr),
                auroc_acc(s.no_abf), auroc_bwt(s.no_abf), s.naive_seconds, seconds_since(start));
    std::fflush(stdout);
    all.push_back(std::move(s));
  }
  return all;
}

void ac6_to_ac9(const std::vector<SeedRuns>& runs) {
  std::vector<double> naive_bwt, naive_acc, aglr_bwt, aglr_acc, cum_acc, noabf_acc, cum_minus_aglr,
      aglr_minus_naive;
  double slowest_naive = 0.0;
  std::size_t checks = 0, violations = 0, real_past = 0;
  for (const auto& s : runs) {
    naive_bwt.push_back(auroc_bwt(s.naive));
    naive_acc.push_back(auroc_acc(s.naive));
    aglr_bwt.push_back(auroc_bwt(s.aglr));
    aglr_acc.push_back(auroc_acc(s.aglr));
    cum_acc.push_back(auroc_acc(s.cumulative));
    noabf_acc.push_back(auroc_acc(s.no_abf));
    cum_minus_aglr.push_back(cum_acc.back() - aglr_acc.back());
    aglr_minus_naive.push_back(aglr_acc.back() - naive_acc.back());
    slowest_naive = std::max(slowest_naive, s.naive_seconds);
    checks += s.aglr_access_checks;
    violations += s.violations;
    real_past += s.real_past;
  }

  const double nb = median(naive_bwt);
  verdict(6, nb <= -0.05 && slowest_naive < 300.0,
          fmt("forgetting: naive median BWT(AUROC) %.3f (per seed %s), slowest naive run %.1f s", nb,
              join(naive_bwt).c_str(), slowest_naive));

  const auto [d1, se1] = mean_se(cum_minus_aglr);
  const auto [d2, se2] = mean_se(aglr_minus_naive);
  const bool bwt_ok = median(aglr_bwt) > nb;
  const bool acc_ok = median(aglr_acc) > median(naive_acc);
  const bool order_ok = d1 >= -se1 && d2 >= -se2;
  verdict(7, bwt_ok && acc_ok && order_ok,
          fmt("ordering: median BWT(AUROC) aglr %.3f vs naive %.3f; median ACC(AUROC) aglr %.3f vs naive %.3f; "
              "mean ACC gaps cumulative-aglr %.3f (SE %.3f), aglr-naive %.3f (SE %.3f)",
              median(aglr_bwt), nb, median(aglr_acc), median(naive_acc), d1, se1, d2, se2));

  verdict(8, median(aglr_acc) >= median(noabf_acc),
          fmt("ablation: median ACC(AUROC) with filtering %.3f, without %.3f (per seed %s vs %s)", median(aglr_acc),
              median(noabf_acc), join(aglr_acc).c_str(), join(noabf_acc).c_str()));

  verdict(9, violations == 0 && real_past == 0 && checks > 0,
          fmt("privacy: %zu access violations, %zu real past-domain bags, %zu synthetic past-domain bags checked "
              "over aglr runs with and without filtering x %zu seeds",
              violations, real_past, checks, runs.size()));
}

// ---------------------------------------------------------------------------
// CLI reproducibility

int shell(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

void ac10_reproducibility(const std::string& cli) {
  const auto root = fs::temp_directory_path() / ("aglr-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const auto data = root / "data";
  const auto start = Clock::now();
  bool ok = shell("\"" + cli + "\" gen-data --out \"" + data.string() + "\" --seed 7 > /dev/null") == 0;
  std::vector<std::string> matrices;
  for (int rep = 0; rep < 2 && ok; ++rep) {
    const auto out = root / ("run" + std::to_string(rep));
    ok = shell("\"" + cli + "\" run --manifest \"" + (data / "manifest.txt").string() +
               "\" --strategy aglr --seed 7 --threads 1 --out \"" + out.string() + "\" > /dev/null") == 0;
    if (ok) matrices.push_back(io::read_text(out / "matrix.csv"));
  }
  const bool identical = ok && matrices.size() == 2 && matrices[0] == matrices[1] && !matrices[0].empty();
  verdict(10, identical,
          fmt("reproducibility: two CLI runs %s (%zu bytes each), %.1f s",
              identical ? "wrote byte-identical matrix.csv" : "differ or failed",
              matrices.empty() ? std::size_t{0} : matrices[0].size(), seconds_since(start)));
  fs::remove_all(root);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <path-to-aglr-cli>\n", argv[0]);
    return 2;
  }
  const std::string cli = argv[1];
  const auto start = Clock::now();
  try {
    ac1_em();
    ac2_bic();
    ac3_gradients();
    ac4_metrics();
    ac5_cl_formulas();
    ac6_to_ac9(run_default_suites({1, 2, 3, 4, 5}));
    ac10_reproducibility(cli);
  } catch (const std::exception& e) {
    std::printf("aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d criteria failed, %.1f s total\n", failures, seconds_since(start));
  return failures == 0 ? 0 : 1;
}
