#include "aglr/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "aglr/harness.hpp"
#include "aglr/io.hpp"
#include "aglr/synthetic.hpp"

namespace aglr {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct GenArgs {
  std::string spec_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::string sequence = "synthetic";
};

struct RunArgs {
  std::string manifest;
  std::string strategy;
  std::uint64_t seed = 0;
  std::string out_dir;
  double q = 80.0;
  bool no_abf = false;
  std::size_t buffer = 100;
  std::vector<int> emb_k{8, 16, 24};
  std::vector<int> count_k{1, 2, 3, 4, 5};
  int epochs = 20;
  double lr = 1e-4;
  std::string cov = "full";
  std::string ilm = "lower";
  bool gated = false;
  int threads = 1;
};

struct ReportArgs {
  std::string matrix;
  std::string ilm = "lower";
  bool raw = false;
};

struct DumpArgs {
  std::string manifest;
  std::string checkpoint;
  std::string out;
};

IlmVariant parse_ilm(const std::string& name) {
  return name == "full" ? IlmVariant::FullRow : IlmVariant::LowerTriangular;
}

SyntheticDomainSpec spec_from_json(const json& j) {
  SyntheticDomainSpec s;
  s.dim = j.value("dim", s.dim);
  s.domains = j.value("domains", s.domains);
  s.bags_per_class = j.value("bags_per_class", s.bags_per_class);
  s.test_fraction = j.value("test_fraction", s.test_fraction);
  s.min_bag = j.value("min_bag", s.min_bag);
  s.max_bag = j.value("max_bag", s.max_bag);
  s.witness_rate = j.value("witness_rate", s.witness_rate);
  s.signal_strength = j.value("signal_strength", s.signal_strength);
  s.background_scale = j.value("background_scale", s.background_scale);
  s.noise_scale = j.value("noise_scale", s.noise_scale);
  s.rotation_step = j.value("rotation_step", s.rotation_step);
  s.shift_scale = j.value("shift_scale", s.shift_scale);
  s.conflict = j.value("conflict", s.conflict);
  if (j.contains("per_domain")) {
    for (const auto& d : j.at("per_domain")) {
      DomainShift shift;
      shift.rotation = d.value("rotation", shift.rotation);
      shift.shift = d.value("shift", shift.shift);
      shift.noise = d.value("noise", shift.noise);
      shift.conflict = d.value("conflict", shift.conflict);
      s.per_domain.push_back(shift);
    }
  }
  return s;
}

int cmd_gen_data(const GenArgs& a, std::ostream& out) {
  SyntheticDomainSpec spec;
  if (!a.spec_path.empty()) {
    try {
      spec = spec_from_json(json::parse(io::read_text(a.spec_path)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, a.spec_path + ": " + e.what());
    }
  }
  const auto episodes = generate_suite(spec, RngStream(a.seed, "suite"));
  const auto manifest = io::write_suite(a.out_dir, episodes, a.sequence);
  out << "wrote " << manifest.records.size() << " bags over " << episodes.size() << " domains to "
      << (fs::path(a.out_dir) / "manifest.txt").string() << "\n";
  return kExitOk;
}

std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

void print_report(const ClReport& report, bool raw, std::ostream& out) {
  // Percentage points by default, two decimals.
  const double scale = raw ? 1.0 : 100.0;
  const int decimals = raw ? 6 : 2;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %10s %10s %10s %9s\n", "metric", "ACC", "ILM", "BWT", "excluded");
  out << line;
  for (Metric metric : kAllMetrics) {
    const auto& m = report.of(metric);
    const std::string ilm = report.ilm_applicable ? format_fixed(scale * m.ilm, decimals) : "n/a";
    const std::string bwt =
        report.bwt_applicable && m.bwt_defined ? format_fixed(scale * m.bwt + 0.0, decimals) : "n/a";
    std::snprintf(line, sizeof line, "%-12s %10s %10s %10s %9d\n", std::string(to_string(metric)).c_str(),
                  format_fixed(scale * m.acc, decimals).c_str(), ilm.c_str(), bwt.c_str(), m.excluded_cells);
    out << line;
  }
}

json run_summary(const RunArgs& a, const Strategy& strategy, const RunResult& r) {
  json episodes = json::array();
  for (const auto& e : r.episodes) {
    episodes.push_back({{"domain_id", e.domain_id},
                        {"training_set_size", e.training_set_size},
                        {"synthetic_bags", e.synthetic_bags},
                        {"real_past_bags", e.real_past_bags},
                        {"family_fit_samples", e.family_fit_samples},
                        {"seconds", e.seconds}});
  }
  json report;
  for (Metric metric : kAllMetrics) {
    const auto& m = r.report.of(metric);
    report[std::string(to_string(metric))] = {{"acc", m.acc},
                                              {"ilm", r.report.ilm_applicable ? json(m.ilm) : json()},
                                              {"bwt", r.report.bwt_applicable && m.bwt_defined ? json(m.bwt) : json()},
                                              {"excluded_cells", m.excluded_cells}};
  }
  return {{"strategy", r.strategy},
          {"sequence", r.sequence},
          {"seed", a.seed},
          {"manifest", a.manifest},
          {"buffer", strategy.buffer_size},
          {"q", strategy.replay.q},
          {"attention_filtering", strategy.replay.attention_filtering},
          {"emb_k", strategy.replay.emb_k_candidates},
          {"count_k", strategy.replay.count_k_candidates},
          {"epochs", a.epochs},
          {"learning_rate", a.lr},
          {"covariance", a.cov},
          {"gated", a.gated},
          {"access_checks", r.access_checks},
          {"episodes", episodes},
          {"report", report}};
}

int cmd_run(const RunArgs& a, std::ostream& out) {
  const auto kind = Strategy::parse(a.strategy);
  if (!kind) throw Error(ErrorCode::InvalidArgument, "unknown strategy " + a.strategy);
  Strategy strategy{*kind, a.buffer, {}};
  strategy.replay.q = a.q;
  strategy.replay.attention_filtering = !a.no_abf;
  strategy.replay.emb_k_candidates = a.emb_k;
  strategy.replay.count_k_candidates = a.count_k;

  RunOptions options;
  options.train.epochs = a.epochs;
  options.train.learning_rate = a.lr;
  options.train.gated = a.gated;
  options.em.cov_type = a.cov == "diagonal" ? CovarianceType::Diagonal : CovarianceType::Full;
  options.ilm = parse_ilm(a.ilm);
  options.eval_threads = a.threads;

  SequenceSpec spec = io::load_sequence(a.manifest);
  spec.seed = a.seed;
  const RunResult result = run_sequence(spec, strategy, options, RngStream(a.seed, "run"));

  const fs::path dir(a.out_dir);
  io::write_text(dir / "matrix.csv", io::matrix_to_csv(result.matrix));
  io::write_text(dir / "report.csv", io::report_to_csv(result.report));
  fs::create_directories(dir / "families");
  for (const auto& family : result.families) {
    io::write_text(dir / "families" / ("domain" + std::to_string(family.domain_id) + ".json"),
                   io::family_to_json(family));
  }
  fs::create_directories(dir / "checkpoints");
  for (std::size_t i = 0; i < result.checkpoints.size(); ++i) {
    const int session = strategy.kind == StrategyKind::Joint ? static_cast<int>(spec.episodes.size())
                                                             : static_cast<int>(i + 1);
    io::write_text(dir / "checkpoints" / ("session" + std::to_string(session) + ".json"),
                   io::checkpoint_to_json(result.checkpoints[i]));
  }
  io::write_text(dir / "run.json", run_summary(a, strategy, result).dump(2) + "\n");

  out << "strategy " << result.strategy << ", " << spec.episodes.size() << " sessions\n";
  print_report(result.report, false, out);
  return kExitOk;
}

int cmd_report(const ReportArgs& a, std::ostream& out) {
  const auto matrix = io::matrix_from_csv(io::read_text(a.matrix));
  print_report(cl_report(matrix, parse_ilm(a.ilm)), a.raw, out);
  return kExitOk;
}

int cmd_dump_attention(const DumpArgs& a, std::ostream& out) {
  const auto params = io::checkpoint_from_json(io::read_text(a.checkpoint));
  const auto spec = io::load_sequence(a.manifest);
  if (spec.dim() != static_cast<std::size_t>(params.shape().input_dim)) {
    throw Error(ErrorCode::DimensionMismatch, "checkpoint expects dimension " +
                                                  std::to_string(params.shape().input_dim) + ", bags have " +
                                                  std::to_string(spec.dim()));
  }
  std::ostringstream csv;
  csv << "bag_id,instance_index,attention\n";
  std::size_t rows = 0;
  char value[32];
  for (const auto& ep : spec.episodes) {
    for (const auto* split : {&ep.train, &ep.test}) {
      for (const auto& bag : *split) {
        const auto att = attention_scores(bag, params);
        for (std::size_t i = 0; i < att.size(); ++i) {
          std::snprintf(value, sizeof value, "%.9g", static_cast<double>(att[i]));
          csv << bag.bag_id << ',' << i << ',' << value << '\n';
          ++rows;
        }
      }
    }
  }
  io::write_text(a.out, csv.str());
  out << "wrote " << rows << " attention rows to " << a.out << "\n";
  return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latent replay for domain-incremental MIL", "aglr"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic domain-shift suite");
  gen_cmd->add_option("--spec", gen.spec_path, "JSON generator settings (defaults when omitted)");
  gen_cmd->add_option("--out", gen.out_dir, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Seed")->required();
  gen_cmd->add_option("--sequence", gen.sequence, "Sequence name recorded in the manifest");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run one strategy over a manifest's episodes");
  run_cmd->add_option("--manifest", run.manifest, "Manifest file")->required();
  run_cmd->add_option("--strategy", run.strategy, "Strategy")
      ->required()
      ->check(CLI::IsMember({"naive", "joint", "cumulative", "replay", "gdumb", "aglr"}));
  run_cmd->add_option("--seed", run.seed, "Seed")->required();
  run_cmd->add_option("--out", run.out_dir, "Output directory")->required();
  run_cmd->add_option("--q", run.q, "Percent of top-attention instances kept")->check(CLI::Range(0.0, 100.0));
  run_cmd->add_flag("--no-abf", run.no_abf, "Fit mixtures on all instances");
  run_cmd->add_option("--buffer", run.buffer, "Replay/GDumb buffer size in bags")->check(CLI::PositiveNumber);
  run_cmd->add_option("--emb-k", run.emb_k, "Embedding mixture K candidates")->delimiter(',');
  run_cmd->add_option("--count-k", run.count_k, "Bag-size mixture K candidates")->delimiter(',');
  run_cmd->add_option("--epochs", run.epochs, "Epochs per session")->check(CLI::PositiveNumber);
  run_cmd->add_option("--lr", run.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  run_cmd->add_option("--cov", run.cov, "Covariance type")->check(CLI::IsMember({"full", "diagonal"}));
  run_cmd->add_option("--ilm", run.ilm, "ILM averaging")->check(CLI::IsMember({"lower", "full"}));
  run_cmd->add_flag("--gated", run.gated, "Gated attention");
  run_cmd->add_option("--threads", run.threads, "Evaluation threads")->check(CLI::PositiveNumber);

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Print ACC/ILM/BWT from a matrix.csv");
  report_cmd->add_option("--matrix", report.matrix, "matrix.csv")->required();
  report_cmd->add_option("--ilm", report.ilm, "ILM averaging")->check(CLI::IsMember({"lower", "full"}));
  report_cmd->add_flag("--raw", report.raw, "Unscaled values instead of percentage points");

  DumpArgs dump;
  auto* dump_cmd = app.add_subcommand("dump-attention", "Write per-instance attention for every bag");
  dump_cmd->add_option("--manifest", dump.manifest, "Manifest file")->required();
  dump_cmd->add_option("--checkpoint", dump.checkpoint, "Checkpoint JSON")->required();
  dump_cmd->add_option("--out", dump.out, "Output CSV")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    const CLI::App* sub = nullptr;
    for (const auto* s : app.get_subcommands()) sub = s;
    err << (sub ? sub->help() : app.help());
    return kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_data(gen, out);
    if (run_cmd->parsed()) return cmd_run(run, out);
    if (report_cmd->parsed()) return cmd_report(report, out);
    if (dump_cmd->parsed()) return cmd_dump_attention(dump, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace aglr
