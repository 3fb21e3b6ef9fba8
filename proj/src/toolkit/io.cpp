#include "aglr/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace aglr::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'A', 'G', 'L', 'R'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>((v >> s) & 0xff));
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (static_cast<std::uint16_t>(p[1]) << 8));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_optional(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

int parse_int(std::string_view s, std::string_view what) {
  s = trim(s);
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorCode::ParseError, "bad " + std::string(what) + " '" + std::string(s) + "'");
  }
  return v;
}

std::optional<double> parse_cell(std::string_view s) {
  s = trim(s);
  if (s == "NA") return std::nullopt;
  // strtod keeps exact round trip of %.17g output.
  const std::string owned(s);
  char* end = nullptr;
  const double v = std::strtod(owned.c_str(), &end);
  if (end != owned.c_str() + owned.size() || owned.empty()) {
    throw Error(ErrorCode::ParseError, "bad matrix value '" + owned + "'");
  }
  return v;
}

json gmm_to_json(const GmmModel& m) {
  return json{{"k", m.k},
              {"dim", m.dim},
              {"cov_type", m.cov_type == CovarianceType::Full ? "full" : "diagonal"},
              {"weights", m.weights},
              {"means", std::vector<double>(m.means.flat().begin(), m.means.flat().end())},
              {"covariances", m.covariances},
              {"final_log_likelihood", m.final_log_likelihood},
              {"bic", m.bic},
              {"iterations_used", m.iterations_used},
              {"converged", m.converged}};
}

GmmModel gmm_from_json(const json& j) {
  GmmModel m;
  m.k = j.at("k").get<int>();
  m.dim = j.at("dim").get<int>();
  const auto cov = j.at("cov_type").get<std::string>();
  if (cov != "full" && cov != "diagonal") throw Error(ErrorCode::ParseError, "unknown covariance type " + cov);
  m.cov_type = cov == "full" ? CovarianceType::Full : CovarianceType::Diagonal;
  m.weights = j.at("weights").get<std::vector<double>>();
  m.means = MatrixD(static_cast<std::size_t>(m.k), static_cast<std::size_t>(m.dim),
                    j.at("means").get<std::vector<double>>());
  m.covariances = j.at("covariances").get<std::vector<double>>();
  m.final_log_likelihood = j.at("final_log_likelihood").get<double>();
  m.bic = j.at("bic").get<double>();
  m.iterations_used = j.at("iterations_used").get<int>();
  m.converged = j.at("converged").get<bool>();
  m.validate();
  return m;
}

template <typename F>
auto with_json_errors(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

}  // namespace

std::vector<std::uint8_t> encode_bag(const FeatureBag& bag) {
  validate_bag(bag, bag.dim());
  std::vector<std::uint8_t> out;
  out.reserve(kBagHeaderBytes + 4 * bag.embeddings.size());
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kBagVersion);
  put_u32(out, static_cast<std::uint32_t>(bag.dim()));
  put_u32(out, static_cast<std::uint32_t>(bag.size()));
  out.push_back(static_cast<std::uint8_t>(bag.label));
  put_u16(out, static_cast<std::uint16_t>(bag.domain_id));
  out.push_back(bag.synthetic ? 1 : 0);
  for (float v : bag.embeddings.flat()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

FeatureBag decode_bag(std::span<const std::uint8_t> bytes, std::string bag_id) {
  if (bytes.size() < 4 || !std::equal(kMagic, kMagic + 4, bytes.begin())) {
    throw Error(ErrorCode::BadMagic, "bag '" + bag_id + "' does not start with AGLR");
  }
  if (bytes.size() < kBagHeaderBytes) throw Error(ErrorCode::TruncatedPayload, "bag '" + bag_id + "' header cut short");
  const std::uint8_t* p = bytes.data();
  const std::uint32_t version = get_u32(p + 4);
  if (version != kBagVersion) {
    throw Error(ErrorCode::BadVersion, "bag '" + bag_id + "' has version " + std::to_string(version));
  }
  const std::uint32_t dim = get_u32(p + 8);
  const std::uint32_t n = get_u32(p + 12);
  FeatureBag bag;
  bag.bag_id = std::move(bag_id);
  bag.label = p[16];
  bag.domain_id = get_u16(p + 17);
  bag.synthetic = p[19] != 0;
  const std::uint64_t payload = 4ULL * n * dim;
  if (bytes.size() - kBagHeaderBytes != payload) {
    throw Error(bytes.size() - kBagHeaderBytes < payload ? ErrorCode::TruncatedPayload : ErrorCode::ParseError,
                "bag '" + bag.bag_id + "' payload holds " + std::to_string(bytes.size() - kBagHeaderBytes) +
                    " bytes, header implies " + std::to_string(payload));
  }
  std::vector<float> values(static_cast<std::size_t>(n) * dim);
  const std::uint8_t* q = p + kBagHeaderBytes;
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = std::bit_cast<float>(get_u32(q + 4 * i));
  bag.embeddings = MatrixF(n, dim, std::move(values));
  validate_bag(bag, dim);
  return bag;
}

void write_bag(const fs::path& path, const FeatureBag& bag) {
  const auto bytes = encode_bag(bag);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

FeatureBag read_bag(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_bag(bytes, path.stem().string());
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

// Manifest layout:
//   #aglr-manifest 1
//   #dim <D>
//   #sequence <name>
//   path,bag_id,domain_id,split,label
//   <one record per bag>
void write_manifest(const fs::path& path, const Manifest& manifest) {
  std::ostringstream ss;
  ss << "#aglr-manifest 1\n#dim " << manifest.dim << "\n#sequence " << manifest.sequence << "\n";
  ss << "path,bag_id,domain_id,split,label\n";
  for (const auto& r : manifest.records) {
    ss << r.path << ',' << r.bag_id << ',' << r.domain_id << ',' << (r.train ? "train" : "test") << ','
       << r.label << '\n';
  }
  write_text(path, ss.str());
}

Manifest read_manifest(const fs::path& path) {
  std::istringstream in(read_text(path));
  Manifest m;
  std::string line;
  bool saw_magic = false, saw_dim = false, saw_columns = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = trim(line);
    if (view.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    if (view.front() == '#') {
      if (view.starts_with("#aglr-manifest")) {
        if (trim(view.substr(14)) != "1") throw Error(ErrorCode::BadVersion, where + ": unsupported manifest version");
        saw_magic = true;
      } else if (view.starts_with("#dim")) {
        m.dim = parse_int(view.substr(4), "dim");
        saw_dim = true;
      } else if (view.starts_with("#sequence")) {
        m.sequence = std::string(trim(view.substr(9)));
      }
      continue;
    }
    if (!saw_columns) {
      if (view != "path,bag_id,domain_id,split,label") {
        throw Error(ErrorCode::ParseError, where + ": expected the column header line");
      }
      saw_columns = true;
      continue;
    }
    const auto fields = split(view, ',');
    if (fields.size() != 5) throw Error(ErrorCode::ParseError, where + ": expected 5 fields");
    ManifestRecord r;
    r.path = std::string(trim(fields[0]));
    r.bag_id = std::string(trim(fields[1]));
    r.domain_id = parse_int(fields[2], "domain_id");
    const auto split_name = trim(fields[3]);
    if (split_name != "train" && split_name != "test") {
      throw Error(ErrorCode::ParseError, where + ": split must be train or test");
    }
    r.train = split_name == "train";
    r.label = parse_int(fields[4], "label");
    m.records.push_back(std::move(r));
  }
  if (!saw_magic) throw Error(ErrorCode::BadMagic, path.string() + " is not an aglr manifest");
  if (!saw_dim || m.dim < 1) throw Error(ErrorCode::ParseError, path.string() + " lacks a #dim header");
  return m;
}

Manifest write_suite(const fs::path& dir, const std::vector<EpisodeDataset>& episodes,
                     const std::string& sequence_name) {
  fs::create_directories(dir / "bags");
  Manifest m;
  m.sequence = sequence_name;
  for (const auto& ep : episodes) {
    for (const auto* split_bags : {&ep.train, &ep.test}) {
      for (const auto& bag : *split_bags) {
        if (m.dim == 0) m.dim = static_cast<int>(bag.dim());
        const std::string rel = "bags/" + bag.bag_id + ".bag";
        write_bag(dir / rel, bag);
        m.records.push_back({rel, bag.bag_id, bag.domain_id, split_bags == &ep.train, bag.label});
      }
    }
  }
  write_manifest(dir / "manifest.txt", m);
  return m;
}

SequenceSpec load_sequence(const fs::path& manifest_path) {
  const Manifest m = read_manifest(manifest_path);
  const fs::path base = manifest_path.parent_path();
  std::map<int, EpisodeDataset> by_domain;
  for (const auto& r : m.records) {
    const fs::path p = fs::path(r.path).is_absolute() ? fs::path(r.path) : base / r.path;
    FeatureBag bag = read_bag(p);
    bag.bag_id = r.bag_id;
    if (bag.dim() != static_cast<std::size_t>(m.dim)) {
      throw Error(ErrorCode::DimensionMismatch, "bag '" + r.bag_id + "' has dimension " +
                                                    std::to_string(bag.dim()) + ", manifest says " +
                                                    std::to_string(m.dim));
    }
    if (bag.label != r.label || bag.domain_id != r.domain_id) {
      throw Error(ErrorCode::ParseError, "bag '" + r.bag_id + "' disagrees with its manifest record");
    }
    auto& ep = by_domain[r.domain_id];
    ep.domain_id = r.domain_id;
    (r.train ? ep.train : ep.test).push_back(std::move(bag));
  }
  SequenceSpec spec;
  spec.name = m.sequence;
  for (auto& [id, ep] : by_domain) spec.episodes.push_back(std::move(ep));
  return spec;
}

// Row-major T x T: row (i, j) = performance on test set j after session i,
// both 1-based.
std::string matrix_to_csv(const TrainTestMatrix& matrix) {
  std::ostringstream ss;
  ss << "train_session,test_set,weighted_f1,auroc,auprc\n";
  for (int i = 0; i < matrix.episodes(); ++i) {
    for (int j = 0; j < matrix.episodes(); ++j) {
      const auto& c = matrix.at(i, j);
      ss << i + 1 << ',' << j + 1 << ',' << format_double(c.weighted_f1) << ',' << format_optional(c.auroc) << ','
         << format_optional(c.auprc) << '\n';
    }
  }
  return ss.str();
}

TrainTestMatrix matrix_from_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || trim(line) != "train_session,test_set,weighted_f1,auroc,auprc") {
    throw Error(ErrorCode::ParseError, "matrix CSV lacks its header line");
  }
  struct Row {
    int i, j;
    MetricTriple m;
  };
  std::vector<Row> rows;
  int t = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = split(trim(line), ',');
    if (f.size() != 5) throw Error(ErrorCode::ParseError, "matrix CSV row needs 5 fields: " + line);
    Row r{parse_int(f[0], "train_session"), parse_int(f[1], "test_set"), {}};
    const auto f1 = parse_cell(f[2]);
    if (!f1) throw Error(ErrorCode::ParseError, "weighted F1 cannot be NA");
    r.m.weighted_f1 = *f1;
    r.m.auroc = parse_cell(f[3]);
    r.m.auprc = parse_cell(f[4]);
    t = std::max({t, r.i, r.j});
    rows.push_back(r);
  }
  if (t < 1) throw Error(ErrorCode::ParseError, "matrix CSV has no rows");
  TrainTestMatrix matrix(t);
  for (const auto& r : rows) {
    if (r.i < 1 || r.j < 1) throw Error(ErrorCode::ParseError, "matrix indices are 1-based");
    matrix.set(r.i - 1, r.j - 1, r.m);
  }
  return matrix;
}

std::string report_to_csv(const ClReport& report) {
  std::ostringstream ss;
  ss << "metric,acc,ilm,bwt,excluded_cells\n";
  for (Metric metric : kAllMetrics) {
    const auto& m = report.of(metric);
    ss << to_string(metric) << ',' << format_double(m.acc) << ','
       << (report.ilm_applicable ? format_double(m.ilm) : "NA") << ','
       << (report.bwt_applicable && m.bwt_defined ? format_double(m.bwt) : "NA") << ',' << m.excluded_cells
       << '\n';
  }
  return ss.str();
}

std::string family_to_json(const GmmFamily& family) {
  json j{{"format", "aglr-gmm-family"},
         {"version", 1},
         {"domain_id", family.domain_id},
         {"emb_dim", family.emb_dim},
         {"q_used", family.q_used},
         {"attention_filtering", family.attention_filtering},
         {"class_counts", family.class_counts},
         {"fit_sample_counts", family.fit_sample_counts},
         {"embedding_models", {gmm_to_json(family.embedding_models[0]), gmm_to_json(family.embedding_models[1])}},
         {"count_models", {gmm_to_json(family.count_models[0]), gmm_to_json(family.count_models[1])}}};
  return j.dump(1) + "\n";
}

GmmFamily family_from_json(std::string_view text) {
  return with_json_errors([&] {
    const json j = json::parse(text);
    if (j.at("format") != "aglr-gmm-family") throw Error(ErrorCode::BadMagic, "not a GMM family document");
    if (j.at("version") != 1) throw Error(ErrorCode::BadVersion, "unsupported GMM family version");
    GmmFamily f;
    f.domain_id = j.at("domain_id").get<int>();
    f.emb_dim = j.at("emb_dim").get<int>();
    f.q_used = j.at("q_used").get<double>();
    f.attention_filtering = j.at("attention_filtering").get<bool>();
    f.class_counts = j.at("class_counts").get<std::array<std::size_t, 2>>();
    f.fit_sample_counts = j.at("fit_sample_counts").get<std::array<std::size_t, 2>>();
    for (int c = 0; c < 2; ++c) {
      f.embedding_models[c] = gmm_from_json(j.at("embedding_models").at(c));
      f.count_models[c] = gmm_from_json(j.at("count_models").at(c));
    }
    f.validate();
    return f;
  });
}

std::string checkpoint_to_json(const MilParams& params) {
  const auto& s = params.shape();
  json j{{"format", "aglr-mil-checkpoint"},
         {"version", 1},
         {"input_dim", s.input_dim},
         {"embed_dim", s.embed_dim},
         {"attention_dim", s.attention_dim},
         {"gated", s.gated},
         {"values", std::vector<float>(params.values().begin(), params.values().end())}};
  return j.dump() + "\n";
}

MilParams checkpoint_from_json(std::string_view text) {
  return with_json_errors([&] {
    const json j = json::parse(text);
    if (j.at("format") != "aglr-mil-checkpoint") throw Error(ErrorCode::BadMagic, "not a MIL checkpoint");
    if (j.at("version") != 1) throw Error(ErrorCode::BadVersion, "unsupported checkpoint version");
    MilParams p(MilShape{j.at("input_dim").get<int>(), j.at("embed_dim").get<int>(),
                         j.at("attention_dim").get<int>(), j.at("gated").get<bool>()});
    const auto values = j.at("values").get<std::vector<float>>();
    if (values.size() != p.size()) {
      throw Error(ErrorCode::DimensionMismatch, "checkpoint holds " + std::to_string(values.size()) +
                                                    " values, shape needs " + std::to_string(p.size()));
    }
    std::copy(values.begin(), values.end(), p.values().begin());
    if (!p.all_finite()) throw Error(ErrorCode::NonFiniteValue, "checkpoint contains non-finite values");
    return p;
  });
}

}  // namespace aglr::io
