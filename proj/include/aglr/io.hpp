#pragma once

// On-disk formats: binary bag files, the text manifest, matrix/report CSVs,
// GMM family and MIL checkpoint JSON documents, attention dumps.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aglr/core.hpp"
#include "aglr/harness.hpp"
#include "aglr/metrics.hpp"
#include "aglr/mil.hpp"
#include "aglr/replay.hpp"

namespace aglr::io {

inline constexpr std::uint32_t kBagVersion = 1;
// magic(4) version(4) D(4) n(4) label(1) domain(2) synthetic(1)
inline constexpr std::size_t kBagHeaderBytes = 20;

std::vector<std::uint8_t> encode_bag(const FeatureBag& bag);
// bag_id is not part of the binary record; the caller supplies it.
FeatureBag decode_bag(std::span<const std::uint8_t> bytes, std::string bag_id);

void write_bag(const std::filesystem::path& path, const FeatureBag& bag);
// bag_id defaults to the file stem.
FeatureBag read_bag(const std::filesystem::path& path);

struct ManifestRecord {
  std::string path;  // relative to the manifest's directory unless absolute
  std::string bag_id;
  int domain_id = 1;
  bool train = true;
  int label = 0;
};

struct Manifest {
  int dim = 0;
  std::string sequence = "synthetic";
  std::vector<ManifestRecord> records;
};

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

// Writes bags/<bag_id>.bag for every bag plus manifest.txt under `dir`.
Manifest write_suite(const std::filesystem::path& dir, const std::vector<EpisodeDataset>& episodes,
                     const std::string& sequence_name);

// Reads every referenced bag and groups them into episodes 1..T.
SequenceSpec load_sequence(const std::filesystem::path& manifest_path);

std::string matrix_to_csv(const TrainTestMatrix& matrix);
TrainTestMatrix matrix_from_csv(std::string_view text);

std::string report_to_csv(const ClReport& report);

std::string family_to_json(const GmmFamily& family);
GmmFamily family_from_json(std::string_view text);

std::string checkpoint_to_json(const MilParams& params);
MilParams checkpoint_from_json(std::string_view text);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace aglr::io
