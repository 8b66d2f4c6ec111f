// Artifact I/O: deterministic CSV/JSON writers, checksums, run manifests.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "acelab/metrics.hpp"

namespace acelab {

/// Shortest round-trip decimal representation (std::to_chars); deterministic
/// across runs, so identical computations yield byte-identical artifacts.
std::string format_double(double value);

/// FNV-1a 64-bit over a byte buffer / file contents, rendered as 16 hex
/// digits. Integrity bookkeeping for manifests, not cryptographic.
std::uint64_t fnv1a64(const std::string& bytes);
std::string file_checksum(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

/// Metrics CSV, one row per checkpoint. Columns are fixed and versioned in
/// the leading comment line; the undefined conditional mean is written as
/// "NA", never 0.
extern const char* kMetricsCsvHeader;
std::string metrics_to_csv(const std::vector<MetricsRecord>& records);

struct RunManifest {
  std::string command;
  std::string out_dir;
  std::vector<std::uint64_t> seeds;
  std::map<std::string, std::string> config_snapshot;
  std::vector<std::pair<std::string, std::string>> artifacts;  // name -> checksum
  std::string started_at;
  std::string finished_at;
};

std::string current_timestamp_utc();

/// Serializes the manifest as JSON. Every artifact name is relative to
/// out_dir and carries its checksum.
std::string manifest_to_json(const RunManifest& manifest);

/// Adds (name, checksum-of-file) for a file living under manifest.out_dir.
void add_artifact(RunManifest& manifest, const std::string& name);

/// Writes manifest.json itself into out_dir (not listed as its own artifact).
void write_manifest(RunManifest& manifest);

}  // namespace acelab
