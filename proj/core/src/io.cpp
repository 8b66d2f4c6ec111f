#include "acelab/io.hpp"

#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace acelab {

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    hash ^= b;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string file_checksum(const std::string& path) {
  std::uint64_t hash = fnv1a64(read_file(path));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << contents;
  if (!out) throw std::runtime_error("write failed for " + path);
}

const char* kMetricsCsvHeader =
    "# acelab-metrics-v1\n"
    "step,mean_reward,oef,mean_overconfidence,entropy,kl,clip_fraction\n";

std::string metrics_to_csv(const std::vector<MetricsRecord>& records) {
  std::string out = kMetricsCsvHeader;
  for (const auto& r : records) {
    out += std::to_string(r.step);
    out += ',';
    out += format_double(r.mean_reward);
    out += ',';
    out += format_double(r.oef);
    out += ',';
    out += r.mean_overconfidence ? format_double(*r.mean_overconfidence) : "NA";
    out += ',';
    out += format_double(r.entropy);
    out += ',';
    out += format_double(r.kl_to_ref);
    out += ',';
    out += format_double(r.clip_fraction);
    out += '\n';
  }
  return out;
}

std::string current_timestamp_utc() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string manifest_to_json(const RunManifest& manifest) {
  nlohmann::ordered_json j;
  j["command"] = manifest.command;
  j["out_dir"] = manifest.out_dir;
  j["seeds"] = manifest.seeds;
  j["config"] = manifest.config_snapshot;
  nlohmann::ordered_json artifacts = nlohmann::ordered_json::array();
  for (const auto& [name, checksum] : manifest.artifacts) {
    artifacts.push_back({{"name", name}, {"fnv1a64", checksum}});
  }
  j["artifacts"] = artifacts;
  j["started_at"] = manifest.started_at;
  j["finished_at"] = manifest.finished_at;
  return j.dump(2) + "\n";
}

void add_artifact(RunManifest& manifest, const std::string& name) {
  std::filesystem::path path = std::filesystem::path(manifest.out_dir) / name;
  manifest.artifacts.emplace_back(name, file_checksum(path.string()));
}

void write_manifest(RunManifest& manifest) {
  manifest.finished_at = current_timestamp_utc();
  std::filesystem::path path = std::filesystem::path(manifest.out_dir) / "manifest.json";
  write_file(path.string(), manifest_to_json(manifest));
}

}  // namespace acelab
