#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "vprune/error.hpp"
#include "vprune/io.hpp"

namespace vprune {

inline constexpr std::string_view kToolVersion = "0.1.0";

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

// Record of what a command produced. Artifact paths are stored relative to
// the manifest's directory so reruns into different directories compare equal.
class PipelineManifest {
 public:
  PipelineManifest(std::string command, nlohmann::ordered_json config)
      : command_(std::move(command)), config_(std::move(config)) {}

  void add_artifact(const std::string& relative_path, std::string_view bytes) {
    artifacts_.push_back({relative_path, sha256_hex(bytes), bytes.size()});
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["tool"] = "vprune";
    j["version"] = kToolVersion;
    j["command"] = command_;
    j["config"] = config_;
    auto arts = nlohmann::ordered_json::array();
    for (const auto& a : artifacts_) {
      nlohmann::ordered_json e;
      e["path"] = a.path;
      e["sha256"] = a.sha256;
      e["bytes"] = a.bytes;
      arts.push_back(std::move(e));
    }
    j["artifacts"] = std::move(arts);
    return j;
  }

 private:
  struct Artifact {
    std::string path;
    std::string sha256;
    std::size_t bytes;
  };
  std::string command_;
  nlohmann::ordered_json config_;
  std::vector<Artifact> artifacts_;
};

// Staged output for one command: nothing touches disk until commit(), which
// writes every file through temp-and-rename and then the manifest.
class ArtifactWriter {
 public:
  ArtifactWriter(std::filesystem::path dir, std::string command, nlohmann::ordered_json config)
      : dir_(std::move(dir)), manifest_(std::move(command), std::move(config)) {}

  void stage(const std::string& relative_path, std::string bytes) {
    manifest_.add_artifact(relative_path, bytes);
    files_.push_back({relative_path, std::move(bytes)});
  }

  void commit(const std::string& manifest_name = "manifest.json") {
    for (const auto& f : files_) io::write_file_atomic(dir_ / f.path, f.bytes);
    io::write_file_atomic(dir_ / manifest_name, manifest_.to_json().dump(2) + "\n");
  }

  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  struct Staged {
    std::string path;
    std::string bytes;
  };
  std::filesystem::path dir_;
  PipelineManifest manifest_;
  std::vector<Staged> files_;
};

// Checks every digest listed in a manifest against the files next to it.
inline bool verify_manifest(const std::filesystem::path& manifest_path) {
  const auto doc = nlohmann::json::parse(io::read_file(manifest_path));
  const auto dir = manifest_path.parent_path();
  for (const auto& a : doc.at("artifacts")) {
    const auto p = dir / a.at("path").get<std::string>();
    if (!std::filesystem::exists(p)) return false;
    if (sha256_hex(io::read_file(p)) != a.at("sha256").get<std::string>()) return false;
  }
  return true;
}

}  // namespace vprune
