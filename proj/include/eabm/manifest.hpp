#pragma once

#include <array>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "eabm/io.hpp"

namespace eabm::manifest {

struct OutputFile {
  std::string path;  // relative to the output directory
  uint64_t bytes = 0;
  std::string fnv64;
};

// Everything needed to reproduce a run byte-for-byte: the command, the full
// configuration, the seeds, the artifact version and checksummed outputs.
struct RunManifest {
  std::string command;
  std::map<std::string, std::string> config;
  std::vector<uint64_t> seeds;
  std::string version = io::kVersion;
  std::string git_describe = "unknown";
  std::map<std::string, std::string> clock;
  std::vector<OutputFile> outputs;

  void add_output(const std::filesystem::path& out_dir, const std::string& rel) {
    auto full = out_dir / rel;
    OutputFile f;
    f.path = rel;
    f.bytes = std::filesystem::file_size(full);
    f.fnv64 = io::hex64(io::fnv1a64_file(full));
    outputs.push_back(f);
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["command"] = command;
    j["config"] = config;
    j["seeds"] = seeds;
    j["version"] = version;
    j["git_describe"] = git_describe;
    j["clock"] = clock;
    auto arr = nlohmann::json::array();
    for (const auto& f : outputs) arr.push_back({{"path", f.path}, {"bytes", f.bytes}, {"fnv64", f.fnv64}});
    j["outputs"] = arr;
    return j;
  }

  void write(const std::filesystem::path& out_dir) const {
    io::write_file(out_dir / "manifest.json", to_json().dump(2) + "\n");
  }
};

inline std::string git_describe() {
  std::array<char, 256> buf{};
  std::string out;
  std::unique_ptr<FILE, int (*)(FILE*)> pipe(
      popen("git describe --always --dirty 2>/dev/null", "r"), pclose);
  if (!pipe) return "unknown";
  while (fgets(buf.data(), buf.size(), pipe.get())) out += buf.data();
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
  return out.empty() ? "unknown" : out;
}

}  // namespace eabm::manifest
