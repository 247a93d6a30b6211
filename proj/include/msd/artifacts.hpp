// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>
#include <openssl/evp.h>

#include "msd/errors.hpp"

namespace msd {

inline std::string sha1_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, bytes.data(), bytes.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

/// Git-style blob hash: sha1("blob <size>\0" + content).
inline std::string git_blob_sha1(const std::string& content) {
  std::string framed = "blob " + std::to_string(content.size());
  framed.push_back('\0');
  framed += content;
  return sha1_hex(framed);
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("missing input: " + path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline std::string file_blob_sha1(const std::string& path) {
  return git_blob_sha1(read_file_bytes(path));
}

/// Every artifact directory gets a manifest recording what is needed to
/// re-run it bit-identically: the command, the full configuration and its
/// hash, the seeds, and content hashes of every input file. No timestamps,
/// so re-runs produce identical manifests.
inline void write_manifest(const std::string& dir, const std::string& command,
                           const nlohmann::json& config, const std::vector<std::uint64_t>& seeds,
                           const std::map<std::string, std::string>& input_paths) {
  nlohmann::json m;
  m["command"] = command;
  m["config"] = config;
  m["config_sha1"] = git_blob_sha1(config.dump());
  m["seeds"] = seeds;
  nlohmann::json inputs = nlohmann::json::object();
  for (const auto& [name, path] : input_paths) inputs[name] = file_blob_sha1(path);
  m["inputs"] = inputs;
  std::filesystem::create_directories(dir);
  std::ofstream out(std::filesystem::path(dir) / "manifest.json", std::ios::binary);
  if (!out) throw MissingInputError("cannot write manifest in " + dir);
  out << m.dump(2) << '\n';
}

}  // namespace msd
