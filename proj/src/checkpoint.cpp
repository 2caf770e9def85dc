// Copyright 2026 The mdmixer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mdmixer/checkpoint.hpp"

#include <fstream>
#include <sstream>

namespace mdmixer {

std::filesystem::path manifest_path(const std::filesystem::path& stem) {
  return std::filesystem::path(stem.string() + ".manifest");
}

std::filesystem::path blob_path(const std::filesystem::path& stem) {
  return std::filesystem::path(stem.string() + ".bin");
}

Manifest read_manifest(const std::filesystem::path& stem) {
  const auto path = manifest_path(stem);
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint manifest '" + path.string() + "'");
  Manifest manifest;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string kind;
    ss >> kind;
    if (kind == "meta") {
      std::string key, value;
      ss >> key;
      std::getline(ss >> std::ws, value);
      manifest.meta[key] = value;
    } else if (kind == "tensor") {
      TensorEntry e;
      if (!(ss >> e.name >> e.rows >> e.cols >> e.offset)) {
        throw DataError("malformed manifest line " + std::to_string(lineno) + " in '" + path.string() + "'");
      }
      manifest.tensors.push_back(std::move(e));
    } else {
      throw DataError("unknown manifest entry '" + kind + "' on line " + std::to_string(lineno));
    }
  }
  return manifest;
}

void write_checkpoint_files(const std::filesystem::path& stem, const Manifest& manifest,
                            const std::vector<float>& blob) {
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  std::ofstream out(manifest_path(stem), std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint manifest for '" + stem.string() + "'");
  out << "# mdmixer checkpoint v1\n";
  for (const auto& [key, value] : manifest.meta) out << "meta " << key << ' ' << value << '\n';
  for (const auto& e : manifest.tensors) {
    out << "tensor " << e.name << ' ' << e.rows << ' ' << e.cols << ' ' << e.offset << '\n';
  }
  std::ofstream bin(blob_path(stem), std::ios::binary | std::ios::trunc);
  if (!bin) throw DataError("cannot write checkpoint blob for '" + stem.string() + "'");
  bin.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size() * sizeof(float)));
}

std::vector<float> read_blob(const std::filesystem::path& stem) {
  const auto path = blob_path(stem);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint blob '" + path.string() + "'");
  const auto bytes = std::filesystem::file_size(path);
  if (bytes % sizeof(float) != 0) throw DataError("checkpoint blob size is not a multiple of 4 bytes");
  std::vector<float> blob(bytes / sizeof(float));
  in.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(bytes));
  return blob;
}

}  // namespace mdmixer
