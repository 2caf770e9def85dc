// Copyright 2026 The mdmixer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mdmixer/tensor.hpp"

#include <bit>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

// A checkpoint is two sibling files:
//   <stem>.manifest  text; "meta <key> <value>" and "tensor <name> <rows> <cols> <byte offset>" lines
//   <stem>.bin       little-endian float32 data of every tensor, concatenated in manifest order

namespace mdmixer {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are written in native byte order");

struct TensorEntry {
  std::string name;
  Index rows = 0;
  Index cols = 0;
  std::uint64_t offset = 0;
};

struct Manifest {
  std::map<std::string, std::string> meta;
  std::vector<TensorEntry> tensors;
};

std::filesystem::path manifest_path(const std::filesystem::path& stem);
std::filesystem::path blob_path(const std::filesystem::path& stem);

Manifest read_manifest(const std::filesystem::path& stem);
void write_checkpoint_files(const std::filesystem::path& stem, const Manifest& manifest,
                            const std::vector<float>& blob);
std::vector<float> read_blob(const std::filesystem::path& stem);

/// Saves any parameter container exposing for_each(name, tensor).
template <class Params>
void save_checkpoint(const Params& params, const std::filesystem::path& stem,
                     const std::map<std::string, std::string>& meta = {}) {
  Manifest manifest;
  manifest.meta = meta;
  std::vector<float> blob;
  params.for_each([&](std::string_view name, const auto& m) {
    manifest.tensors.push_back(
        TensorEntry{std::string(name), m.rows(), m.cols(), static_cast<std::uint64_t>(blob.size() * sizeof(float))});
    for (Index i = 0; i < m.size(); ++i) blob.push_back(static_cast<float>(m.data()[i]));
  });
  write_checkpoint_files(stem, manifest, blob);
}

/// Fills an already-shaped container. Throws ShapeError naming the first
/// tensor that is missing, extra, or shaped differently.
template <class Params>
Manifest load_checkpoint(Params& params, const std::filesystem::path& stem) {
  Manifest manifest = read_manifest(stem);
  const std::vector<float> blob = read_blob(stem);
  std::map<std::string, const TensorEntry*> by_name;
  for (const auto& e : manifest.tensors) by_name[e.name] = &e;
  std::size_t used = 0;
  params.for_each([&](std::string_view name, auto& m) {
    const auto it = by_name.find(std::string(name));
    if (it == by_name.end()) throw ShapeError("checkpoint is missing tensor '" + std::string(name) + "'");
    const TensorEntry& e = *it->second;
    if (e.rows != m.rows() || e.cols != m.cols()) {
      throw ShapeError("tensor '" + e.name + "' has shape " + std::to_string(e.rows) + "x" + std::to_string(e.cols) +
                       " in the checkpoint but " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                       " in the configuration");
    }
    const std::uint64_t first = e.offset / sizeof(float);
    if (e.offset % sizeof(float) != 0 || first + static_cast<std::uint64_t>(m.size()) > blob.size()) {
      throw ShapeError("tensor '" + e.name + "' lies outside the checkpoint blob");
    }
    using Scalar = typename std::decay_t<decltype(m)>::Scalar;
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(blob[first + static_cast<std::uint64_t>(i)]);
    ++used;
  });
  if (used != manifest.tensors.size()) {
    for (const auto& e : manifest.tensors) {
      bool known = false;
      params.for_each([&](std::string_view name, const auto&) { known = known || name == e.name; });
      if (!known) throw ShapeError("checkpoint has unexpected tensor '" + e.name + "'");
    }
  }
  return manifest;
}

}  // namespace mdmixer
