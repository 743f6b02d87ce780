#pragma once

// Weight container layout (all integers little-endian):
//
//   "STUW" | u32 version (1) | u64 manifest_len | manifest JSON | payload | u32 crc32(payload)
//
// The manifest is a JSON array of {name, dtype: "f32", shape, byte_offset,
// byte_len}; offsets are relative to the start of the payload, which holds
// the tensors back to back as little-endian float32.

#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "stunet/tensor/tensor.hpp"
#include "stunet/weights/store.hpp"

namespace stunet {

class NetworkGraph;

struct ManifestEntry {
  std::string name;
  Shape shape;
  uint64_t byte_offset = 0;
  uint64_t byte_len = 0;
};

// Writes `store` to `path`, streaming each tensor straight from memory.
void save(const WeightStore& store, const std::string& path);

// Sequential writer: the manifest is fixed up front, then tensors are
// appended one at a time in manifest order, so a file can be produced
// without holding every tensor in memory.
class WeightFileWriter {
 public:
  WeightFileWriter(const std::string& path, const std::vector<std::pair<std::string, Shape>>& layout);

  // Throws InvalidInput when `name` or the shape is not the next manifest entry.
  void write(const std::string& name, const Tensor& tensor);

  // Appends the checksum; throws InvalidInput when tensors are missing.
  void finish();

 private:
  std::ofstream out_;
  std::string path_;
  std::vector<std::pair<std::string, Shape>> layout_;
  size_t cursor_ = 0;
  uint32_t crc_ = 0;
  bool finished_ = false;
};

// Reads and checksums the whole file.
WeightStore load(const std::string& path);

// load() followed by check_store() against `graph`.
WeightStore load_for_graph(const std::string& path, const NetworkGraph& graph);

// Sequential reader that holds at most one tensor in memory at a time.
class WeightFileReader {
 public:
  explicit WeightFileReader(const std::string& path);

  const std::vector<ManifestEntry>& manifest() const noexcept { return manifest_; }
  uint32_t version() const noexcept { return version_; }

  // Reads the next tensor in manifest order; returns false at the end.
  bool next(ManifestEntry& entry, Tensor& tensor);

  // Valid once every tensor was read; throws FormatError("checksum") on mismatch.
  void verify_checksum();

 private:
  std::ifstream in_;
  std::string path_;
  uint32_t version_ = 0;
  std::vector<ManifestEntry> manifest_;
  uint64_t payload_len_ = 0;
  size_t cursor_ = 0;
  uint32_t running_crc_ = 0;
};

}  // namespace stunet
