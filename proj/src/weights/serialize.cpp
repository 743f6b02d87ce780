#include "stunet/weights/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <nlohmann/json.hpp>

#include "stunet/common/crc32.hpp"
#include "stunet/common/error.hpp"
#include "stunet/weights/store.hpp"

namespace stunet {

static_assert(std::endian::native == std::endian::little, "weight files assume a little-endian host");

namespace {

constexpr std::array<char, 4> kMagic{'S', 'T', 'U', 'W'};
constexpr uint64_t kMaxManifest = uint64_t{1} << 30;

template <class U>
void put(std::ostream& out, U v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <class U>
U get(std::istream& in, const char* section) {
  U v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(U))) throw FormatError(section, "file truncated");
  return v;
}

std::span<const std::byte> bytes_of(const Tensor& t) {
  return std::as_bytes(t.data());
}

}  // namespace

WeightFileWriter::WeightFileWriter(const std::string& path, const std::vector<std::pair<std::string, Shape>>& layout)
    : out_(path, std::ios::binary | std::ios::trunc), path_(path), layout_(layout) {
  if (!out_) throw IoError("cannot open '" + path + "' for writing");
  nlohmann::json manifest = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& [name, shape] : layout_) {
    const uint64_t len = static_cast<uint64_t>(shape_numel(shape)) * sizeof(float);
    manifest.push_back({{"name", name}, {"dtype", "f32"}, {"shape", shape}, {"byte_offset", offset}, {"byte_len", len}});
    offset += len;
  }
  const std::string text = manifest.dump();
  out_.write(kMagic.data(), kMagic.size());
  put<uint32_t>(out_, WeightStore::kFormatVersion);
  put<uint64_t>(out_, text.size());
  out_.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out_) throw IoError("failed writing '" + path_ + "'");
}

void WeightFileWriter::write(const std::string& name, const Tensor& tensor) {
  if (finished_ || cursor_ >= layout_.size()) throw InvalidInput("unexpected tensor '" + name + "' after the manifest end");
  const auto& [expected, shape] = layout_[cursor_];
  if (name != expected) throw InvalidInput("expected tensor '" + expected + "', got '" + name + "'");
  if (tensor.shape() != shape) throw InvalidInput("tensor '" + name + "' does not match its manifest shape");
  const auto bytes = bytes_of(tensor);
  out_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  crc_ = crc32(bytes, crc_);
  ++cursor_;
  if (!out_) throw IoError("failed writing '" + path_ + "'");
}

void WeightFileWriter::finish() {
  if (finished_) return;
  if (cursor_ != layout_.size()) {
    throw InvalidInput(std::to_string(layout_.size() - cursor_) + " tensors were never written to '" + path_ + "'");
  }
  put<uint32_t>(out_, crc_);
  out_.flush();
  if (!out_) throw IoError("failed writing '" + path_ + "'");
  finished_ = true;
}

void save(const WeightStore& store, const std::string& path) {
  std::vector<std::pair<std::string, Shape>> layout;
  for (const auto& name : store.names()) layout.emplace_back(name, store.at(name).shape());
  WeightFileWriter writer(path, layout);
  for (const auto& name : store.names()) writer.write(name, store.at(name));
  writer.finish();
}

WeightFileReader::WeightFileReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
  if (!in_) throw IoError("cannot open '" + path + "'");
  std::error_code ec;
  const uint64_t file_size = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot stat '" + path + "'");

  std::array<char, 4> magic{};
  if (!in_.read(magic.data(), magic.size())) throw FormatError("magic", "file truncated");
  if (magic != kMagic) throw FormatError("magic", "not a weight file (bad magic bytes)");
  version_ = get<uint32_t>(in_, "version");
  if (version_ != WeightStore::kFormatVersion) {
    throw FormatError("version", "unsupported format version " + std::to_string(version_));
  }
  const uint64_t manifest_len = get<uint64_t>(in_, "manifest");
  const uint64_t header = 4 + 4 + 8;
  if (manifest_len > kMaxManifest || header + manifest_len + 4 > file_size) {
    throw FormatError("manifest", "declared length " + std::to_string(manifest_len) + " exceeds file size");
  }
  std::string text(manifest_len, '\0');
  if (!in_.read(text.data(), static_cast<std::streamsize>(manifest_len))) throw FormatError("manifest", "file truncated");

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest", std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw FormatError("manifest", "expected a JSON array");
  uint64_t expected_offset = 0;
  try {
    for (const auto& item : doc) {
      ManifestEntry e;
      e.name = item.at("name").get<std::string>();
      if (item.at("dtype").get<std::string>() != "f32") throw FormatError("manifest", "unsupported dtype for " + e.name);
      e.shape = item.at("shape").get<Shape>();
      e.byte_offset = item.at("byte_offset").get<uint64_t>();
      e.byte_len = item.at("byte_len").get<uint64_t>();
      for (auto d : e.shape) {
        if (d < 1) throw FormatError("manifest", "non-positive extent in " + e.name);
      }
      if (e.shape.empty() || e.byte_len != static_cast<uint64_t>(shape_numel(e.shape)) * sizeof(float)) {
        throw FormatError("manifest", "byte length of '" + e.name + "' does not match its shape");
      }
      if (e.byte_offset != expected_offset) throw FormatError("manifest", "non-contiguous offset for '" + e.name + "'");
      expected_offset += e.byte_len;
      manifest_.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest", std::string("malformed entry: ") + e.what());
  }
  payload_len_ = expected_offset;
  if (header + manifest_len + payload_len_ + 4 != file_size) {
    throw FormatError("payload", "file size " + std::to_string(file_size) + " does not match manifest (expected " +
                                     std::to_string(header + manifest_len + payload_len_ + 4) + ")");
  }
}

bool WeightFileReader::next(ManifestEntry& entry, Tensor& tensor) {
  if (cursor_ >= manifest_.size()) return false;
  entry = manifest_[cursor_++];
  std::vector<float> data(static_cast<size_t>(entry.byte_len / sizeof(float)));
  if (!in_.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(entry.byte_len))) {
    throw FormatError("payload", "file truncated inside '" + entry.name + "'");
  }
  running_crc_ = crc32(std::as_bytes(std::span<const float>(data)), running_crc_);
  tensor = Tensor(entry.shape, std::move(data));
  return true;
}

void WeightFileReader::verify_checksum() {
  if (cursor_ != manifest_.size()) throw FormatError("checksum", "payload not fully read");
  const uint32_t stored = get<uint32_t>(in_, "checksum");
  if (stored != running_crc_) throw FormatError("checksum", "CRC32 mismatch, payload is corrupt");
}

WeightStore load(const std::string& path) {
  WeightFileReader reader(path);
  WeightStore store;
  ManifestEntry entry;
  Tensor tensor;
  while (reader.next(entry, tensor)) store.insert(entry.name, std::move(tensor));
  reader.verify_checksum();
  return store;
}

WeightStore load_for_graph(const std::string& path, const NetworkGraph& graph) {
  WeightStore store = load(path);
  check_store(graph, store);
  return store;
}

}  // namespace stunet
