#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "fiberinfer/common.hpp"
#include "fiberinfer/sampling.hpp"

namespace fiberinfer {

/// Self-describing binary tensor container: 8-byte magic, little-endian u64
/// JSON length, JSON header (field descriptors + free-form metadata), then
/// the raw little-endian arrays in header order. Arrays are 32-bit floats or
/// 32-bit signed integers.
class TensorContainer {
 public:
  nlohmann::json meta;

  void add_f32(const std::string& name, std::vector<std::int64_t> shape,
               std::vector<float> data);
  void add_i32(const std::string& name, std::vector<std::int64_t> shape,
               std::vector<std::int32_t> data);

  bool has(const std::string& name) const;
  const std::vector<float>& f32(const std::string& name) const;
  const std::vector<std::int32_t>& i32(const std::string& name) const;
  const std::vector<std::int64_t>& shape(const std::string& name) const;

  void save(const std::string& path) const;
  static TensorContainer load(const std::string& path);

  /// Hash of the serialized bytes, for manifest chains.
  std::uint64_t content_hash() const;

 private:
  struct Field {
    std::string name;
    std::string dtype;  // "f32" or "i32"
    std::vector<std::int64_t> shape;
    std::vector<float> f32;
    std::vector<std::int32_t> i32;
  };
  const Field& find(const std::string& name) const;
  std::vector<char> serialize() const;
  std::vector<Field> fields_;
};

/// Dataset persistence. The scheme is embedded as gradient-table text in the
/// header (full double precision) together with its hash, so a dataset file
/// is usable on its own.
void save_dataset(const std::string& path, const AcquisitionScheme& scheme,
                  const std::vector<DatasetRecord>& records,
                  const nlohmann::json& extra_meta);

struct LoadedDataset {
  AcquisitionScheme scheme;
  std::vector<DatasetRecord> records;  // clean_signals empty (not stored)
  nlohmann::json meta;
  std::uint64_t file_hash = 0;
};
LoadedDataset load_dataset(const std::string& path);

}  // namespace fiberinfer
