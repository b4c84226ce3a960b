#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "duet/common.hpp"

namespace duet {

using Json = nlohmann::json;

// Single-file container: magic, JSON header (array directory + metadata),
// raw little-endian payload. Arrays are f64, f32, or i32 on disk.
class ArchiveWriter {
 public:
  void set_meta(const Json& meta) { meta_ = meta; }
  void add_f64(const std::string& name, const std::vector<int64_t>& shape, const ArrayX& data);
  void add_f32(const std::string& name, const std::vector<int64_t>& shape, const ArrayX& data);
  void add_i32(const std::string& name, const std::vector<int64_t>& shape,
               const std::vector<int32_t>& data);
  void save(const std::string& path) const;

 private:
  struct Entry {
    std::string name, dtype;
    std::vector<int64_t> shape;
    std::vector<char> bytes;
  };
  std::vector<Entry> entries_;
  Json meta_ = Json::object();

  void add_entry(const std::string& name, const std::string& dtype,
                 const std::vector<int64_t>& shape, std::vector<char> bytes);
};

class ArchiveReader {
 public:
  explicit ArchiveReader(const std::string& path);

  const Json& meta() const { return meta_; }
  bool has(const std::string& name) const;
  std::vector<int64_t> shape(const std::string& name) const;
  std::string dtype(const std::string& name) const;
  ArrayX get_floats(const std::string& name) const;  // f32/f64 -> double
  std::vector<int32_t> get_i32(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  struct Entry {
    std::string dtype;
    std::vector<int64_t> shape;
    uint64_t offset = 0, bytes = 0;
  };
  std::string path_;
  Json meta_;
  std::vector<std::pair<std::string, Entry>> entries_;
  std::vector<char> payload_;

  const Entry& entry(const std::string& name) const;
};

// Raw little-endian f32 blob + JSON sidecar, the on-disk convention for
// run outputs and dataset records (<stem>.bin + <stem>.json).
void write_f32_blob(const std::string& bin_path, const ArrayX& data);
ArrayX read_f32_blob(const std::string& bin_path, int64_t expected_count = -1);

Json load_json_file(const std::string& path);
void save_json_file(const std::string& path, const Json& j, int indent = 2);

double f32_round(double v);
ArrayX f32_round(const ArrayX& v);

}  // namespace duet
