#include "duet/serialize.hpp"

#include <cstring>
#include <fstream>

namespace duet {

namespace {
constexpr char kMagic[8] = {'D', 'U', 'E', 'T', 'A', 'R', 'C', '1'};

int64_t shape_count(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}
}  // namespace

void ArchiveWriter::add_entry(const std::string& name, const std::string& dtype,
                              const std::vector<int64_t>& shape, std::vector<char> bytes) {
  for (const Entry& e : entries_) DUET_CHECK(e.name != name, "archive: duplicate entry ", name);
  entries_.push_back(Entry{name, dtype, shape, std::move(bytes)});
}

void ArchiveWriter::add_f64(const std::string& name, const std::vector<int64_t>& shape,
                            const ArrayX& data) {
  DUET_CHECK(shape_count(shape) == data.size(), "archive ", name, ": shape/data mismatch");
  std::vector<char> bytes(data.size() * sizeof(double));
  std::memcpy(bytes.data(), data.data(), bytes.size());
  add_entry(name, "f64", shape, std::move(bytes));
}

void ArchiveWriter::add_f32(const std::string& name, const std::vector<int64_t>& shape,
                            const ArrayX& data) {
  DUET_CHECK(shape_count(shape) == data.size(), "archive ", name, ": shape/data mismatch");
  std::vector<char> bytes(data.size() * sizeof(float));
  float* f = reinterpret_cast<float*>(bytes.data());
  for (int64_t i = 0; i < data.size(); ++i) f[i] = static_cast<float>(data[i]);
  add_entry(name, "f32", shape, std::move(bytes));
}

void ArchiveWriter::add_i32(const std::string& name, const std::vector<int64_t>& shape,
                            const std::vector<int32_t>& data) {
  DUET_CHECK(shape_count(shape) == static_cast<int64_t>(data.size()), "archive ", name,
             ": shape/data mismatch");
  std::vector<char> bytes(data.size() * sizeof(int32_t));
  std::memcpy(bytes.data(), data.data(), bytes.size());
  add_entry(name, "i32", shape, std::move(bytes));
}

void ArchiveWriter::save(const std::string& path) const {
  Json dir = Json::array();
  uint64_t offset = 0;
  for (const Entry& e : entries_) {
    dir.push_back({{"name", e.name},
                   {"dtype", e.dtype},
                   {"shape", e.shape},
                   {"offset", offset},
                   {"bytes", e.bytes.size()}});
    offset += e.bytes.size();
  }
  Json header = {{"version", 1}, {"meta", meta_}, {"arrays", dir}};
  std::string hs = header.dump();

  std::ofstream os(path, std::ios::binary);
  DUET_CHECK(os.good(), "cannot open for write: ", path);
  os.write(kMagic, 8);
  uint64_t hlen = hs.size();
  os.write(reinterpret_cast<const char*>(&hlen), 8);
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const Entry& e : entries_)
    os.write(e.bytes.data(), static_cast<std::streamsize>(e.bytes.size()));
  DUET_CHECK(os.good(), "write failed: ", path);
}

ArchiveReader::ArchiveReader(const std::string& path) : path_(path) {
  std::ifstream is(path, std::ios::binary);
  DUET_CHECK(is.good(), "cannot open archive: ", path);
  char magic[8];
  is.read(magic, 8);
  DUET_CHECK(is.good() && std::memcmp(magic, kMagic, 8) == 0, "not a duet archive: ", path);
  uint64_t hlen = 0;
  is.read(reinterpret_cast<char*>(&hlen), 8);
  DUET_CHECK(is.good() && hlen < (1ull << 30), "corrupt archive header: ", path);
  std::string hs(hlen, '\0');
  is.read(hs.data(), static_cast<std::streamsize>(hlen));
  DUET_CHECK(is.good(), "truncated archive header: ", path);
  Json header = Json::parse(hs, nullptr, false);
  DUET_CHECK(!header.is_discarded(), "archive header is not valid JSON: ", path);
  meta_ = header.value("meta", Json::object());
  uint64_t total = 0;
  for (const Json& a : header.at("arrays")) {
    Entry e;
    e.dtype = a.at("dtype").get<std::string>();
    e.shape = a.at("shape").get<std::vector<int64_t>>();
    e.offset = a.at("offset").get<uint64_t>();
    e.bytes = a.at("bytes").get<uint64_t>();
    total = std::max(total, e.offset + e.bytes);
    entries_.emplace_back(a.at("name").get<std::string>(), e);
  }
  payload_.resize(total);
  is.read(payload_.data(), static_cast<std::streamsize>(total));
  DUET_CHECK(is.gcount() == static_cast<std::streamsize>(total), "truncated archive payload: ",
             path);
}

bool ArchiveReader::has(const std::string& name) const {
  for (const auto& [n, e] : entries_)
    if (n == name) return true;
  return false;
}

const ArchiveReader::Entry& ArchiveReader::entry(const std::string& name) const {
  for (const auto& [n, e] : entries_)
    if (n == name) return e;
  fail("archive ", path_, ": missing entry ", name);
}

std::vector<int64_t> ArchiveReader::shape(const std::string& name) const {
  return entry(name).shape;
}

std::string ArchiveReader::dtype(const std::string& name) const { return entry(name).dtype; }

ArrayX ArchiveReader::get_floats(const std::string& name) const {
  const Entry& e = entry(name);
  int64_t count = shape_count(e.shape);
  ArrayX out(count);
  if (e.dtype == "f64") {
    DUET_CHECK(e.bytes == static_cast<uint64_t>(count) * 8, "archive ", name, ": byte count");
    std::memcpy(out.data(), payload_.data() + e.offset, e.bytes);
  } else if (e.dtype == "f32") {
    DUET_CHECK(e.bytes == static_cast<uint64_t>(count) * 4, "archive ", name, ": byte count");
    const float* f = reinterpret_cast<const float*>(payload_.data() + e.offset);
    for (int64_t i = 0; i < count; ++i) out[i] = f[i];
  } else {
    fail("archive ", name, ": not a float array (dtype ", e.dtype, ")");
  }
  return out;
}

std::vector<int32_t> ArchiveReader::get_i32(const std::string& name) const {
  const Entry& e = entry(name);
  DUET_CHECK(e.dtype == "i32", "archive ", name, ": expected i32, got ", e.dtype);
  int64_t count = shape_count(e.shape);
  std::vector<int32_t> out(count);
  std::memcpy(out.data(), payload_.data() + e.offset, e.bytes);
  return out;
}

std::vector<std::string> ArchiveReader::names() const {
  std::vector<std::string> out;
  for (const auto& [n, e] : entries_) out.push_back(n);
  return out;
}

void write_f32_blob(const std::string& bin_path, const ArrayX& data) {
  std::ofstream os(bin_path, std::ios::binary);
  DUET_CHECK(os.good(), "cannot open for write: ", bin_path);
  std::vector<float> f(data.size());
  for (int64_t i = 0; i < data.size(); ++i) f[i] = static_cast<float>(data[i]);
  os.write(reinterpret_cast<const char*>(f.data()),
           static_cast<std::streamsize>(f.size() * sizeof(float)));
  DUET_CHECK(os.good(), "write failed: ", bin_path);
}

ArrayX read_f32_blob(const std::string& bin_path, int64_t expected_count) {
  std::ifstream is(bin_path, std::ios::binary | std::ios::ate);
  DUET_CHECK(is.good(), "cannot open: ", bin_path);
  std::streamsize bytes = is.tellg();
  DUET_CHECK(bytes % 4 == 0, bin_path, ": size not a multiple of 4");
  int64_t count = bytes / 4;
  if (expected_count >= 0)
    DUET_CHECK(count == expected_count, bin_path, ": expected ", expected_count,
               " floats, file has ", count);
  is.seekg(0);
  std::vector<float> f(count);
  is.read(reinterpret_cast<char*>(f.data()), bytes);
  DUET_CHECK(is.good(), "read failed: ", bin_path);
  ArrayX out(count);
  for (int64_t i = 0; i < count; ++i) out[i] = f[i];
  return out;
}

Json load_json_file(const std::string& path) {
  std::ifstream is(path);
  DUET_CHECK(is.good(), "cannot open: ", path);
  Json j = Json::parse(is, nullptr, false);
  DUET_CHECK(!j.is_discarded(), path, ": invalid JSON");
  return j;
}

void save_json_file(const std::string& path, const Json& j, int indent) {
  std::ofstream os(path);
  DUET_CHECK(os.good(), "cannot open for write: ", path);
  os << j.dump(indent) << "\n";
  DUET_CHECK(os.good(), "write failed: ", path);
}

double f32_round(double v) { return static_cast<double>(static_cast<float>(v)); }

ArrayX f32_round(const ArrayX& v) {
  ArrayX out(v.size());
  for (int64_t i = 0; i < v.size(); ++i) out[i] = f32_round(v[i]);
  return out;
}

}  // namespace duet
