#pragma once

// Versioned container of named arrays.
//
//   TLVAE1\n
//   <name> <f64|i64> <rank> <d1> ... <dr>\n<little-endian 64-bit payload>
//   ...
//
// Rank 0 stores a single value.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace tvae {

struct NamedArray {
  std::vector<std::size_t> dims;
  std::variant<std::vector<double>, std::vector<std::int64_t>> data;

  bool is_float() const { return data.index() == 0; }
  const std::vector<double>& floats() const;
  const std::vector<std::int64_t>& ints() const;
};

class ArchiveWriter {
 public:
  void put(const std::string& name, std::vector<std::size_t> dims, std::vector<double> data);
  void put(const std::string& name, std::vector<std::size_t> dims, std::vector<std::int64_t> data);
  void put_scalar(const std::string& name, double v) { put(name, {}, std::vector<double>{v}); }
  void put_int(const std::string& name, std::int64_t v) { put(name, {}, std::vector<std::int64_t>{v}); }
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::pair<std::string, NamedArray>> arrays_;
};

class ArchiveReader {
 public:
  static ArchiveReader read(const std::filesystem::path& path);

  bool has(const std::string& name) const { return arrays_.count(name) > 0; }
  const NamedArray& get(const std::string& name) const;
  std::vector<double> floats(const std::string& name) const { return get(name).floats(); }
  std::vector<std::int64_t> ints(const std::string& name) const { return get(name).ints(); }
  double scalar(const std::string& name) const;
  std::int64_t integer(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, NamedArray> arrays_;
};

}  // namespace tvae
