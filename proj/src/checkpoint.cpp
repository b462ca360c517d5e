#include "tvae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tvae/errors.hpp"

namespace tvae {

namespace {

constexpr const char* kMagic = "TLVAE1";

std::size_t count(const std::vector<std::size_t>& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw InputError("checkpoint: truncated payload");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

const std::vector<double>& NamedArray::floats() const {
  if (!is_float()) throw InputError("checkpoint: array is not f64");
  return std::get<0>(data);
}

const std::vector<std::int64_t>& NamedArray::ints() const {
  if (is_float()) throw InputError("checkpoint: array is not i64");
  return std::get<1>(data);
}

void ArchiveWriter::put(const std::string& name, std::vector<std::size_t> dims, std::vector<double> data) {
  if (count(dims) != data.size()) throw DimensionError("checkpoint: " + name + " dims do not match data");
  if (name.empty() || name.find_first_of(" \n\t") != std::string::npos) {
    throw InputError("checkpoint: invalid array name '" + name + "'");
  }
  arrays_.emplace_back(name, NamedArray{std::move(dims), std::move(data)});
}

void ArchiveWriter::put(const std::string& name, std::vector<std::size_t> dims, std::vector<std::int64_t> data) {
  if (count(dims) != data.size()) throw DimensionError("checkpoint: " + name + " dims do not match data");
  if (name.empty() || name.find_first_of(" \n\t") != std::string::npos) {
    throw InputError("checkpoint: invalid array name '" + name + "'");
  }
  arrays_.emplace_back(name, NamedArray{std::move(dims), std::move(data)});
}

void ArchiveWriter::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint " + path.string());
  out << kMagic << '\n';
  for (const auto& [name, arr] : arrays_) {
    out << name << (arr.is_float() ? " f64 " : " i64 ") << arr.dims.size();
    for (auto d : arr.dims) out << ' ' << d;
    out << '\n';
    if (arr.is_float()) {
      for (double v : std::get<0>(arr.data)) put_u64(out, std::bit_cast<std::uint64_t>(v));
    } else {
      for (auto v : std::get<1>(arr.data)) put_u64(out, static_cast<std::uint64_t>(v));
    }
  }
  if (!out) throw InputError("failed writing checkpoint " + path.string());
}

ArchiveReader ArchiveReader::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw InputError(path.string() + " is not a TLVAE1 checkpoint");
  ArchiveReader r;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream hs(line);
    std::string name, dtype;
    std::size_t rank = 0;
    if (!(hs >> name >> dtype >> rank) || (dtype != "f64" && dtype != "i64")) {
      throw InputError("checkpoint: malformed array header '" + line + "'");
    }
    NamedArray arr;
    for (std::size_t i = 0; i < rank; ++i) {
      std::size_t d = 0;
      if (!(hs >> d)) throw InputError("checkpoint: malformed dims for " + name);
      arr.dims.push_back(d);
    }
    const auto n = count(arr.dims);
    if (dtype == "f64") {
      std::vector<double> v(n);
      for (auto& x : v) x = std::bit_cast<double>(get_u64(in));
      arr.data = std::move(v);
    } else {
      std::vector<std::int64_t> v(n);
      for (auto& x : v) x = static_cast<std::int64_t>(get_u64(in));
      arr.data = std::move(v);
    }
    r.arrays_[name] = std::move(arr);
  }
  return r;
}

const NamedArray& ArchiveReader::get(const std::string& name) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) throw InputError("checkpoint: missing array " + name);
  return it->second;
}

double ArchiveReader::scalar(const std::string& name) const {
  const auto& v = get(name).floats();
  if (v.size() != 1) throw InputError("checkpoint: " + name + " is not a scalar");
  return v[0];
}

std::int64_t ArchiveReader::integer(const std::string& name) const {
  const auto& v = get(name).ints();
  if (v.size() != 1) throw InputError("checkpoint: " + name + " is not a scalar");
  return v[0];
}

std::vector<std::string> ArchiveReader::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : arrays_) out.push_back(k);
  return out;
}

}  // namespace tvae
