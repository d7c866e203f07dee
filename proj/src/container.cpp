#include "tsdiff/container.hpp"

#include <zlib.h>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tsdiff {

namespace {

constexpr char kMagic[4] = {'T', 'S', 'D', 'F'};

template <typename T>
void put(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Cursor {
 public:
  explicit Cursor(std::string_view b) : bytes_(b) {}

  template <typename T>
  T take() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }

  std::string_view take_bytes(std::size_t n) {
    need(n);
    auto v = bytes_.substr(pos_, n);
    pos_ += n;
    return v;
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (n > bytes_.size() - pos_) throw FormatError("container truncated at byte " + std::to_string(pos_));
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::uint64_t element_count(const std::vector<std::uint64_t>& shape) {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(std::string_view text) {
  double v = 0;
  const auto* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end) throw std::invalid_argument("not a number: '" + std::string(text) + "'");
  return v;
}

std::uint64_t parse_u64(std::string_view text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end || text.empty())
    throw std::invalid_argument("not a non-negative integer: '" + std::string(text) + "'");
  return v;
}

std::uint32_t crc32_of(std::string_view bytes) {
  uLong c = crc32(0L, Z_NULL, 0);
  c = crc32(c, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(c);
}

void Container::add(std::string name, std::vector<std::uint64_t> shape, std::vector<double> data) {
  if (element_count(shape) != data.size()) throw ShapeError("tensor '" + name + "': shape does not match data");
  if (has(name)) throw std::invalid_argument("duplicate tensor '" + name + "'");
  tensors_.push_back({std::move(name), std::move(shape), std::move(data)});
}

void Container::add_vector(std::string name, const Vector& v) {
  add(std::move(name), {static_cast<std::uint64_t>(v.size())}, std::vector<double>(v.data(), v.data() + v.size()));
}

void Container::add_matrix(std::string name, const RowMatrix& m) {
  add(std::move(name), {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
      std::vector<double>(m.data(), m.data() + m.size()));
}

bool Container::has(std::string_view name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return true;
  return false;
}

const Container::Tensor& Container::tensor(std::string_view name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return t;
  throw FormatError("missing tensor '" + std::string(name) + "'");
}

Vector Container::vector(std::string_view name) const {
  const auto& t = tensor(name);
  return Eigen::Map<const Vector>(t.data.data(), static_cast<Eigen::Index>(t.data.size()));
}

RowMatrix Container::matrix(std::string_view name) const {
  const auto& t = tensor(name);
  if (t.shape.size() != 2) throw FormatError("tensor '" + t.name + "' is not a matrix");
  return Eigen::Map<const RowMatrix>(t.data.data(), static_cast<Eigen::Index>(t.shape[0]),
                                     static_cast<Eigen::Index>(t.shape[1]));
}

void Container::set(const std::string& key, std::string value) {
  if (key.empty() || key.find_first_of("=\n") != std::string::npos || value.find('\n') != std::string::npos)
    throw std::invalid_argument("invalid metadata entry '" + key + "'");
  meta_[key] = std::move(value);
}

void Container::set(const std::string& key, double value) { set(key, format_double(value)); }

void Container::set(const std::string& key, std::uint64_t value) { set(key, std::to_string(value)); }

const std::string& Container::get(const std::string& key) const {
  auto it = meta_.find(key);
  if (it == meta_.end()) throw FormatError("missing metadata key '" + key + "'");
  return it->second;
}

double Container::get_double(const std::string& key) const {
  try {
    return parse_double(get(key));
  } catch (const std::invalid_argument& e) {
    throw FormatError("metadata '" + key + "': " + e.what());
  }
}

std::uint64_t Container::get_u64(const std::string& key) const {
  try {
    return parse_u64(get(key));
  } catch (const std::invalid_argument& e) {
    throw FormatError("metadata '" + key + "': " + e.what());
  }
}

std::string Container::serialize() const {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors_.size()));
  for (const auto& t : tensors_) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put<std::uint8_t>(out, kFloat64);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint64_t>(out, d);
    for (double v : t.data) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      put<std::uint64_t>(out, bits);
    }
  }
  std::string footer;
  for (const auto& [k, v] : meta_) footer += k + "=" + v + "\n";
  put<std::uint32_t>(out, static_cast<std::uint32_t>(footer.size()));
  out += footer;
  put<std::uint32_t>(out, crc32_of(out));
  return out;
}

Container Container::parse(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != std::string_view(kMagic, 4))
    throw FormatError("not a tsdiff container (bad magic)");
  if (bytes.size() < 16) throw FormatError("container truncated");
  const auto body = bytes.substr(0, bytes.size() - 4);
  Cursor tail(bytes.substr(bytes.size() - 4));
  Cursor c(bytes);
  c.take_bytes(4);
  const auto version = c.take<std::uint32_t>();
  if (version != kVersion)
    throw FormatError("unsupported container version " + std::to_string(version) + " (expected " +
                      std::to_string(kVersion) + ")");
  if (tail.take<std::uint32_t>() != crc32_of(body)) throw FormatError("container checksum mismatch");

  Container out;
  const auto count = c.take<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    Tensor t;
    t.name = std::string(c.take_bytes(c.take<std::uint32_t>()));
    if (c.take<std::uint8_t>() != kFloat64) throw FormatError("tensor '" + t.name + "': unknown dtype");
    const auto rank = c.take<std::uint32_t>();
    if (rank > 8) throw FormatError("tensor '" + t.name + "': implausible rank");
    for (std::uint32_t r = 0; r < rank; ++r) t.shape.push_back(c.take<std::uint64_t>());
    const auto n = element_count(t.shape);
    if (n > (bytes.size() - c.pos()) / 8) throw FormatError("tensor '" + t.name + "': payload truncated");
    t.data.resize(n);
    for (auto& v : t.data) {
      const auto bits = c.take<std::uint64_t>();
      std::memcpy(&v, &bits, sizeof v);
    }
    out.tensors_.push_back(std::move(t));
  }
  const auto footer = c.take_bytes(c.take<std::uint32_t>());
  if (c.pos() != body.size()) throw FormatError("trailing bytes in container");
  std::istringstream in{std::string(footer)};
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed metadata line '" + line + "'");
    out.meta_[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

void Container::write(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("write to '" + path.string() + "' failed");
}

Container Container::read(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("file not found: '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

}  // namespace tsdiff
