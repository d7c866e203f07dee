#pragma once

#include "tsdiff/common.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace tsdiff {

/// Binary file of named float64 tensors plus a key=value footer.
///
/// Layout (little-endian):
///   "TSDF" | u32 version | u32 tensor count
///   per tensor: u32 name length | name | u8 dtype | u32 rank | u64 dims[rank] | payload
///   u32 footer length | footer text ("key=value\n", keys sorted)
///   u32 CRC32 of every preceding byte
class Container {
 public:
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::uint8_t kFloat64 = 1;

  struct Tensor {
    std::string name;
    std::vector<std::uint64_t> shape;
    std::vector<double> data;
  };

  void add(std::string name, std::vector<std::uint64_t> shape, std::vector<double> data);
  void add_vector(std::string name, const Vector& v);
  void add_matrix(std::string name, const RowMatrix& m);

  bool has(std::string_view name) const;
  /// Throws FormatError when the tensor is missing.
  const Tensor& tensor(std::string_view name) const;
  Vector vector(std::string_view name) const;
  RowMatrix matrix(std::string_view name) const;
  const std::vector<Tensor>& tensors() const { return tensors_; }

  void set(const std::string& key, std::string value);
  void set(const std::string& key, double value);
  void set(const std::string& key, std::uint64_t value);
  /// Throws FormatError when the key is missing.
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  const std::map<std::string, std::string>& meta() const { return meta_; }

  std::string serialize() const;
  static Container parse(std::string_view bytes);

  void write(const std::filesystem::path& path) const;
  /// Missing file raises ConfigError; corrupt content raises FormatError.
  static Container read(const std::filesystem::path& path);

 private:
  std::vector<Tensor> tensors_;
  std::map<std::string, std::string> meta_;
};

/// Shortest text that parses back to the same double.
std::string format_double(double v);
/// Whole-string parse; throws std::invalid_argument on junk.
double parse_double(std::string_view text);
std::uint64_t parse_u64(std::string_view text);

std::uint32_t crc32_of(std::string_view bytes);

}  // namespace tsdiff
