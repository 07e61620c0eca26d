#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

// Directory container shared by datasets and checkpoints: a `manifest.json`
// plus one raw little-endian array file per field. The manifest records each
// array's dtype, shape, byte order, size and CRC-32.
namespace mtid::archive {

enum class DType { kFloat32, kFloat64, kInt32 };

const char* to_string(DType d);
std::size_t element_size(DType d);

class Writer {
 public:
  Writer(std::filesystem::path dir, std::string format, int version);

  void put(const std::string& name, std::span<const float> data, std::vector<std::int64_t> shape);
  void put(const std::string& name, std::span<const double> data, std::vector<std::int64_t> shape);
  void put(const std::string& name, std::span<const std::int32_t> data, std::vector<std::int64_t> shape);

  /// Free-form metadata stored under manifest["meta"].
  nlohmann::json& meta() { return meta_; }

  /// Writes manifest.json; arrays are already on disk.
  void finish();

 private:
  void put_bytes(const std::string& name, DType dtype, const void* data, std::size_t count,
                 std::vector<std::int64_t> shape);

  std::filesystem::path dir_;
  std::string format_;
  int version_;
  nlohmann::json arrays_ = nlohmann::json::object();
  nlohmann::json meta_ = nlohmann::json::object();
};

class Reader {
 public:
  /// Opens and validates the manifest. Throws kVersionMismatch when the
  /// format or version differ from what the caller expects.
  Reader(std::filesystem::path dir, const std::string& format, int version);

  const nlohmann::json& meta() const { return manifest_.at("meta"); }
  bool has(const std::string& name) const { return manifest_.at("arrays").contains(name); }
  std::vector<std::int64_t> shape(const std::string& name) const;

  std::vector<float> get_f32(const std::string& name) const;
  std::vector<double> get_f64(const std::string& name) const;
  std::vector<std::int32_t> get_i32(const std::string& name) const;

 private:
  std::vector<unsigned char> read_checked(const std::string& name, DType expected) const;

  std::filesystem::path dir_;
  nlohmann::json manifest_;
};

std::uint32_t crc32(std::span<const unsigned char> bytes);

}  // namespace mtid::archive
