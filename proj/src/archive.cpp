#include "mtid/archive.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

#include "mtid/error.hpp"

namespace mtid::archive {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "array files are written with native byte order, which must be little-endian");

const char* to_string(DType d) {
  switch (d) {
    case DType::kFloat32: return "float32";
    case DType::kFloat64: return "float64";
    case DType::kInt32: return "int32";
  }
  return "?";
}

std::size_t element_size(DType d) { return d == DType::kFloat64 ? 8 : 4; }

namespace {

DType parse_dtype(const std::string& s) {
  if (s == "float32") return DType::kFloat32;
  if (s == "float64") return DType::kFloat64;
  if (s == "int32") return DType::kInt32;
  throw Error(Errc::kMalformedFile, "unknown dtype " + s);
}

std::size_t element_count(const std::vector<std::int64_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::int64_t b) { return a * static_cast<std::size_t>(b); });
}

}  // namespace

std::uint32_t crc32(std::span<const unsigned char> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = ::crc32(crc, bytes.data() + off, chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

Writer::Writer(fs::path dir, std::string format, int version)
    : dir_(std::move(dir)), format_(std::move(format)), version_(version) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error(Errc::kIo, "cannot create " + dir_.string() + ": " + ec.message());
}

void Writer::put(const std::string& name, std::span<const float> data, std::vector<std::int64_t> shape) {
  put_bytes(name, DType::kFloat32, data.data(), data.size(), std::move(shape));
}
void Writer::put(const std::string& name, std::span<const double> data, std::vector<std::int64_t> shape) {
  put_bytes(name, DType::kFloat64, data.data(), data.size(), std::move(shape));
}
void Writer::put(const std::string& name, std::span<const std::int32_t> data, std::vector<std::int64_t> shape) {
  put_bytes(name, DType::kInt32, data.data(), data.size(), std::move(shape));
}

void Writer::put_bytes(const std::string& name, DType dtype, const void* data, std::size_t count,
                       std::vector<std::int64_t> shape) {
  if (element_count(shape) != count) throw Error(Errc::kShapeMismatch, "array " + name + ": shape/count mismatch");
  const std::size_t bytes = count * element_size(dtype);
  const std::string file = name + ".bin";
  std::ofstream out(dir_ / file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIo, "cannot write " + (dir_ / file).string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw Error(Errc::kIo, "short write to " + (dir_ / file).string());
  const auto* p = static_cast<const unsigned char*>(data);
  arrays_[name] = {{"file", file},
                   {"dtype", to_string(dtype)},
                   {"shape", shape},
                   {"byte_order", "little"},
                   {"bytes", bytes},
                   {"crc32", crc32({p, bytes})}};
}

void Writer::finish() {
  nlohmann::json manifest = {{"format", format_}, {"version", version_}, {"arrays", arrays_}, {"meta", meta_}};
  std::ofstream out(dir_ / "manifest.json", std::ios::trunc);
  if (!out) throw Error(Errc::kIo, "cannot write manifest in " + dir_.string());
  out << manifest.dump(2) << "\n";
}

Reader::Reader(fs::path dir, const std::string& format, int version) : dir_(std::move(dir)) {
  std::ifstream in(dir_ / "manifest.json");
  if (!in) throw Error(Errc::kIo, "no manifest.json in " + dir_.string());
  try {
    manifest_ = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kMalformedFile, std::string("manifest: ") + e.what());
  }
  if (!manifest_.contains("format") || manifest_["format"] != format) {
    throw Error(Errc::kMalformedFile, dir_.string() + " is not a " + format + " archive");
  }
  if (manifest_.value("version", -1) != version) {
    throw Error(Errc::kVersionMismatch, "archive version " + std::to_string(manifest_.value("version", -1)) +
                                            ", expected " + std::to_string(version));
  }
  if (!manifest_.contains("arrays") || !manifest_.contains("meta")) {
    throw Error(Errc::kMalformedFile, "manifest lacks arrays/meta");
  }
}

std::vector<std::int64_t> Reader::shape(const std::string& name) const {
  return manifest_.at("arrays").at(name).at("shape").get<std::vector<std::int64_t>>();
}

std::vector<unsigned char> Reader::read_checked(const std::string& name, DType expected) const {
  if (!has(name)) throw Error(Errc::kMalformedFile, "missing array " + name);
  const auto& rec = manifest_["arrays"][name];
  const DType dtype = parse_dtype(rec.at("dtype").get<std::string>());
  if (dtype != expected) {
    throw Error(Errc::kMalformedFile, "array " + name + " has dtype " + to_string(dtype));
  }
  if (rec.value("byte_order", "") != "little") throw Error(Errc::kMalformedFile, "array " + name + ": byte order");
  const std::size_t bytes = element_count(rec.at("shape").get<std::vector<std::int64_t>>()) * element_size(dtype);
  if (rec.at("bytes").get<std::size_t>() != bytes) throw Error(Errc::kMalformedFile, "array " + name + ": size");

  const fs::path file = dir_ / rec.at("file").get<std::string>();
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot open " + file.string());
  std::vector<unsigned char> buf(bytes);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.gcount()) != bytes) {
    throw Error(Errc::kTruncatedFile, file.string() + ": expected " + std::to_string(bytes) + " bytes");
  }
  if (crc32(buf) != rec.at("crc32").get<std::uint32_t>()) {
    throw Error(Errc::kChecksumMismatch, file.string());
  }
  return buf;
}

std::vector<float> Reader::get_f32(const std::string& name) const {
  auto raw = read_checked(name, DType::kFloat32);
  std::vector<float> out(raw.size() / 4);
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

std::vector<double> Reader::get_f64(const std::string& name) const {
  auto raw = read_checked(name, DType::kFloat64);
  std::vector<double> out(raw.size() / 8);
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

std::vector<std::int32_t> Reader::get_i32(const std::string& name) const {
  auto raw = read_checked(name, DType::kInt32);
  std::vector<std::int32_t> out(raw.size() / 4);
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

}  // namespace mtid::archive
