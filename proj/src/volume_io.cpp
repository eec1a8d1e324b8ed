#include "vseg/volume_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <type_traits>

#include <json.hpp>

namespace vseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
constexpr DType dtype_tag() {
  if constexpr (std::is_same_v<T, std::int16_t>) return DType::i16;
  else if constexpr (std::is_same_v<T, std::uint8_t>) return DType::u8;
  else return DType::f32;
}

template <typename T>
void to_little_endian_inplace(std::vector<T>& v) {
  if constexpr (std::endian::native != std::endian::little && sizeof(T) > 1) {
    for (auto& x : v) {
      unsigned char b[sizeof(T)];
      std::memcpy(b, &x, sizeof(T));
      std::reverse(b, b + sizeof(T));
      std::memcpy(&x, b, sizeof(T));
    }
  }
}

json vec3_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

fs::path raw_path_for(const fs::path& header_path) {
  fs::path p = header_path;
  p.replace_extension(".raw");
  return p;
}

template <typename T>
void write_typed(const Image3<T>& img, const fs::path& header_path) {
  img.validate();
  const fs::path raw = raw_path_for(header_path);
  json h;
  h["shape"] = json::array({img.shape[0], img.shape[1], img.shape[2]});
  h["spacing_mm"] = vec3_json(img.spacing_mm);
  h["origin_mm"] = vec3_json(img.origin_mm);
  h["dtype"] = to_string(dtype_tag<T>());
  h["byte_order"] = "little";
  h["data"] = raw.filename().string();

  std::ofstream hf(header_path, std::ios::binary | std::ios::trunc);
  if (!hf) throw IoError("cannot open '" + header_path.string() + "' for writing");
  hf << h.dump(1) << '\n';
  if (!hf) throw IoError("failed writing '" + header_path.string() + "'");

  std::vector<T> le = img.data;
  to_little_endian_inplace(le);
  std::ofstream rf(raw, std::ios::binary | std::ios::trunc);
  if (!rf) throw IoError("cannot open '" + raw.string() + "' for writing");
  rf.write(reinterpret_cast<const char*>(le.data()),
           static_cast<std::streamsize>(le.size() * sizeof(T)));
  if (!rf) throw IoError("failed writing '" + raw.string() + "'");
}

template <typename T>
Image3<T> read_typed_body(const json& h, const fs::path& header_path) {
  Image3<T> img;
  try {
    for (int a = 0; a < 3; ++a) {
      img.shape[a] = h.at("shape").at(a).get<std::int64_t>();
      img.spacing_mm[a] = h.at("spacing_mm").at(a).get<double>();
      img.origin_mm[a] = h.at("origin_mm").at(a).get<double>();
    }
  } catch (const json::exception& e) {
    throw IoError("malformed header '" + header_path.string() + "': " + e.what());
  }
  try {
    img.validate_geometry();
  } catch (const ValidationError& e) {
    throw IoError("invalid geometry in '" + header_path.string() + "': " + e.what());
  }
  if (h.value("byte_order", std::string("little")) != "little") {
    throw IoError("unsupported byte order in '" + header_path.string() + "'");
  }
  const fs::path raw = header_path.parent_path() / h.at("data").get<std::string>();
  std::ifstream rf(raw, std::ios::binary | std::ios::ate);
  if (!rf) throw IoError("missing raw file '" + raw.string() + "'");
  const auto bytes = static_cast<std::uint64_t>(rf.tellg());
  const auto n = static_cast<std::uint64_t>(voxel_count(img.shape));
  if (bytes != n * sizeof(T)) {
    throw IoError("size mismatch: header declares " + std::to_string(n) + " voxels, '" +
                  raw.string() + "' holds " + std::to_string(bytes) + " bytes");
  }
  rf.seekg(0);
  img.data.resize(static_cast<std::size_t>(n));
  rf.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(bytes));
  if (!rf) throw IoError("failed reading '" + raw.string() + "'");
  to_little_endian_inplace(img.data);
  return img;
}

json read_header(const fs::path& header_path) {
  std::ifstream hf(header_path);
  if (!hf) throw IoError("missing header file '" + header_path.string() + "'");
  try {
    return json::parse(hf);
  } catch (const json::exception& e) {
    throw IoError("malformed header '" + header_path.string() + "': " + e.what());
  }
}

DType header_dtype(const json& h, const fs::path& header_path) {
  if (!h.contains("dtype") || !h["dtype"].is_string()) {
    throw IoError("header '" + header_path.string() + "' lacks a dtype");
  }
  return parse_dtype(h["dtype"].get<std::string>());
}

template <typename T>
Image3<T> read_expect(const fs::path& header_path) {
  const json h = read_header(header_path);
  const DType d = header_dtype(h, header_path);
  if (d != dtype_tag<T>()) {
    throw IoError("'" + header_path.string() + "' has dtype " + to_string(d) + ", expected " +
                  to_string(dtype_tag<T>()));
  }
  return read_typed_body<T>(h, header_path);
}

}  // namespace

std::string to_string(DType d) {
  switch (d) {
    case DType::i16: return "i16";
    case DType::u8: return "u8";
    case DType::f32: return "f32";
  }
  return "?";
}

DType parse_dtype(const std::string& s) {
  if (s == "i16") return DType::i16;
  if (s == "u8") return DType::u8;
  if (s == "f32") return DType::f32;
  throw IoError("unsupported dtype tag '" + s + "'");
}

DType dtype_of(const AnyImage& img) {
  return std::visit([](const auto& v) { return dtype_tag<typename std::decay_t<decltype(v.data)>::value_type>(); },
                    img);
}

AnyImage read_volume(const fs::path& header_path) {
  const json h = read_header(header_path);
  switch (header_dtype(h, header_path)) {
    case DType::i16: return read_typed_body<std::int16_t>(h, header_path);
    case DType::u8: return read_typed_body<std::uint8_t>(h, header_path);
    case DType::f32: return read_typed_body<float>(h, header_path);
  }
  throw IoError("unreachable dtype");
}

void write_volume(const AnyImage& img, const fs::path& header_path) {
  std::visit([&](const auto& v) { write_typed(v, header_path); }, img);
}

void write_volume(const RawVolume& v, const fs::path& p) { write_typed(v, p); }
void write_volume(const Mask& m, const fs::path& p) { write_typed(m, p); }
void write_volume(const Volume& v, const fs::path& p) { write_typed(v, p); }

RawVolume read_raw_volume(const fs::path& p) { return read_expect<std::int16_t>(p); }
Mask read_mask(const fs::path& p) {
  Mask m = read_expect<std::uint8_t>(p);
  if (std::any_of(m.data.begin(), m.data.end(), [](std::uint8_t v) { return v > 1; })) {
    throw IoError("'" + p.string() + "' is not a binary mask");
  }
  return m;
}
Volume read_float_volume(const fs::path& p) { return read_expect<float>(p); }

Volume read_as_float(const fs::path& p) {
  return std::visit(
      [](const auto& v) {
        Volume out = like<float>(v);
        std::transform(v.data.begin(), v.data.end(), out.data.begin(),
                       [](auto x) { return static_cast<float>(x); });
        return out;
      },
      read_volume(p));
}

}  // namespace vseg
