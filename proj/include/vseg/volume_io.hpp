#pragma once

#include <filesystem>
#include <string>
#include <variant>

#include "vseg/image.hpp"

namespace vseg {

/// Voxel type tag of the `.vseg` container.
enum class DType { i16, u8, f32 };

std::string to_string(DType d);
DType parse_dtype(const std::string& s);

/// Any image that can be stored in a `.vseg` container.
using AnyImage = std::variant<RawVolume, Mask, Volume>;

DType dtype_of(const AnyImage& img);

/// Reads a `.vseg` header and its raw voxel file.
///
/// The header is a JSON object with the fields shape, spacing_mm, origin_mm
/// (all in z,y,x order), dtype ("i16", "u8" or "f32"), byte_order ("little")
/// and data (raw file name, relative to the header's directory). Throws
/// IoError for missing files, unsupported dtype tags and size mismatches.
AnyImage read_volume(const std::filesystem::path& header_path);

/// Writes `<stem>.vseg` and `<stem>.raw` next to each other.
void write_volume(const AnyImage& img, const std::filesystem::path& header_path);

void write_volume(const RawVolume& v, const std::filesystem::path& header_path);
void write_volume(const Mask& m, const std::filesystem::path& header_path);
void write_volume(const Volume& v, const std::filesystem::path& header_path);

/// Typed readers; throw IoError if the stored dtype differs.
RawVolume read_raw_volume(const std::filesystem::path& header_path);
Mask read_mask(const std::filesystem::path& header_path);
Volume read_float_volume(const std::filesystem::path& header_path);

/// Reads any dtype and converts voxel values to float.
Volume read_as_float(const std::filesystem::path& header_path);

}  // namespace vseg
