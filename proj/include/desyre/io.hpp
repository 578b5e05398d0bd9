#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "desyre/haar.hpp"
#include "desyre/image.hpp"
#include "desyre/radon.hpp"
#include "desyre/tensor.hpp"

namespace desyre::io {

/// "DSR1" container: magic bytes, then per tensor
///   u32 name length | name bytes | u32 rank | u32 extents[rank] | f64 data
/// all little-endian. Files round-trip bit-exactly.
void write_dsr(const std::filesystem::path& path,
               const std::vector<std::pair<std::string, Tensor>>& tensors);
std::vector<std::pair<std::string, Tensor>> read_dsr(const std::filesystem::path& path);

void write_image_dsr(const std::filesystem::path& path, const Image& u);
Image read_image_dsr(const std::filesystem::path& path);

/// Coefficient pyramids persist as a DSR1 tensor group in the fixed band
/// order (level-major, HL, LH, HH, approximation last) plus a sidecar
/// <path>.bands.txt manifest naming that order.
void write_pyramid_dsr(const std::filesystem::path& path, const CoeffPyramid& xi);
CoeffPyramid read_pyramid_dsr(const std::filesystem::path& path);

/// Sinograms persist with their geometry so a file is self-describing.
void write_sinogram_dsr(const std::filesystem::path& path, const Sinogram& s);
Sinogram read_sinogram_dsr(const std::filesystem::path& path);

/// Binary 16-bit PGM (P5, maxval 65535). Pixel values are clamped to
/// [0, 1] before quantization.
void write_pgm16(const std::filesystem::path& path, const Image& u);

/// One "key = value" per line; '#' starts a comment.
void write_manifest(const std::filesystem::path& path,
                    const std::vector<std::pair<std::string, std::string>>& entries);
std::map<std::string, std::string> read_manifest(const std::filesystem::path& path);

/// Shortest decimal form that parses back to the same double. Used by
/// every CSV/manifest writer so reruns are byte-identical.
std::string fmt(double v);

/// FNV-1a 64-bit over the file bytes; checkpoint identity checks.
std::uint64_t file_hash(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace desyre::io
