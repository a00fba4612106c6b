#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace rsq {

/// Writes content to a temporary file in the same directory, then renames it
/// over the destination. Throws IoError on failure.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Reads the whole file. Throws IoError when it cannot be opened.
std::string read_file(const std::filesystem::path& path);

// Little-endian scalar append/read helpers for binary formats.
void append_u16_le(std::string& buf, uint16_t v);
void append_u32_le(std::string& buf, uint32_t v);
void append_f32_le(std::string& buf, float v);
uint16_t read_u16_le(const unsigned char* p);
uint32_t read_u32_le(const unsigned char* p);
float read_f32_le(const unsigned char* p);

}  // namespace rsq
