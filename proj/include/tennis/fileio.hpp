#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace tennis {

// Error("io") on failure.
std::string read_file(const std::filesystem::path& path);

// Writes a temporary sibling, fsyncs it and renames it over `path`, so readers
// see either the previous or the new content, never a torn file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace tennis
