#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace penex::io {

/// Shortest representation that round-trips to the same double.
std::string format_double(double v);

/// Opens `path` for writing or throws std::runtime_error naming the path.
void write_text_file(const std::filesystem::path& path, std::string_view contents);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace penex::io
