#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

namespace trapnet {

using Json = nlohmann::json;

/// Deterministic JSON text: object keys sorted, two-space indentation, every
/// floating-point number printed with 17 significant digits ("%.17g").
std::string to_canonical_json(const Json& value);

/// Same formatting on a single line (used for JSON-lines records).
std::string to_canonical_json_line(const Json& value);

std::string read_text_file(const std::filesystem::path& path);

/// Writes through a temporary sibling and renames, so readers never see a
/// partially written artifact. Throws IoError.
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Throws IoError if unreadable, FormatError if not valid JSON.
Json read_json_file(const std::filesystem::path& path);

}  // namespace trapnet
