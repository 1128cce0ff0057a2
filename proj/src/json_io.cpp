#include "trapnet/json_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "trapnet/error.hpp"

namespace trapnet {

namespace {

void append_number(std::string& out, double v) {
  if (!std::isfinite(v)) {
    // JSON has no representation for these; the library never emits them.
    out += "null";
    return;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
  // Keep floats recognizable as floats when parsed back.
  std::string_view s(buf);
  if (s.find_first_of(".eE") == std::string_view::npos) out += ".0";
}

void append_string(std::string& out, const std::string& s) {
  out += Json(s).dump();
}

void write(std::string& out, const Json& v, int indent, int depth) {
  const bool pretty = indent > 0;
  auto newline = [&](int d) {
    if (!pretty) return;
    out.push_back('\n');
    out.append(static_cast<std::size_t>(d * indent), ' ');
  };
  switch (v.type()) {
    case Json::value_t::object: {
      if (v.empty()) {
        out += "{}";
        return;
      }
      out.push_back('{');
      bool first = true;
      // nlohmann::json objects are std::map-backed, so iteration is key-sorted.
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (!first) out.push_back(',');
        first = false;
        newline(depth + 1);
        append_string(out, it.key());
        out += pretty ? ": " : ":";
        write(out, it.value(), indent, depth + 1);
      }
      newline(depth);
      out.push_back('}');
      return;
    }
    case Json::value_t::array: {
      if (v.empty()) {
        out += "[]";
        return;
      }
      // Numeric arrays stay on one line; they are long and unreadable otherwise.
      const bool flat = std::all_of(v.begin(), v.end(), [](const Json& e) {
        return e.is_number() || e.is_boolean() || e.is_null();
      });
      out.push_back('[');
      bool first = true;
      for (const auto& e : v) {
        if (!first) out += (flat && pretty) ? ", " : ",";
        first = false;
        if (!flat) newline(depth + 1);
        write(out, e, indent, depth + 1);
      }
      if (!flat) newline(depth);
      out.push_back(']');
      return;
    }
    case Json::value_t::number_float:
      append_number(out, v.get<double>());
      return;
    case Json::value_t::string:
      append_string(out, v.get_ref<const std::string&>());
      return;
    default:
      out += v.dump();
      return;
  }
}

}  // namespace

std::string to_canonical_json(const Json& value) {
  std::string out;
  write(out, value, 2, 0);
  out.push_back('\n');
  return out;
}

std::string to_canonical_json_line(const Json& value) {
  std::string out;
  write(out, value, 0, 0);
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading", path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed", path.string());
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::error_code ec;
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory", path.parent_path().string());
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing", tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("write failed", tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename into place", path.string());
}

Json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw FormatError("invalid JSON in " + path.string() + ": " + e.what(), e.byte);
  }
}

}  // namespace trapnet
