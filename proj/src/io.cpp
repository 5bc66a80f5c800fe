#include "hjbi/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace hjbi::io {

const char* tool_version() { return HJBI_VERSION; }

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t value) { return fmt::format("{:016x}", value); }

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  return fmt::format("{}", v);
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out;
  out.reserve(field.size() + 2);
  out.push_back('"');
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

CsvWriter::CsvWriter(std::ostream& os, const ArtifactMeta& meta,
                     const std::vector<std::string>& header)
    : os_(os), columns_(header.size()) {
  os_ << "# " << meta.tool << ' ' << meta.version;
  if (!meta.config_hash.empty()) os_ << " config_hash=" << meta.config_hash;
  os_ << "\r\n";
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c) os_ << ',';
    os_ << csv_escape(header[c]);
  }
  os_ << "\r\n";
}

void CsvWriter::row(const std::vector<CsvField>& fields) {
  if (fields.size() != columns_) {
    throw std::logic_error(fmt::format("csv row has {} fields, header has {}", fields.size(), columns_));
  }
  for (std::size_t c = 0; c < fields.size(); ++c) {
    if (c) os_ << ',';
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, std::string>) {
            os_ << csv_escape(v);
          } else if constexpr (std::is_same_v<T, double>) {
            os_ << format_number(v);
          } else {
            os_ << v;
          }
        },
        fields[c]);
  }
  os_ << "\r\n";
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    if (text[i] == '#') {
      while (i < n && text[i] != '\n') ++i;
      ++i;
      continue;
    }
    std::vector<std::string> row;
    std::string field;
    bool done = false;
    while (!done) {
      if (i < n && text[i] == '"') {
        ++i;
        while (true) {
          if (i >= n) throw std::runtime_error("unterminated quoted csv field");
          if (text[i] == '"') {
            if (i + 1 < n && text[i + 1] == '"') {
              field.push_back('"');
              i += 2;
            } else {
              ++i;
              break;
            }
          } else {
            field.push_back(text[i++]);
          }
        }
      }
      while (i < n && text[i] != ',' && text[i] != '\r' && text[i] != '\n') field.push_back(text[i++]);
      row.push_back(std::move(field));
      field.clear();
      if (i < n && text[i] == ',') {
        ++i;
      } else {
        if (i < n && text[i] == '\r') ++i;
        if (i < n && text[i] == '\n') ++i;
        done = true;
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_file(const std::string& path, std::string_view text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error(fmt::format("cannot open '{}' for writing", path));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw std::runtime_error(fmt::format("write to '{}' failed", path));
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error(fmt::format("cannot open '{}'", path));
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace hjbi::io
