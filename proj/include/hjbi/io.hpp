#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace hjbi::io {

inline constexpr const char* kToolName = "hjbi_lab";

const char* tool_version();

/// Provenance stamped into every artifact.
struct ArtifactMeta {
  std::string tool = kToolName;
  std::string version = tool_version();
  std::string config_hash;  // 16 hex digits, empty when not run from a config
};

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

/// Shortest decimal text that reads back to the same double.
std::string format_number(double v);

/// RFC 4180 field quoting: fields with a comma, quote, CR or LF are quoted
/// and embedded quotes doubled.
std::string csv_escape(std::string_view field);

using CsvField = std::variant<std::string, double, long long>;

/// CSV writer. The first line is a '#' comment carrying the artifact meta.
class CsvWriter {
 public:
  CsvWriter(std::ostream& os, const ArtifactMeta& meta, const std::vector<std::string>& header);

  void row(const std::vector<CsvField>& fields);
  std::size_t columns() const { return columns_; }

 private:
  std::ostream& os_;
  std::size_t columns_;
};

/// Parses RFC 4180 text (skipping '#' comment lines) into rows of fields.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

/// Writes text to a file, replacing it; throws std::runtime_error on failure.
void write_file(const std::string& path, std::string_view text);
std::string read_file(const std::string& path);

}  // namespace hjbi::io
