#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace calcx {

inline constexpr const char* kVersion = "0.1.0";

std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_hex(const std::string& text);
std::string sha256_file(const std::filesystem::path& file);

void ensure_dir(const std::filesystem::path& dir);
std::string read_text_file(const std::filesystem::path& file);
void write_text_file(const std::filesystem::path& file, const std::string& text);

// Path string for <old_root>/<rel> as seen from new_root: relative when
// possible, absolute otherwise. Purely lexical, no filesystem access.
std::string rebase_path(const std::filesystem::path& old_root, const std::string& rel,
                        const std::filesystem::path& new_root);

// Fixed decimal formatting used by every CSV and log so reruns are
// byte-stable: shortest form at 10 significant digits, "inf"/"nan" words.
std::string format_number(double v);

struct CsvTable {
  std::string schema;                       // first "# schema:" comment line, if any
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int column_index(const std::string& name) const;
  double number(std::size_t row, const std::string& column) const;
};

// Line-oriented CSV with a leading "# schema: <name> v<N>" comment line.
void write_csv(const std::filesystem::path& file, const std::string& schema,
               const std::vector<std::string>& columns,
               const std::vector<std::vector<std::string>>& rows);
CsvTable read_csv(const std::filesystem::path& file);

}  // namespace calcx
