#include "calcx/util.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "calcx/error.hpp"

namespace calcx {

namespace {

std::string to_hex(const unsigned char* digest, unsigned len) {
  static const char* hexdig = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hexdig[digest[i] >> 4]);
    out.push_back(hexdig[digest[i] & 0xf]);
  }
  return out;
}

struct EvpCtx {
  EVP_MD_CTX* ctx;
  EvpCtx() : ctx(EVP_MD_CTX_new()) {
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1)
      throw IoError("sha256 init failed");
  }
  ~EvpCtx() { EVP_MD_CTX_free(ctx); }
};

}  // namespace

std::string sha256_hex(std::span<const unsigned char> bytes) {
  EvpCtx c;
  EVP_DigestUpdate(c.ctx, bytes.data(), bytes.size());
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  EVP_DigestFinal_ex(c.ctx, digest, &len);
  return to_hex(digest, len);
}

std::string sha256_hex(const std::string& text) {
  return sha256_hex(std::span<const unsigned char>(
      reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::string sha256_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open for digest: " + file.string());
  EvpCtx c;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    if (got > 0) EVP_DigestUpdate(c.ctx, buf, static_cast<std::size_t>(got));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  EVP_DigestFinal_ex(c.ctx, digest, &len);
  return to_hex(digest, len);
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec && !std::filesystem::is_directory(dir))
    throw IoError("cannot create directory: " + dir.string() + " (" + ec.message() + ")");
}

std::string read_text_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open: " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& file, const std::string& text) {
  if (file.has_parent_path()) ensure_dir(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot create: " + file.string());
  out << text;
  if (!out) throw IoError("write failed: " + file.string());
}

std::string rebase_path(const std::filesystem::path& old_root, const std::string& rel,
                        const std::filesystem::path& new_root) {
  namespace fs = std::filesystem;
  const fs::path abs = fs::absolute(old_root / rel).lexically_normal();
  const fs::path out = abs.lexically_relative(fs::absolute(new_root).lexically_normal());
  return out.empty() ? abs.generic_string() : out.generic_string();
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

int CsvTable::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return static_cast<int>(i);
  throw ValueError("csv column not found: " + name);
}

double CsvTable::number(std::size_t row, const std::string& column) const {
  const auto& cell = rows.at(row).at(static_cast<std::size_t>(column_index(column)));
  if (cell == "nan") return std::nan("");
  if (cell == "inf") return std::numeric_limits<double>::infinity();
  if (cell == "-inf") return -std::numeric_limits<double>::infinity();
  return std::stod(cell);
}

void write_csv(const std::filesystem::path& file, const std::string& schema,
               const std::vector<std::string>& columns,
               const std::vector<std::vector<std::string>>& rows) {
  if (file.has_parent_path()) ensure_dir(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot create: " + file.string());
  out << "# schema: " << schema << "\n";
  for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + file.string());
}

CsvTable read_csv(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open: " + file.string());
  CsvTable t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : s) {
      if (c == ',') {
        cells.push_back(cur);
        cur.clear();
      } else if (c != '\r') {
        cur.push_back(c);
      }
    }
    cells.push_back(cur);
    return cells;
  };
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (t.schema.empty() && line.rfind("# schema:", 0) == 0) {
        t.schema = line.substr(9);
        if (!t.schema.empty() && t.schema[0] == ' ') t.schema.erase(0, 1);
      }
      continue;
    }
    if (!have_header) {
      t.columns = split(line);
      have_header = true;
    } else {
      t.rows.push_back(split(line));
    }
  }
  return t;
}

}  // namespace calcx
