#include "calcx/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <sstream>
#include <vector>

#include "calcx/error.hpp"
#include "calcx/util.hpp"

namespace calcx {

RunConfig::RunConfig() {
  // Desk-scale training budget; the module-level defaults mirror the
  // clinical-scale settings instead.
  inpaint.input_size = ranges.patch_size;
  fusion.input_size = ranges.patch_size;
  fusion.epochs = 12;
  fusion.batch = 16;
  fusion.lr = 1e-3;
  augment.translate_max = 16.0;
}

namespace {

[[noreturn]] void bad(const std::string& path, const std::string& what) {
  throw ValueError("config: " + path + ": " + what);
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& v, const std::string& path) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) bad(path, "not a number: '" + v + "'");
  if (!std::isfinite(d)) bad(path, "must be finite");
  return d;
}

int parse_int(const std::string& v, const std::string& path) {
  char* end = nullptr;
  const long n = std::strtol(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size()) bad(path, "not an integer: '" + v + "'");
  if (n < -1000000000L || n > 1000000000L) bad(path, "out of range");
  return static_cast<int>(n);
}

std::uint64_t parse_u64(const std::string& v, const std::string& path) {
  if (v.empty() || v[0] == '-') bad(path, "not a non-negative integer: '" + v + "'");
  char* end = nullptr;
  const unsigned long long n = std::strtoull(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size()) bad(path, "not a non-negative integer: '" + v + "'");
  return static_cast<std::uint64_t>(n);
}

bool parse_bool(const std::string& v, const std::string& path) {
  std::string low;
  for (char c : v) low.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (low == "true" || low == "1" || low == "yes" || low == "on") return true;
  if (low == "false" || low == "0" || low == "no" || low == "off") return false;
  bad(path, "not a boolean: '" + v + "'");
}

// Shortest decimal form that parses back to the same double, so snapshots
// reload to bit-identical configs.
std::string dtoa_roundtrip(double v) {
  char buf[48];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

struct KeySpec {
  std::string section;
  std::string key;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

using DblRef = std::function<double&(RunConfig&)>;
using IntRef = std::function<int&(RunConfig&)>;

KeySpec spec_double(const char* sec, const char* key, DblRef ref) {
  return {sec, key,
          [ref](RunConfig& c, const std::string& v, const std::string& p) {
            ref(c) = parse_double(v, p);
          },
          [ref](const RunConfig& c) { return dtoa_roundtrip(ref(const_cast<RunConfig&>(c))); }};
}

KeySpec spec_int(const char* sec, const char* key, IntRef ref) {
  return {sec, key,
          [ref](RunConfig& c, const std::string& v, const std::string& p) {
            ref(c) = parse_int(v, p);
          },
          [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); }};
}

KeySpec spec_bool(const char* sec, const char* key, std::function<bool&(RunConfig&)> ref) {
  return {sec, key,
          [ref](RunConfig& c, const std::string& v, const std::string& p) {
            ref(c) = parse_bool(v, p);
          },
          [ref](const RunConfig& c) {
            return ref(const_cast<RunConfig&>(c)) ? std::string("true") : std::string("false");
          }};
}

KeySpec spec_string(const char* sec, const char* key,
                    std::function<std::string&(RunConfig&)> ref) {
  return {sec, key,
          [ref](RunConfig& c, const std::string& v, const std::string&) { ref(c) = v; },
          [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)); }};
}

std::vector<KeySpec> build_table() {
  std::vector<KeySpec> t;
  t.push_back({"run", "seed",
               [](RunConfig& c, const std::string& v, const std::string& p) {
                 c.seed = parse_u64(v, p);
               },
               [](const RunConfig& c) { return std::to_string(c.seed); }});
  t.push_back(spec_string("run", "data", [](RunConfig& c) -> std::string& { return c.data; }));
  t.push_back(spec_string("run", "out", [](RunConfig& c) -> std::string& { return c.out; }));
  t.push_back(
      spec_string("run", "engine", [](RunConfig& c) -> std::string& { return c.engine; }));
  t.push_back(spec_bool("run", "debug_stages",
                        [](RunConfig& c) -> bool& { return c.debug_stages; }));

  t.push_back(spec_int("dataset", "patch_size",
                       [](RunConfig& c) -> int& { return c.ranges.patch_size; }));
  t.push_back(spec_int("dataset", "n_normal",
                       [](RunConfig& c) -> int& { return c.counts.n_normal; }));
  t.push_back(spec_int("dataset", "n_calcified",
                       [](RunConfig& c) -> int& { return c.counts.n_calcified; }));
  t.push_back(spec_int("dataset", "n_noncalcified",
                       [](RunConfig& c) -> int& { return c.counts.n_noncalcified; }));
  t.push_back(spec_double("dataset", "val_fraction",
                          [](RunConfig& c) -> double& { return c.ranges.val_fraction; }));
  t.push_back(spec_int("dataset", "rib_count_min",
                       [](RunConfig& c) -> int& { return c.ranges.rib_count_min; }));
  t.push_back(spec_int("dataset", "rib_count_max",
                       [](RunConfig& c) -> int& { return c.ranges.rib_count_max; }));
  t.push_back(spec_double("dataset", "rib_contrast_min",
                          [](RunConfig& c) -> double& { return c.ranges.rib_contrast_min; }));
  t.push_back(spec_double("dataset", "rib_contrast_max",
                          [](RunConfig& c) -> double& { return c.ranges.rib_contrast_max; }));
  t.push_back(spec_double("dataset", "spine_prob",
                          [](RunConfig& c) -> double& { return c.ranges.spine_prob; }));
  t.push_back(spec_double("dataset", "noise_sigma",
                          [](RunConfig& c) -> double& { return c.ranges.noise_sigma; }));
  t.push_back(spec_double("dataset", "radius_min",
                          [](RunConfig& c) -> double& { return c.ranges.radius_min; }));
  t.push_back(spec_double("dataset", "radius_max",
                          [](RunConfig& c) -> double& { return c.ranges.radius_max; }));
  t.push_back(spec_double("dataset", "contrast_min",
                          [](RunConfig& c) -> double& { return c.ranges.contrast_min; }));
  t.push_back(spec_double("dataset", "contrast_max",
                          [](RunConfig& c) -> double& { return c.ranges.contrast_max; }));
  t.push_back(spec_double("dataset", "boost_min",
                          [](RunConfig& c) -> double& { return c.ranges.boost_min; }));
  t.push_back(spec_double("dataset", "boost_max",
                          [](RunConfig& c) -> double& { return c.ranges.boost_max; }));
  t.push_back(spec_double("dataset", "center_jitter",
                          [](RunConfig& c) -> double& { return c.ranges.center_jitter; }));

  t.push_back(spec_double("inpaint", "lambda_rec", [](RunConfig& c) -> double& {
    return c.inpaint.weights.lambda_rec;
  }));
  t.push_back(spec_double("inpaint", "lambda_adv", [](RunConfig& c) -> double& {
    return c.inpaint.weights.lambda_adv;
  }));
  t.push_back(spec_double("inpaint", "mask_fraction",
                          [](RunConfig& c) -> double& { return c.inpaint.mask_fraction; }));
  t.push_back(spec_int("inpaint", "iterations",
                       [](RunConfig& c) -> int& { return c.inpaint.iterations; }));
  t.push_back(
      spec_int("inpaint", "batch", [](RunConfig& c) -> int& { return c.inpaint.batch; }));
  t.push_back(
      spec_double("inpaint", "lr", [](RunConfig& c) -> double& { return c.inpaint.lr; }));
  t.push_back(spec_bool("inpaint", "rec_full_image",
                        [](RunConfig& c) -> bool& { return c.inpaint.rec_full_image; }));

  t.push_back(
      spec_int("fusion", "epochs", [](RunConfig& c) -> int& { return c.fusion.epochs; }));
  t.push_back(
      spec_int("fusion", "batch", [](RunConfig& c) -> int& { return c.fusion.batch; }));
  t.push_back(
      spec_double("fusion", "lr", [](RunConfig& c) -> double& { return c.fusion.lr; }));
  t.push_back(spec_bool("fusion", "joint_gradients",
                        [](RunConfig& c) -> bool& { return c.fusion.joint_gradients; }));

  t.push_back(
      spec_int("augment", "factor", [](RunConfig& c) -> int& { return c.augment_factor; }));
  t.push_back(spec_double("augment", "translate_max",
                          [](RunConfig& c) -> double& { return c.augment.translate_max; }));
  t.push_back(spec_double("augment", "hflip_prob",
                          [](RunConfig& c) -> double& { return c.augment.hflip_prob; }));
  t.push_back(spec_double("augment", "angle_max",
                          [](RunConfig& c) -> double& { return c.augment.angle_max; }));
  t.push_back(spec_double("augment", "aspect_min",
                          [](RunConfig& c) -> double& { return c.augment.aspect_min; }));
  t.push_back(spec_double("augment", "aspect_max",
                          [](RunConfig& c) -> double& { return c.augment.aspect_max; }));
  t.push_back(spec_double("augment", "scale_min",
                          [](RunConfig& c) -> double& { return c.augment.scale_min; }));
  t.push_back(spec_double("augment", "scale_max",
                          [](RunConfig& c) -> double& { return c.augment.scale_max; }));
  return t;
}

const std::vector<KeySpec>& key_table() {
  static const std::vector<KeySpec> table = build_table();
  return table;
}

bool known_section(const std::string& s) {
  for (const KeySpec& k : key_table())
    if (k.section == s) return true;
  return false;
}

const KeySpec* find_key(const std::string& section, const std::string& key) {
  for (const KeySpec& k : key_table())
    if (k.section == section && k.key == key) return &k;
  return nullptr;
}

// Stage input sizes follow the dataset patch geometry.
void finalize(RunConfig& cfg) {
  cfg.inpaint.input_size = cfg.ranges.patch_size;
  cfg.fusion.input_size = cfg.ranges.patch_size;
}

RunConfig parse_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string at = origin + " line " + std::to_string(lineno);
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ValueError("config: " + at + ": unterminated [section]");
      section = trim(line.substr(1, line.size() - 2));
      if (!known_section(section))
        throw ValueError("config: " + at + ": unknown section [" + section + "]");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ValueError("config: " + at + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty())
      throw ValueError("config: " + at + ": key '" + key + "' outside any [section]");
    const KeySpec* spec = find_key(section, key);
    if (!spec)
      throw ValueError("config: " + at + ": unknown key " + section + "." + key);
    spec->set(cfg, value, section + "." + key);
  }
  return cfg;
}

void check(bool ok, const std::string& path, const std::string& what) {
  if (!ok) bad(path, what);
}

}  // namespace

void apply_env_overrides(RunConfig& cfg) {
  for (const KeySpec& k : key_table()) {
    std::string var = "CALCX_";
    for (char c : k.section) var.push_back(static_cast<char>(std::toupper(c)));
    var += "__";
    for (char c : k.key) var.push_back(static_cast<char>(std::toupper(c)));
    if (const char* v = std::getenv(var.c_str()))
      k.set(cfg, v, k.section + "." + k.key + " (from " + var + ")");
  }
  finalize(cfg);
}

void validate_run_config(const RunConfig& cfg) {
  check(cfg.engine == "trained" || cfg.engine == "classical", "run.engine",
        "must be 'trained' or 'classical', got '" + cfg.engine + "'");
  check(!cfg.out.empty(), "run.out", "must not be empty");

  check(cfg.ranges.patch_size >= 32, "dataset.patch_size", "must be at least 32");
  check(cfg.counts.n_normal >= 0, "dataset.n_normal", "must be non-negative");
  check(cfg.counts.n_calcified >= 0, "dataset.n_calcified", "must be non-negative");
  check(cfg.counts.n_noncalcified >= 0, "dataset.n_noncalcified", "must be non-negative");
  check(cfg.ranges.val_fraction >= 0.0 && cfg.ranges.val_fraction <= 0.9,
        "dataset.val_fraction", "must be in [0, 0.9]");
  check(cfg.ranges.rib_count_min >= 0, "dataset.rib_count_min", "must be non-negative");
  check(cfg.ranges.rib_count_max >= cfg.ranges.rib_count_min, "dataset.rib_count_max",
        "must be >= rib_count_min");
  check(cfg.ranges.rib_contrast_min >= 0.0, "dataset.rib_contrast_min",
        "must be non-negative");
  check(cfg.ranges.rib_contrast_max >= cfg.ranges.rib_contrast_min &&
            cfg.ranges.rib_contrast_max <= 0.5,
        "dataset.rib_contrast_max", "must be in [rib_contrast_min, 0.5]");
  check(cfg.ranges.spine_prob >= 0.0 && cfg.ranges.spine_prob <= 1.0, "dataset.spine_prob",
        "must be in [0, 1]");
  check(cfg.ranges.noise_sigma >= 0.0 && cfg.ranges.noise_sigma <= 0.2,
        "dataset.noise_sigma", "must be in [0, 0.2]");
  check(cfg.ranges.radius_min >= 2.0, "dataset.radius_min", "must be at least 2");
  check(cfg.ranges.radius_max >= cfg.ranges.radius_min, "dataset.radius_max",
        "must be >= radius_min");
  check(cfg.ranges.center_jitter >= 0.0, "dataset.center_jitter", "must be non-negative");
  check(cfg.ranges.radius_max + cfg.ranges.center_jitter + 2.0 <=
            cfg.ranges.patch_size / 2.0,
        "dataset.radius_max", "nodule disc cannot fit inside the patch");
  check(cfg.ranges.contrast_min > 0.0, "dataset.contrast_min", "must be positive");
  check(cfg.ranges.contrast_max >= cfg.ranges.contrast_min &&
            cfg.ranges.contrast_max <= 0.5,
        "dataset.contrast_max", "must be in [contrast_min, 0.5]");
  check(cfg.ranges.boost_min > 0.0, "dataset.boost_min", "must be positive");
  check(cfg.ranges.boost_max >= cfg.ranges.boost_min && cfg.ranges.boost_max <= 0.5,
        "dataset.boost_max", "must be in [boost_min, 0.5]");

  const double lsum = cfg.inpaint.weights.lambda_rec + cfg.inpaint.weights.lambda_adv;
  check(cfg.inpaint.weights.lambda_rec >= 0.0, "inpaint.lambda_rec",
        "must be non-negative");
  check(cfg.inpaint.weights.lambda_adv >= 0.0, "inpaint.lambda_adv",
        "must be non-negative");
  check(std::abs(lsum - 1.0) <= 1e-9, "inpaint.lambda_rec",
        "lambda_rec + lambda_adv must sum to 1, got " + dtoa_roundtrip(lsum));
  check(cfg.inpaint.mask_fraction > 0.0 && cfg.inpaint.mask_fraction <= 0.9,
        "inpaint.mask_fraction", "must be in (0, 0.9]");
  check(cfg.inpaint.iterations >= 1, "inpaint.iterations", "must be positive");
  check(cfg.inpaint.batch >= 1, "inpaint.batch", "must be positive");
  check(cfg.inpaint.lr > 0.0, "inpaint.lr", "must be positive");

  check(cfg.fusion.epochs >= 1, "fusion.epochs", "must be positive");
  check(cfg.fusion.batch >= 1, "fusion.batch", "must be positive");
  check(cfg.fusion.lr > 0.0, "fusion.lr", "must be positive");

  check(cfg.augment_factor >= 0, "augment.factor", "must be non-negative");
  try {
    validate_ranges(cfg.augment);
  } catch (const ValueError& e) {
    throw ValueError("config: augment: " + std::string(e.what()));
  }
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  RunConfig cfg = parse_text(text, origin);
  finalize(cfg);
  validate_run_config(cfg);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& file) {
  RunConfig cfg = parse_text(read_text_file(file), file.string());
  apply_env_overrides(cfg);
  validate_run_config(cfg);
  return cfg;
}

std::string config_snapshot(const RunConfig& cfg) {
  std::string out = "# resolved run configuration\n";
  std::string section;
  for (const KeySpec& k : key_table()) {
    if (k.section != section) {
      section = k.section;
      out += "\n[" + section + "]\n";
    }
    out += k.key + " = " + k.get(cfg) + "\n";
  }
  return out;
}

std::string run_id(const RunConfig& cfg) {
  const std::string material = config_snapshot(cfg) + "\nversion = " + kVersion + "\n";
  return sha256_hex(material).substr(0, 12);
}

}  // namespace calcx
