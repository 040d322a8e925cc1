#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace calcx {

struct NoduleGeometry {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;
  double contrast = 0.0;
  double calc_boost = 0.0;
  std::string pattern = "none";  // none|diffuse|central|laminar|popcorn
};

// Serialized augmentation parameters; replays to a byte-identical pair.
struct TransformRecord {
  double dx = 0.0;
  double dy = 0.0;
  bool hflip = false;
  double angle_deg = 0.0;
  double aspect = 1.0;
  double scale = 1.0;
  std::uint64_t seed = 0;
};

struct ManifestRow {
  std::string id;
  std::string split;  // train|val
  std::string label;  // normal|calcified|non_calcified
  std::string image;  // paths relative to the manifest root
  std::string mask;
  std::string clean;
  std::string refined;
  std::uint64_t seed = 0;
  std::optional<NoduleGeometry> nodule;
  std::optional<TransformRecord> transform;
};

// On-disk dataset index: one JSON object per line in manifest.jsonl, paths
// resolved against the file's directory.
struct Manifest {
  std::filesystem::path root;
  std::vector<ManifestRow> rows;

  static Manifest load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;

  std::filesystem::path resolve(const std::string& relative) const { return root / relative; }

  std::vector<const ManifestRow*> select(const std::string& label, const std::string& split) const;
  const ManifestRow* find(const std::string& id) const;
};

}  // namespace calcx
