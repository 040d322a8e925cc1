#include "calcx/manifest.hpp"

#include <fstream>

#include <json.hpp>

#include "calcx/error.hpp"
#include "calcx/util.hpp"

namespace calcx {

using nlohmann::json;

namespace {

json row_to_json(const ManifestRow& r) {
  json j;
  j["id"] = r.id;
  j["split"] = r.split;
  j["label"] = r.label;
  j["image"] = r.image;
  if (!r.mask.empty()) j["mask"] = r.mask;
  if (!r.clean.empty()) j["clean"] = r.clean;
  if (!r.refined.empty()) j["refined"] = r.refined;
  j["seed"] = r.seed;
  if (r.nodule) {
    j["nodule"] = {{"cx", r.nodule->cx},           {"cy", r.nodule->cy},
                   {"radius", r.nodule->radius},   {"contrast", r.nodule->contrast},
                   {"calc_boost", r.nodule->calc_boost}, {"pattern", r.nodule->pattern}};
  }
  if (r.transform) {
    j["transform"] = {{"dx", r.transform->dx},       {"dy", r.transform->dy},
                      {"hflip", r.transform->hflip}, {"angle", r.transform->angle_deg},
                      {"aspect", r.transform->aspect}, {"scale", r.transform->scale},
                      {"seed", r.transform->seed}};
  }
  return j;
}

ManifestRow row_from_json(const json& j) {
  ManifestRow r;
  r.id = j.at("id").get<std::string>();
  r.split = j.at("split").get<std::string>();
  r.label = j.at("label").get<std::string>();
  r.image = j.at("image").get<std::string>();
  r.mask = j.value("mask", "");
  r.clean = j.value("clean", "");
  r.refined = j.value("refined", "");
  r.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("nodule")) {
    const json& n = j.at("nodule");
    NoduleGeometry g;
    g.cx = n.at("cx").get<double>();
    g.cy = n.at("cy").get<double>();
    g.radius = n.at("radius").get<double>();
    g.contrast = n.at("contrast").get<double>();
    g.calc_boost = n.value("calc_boost", 0.0);
    g.pattern = n.at("pattern").get<std::string>();
    r.nodule = g;
  }
  if (j.contains("transform")) {
    const json& t = j.at("transform");
    TransformRecord rec;
    rec.dx = t.at("dx").get<double>();
    rec.dy = t.at("dy").get<double>();
    rec.hflip = t.at("hflip").get<bool>();
    rec.angle_deg = t.at("angle").get<double>();
    rec.aspect = t.at("aspect").get<double>();
    rec.scale = t.at("scale").get<double>();
    rec.seed = t.value("seed", std::uint64_t{0});
    r.transform = rec;
  }
  return r;
}

}  // namespace

Manifest Manifest::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open manifest: " + file.string());
  Manifest m;
  m.root = file.parent_path();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw IoError("bad manifest line " + std::to_string(lineno) + " in " + file.string());
    m.rows.push_back(row_from_json(j));
  }
  return m;
}

void Manifest::save(const std::filesystem::path& file) const {
  if (file.has_parent_path()) ensure_dir(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot create manifest: " + file.string());
  for (const auto& r : rows) out << row_to_json(r).dump() << "\n";
  if (!out) throw IoError("write failed: " + file.string());
}

std::vector<const ManifestRow*> Manifest::select(const std::string& label,
                                                 const std::string& split) const {
  std::vector<const ManifestRow*> out;
  for (const auto& r : rows)
    if ((label.empty() || r.label == label) && (split.empty() || r.split == split))
      out.push_back(&r);
  return out;
}

const ManifestRow* Manifest::find(const std::string& id) const {
  for (const auto& r : rows)
    if (r.id == id) return &r;
  return nullptr;
}

}  // namespace calcx
