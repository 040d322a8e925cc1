#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace calcx::nn {
struct ParamTensor;
}

namespace calcx {

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

struct ParamSection {
  std::string name;  // component tag: generator, discriminator, encoder_raw, ...
  std::vector<NamedTensor> tensors;
};

// Single-file binary checkpoint, little-endian throughout: a header carrying
// the format version, model kind, seed, the digest of the manifest the model
// was trained on (stale-checkpoint detection), and an integer layer schedule,
// followed by named float32 tensors grouped into component sections.
struct Checkpoint {
  std::string kind;             // "inpainter" or "fusion"
  std::uint64_t seed = 0;
  std::string manifest_digest;  // sha256 hex of the training manifest file
  std::vector<int> schedule;    // module-specific architecture description
  std::vector<ParamSection> sections;

  void save(const std::filesystem::path& file) const;
  static Checkpoint load(const std::filesystem::path& file);

  const ParamSection* find_section(const std::string& name) const;
  const NamedTensor* find_tensor(const std::string& section, const std::string& name) const;
};

// Snapshot a parameter list into a section / restore it. Restore matches
// tensors by name and rejects missing or size-mismatched entries.
ParamSection section_from_params(const std::string& name,
                                 const std::vector<nn::ParamTensor*>& ps);
void params_from_section(const ParamSection& sec, const std::vector<nn::ParamTensor*>& ps);

}  // namespace calcx
