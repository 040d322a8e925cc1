#include "calcx/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <memory>

#include "calcx/error.hpp"
#include "calcx/nn.hpp"

namespace calcx {

namespace {

constexpr char kMagic[8] = {'C', 'X', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint32_t kFormatVersion = 1;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::filesystem::path& p, const std::string& what) {
  throw IoError("checkpoint " + p.string() + ": " + what);
}

class Writer {
 public:
  Writer(std::FILE* f, const std::filesystem::path& p) : f_(f), p_(p) {}

  void bytes(const void* data, std::size_t n) {
    if (std::fwrite(data, 1, n, f_) != n) fail(p_, "write failed");
  }
  void u32(std::uint32_t v) { scalar(v); }
  void u64(std::uint64_t v) { scalar(v); }
  void i32(std::int32_t v) { scalar(static_cast<std::uint32_t>(v)); }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    scalar(bits);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

 private:
  template <typename T>
  void scalar(T v) {
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i)
      buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    bytes(buf, sizeof(T));
  }

  std::FILE* f_;
  std::filesystem::path p_;
};

class Reader {
 public:
  Reader(std::FILE* f, const std::filesystem::path& p) : f_(f), p_(p) {}

  void bytes(void* data, std::size_t n) {
    if (std::fread(data, 1, n, f_) != n) fail(p_, "truncated file");
  }
  std::uint32_t u32() { return scalar<std::uint32_t>(); }
  std::uint64_t u64() { return scalar<std::uint64_t>(); }
  std::int32_t i32() { return static_cast<std::int32_t>(scalar<std::uint32_t>()); }
  float f32() {
    const std::uint32_t bits = scalar<std::uint32_t>();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str(std::size_t max_len = 1 << 20) {
    const std::uint32_t n = u32();
    if (n > max_len) fail(p_, "implausible string length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

 private:
  template <typename T>
  T scalar() {
    unsigned char buf[sizeof(T)];
    bytes(buf, sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(buf[i]) << (8 * i);
    return v;
  }

  std::FILE* f_;
  std::filesystem::path p_;
};

}  // namespace

void Checkpoint::save(const std::filesystem::path& file) const {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  FilePtr f(std::fopen(file.string().c_str(), "wb"));
  if (!f) fail(file, "cannot open for writing");
  Writer w(f.get(), file);

  w.bytes(kMagic, sizeof kMagic);
  w.u32(kFormatVersion);
  w.str(kind);
  w.u64(seed);
  w.str(manifest_digest);
  w.u32(static_cast<std::uint32_t>(schedule.size()));
  for (int v : schedule) w.i32(v);

  w.u32(static_cast<std::uint32_t>(sections.size()));
  for (const ParamSection& sec : sections) {
    w.str(sec.name);
    w.u32(static_cast<std::uint32_t>(sec.tensors.size()));
    for (const NamedTensor& t : sec.tensors) {
      w.str(t.name);
      w.u32(static_cast<std::uint32_t>(t.shape.size()));
      std::size_t count = 1;
      for (int d : t.shape) {
        w.i32(d);
        count *= static_cast<std::size_t>(d);
      }
      if (count != t.data.size()) fail(file, "tensor " + t.name + " shape/data mismatch");
      w.u64(t.data.size());
      for (float v : t.data) w.f32(v);
    }
  }
  if (std::fflush(f.get()) != 0) fail(file, "flush failed");
}

Checkpoint Checkpoint::load(const std::filesystem::path& file) {
  FilePtr f(std::fopen(file.string().c_str(), "rb"));
  if (!f) fail(file, "cannot open");
  Reader r(f.get(), file);

  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) fail(file, "bad magic");
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion)
    fail(file, "unsupported format version " + std::to_string(version));

  Checkpoint ck;
  ck.kind = r.str(64);
  ck.seed = r.u64();
  ck.manifest_digest = r.str(128);
  const std::uint32_t n_sched = r.u32();
  if (n_sched > 1024) fail(file, "implausible schedule length");
  ck.schedule.resize(n_sched);
  for (std::uint32_t i = 0; i < n_sched; ++i) ck.schedule[i] = r.i32();

  const std::uint32_t n_sections = r.u32();
  if (n_sections > 64) fail(file, "implausible section count");
  ck.sections.resize(n_sections);
  for (ParamSection& sec : ck.sections) {
    sec.name = r.str(256);
    const std::uint32_t n_tensors = r.u32();
    if (n_tensors > 4096) fail(file, "implausible tensor count");
    sec.tensors.resize(n_tensors);
    for (NamedTensor& t : sec.tensors) {
      t.name = r.str(256);
      const std::uint32_t ndim = r.u32();
      if (ndim > 8) fail(file, "implausible tensor rank");
      t.shape.resize(ndim);
      std::size_t count = 1;
      for (std::uint32_t d = 0; d < ndim; ++d) {
        t.shape[d] = r.i32();
        if (t.shape[d] < 0) fail(file, "negative dimension");
        count *= static_cast<std::size_t>(t.shape[d]);
      }
      const std::uint64_t stored = r.u64();
      if (stored != count) fail(file, "tensor " + t.name + " shape/data mismatch");
      if (count > (std::size_t{1} << 28)) fail(file, "implausible tensor size");
      t.data.resize(count);
      for (std::size_t i = 0; i < count; ++i) t.data[i] = r.f32();
    }
  }
  if (std::fgetc(f.get()) != EOF) fail(file, "trailing bytes after the last section");
  return ck;
}

const ParamSection* Checkpoint::find_section(const std::string& name) const {
  for (const ParamSection& s : sections)
    if (s.name == name) return &s;
  return nullptr;
}

const NamedTensor* Checkpoint::find_tensor(const std::string& section,
                                           const std::string& name) const {
  const ParamSection* s = find_section(section);
  if (!s) return nullptr;
  for (const NamedTensor& t : s->tensors)
    if (t.name == name) return &t;
  return nullptr;
}

ParamSection section_from_params(const std::string& name,
                                 const std::vector<nn::ParamTensor*>& ps) {
  ParamSection sec;
  sec.name = name;
  for (const nn::ParamTensor* p : ps)
    sec.tensors.push_back({p->name, p->shape, p->w});
  return sec;
}

void params_from_section(const ParamSection& sec, const std::vector<nn::ParamTensor*>& ps) {
  for (nn::ParamTensor* p : ps) {
    const NamedTensor* t = nullptr;
    for (const NamedTensor& cand : sec.tensors)
      if (cand.name == p->name) {
        t = &cand;
        break;
      }
    if (!t) throw IoError("checkpoint section " + sec.name + ": missing tensor " + p->name);
    if (t->data.size() != p->count())
      throw IoError("checkpoint section " + sec.name + ": tensor " + p->name +
                    " has wrong size");
    p->w = t->data;
  }
}

}  // namespace calcx
