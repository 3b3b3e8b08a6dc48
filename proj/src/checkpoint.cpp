#include "gase/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <vector>

namespace gase {

namespace {

std::uint32_t crc32_update(std::uint32_t crc, const void* buf, std::size_t len) {
  static std::uint32_t table[256];
  static bool ready = false;
  if (!ready) {
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    ready = true;
  }
  const auto* p = static_cast<const unsigned char*>(buf);
  crc ^= 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i)
    crc = table[(crc ^ p[i]) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

struct Writer {
  std::vector<char> bytes;

  void raw(const void* p, std::size_t len) {
    const char* c = static_cast<const char*>(p);
    bytes.insert(bytes.end(), c, c + len);
  }
  void u16(std::uint16_t v) {
    char b[2] = {static_cast<char>(v), static_cast<char>(v >> 8)};
    raw(b, 2);
  }
  void u32(std::uint32_t v) {
    char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8),
                 static_cast<char>(v >> 16), static_cast<char>(v >> 24)};
    raw(b, 4);
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
};

struct Reader {
  std::vector<char> bytes;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > bytes.size()) throw LoadError("checkpoint: truncated file");
  }
  void raw(void* p, std::size_t len) {
    need(len);
    std::memcpy(p, bytes.data() + pos, len);
    pos += len;
  }
  std::uint16_t u16() {
    unsigned char b[2];
    raw(b, 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }
  std::uint32_t u32() {
    unsigned char b[4];
    raw(b, 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
};

struct NamedTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

// Lossless float carrier for a u64 (two raw 32-bit patterns).
void push_u64(std::vector<float>& v, std::uint64_t x) {
  float lo, hi;
  std::uint32_t lo_bits = static_cast<std::uint32_t>(x);
  std::uint32_t hi_bits = static_cast<std::uint32_t>(x >> 32);
  std::memcpy(&lo, &lo_bits, 4);
  std::memcpy(&hi, &hi_bits, 4);
  v.push_back(lo);
  v.push_back(hi);
}

std::uint64_t pull_u64(const std::vector<float>& v) {
  std::uint32_t lo_bits, hi_bits;
  std::memcpy(&lo_bits, &v[0], 4);
  std::memcpy(&hi_bits, &v[1], 4);
  return static_cast<std::uint64_t>(lo_bits) |
         (static_cast<std::uint64_t>(hi_bits) << 32);
}

}  // namespace

void save_checkpoint(const std::string& path, const Model<float>& model,
                     const AdamState<float>* opt, const CheckpointMeta& meta) {
  std::map<std::string, NamedTensor> entries;

  for (const auto& [name, t] : model.params) {
    NamedTensor nt;
    nt.dims = {static_cast<std::uint32_t>(t.rows()),
               static_cast<std::uint32_t>(t.cols())};
    nt.data = t.data();
    entries[name] = std::move(nt);
  }
  for (const auto& [name, s] : model.bn) {
    entries[name + ".running_mean"] = {
        {static_cast<std::uint32_t>(s.running_mean.size())}, s.running_mean};
    entries[name + ".running_var"] = {
        {static_cast<std::uint32_t>(s.running_var.size())}, s.running_var};
  }
  if (opt) {
    entries["adam.state"] = {
        {4},
        {static_cast<float>(opt->step), opt->lr, opt->beta1, opt->beta2}};
    for (const auto& [name, mv] : opt->moments) {
      entries["adam.m." + name] = {
          {static_cast<std::uint32_t>(mv.first.size())}, mv.first};
      entries["adam.v." + name] = {
          {static_cast<std::uint32_t>(mv.second.size())}, mv.second};
    }
  }
  {
    NamedTensor m;
    m.dims = {8};
    m.data = {static_cast<float>(meta.cfg.d_x),
              static_cast<float>(meta.cfg.layers),
              static_cast<float>(meta.cfg.heads),
              static_cast<float>(meta.cfg.clip),
              static_cast<float>(meta.epoch), static_cast<float>(meta.n),
              static_cast<float>(meta.capacity), static_cast<float>(meta.k)};
    entries["meta.run"] = std::move(m);
    NamedTensor seed;
    seed.dims = {2};
    push_u64(seed.data, meta.seed);
    entries["meta.seed"] = std::move(seed);
    entries["meta.lr"] = {{1}, {static_cast<float>(meta.lr)}};
  }

  Writer w;
  w.raw("GASE", 4);
  w.u32(1);  // version
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, nt] : entries) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw(name.data(), name.size());
    char ndim = static_cast<char>(nt.dims.size());
    w.raw(&ndim, 1);
    for (auto dim : nt.dims) w.u32(dim);
    for (float v : nt.data) w.f32(v);
  }
  std::uint32_t crc = crc32_update(0, w.bytes.data(), w.bytes.size());
  w.u32(crc);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw ArgumentError("cannot open for writing: " + path);
  os.write(w.bytes.data(), static_cast<std::streamsize>(w.bytes.size()));
  if (!os) throw ArgumentError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path,
                           const ModelConfig* expected) {
  Reader r;
  {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw LoadError("cannot open checkpoint: " + path);
    r.bytes.assign(std::istreambuf_iterator<char>(is),
                   std::istreambuf_iterator<char>());
  }
  if (r.bytes.size() < 16) throw LoadError("checkpoint: truncated file");
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, "GASE", 4) != 0)
    throw LoadError("checkpoint: magic mismatch");
  std::uint32_t version = r.u32();
  if (version != 1)
    throw LoadError("checkpoint: unsupported version " +
                    std::to_string(version));

  std::uint32_t stored_crc;
  {
    std::size_t body = r.bytes.size() - 4;
    std::memcpy(&stored_crc, r.bytes.data() + body, 4);
    std::uint32_t lo = static_cast<unsigned char>(r.bytes[body]);
    std::uint32_t b1 = static_cast<unsigned char>(r.bytes[body + 1]);
    std::uint32_t b2 = static_cast<unsigned char>(r.bytes[body + 2]);
    std::uint32_t b3 = static_cast<unsigned char>(r.bytes[body + 3]);
    stored_crc = lo | (b1 << 8) | (b2 << 16) | (b3 << 24);
    std::uint32_t crc = crc32_update(0, r.bytes.data(), body);
    if (crc != stored_crc) throw LoadError("checkpoint: CRC mismatch");
  }

  std::uint32_t count = r.u32();
  std::map<std::string, NamedTensor> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint16_t len = r.u16();
    std::string name(len, '\0');
    r.raw(name.data(), len);
    char ndim;
    r.raw(&ndim, 1);
    NamedTensor nt;
    std::size_t total = 1;
    for (int d = 0; d < ndim; ++d) {
      nt.dims.push_back(r.u32());
      total *= nt.dims.back();
    }
    nt.data.resize(total);
    for (auto& v : nt.data) v = r.f32();
    entries[name] = std::move(nt);
  }

  auto get = [&](const std::string& name) -> const NamedTensor& {
    auto it = entries.find(name);
    if (it == entries.end())
      throw LoadError("checkpoint: missing tensor " + name);
    return it->second;
  };

  Checkpoint ck;
  const auto& m = get("meta.run");
  if (m.data.size() != 8) throw LoadError("checkpoint: bad meta.run");
  ck.meta.cfg.d_x = static_cast<int>(m.data[0]);
  ck.meta.cfg.layers = static_cast<int>(m.data[1]);
  ck.meta.cfg.heads = static_cast<int>(m.data[2]);
  ck.meta.cfg.clip = m.data[3];
  ck.meta.epoch = static_cast<int>(m.data[4]);
  ck.meta.n = static_cast<int>(m.data[5]);
  ck.meta.capacity = m.data[6];
  ck.meta.k = static_cast<int>(m.data[7]);
  ck.meta.seed = pull_u64(get("meta.seed").data);
  ck.meta.lr = get("meta.lr").data[0];

  // Shapes are validated against the requested config when one is given, so
  // a mismatched file is rejected naming the first offending tensor.
  ck.model = Model<float>::init(expected ? *expected : ck.meta.cfg, 0);
  for (auto& [name, t] : ck.model.params) {
    const auto& nt = get(name);
    if (nt.dims.size() != 2 ||
        nt.dims[0] != static_cast<std::uint32_t>(t.rows()) ||
        nt.dims[1] != static_cast<std::uint32_t>(t.cols()))
      throw LoadError("checkpoint: shape mismatch for tensor " + name);
    t.mutable_data() = nt.data;
  }
  for (auto& [name, s] : ck.model.bn) {
    const auto& rm = get(name + ".running_mean");
    const auto& rv = get(name + ".running_var");
    if (rm.data.size() != s.running_mean.size() ||
        rv.data.size() != s.running_var.size())
      throw LoadError("checkpoint: shape mismatch for tensor " + name +
                      ".running_mean");
    s.running_mean = rm.data;
    s.running_var = rv.data;
  }
  if (expected && !(ck.meta.cfg == *expected))
    throw LoadError("checkpoint: config signature mismatch");

  if (entries.count("adam.state")) {
    ck.has_opt = true;
    const auto& st = get("adam.state");
    ck.opt.step = static_cast<long>(st.data[0]);
    ck.opt.lr = st.data[1];
    ck.opt.beta1 = st.data[2];
    ck.opt.beta2 = st.data[3];
    for (const auto& [name, t] : ck.model.params) {
      auto mi = entries.find("adam.m." + name);
      auto vi = entries.find("adam.v." + name);
      if (mi == entries.end() || vi == entries.end()) continue;
      if (mi->second.data.size() != t.size() ||
          vi->second.data.size() != t.size())
        throw LoadError("checkpoint: shape mismatch for tensor adam.m." + name);
      ck.opt.moments[name] = {mi->second.data, vi->second.data};
    }
  }
  return ck;
}

}  // namespace gase
