#include "infnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace infnet {

namespace {

constexpr char kMagic[4] = {'I', 'N', 'F', 'N'};

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    buf_.append(s);
  }
  void uvec(const std::vector<std::size_t>& v) {
    u64(v.size());
    for (std::size_t x : v) u64(x);
  }
  void buffer(const NamedBuffer& b) {
    str(b.name);
    uvec(b.shape);
    u64(b.data.size());
    for (double x : b.data) f64(x);
  }
  void buffers(const std::vector<NamedBuffer>& bs) {
    u64(bs.size());
    for (const auto& b : bs) buffer(b);
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string bytes) : buf_(std::move(bytes)) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() {
    const char* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const char* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    return std::string(take(n), n);
  }
  std::vector<std::size_t> uvec() {
    const std::uint64_t n = u64();
    std::vector<std::size_t> v(n);
    for (auto& x : v) x = u64();
    return v;
  }
  NamedBuffer buffer() {
    NamedBuffer b;
    b.name = str();
    b.shape = uvec();
    const std::uint64_t n = u64();
    if (n != numel(b.shape)) {
      throw IoError("checkpoint: tensor '" + b.name + "' length disagrees with shape");
    }
    b.data.resize(n);
    for (auto& x : b.data) x = f64();
    return b;
  }
  std::vector<NamedBuffer> buffers() {
    const std::uint64_t n = u64();
    std::vector<NamedBuffer> v;
    v.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) v.push_back(buffer());
    return v;
  }
  std::size_t pos() const { return pos_; }
  std::size_t size() const { return buf_.size(); }

 private:
  const char* take(std::size_t n) {
    if (pos_ + n > buf_.size()) throw IoError("checkpoint: truncated file");
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::string buf_;
  std::size_t pos_ = 0;
};

void write_schema(Writer& w, const FeatureSchema& s) {
  w.u64(s.num_fields);
  w.uvec(s.cardinalities);
  w.u64(s.num_behaviors);
  w.uvec(s.max_lens);
  w.uvec(s.seq_vocabs);
  w.u64(s.num_tasks);
  w.u64(s.embed_dim);
  w.u64(s.num_cat_proxies);
  w.u64(s.num_shared_tokens);
}

FeatureSchema read_schema(Reader& r) {
  FeatureSchema s;
  s.num_fields = r.u64();
  s.cardinalities = r.uvec();
  s.num_behaviors = r.u64();
  s.max_lens = r.uvec();
  s.seq_vocabs = r.uvec();
  s.num_tasks = r.u64();
  s.embed_dim = r.u64();
  s.num_cat_proxies = r.u64();
  s.num_shared_tokens = r.u64();
  return s;
}

void write_config(Writer& w, const TrainConfig& c) {
  w.u64(c.batch_size);
  w.f64(c.learning_rate);
  w.u8(c.optimizer == OptimizerKind::adam ? 0 : 1);
  w.f64(c.l2_weight);
  w.f64(c.dropout);
  w.u64(c.num_blocks);
  w.u64(c.num_heads);
  w.u64(c.d_k);
  w.u64(c.patience);
  w.u64(c.max_epochs);
  w.u64(c.seed);
  w.u8(static_cast<std::uint8_t>(c.ablation));
  w.u8(c.grad_clip ? 1 : 0);
  w.f64(c.grad_clip_norm);
}

TrainConfig read_config(Reader& r) {
  TrainConfig c;
  c.batch_size = r.u64();
  c.learning_rate = r.f64();
  c.optimizer = r.u8() == 0 ? OptimizerKind::adam : OptimizerKind::adagrad;
  c.l2_weight = r.f64();
  c.dropout = r.f64();
  c.num_blocks = r.u64();
  c.num_heads = r.u64();
  c.d_k = r.u64();
  c.patience = r.u64();
  c.max_epochs = r.u64();
  c.seed = r.u64();
  const std::uint8_t ab = r.u8();
  if (ab > 3) throw IoError("checkpoint: bad ablation tag");
  c.ablation = static_cast<Ablation>(ab);
  c.grad_clip = r.u8() != 0;
  c.grad_clip_norm = r.f64();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  Writer w;
  w.u32(kCheckpointVersion);
  write_schema(w, ckpt.schema);
  write_config(w, ckpt.config);
  w.u64(ckpt.opt_steps);
  w.u64(ckpt.global_step);
  w.u64(ckpt.epoch);
  w.u64(ckpt.evals_done);
  w.u64(ckpt.stale_evals);
  w.f64(ckpt.best_metric);
  w.buffers(ckpt.params);
  w.buffers(ckpt.opt_m);
  w.buffers(ckpt.opt_v);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(kMagic, 4);
  const std::string& payload = w.bytes();
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  const std::uint64_t checksum = fnv1a(payload);
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((checksum >> (8 * i)) & 0xff));
  if (!out) throw IoError("write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() < 4 + 4 + 8) throw IoError("checkpoint: truncated file");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw IoError("checkpoint: bad magic, not a checkpoint file");
  }
  const std::string payload = bytes.substr(4, bytes.size() - 12);
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) {
    stored |= static_cast<std::uint64_t>(
                  static_cast<unsigned char>(bytes[bytes.size() - 8 + i]))
              << (8 * i);
  }
  if (fnv1a(payload) != stored) throw IoError("checkpoint: checksum mismatch, corrupt file");

  Reader r(payload);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint: format version " + std::to_string(version) +
                  " not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  c.schema = read_schema(r);
  c.config = read_config(r);
  c.opt_steps = r.u64();
  c.global_step = r.u64();
  c.epoch = r.u64();
  c.evals_done = r.u64();
  c.stale_evals = r.u64();
  c.best_metric = r.f64();
  c.params = r.buffers();
  c.opt_m = r.buffers();
  c.opt_v = r.buffers();
  if (r.pos() != r.size()) throw IoError("checkpoint: trailing bytes, corrupt file");
  return c;
}

}  // namespace infnet
