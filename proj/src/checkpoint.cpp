#include "s2sp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts are unsupported");

namespace s2sp {

namespace {

constexpr char kMagic[4] = {'S', '2', 'S', 'P'};
constexpr uint32_t kMaxNameLen = 1 << 20;
constexpr uint32_t kMaxRank = 8;
constexpr uint64_t kMaxDim = 1ull << 32;

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open checkpoint for writing: " + path);
  }
  void bytes(const void* p, size_t n) { out_.write(static_cast<const char*>(p), n); }
  void u32(uint32_t v) { bytes(&v, sizeof v); }
  void u64(uint64_t v) { bytes(&v, sizeof v); }
  void u8(uint8_t v) { bytes(&v, sizeof v); }
  void check(const std::string& path) {
    out_.flush();
    if (!out_) throw IoError("checkpoint write failed: " + path);
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw IoError("cannot open checkpoint: " + path);
  }
  void bytes(void* p, size_t n) {
    in_.read(static_cast<char*>(p), n);
    if (static_cast<size_t>(in_.gcount()) != n)
      throw IoError("corrupt checkpoint (truncated): " + path_);
  }
  uint32_t u32() {
    uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  uint64_t u64() {
    uint64_t v;
    bytes(&v, sizeof v);
    return v;
  }
  uint8_t u8() {
    uint8_t v;
    bytes(&v, sizeof v);
    return v;
  }
  void expect_eof() {
    char c;
    in_.read(&c, 1);
    if (!in_.eof()) throw IoError("corrupt checkpoint (trailing bytes): " + path_);
  }

 private:
  std::ifstream in_;
  std::string path_;
};

void write_tensor_block(Writer& w, const std::string& name, const Shape& shape,
                        const std::vector<float>& data) {
  w.u32(static_cast<uint32_t>(name.size()));
  w.bytes(name.data(), name.size());
  w.u32(static_cast<uint32_t>(shape.size()));
  for (int64_t d : shape) w.u64(static_cast<uint64_t>(d));
  w.bytes(data.data(), data.size() * sizeof(float));
}

std::pair<std::string, TensorF> read_tensor_block(Reader& r) {
  const uint32_t name_len = r.u32();
  if (name_len == 0 || name_len > kMaxNameLen) throw IoError("corrupt checkpoint (bad name length)");
  std::string name(name_len, '\0');
  r.bytes(name.data(), name_len);
  const uint32_t rank = r.u32();
  if (rank == 0 || rank > kMaxRank) throw IoError("corrupt checkpoint (bad rank for " + name + ")");
  Shape shape(rank);
  uint64_t numel = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    const uint64_t d = r.u64();
    if (d == 0 || d > kMaxDim || numel > kMaxDim) throw IoError("corrupt checkpoint (bad dims for " + name + ")");
    shape[i] = static_cast<int64_t>(d);
    numel *= d;
  }
  std::vector<float> data(numel);
  r.bytes(data.data(), numel * sizeof(float));
  return {name, make_tensor<float>(std::move(shape), std::move(data))};
}

}  // namespace

uint64_t Checkpoint::value_hash() const {
  uint64_t h = 0xCBF29CE484222325ull;
  for (const auto& [name, t] : tensors) {
    h = fnv1a64(name, h);
    h = fnv1a64(t->data.data(), t->data.size() * sizeof(float), h);
  }
  h = fnv1a64(&rng_state, sizeof rng_state, h);
  h = fnv1a64(&step, sizeof step, h);
  for (const auto& [name, m] : adam_m) h = fnv1a64(m.data(), m.size() * sizeof(float), h);
  for (const auto& [name, v] : adam_v) h = fnv1a64(v.data(), v.size() * sizeof(float), h);
  return h;
}

Checkpoint checkpoint_from_params(const ParamStore& params, uint64_t rng_state, uint64_t step,
                                  const Adam* adam) {
  Checkpoint ckpt;
  ckpt.rng_state = rng_state;
  ckpt.step = step;
  for (const auto& [name, t] : params.items())
    ckpt.tensors.emplace_back(name, make_tensor<float>(t->shape, t->data));
  if (adam) {
    ckpt.has_optimizer = true;
    ckpt.adam_step = static_cast<uint64_t>(adam->steps());
    auto& m = const_cast<Adam*>(adam)->first_moments();
    auto& v = const_cast<Adam*>(adam)->second_moments();
    for (size_t i = 0; i < params.items().size(); ++i) {
      ckpt.adam_m.emplace_back(params.items()[i].first, m[i]);
      ckpt.adam_v.emplace_back(params.items()[i].first, v[i]);
    }
  }
  return ckpt;
}

void checkpoint_into_params(const Checkpoint& ckpt, const ParamStore& params) {
  if (ckpt.tensors.size() != params.size())
    throw IoError("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                  std::to_string(params.size()));
  for (size_t i = 0; i < params.items().size(); ++i) {
    const auto& [name, dst] = params.items()[i];
    const auto& [ckpt_name, src] = ckpt.tensors[i];
    if (name != ckpt_name)
      throw IoError("checkpoint tensor order mismatch: expected " + name + ", found " + ckpt_name);
    if (dst->shape != src->shape)
      throw IoError("checkpoint shape mismatch for " + name + ": " + shape_str(src->shape) + " vs " +
                    shape_str(dst->shape));
    dst->data = src->data;
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  Writer w(path);
  w.bytes(kMagic, 4);
  w.u32(ckpt.version);
  w.u64(ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) write_tensor_block(w, name, t->shape, t->data);
  w.u64(ckpt.rng_state);
  w.u64(ckpt.step);
  w.u8(ckpt.has_optimizer ? 1 : 0);
  if (ckpt.has_optimizer) {
    w.u64(ckpt.adam_step);
    w.u64(ckpt.adam_m.size() + ckpt.adam_v.size());
    for (const auto& [name, m] : ckpt.adam_m)
      write_tensor_block(w, "adam.m." + name, {static_cast<int64_t>(m.size())}, m);
    for (const auto& [name, v] : ckpt.adam_v)
      write_tensor_block(w, "adam.v." + name, {static_cast<int64_t>(v.size())}, v);
  }
  w.check(path);
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("not a checkpoint file (bad magic): " + path);
  Checkpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(ckpt.version) + " in " + path);
  const uint64_t count = r.u64();
  if (count > 1 << 20) throw IoError("corrupt checkpoint (tensor count): " + path);
  for (uint64_t i = 0; i < count; ++i) ckpt.tensors.push_back(read_tensor_block(r));
  ckpt.rng_state = r.u64();
  ckpt.step = r.u64();
  ckpt.has_optimizer = r.u8() != 0;
  if (ckpt.has_optimizer) {
    ckpt.adam_step = r.u64();
    const uint64_t optim_count = r.u64();
    if (optim_count % 2 != 0) throw IoError("corrupt checkpoint (optimizer block): " + path);
    for (uint64_t i = 0; i < optim_count; ++i) {
      auto [name, tensor] = read_tensor_block(r);
      if (name.rfind("adam.m.", 0) == 0)
        ckpt.adam_m.emplace_back(name.substr(7), tensor->data);
      else if (name.rfind("adam.v.", 0) == 0)
        ckpt.adam_v.emplace_back(name.substr(7), tensor->data);
      else
        throw IoError("corrupt checkpoint (unknown optimizer tensor " + name + "): " + path);
    }
  }
  r.expect_eof();
  return ckpt;
}

}  // namespace s2sp
