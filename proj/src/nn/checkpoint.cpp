#include "vetta/nn/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

namespace vetta::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw CheckpointError("checkpoint: cannot open " + path + " for writing");
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  template <class U>
  void pod(U v) {
    bytes(&v, sizeof(U));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    bytes(s.data(), s.size());
  }
  template <class U>
  void values(const std::vector<U>& v) {
    bytes(v.data(), v.size() * sizeof(U));
  }
  void close(const std::string& path) {
    out_.flush();
    if (!out_) throw CheckpointError("checkpoint: write failed for " + path);
    out_.close();
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw CheckpointError("checkpoint: cannot open " + path);
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw CheckpointError("checkpoint: truncated file " + path_);
  }
  template <class U>
  U pod() {
    U v;
    bytes(&v, sizeof(U));
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > (1ULL << 32)) throw CheckpointError("checkpoint: implausible string length in " + path_);
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  template <class U>
  void values(std::vector<U>& v) {
    bytes(v.data(), v.size() * sizeof(U));
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::string path_;
  std::ifstream in_;
};

CheckpointHeader read_header(Reader& r, const std::string& path) {
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw CheckpointError("checkpoint: bad magic in " + path);
  CheckpointHeader h;
  h.version = r.pod<std::uint32_t>();
  if (h.version != kCheckpointVersion)
    throw CheckpointError("checkpoint: unsupported format version " + std::to_string(h.version));
  h.float_width = r.pod<std::uint32_t>();
  if (h.float_width != 4 && h.float_width != 8)
    throw CheckpointError("checkpoint: invalid float width " + std::to_string(h.float_width));
  h.step = r.pod<std::uint64_t>();
  return h;
}

}  // namespace

template <class T>
void save_checkpoint(const std::string& path, const ParamStore<T>& params, const OptState<T>* opt,
                     std::uint64_t step, const std::string& config_json) {
  const std::string tmp = path + ".tmp";
  {
    Writer w(tmp);
    w.bytes(kCheckpointMagic, 4);
    w.pod<std::uint32_t>(kCheckpointVersion);
    w.pod<std::uint32_t>(sizeof(T));
    w.pod<std::uint64_t>(step);
    w.pod<std::uint64_t>(params.seed());
    w.str(config_json);
    w.pod<std::uint64_t>(params.entries().size());
    for (const auto& [name, p] : params.entries()) {
      w.pod<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
      w.bytes(name.data(), name.size());
      w.pod<std::uint32_t>(static_cast<std::uint32_t>(p.value.shape.size()));
      for (auto d : p.value.shape) w.pod<std::uint64_t>(d);
      w.values(p.value.data);
    }
    w.pod<std::uint8_t>(opt ? 1 : 0);
    if (opt) {
      w.pod<std::uint64_t>(opt->step);
      w.pod<double>(opt->hyper.beta1);
      w.pod<double>(opt->hyper.beta2);
      w.pod<double>(opt->hyper.eps);
      w.pod<double>(opt->hyper.weight_decay);
      w.pod<double>(opt->schedule.peak_lr);
      w.pod<std::uint64_t>(opt->schedule.warmup_steps);
      w.pod<double>(opt->schedule.decay_period);
      w.pod<double>(opt->schedule.decay_factor);
      for (const auto& [name, p] : params.entries()) {
        const auto m = opt->m.find(name);
        const auto v = opt->v.find(name);
        const bool has = m != opt->m.end() && v != opt->v.end();
        w.pod<std::uint8_t>(has ? 1 : 0);
        if (has) {
          w.values(m->second);
          w.values(v->second);
        }
      }
    }
    w.close(tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError("checkpoint: cannot move " + tmp + " to " + path + ": " + ec.message());
}

template <class T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  Reader r(path);
  const CheckpointHeader h = read_header(r, path);
  if (h.float_width != sizeof(T))
    throw CheckpointError("checkpoint: stored with " + std::to_string(8 * h.float_width) + "-bit floats, expected " +
                          std::to_string(8 * sizeof(T)) + "-bit");
  const auto seed = r.pod<std::uint64_t>();
  Checkpoint<T> ck{h.step, r.str(), ParamStore<T>(seed), std::nullopt};
  const auto n = r.pod<std::uint64_t>();
  std::vector<std::string> names;
  for (std::uint64_t k = 0; k < n; ++k) {
    const auto len = r.pod<std::uint32_t>();
    std::string name(len, '\0');
    r.bytes(name.data(), len);
    const auto rank = r.pod<std::uint32_t>();
    if (rank > 8) throw CheckpointError("checkpoint: implausible rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = r.pod<std::uint64_t>();
    Tensor<T>& t = ck.params.add(name, shape);
    r.values(t.data);
    names.push_back(name);
  }
  if (r.pod<std::uint8_t>()) {
    OptState<T> opt;
    opt.step = r.pod<std::uint64_t>();
    opt.hyper.beta1 = r.pod<double>();
    opt.hyper.beta2 = r.pod<double>();
    opt.hyper.eps = r.pod<double>();
    opt.hyper.weight_decay = r.pod<double>();
    opt.schedule.peak_lr = r.pod<double>();
    opt.schedule.warmup_steps = r.pod<std::uint64_t>();
    opt.schedule.decay_period = r.pod<double>();
    opt.schedule.decay_factor = r.pod<double>();
    for (const auto& name : names) {
      if (!r.pod<std::uint8_t>()) continue;
      const std::size_t size = ck.params.at(name).value.size();
      std::vector<T> m(size), v(size);
      r.values(m);
      r.values(v);
      opt.m.emplace(name, std::move(m));
      opt.v.emplace(name, std::move(v));
    }
    ck.opt = std::move(opt);
  }
  if (!r.at_end()) throw CheckpointError("checkpoint: trailing bytes in " + path);
  return ck;
}

CheckpointHeader read_checkpoint_header(const std::string& path) {
  Reader r(path);
  CheckpointHeader h = read_header(r, path);
  r.pod<std::uint64_t>();
  h.config_json = r.str();
  return h;
}

template void save_checkpoint(const std::string&, const ParamStore<float>&, const OptState<float>*, std::uint64_t,
                              const std::string&);
template void save_checkpoint(const std::string&, const ParamStore<double>&, const OptState<double>*,
                              std::uint64_t, const std::string&);
template Checkpoint<float> load_checkpoint(const std::string&);
template Checkpoint<double> load_checkpoint(const std::string&);

}  // namespace vetta::nn
