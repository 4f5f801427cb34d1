#include "pidd/gan.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "pidd/tensor_io.hpp"

namespace pidd {

// ---------------------------------------------------------------- config

KeyValues GeneratorConfig::to_kv() const {
  KeyValues kv;
  kv.set("base_width", std::to_string(base_width));
  kv.set("use_gr", use_gr ? "true" : "false");
  kv.set("use_lr", use_lr ? "true" : "false");
  kv.set("attention", to_string(attention));
  kv.set("fca_parts", std::to_string(fca.n_parts));
  std::string freqs;
  for (const auto& [u, v] : fca.freqs) {
    if (!freqs.empty()) freqs += ' ';
    freqs += std::to_string(u) + ',' + std::to_string(v);
  }
  kv.set("fca_freqs", freqs);
  kv.set("fca_reduction", std::to_string(fca.reduction));
  kv.set("seed", std::to_string(seed));
  return kv;
}

GeneratorConfig GeneratorConfig::from_kv(const KeyValues& kv) {
  const auto unknown = kv.unknown_keys(
      {"base_width", "use_gr", "use_lr", "attention", "fca_parts", "fca_freqs", "fca_reduction", "seed"});
  if (!unknown.empty()) throw FormatError("unknown generator config key '" + unknown.front() + "'");
  GeneratorConfig c;
  if (kv.has("base_width")) c.base_width = kv.get_uint("base_width");
  if (kv.has("use_gr")) c.use_gr = kv.get_bool("use_gr");
  if (kv.has("use_lr")) c.use_lr = kv.get_bool("use_lr");
  if (kv.has("attention")) c.attention = parse_attention(kv.get("attention"));
  if (kv.has("fca_parts")) c.fca.n_parts = kv.get_uint("fca_parts");
  if (kv.has("fca_reduction")) c.fca.reduction = kv.get_uint("fca_reduction");
  if (kv.has("seed")) c.seed = kv.get_uint("seed");
  if (kv.has("fca_freqs")) {
    c.fca.freqs.clear();
    std::istringstream is(kv.get("fca_freqs"));
    std::string tok;
    while (is >> tok) {
      unsigned long u = 0, v = 0;
      char tail = 0;
      if (std::sscanf(tok.c_str(), "%lu,%lu%c", &u, &v, &tail) != 2) {
        throw FormatError("fca_freqs: malformed pair '" + tok + "'");
      }
      c.fca.freqs.emplace_back(u, v);
    }
  }
  if (c.base_width == 0) throw InvalidInput("base_width must be positive");
  return c;
}

// ------------------------------------------------------------- generator

namespace {

template <typename T>
struct DownBlock {
  Conv2d<T> conv;
  BatchNorm2d<T> bn;
  LeakyRelu<T> act;
  ResidualBlock<T> rb;
  std::unique_ptr<Layer<T>> att;

  DownBlock(const std::string& name, std::size_t in, std::size_t out, const GeneratorConfig& cfg, RngStream& rng)
      : conv(name + ".down", in, out, 3, 2, 1, rng),
        bn(name + ".bn", out),
        rb(name + ".res", out, out, cfg.use_lr, rng),
        att(make_attention<T>(cfg.attention, name + ".att", out, cfg.fca, rng)) {}

  Tensor<T> forward(const Tensor<T>& x, Mode m) {
    Tensor<T> y = rb.forward(act.forward(bn.forward(conv.forward(x, m), m), m), m);
    return att ? att->forward(y, m) : y;
  }
  Tensor<T> backward(Tensor<T> g) {
    if (att) g = att->backward(g);
    return conv.backward(bn.backward(act.backward(rb.backward(g))));
  }
  void collect(std::vector<Param<T>*>& out) {
    conv.collect(out);
    bn.collect(out);
    rb.collect(out);
    if (att) att->collect(out);
  }
};

template <typename T>
struct UpBlock {
  Deconv2d<T> deconv;
  BatchNorm2d<T> bn;
  LeakyRelu<T> act;
  std::size_t up_c;
  ResidualBlock<T> rb;
  std::unique_ptr<Layer<T>> att;

  UpBlock(const std::string& name, std::size_t in, std::size_t out, std::size_t skip_c, const GeneratorConfig& cfg,
          RngStream& rng)
      : deconv(name + ".up", in, out, 4, 2, 1, rng),
        bn(name + ".bn", out),
        up_c(out),
        rb(name + ".res", out + skip_c, out, false, rng),
        att(make_attention<T>(cfg.attention, name + ".att", out, cfg.fca, rng)) {}

  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& skip, Mode m) {
    Tensor<T> u = act.forward(bn.forward(deconv.forward(x, m), m), m);
    Tensor<T> y = rb.forward(concat_channels(u, skip), m);
    return att ? att->forward(y, m) : y;
  }
  std::pair<Tensor<T>, Tensor<T>> backward(Tensor<T> g) {
    if (att) g = att->backward(g);
    auto [du, dskip] = split_channels(rb.backward(g), up_c);
    return {deconv.backward(bn.backward(act.backward(du))), std::move(dskip)};
  }
  void collect(std::vector<Param<T>*>& out) {
    deconv.collect(out);
    bn.collect(out);
    rb.collect(out);
    if (att) att->collect(out);
  }
};

}  // namespace

template <typename T>
struct Generator<T>::Impl {
  std::vector<std::unique_ptr<DownBlock<T>>> down;
  std::vector<std::unique_ptr<UpBlock<T>>> up;
  std::unique_ptr<Conv2d<T>> head;
};

template <typename T>
Generator<T>::Generator(const GeneratorConfig& cfg) : cfg_(cfg), impl_(std::make_unique<Impl>()) {
  if (cfg.base_width == 0) throw InvalidInput("generator base width must be positive");
  RngStream rng(cfg.seed, 1);
  std::vector<std::size_t> c(GeneratorConfig::kDepth);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = cfg.base_width << i;
  std::size_t in = 2;
  for (std::size_t i = 0; i < c.size(); ++i) {
    impl_->down.push_back(std::make_unique<DownBlock<T>>("g.enc" + std::to_string(i), in, c[i], cfg, rng));
    in = c[i];
  }
  // up block j restores the scale of encoder level depth-2-j (the input at full scale)
  for (std::size_t j = 0; j < c.size(); ++j) {
    const std::size_t level = c.size() - 1 - j;
    const std::size_t out = level == 0 ? c[0] : c[level - 1];
    const std::size_t skip = level == 0 ? 2 : c[level - 1];
    impl_->up.push_back(std::make_unique<UpBlock<T>>("g.dec" + std::to_string(j), in, out, skip, cfg, rng));
    in = out;
  }
  impl_->head = std::make_unique<Conv2d<T>>("g.head", in, 2, 1, 1, 0, rng);
  // start from the identity map (GR) or zero (no GR) instead of random output
  zero_output_head();
}

template <typename T>
Generator<T>::~Generator() = default;

template <typename T>
Tensor<T> Generator<T>::forward(const Tensor<T>& x, Mode mode) {
  constexpr std::size_t f = std::size_t{1} << GeneratorConfig::kDepth;
  if (x.c() != 2) throw InvalidInput("generator expects 2 channels (re, im), got " + x.shape().str());
  if (x.h() % f != 0 || x.w() % f != 0 || x.h() == 0 || x.w() == 0) {
    throw InvalidInput("generator input dims must be divisible by 16, got " + x.shape().str());
  }
  std::vector<Tensor<T>> enc{x};
  for (auto& d : impl_->down) enc.push_back(d->forward(enc.back(), mode));
  Tensor<T> u = enc.back();
  for (std::size_t j = 0; j < impl_->up.size(); ++j) u = impl_->up[j]->forward(u, enc[enc.size() - 2 - j], mode);
  Tensor<T> y = impl_->head->forward(u, mode);
  if (cfg_.use_gr) y += x;
  return y;
}

template <typename T>
Tensor<T> Generator<T>::backward(const Tensor<T>& g) {
  const std::size_t depth = impl_->down.size();
  std::vector<Tensor<T>> denc(depth + 1);
  Tensor<T> du = impl_->head->backward(g);
  for (std::size_t j = depth; j-- > 0;) {
    auto [dprev, dskip] = impl_->up[j]->backward(du);
    denc[depth - 1 - j] = std::move(dskip);
    du = std::move(dprev);
  }
  // du is now the gradient w.r.t. the deepest encoder output
  for (std::size_t i = depth; i-- > 0;) {
    Tensor<T> dx = impl_->down[i]->backward(du);
    if (!denc[i].data().empty()) dx += denc[i];
    du = std::move(dx);
  }
  if (cfg_.use_gr) du += g;
  return du;
}

template <typename T>
std::vector<Param<T>*> Generator<T>::params() {
  std::vector<Param<T>*> out;
  for (auto& d : impl_->down) d->collect(out);
  for (auto& u : impl_->up) u->collect(out);
  impl_->head->collect(out);
  return out;
}

template <typename T>
void Generator<T>::zero_output_head() {
  impl_->head->weight().value.zero();
  impl_->head->bias().value.zero();
}

template <typename T>
Conv2d<T>& Generator<T>::head() {
  return *impl_->head;
}

// --------------------------------------------------------- discriminator

namespace {

/// inner(x) + x
template <typename T>
class Shortcut final : public Layer<T> {
 public:
  Sequential<T> inner;
  Tensor<T> forward(const Tensor<T>& x, Mode m) override {
    Tensor<T> y = inner.forward(x, m);
    y += x;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> d = inner.backward(g);
    d += g;
    return d;
  }
  void collect(std::vector<Param<T>*>& out) override { inner.collect(out); }
};

}  // namespace

template <typename T>
struct Discriminator<T>::Impl {
  Sequential<T> seq;
  Linear<T>* fc = nullptr;
};

template <typename T>
Discriminator<T>::Discriminator(const std::string& name, std::size_t in_channels, std::size_t h, std::size_t w,
                                std::size_t base, RngStream& rng)
    : in_c_(in_channels), h_(h), w_(w), impl_(std::make_unique<Impl>()) {
  if (in_channels == 0 || base == 0 || h < 2 || w < 2) throw InvalidInput("discriminator: invalid configuration");
  auto& seq = impl_->seq;
  std::size_t c = in_channels, hh = h, ww = w, width = base;
  while (hh > 2 || ww > 2) {
    auto& conv = seq.template add<Conv2d<T>>(name + ".conv" + std::to_string(n_strided_), c, width, 3, 2, 1, rng);
    hh = conv.out_size(hh);
    ww = conv.out_size(ww);
    seq.template add<BatchNorm2d<T>>(name + ".bn" + std::to_string(n_strided_), width);
    seq.template add<LeakyRelu<T>>();
    c = width;
    width = std::min<std::size_t>(width * 2, 256);
    ++n_strided_;
  }
  for (int i = 0; i < 2; ++i) {
    const std::string nm = name + ".pw" + std::to_string(i);
    seq.template add<Conv2d<T>>(nm, c, c, 1, 1, 0, rng);
    seq.template add<BatchNorm2d<T>>(nm + ".bn", c);
    seq.template add<LeakyRelu<T>>();
  }
  auto& res = seq.template add<Shortcut<T>>();
  for (int i = 0; i < 3; ++i) {
    const std::string nm = name + ".res" + std::to_string(i);
    res.inner.template add<Conv2d<T>>(nm, c, c, 1, 1, 0, rng);
    res.inner.template add<BatchNorm2d<T>>(nm + ".bn", c);
    res.inner.template add<LeakyRelu<T>>();
  }
  impl_->fc = &seq.template add<Linear<T>>(name + ".fc", c * hh * ww, 1, rng);
  seq.template add<Sigmoid<T>>();
}

template <typename T>
Discriminator<T>::~Discriminator() = default;

template <typename T>
Tensor<T> Discriminator<T>::forward(const Tensor<T>& x, Mode mode) {
  if (x.c() != in_c_ || x.h() != h_ || x.w() != w_) {
    throw InvalidInput("discriminator expects " + std::to_string(in_c_) + "x" + std::to_string(h_) + "x" +
                       std::to_string(w_) + " input, got " + x.shape().str());
  }
  return impl_->seq.forward(x, mode);
}

template <typename T>
Tensor<T> Discriminator<T>::backward(const Tensor<T>& g) {
  return impl_->seq.backward(g);
}

template <typename T>
std::vector<Param<T>*> Discriminator<T>::params() {
  return parameters(impl_->seq);
}

template <typename T>
Linear<T>& Discriminator<T>::fc() {
  return *impl_->fc;
}

// ------------------------------------------------------------ perceptual

template <typename T>
PerceptualNet<T>::PerceptualNet(std::uint64_t seed) {
  RngStream rng(seed, 0);
  const std::size_t widths[] = {2, 8, 16, 32, 32};
  for (int i = 0; i < 4; ++i) {
    net_.template add<Conv2d<T>>("perc.conv" + std::to_string(i), widths[i], widths[i + 1], 3, 2, 1, rng);
    net_.template add<LeakyRelu<T>>();
  }
}

template <typename T>
Tensor<T> PerceptualNet<T>::features(const Tensor<T>& x) {
  return net_.forward(x, Mode::eval);
}

template <typename T>
Tensor<T> PerceptualNet<T>::backward(const Tensor<T>& g) {
  return net_.backward(g);
}

// ------------------------------------------------------------ checkpoint

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& dir, Generator<T>& g) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  g.config().to_kv().write(dir / "model.cfg");
  std::ofstream bin(dir / "params.bin", std::ios::binary | std::ios::trunc);
  std::ofstream idx(dir / "index.txt", std::ios::trunc);
  if (!bin || !idx) throw IoError("cannot write checkpoint files in " + dir.string());
  idx << "config_hash\t" << hex64(g.config().hash()) << '\n';
  std::uint64_t offset = 0;
  for (auto* p : g.params()) {
    idx << p->name << '\t' << offset << "\tparams.bin\n";
    offset += write_record(bin, to_record(p->value));
  }
  if (!bin || !idx) throw IoError("write failed in checkpoint " + dir.string());
}

GeneratorConfig read_checkpoint_config(const std::filesystem::path& dir) {
  return GeneratorConfig::from_kv(KeyValues::read(dir / "model.cfg"));
}

template <typename T>
void load_checkpoint(const std::filesystem::path& dir, Generator<T>& g) {
  const auto idx_path = dir / "index.txt";
  std::ifstream idx(idx_path);
  if (!idx) throw IoError("cannot open " + idx_path.string());
  std::string line;
  if (!std::getline(idx, line) || line.rfind("config_hash\t", 0) != 0) {
    throw FormatError(idx_path.string() + ": missing config_hash line");
  }
  const std::string stored = line.substr(12);
  if (stored != hex64(g.config().hash())) {
    throw FormatError(idx_path.string() + ": config hash " + stored + " does not match model config " +
                      hex64(g.config().hash()));
  }
  std::map<std::string, std::pair<std::uint64_t, std::string>> where;
  while (std::getline(idx, line)) {
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = line.find('\t', t1 == std::string::npos ? t1 : t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos) throw FormatError(idx_path.string() + ": bad line '" + line + "'");
    where[line.substr(0, t1)] = {std::stoull(line.substr(t1 + 1, t2 - t1 - 1)), line.substr(t2 + 1)};
  }
  std::map<std::string, std::ifstream> files;
  for (auto* p : g.params()) {
    auto it = where.find(p->name);
    if (it == where.end()) throw FormatError(idx_path.string() + ": no entry for parameter " + p->name);
    auto& f = files[it->second.second];
    if (!f.is_open()) {
      f.open(dir / it->second.second, std::ios::binary);
      if (!f) throw IoError("cannot open " + (dir / it->second.second).string());
    }
    f.clear();
    f.seekg(static_cast<std::streamoff>(it->second.first));
    Tensor<T> v = real_from_record<T>(read_record(f, it->second.first));
    if (!(v.shape() == p->value.shape())) {
      throw FormatError("checkpoint parameter " + p->name + " has shape " + v.shape().str() + ", expected " +
                        p->value.shape().str());
    }
    p->value = std::move(v);
  }
}

template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;
template class PerceptualNet<float>;
template class PerceptualNet<double>;
template void save_checkpoint(const std::filesystem::path&, Generator<float>&);
template void save_checkpoint(const std::filesystem::path&, Generator<double>&);
template void load_checkpoint(const std::filesystem::path&, Generator<float>&);
template void load_checkpoint(const std::filesystem::path&, Generator<double>&);

}  // namespace pidd
