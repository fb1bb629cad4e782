#include "mhs/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "mhs/config.hpp"
#include "mhs/errors.hpp"

namespace mhs {

namespace {
constexpr uint64_t kInitTag = 0x7731;
constexpr uint32_t kMagic = 0x4D48'5343;  // "MHSC"
constexpr uint32_t kVersion = 1;
}  // namespace

Mlp Mlp::zeros(std::vector<int> sizes) {
  if (sizes.size() < 2) throw ConfigError("mlp needs at least two layer sizes");
  for (int s : sizes)
    if (s < 1) throw ConfigError("mlp layer sizes must be >= 1");
  Mlp m;
  m.sizes = std::move(sizes);
  for (size_t l = 0; l + 1 < m.sizes.size(); ++l) {
    m.weights.emplace_back(static_cast<size_t>(m.sizes[l + 1]) * m.sizes[l], 0.0);
    m.biases.emplace_back(m.sizes[l + 1], 0.0);
  }
  return m;
}

Mlp Mlp::init(std::vector<int> sizes, uint64_t seed) {
  Mlp m = zeros(std::move(sizes));
  Rng rng = Rng::derive(seed, kInitTag);
  for (size_t l = 0; l < m.weights.size(); ++l) {
    double bound = 1.0 / std::sqrt(static_cast<double>(m.sizes[l]));
    for (auto& w : m.weights[l]) w = rng.uniform(-bound, bound);
    for (auto& b : m.biases[l]) b = rng.uniform(-bound, bound);
  }
  return m;
}

size_t Mlp::param_count() const {
  size_t n = 0;
  for (size_t l = 0; l < weights.size(); ++l)
    n += weights[l].size() + biases[l].size();
  return n;
}

std::vector<double> forward(const Mlp& m, std::span<const double> x) {
  ForwardCache cache;
  return forward_cached(m, x, cache);
}

const std::vector<double>& forward_cached(const Mlp& m,
                                          std::span<const double> x,
                                          ForwardCache& cache) {
  if (static_cast<int>(x.size()) != m.input_dim())
    throw RuntimeFailure("forward: input length " + std::to_string(x.size()) +
                         " does not match net input " +
                         std::to_string(m.input_dim()));
  cache.acts.assign(m.layer_count() + 1, {});
  cache.acts[0].assign(x.begin(), x.end());
  for (int l = 0; l < m.layer_count(); ++l) {
    const int in = m.sizes[l];
    const int out = m.sizes[l + 1];
    const auto& a = cache.acts[l];
    auto& z = cache.acts[l + 1];
    z.assign(out, 0.0);
    const double* w = m.weights[l].data();
    for (int r = 0; r < out; ++r) {
      double acc = m.biases[l][r];
      const double* row = w + static_cast<size_t>(r) * in;
      for (int c = 0; c < in; ++c) acc += row[c] * a[c];
      z[r] = (l + 1 < m.layer_count() && acc < 0) ? 0.0 : acc;
    }
  }
  return cache.acts.back();
}

Gradients Gradients::zeros_like(const Mlp& m) {
  Gradients g;
  for (size_t l = 0; l < m.weights.size(); ++l) {
    g.weights.emplace_back(m.weights[l].size(), 0.0);
    g.biases.emplace_back(m.biases[l].size(), 0.0);
  }
  return g;
}

void Gradients::zero() {
  for (auto& w : weights) std::fill(w.begin(), w.end(), 0.0);
  for (auto& b : biases) std::fill(b.begin(), b.end(), 0.0);
}

void Gradients::scale(double s) {
  for (auto& w : weights)
    for (auto& x : w) x *= s;
  for (auto& b : biases)
    for (auto& x : b) x *= s;
}

void backward(const Mlp& m, const ForwardCache& cache,
              std::span<const double> dout, Gradients& grads) {
  const int L = m.layer_count();
  if (static_cast<int>(dout.size()) != m.output_dim())
    throw RuntimeFailure("backward: upstream gradient length mismatch");
  std::vector<double> delta(dout.begin(), dout.end());
  std::vector<double> prev;
  for (int l = L - 1; l >= 0; --l) {
    const int in = m.sizes[l];
    const int out = m.sizes[l + 1];
    const auto& a = cache.acts[l];
    double* gw = grads.weights[l].data();
    for (int r = 0; r < out; ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      double* row = gw + static_cast<size_t>(r) * in;
      for (int c = 0; c < in; ++c) row[c] += d * a[c];
      grads.biases[l][r] += d;
    }
    if (l == 0) break;
    prev.assign(in, 0.0);
    const double* w = m.weights[l].data();
    for (int r = 0; r < out; ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      const double* row = w + static_cast<size_t>(r) * in;
      for (int c = 0; c < in; ++c) prev[c] += row[c] * d;
    }
    // rectifier gate: dead units (zero activation) pass no gradient
    for (int c = 0; c < in; ++c)
      if (a[c] <= 0.0) prev[c] = 0.0;
    delta.swap(prev);
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (auto& x : p) x /= sum;
  return p;
}

double log_prob(std::span<const double> logits, int action) {
  double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0;
  for (double v : logits) sum += std::exp(v - mx);
  return logits[action] - mx - std::log(sum);
}

int sample_categorical(std::span<const double> probs, Rng& rng) {
  double u = rng.next_double();
  double acc = 0;
  for (size_t i = 0; i + 1 < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

double entropy(std::span<const double> probs) {
  double h = 0;
  for (double p : probs)
    if (p > 0) h -= p * std::log(p);
  return h;
}

AdamW AdamW::init(const Mlp& net, double lr, double weight_decay) {
  AdamW o;
  o.lr = lr;
  o.weight_decay = weight_decay;
  o.m = Gradients::zeros_like(net);
  o.v = Gradients::zeros_like(net);
  return o;
}

void AdamW::apply(Mlp& net, const Gradients& g) {
  step_count += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
  auto update = [&](std::vector<double>& p, std::vector<double>& pm,
                    std::vector<double>& pv, const std::vector<double>& pg) {
    for (size_t i = 0; i < p.size(); ++i) {
      pm[i] = beta1 * pm[i] + (1 - beta1) * pg[i];
      pv[i] = beta2 * pv[i] + (1 - beta2) * pg[i] * pg[i];
      double mhat = pm[i] / bc1;
      double vhat = pv[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      p[i] -= lr * weight_decay * p[i];
    }
  };
  for (size_t l = 0; l < net.weights.size(); ++l) {
    update(net.weights[l], m.weights[l], v.weights[l], g.weights[l]);
    update(net.biases[l], m.biases[l], v.biases[l], g.biases[l]);
  }
}

namespace {

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_f64(std::string& buf, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(buf, bits);
}
uint32_t get_u32(const std::string& buf, size_t& pos) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
  return v;
}
uint64_t get_u64(const std::string& buf, size_t& pos) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
  return v;
}
double get_f64(const std::string& buf, size_t& pos) {
  uint64_t bits = get_u64(buf, pos);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace

void save_checkpoint(const std::string& path, const Mlp& m,
                     const CheckpointMeta& meta) {
  std::string buf;
  put_u32(buf, kMagic);
  put_u32(buf, kVersion);
  put_u32(buf, meta.agent_class);
  put_u32(buf, static_cast<uint32_t>(m.sizes.size()));
  for (int s : m.sizes) put_u32(buf, static_cast<uint32_t>(s));
  put_u64(buf, meta.caps_hash);
  for (size_t l = 0; l < m.weights.size(); ++l) {
    for (double w : m.weights[l]) put_f64(buf, w);
    for (double b : m.biases[l]) put_f64(buf, b);
  }
  put_u64(buf, fnv1a64(buf.data(), buf.size()));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw RuntimeFailure("cannot write checkpoint: " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw RuntimeFailure("short write on checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw RuntimeFailure("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < 8 + 8) throw RuntimeFailure("checkpoint truncated: " + path);

  uint64_t stored_sum = 0;
  {
    size_t pos = buf.size() - 8;
    stored_sum = get_u64(buf, pos);
  }
  if (fnv1a64(buf.data(), buf.size() - 8) != stored_sum)
    throw RuntimeFailure("checkpoint checksum mismatch: " + path);

  size_t pos = 0;
  if (get_u32(buf, pos) != kMagic)
    throw RuntimeFailure("not a checkpoint file: " + path);
  if (get_u32(buf, pos) != kVersion)
    throw RuntimeFailure("unsupported checkpoint version: " + path);
  LoadedCheckpoint out;
  out.meta.agent_class = get_u32(buf, pos);
  uint32_t n_sizes = get_u32(buf, pos);
  if (n_sizes < 2 || n_sizes > 64)
    throw RuntimeFailure("corrupt checkpoint layer table: " + path);
  std::vector<int> sizes(n_sizes);
  for (auto& s : sizes) s = static_cast<int>(get_u32(buf, pos));
  out.meta.caps_hash = get_u64(buf, pos);
  out.net = Mlp::zeros(sizes);
  size_t need = pos + out.net.param_count() * 8 + 8;
  if (buf.size() != need)
    throw RuntimeFailure("checkpoint size mismatch: " + path);
  for (size_t l = 0; l < out.net.weights.size(); ++l) {
    for (auto& w : out.net.weights[l]) w = get_f64(buf, pos);
    for (auto& b : out.net.biases[l]) b = get_f64(buf, pos);
  }
  return out;
}

uint64_t checkpoint_file_checksum(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw RuntimeFailure("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  return fnv1a64(buf.data(), buf.size());
}

}  // namespace mhs
