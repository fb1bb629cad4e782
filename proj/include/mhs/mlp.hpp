#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mhs/rng.hpp"

namespace mhs {

// Dense feed-forward net: affine layers with rectifier activations on all
// but the output layer. Parameters are plain vectors so optimizer moments
// and checkpoints can mirror them exactly.
struct Mlp {
  std::vector<int> sizes;  // {in, hidden..., out}
  std::vector<std::vector<double>> weights;  // [layer], row-major out x in
  std::vector<std::vector<double>> biases;

  // uniform fan-in init on a dedicated seeded stream
  static Mlp init(std::vector<int> sizes, uint64_t seed);
  static Mlp zeros(std::vector<int> sizes);
  int layer_count() const { return static_cast<int>(weights.size()); }
  int input_dim() const { return sizes.front(); }
  int output_dim() const { return sizes.back(); }
  size_t param_count() const;
  bool same_shape(const Mlp& other) const { return sizes == other.sizes; }
};

struct ForwardCache {
  // acts[0] = input, acts[l] = post-activation input of layer l,
  // acts[L] = network output
  std::vector<std::vector<double>> acts;
};

std::vector<double> forward(const Mlp& m, std::span<const double> x);
const std::vector<double>& forward_cached(const Mlp& m,
                                          std::span<const double> x,
                                          ForwardCache& cache);

struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  static Gradients zeros_like(const Mlp& m);
  void zero();
  void scale(double s);
};

// Accumulates exact reverse-mode parameter gradients for the cached forward
// pass, given dL/d(output).
void backward(const Mlp& m, const ForwardCache& cache,
              std::span<const double> dout, Gradients& grads);

// --- categorical policy head ---

std::vector<double> softmax(std::span<const double> logits);
double log_prob(std::span<const double> logits, int action);
int sample_categorical(std::span<const double> probs, Rng& rng);
int argmax(std::span<const double> v);  // ties break to the smallest index
double entropy(std::span<const double> probs);

// --- optimizer ---

// Adaptive moments with decoupled weight decay.
struct AdamW {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  int64_t step_count = 0;
  Gradients m, v;

  static AdamW init(const Mlp& net, double lr = 0.001,
                    double weight_decay = 0.01);
  void apply(Mlp& net, const Gradients& g);
};

// --- checkpoints ---

struct CheckpointMeta {
  uint32_t agent_class = 0;  // 0 receiving actor, 1 junction actor, 2 critic
  uint64_t caps_hash = 0;    // normalization caps the policy was trained under
};

// Binary, little-endian 64-bit floats, trailing integrity checksum.
// Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const Mlp& m,
                     const CheckpointMeta& meta);
struct LoadedCheckpoint {
  Mlp net;
  CheckpointMeta meta;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

uint64_t checkpoint_file_checksum(const std::string& path);

}  // namespace mhs
