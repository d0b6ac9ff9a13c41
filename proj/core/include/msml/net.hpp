#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "msml/tensor.hpp"

namespace msml {

enum class Activation : std::uint8_t { Identity = 0, Relu = 1 };

// PixelDense applies the same (out x channels) map to every pixel and then
// averages over pixels, so its size depends on the channel count only.
enum class LayerKind : std::uint8_t { PixelDense = 0, Dense = 1 };

enum class LayerRole : std::uint8_t { Encoder = 0, Head = 1 };

enum class Mode { Train, Eval };

struct Layer {
  LayerKind kind = LayerKind::Dense;
  Activation activation = Activation::Relu;
  LayerRole role = LayerRole::Encoder;
  Matrix weight;  // out x in
  std::vector<double> bias;
  double dropout = 0.0;  // applied to this layer's output in train mode
  bool trainable = true;

  std::size_t in() const noexcept { return weight.cols(); }
  std::size_t out() const noexcept { return weight.rows(); }
};

/// Shape of the encoder + three-layer head.
struct NetworkSpec {
  std::uint32_t in_channels = 13;
  std::uint32_t pixels = 64;
  std::uint32_t classes = 9;
  std::vector<std::size_t> encoder_hidden{256, 128};
  std::vector<std::size_t> head_hidden{512, 256};
  std::vector<double> dropout{0.4, 0.3};
};

struct Network {
  std::uint32_t in_channels = 0;
  std::uint32_t pixels = 1;
  // Per-channel affine normalization of the raw input; a fixed buffer, not a parameter.
  std::vector<double> input_mean;
  std::vector<double> input_scale;
  std::vector<Layer> layers;
  // Bumped by every optimizer step; caches from older revisions are stale.
  std::uint64_t revision = 0;

  std::size_t input_dim() const noexcept { return std::size_t{in_channels} * pixels; }
  std::size_t classes() const noexcept { return layers.empty() ? 0 : layers.back().out(); }
  std::size_t encoder_depth() const noexcept;
  std::size_t embedding_dim() const noexcept;
};

/// Kaiming-uniform weights (bound sqrt(6 / fan_in), sqrt(1 / fan_in) for the
/// linear output layer) and zero biases, drawn from a generator seeded by `seed`.
Network build_network(const NetworkSpec& spec, std::uint64_t seed);

/// Replaces the first encoder layer with a freshly initialized one reading
/// `in_channels` channels. Input normalization is reset to identity.
void replace_first_layer(Network& net, std::uint32_t in_channels, std::uint64_t seed);

/// Activations kept for backward().
struct ForwardCache {
  const Network* net = nullptr;
  std::uint64_t revision = 0;
  std::size_t batch = 0;
  std::size_t end_layer = 0;
  Mode mode = Mode::Eval;
  std::vector<Matrix> inputs;    // input of each layer (PixelDense: pixel rows)
  std::vector<Matrix> outputs;   // post-activation, pre-dropout
  std::vector<Matrix> masks;     // scaled keep masks; empty when no dropout ran
};

struct ForwardResult {
  Matrix output;  // logits when run to the end, otherwise the last layer's activation
  ForwardCache cache;
};

/// Runs layers [0, end_layer) (all layers by default). In train mode dropout
/// masks are drawn from `rng`, or copied from `fixed_masks` when given.
ForwardResult forward(const Network& net, const Matrix& inputs, Mode mode, std::mt19937_64* rng = nullptr,
                      std::optional<std::size_t> end_layer = std::nullopt,
                      const std::vector<Matrix>* fixed_masks = nullptr);

/// Embeddings from the encoder layers only.
ForwardResult forward_encoder(const Network& net, const Matrix& inputs, Mode mode, std::mt19937_64* rng = nullptr);

struct Gradients {
  std::vector<Matrix> weight;
  std::vector<std::vector<double>> bias;
  Matrix input;  // d loss / d raw input

  void add(const Gradients& other);
};

Gradients zero_gradients(const Network& net);

/// Exact gradients given d loss / d output of the cached forward pass.
/// Throws StaleCache when the cache was produced by another network or revision.
Gradients backward(const Network& net, const ForwardCache& cache, const Matrix& d_output);

/// Mean over all N x C entries of the stable sigmoid binary cross-entropy.
double bce_loss(const Matrix& logits, const Matrix& targets);
/// d bce_loss / d logits.
Matrix bce_grad(const Matrix& logits, const Matrix& targets);
Matrix sigmoid(const Matrix& logits);

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamHyper hyper;
  std::uint64_t t = 0;
  std::vector<Matrix> m_weight, v_weight;
  std::vector<std::vector<double>> m_bias, v_bias;
};

AdamState make_adam(const Network& net, AdamHyper hyper);

/// One bias-corrected Adam update of `params` at step `t` (t >= 1).
void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
                 std::uint64_t t, const AdamHyper& hyper);

/// Increments t and updates every trainable layer. Frozen layers keep their
/// values and moments bit-identical.
void adam_step(AdamState& state, Network& net, const Gradients& grads);

std::size_t count_params(const Network& net);
/// Size of the NET1 encoding without optimizer state.
std::size_t model_size_bytes(const Network& net);

// NET1 checkpoint; layout documented in docs/formats.md.
std::vector<std::uint8_t> encode_network(const Network& net, const AdamState* adam = nullptr);
Network decode_network(std::span<const std::uint8_t> bytes, std::optional<AdamState>* adam = nullptr);
void save_network(const Network& net, const std::filesystem::path& path, const AdamState* adam = nullptr);
Network load_network(const std::filesystem::path& path, std::optional<AdamState>* adam = nullptr);

}  // namespace msml
