#include "msml/net.hpp"

#include <algorithm>
#include <cmath>

#include "msml/error.hpp"
#include "msml/losses.hpp"

namespace msml {

std::size_t Network::encoder_depth() const noexcept {
  return static_cast<std::size_t>(std::count_if(layers.begin(), layers.end(),
                                                 [](const Layer& l) { return l.role == LayerRole::Encoder; }));
}

std::size_t Network::embedding_dim() const noexcept {
  const std::size_t d = encoder_depth();
  return d == 0 ? input_dim() : layers[d - 1].out();
}

namespace {

Layer make_layer(LayerKind kind, Activation act, LayerRole role, std::size_t in, std::size_t out, double dropout,
                 std::mt19937_64& rng) {
  Layer l;
  l.kind = kind;
  l.activation = act;
  l.role = role;
  l.dropout = dropout;
  l.weight = Matrix(out, in);
  l.bias.assign(out, 0.0);
  const double bound = std::sqrt((act == Activation::Relu ? 6.0 : 1.0) / static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& w : l.weight.values()) w = u(rng);
  return l;
}

void apply_activation(Matrix& m, Activation act) {
  if (act == Activation::Relu)
    for (double& v : m.values()) v = v > 0.0 ? v : 0.0;
}

void add_bias(Matrix& m, const std::vector<double>& bias) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
  }
}

void relu_backward(Matrix& d, const Matrix& out) {
  auto dv = d.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < dv.size(); ++i)
    if (!(ov[i] > 0.0)) dv[i] = 0.0;
}

}  // namespace

Network build_network(const NetworkSpec& spec, std::uint64_t seed) {
  if (spec.in_channels == 0 || spec.pixels == 0 || spec.classes == 0)
    throw Error(ErrorCode::InvalidConfig, "network needs positive channels, pixels and classes");
  if (spec.encoder_hidden.empty()) throw Error(ErrorCode::InvalidConfig, "encoder needs at least one layer");
  if (spec.head_hidden.size() != 2 || spec.dropout.size() != 2)
    throw Error(ErrorCode::InvalidConfig, "classifier head has exactly two hidden layers and two dropout rates");
  for (double p : spec.dropout)
    if (!(p >= 0.0 && p < 1.0)) throw Error(ErrorCode::InvalidConfig, "dropout rates must lie in [0, 1)");
  for (auto w : spec.encoder_hidden)
    if (w == 0) throw Error(ErrorCode::InvalidConfig, "layer widths must be positive");
  for (auto w : spec.head_hidden)
    if (w == 0) throw Error(ErrorCode::InvalidConfig, "layer widths must be positive");

  std::mt19937_64 rng(seed);
  Network net;
  net.in_channels = spec.in_channels;
  net.pixels = spec.pixels;
  net.input_mean.assign(spec.in_channels, 0.0);
  net.input_scale.assign(spec.in_channels, 1.0);

  net.layers.push_back(make_layer(LayerKind::PixelDense, Activation::Relu, LayerRole::Encoder, spec.in_channels,
                                  spec.encoder_hidden[0], 0.0, rng));
  for (std::size_t i = 1; i < spec.encoder_hidden.size(); ++i)
    net.layers.push_back(make_layer(LayerKind::Dense, Activation::Relu, LayerRole::Encoder, spec.encoder_hidden[i - 1],
                                    spec.encoder_hidden[i], 0.0, rng));
  const std::size_t emb = spec.encoder_hidden.back();
  net.layers.push_back(make_layer(LayerKind::Dense, Activation::Relu, LayerRole::Head, emb, spec.head_hidden[0],
                                  spec.dropout[0], rng));
  net.layers.push_back(make_layer(LayerKind::Dense, Activation::Relu, LayerRole::Head, spec.head_hidden[0],
                                  spec.head_hidden[1], spec.dropout[1], rng));
  net.layers.push_back(make_layer(LayerKind::Dense, Activation::Identity, LayerRole::Head, spec.head_hidden[1],
                                  spec.classes, 0.0, rng));
  return net;
}

void replace_first_layer(Network& net, std::uint32_t in_channels, std::uint64_t seed) {
  if (net.layers.empty() || in_channels == 0) throw Error(ErrorCode::InvalidConfig, "nothing to replace");
  std::mt19937_64 rng(seed);
  const Layer& old = net.layers.front();
  Layer fresh = make_layer(old.kind, old.activation, old.role, in_channels, old.out(), old.dropout, rng);
  net.layers.front() = std::move(fresh);
  net.in_channels = in_channels;
  net.input_mean.assign(in_channels, 0.0);
  net.input_scale.assign(in_channels, 1.0);
  ++net.revision;
}

ForwardResult forward(const Network& net, const Matrix& inputs, Mode mode, std::mt19937_64* rng,
                      std::optional<std::size_t> end_layer, const std::vector<Matrix>* fixed_masks) {
  const std::size_t end = end_layer.value_or(net.layers.size());
  if (end > net.layers.size()) throw Error(ErrorCode::ShapeMismatch, "end layer beyond network depth");
  if (inputs.cols() != net.input_dim())
    throw Error(ErrorCode::ShapeMismatch, "input width " + std::to_string(inputs.cols()) + " does not match network input " +
                                              std::to_string(net.input_dim()));
  const std::size_t n = inputs.rows();
  const std::size_t px = net.pixels;
  const std::size_t ch = net.in_channels;

  ForwardResult res;
  auto& cache = res.cache;
  cache.net = &net;
  cache.revision = net.revision;
  cache.batch = n;
  cache.end_layer = end;
  cache.mode = mode;
  cache.inputs.resize(end);
  cache.outputs.resize(end);
  cache.masks.resize(end);

  Matrix cur = inputs;
  if (!net.input_mean.empty()) {
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t p = 0; p < px; ++p) {
          double& v = cur(r, c * px + p);
          v = (v - net.input_mean[c]) / net.input_scale[c];
        }
  }

  for (std::size_t l = 0; l < end; ++l) {
    const Layer& layer = net.layers[l];
    if (layer.kind == LayerKind::PixelDense) {
      if (l != 0) throw Error(ErrorCode::ShapeMismatch, "pixel-wise layer must come first");
      if (layer.in() != ch) throw Error(ErrorCode::ShapeMismatch, "first layer does not match input channels");
      Matrix rows(n * px, ch);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < ch; ++c)
          for (std::size_t p = 0; p < px; ++p) rows(r * px + p, c) = cur(r, c * px + p);
      Matrix h = matmul_abt(rows, layer.weight);
      add_bias(h, layer.bias);
      apply_activation(h, layer.activation);
      Matrix pooled(n, layer.out());
      const double inv = 1.0 / static_cast<double>(px);
      for (std::size_t r = 0; r < n; ++r) {
        auto dst = pooled.row(r);
        for (std::size_t p = 0; p < px; ++p) {
          const auto src = h.row(r * px + p);
          for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
        }
        for (double& v : dst) v *= inv;
      }
      cache.inputs[l] = std::move(rows);
      cache.outputs[l] = std::move(h);
      cur = std::move(pooled);
    } else {
      if (cur.cols() != layer.in()) throw Error(ErrorCode::ShapeMismatch, "layer dimensions do not chain");
      Matrix h = matmul_abt(cur, layer.weight);
      add_bias(h, layer.bias);
      apply_activation(h, layer.activation);
      cache.inputs[l] = std::move(cur);
      cache.outputs[l] = h;
      cur = std::move(h);
    }

    if (mode == Mode::Train && layer.dropout > 0.0) {
      Matrix mask;
      if (fixed_masks && l < fixed_masks->size() && !(*fixed_masks)[l].empty()) {
        mask = (*fixed_masks)[l];
        if (mask.rows() != cur.rows() || mask.cols() != cur.cols())
          throw Error(ErrorCode::ShapeMismatch, "fixed dropout mask has the wrong shape");
      } else {
        if (!rng) throw Error(ErrorCode::InvalidConfig, "train-mode dropout needs a random generator");
        const double keep = 1.0 - layer.dropout;
        std::uniform_real_distribution<double> u(0.0, 1.0);
        mask = Matrix(cur.rows(), cur.cols());
        for (double& m : mask.values()) m = u(*rng) < keep ? 1.0 / keep : 0.0;
      }
      auto cv = cur.values();
      auto mv = mask.values();
      for (std::size_t i = 0; i < cv.size(); ++i) cv[i] *= mv[i];
      cache.masks[l] = std::move(mask);
    }
  }
  res.output = std::move(cur);
  return res;
}

ForwardResult forward_encoder(const Network& net, const Matrix& inputs, Mode mode, std::mt19937_64* rng) {
  return forward(net, inputs, mode, rng, net.encoder_depth());
}

void Gradients::add(const Gradients& other) {
  for (std::size_t l = 0; l < weight.size(); ++l) {
    auto a = weight[l].values();
    auto b = other.weight[l].values();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    for (std::size_t i = 0; i < bias[l].size(); ++i) bias[l][i] += other.bias[l][i];
  }
}

Gradients zero_gradients(const Network& net) {
  Gradients g;
  for (const auto& l : net.layers) {
    g.weight.emplace_back(l.out(), l.in());
    g.bias.emplace_back(l.out(), 0.0);
  }
  return g;
}

Gradients backward(const Network& net, const ForwardCache& cache, const Matrix& d_output) {
  if (cache.net != &net || cache.revision != net.revision)
    throw Error(ErrorCode::StaleCache, "forward cache does not belong to the current network state");
  const std::size_t end = cache.end_layer;
  const std::size_t n = cache.batch;
  const std::size_t out_dim = end == 0 ? net.input_dim() : net.layers[end - 1].out();
  if (d_output.rows() != n || d_output.cols() != out_dim)
    throw Error(ErrorCode::ShapeMismatch, "upstream gradient shape does not match the forward output");

  Gradients g = zero_gradients(net);
  const std::size_t px = net.pixels;
  const std::size_t ch = net.in_channels;
  Matrix d = d_output;

  for (std::size_t l = end; l-- > 0;) {
    const Layer& layer = net.layers[l];
    if (!cache.masks[l].empty()) {
      auto dv = d.values();
      auto mv = cache.masks[l].values();
      for (std::size_t i = 0; i < dv.size(); ++i) dv[i] *= mv[i];
    }
    if (layer.kind == LayerKind::PixelDense) {
      Matrix dp(n * px, layer.out());
      const double inv = 1.0 / static_cast<double>(px);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t p = 0; p < px; ++p) {
          auto dst = dp.row(r * px + p);
          const auto src = d.row(r);
          for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = src[k] * inv;
        }
      if (layer.activation == Activation::Relu) relu_backward(dp, cache.outputs[l]);
      matmul_atb(dp, cache.inputs[l], g.weight[l]);
      for (std::size_t r = 0; r < dp.rows(); ++r) {
        const auto row = dp.row(r);
        for (std::size_t k = 0; k < row.size(); ++k) g.bias[l][k] += row[k];
      }
      const Matrix d_rows = matmul(dp, layer.weight);
      d = Matrix(n, ch * px);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < ch; ++c)
          for (std::size_t p = 0; p < px; ++p) d(r, c * px + p) = d_rows(r * px + p, c);
    } else {
      if (layer.activation == Activation::Relu) relu_backward(d, cache.outputs[l]);
      matmul_atb(d, cache.inputs[l], g.weight[l]);
      for (std::size_t r = 0; r < d.rows(); ++r) {
        const auto row = d.row(r);
        for (std::size_t k = 0; k < row.size(); ++k) g.bias[l][k] += row[k];
      }
      d = matmul(d, layer.weight);
    }
  }

  if (end > 0 && !net.input_scale.empty()) {
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t p = 0; p < px; ++p) d(r, c * px + p) /= net.input_scale[c];
  }
  g.input = std::move(d);
  return g;
}

double bce_loss(const Matrix& logits, const Matrix& targets) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols())
    throw Error(ErrorCode::ShapeMismatch, "logits and targets differ in shape");
  if (logits.empty()) throw Error(ErrorCode::ShapeMismatch, "empty batch");
  double s = 0.0;
  const auto x = logits.values();
  const auto y = targets.values();
  for (std::size_t i = 0; i < x.size(); ++i) s += softplus(x[i]) - y[i] * x[i];
  return s / static_cast<double>(x.size());
}

Matrix bce_grad(const Matrix& logits, const Matrix& targets) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols())
    throw Error(ErrorCode::ShapeMismatch, "logits and targets differ in shape");
  Matrix g(logits.rows(), logits.cols());
  const double inv = 1.0 / static_cast<double>(logits.size());
  const auto x = logits.values();
  const auto y = targets.values();
  auto gv = g.values();
  for (std::size_t i = 0; i < x.size(); ++i) gv[i] = (msml::sigmoid(x[i]) - y[i]) * inv;
  return g;
}

Matrix sigmoid(const Matrix& logits) {
  Matrix p = logits;
  for (double& v : p.values()) v = msml::sigmoid(v);
  return p;
}

AdamState make_adam(const Network& net, AdamHyper hyper) {
  AdamState s;
  s.hyper = hyper;
  for (const auto& l : net.layers) {
    s.m_weight.emplace_back(l.out(), l.in());
    s.v_weight.emplace_back(l.out(), l.in());
    s.m_bias.emplace_back(l.out(), 0.0);
    s.v_bias.emplace_back(l.out(), 0.0);
  }
  return s;
}

void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
                 std::uint64_t t, const AdamHyper& h) {
  if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size())
    throw Error(ErrorCode::ShapeMismatch, "Adam buffers differ in size");
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * grads[i];
    v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * grads[i] * grads[i];
    const double mh = m[i] / c1;
    const double vh = v[i] / c2;
    params[i] -= h.lr * mh / (std::sqrt(vh) + h.eps);
  }
}

void adam_step(AdamState& state, Network& net, const Gradients& grads) {
  if (state.m_weight.size() != net.layers.size() || grads.weight.size() != net.layers.size())
    throw Error(ErrorCode::ShapeMismatch, "optimizer state does not match the network");
  ++state.t;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    Layer& layer = net.layers[l];
    if (!layer.trainable) continue;
    if (state.m_weight[l].rows() != layer.out() || state.m_weight[l].cols() != layer.in())
      throw Error(ErrorCode::ShapeMismatch, "optimizer state does not match layer " + std::to_string(l));
    adam_update(layer.weight.values(), grads.weight[l].values(), state.m_weight[l].values(),
                state.v_weight[l].values(), state.t, state.hyper);
    adam_update(layer.bias, grads.bias[l], state.m_bias[l], state.v_bias[l], state.t, state.hyper);
  }
  ++net.revision;
}

std::size_t count_params(const Network& net) {
  std::size_t n = 0;
  for (const auto& l : net.layers) n += l.weight.size() + l.bias.size();
  return n;
}

}  // namespace msml
