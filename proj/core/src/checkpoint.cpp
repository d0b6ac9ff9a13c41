#include <string>

#include "msml/binary_io.hpp"
#include "msml/error.hpp"
#include "msml/net.hpp"

namespace msml {

namespace {

constexpr std::uint32_t kNetVersion = 1;

}  // namespace

std::vector<std::uint8_t> encode_network(const Network& net, const AdamState* adam) {
  io::ByteWriter w;
  w.magic("NET1");
  w.u32(kNetVersion);
  w.u32(net.in_channels);
  w.u32(net.pixels);
  w.u32(static_cast<std::uint32_t>(net.classes()));
  w.u32(static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& l : net.layers) {
    w.u8(static_cast<std::uint8_t>(l.kind));
    w.u8(static_cast<std::uint8_t>(l.activation));
    w.u8(static_cast<std::uint8_t>(l.role));
    w.u8(l.trainable ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(l.in()));
    w.u32(static_cast<std::uint32_t>(l.out()));
    w.f64(l.dropout);
  }
  w.f64s(net.input_mean);
  w.f64s(net.input_scale);
  for (const auto& l : net.layers) {
    w.f64s(l.weight.values());
    w.f64s(l.bias);
  }
  w.u8(adam ? 1 : 0);
  if (adam) {
    w.u64(adam->t);
    w.f64(adam->hyper.lr);
    w.f64(adam->hyper.beta1);
    w.f64(adam->hyper.beta2);
    w.f64(adam->hyper.eps);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      w.f64s(adam->m_weight[l].values());
      w.f64s(adam->v_weight[l].values());
      w.f64s(adam->m_bias[l]);
      w.f64s(adam->v_bias[l]);
    }
  }
  return std::move(w).take();
}

Network decode_network(std::span<const std::uint8_t> bytes, std::optional<AdamState>* adam) {
  io::ByteReader r(bytes);
  r.expect_magic("NET1");
  if (r.u32() != kNetVersion) throw Error(ErrorCode::InconsistentShape, "unsupported NET1 version");
  Network net;
  net.in_channels = r.u32();
  net.pixels = r.u32();
  const std::uint32_t classes = r.u32();
  const std::uint32_t n_layers = r.u32();
  if (net.in_channels == 0 || net.pixels == 0 || n_layers == 0 || n_layers > 4096)
    throw Error(ErrorCode::InconsistentShape, "NET1 header is invalid");

  net.layers.resize(n_layers);
  for (auto& l : net.layers) {
    const auto kind = r.u8();
    const auto act = r.u8();
    const auto role = r.u8();
    const auto trainable = r.u8();
    if (kind > 1 || act > 1 || role > 1 || trainable > 1)
      throw Error(ErrorCode::InconsistentShape, "NET1 layer manifest has an unknown tag");
    l.kind = static_cast<LayerKind>(kind);
    l.activation = static_cast<Activation>(act);
    l.role = static_cast<LayerRole>(role);
    l.trainable = trainable == 1;
    const std::uint32_t in = r.u32();
    const std::uint32_t out = r.u32();
    l.dropout = r.f64();
    if (in == 0 || out == 0 || r.remaining() / 8 < std::size_t{in} * out)
      throw Error(ErrorCode::TruncatedFile, "NET1 layer shape exceeds the payload");
    l.weight = Matrix(out, in);
    l.bias.assign(out, 0.0);
  }
  for (std::size_t i = 1; i < net.layers.size(); ++i)
    if (net.layers[i].in() != net.layers[i - 1].out())
      throw Error(ErrorCode::InconsistentShape, "NET1 layer dimensions do not chain");
  if (net.layers.front().in() != net.in_channels || net.layers.back().out() != classes)
    throw Error(ErrorCode::InconsistentShape, "NET1 layer manifest disagrees with the header");

  net.input_mean.assign(net.in_channels, 0.0);
  net.input_scale.assign(net.in_channels, 1.0);
  r.f64s(net.input_mean);
  r.f64s(net.input_scale);
  for (auto& l : net.layers) {
    r.f64s(l.weight.values());
    r.f64s(l.bias);
  }
  const auto has_adam = r.u8();
  if (has_adam == 1) {
    AdamState s;
    s.t = r.u64();
    s.hyper.lr = r.f64();
    s.hyper.beta1 = r.f64();
    s.hyper.beta2 = r.f64();
    s.hyper.eps = r.f64();
    for (const auto& l : net.layers) {
      s.m_weight.emplace_back(l.out(), l.in());
      s.v_weight.emplace_back(l.out(), l.in());
      s.m_bias.emplace_back(l.out(), 0.0);
      s.v_bias.emplace_back(l.out(), 0.0);
      r.f64s(s.m_weight.back().values());
      r.f64s(s.v_weight.back().values());
      r.f64s(s.m_bias.back());
      r.f64s(s.v_bias.back());
    }
    if (adam) *adam = std::move(s);
  } else if (has_adam != 0) {
    throw Error(ErrorCode::InconsistentShape, "NET1 optimizer flag must be 0 or 1");
  }
  if (r.remaining() != 0) throw Error(ErrorCode::InconsistentShape, "trailing bytes after NET1 payload");
  return net;
}

void save_network(const Network& net, const std::filesystem::path& path, const AdamState* adam) {
  io::write_file(path, encode_network(net, adam));
}

Network load_network(const std::filesystem::path& path, std::optional<AdamState>* adam) {
  return decode_network(io::read_file(path), adam);
}

std::size_t model_size_bytes(const Network& net) {
  // Header 24 + 20 per layer manifest entry + 16 per input channel + 8 per
  // parameter + 1 optimizer flag byte.
  return 24 + 20 * net.layers.size() + 16 * std::size_t{net.in_channels} + 8 * count_params(net) + 1;
}

}  // namespace msml
