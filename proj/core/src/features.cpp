#include "msml/features.hpp"

#include <cmath>

#include "msml/error.hpp"

namespace msml {

Matrix sample_inputs(const SampleSet& set, std::span<const std::size_t> indices, const PcaModel* pca) {
  const auto& shape = set.shape();
  const std::size_t px = shape.pixels();
  const std::size_t ch = pca ? pca->k() : shape.bands;
  if (pca && pca->bands() != shape.bands)
    throw Error(ErrorCode::DimensionMismatch, "dataset band count differs from the PCA model");
  Matrix x(indices.size(), ch * px);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto& raster = set[indices[r]].raster;
    if (pca) {
      const Matrix z = project_pixels(*pca, raster_pixels(raster));
      for (std::size_t p = 0; p < px; ++p)
        for (std::size_t c = 0; c < ch; ++c) x(r, c * px + p) = z(p, c);
    } else {
      for (std::size_t v = 0; v < raster.values.size(); ++v) x(r, v) = raster.values[v];
    }
  }
  return x;
}

Matrix sample_targets(const SampleSet& set, std::span<const std::size_t> indices) {
  Matrix y(indices.size(), set.classes());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto& labels = set[indices[r]].labels;
    for (std::size_t c = 0; c < labels.size(); ++c) y(r, c) = labels[c];
  }
  return y;
}

void fit_input_scaling(Network& net, const Matrix& inputs) {
  if (inputs.cols() != net.input_dim()) throw Error(ErrorCode::ShapeMismatch, "inputs do not match the network");
  if (inputs.rows() == 0) throw Error(ErrorCode::EmptySet, "no inputs to fit scaling on");
  const std::size_t ch = net.in_channels;
  const std::size_t px = net.pixels;
  Standardizer st(ch);
  std::vector<double> v(ch);
  for (std::size_t r = 0; r < inputs.rows(); ++r)
    for (std::size_t p = 0; p < px; ++p) {
      for (std::size_t c = 0; c < ch; ++c) v[c] = inputs(r, c * px + p);
      st.add_pixel(v);
    }
  net.input_mean.assign(st.mean().begin(), st.mean().end());
  net.input_scale = st.count() >= 2 ? st.stddev() : std::vector<double>(ch, 1.0);
}

}  // namespace msml
