#pragma once

#include <span>
#include <vector>

#include "msml/dataformat.hpp"
#include "msml/net.hpp"
#include "msml/pca.hpp"
#include "msml/tensor.hpp"

namespace msml {

/// Network inputs for the selected samples: one row per sample, band-major
/// pixels. With a PCA model each raster is projected to k channels first.
Matrix sample_inputs(const SampleSet& set, std::span<const std::size_t> indices, const PcaModel* pca = nullptr);
/// Multi-hot targets as doubles.
Matrix sample_targets(const SampleSet& set, std::span<const std::size_t> indices);

/// Sets the network's per-channel input normalization to the population
/// mean/std of `inputs` (rows laid out as the network expects).
void fit_input_scaling(Network& net, const Matrix& inputs);

}  // namespace msml
