#pragma once

#include <vector>

#include <nlohmann/json.hpp>

#include "pcenet/network.hpp"
#include "pcenet/raster.hpp"

namespace pcenet::objectives {

inline constexpr double kDefaultLambdaC = 0.1;
inline constexpr double kCosineEps = 1e-8;

using Descriptor = std::vector<double>;

struct LossReport {
  double L_E = 0.0;
  std::vector<double> L_C_per_layer;
  double L_C = 0.0;
  double lambda_C = kDefaultLambdaC;
  double L_total = 0.0;
};

/// Mean over k of the per-pixel mean absolute error between target and outputs[k].
double enhancement_loss(const Raster& target, const std::vector<Raster>& outputs);
/// Same value; grads[k] receives dL/doutputs[k] (subgradient 0 where equal).
double enhancement_loss(const Raster& target, const std::vector<Raster>& outputs, std::vector<Raster>& grads);

/// (1/K) sum_k (1 - cos(M_k, mean_j M_j)). K == 1 returns 0. The cosine
/// denominator is max(|a||b|, kCosineEps). The mean is differentiated through.
double layer_consistency_loss(const std::vector<Descriptor>& descriptors);
double layer_consistency_loss(const std::vector<Descriptor>& descriptors, std::vector<Descriptor>& grads);

struct FpcResult {
  double total = 0.0;
  std::vector<double> per_layer;
  /// grads[k][l]: dL_C/df^l_k; only filled when requested.
  std::vector<std::vector<Raster>> tap_grads;
};

/// SPP on every tap, consistency per layer, summed over layers.
FpcResult fpc_loss(const std::vector<network::FeatureTaps>& taps_per_variant, bool with_grads = false);

LossReport total_loss(double L_E, double L_C, double lambda_C, std::vector<double> per_layer = {});

nlohmann::json to_json(const LossReport& r);

}  // namespace pcenet::objectives
