#include "pcenet/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "pcenet/errors.hpp"

namespace pcenet::objectives {
namespace {

double dot(const Descriptor& a, const Descriptor& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

void check_descriptors(const std::vector<Descriptor>& d) {
  if (d.empty()) throw ParameterError("consistency loss needs at least one descriptor");
  for (const auto& v : d)
    if (v.size() != d.front().size()) throw DimensionError("descriptors differ in length");
}

double consistency_impl(const std::vector<Descriptor>& m, std::vector<Descriptor>* grads) {
  check_descriptors(m);
  const std::size_t K = m.size();
  const std::size_t n = m.front().size();
  if (grads) grads->assign(K, Descriptor(n, 0.0));
  if (K == 1) return 0.0;

  Descriptor mean(n, 0.0);
  for (const auto& v : m)
    for (std::size_t i = 0; i < n; ++i) mean[i] += v[i];
  for (double& v : mean) v /= static_cast<double>(K);
  const double mean_norm = std::sqrt(dot(mean, mean));

  double loss = 0.0;
  Descriptor grad_mean(n, 0.0);  // d loss / d mean
  const double inv_k = 1.0 / static_cast<double>(K);
  for (std::size_t k = 0; k < K; ++k) {
    const double norm_k = std::sqrt(dot(m[k], m[k]));
    const double raw = norm_k * mean_norm;
    const bool guarded = raw < kCosineEps;
    const double denom = guarded ? kCosineEps : raw;
    const double cosine = dot(m[k], mean) / denom;
    loss += inv_k * (1.0 - cosine);
    if (!grads) continue;
    // d cos / d a and d cos / d b for cos = a.b / (|a||b|); constant denominator when guarded.
    for (std::size_t i = 0; i < n; ++i) {
      double da = mean[i] / denom;
      double db = m[k][i] / denom;
      if (!guarded) {
        da -= cosine * m[k][i] / (norm_k * norm_k);
        db -= cosine * mean[i] / (mean_norm * mean_norm);
      }
      (*grads)[k][i] -= inv_k * da;
      grad_mean[i] -= inv_k * db;
    }
  }
  if (grads) {
    for (auto& g : *grads)
      for (std::size_t i = 0; i < n; ++i) g[i] += inv_k * grad_mean[i];
  }
  return loss;
}

double enhancement_impl(const Raster& target, const std::vector<Raster>& outputs, std::vector<Raster>* grads) {
  if (outputs.empty()) throw ParameterError("enhancement loss needs at least one output");
  const double inv_k = 1.0 / static_cast<double>(outputs.size());
  const double inv_n = 1.0 / static_cast<double>(target.size());
  if (grads) grads->clear();
  double loss = 0.0;
  for (const Raster& out : outputs) {
    if (!out.same_shape(target)) throw DimensionError("enhanced output shape does not match the target");
    double sum = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) sum += std::abs(target.values()[i] - out.values()[i]);
    loss += inv_k * inv_n * sum;
    if (grads) {
      Raster g(out.channels(), out.height(), out.width());
      for (std::size_t i = 0; i < target.size(); ++i) {
        const double d = out.values()[i] - target.values()[i];
        g.values()[i] = d > 0 ? inv_k * inv_n : (d < 0 ? -inv_k * inv_n : 0.0);
      }
      grads->push_back(std::move(g));
    }
  }
  return loss;
}

}  // namespace

double enhancement_loss(const Raster& target, const std::vector<Raster>& outputs) {
  return enhancement_impl(target, outputs, nullptr);
}

double enhancement_loss(const Raster& target, const std::vector<Raster>& outputs, std::vector<Raster>& grads) {
  return enhancement_impl(target, outputs, &grads);
}

double layer_consistency_loss(const std::vector<Descriptor>& descriptors) {
  return consistency_impl(descriptors, nullptr);
}

double layer_consistency_loss(const std::vector<Descriptor>& descriptors, std::vector<Descriptor>& grads) {
  return consistency_impl(descriptors, &grads);
}

FpcResult fpc_loss(const std::vector<network::FeatureTaps>& taps_per_variant, bool with_grads) {
  if (taps_per_variant.empty()) throw ParameterError("fpc loss needs at least one variant");
  const std::size_t K = taps_per_variant.size();
  const std::size_t layers = taps_per_variant.front().size();
  for (const auto& taps : taps_per_variant) {
    if (taps.size() != layers) throw DimensionError("variants have different tap depths");
    for (std::size_t l = 0; l < layers; ++l) {
      if (!taps[l].same_shape(taps_per_variant.front()[l])) {
        throw DimensionError("tap shapes differ across variants at layer " + std::to_string(l));
      }
    }
  }

  FpcResult result;
  result.per_layer.resize(layers, 0.0);
  if (with_grads) result.tap_grads.assign(K, std::vector<Raster>(layers));
  for (std::size_t l = 0; l < layers; ++l) {
    std::vector<Descriptor> descriptors;
    descriptors.reserve(K);
    for (const auto& taps : taps_per_variant) descriptors.push_back(network::spp(taps[l]));
    if (with_grads) {
      std::vector<Descriptor> grads;
      result.per_layer[l] = layer_consistency_loss(descriptors, grads);
      const Raster& shape = taps_per_variant.front()[l];
      for (std::size_t k = 0; k < K; ++k) {
        result.tap_grads[k][l] = network::spp_backward(grads[k], shape.channels(), shape.height(), shape.width());
      }
    } else {
      result.per_layer[l] = layer_consistency_loss(descriptors);
    }
  }
  result.total = std::accumulate(result.per_layer.begin(), result.per_layer.end(), 0.0);
  return result;
}

LossReport total_loss(double L_E, double L_C, double lambda_C, std::vector<double> per_layer) {
  if (!(lambda_C >= 0.0)) throw ParameterError("lambda_C must be >= 0");
  LossReport r;
  r.L_E = L_E;
  r.L_C = L_C;
  r.lambda_C = lambda_C;
  r.L_C_per_layer = std::move(per_layer);
  r.L_total = L_E + lambda_C * L_C;
  return r;
}

nlohmann::json to_json(const LossReport& r) {
  return {{"L_E", r.L_E},
          {"L_C", r.L_C},
          {"L_C_per_layer", r.L_C_per_layer},
          {"lambda_C", r.lambda_C},
          {"L_total", r.L_total}};
}

}  // namespace pcenet::objectives
