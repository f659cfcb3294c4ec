#include "pcenet/network.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "pcenet/errors.hpp"
#include "pcenet/rng.hpp"

namespace pcenet::network {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

constexpr double kLeakySlope = 0.2;
constexpr double kNormEps = 1e-5;

// ---- 3x3 convolution, zero padding 1 -------------------------------------

RowMatrix im2col(const Raster& in) {
  const int cin = in.channels();
  const int h = in.height();
  const int w = in.width();
  RowMatrix col = RowMatrix::Zero(static_cast<Eigen::Index>(cin) * 9, static_cast<Eigen::Index>(h) * w);
  for (int c = 0; c < cin; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        double* row = col.row((c * 3 + ky) * 3 + kx).data();
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          const int x0 = std::max(0, 1 - kx);
          const int x1 = std::min(w, w + 1 - kx);
          for (int x = x0; x < x1; ++x) row[y * w + x] = in.at(c, sy, x + kx - 1);
        }
      }
  return col;
}

void col2im_add(const RowMatrix& col, Raster& grad_in) {
  const int h = grad_in.height();
  const int w = grad_in.width();
  for (int c = 0; c < grad_in.channels(); ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const double* row = col.row((c * 3 + ky) * 3 + kx).data();
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          const int x0 = std::max(0, 1 - kx);
          const int x1 = std::min(w, w + 1 - kx);
          for (int x = x0; x < x1; ++x) grad_in.at(c, sy, x + kx - 1) += row[y * w + x];
        }
      }
}

Raster conv_forward(const Raster& in, const NamedTensor& weight, const NamedTensor& bias) {
  const int cout = weight.shape[0];
  const int cin = weight.shape[1];
  if (in.channels() != cin) {
    throw DimensionError(weight.name + ": expected " + std::to_string(cin) + " input channels, got " +
                         std::to_string(in.channels()));
  }
  const RowMatrix col = im2col(in);
  Raster out(cout, in.height(), in.width());
  MatrixMap o(out.data(), cout, static_cast<Eigen::Index>(in.plane_size()));
  ConstMatrixMap wm(weight.values.data(), cout, static_cast<Eigen::Index>(cin) * 9);
  o.noalias() = wm * col;
  for (int c = 0; c < cout; ++c) o.row(c).array() += bias.values[c];
  return out;
}

// Returns the gradient w.r.t. the input; accumulates weight/bias gradients.
Raster conv_backward(const Raster& in, const Raster& grad_out, const NamedTensor& weight, NamedTensor& grad_weight,
                     NamedTensor& grad_bias) {
  const int cout = weight.shape[0];
  const int cin = weight.shape[1];
  const auto hw = static_cast<Eigen::Index>(in.plane_size());
  const RowMatrix col = im2col(in);
  ConstMatrixMap go(grad_out.data(), cout, hw);
  MatrixMap gw(grad_weight.values.data(), cout, static_cast<Eigen::Index>(cin) * 9);
  gw.noalias() += go * col.transpose();
  for (int c = 0; c < cout; ++c) {
    const auto plane = grad_out.plane(c);
    grad_bias.values[c] += std::accumulate(plane.begin(), plane.end(), 0.0);
  }
  ConstMatrixMap wm(weight.values.data(), cout, static_cast<Eigen::Index>(cin) * 9);
  const RowMatrix gcol = wm.transpose() * go;
  Raster grad_in(cin, in.height(), in.width());
  col2im_add(gcol, grad_in);
  return grad_in;
}

// ---- instance norm (no affine) + leaky ReLU ------------------------------

void instance_norm_forward(Raster& x, std::vector<double>& inv_std) {
  const auto n = static_cast<double>(x.plane_size());
  inv_std.resize(x.channels());
  for (int c = 0; c < x.channels(); ++c) {
    auto p = x.plane(c);
    double mean = 0.0;
    for (double v : p) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : p) var += (v - mean) * (v - mean);
    var /= n;
    const double is = 1.0 / std::sqrt(var + kNormEps);
    for (double& v : p) v = (v - mean) * is;
    inv_std[c] = is;
  }
}

// normalized: the forward output y. grad is dL/dy on entry, dL/dx on exit.
void instance_norm_backward(const Raster& normalized, const std::vector<double>& inv_std, Raster& grad) {
  const auto n = static_cast<double>(normalized.plane_size());
  for (int c = 0; c < grad.channels(); ++c) {
    auto g = grad.plane(c);
    auto y = normalized.plane(c);
    double sum_g = 0.0;
    double sum_gy = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      sum_g += g[i];
      sum_gy += g[i] * y[i];
    }
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = inv_std[c] * (g[i] - sum_g / n - y[i] * sum_gy / n);
  }
}

Raster leaky_relu(const Raster& x) {
  Raster out = x;
  for (double& v : out.values()) v = v > 0 ? v : kLeakySlope * v;
  return out;
}

void leaky_relu_backward(const Raster& pre, Raster& grad) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (pre.values()[i] <= 0) grad.values()[i] *= kLeakySlope;
}

// ---- resampling / concat --------------------------------------------------

Raster avg_pool2(const Raster& x) {
  Raster out(x.channels(), x.height() / 2, x.width() / 2);
  for (int c = 0; c < x.channels(); ++c)
    for (int y = 0; y < out.height(); ++y)
      for (int xx = 0; xx < out.width(); ++xx)
        out.at(c, y, xx) = 0.25 * (x.at(c, 2 * y, 2 * xx) + x.at(c, 2 * y, 2 * xx + 1) + x.at(c, 2 * y + 1, 2 * xx) +
                                   x.at(c, 2 * y + 1, 2 * xx + 1));
  return out;
}

void avg_pool2_backward_add(const Raster& grad_out, Raster& grad_in) {
  for (int c = 0; c < grad_out.channels(); ++c)
    for (int y = 0; y < grad_out.height(); ++y)
      for (int x = 0; x < grad_out.width(); ++x) {
        const double g = 0.25 * grad_out.at(c, y, x);
        grad_in.at(c, 2 * y, 2 * x) += g;
        grad_in.at(c, 2 * y, 2 * x + 1) += g;
        grad_in.at(c, 2 * y + 1, 2 * x) += g;
        grad_in.at(c, 2 * y + 1, 2 * x + 1) += g;
      }
}

Raster upsample_nearest2(const Raster& x) {
  Raster out(x.channels(), x.height() * 2, x.width() * 2);
  for (int c = 0; c < out.channels(); ++c)
    for (int y = 0; y < out.height(); ++y)
      for (int xx = 0; xx < out.width(); ++xx) out.at(c, y, xx) = x.at(c, y / 2, xx / 2);
  return out;
}

Raster upsample_nearest2_backward(const Raster& grad_out) {
  Raster g(grad_out.channels(), grad_out.height() / 2, grad_out.width() / 2);
  for (int c = 0; c < grad_out.channels(); ++c)
    for (int y = 0; y < grad_out.height(); ++y)
      for (int x = 0; x < grad_out.width(); ++x) g.at(c, y / 2, x / 2) += grad_out.at(c, y, x);
  return g;
}

Raster concat(const Raster& a, const Raster& b) {
  if (a.height() != b.height() || a.width() != b.width()) throw DimensionError("concat spatial mismatch");
  Raster out(a.channels() + b.channels(), a.height(), a.width());
  std::copy(a.values().begin(), a.values().end(), out.values().begin());
  std::copy(b.values().begin(), b.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

std::pair<Raster, Raster> split_channels(const Raster& g, int first) {
  Raster a(first, g.height(), g.width());
  Raster b(g.channels() - first, g.height(), g.width());
  std::copy(g.values().begin(), g.values().begin() + static_cast<std::ptrdiff_t>(a.size()), a.values().begin());
  std::copy(g.values().begin() + static_cast<std::ptrdiff_t>(a.size()), g.values().end(), b.values().begin());
  return {std::move(a), std::move(b)};
}

std::string block_name(const char* prefix, int stage) { return std::string(prefix) + std::to_string(stage); }

// Adaptive pooling cell [start, end) along one axis.
inline int cell_start(int i, int n, int g) { return (i * n) / g; }
inline int cell_end(int i, int n, int g) { return ((i + 1) * n + g - 1) / g; }

}  // namespace

// Activations retained for one conv block.
struct BlockCache {
  Raster input;
  Raster act1_pre;  // after norm (or conv when norm is off), before activation
  Raster act1;
  Raster act2_pre;
  std::vector<double> inv_std1;
  std::vector<double> inv_std2;
};

ForwardCache::ForwardCache() = default;
ForwardCache::~ForwardCache() = default;
ForwardCache::ForwardCache(ForwardCache&&) noexcept = default;
ForwardCache& ForwardCache::operator=(ForwardCache&&) noexcept = default;

namespace {

Raster block_forward(const Parameters& params, const std::string& name, bool norm, const Raster& input,
                     BlockCache* cache) {
  Raster h1 = conv_forward(input, params.at(name + ".conv1.weight"), params.at(name + ".conv1.bias"));
  std::vector<double> is1;
  if (norm) instance_norm_forward(h1, is1);
  Raster a1 = leaky_relu(h1);
  Raster h2 = conv_forward(a1, params.at(name + ".conv2.weight"), params.at(name + ".conv2.bias"));
  std::vector<double> is2;
  if (norm) instance_norm_forward(h2, is2);
  Raster a2 = leaky_relu(h2);
  if (cache) {
    cache->input = input;
    cache->act1_pre = std::move(h1);
    cache->act1 = std::move(a1);
    cache->act2_pre = std::move(h2);
    cache->inv_std1 = std::move(is1);
    cache->inv_std2 = std::move(is2);
  }
  return a2;
}

Raster block_backward(const Parameters& params, Parameters& grads, const std::string& name, bool norm,
                      const BlockCache& cache, Raster grad) {
  leaky_relu_backward(cache.act2_pre, grad);
  if (norm) instance_norm_backward(cache.act2_pre, cache.inv_std2, grad);
  Raster g1 = conv_backward(cache.act1, grad, params.at(name + ".conv2.weight"), grads.at(name + ".conv2.weight"),
                            grads.at(name + ".conv2.bias"));
  leaky_relu_backward(cache.act1_pre, g1);
  if (norm) instance_norm_backward(cache.act1_pre, cache.inv_std1, g1);
  return conv_backward(cache.input, g1, params.at(name + ".conv1.weight"), grads.at(name + ".conv1.weight"),
                       grads.at(name + ".conv1.bias"));
}

}  // namespace

// ---- config / parameters ---------------------------------------------------

int ModelConfig::channels_at(int stage) const {
  const long long c = static_cast<long long>(base_channels) << stage;
  return static_cast<int>(std::min<long long>(c, channel_cap));
}

void ModelConfig::validate() const {
  if (depth < 2) throw ParameterError("model depth must be >= 2");
  if (depth > 16) throw ParameterError("model depth must be <= 16");
  if (base_channels < 1 || channel_cap < 1) throw ParameterError("channel counts must be positive");
  if (in_channels < 1 || out_channels < 1) throw ParameterError("image channel counts must be positive");
}

void Parameters::add(std::string name, std::vector<int> shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  tensors_.push_back({std::move(name), std::move(shape), std::vector<double>(n, 0.0)});
}

NamedTensor& Parameters::at(const std::string& name) {
  return const_cast<NamedTensor&>(static_cast<const Parameters&>(*this).at(name));
}

const NamedTensor& Parameters::at(const std::string& name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return t;
  throw ParameterError("unknown parameter tensor '" + name + "'");
}

std::size_t Parameters::total_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.numel();
  return n;
}

Parameters Parameters::zeros_like() const {
  Parameters z = *this;
  z.fill(0.0);
  return z;
}

void Parameters::fill(double v) {
  for (auto& t : tensors_) std::fill(t.values.begin(), t.values.end(), v);
}

void Parameters::axpy(double scale, const Parameters& other) {
  if (other.tensors_.size() != tensors_.size()) throw DimensionError("parameter layout mismatch");
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    auto& a = tensors_[i].values;
    const auto& b = other.tensors_[i].values;
    if (a.size() != b.size()) throw DimensionError("parameter layout mismatch at " + tensors_[i].name);
    for (std::size_t j = 0; j < a.size(); ++j) a[j] += scale * b[j];
  }
}

std::size_t parameter_count(const ModelConfig& cfg) {
  auto conv = [](std::size_t cin, std::size_t cout) { return cout * cin * 9 + cout; };
  std::size_t n = 0;
  for (int l = 0; l < cfg.depth; ++l) {
    const std::size_t in = cfg.in_channels + (l > 0 ? cfg.channels_at(l - 1) : 0);
    n += conv(in, cfg.channels_at(l)) + conv(cfg.channels_at(l), cfg.channels_at(l));
  }
  for (int l = 0; l < cfg.depth - 1; ++l) {
    const std::size_t in = cfg.channels_at(l + 1) + cfg.channels_at(l);
    n += conv(in, cfg.channels_at(l)) + conv(cfg.channels_at(l), cfg.channels_at(l));
  }
  return n + conv(cfg.channels_at(0), cfg.out_channels);
}

PyramidUNet::PyramidUNet(ModelConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  auto add_block = [this](const std::string& name, int cin, int cout) {
    params_.add(name + ".conv1.weight", {cout, cin, 3, 3});
    params_.add(name + ".conv1.bias", {cout});
    params_.add(name + ".conv2.weight", {cout, cout, 3, 3});
    params_.add(name + ".conv2.bias", {cout});
  };
  for (int l = 0; l < cfg_.depth; ++l) {
    add_block(block_name("enc", l), cfg_.in_channels + (l > 0 ? cfg_.channels_at(l - 1) : 0), cfg_.channels_at(l));
  }
  for (int l = cfg_.depth - 2; l >= 0; --l) {
    add_block(block_name("dec", l), cfg_.channels_at(l + 1) + cfg_.channels_at(l), cfg_.channels_at(l));
  }
  params_.add("head.weight", {cfg_.out_channels, cfg_.channels_at(0), 3, 3});
  params_.add("head.bias", {cfg_.out_channels});
}

void PyramidUNet::initialize(std::uint64_t seed) {
  Rng rng(seed);
  const double leaky_gain = std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope));
  for (auto& t : params_.tensors()) {
    if (t.shape.size() == 1) {
      std::fill(t.values.begin(), t.values.end(), 0.0);
      continue;
    }
    const double fan_in = static_cast<double>(t.shape[1]) * t.shape[2] * t.shape[3];
    const double gain = t.name.starts_with("head") ? 1.0 : leaky_gain;
    const double stddev = gain / std::sqrt(fan_in);
    for (double& v : t.values) v = stddev * rng.normal();
  }
}

ForwardResult PyramidUNet::forward(const pyramid::LaplacianStack& stack, ForwardCache* cache) const {
  const int L = cfg_.depth - 1;
  if (stack.depth != L || static_cast<int>(stack.levels.size()) != cfg_.depth) {
    throw DimensionError("pyramid depth " + std::to_string(stack.depth) + " does not match model depth " +
                         std::to_string(cfg_.depth) + " (expected L = " + std::to_string(L) + ")");
  }
  for (int l = 0; l <= L; ++l) {
    const Raster& p = stack.levels[l];
    if (p.channels() != cfg_.in_channels) throw DimensionError("pyramid level has wrong channel count");
    if (p.height() != (stack.base_side >> l) || p.width() != (stack.base_side >> l)) {
      throw DimensionError("pyramid level " + std::to_string(l) + " has wrong side");
    }
  }
  if (stack.base_side % (1 << L) != 0) throw DimensionError("base side not divisible by 2^L");

  const bool norm = cfg_.instance_norm;
  ForwardResult result;
  result.taps.reserve(cfg_.depth);
  if (cache) {
    cache->encoder.assign(cfg_.depth, {});
    cache->decoder.assign(cfg_.depth - 1, {});
    cache->decoder_outputs.assign(cfg_.depth, {});
  }

  for (int l = 0; l <= L; ++l) {
    Raster input = l == 0 ? stack.levels[0] : concat(stack.levels[l], avg_pool2(result.taps.back()));
    result.taps.push_back(
        block_forward(params_, block_name("enc", l), norm, input, cache ? &cache->encoder[l] : nullptr));
  }

  Raster d = result.taps[L];
  for (int l = L - 1; l >= 0; --l) {
    Raster input = concat(upsample_nearest2(d), result.taps[l]);
    d = block_forward(params_, block_name("dec", l), norm, input, cache ? &cache->decoder[l] : nullptr);
  }

  Raster logits = conv_forward(d, params_.at("head.weight"), params_.at("head.bias"));
  for (double& v : logits.values()) v = 1.0 / (1.0 + std::exp(-v));
  result.enhanced = std::move(logits);

  if (cache) {
    cache->head_input = std::move(d);
    cache->output = result.enhanced;
    cache->taps = result.taps;
  }
  return result;
}

void PyramidUNet::backward(const ForwardCache& cache, const Raster& grad_output, const std::vector<Raster>& grad_taps,
                           Parameters& grads) const {
  const int L = cfg_.depth - 1;
  if (cache.encoder.size() != static_cast<std::size_t>(cfg_.depth)) {
    throw ParameterError("backward called with an empty forward cache");
  }
  if (!grad_output.same_shape(cache.output)) throw DimensionError("output gradient shape mismatch");
  if (!grad_taps.empty() && grad_taps.size() != cache.taps.size()) {
    throw DimensionError("expected one tap gradient per encoder stage");
  }
  const bool norm = cfg_.instance_norm;

  Raster g = grad_output;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double s = cache.output.values()[i];
    g.values()[i] *= s * (1.0 - s);
  }
  Raster gd = conv_backward(cache.head_input, g, params_.at("head.weight"), grads.at("head.weight"),
                            grads.at("head.bias"));

  std::vector<Raster> g_taps;
  g_taps.reserve(cfg_.depth);
  for (int l = 0; l <= L; ++l) {
    const Raster& tap = cache.taps[l];
    if (!grad_taps.empty() && !grad_taps[l].empty()) {
      if (!grad_taps[l].same_shape(tap)) throw DimensionError("tap gradient shape mismatch at stage " + std::to_string(l));
      g_taps.push_back(grad_taps[l]);
    } else {
      g_taps.emplace_back(tap.channels(), tap.height(), tap.width());
    }
  }

  for (int l = 0; l < L; ++l) {
    Raster gin = block_backward(params_, grads, block_name("dec", l), norm, cache.decoder[l], std::move(gd));
    auto [g_up, g_skip] = split_channels(gin, cfg_.channels_at(l + 1));
    g_taps[l] += g_skip;
    gd = upsample_nearest2_backward(g_up);
  }
  g_taps[L] += gd;

  for (int l = L; l >= 0; --l) {
    Raster gin = block_backward(params_, grads, block_name("enc", l), norm, cache.encoder[l], std::move(g_taps[l]));
    if (l > 0) {
      auto [g_level, g_pool] = split_channels(gin, cfg_.in_channels);
      avg_pool2_backward_add(g_pool, g_taps[l - 1]);
    }
  }
}

// ---- spatial pyramid pooling ------------------------------------------------

std::vector<double> spp(const Raster& feature) {
  const int h = feature.height();
  const int w = feature.width();
  if (h < 1 || w < 1 || feature.channels() < 1) throw DimensionError("spp on an empty feature map");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(feature.channels()) * kSppCellsPerChannel);
  for (int g : kSppScales) {
    for (int c = 0; c < feature.channels(); ++c)
      for (int i = 0; i < g; ++i) {
        const int y0 = cell_start(i, h, g);
        const int y1 = cell_end(i, h, g);
        for (int j = 0; j < g; ++j) {
          const int x0 = cell_start(j, w, g);
          const int x1 = cell_end(j, w, g);
          double acc = 0.0;
          for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) acc += feature.at(c, y, x);
          out.push_back(acc / ((y1 - y0) * (x1 - x0)));
        }
      }
  }
  return out;
}

Raster spp_backward(const std::vector<double>& grad_descriptor, int channels, int height, int width) {
  if (grad_descriptor.size() != static_cast<std::size_t>(channels) * kSppCellsPerChannel) {
    throw DimensionError("spp gradient has wrong length");
  }
  Raster grad(channels, height, width);
  std::size_t idx = 0;
  for (int g : kSppScales) {
    for (int c = 0; c < channels; ++c)
      for (int i = 0; i < g; ++i) {
        const int y0 = cell_start(i, height, g);
        const int y1 = cell_end(i, height, g);
        for (int j = 0; j < g; ++j) {
          const int x0 = cell_start(j, width, g);
          const int x1 = cell_end(j, width, g);
          const double v = grad_descriptor[idx++] / ((y1 - y0) * (x1 - x0));
          for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) grad.at(c, y, x) += v;
        }
      }
  }
  return grad;
}

}  // namespace pcenet::network
