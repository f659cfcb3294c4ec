#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pcenet/pyramid.hpp"
#include "pcenet/raster.hpp"

namespace pcenet::network {

struct ModelConfig {
  int depth = 5;  // encoder stages == pyramid L + 1
  int base_channels = 64;
  int channel_cap = 512;
  bool instance_norm = true;
  int in_channels = 3;
  int out_channels = 3;

  int channels_at(int stage) const;
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;

  std::size_t numel() const { return values.size(); }
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// Ordered parameter tensors addressed by canonical name
/// ("enc{l}.conv{1,2}.{weight,bias}", "dec{l}...", "head.weight", "head.bias").
class Parameters {
 public:
  void add(std::string name, std::vector<int> shape);
  NamedTensor& at(const std::string& name);
  const NamedTensor& at(const std::string& name) const;
  std::vector<NamedTensor>& tensors() { return tensors_; }
  const std::vector<NamedTensor>& tensors() const { return tensors_; }
  std::size_t total_count() const;
  Parameters zeros_like() const;
  void fill(double v);
  /// this += scale * other (same layout).
  void axpy(double scale, const Parameters& other);
  friend bool operator==(const Parameters&, const Parameters&) = default;

 private:
  std::vector<NamedTensor> tensors_;
};

/// Closed-form parameter count for a configuration.
std::size_t parameter_count(const ModelConfig& cfg);

/// Post-activation encoder outputs f^0..f^L.
using FeatureTaps = std::vector<Raster>;

struct ForwardResult {
  Raster enhanced;
  FeatureTaps taps;
};

struct BlockCache;  // per conv block activations, defined in network.cpp

/// Everything backward() needs from one forward pass.
class ForwardCache {
 public:
  ForwardCache();
  ~ForwardCache();
  ForwardCache(ForwardCache&&) noexcept;
  ForwardCache& operator=(ForwardCache&&) noexcept;

 private:
  friend class PyramidUNet;
  std::vector<BlockCache> encoder;
  std::vector<BlockCache> decoder;
  Raster head_input;
  Raster output;
  FeatureTaps taps;
  std::vector<Raster> decoder_outputs;
};

/// U-Net whose encoder stage l consumes [p^l, pool(f^{l-1})]. Each stage is
/// conv3x3 -> instance norm -> leaky ReLU(0.2), twice; 2x2 average pooling
/// between stages; nearest upsampling + skip concatenation in the decoder;
/// 3x3 conv + sigmoid head.
class PyramidUNet {
 public:
  explicit PyramidUNet(ModelConfig cfg);

  /// Kaiming-normal weights, zero biases, deterministic in seed.
  void initialize(std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  Parameters& parameters() { return params_; }
  const Parameters& parameters() const { return params_; }

  ForwardResult forward(const pyramid::LaplacianStack& stack, ForwardCache* cache = nullptr) const;

  /// Accumulates parameter gradients into grads. grad_taps may be empty
  /// (no tap loss) or hold one raster per tap (empty rasters are skipped).
  void backward(const ForwardCache& cache, const Raster& grad_output, const std::vector<Raster>& grad_taps,
                Parameters& grads) const;

 private:
  ModelConfig cfg_;
  Parameters params_;
};

/// Spatial pyramid pooling: adaptive average pooling onto 2x2, 4x4 and 8x8
/// grids, concatenated in scale order, each channel-major then row-major.
/// Length is 84 * channels. Cell bounds follow floor(i*n/g)..ceil((i+1)*n/g),
/// so maps smaller than a grid get overlapping single-pixel cells.
std::vector<double> spp(const Raster& feature);
/// Gradient of spp w.r.t. its input for a given descriptor gradient.
Raster spp_backward(const std::vector<double>& grad_descriptor, int channels, int height, int width);

inline constexpr int kSppScales[] = {2, 4, 8};
inline constexpr int kSppCellsPerChannel = 4 + 16 + 64;

}  // namespace pcenet::network
