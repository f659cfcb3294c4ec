#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pcenet/errors.hpp"
#include "pcenet/network.hpp"
#include "pcenet/pyramid.hpp"
#include "pcenet/rng.hpp"
#include "test_util.hpp"

namespace pcenet {
namespace {

using namespace network;

ModelConfig tiny_config(int depth = 3) {
  ModelConfig cfg;
  cfg.depth = depth;
  cfg.base_channels = 4;
  cfg.channel_cap = 16;
  return cfg;
}

double conv_params(std::size_t cin, std::size_t cout) { return static_cast<double>(cout * cin * 9 + cout); }

TEST(ModelConfig, ChannelsDoubleUpToCap) {
  ModelConfig cfg;
  EXPECT_EQ(cfg.channels_at(0), 64);
  EXPECT_EQ(cfg.channels_at(1), 128);
  EXPECT_EQ(cfg.channels_at(3), 512);
  EXPECT_EQ(cfg.channels_at(4), 512);
}

TEST(ModelConfig, InvalidValuesAreParameterErrors) {
  ModelConfig cfg;
  cfg.depth = 0;
  EXPECT_THROW(cfg.validate(), ParameterError);
  cfg = ModelConfig{};
  cfg.base_channels = 0;
  EXPECT_THROW(cfg.validate(), ParameterError);
}

TEST(Parameters, DefaultCountIsPinned) {
  const ModelConfig cfg;
  EXPECT_EQ(parameter_count(cfg), 19621123u);
  EXPECT_EQ(PyramidUNet(cfg).parameters().total_count(), 19621123u);
}

TEST(Parameters, CountMatchesLayerByLayerSum) {
  for (int depth : {2, 3, 5}) {
    ModelConfig cfg = tiny_config(depth);
    double expected = 0;
    for (int l = 0; l < depth; ++l) {
      const int in = 3 + (l ? cfg.channels_at(l - 1) : 0);
      expected += conv_params(in, cfg.channels_at(l)) + conv_params(cfg.channels_at(l), cfg.channels_at(l));
    }
    for (int l = 0; l + 1 < depth; ++l)
      expected += conv_params(cfg.channels_at(l + 1) + cfg.channels_at(l), cfg.channels_at(l)) +
                  conv_params(cfg.channels_at(l), cfg.channels_at(l));
    expected += conv_params(cfg.channels_at(0), 3);
    EXPECT_EQ(static_cast<double>(parameter_count(cfg)), expected) << "depth " << depth;
    EXPECT_EQ(PyramidUNet(cfg).parameters().total_count(), parameter_count(cfg));
  }
}

TEST(Parameters, NamesAreCanonical) {
  const PyramidUNet net(tiny_config(3));
  const auto& t = net.parameters().tensors();
  EXPECT_EQ(t.front().name, "enc0.conv1.weight");
  EXPECT_EQ(t.back().name, "head.bias");
  EXPECT_NO_THROW(net.parameters().at("dec1.conv2.bias"));
  EXPECT_NO_THROW(net.parameters().at("dec0.conv1.weight"));
  EXPECT_THROW(net.parameters().at("dec2.conv1.weight"), ParameterError);
}

TEST(Parameters, InitializationIsDeterministicAndBiasesZero) {
  PyramidUNet a(tiny_config()), b(tiny_config()), c(tiny_config());
  a.initialize(5);
  b.initialize(5);
  c.initialize(6);
  EXPECT_EQ(a.parameters(), b.parameters());
  EXPECT_FALSE(a.parameters() == c.parameters());
  for (double v : a.parameters().at("enc1.conv1.bias").values) EXPECT_EQ(v, 0.0);
}

TEST(Forward, ShapesOfOutputAndTaps) {
  ModelConfig cfg = tiny_config(5);
  PyramidUNet net(cfg);
  net.initialize(1);
  const auto stack = pyramid::laplacian_decompose(testing::random_raster(3, 256, 256, 2), 4);
  const ForwardResult r = net.forward(stack);
  EXPECT_EQ(r.enhanced.channels(), 3);
  EXPECT_EQ(r.enhanced.height(), 256);
  EXPECT_EQ(r.enhanced.width(), 256);
  ASSERT_EQ(r.taps.size(), 5u);
  const int sides[] = {256, 128, 64, 32, 16};
  for (int l = 0; l < 5; ++l) {
    EXPECT_EQ(r.taps[l].height(), sides[l]);
    EXPECT_EQ(r.taps[l].width(), sides[l]);
    EXPECT_EQ(r.taps[l].channels(), cfg.channels_at(l));
  }
}

TEST(Forward, OutputInUnitRangeAndDeterministic) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    PyramidUNet net(tiny_config());
    net.initialize(seed);
    // Inflate weights so the head saturates in places.
    for (auto& t : net.parameters().tensors())
      for (double& v : t.values) v *= 3.0;
    const auto stack = pyramid::laplacian_decompose(testing::random_raster(3, 32, 32, seed, -2.0, 2.0), 2);
    const Raster a = net.forward(stack).enhanced;
    const Raster b = net.forward(stack).enhanced;
    EXPECT_EQ(a, b);
    for (double v : a.values()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(Forward, DepthMismatchIsDimensionError) {
  PyramidUNet net(tiny_config(3));
  net.initialize(0);
  EXPECT_THROW(net.forward(pyramid::laplacian_decompose(Raster(3, 32, 32, 0.5), 1)), DimensionError);
}

TEST(Spp, DescriptorLength) {
  EXPECT_EQ(spp(Raster(64, 16, 16, 0.1)).size(), 5376u);
  EXPECT_EQ(spp(Raster(3, 8, 8, 0.1)).size(), 252u);
}

TEST(Spp, ConstantFeatureGivesConstantDescriptor) {
  for (double v : spp(Raster(5, 24, 24, 0.73))) EXPECT_NEAR(v, 0.73, 1e-15);
}

TEST(Spp, CoarsestCellsAreQuadrantMeans) {
  const Raster f = testing::random_raster(1, 8, 8, 3);
  const auto d = spp(f);
  for (int cy = 0; cy < 2; ++cy)
    for (int cx = 0; cx < 2; ++cx) {
      double sum = 0.0;
      for (int y = 4 * cy; y < 4 * cy + 4; ++y)
        for (int x = 4 * cx; x < 4 * cx + 4; ++x) sum += f.at(0, y, x);
      EXPECT_NEAR(d[cy * 2 + cx], sum / 16.0, 1e-15);
    }
  // The 8x8 grid on an 8x8 map reproduces the map itself.
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) EXPECT_DOUBLE_EQ(d[20 + y * 8 + x], f.at(0, y, x));
}

TEST(Spp, LayoutIsScaleThenChannelThenRow) {
  Raster f(2, 8, 8, 0.0);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) f.at(1, y, x) = 1.0;
  const auto d = spp(f);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(d[i], 0.0);
  for (int i = 4; i < 8; ++i) EXPECT_EQ(d[i], 1.0);
  for (int i = 8; i < 24; ++i) EXPECT_EQ(d[i], 0.0);
  for (int i = 24; i < 40; ++i) EXPECT_EQ(d[i], 1.0);
}

TEST(Spp, SmallMapsUseOverlappingCells) {
  const Raster f = testing::random_raster(1, 4, 4, 8);
  const auto d = spp(f);
  ASSERT_EQ(d.size(), 84u);
  // Cell i of 8 covers row floor(i/2).
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) EXPECT_DOUBLE_EQ(d[20 + y * 8 + x], f.at(0, y / 2, x / 2));
}

TEST(SppProperty, InvariantToShufflesWithinFinestCells) {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 10; ++trial) {
    const Raster f = testing::random_raster(3, 32, 32, 40 + trial);
    Raster g = f;
    // 32 / 8 = 4: permute pixels inside each 4x4 cell.
    for (int c = 0; c < 3; ++c)
      for (int cy = 0; cy < 8; ++cy)
        for (int cx = 0; cx < 8; ++cx) {
          std::vector<double> cell;
          for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) cell.push_back(f.at(c, 4 * cy + y, 4 * cx + x));
          std::shuffle(cell.begin(), cell.end(), gen);
          for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) g.at(c, 4 * cy + y, 4 * cx + x) = cell[y * 4 + x];
        }
    const auto a = spp(f), b = spp(g);
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], 1e-14);
  }
}

TEST(SppBackward, MatchesAdjointOfForward) {
  // <spp(f), w> == <f, spp_backward(w)> since spp is linear.
  for (int side : {4, 8, 12, 16}) {
    const Raster f = testing::random_raster(2, side, side, side);
    Rng rng(side);
    std::vector<double> w(84 * 2);
    for (double& v : w) v = rng.normal();
    const auto d = spp(f);
    const Raster g = spp_backward(w, 2, side, side);
    const double lhs = std::inner_product(d.begin(), d.end(), w.begin(), 0.0);
    const double rhs = std::inner_product(f.values().begin(), f.values().end(), g.values().begin(), 0.0);
    EXPECT_NEAR(lhs, rhs, 1e-12) << "side " << side;
  }
}

// Scalar probe L = <w_out, output> + sum_l <w_l, tap_l>.
struct Probe {
  Raster w_out;
  std::vector<Raster> w_taps;

  double eval(const ForwardResult& r) const {
    double s = 0.0;
    for (std::size_t i = 0; i < r.enhanced.size(); ++i) s += w_out.values()[i] * r.enhanced.values()[i];
    for (std::size_t l = 0; l < r.taps.size(); ++l)
      for (std::size_t i = 0; i < r.taps[l].size(); ++i) s += w_taps[l].values()[i] * r.taps[l].values()[i];
    return s;
  }
};

TEST(Backward, MatchesCentralFiniteDifferences) {
  PyramidUNet net(tiny_config(3));
  net.initialize(21);
  // Non-zero biases so their gradients are exercised away from the symmetric point.
  Rng rng(99);
  for (auto& t : net.parameters().tensors())
    if (t.shape.size() == 1)
      for (double& v : t.values) v = 0.1 * rng.normal();
  const auto stack = pyramid::laplacian_decompose(testing::random_raster(3, 32, 32, 5), 2);

  ForwardCache cache;
  const ForwardResult r = net.forward(stack, &cache);
  Probe probe{testing::random_raster(3, 32, 32, 6, -1.0, 1.0), {}};
  for (std::size_t l = 0; l < r.taps.size(); ++l) {
    const Raster& t = r.taps[l];
    probe.w_taps.push_back(testing::random_raster(t.channels(), t.height(), t.width(), 70 + l, -0.1, 0.1));
  }
  Parameters grads = net.parameters().zeros_like();
  net.backward(cache, probe.w_out, probe.w_taps, grads);

  // Instance norm on low-variance channels amplifies weight steps, so larger
  // steps start crossing leaky-ReLU kinks.
  const double h = 1e-6;
  double diff2 = 0.0, norm2 = 0.0;
  int checked = 0;
  for (std::size_t ti = 0; ti < net.parameters().tensors().size(); ++ti) {
    auto& tensor = net.parameters().tensors()[ti];
    const std::size_t n = tensor.values.size();
    for (std::size_t i : {std::size_t{0}, n / 3, n / 2, n - 1}) {
      const double saved = tensor.values[i];
      tensor.values[i] = saved + h;
      const double up = probe.eval(net.forward(stack));
      tensor.values[i] = saved - h;
      const double down = probe.eval(net.forward(stack));
      tensor.values[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = grads.tensors()[ti].values[i];
      diff2 += (numeric - analytic) * (numeric - analytic);
      norm2 += std::max(numeric * numeric, analytic * analytic);
      EXPECT_LT(std::abs(numeric - analytic), 1e-3 * std::max({std::abs(numeric), std::abs(analytic), 1e-3}))
          << tensor.name << "[" << i << "]";
      ++checked;
    }
  }
  EXPECT_GT(checked, 50);
  EXPECT_LT(std::sqrt(diff2 / norm2), 1e-3);
}

TEST(Backward, AccumulatesIntoExistingGradients) {
  PyramidUNet net(tiny_config(2));
  net.initialize(3);
  const auto stack = pyramid::laplacian_decompose(testing::random_raster(3, 16, 16, 1), 1);
  ForwardCache cache;
  net.forward(stack, &cache);
  const Raster w = testing::random_raster(3, 16, 16, 2, -1.0, 1.0);
  Parameters once = net.parameters().zeros_like();
  net.backward(cache, w, {}, once);
  Parameters twice = once;
  net.backward(cache, w, {}, twice);
  Parameters expected = once;
  expected.axpy(1.0, once);
  for (std::size_t t = 0; t < expected.tensors().size(); ++t)
    for (std::size_t i = 0; i < expected.tensors()[t].values.size(); ++i)
      ASSERT_NEAR(twice.tensors()[t].values[i], expected.tensors()[t].values[i], 1e-12);
}

}  // namespace
}  // namespace pcenet
