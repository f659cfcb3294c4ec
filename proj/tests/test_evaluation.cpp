#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "pcenet/errors.hpp"
#include "pcenet/evaluation.hpp"
#include "pcenet/image_io.hpp"
#include "test_util.hpp"

namespace pcenet {
namespace {

using namespace evaluation;
using testing::TempDir;

Mask mask_with(int h, int w, int first, int count) {
  Mask m(h, w, 0);
  for (int i = first; i < first + count; ++i) m.data[i] = 1;
  return m;
}

TEST(Psnr, OffsetOfOneTenthIsTwentyDecibels) {
  const Raster a = testing::random_raster(3, 16, 16, 1, 0.0, 0.5);
  Raster b = a;
  for (double& v : b.values()) v += 0.1;
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
}

TEST(Psnr, IdenticalImagesHitCap) {
  const Raster a = testing::random_raster(3, 8, 8, 2);
  EXPECT_EQ(psnr(a, a), 100.0);
}

TEST(Psnr, SymmetricAndShapeChecked) {
  const Raster a = testing::random_raster(3, 12, 12, 3), b = testing::random_raster(3, 12, 12, 4);
  EXPECT_EQ(psnr(a, b), psnr(b, a));
  EXPECT_THROW(psnr(a, Raster(3, 12, 11)), DimensionError);
}

TEST(Ssim, IdenticalImagesGiveOne) {
  const Raster a = testing::random_raster(3, 32, 32, 5);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Ssim, ConstantZeroVersusOneIsStabilizerDominated) {
  const double c1 = 1e-4;
  EXPECT_NEAR(ssim(Raster(3, 16, 16, 0.0), Raster(3, 16, 16, 1.0)), c1 / (1.0 + c1), 1e-12);
}

TEST(Ssim, SymmetricAndSideChecked) {
  const Raster a = testing::random_raster(3, 20, 20, 6), b = testing::random_raster(3, 20, 20, 7);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-15);
  EXPECT_THROW(ssim(Raster(3, 10, 10), Raster(3, 10, 10)), DimensionError);
}

TEST(MetricOracle, SsimAndPsnrMatchBruteForce) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const Raster a = testing::random_raster(3, 32, 32, 10 + seed);
    Raster b = a;
    const Raster noise = testing::random_raster(3, 32, 32, 20 + seed, -0.2, 0.2);
    for (std::size_t i = 0; i < b.size(); ++i) b.values()[i] = std::clamp(b.values()[i] + noise.values()[i], 0.0, 1.0);
    EXPECT_NEAR(ssim(a, b), testing::ssim_oracle(a, b), 1e-6);
    EXPECT_NEAR(psnr(a, b), testing::psnr_oracle(a, b), 1e-6);
  }
}

TEST(Overlap, HalfOverlapFixture) {
  const Mask p = mask_with(20, 20, 0, 100), r = mask_with(20, 20, 50, 100);
  const Overlap o = overlap_metrics(p, r);
  EXPECT_EQ(o.iou, 1.0 / 3.0);
  EXPECT_EQ(o.dsc, 0.5);
}

TEST(Overlap, EqualDisjointAndEmpty) {
  const Mask a = mask_with(10, 10, 5, 20), b = mask_with(10, 10, 50, 20);
  EXPECT_EQ(overlap_metrics(a, a).iou, 1.0);
  EXPECT_EQ(overlap_metrics(a, a).dsc, 1.0);
  EXPECT_EQ(overlap_metrics(a, b).iou, 0.0);
  EXPECT_EQ(overlap_metrics(a, b).dsc, 0.0);
  const Mask empty(10, 10, 0);
  EXPECT_EQ(overlap_metrics(empty, empty).iou, 1.0);
  EXPECT_EQ(overlap_metrics(empty, empty).dsc, 1.0);
}

TEST(Overlap, NonBinaryIsFormatError) {
  Mask m(4, 4, 0);
  m.data[3] = 2;
  EXPECT_THROW(overlap_metrics(m, Mask(4, 4, 0)), FormatError);
  Raster r(1, 4, 4, 0.0);
  r.at(0, 1, 1) = 0.5;
  EXPECT_THROW(mask_from_raster(r), FormatError);
}

TEST(OverlapProperty, DiceAtLeastIou) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    Mask a(8, 8, 0), b(8, 8, 0);
    const double pa = rng.uniform(), pb = rng.uniform();
    for (auto& v : a.data) v = rng.bernoulli(pa);
    for (auto& v : b.data) v = rng.bernoulli(pb);
    const Overlap o = overlap_metrics(a, b);
    EXPECT_GE(o.dsc, o.iou);
    if (o.iou > 0.0 && o.iou < 1.0) EXPECT_GT(o.dsc, o.iou);
    else EXPECT_EQ(o.dsc, o.iou);
  }
}

TEST(Wfqa, ThreeLabelFixture) {
  std::istringstream in("id,label\na,Good\nb,Usable\nc,Reject\n");
  const QualityScores s = wfqa(parse_quality_labels(in));
  EXPECT_EQ(s.fiqa, 1.0 / 3.0);
  EXPECT_EQ(s.wfqa, 1.0);
}

TEST(Wfqa, AllGoodAndNoUsable) {
  std::istringstream good("a,Good\nb,Good\n");
  const QualityScores g = wfqa(parse_quality_labels(good));
  EXPECT_EQ(g.fiqa, 1.0);
  EXPECT_EQ(g.wfqa, 2.0);
  std::istringstream mixed("a,Good\nb,Reject\nc,Reject\nd,Good\ne,Reject\n");
  const QualityScores m = wfqa(parse_quality_labels(mixed));
  EXPECT_DOUBLE_EQ(m.wfqa, 2.0 * m.fiqa);
}

TEST(Wfqa, UnknownLabelNamesTheId) {
  std::istringstream in("a,Good\nodd_one,Excellent\n");
  try {
    parse_quality_labels(in);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("odd_one"), std::string::npos);
  }
}

TEST(Wfqa, DuplicateIdAndEmptyFileRejected) {
  std::istringstream dup("a,Good\na,Reject\n");
  EXPECT_THROW(parse_quality_labels(dup), FormatError);
  EXPECT_THROW(wfqa(QualityLabelFile{}), ParameterError);
}

class PairDirs : public ::testing::Test {
 protected:
  TempDir pred{"pred"}, ref{"ref"};
  void write(const TempDir& dir, const std::string& name, const Raster& r) { image_io::save_raster(r, dir / name); }
};

TEST_F(PairDirs, IdenticalDirectoriesScorePerfectly) {
  for (int i = 0; i < 3; ++i) {
    const Raster r = testing::random_raster(3, 24, 24, i);
    write(pred, "img" + std::to_string(i) + ".png", r);
    write(ref, "img" + std::to_string(i) + ".png", r);
  }
  const PairReport rep = evaluate_pairs(pred.path(), ref.path());
  ASSERT_EQ(rep.rows.size(), 3u);
  EXPECT_NEAR(rep.mean.first, 1.0, 1e-12);
  EXPECT_EQ(rep.mean.second, 100.0);
  EXPECT_EQ(rep.rows[0].id, "img0.png");
  std::ostringstream csv;
  write_report_csv(rep, "ssim", "psnr", csv);
  std::istringstream lines(csv.str());
  std::string line;
  std::vector<std::string> all;
  while (std::getline(lines, line)) all.push_back(line);
  ASSERT_EQ(all.size(), 5u);
  EXPECT_EQ(all[0], "id,ssim,psnr");
  EXPECT_EQ(all[4].substr(0, 5), "mean,");
}

TEST_F(PairDirs, UnmatchedFilesAreListedAndExcluded) {
  const Raster a = testing::random_raster(3, 24, 24, 1);
  write(pred, "x.png", a);
  write(ref, "x.png", a);
  write(pred, "only_pred.png", testing::random_raster(3, 24, 24, 2));
  const PairReport rep = evaluate_pairs(pred.path(), ref.path());
  EXPECT_EQ(rep.rows.size(), 1u);
  ASSERT_EQ(rep.unmatched.size(), 1u);
  EXPECT_EQ(rep.unmatched[0], "only_pred.png");
  EXPECT_EQ(rep.mean.second, 100.0);
}

TEST_F(PairDirs, NoMatchesIsConfigError) {
  write(pred, "a.png", Raster(3, 16, 16));
  write(ref, "b.png", Raster(3, 16, 16));
  EXPECT_THROW(evaluate_pairs(pred.path(), ref.path()), ConfigError);
}

TEST_F(PairDirs, MaskPairs) {
  Raster p(1, 20, 20, 0.0), r(1, 20, 20, 0.0);
  for (int i = 0; i < 100; ++i) p.values()[i] = 1.0;
  for (int i = 50; i < 150; ++i) r.values()[i] = 1.0;
  write(pred, "m.png", p);
  write(ref, "m.png", r);
  const PairReport rep = evaluate_mask_pairs(pred.path(), ref.path());
  ASSERT_EQ(rep.rows.size(), 1u);
  EXPECT_NEAR(rep.rows[0].first, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(rep.rows[0].second, 0.5, 1e-15);
}

}  // namespace
}  // namespace pcenet
