#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "pcenet/raster.hpp"

namespace pcenet::evaluation {

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) for [0,1] data, capped at 100 dB (zero MSE).
double psnr(const Raster& a, const Raster& b);

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Single-scale SSIM with a Gaussian window, evaluated at every position
/// where the window fits inside the raster, averaged over positions and channels.
double ssim(const Raster& a, const Raster& b, const SsimParams& params = {});

struct Overlap {
  double iou = 0.0;
  double dsc = 0.0;
};

/// IoU and Dice of two binary masks; (1, 1) when both are empty.
/// Throws FormatError if a mask holds values other than 0/1.
Overlap overlap_metrics(const Mask& pred, const Mask& ref);

/// Converts a raster (any channel count; channel 0 is used) to a mask;
/// values must be exactly 0 or 1.
Mask mask_from_raster(const Raster& r);

enum class QualityLabel { kGood, kUsable, kReject };

struct QualityRecord {
  std::string id;
  QualityLabel label;
};

struct QualityLabelFile {
  std::vector<QualityRecord> records;
};

/// CSV "id,label" with an optional header row. Unknown labels and duplicate
/// ids raise FormatError naming the offending id.
QualityLabelFile parse_quality_labels(std::istream& in);
QualityLabelFile read_quality_labels(const std::filesystem::path& path);

struct QualityScores {
  double fiqa = 0.0;  // fraction labelled Good
  double wfqa = 0.0;  // mean of {Good: 2, Usable: 1, Reject: 0}
};

QualityScores wfqa(const QualityLabelFile& labels);

struct PairRow {
  std::string id;
  double first = 0.0;   // ssim or iou
  double second = 0.0;  // psnr or dsc
};

struct PairReport {
  std::vector<PairRow> rows;  // sorted by id
  PairRow mean;               // id "mean"
  std::vector<std::string> unmatched;
};

/// SSIM/PSNR for every filename present in both directories.
/// Throws ConfigError when no filenames match.
PairReport evaluate_pairs(const std::filesystem::path& pred_dir, const std::filesystem::path& ref_dir);

/// IoU/DSC for binary mask images present in both directories.
PairReport evaluate_mask_pairs(const std::filesystem::path& pred_dir, const std::filesystem::path& ref_dir);

/// Header `id,<first>,<second>`, one row per pair, then a `mean` row.
void write_report_csv(const PairReport& report, const std::string& first_name, const std::string& second_name,
                      std::ostream& out);

}  // namespace pcenet::evaluation
