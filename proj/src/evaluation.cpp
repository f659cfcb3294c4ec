#include "pcenet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "pcenet/errors.hpp"
#include "pcenet/image_io.hpp"

namespace pcenet::evaluation {
namespace {

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(size);
  const double c = (size - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    w[i] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

// "valid" separable filtering of one plane.
std::vector<double> filter_valid(std::span<const double> src, int h, int w, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int oh = h - n + 1;
  const int ow = w - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  return out;
}

void require_same_shape(const Raster& a, const Raster& b, const char* what) {
  if (!a.same_shape(b)) throw DimensionError(std::string(what) + ": shape mismatch");
}

void require_binary(const Mask& m, const char* which) {
  for (auto v : m.data)
    if (v > 1) throw FormatError(std::string(which) + " mask is not binary");
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  const auto e = s.find_last_not_of(" \t\r\n");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

std::map<std::string, std::filesystem::path> image_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::map<std::string, std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files[entry.path().filename().string()] = entry.path();
  }
  return files;
}

template <typename Fn>
PairReport evaluate_dirs(const std::filesystem::path& pred_dir, const std::filesystem::path& ref_dir, Fn&& metric) {
  const auto pred = image_files(pred_dir);
  const auto ref = image_files(ref_dir);
  PairReport report;
  for (const auto& [name, path] : pred) {
    auto it = ref.find(name);
    if (it == ref.end()) {
      report.unmatched.push_back(name);
      continue;
    }
    auto [first, second] = metric(path, it->second);
    report.rows.push_back({name, first, second});
  }
  for (const auto& [name, path] : ref)
    if (!pred.contains(name)) report.unmatched.push_back(name);
  std::sort(report.unmatched.begin(), report.unmatched.end());
  if (report.rows.empty()) {
    throw ConfigError("no matching filenames between " + pred_dir.string() + " and " + ref_dir.string());
  }
  report.mean.id = "mean";
  for (const auto& r : report.rows) {
    report.mean.first += r.first;
    report.mean.second += r.second;
  }
  report.mean.first /= static_cast<double>(report.rows.size());
  report.mean.second /= static_cast<double>(report.rows.size());
  return report;
}

}  // namespace

double psnr(const Raster& a, const Raster& b) {
  require_same_shape(a, b, "psnr");
  if (a.empty()) throw DimensionError("psnr on empty rasters");
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Raster& a, const Raster& b, const SsimParams& p) {
  require_same_shape(a, b, "ssim");
  const int h = a.height();
  const int w = a.width();
  if (h < p.window || w < p.window) {
    throw DimensionError("ssim needs side >= " + std::to_string(p.window));
  }
  const auto k = gaussian_window(p.window, p.sigma);
  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  const std::size_t n = a.plane_size();

  double total = 0.0;
  std::size_t count = 0;
  std::vector<double> aa(n), bb(n), ab(n);
  for (int c = 0; c < a.channels(); ++c) {
    const auto pa = a.plane(c);
    const auto pb = b.plane(c);
    for (std::size_t i = 0; i < n; ++i) {
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
    const auto mu_a = filter_valid(pa, h, w, k);
    const auto mu_b = filter_valid(pb, h, w, k);
    const auto e_aa = filter_valid(aa, h, w, k);
    const auto e_bb = filter_valid(bb, h, w, k);
    const auto e_ab = filter_valid(ab, h, w, k);
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double va = e_aa[i] - mu_a[i] * mu_a[i];
      const double vb = e_bb[i] - mu_b[i] * mu_b[i];
      const double cov = e_ab[i] - mu_a[i] * mu_b[i];
      total += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
               ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
    }
    count += mu_a.size();
  }
  return total / static_cast<double>(count);
}

Overlap overlap_metrics(const Mask& pred, const Mask& ref) {
  if (pred.height != ref.height || pred.width != ref.width) throw DimensionError("mask shape mismatch");
  require_binary(pred, "predicted");
  require_binary(ref, "reference");
  std::size_t inter = 0, p = 0, r = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    p += pred.data[i];
    r += ref.data[i];
    inter += pred.data[i] & ref.data[i];
  }
  if (p == 0 && r == 0) return {1.0, 1.0};
  const double uni = static_cast<double>(p + r - inter);
  return {static_cast<double>(inter) / uni, 2.0 * static_cast<double>(inter) / static_cast<double>(p + r)};
}

Mask mask_from_raster(const Raster& r) {
  Mask m(r.height(), r.width());
  for (int y = 0; y < r.height(); ++y)
    for (int x = 0; x < r.width(); ++x) {
      const double v = r.at(0, y, x);
      if (v == 0.0) {
        m.at(y, x) = 0;
      } else if (v == 1.0) {
        m.at(y, x) = 1;
      } else {
        throw FormatError("mask value " + std::to_string(v) + " at (" + std::to_string(y) + "," +
                          std::to_string(x) + ") is not binary");
      }
    }
  return m;
}

QualityLabelFile parse_quality_labels(std::istream& in) {
  QualityLabelFile file;
  std::set<std::string> seen;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("label line without comma: '" + line + "'");
    const std::string id = trim(line.substr(0, comma));
    const std::string label = trim(line.substr(comma + 1));
    if (first && id == "id" && label == "label") {
      first = false;
      continue;
    }
    first = false;
    QualityLabel q;
    if (label == "Good") {
      q = QualityLabel::kGood;
    } else if (label == "Usable") {
      q = QualityLabel::kUsable;
    } else if (label == "Reject") {
      q = QualityLabel::kReject;
    } else {
      throw FormatError("unknown quality label '" + label + "' for id " + id);
    }
    if (!seen.insert(id).second) throw FormatError("duplicate id " + id);
    file.records.push_back({id, q});
  }
  return file;
}

QualityLabelFile read_quality_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_quality_labels(in);
}

QualityScores wfqa(const QualityLabelFile& labels) {
  if (labels.records.empty()) throw ParameterError("wfqa needs at least one record");
  std::size_t good = 0;
  double weight = 0.0;
  for (const auto& r : labels.records) {
    switch (r.label) {
      case QualityLabel::kGood:
        ++good;
        weight += 2.0;
        break;
      case QualityLabel::kUsable:
        weight += 1.0;
        break;
      case QualityLabel::kReject:
        break;
    }
  }
  const auto n = static_cast<double>(labels.records.size());
  return {static_cast<double>(good) / n, weight / n};
}

PairReport evaluate_pairs(const std::filesystem::path& pred_dir, const std::filesystem::path& ref_dir) {
  return evaluate_dirs(pred_dir, ref_dir, [](const auto& p, const auto& r) {
    const Raster a = image_io::decode_file(p);
    const Raster b = image_io::decode_file(r);
    return std::pair{ssim(a, b), psnr(a, b)};
  });
}

PairReport evaluate_mask_pairs(const std::filesystem::path& pred_dir, const std::filesystem::path& ref_dir) {
  return evaluate_dirs(pred_dir, ref_dir, [](const auto& p, const auto& r) {
    const auto o = overlap_metrics(mask_from_raster(image_io::decode_file(p)), mask_from_raster(image_io::decode_file(r)));
    return std::pair{o.iou, o.dsc};
  });
}

void write_report_csv(const PairReport& report, const std::string& first_name, const std::string& second_name,
                      std::ostream& out) {
  out << "id," << first_name << ',' << second_name << '\n';
  out << std::setprecision(10);
  for (const auto& r : report.rows) out << r.id << ',' << r.first << ',' << r.second << '\n';
  out << report.mean.id << ',' << report.mean.first << ',' << report.mean.second << '\n';
}

}  // namespace pcenet::evaluation
