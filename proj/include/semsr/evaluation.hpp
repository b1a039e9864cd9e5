#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "semsr/config.hpp"
#include "semsr/dataset.hpp"
#include "semsr/metrics.hpp"
#include "semsr/models.hpp"

namespace semsr {

enum class Method { kBilinear, kCnn, kGan, kHrReference };
const char* to_string(Method m);
Method parse_method(const std::string& s);

/// Bilinear interpolation by `scale` (half-pixel centres), clamped to [0,1].
ImageTensor bilinear_baseline(const ImageTensor& lr, int scale);

struct ImageMetrics {
  std::string name;
  double mae = 0;
  double psnr = 0;     // +inf for identical images
  double ssim = 0;
  double ms_ssim = 0;  // NaN when the image is below the multi-scale minimum
  double miou = 0;
  std::vector<std::optional<double>> iou;  // per class, nullopt when the union is empty
};

struct MetricsReport {
  std::string method;
  int scale = 0;
  std::vector<std::string> class_names;
  std::vector<ImageMetrics> images;
  ImageMetrics aggregate;  // means of image metrics; IoU pooled over all images
  IouCounts pooled;
};

/// Image metrics against `hr` and segmentation of F(upsampled) against the
/// exact labels. Every vector holds one (1,H,W,3) image per tile.
MetricsReport evaluate_method(const std::string& method, int scale, const std::vector<ImageTensor>& upsampled,
                              const std::vector<ImageTensor>& hr, const std::vector<LabelMask>& labels,
                              const std::vector<std::string>& tile_names, const Segmenter<float>& f,
                              const std::vector<std::string>& class_names);

/// Versioned CSV: one row per image, aggregate row last.
void write_metrics_csv(const MetricsReport& r, const std::filesystem::path& path);
void write_metrics_summary(const MetricsReport& r, const std::filesystem::path& path);

struct ComparisonRow {
  int scale = 0;
  Method method = Method::kBilinear;
  double psnr = 0;
  double ssim = 0;
  double ms_ssim = 0;
  double miou = 0;
  double pct_vs_cnn = 0;  // mIoU improvement over the CNN row at the same scale
};

struct ClasswiseRow {
  std::string class_name;
  std::optional<double> iou_cnn;
  std::optional<double> iou_gan;
  std::optional<double> pct;  // undefined when either IoU is undefined or the CNN IoU is zero
};

/// Rows for one scale from the four method reports.
std::vector<ComparisonRow> comparison_rows(int scale, const MetricsReport& bilinear, const MetricsReport& cnn,
                                           const MetricsReport& gan, const MetricsReport& hr);

/// Per-class IoU of both methods with percentage improvement; defined rows
/// ordered by improvement (descending), undefined rows last.
std::vector<ClasswiseRow> classwise_report(const MetricsReport& gan, const MetricsReport& cnn);

/// Mean improvement over the named classes whose row is defined.
std::optional<double> mean_improvement(const std::vector<ClasswiseRow>& rows, const std::vector<std::string>& names);

void write_comparison_csv(const std::vector<ComparisonRow>& rows, const std::filesystem::path& path);
std::vector<ComparisonRow> read_comparison_csv(const std::filesystem::path& path);
void write_classwise_csv(const std::vector<ClasswiseRow>& rows, const std::filesystem::path& path);
std::vector<ClasswiseRow> read_classwise_csv(const std::filesystem::path& path);

/// Bar chart of class-wise improvement and mIoU-versus-scale figure, each as
/// PNG and SVG, plus the CSVs they are drawn from. Returns the files written.
std::vector<std::filesystem::path> emit_plots(const std::vector<ComparisonRow>& rows,
                                              const std::vector<std::pair<int, std::vector<ClasswiseRow>>>& classwise,
                                              const std::filesystem::path& out_dir);

// ---------------------------------------------------------------------------
// Pipeline entry points.

struct ScaleEvaluation {
  int scale = 0;
  MetricsReport bilinear, cnn, gan, hr;
};

/// Resolves checkpoints (config overrides first, then the run layout) and
/// evaluates all four methods on the identical test tiles of each scale.
/// Missing checkpoints raise PrerequisiteError naming the stage.
std::vector<ScaleEvaluation> evaluate_all(const RunConfig& cfg, const RunLayout& layout);

struct ComparisonResult {
  std::vector<ComparisonRow> rows;
  std::vector<std::pair<int, std::vector<ClasswiseRow>>> classwise;
  std::vector<std::filesystem::path> files;
};

ComparisonResult compare_all(const RunConfig& cfg, const RunLayout& layout, const std::filesystem::path& out_dir);

/// Formats doubles for CSV: "inf"/"-inf"/"nan" sentinels, otherwise 17
/// significant digits so values survive a round trip exactly.
std::string csv_number(double v);
double parse_csv_number(const std::string& s);

}  // namespace semsr
