#pragma once

// Benchmark scoring: MCQ matching, threshold-averaged distance accuracy,
// temporal IoU recall, localization accuracy, DoA side accuracy, and the
// run-level report.

#include "savvy/fusion.hpp"
#include "savvy/geometry.hpp"
#include "savvy/qa.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace savvy::metrics {

struct MetricsConfig {
  std::vector<double> dist_thresholds = thresholds(10, 10.0);
  std::vector<double> iou_thresholds = thresholds(10, 20.0);
  double loc_theta_max = 45.0;
  double loc_r_max = 1.0;

  /// Throws Error unless both threshold lists are non-empty and strictly
  /// increasing and the loc limits are positive.
  void validate() const;

  /// {1/denom, 2/denom, ..., count/denom}, each computed by one division.
  static std::vector<double> thresholds(int count, double denom);
};

/// Lowercase, punctuation dropped, hyphens and whitespace collapsed to one
/// space.
std::string normalize_text(std::string_view s);

/// 1 when `pred` equals the option's letter or text after normalization.
int mcq_score(std::string_view pred, const qa::Option& gt);

/// Fraction of thresholds tau with |pred - gt| <= tau; 0 for a missing or
/// non-finite prediction. Throws Error for a negative or non-finite gt.
double distance_score(std::optional<double> pred, double gt, const MetricsConfig& config = {});

/// Throws Error when either interval has start >= end.
double interval_iou(fusion::Span a, fusion::Span b);

struct TemporalRecall {
  std::vector<double> thresholds;
  std::vector<double> recall;
  double t_miou = 0.0;
};

/// Recall@1 per IoU threshold (IoU >= tau) and its mean. Throws Error on a
/// length mismatch or empty input.
TemporalRecall t_miou(const std::vector<fusion::Span>& preds, const std::vector<fusion::Span>& gts,
                      const MetricsConfig& config = {});

struct LocResult {
  bool correct = false;
  double theta_err = 0.0;
  double r_err = 0.0;
};

/// Correct iff theta_err < loc_theta_max and r_err < loc_r_max.
LocResult loc_accuracy(const geometry::EgoObservation& pred, const geometry::EgoObservation& gt,
                       const MetricsConfig& config = {});

struct SideResult {
  bool lr = false;
  bool fb = false;
};

/// Left/right and front/back agreement. A ground truth lying exactly on the
/// axis that separates a pair scores that component as correct.
SideResult lr_fb_accuracy(double pred_phi, double gt_phi);

/// Table column a question kind is reported under.
enum class Column { kEgoDir, kEgoDist, kAlloDir, kAlloDist };
std::string_view to_string(Column c);
Column column_of(qa::Kind k);

struct ItemScore {
  std::string id;
  qa::Kind kind = qa::Kind::kEgoDirSimple;
  double score = 0.0;
  std::string prediction;
  std::string truth;
};

struct ColumnScore {
  double accuracy = 0.0;
  std::size_t count = 0;
};

struct EvalReport {
  std::map<qa::Kind, ColumnScore> per_kind;
  std::map<Column, ColumnScore> per_column;
  /// Mean over the columns that have at least one question.
  double overall = 0.0;
  std::size_t count = 0;
  std::vector<ItemScore> items;
  MetricsConfig config;
};

/// Scores every question. Predictions without a matching question are an
/// error; a question without a prediction scores 0. Throws Error listing the
/// offending ids when ground truth is missing or predictions are unknown, and
/// when there are no predictions at all.
EvalReport evaluate_run(const std::vector<qa::Question>& questions, const std::vector<qa::Answer>& predictions,
                        const std::vector<qa::Answer>& gts, const MetricsConfig& config = {});

/// Table-style text: one header row, one row of percentages, counts below.
std::string format_report(const EvalReport& report, const std::string& method = "savvy");
nlohmann::json to_json(const EvalReport& report);
/// One JSON object per scored item.
std::vector<nlohmann::json> item_log(const EvalReport& report);

struct DoaSample {
  double t = 0.0;
  double pred = 0.0;
  double gt = 0.0;
};

struct DoaReport {
  std::size_t count = 0;
  double median_error = 0.0;
  double p95_error = 0.0;
  double mean_error = 0.0;
  double lr_accuracy = 0.0;
  double fb_accuracy = 0.0;
};

/// Percentiles use linear interpolation between order statistics. Throws
/// Error on empty input.
DoaReport evaluate_doa(const std::vector<DoaSample>& samples);
double percentile(std::vector<double> values, double q);
nlohmann::json to_json(const DoaReport& report);

}  // namespace savvy::metrics
