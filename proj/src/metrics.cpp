#include "savvy/metrics.hpp"

#include "savvy/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace savvy::metrics {

using nlohmann::json;

namespace {

void check_increasing(const std::vector<double>& v, const char* name) {
  if (v.empty()) throw Error(std::string(name) + " must not be empty");
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i]) || (i > 0 && !(v[i] > v[i - 1]))) {
      throw Error(std::string(name) + " must be finite and strictly increasing");
    }
  }
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// -1 / 0 / +1 for left / on-axis / right.
int lr_side(double phi) {
  const double a = geometry::normalize_deg(phi);
  if (a == 0.0 || a == -180.0) return 0;
  return a > 0.0 ? 1 : -1;
}

int fb_side(double phi) {
  const double a = std::abs(geometry::normalize_deg(phi));
  if (a == 90.0) return 0;
  return a < 90.0 ? 1 : -1;
}

std::string join_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (const auto& id : ids) out += (out.empty() ? "" : ", ") + id;
  return out;
}

std::string fmt(double v, int prec) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

}  // namespace

std::vector<double> MetricsConfig::thresholds(int count, double denom) {
  std::vector<double> out;
  for (int k = 1; k <= count; ++k) out.push_back(k / denom);
  return out;
}

void MetricsConfig::validate() const {
  check_increasing(dist_thresholds, "dist_thresholds");
  check_increasing(iou_thresholds, "iou_thresholds");
  if (!(loc_theta_max > 0.0) || !(loc_r_max > 0.0)) throw Error("loc limits must be positive");
}

std::string normalize_text(std::string_view s) {
  std::string out;
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      out.push_back(static_cast<char>(std::tolower(u)));
    } else if (c == '-' || c == '_' || std::isspace(u)) {
      if (!out.empty() && out.back() != ' ') out.push_back(' ');
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

int mcq_score(std::string_view pred, const qa::Option& gt) {
  const std::string p = normalize_text(pred);
  if (p.empty()) return 0;
  return p == normalize_text(gt.letter) || p == normalize_text(gt.text) ? 1 : 0;
}

double distance_score(std::optional<double> pred, double gt, const MetricsConfig& config) {
  if (!std::isfinite(gt) || gt < 0.0) throw Error("distance ground truth must be finite and non-negative");
  if (!pred || !std::isfinite(*pred)) return 0.0;
  const double err = std::abs(*pred - gt);
  // Absorbs binary rounding of decimal inputs such as |4.7 - 4.0| vs 0.7.
  constexpr double kSlack = 1e-9;
  std::size_t hits = 0;
  for (double tau : config.dist_thresholds) hits += err <= tau + kSlack ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(config.dist_thresholds.size());
}

double interval_iou(fusion::Span a, fusion::Span b) {
  if (!(a.start < a.end) || !(b.start < b.end)) throw Error("interval_iou: intervals need start < end");
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = (a.end - a.start) + (b.end - b.start) - inter;
  return inter / uni;
}

TemporalRecall t_miou(const std::vector<fusion::Span>& preds, const std::vector<fusion::Span>& gts,
                      const MetricsConfig& config) {
  if (preds.size() != gts.size()) {
    throw Error("t_miou: " + std::to_string(preds.size()) + " predictions vs " + std::to_string(gts.size()) +
                " ground truths");
  }
  if (preds.empty()) throw Error("t_miou: no intervals");
  std::vector<double> ious;
  for (std::size_t i = 0; i < preds.size(); ++i) ious.push_back(interval_iou(preds[i], gts[i]));
  TemporalRecall out;
  out.thresholds = config.iou_thresholds;
  for (double tau : config.iou_thresholds) {
    const auto hits = std::count_if(ious.begin(), ious.end(), [&](double v) { return v >= tau; });
    out.recall.push_back(static_cast<double>(hits) / static_cast<double>(ious.size()));
  }
  out.t_miou = mean(out.recall);
  return out;
}

LocResult loc_accuracy(const geometry::EgoObservation& pred, const geometry::EgoObservation& gt,
                       const MetricsConfig& config) {
  LocResult r;
  r.theta_err = geometry::angular_distance(pred.theta, gt.theta);
  r.r_err = std::abs(pred.r - gt.r);
  r.correct = r.theta_err < config.loc_theta_max && r.r_err < config.loc_r_max;
  return r;
}

SideResult lr_fb_accuracy(double pred_phi, double gt_phi) {
  const int glr = lr_side(gt_phi), gfb = fb_side(gt_phi);
  return {glr == 0 || lr_side(pred_phi) == glr, gfb == 0 || fb_side(pred_phi) == gfb};
}

std::string_view to_string(Column c) {
  switch (c) {
    case Column::kEgoDir: return "ego_dir";
    case Column::kEgoDist: return "ego_dist";
    case Column::kAlloDir: return "allo_dir";
    case Column::kAlloDist: return "allo_dist";
  }
  return "ego_dir";
}

Column column_of(qa::Kind k) {
  switch (k) {
    case qa::Kind::kEgoDirSimple:
    case qa::Kind::kEgoDirHard: return Column::kEgoDir;
    case qa::Kind::kEgoDist: return Column::kEgoDist;
    case qa::Kind::kAlloDirSimple:
    case qa::Kind::kAlloDirHard: return Column::kAlloDir;
    case qa::Kind::kAlloDist: return Column::kAlloDist;
  }
  return Column::kEgoDir;
}

EvalReport evaluate_run(const std::vector<qa::Question>& questions, const std::vector<qa::Answer>& predictions,
                        const std::vector<qa::Answer>& gts, const MetricsConfig& config) {
  config.validate();
  if (predictions.empty()) throw Error("evaluate_run: no predictions");
  std::map<std::string, const qa::Question*> qmap;
  for (const auto& q : questions) qmap[q.id] = &q;
  std::map<std::string, const qa::Answer*> pmap, gmap;
  for (const auto& p : predictions) pmap[p.id] = &p;
  for (const auto& g : gts) gmap[g.id] = &g;

  std::vector<std::string> unknown, missing_gt;
  for (const auto& p : predictions) {
    if (!qmap.count(p.id)) unknown.push_back(p.id);
  }
  if (!unknown.empty()) throw Error("evaluate_run: predictions for unknown question ids: " + join_ids(unknown));
  for (const auto& q : questions) {
    if (!gmap.count(q.id)) missing_gt.push_back(q.id);
  }
  if (!missing_gt.empty()) throw Error("evaluate_run: no ground truth for: " + join_ids(missing_gt));

  EvalReport report;
  report.config = config;
  std::map<qa::Kind, std::vector<double>> by_kind;
  std::map<Column, std::vector<double>> by_column;
  for (const auto& q : questions) {
    const qa::Answer& gt = *gmap.at(q.id);
    const auto pit = pmap.find(q.id);
    const qa::Answer* pred = pit == pmap.end() ? nullptr : pit->second;
    ItemScore item;
    item.id = q.id;
    item.kind = q.kind;
    if (qa::is_direction(q.kind)) {
      if (!gt.label) throw Error("evaluate_run: ground truth for " + q.id + " has no label");
      const auto choices = q.choices();
      const auto opt = std::find_if(choices.begin(), choices.end(), [&](const qa::Option& o) {
        return o.letter == *gt.label || normalize_text(o.text) == normalize_text(*gt.label);
      });
      if (opt == choices.end()) throw Error("evaluate_run: ground truth label of " + q.id + " is not an option");
      item.truth = opt->letter;
      item.prediction = pred && pred->label ? *pred->label : "";
      item.score = mcq_score(item.prediction, *opt);
    } else {
      if (!gt.meters) throw Error("evaluate_run: ground truth for " + q.id + " has no distance");
      const auto pm = pred ? pred->meters : std::nullopt;
      item.truth = fmt(*gt.meters, 2);
      item.prediction = pm ? fmt(*pm, 2) : "";
      item.score = distance_score(pm, *gt.meters, config);
    }
    by_kind[q.kind].push_back(item.score);
    by_column[column_of(q.kind)].push_back(item.score);
    report.items.push_back(std::move(item));
  }
  for (const auto& [k, v] : by_kind) report.per_kind[k] = {mean(v), v.size()};
  std::vector<double> cols;
  for (const auto& [c, v] : by_column) {
    report.per_column[c] = {mean(v), v.size()};
    cols.push_back(mean(v));
  }
  report.overall = mean(cols);
  report.count = report.items.size();
  return report;
}

std::string format_report(const EvalReport& report, const std::string& method) {
  const Column order[] = {Column::kEgoDir, Column::kEgoDist, Column::kAlloDir, Column::kAlloDist};
  std::ostringstream os;
  os << std::left << std::setw(16) << "" << std::setw(18) << "Egocentric" << std::setw(18) << "Allocentric" << '\n';
  os << std::setw(16) << "Method" << std::setw(9) << "Dir" << std::setw(9) << "Dist" << std::setw(9) << "Dir"
     << std::setw(9) << "Dist" << "overall\n";
  os << std::setw(16) << method;
  for (auto c : order) {
    const auto it = report.per_column.find(c);
    os << std::setw(9) << (it == report.per_column.end() ? "-" : fmt(100.0 * it->second.accuracy, 1));
  }
  os << fmt(100.0 * report.overall, 1) << '\n';
  os << std::setw(16) << "n";
  for (auto c : order) {
    const auto it = report.per_column.find(c);
    os << std::setw(9) << (it == report.per_column.end() ? 0 : it->second.count);
  }
  os << report.count << '\n';
  return os.str();
}

json to_json(const EvalReport& report) {
  json kinds = json::object(), cols = json::object();
  for (const auto& [k, s] : report.per_kind) kinds[std::string(qa::to_string(k))] = {{"accuracy", s.accuracy}, {"count", s.count}};
  for (const auto& [c, s] : report.per_column) cols[std::string(to_string(c))] = {{"accuracy", s.accuracy}, {"count", s.count}};
  return {{"per_kind", kinds},
          {"per_column", cols},
          {"overall", report.overall},
          {"count", report.count},
          {"config",
           {{"dist_thresholds", report.config.dist_thresholds},
            {"iou_thresholds", report.config.iou_thresholds},
            {"loc_theta_max", report.config.loc_theta_max},
            {"loc_r_max", report.config.loc_r_max}}}};
}

std::vector<json> item_log(const EvalReport& report) {
  std::vector<json> out;
  for (const auto& i : report.items) {
    out.push_back({{"id", i.id},
                   {"kind", qa::to_string(i.kind)},
                   {"prediction", i.prediction},
                   {"truth", i.truth},
                   {"score", i.score}});
  }
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error("percentile of an empty set");
  if (!(q >= 0.0 && q <= 100.0)) throw Error("percentile must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

DoaReport evaluate_doa(const std::vector<DoaSample>& samples) {
  if (samples.empty()) throw Error("evaluate_doa: no samples");
  std::vector<double> errs;
  std::size_t lr = 0, fb = 0;
  for (const auto& s : samples) {
    errs.push_back(geometry::angular_distance(s.pred, s.gt));
    const auto side = lr_fb_accuracy(s.pred, s.gt);
    lr += side.lr ? 1 : 0;
    fb += side.fb ? 1 : 0;
  }
  DoaReport r;
  r.count = samples.size();
  r.median_error = percentile(errs, 50.0);
  r.p95_error = percentile(errs, 95.0);
  r.mean_error = mean(errs);
  r.lr_accuracy = static_cast<double>(lr) / static_cast<double>(r.count);
  r.fb_accuracy = static_cast<double>(fb) / static_cast<double>(r.count);
  return r;
}

json to_json(const DoaReport& r) {
  return {{"count", r.count},         {"median_error_deg", r.median_error}, {"p95_error_deg", r.p95_error},
          {"mean_error_deg", r.mean_error}, {"lr_accuracy", r.lr_accuracy},     {"fb_accuracy", r.fb_accuracy}};
}

}  // namespace savvy::metrics
