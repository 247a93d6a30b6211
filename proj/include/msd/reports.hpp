// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <string>
#include <vector>

#include "msd/csv.hpp"
#include "msd/data.hpp"
#include "msd/errors.hpp"
#include "msd/meta_opt.hpp"
#include "msd/metrics.hpp"
#include "msd/net.hpp"
#include "msd/prob.hpp"
#include "msd/weighting.hpp"

namespace msd {

inline constexpr std::array<ModalityView, 3> kAllViews = {
    ModalityView::kMulti, ModalityView::kImageOnly, ModalityView::kTextOnly};

// ---------------------------------------------------------------------------
// Teacher-student prediction gap
// ---------------------------------------------------------------------------

/// Mean KL(teacher, model) at temperature 1 over the test split, one value
/// per modality view. Lower means the model tracks the teacher more closely
/// on that view.
struct GapReport {
  double multi = 0.0;
  double image = 0.0;
  double text = 0.0;

  double view(ModalityView v) const {
    switch (v) {
      case ModalityView::kMulti: return multi;
      case ModalityView::kImageOnly: return image;
      default: return text;
    }
  }
};

inline GapReport gap_report(const DenseNet& teacher, const DenseNet& model,
                            const std::vector<MultimodalSample>& data,
                            Split split = Split::kTest) {
  GapReport report;
  std::array<double, 3> sums{0.0, 0.0, 0.0};
  std::int64_t count = 0;
  for (const MultimodalSample& s : data) {
    if (s.split != split) continue;
    ++count;
    for (std::size_t v = 0; v < kAllViews.size(); ++v) {
      const std::vector<double> x = apply_view(s, kAllViews[v]);
      sums[v] += kl_div(softmax_temp(forward(teacher, x), 1.0),
                        softmax_temp(forward(model, x), 1.0));
    }
  }
  if (count == 0) throw ParamError("empty split for gap report");
  report.multi = sums[0] / static_cast<double>(count);
  report.image = sums[1] / static_cast<double>(count);
  report.text = sums[2] / static_cast<double>(count);
  return report;
}

inline void write_gap_csv(const std::string& path,
                          const std::vector<std::pair<std::string, GapReport>>& rows) {
  CsvWriter csv(path, {"method", "view", "mean_kl"});
  for (const auto& [method, report] : rows)
    for (ModalityView v : kAllViews) {
      csv.cell(method).cell(view_name(v)).cell(report.view(v));
      csv.end_row();
    }
}

// ---------------------------------------------------------------------------
// Output density histograms (binary tasks)
// ---------------------------------------------------------------------------

inline constexpr int kDensityBins = 50;

/// 50-bin histogram of the predicted probability of class 1 over a test
/// subset, per (model, view). Binary tasks only.
struct DensityReport {
  std::string model;
  std::array<std::vector<std::int64_t>, 3> bins;  // per view, kDensityBins counts
};

inline DensityReport density_report(const std::string& name, const DenseNet& model,
                                    const std::vector<MultimodalSample>& data, Split split,
                                    int label_filter = -1) {
  DensityReport report;
  report.model = name;
  for (auto& b : report.bins) b.assign(kDensityBins, 0);
  if (model.output_dim() != 2)
    throw ParamError("density report requires a binary task (2 classes)");
  for (const MultimodalSample& s : data) {
    if (s.split != split) continue;
    if (label_filter >= 0 && s.label.class_index != label_filter) continue;
    for (std::size_t v = 0; v < kAllViews.size(); ++v) {
      const SoftPrediction p =
          softmax_temp(forward(model, apply_view(s, kAllViews[v])), 1.0);
      const int bin = std::min(kDensityBins - 1,
                               static_cast<int>(p.probs[1] * kDensityBins));
      ++report.bins[v][bin];
    }
  }
  return report;
}

inline void write_density_csv(const std::string& path,
                              const std::vector<DensityReport>& reports) {
  CsvWriter csv(path, {"model", "view", "bin_lo", "bin_hi", "count"});
  for (const DensityReport& r : reports)
    for (std::size_t v = 0; v < kAllViews.size(); ++v)
      for (int b = 0; b < kDensityBins; ++b) {
        csv.cell(r.model)
            .cell(view_name(kAllViews[v]))
            .cell(static_cast<double>(b) / kDensityBins)
            .cell(static_cast<double>(b + 1) / kDensityBins)
            .cell(r.bins[v][b]);
        csv.end_row();
      }
}

// ---------------------------------------------------------------------------
// Meta-net weight-function heatmap (binary tasks)
// ---------------------------------------------------------------------------

inline constexpr int kHeatmapSteps = 101;  // 0.00, 0.01, ..., 1.00

/// Slices the learned weight function at a fully confident multi-view
/// prediction: grid point (y, z) maps to meta-net inputs
/// ([0,1], [1-y, y], [1-z, z]). Binary tasks only.
struct HeatmapCell {
  double y = 0.0, z = 0.0;
  ModalityWeights weights;
};

inline std::vector<HeatmapCell> heatmap_report(const MetaNet& meta) {
  if (meta.body.input_dim() != 6)
    throw ParamError("heatmap report requires a binary task (2 classes)");
  std::vector<HeatmapCell> cells;
  cells.reserve(kHeatmapSteps * kHeatmapSteps);
  for (int yi = 0; yi < kHeatmapSteps; ++yi) {
    const double y = static_cast<double>(yi) / (kHeatmapSteps - 1);
    for (int zi = 0; zi < kHeatmapSteps; ++zi) {
      const double z = static_cast<double>(zi) / (kHeatmapSteps - 1);
      const std::vector<double> input{0.0, 1.0, 1.0 - y, y, 1.0 - z, z};
      cells.push_back(HeatmapCell{y, z, meta_forward_input(meta, input)});
    }
  }
  return cells;
}

inline void write_heatmap_csv(const std::string& path, const std::vector<HeatmapCell>& cells) {
  CsvWriter csv(path, {"y", "z", "w", "w_v", "w_t"});
  for (const HeatmapCell& c : cells) {
    csv.cell(c.y).cell(c.z).cell(c.weights.w).cell(c.weights.w_v).cell(c.weights.w_t);
    csv.end_row();
  }
}

// ---------------------------------------------------------------------------
// Per-sample modality dominance scatter
// ---------------------------------------------------------------------------

/// Teacher probabilities for the multi-view argmax class under each view,
/// one row per test sample, ordered by the multi-view probability. The
/// generator's ground-truth dominance rides along for correlation checks.
struct ScatterRow {
  std::int64_t id = 0;
  double dominance = 0.0;
  double p_multi = 0.0, p_image = 0.0, p_text = 0.0;
};

inline std::vector<ScatterRow> dominance_scatter(const DenseNet& teacher,
                                                 const std::vector<MultimodalSample>& data,
                                                 Split split = Split::kTest) {
  std::vector<ScatterRow> rows;
  for (const MultimodalSample& s : data) {
    if (s.split != split) continue;
    const SoftPrediction multi =
        softmax_temp(forward(teacher, apply_view(s, ModalityView::kMulti)), 1.0);
    const int k = argmax_lowest(multi.probs);
    const SoftPrediction image =
        softmax_temp(forward(teacher, apply_view(s, ModalityView::kImageOnly)), 1.0);
    const SoftPrediction text =
        softmax_temp(forward(teacher, apply_view(s, ModalityView::kTextOnly)), 1.0);
    rows.push_back(ScatterRow{s.id, s.dominance, multi.probs[k], image.probs[k], text.probs[k]});
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ScatterRow& a, const ScatterRow& b) { return a.p_multi < b.p_multi; });
  return rows;
}

inline void write_scatter_csv(const std::string& path, const std::vector<ScatterRow>& rows) {
  CsvWriter csv(path, {"id", "dominance", "p_multi", "p_image", "p_text"});
  for (const ScatterRow& r : rows) {
    csv.cell(r.id).cell(r.dominance).cell(r.p_multi).cell(r.p_image).cell(r.p_text);
    csv.end_row();
  }
}

// ---------------------------------------------------------------------------
// Trace and metrics CSV
// ---------------------------------------------------------------------------

inline void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
  CsvWriter csv(path, {"iteration", "student_loss", "meta_loss", "meta_grad_norm", "test_acc"});
  for (const TraceRow& row : trace) {
    csv.cell(row.iteration)
        .cell(row.student_loss)
        .cell(row.meta_loss)
        .cell(row.meta_grad_norm)
        .cell(row.test_acc);
    csv.end_row();
  }
}

struct MetricsRow {
  std::string method;
  std::uint64_t seed = 0;
  Split split = Split::kTest;
  Metrics metrics;
};

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  CsvWriter csv(path, {"method", "seed", "split", "accuracy", "auc", "macro_f1", "micro_f1"});
  for (const MetricsRow& r : rows) {
    csv.cell(r.method)
        .cell(static_cast<std::int64_t>(r.seed))
        .cell(split_name(r.split))
        .cell(r.metrics.accuracy)
        .cell(r.metrics.auc)
        .cell(r.metrics.macro_f1)
        .cell(r.metrics.micro_f1);
    csv.end_row();
  }
}

}  // namespace msd
