#pragma once

// Segmentation quality metrics against ground-truth labels plus dynamics
// probes: permutation-matched accuracy, normalized mutual information,
// boundary F1, option sensitivity of the dynamics model, and the segment
// pipeline that runs greedy inference over a dataset.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "podnet/data.hpp"
#include "podnet/jsonio.hpp"
#include "podnet/latent.hpp"
#include "podnet/model.hpp"
#include "podnet/rng.hpp"
#include "podnet/training.hpp"

namespace podnet::eval {

constexpr std::int64_t kBoundaryTolerance = 1;  // downsampled steps

namespace detail {

// Remaps arbitrary integer labels onto 0..n-1 in order of first appearance.
inline std::vector<std::size_t> dense_labels(const std::vector<int>& labels) {
  std::map<int, std::size_t> ids;
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (const int label : labels) out.push_back(ids.emplace(label, ids.size()).first->second);
  return out;
}

// Maximum-weight injective assignment of rows to columns, Hungarian method
// with potentials on the square-padded matrix.
inline double max_assignment_value(const std::vector<std::vector<double>>& weight) {
  const std::size_t rows = weight.size();
  const std::size_t cols = rows == 0 ? 0 : weight[0].size();
  const std::size_t n = std::max(rows, cols);
  if (n == 0) return 0.0;
  constexpr double kInf = std::numeric_limits<double>::infinity();

  std::vector<std::vector<double>> cost(n + 1, std::vector<double>(n + 1, 0.0));
  for (std::size_t i = 1; i <= rows; ++i)
    for (std::size_t j = 1; j <= cols; ++j) cost[i][j] = -weight[i - 1][j - 1];

  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      std::size_t j1 = 0;
      double delta = kInf;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0][j] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  double total = 0.0;
  for (std::size_t j = 1; j <= cols; ++j) {
    const std::size_t i = match[j];
    if (i >= 1 && i <= rows) total += weight[i - 1][j - 1];
  }
  return total;
}

inline double entropy_from_counts(const std::vector<double>& counts, double n) {
  double h = 0.0;
  for (const double c : counts)
    if (c > 0.0) {
      const double p = c / n;
      h -= p * std::log(p);
    }
  return h;
}

// Greedy one-to-one matching of two ascending boundary lists within +-tol;
// returns {matched, predicted, true} counts.
inline std::array<std::size_t, 3> boundary_matches(std::vector<std::size_t> true_bounds,
                                                   std::vector<std::size_t> pred_bounds, std::int64_t tol) {
  if (tol < 0) throw std::invalid_argument("boundary_f1: negative tolerance");
  std::sort(true_bounds.begin(), true_bounds.end());
  std::sort(pred_bounds.begin(), pred_bounds.end());
  std::size_t matched = 0, i = 0, j = 0;
  while (i < true_bounds.size() && j < pred_bounds.size()) {
    const auto a = static_cast<std::int64_t>(true_bounds[i]);
    const auto b = static_cast<std::int64_t>(pred_bounds[j]);
    if (std::llabs(a - b) <= tol) {
      ++matched;
      ++i;
      ++j;
    } else if (a < b) {
      ++i;
    } else {
      ++j;
    }
  }
  return {matched, pred_bounds.size(), true_bounds.size()};
}

inline double f1_from_counts(const std::array<std::size_t, 3>& counts) {
  const auto [matched, n_pred, n_true] = counts;
  if (n_pred == 0 && n_true == 0) return 1.0;
  if (matched == 0) return 0.0;
  const double precision = static_cast<double>(matched) / static_cast<double>(n_pred);
  const double recall = static_cast<double>(matched) / static_cast<double>(n_true);
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace detail

// Fraction of positions that agree under the best injective mapping from
// predicted label values to true label values.
inline double matched_accuracy(const std::vector<int>& true_labels, const std::vector<int>& pred_labels) {
  if (true_labels.size() != pred_labels.size())
    throw std::invalid_argument("matched_accuracy: length mismatch");
  if (true_labels.empty()) throw std::invalid_argument("matched_accuracy: empty input");
  const std::vector<std::size_t> t = detail::dense_labels(true_labels);
  const std::vector<std::size_t> p = detail::dense_labels(pred_labels);
  const std::size_t kt = 1 + *std::max_element(t.begin(), t.end());
  const std::size_t kp = 1 + *std::max_element(p.begin(), p.end());
  std::vector<std::vector<double>> confusion(kp, std::vector<double>(kt, 0.0));
  for (std::size_t i = 0; i < t.size(); ++i) confusion[p[i]][t[i]] += 1.0;
  return detail::max_assignment_value(confusion) / static_cast<double>(t.size());
}

// I(a;b) / sqrt(H(a) H(b)) with natural logarithms; zero by convention when
// either marginal entropy vanishes.
inline double normalized_mutual_information(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("normalized_mutual_information: length mismatch");
  if (a.empty()) throw std::invalid_argument("normalized_mutual_information: empty input");
  const std::vector<std::size_t> da = detail::dense_labels(a);
  const std::vector<std::size_t> db = detail::dense_labels(b);
  const std::size_t ka = 1 + *std::max_element(da.begin(), da.end());
  const std::size_t kb = 1 + *std::max_element(db.begin(), db.end());
  std::vector<std::vector<double>> joint(ka, std::vector<double>(kb, 0.0));
  std::vector<double> ca(ka, 0.0), cb(kb, 0.0);
  for (std::size_t i = 0; i < da.size(); ++i) {
    joint[da[i]][db[i]] += 1.0;
    ca[da[i]] += 1.0;
    cb[db[i]] += 1.0;
  }
  const double n = static_cast<double>(a.size());
  const double ha = detail::entropy_from_counts(ca, n);
  const double hb = detail::entropy_from_counts(cb, n);
  if (ha == 0.0 || hb == 0.0) return 0.0;
  double info = 0.0;
  for (std::size_t i = 0; i < ka; ++i)
    for (std::size_t j = 0; j < kb; ++j)
      if (joint[i][j] > 0.0) {
        const double p = joint[i][j] / n;
        info += p * std::log(p * n * n / (ca[i] * cb[j]));
      }
  return std::clamp(info / std::sqrt(ha * hb), 0.0, 1.0);
}

// Positions where the label changes relative to the previous step.
inline std::vector<std::size_t> label_boundaries(const std::vector<int>& labels) {
  std::vector<std::size_t> out;
  for (std::size_t t = 1; t < labels.size(); ++t)
    if (labels[t] != labels[t - 1]) out.push_back(t);
  return out;
}

inline double boundary_f1(const std::vector<std::size_t>& true_bounds, const std::vector<std::size_t>& pred_bounds,
                          std::int64_t tol) {
  return detail::f1_from_counts(detail::boundary_matches(true_bounds, pred_bounds, tol));
}

// Ratio of the mean one-step dynamics error under per-step randomly permuted
// labels to the error under greedily inferred labels. A model whose dynamics
// ignore the option scores exactly 1. The probe draws its permutations from a
// fixed stream so repeated calls agree.
inline double dynamics_option_sensitivity(const training::Checkpoint& ckpt, const data::Dataset& dataset) {
  if (dataset.trajectories.empty())
    throw std::invalid_argument("dynamics_option_sensitivity: empty dataset");
  const model::PodnetParams p = training::model_from_checkpoint(ckpt);
  const data::Dataset ds =
      data::apply_normalization(data::downsample(dataset, ckpt.config.stride), ckpt.norm);

  SplitRng perm_rng(0);
  SplitRng greedy_rng(0);  // greedy inference draws nothing
  std::vector<std::size_t> perm(p.k);
  double inferred = 0.0, permuted = 0.0;
  std::size_t steps = 0;
  for (const auto& traj : ds.trajectories) {
    const model::OptionAssignment assign =
        model::infer_options(p, traj.states, 1.0, greedy_rng, model::InferMode::kGreedy);
    const std::size_t t_count = traj.states.size() - 1;
    for (std::size_t t = 0; t < t_count; ++t) {
      const std::size_t label = latent::argmax(assign.labels[t].hard);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      perm_rng.shuffle(perm);
      const std::vector<double> shuffled = latent::one_hot(perm[label], p.k);

      const std::vector<double> a = model::dynamics_predict(p, traj.states[t], assign.labels[t]);
      const std::vector<double> b = model::dynamics_predict(p, traj.states[t], {shuffled, shuffled});
      for (std::size_t i = 0; i < p.d; ++i) {
        const double ea = a[i] - traj.states[t + 1][i];
        const double eb = b[i] - traj.states[t + 1][i];
        inferred += ea * ea;
        permuted += eb * eb;
      }
      ++steps;
    }
  }
  inferred /= static_cast<double>(steps);
  permuted /= static_cast<double>(steps);
  if (inferred == 0.0) throw std::runtime_error("dynamics_option_sensitivity: zero baseline error");
  return permuted / inferred;
}

struct TrajectorySegments {
  std::string id;
  std::vector<int> labels;  // hard option per downsampled step
};

struct TrajectoryScore {
  std::string id;
  double matched_accuracy = 0.0;
  double nmi = 0.0;
  double boundary_f1 = 0.0;
};

struct SegmentationReport {
  double matched_accuracy = 0.0;  // pooled over all labeled trajectories
  double nmi = 0.0;
  double boundary_f1 = 0.0;
  std::vector<TrajectoryScore> per_trajectory;
};

struct SegmentationResult {
  std::vector<TrajectorySegments> segments;
  std::optional<SegmentationReport> report;  // present when any trajectory carries ground truth
};

// Greedy-mode segmentation with the checkpoint's own preprocessing. Pooled
// metrics use a single label mapping across trajectories since discovered
// option ids are globally consistent; boundary F1 is micro-averaged from
// per-trajectory match counts.
inline SegmentationResult segment(const training::Checkpoint& ckpt, const data::Dataset& dataset) {
  const model::PodnetParams p = training::model_from_checkpoint(ckpt);
  const data::Dataset ds =
      data::apply_normalization(data::downsample(dataset, ckpt.config.stride), ckpt.norm);

  SplitRng rng(0);
  SegmentationResult out;
  out.segments.reserve(ds.trajectories.size());
  std::vector<int> pooled_true, pooled_pred;
  std::array<std::size_t, 3> bounds{0, 0, 0};
  std::vector<TrajectoryScore> scores;
  for (const auto& traj : ds.trajectories) {
    const model::OptionAssignment assign =
        model::infer_options(p, traj.states, 1.0, rng, model::InferMode::kGreedy);
    TrajectorySegments seg;
    seg.id = traj.id;
    seg.labels.reserve(assign.labels.size());
    for (const auto& label : assign.labels)
      seg.labels.push_back(static_cast<int>(latent::argmax(label.hard)));

    if (!traj.true_labels.empty()) {
      TrajectoryScore score;
      score.id = traj.id;
      score.matched_accuracy = matched_accuracy(traj.true_labels, seg.labels);
      score.nmi = normalized_mutual_information(traj.true_labels, seg.labels);
      const auto matches = detail::boundary_matches(label_boundaries(traj.true_labels),
                                                    label_boundaries(seg.labels), kBoundaryTolerance);
      score.boundary_f1 = detail::f1_from_counts(matches);
      scores.push_back(std::move(score));
      for (std::size_t i = 0; i < 3; ++i) bounds[i] += matches[i];
      pooled_true.insert(pooled_true.end(), traj.true_labels.begin(), traj.true_labels.end());
      pooled_pred.insert(pooled_pred.end(), seg.labels.begin(), seg.labels.end());
    }
    out.segments.push_back(std::move(seg));
  }

  if (!pooled_true.empty()) {
    SegmentationReport report;
    report.matched_accuracy = matched_accuracy(pooled_true, pooled_pred);
    report.nmi = normalized_mutual_information(pooled_true, pooled_pred);
    report.boundary_f1 = detail::f1_from_counts(bounds);
    report.per_trajectory = std::move(scores);
    out.report = std::move(report);
  }
  return out;
}

inline std::string segments_to_jsonl(const std::vector<TrajectorySegments>& segments) {
  std::string out;
  for (const auto& seg : segments) {
    jsonio::Writer w;
    w.begin_object();
    w.key("id");
    w.string(seg.id);
    w.key("labels");
    w.begin_array();
    for (const int label : seg.labels) w.integer(label);
    w.end_array();
    w.end_object();
    out += w.take();
    out += '\n';
  }
  return out;
}

inline void save_segments(const std::vector<TrajectorySegments>& segments, const std::string& path) {
  jsonio::write_file(path, segments_to_jsonl(segments));
}

inline std::string report_to_json(const SegmentationReport& report) {
  jsonio::Writer w;
  w.begin_object();
  w.key("matched_accuracy");
  w.number(report.matched_accuracy);
  w.key("nmi");
  w.number(report.nmi);
  w.key("boundary_f1");
  w.number(report.boundary_f1);
  w.key("per_trajectory");
  w.begin_array();
  for (const auto& score : report.per_trajectory) {
    w.begin_object();
    w.key("id");
    w.string(score.id);
    w.key("matched_accuracy");
    w.number(score.matched_accuracy);
    w.key("nmi");
    w.number(score.nmi);
    w.key("boundary_f1");
    w.number(score.boundary_f1);
    w.end_object();
  }
  w.end_array();
  w.end_object();
  return w.take();
}

inline void save_report(const SegmentationReport& report, const std::string& path) {
  jsonio::write_file(path, report_to_json(report));
}

}  // namespace podnet::eval
