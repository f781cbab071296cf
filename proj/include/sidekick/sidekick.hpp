#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sidekick/agent.hpp"
#include "sidekick/loss.hpp"
#include "sidekick/viewgrid.hpp"

namespace sidekick {

// Per-view informativeness scores for one sample, row-major [N, M], in [0, 1]
// with 1 = most informative.
struct ScoreMap {
  std::string sample_id;
  std::vector<float> scores;
};

struct NmsResult {
  std::vector<Pose> poses;
  // True if fewer than k unsuppressed candidates existed and the suppression
  // constraint had to be relaxed to fill the quota.
  bool relaxed = false;
};

// cov[theta * MN + j]: how well observing view theta lets the one-glimpse
// model explain view j. Row-major over theta = e*M+a, normalized to [0, 1]
// over all MN*MN entries, 1 = best.
struct CoverageMatrix {
  std::string sample_id;
  std::vector<float> cov;
};

struct DemoTrajectory {
  std::vector<Pose> poses;            // T
  std::vector<std::size_t> actions;   // T-1, indices into action_space()
  std::vector<double> objectives;     // T, coverage objective after each glimpse
};

// ---------------------------------------------------------------------------
// Reward-based sidekick
// ---------------------------------------------------------------------------

// Scores each view by how well a one-glimpse episode starting there
// reconstructs the whole grid, then min-max normalizes and inverts per sample
// so that low error maps to high score. If all views tie the sample carries
// no preference and every score is 1.
template <typename Real>
ScoreMap info_score(const CompletionModel<Real>& model, const Viewgrid& grid) {
  const auto& g = grid.geometry;
  ScoreMap sm;
  sm.sample_id = grid.id;
  std::vector<double> errs(g.n_views());
  RolloutOptions opts;
  opts.budget = 1;
  ActionSource<Real> src;
  src.kind = ActionSourceKind::agent_argmax;
  Rng dummy(0, "info-score");
  for (std::size_t e = 0; e < g.n_elev; ++e)
    for (std::size_t a = 0; a < g.n_azim; ++a) {
      Pose p{int(e), int(a)};
      auto un = rollout(model, grid, p, opts, src, dummy);
      errs[e * g.n_azim + a] =
          reconstruction_loss(un.log.decoded.back(), grid, p.azim);
    }
  double lo = *std::min_element(errs.begin(), errs.end());
  double hi = *std::max_element(errs.begin(), errs.end());
  sm.scores.resize(errs.size());
  if (hi - lo <= 0.0) {
    std::fill(sm.scores.begin(), sm.scores.end(), 1.0f);
  } else {
    for (std::size_t i = 0; i < errs.size(); ++i)
      sm.scores[i] = float((hi - errs[i]) / (hi - lo));
  }
  return sm;
}

// Greedy non-maximum suppression on the score grid. Picks the best remaining
// view, then suppresses everything within Chebyshev distance `radius`
// (azimuth wrap-aware, elevation plain). Ties break toward the smaller
// (elevation, azimuth) index. If the suppressed grid runs out before k picks,
// the constraint is dropped for the remainder and `relaxed` is set.
NmsResult nms_select(const std::vector<float>& scores, const GridGeometry& geom,
                     std::size_t k, int radius);

// ---------------------------------------------------------------------------
// Demonstration-based sidekick
// ---------------------------------------------------------------------------

template <typename Real>
CoverageMatrix coverage_matrix(const CompletionModel<Real>& model,
                               const Viewgrid& grid) {
  const auto& g = grid.geometry;
  std::size_t mn = g.n_views();
  CoverageMatrix cm;
  cm.sample_id = grid.id;
  std::vector<double> errs(mn * mn);
  RolloutOptions opts;
  opts.budget = 1;
  ActionSource<Real> src;
  src.kind = ActionSourceKind::agent_argmax;
  Rng dummy(0, "coverage");
  for (std::size_t te = 0; te < g.n_elev; ++te)
    for (std::size_t ta = 0; ta < g.n_azim; ++ta) {
      Pose theta{int(te), int(ta)};
      auto un = rollout(model, grid, theta, opts, src, dummy);
      const auto& dec = un.log.decoded.back();
      std::size_t row = (te * g.n_azim + ta) * mn;
      for (std::size_t je = 0; je < g.n_elev; ++je)
        for (std::size_t ja = 0; ja < g.n_azim; ++ja)
          errs[row + je * g.n_azim + ja] =
              view_mse(dec, grid, theta.azim, Pose{int(je), int(ja)});
    }
  double lo = *std::min_element(errs.begin(), errs.end());
  double hi = *std::max_element(errs.begin(), errs.end());
  cm.cov.resize(errs.size());
  if (hi - lo <= 0.0) {
    std::fill(cm.cov.begin(), cm.cov.end(), 1.0f);
  } else {
    for (std::size_t i = 0; i < errs.size(); ++i)
      cm.cov[i] = float((hi - errs[i]) / (hi - lo));
  }
  return cm;
}

// Mean over target views of the (clipped) total coverage the selected views
// provide: C = (1/MN) * sum_j min(1, sum_theta cov[theta][j]).
double coverage_objective(const CoverageMatrix& cov, const GridGeometry& geom,
                          const std::vector<Pose>& selected);

// Greedy one-step lookahead: the action (in canonical order, ties toward the
// earlier index) whose successor view adds the most coverage.
std::size_t demo_step(const CoverageMatrix& cov, const GridGeometry& geom,
                      const std::vector<Pose>& selected, const Pose& pose);

// T-pose greedy trajectory from `start`; objectives[t] is the coverage after
// glimpse t+1 and is nondecreasing in t.
DemoTrajectory demo_trajectory(const CoverageMatrix& cov, const GridGeometry& geom,
                               const Pose& start, std::size_t budget);

// ---------------------------------------------------------------------------
// Precomputed sidekick cache (keyed to a dataset payload and the one-glimpse
// model that produced the scores).
// ---------------------------------------------------------------------------

struct SidekickCache {
  GridGeometry geometry;
  std::uint64_t dataset_checksum = 0;
  std::uint64_t model_checksum = 0;
  std::vector<ScoreMap> scores;       // empty if not precomputed
  std::vector<CoverageMatrix> cov;    // empty if not precomputed
};

template <typename Real>
SidekickCache precompute_cache(const CompletionModel<Real>& model,
                               const Dataset& ds, std::uint64_t dataset_checksum,
                               std::uint64_t model_checksum, bool want_scores,
                               bool want_cov) {
  SidekickCache cache;
  cache.geometry = ds.geometry;
  cache.dataset_checksum = dataset_checksum;
  cache.model_checksum = model_checksum;
  for (const auto& grid : ds.samples) {
    if (want_scores) cache.scores.push_back(info_score(model, grid));
    if (want_cov) cache.cov.push_back(coverage_matrix(model, grid));
  }
  return cache;
}

void save_sidekick_cache(const SidekickCache& cache, const std::string& dir);

// Loads a cache, verifying payload sizes. When expectations are given, a
// mismatch (dataset changed, or scores came from a different pretrained
// model) raises ChecksumError rather than silently serving stale data.
SidekickCache load_sidekick_cache(
    const std::string& dir,
    std::optional<std::uint64_t> expect_dataset = std::nullopt,
    std::optional<std::uint64_t> expect_model = std::nullopt);

}  // namespace sidekick
