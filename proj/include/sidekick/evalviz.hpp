#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sidekick/agent.hpp"
#include "sidekick/image.hpp"
#include "sidekick/loss.hpp"
#include "sidekick/trainer.hpp"

namespace sidekick {

// ---------------------------------------------------------------------------
// Evaluation: avg / adv reconstruction error over all start poses.
// ---------------------------------------------------------------------------

struct EvalEntry {
  std::string method;
  double avg_x1000 = 0.0;
  double adv_x1000 = 0.0;
  // Relative to the one-view reference; NaN when no reference present.
  double avg_improvement_pct = 0.0;
  double adv_improvement_pct = 0.0;
  bool full_obs_at_test = false;
  // per_start[sample][start index e*M+a], x1000.
  std::vector<std::vector<double>> per_start;
};

struct EvalReport {
  GridGeometry geometry;
  std::size_t n_samples = 0;
  std::size_t budget = 0;
  std::string split;
  std::vector<EvalEntry> entries;
};

inline double improvement_pct(double base, double value) {
  return (base - value) / base * 100.0;
}

// Per-(sample, start) final reconstruction errors (x1000) with argmax
// actions, enumerating every one of the MN start poses. `jobs` splits the
// sample loop across threads; parameters are read-only during evaluation and
// each worker writes disjoint slots, so the result is independent of jobs.
template <typename Real>
std::vector<std::vector<double>> evaluate_errors(
    const CompletionModel<Real>& model, const Dataset& ds, std::size_t budget,
    const std::function<ActionSource<Real>(const Viewgrid&)>* source_for = nullptr,
    std::size_t jobs = 1) {
  if (ds.geometry != model.geometry())
    throw ShapeMismatchError("dataset geometry does not match model");
  const auto& g = ds.geometry;
  std::vector<std::vector<double>> errs(ds.samples.size(),
                                        std::vector<double>(g.n_views(), 0.0));
  auto work = [&](std::size_t lo, std::size_t hi) {
    RolloutOptions opts;
    opts.budget = budget;
    Rng dummy(0, "eval");
    for (std::size_t i = lo; i < hi; ++i) {
      const auto& grid = ds.samples[i];
      ActionSource<Real> src;
      src.kind = ActionSourceKind::agent_argmax;
      if (source_for) src = (*source_for)(grid);
      for (std::size_t e = 0; e < g.n_elev; ++e)
        for (std::size_t a = 0; a < g.n_azim; ++a) {
          Pose start{int(e), int(a)};
          auto un = rollout(model, grid, start, opts, src, dummy);
          errs[i][e * g.n_azim + a] =
              reconstruction_loss(un.log.decoded.back(), grid, start.azim) * 1000.0;
        }
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, ds.samples.size()));
  if (jobs == 1) {
    work(0, ds.samples.size());
  } else {
    std::vector<std::thread> threads;
    std::size_t chunk = (ds.samples.size() + jobs - 1) / jobs;
    for (std::size_t j = 0; j < jobs; ++j) {
      std::size_t lo = j * chunk, hi = std::min(lo + chunk, ds.samples.size());
      if (lo < hi) threads.emplace_back(work, lo, hi);
    }
    for (auto& t : threads) t.join();
  }
  return errs;
}

inline std::pair<double, double> summarize_errors(
    const std::vector<std::vector<double>>& per_start) {
  double sum = 0.0, adv_sum = 0.0;
  std::size_t count = 0;
  for (const auto& row : per_start) {
    double worst = 0.0;
    for (double e : row) {
      sum += e;
      worst = std::max(worst, e);
      ++count;
    }
    adv_sum += worst;
  }
  if (count == 0) return {0.0, 0.0};
  return {sum / double(count), adv_sum / double(per_start.size())};
}

template <typename Real>
EvalEntry evaluate(const CompletionModel<Real>& model, const Dataset& ds,
                   std::size_t budget, const std::string& method_label,
                   const std::function<ActionSource<Real>(const Viewgrid&)>*
                       source_for = nullptr,
                   std::size_t jobs = 1) {
  EvalEntry entry;
  entry.method = method_label;
  entry.per_start = evaluate_errors(model, ds, budget, source_for, jobs);
  auto [avg, adv] = summarize_errors(entry.per_start);
  entry.avg_x1000 = avg;
  entry.adv_x1000 = adv;
  return entry;
}

// Fills improvement columns against the entry named `reference` (if present).
void finalize_report(EvalReport& report, const std::string& reference = "one-view");

nlohmann::json eval_report_to_json(const EvalReport& report);
std::string eval_report_table(const EvalReport& report);
void save_eval_report(const EvalReport& report, const std::string& dir);

// ---------------------------------------------------------------------------
// Policy visualization: belief perturbation (what would change the action
// distribution most) and the induced per-view heatmap.
// ---------------------------------------------------------------------------

struct PerturbConfig {
  double constraint = 0.75;  // |da| <= constraint * |a|
  double lr = 1e-4;
  double weight_decay = 0.1;
  double momentum = 0.9;
  std::size_t max_iters = 200;
  // The objective's gradient at da = 0 is identically zero (global minimum of
  // a squared difference), so ascent starts from a tiny seeded random offset.
  double init_scale = 1e-3;
  std::uint64_t seed = 0;
};

template <typename Real>
struct PerturbResult {
  Tensor<Real> delta;
  double objective = 0.0;
  double norm_ratio = 0.0;
  std::size_t iters = 0;
};

struct Heatmap {
  std::size_t n_elev = 0, n_azim = 0;
  std::vector<double> intensity;  // max-normalized to [0,1]
  double norm_ratio = 0.0;
};

template <typename Real>
double act_objective(const CompletionModel<Real>& model, const Tensor<Real>& probs0,
                     const Tensor<Real>& belief, const Tensor<Real>& delta,
                     const Tensor<Real>& prop_feats, StepCache<Real>& cache) {
  Tensor<Real> shifted(belief.shape);
  for (std::size_t i = 0; i < belief.numel(); ++i)
    shifted[i] = belief[i] + delta[i];
  auto probs = model.act(shifted, prop_feats, cache);
  double f = 0.0;
  for (std::size_t j = 0; j < kNumActions; ++j) {
    double d = double(probs0[j]) - double(probs[j]);
    f += d * d;
  }
  return f;
}

// Momentum-SGD ascent on sum_d (pi(d|a) - pi(d|a+da))^2 subject to
// |da| <= C|a|, enforced by early stopping that returns the last feasible
// iterate. Steps that decrease the objective are rejected (monotone accept).
// If no iterate achieves a positive objective (e.g. a constant policy) the
// zero perturbation is returned.
template <typename Real>
PerturbResult<Real> belief_perturbation(CompletionModel<Real>& model,
                                        const Tensor<Real>& belief,
                                        const Tensor<Real>& prop_feats,
                                        const PerturbConfig& cfg) {
  const std::size_t n = belief.numel();
  PerturbResult<Real> out;
  out.delta = Tensor<Real>(belief.shape);
  double a_norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) a_norm += double(belief[i]) * double(belief[i]);
  a_norm = std::sqrt(a_norm);
  if (a_norm == 0.0) return out;

  StepCache<Real> c0;
  Tensor<Real> probs0 = model.act(belief, prop_feats, c0);

  Rng rng(cfg.seed, "perturb-init");
  Tensor<Real> delta(belief.shape), vel(belief.shape);
  for (std::size_t i = 0; i < n; ++i)
    delta[i] = Real(rng.gaussian() * cfg.init_scale * a_norm / std::sqrt(double(n)));

  auto norm_of = [&](const Tensor<Real>& d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d.numel(); ++i) s += double(d[i]) * double(d[i]);
    return std::sqrt(s);
  };
  double limit = cfg.constraint * a_norm;
  if (norm_of(delta) > limit)
    throw UsageError("perturbation init scale violates the norm constraint");

  StepCache<Real> cache;
  double f = act_objective(model, probs0, belief, delta, prop_feats, cache);
  if (!std::isfinite(f)) throw NonFiniteError("perturbation objective is not finite");

  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    out.iters = it + 1;
    // Ascent direction at the current iterate.
    Tensor<Real> grad_probs({kNumActions}), grad_logits({kNumActions});
    for (std::size_t j = 0; j < kNumActions; ++j)
      grad_probs[j] = Real(2.0 * (double(cache.probs[j]) - double(probs0[j])));
    nn::softmax_backward_acc(cache.probs.ptr(), grad_probs.ptr(),
                             grad_logits.ptr(), kNumActions);
    Tensor<Real> grad_belief(belief.shape);
    model.backward_act(cache, grad_logits, grad_belief);
    model.params().zero_grads();  // visualization must not leave training residue

    Tensor<Real> trial(belief.shape);
    for (std::size_t i = 0; i < n; ++i) {
      double v = cfg.momentum * double(vel[i]) +
                 (double(grad_belief[i]) - cfg.weight_decay * double(delta[i]));
      vel[i] = Real(v);
      trial[i] = Real(double(delta[i]) + cfg.lr * v);
    }
    if (norm_of(trial) > limit) break;  // last feasible iterate stands
    StepCache<Real> trial_cache;
    double f_trial =
        act_objective(model, probs0, belief, trial, prop_feats, trial_cache);
    if (!std::isfinite(f_trial))
      throw NonFiniteError("perturbation objective is not finite");
    if (f_trial < f) break;  // monotone accept
    delta = std::move(trial);
    cache = std::move(trial_cache);
    f = f_trial;
  }

  if (f <= 0.0) return out;  // constant policy: report the zero perturbation
  out.delta = delta;
  out.objective = f;
  out.norm_ratio = norm_of(out.delta) / a_norm;
  return out;
}

// H_t proportional to the per-view squared decode difference, max-normalized.
template <typename Real>
Heatmap heatmap(const CompletionModel<Real>& model, const Tensor<Real>& belief,
                const Tensor<Real>& delta, double norm_ratio = 0.0) {
  const auto& g = model.geometry();
  StepCache<Real> c0, c1;
  auto dec0 = model.decode(belief, c0);
  Tensor<Real> shifted(belief.shape);
  for (std::size_t i = 0; i < belief.numel(); ++i)
    shifted[i] = belief[i] + delta[i];
  auto dec1 = model.decode(shifted, c1);
  Heatmap h;
  h.n_elev = g.n_elev;
  h.n_azim = g.n_azim;
  h.norm_ratio = norm_ratio;
  h.intensity.resize(g.n_views(), 0.0);
  std::size_t vn = g.view_numel();
  double mx = 0.0;
  for (std::size_t v = 0; v < g.n_views(); ++v) {
    double s = 0.0;
    for (std::size_t i = 0; i < vn; ++i) {
      double d = double(dec1[v * vn + i]) - double(dec0[v * vn + i]);
      s += d * d;
    }
    h.intensity[v] = s;
    mx = std::max(mx, s);
  }
  if (mx > 0.0)
    for (auto& v : h.intensity) v /= mx;
  else
    std::fill(h.intensity.begin(), h.intensity.end(), 0.0);
  return h;
}

// ---------------------------------------------------------------------------
// Montage rendering
// ---------------------------------------------------------------------------

struct RenderOverlay {
  std::vector<Pose> observed;                  // outlined tiles
  std::vector<std::pair<Pose, Pose>> arrows;   // motion annotations
  const Heatmap* heat = nullptr;
  double alpha = 0.5;  // blended pixel = (1-alpha)*image + alpha*colormap(H)
  int gap = 2;
};

ImageRGB render_montage(const Tensor<float>& grid5, const GridGeometry& geom,
                        const RenderOverlay& overlay);

template <typename Real>
ImageRGB render_montage_real(const Tensor<Real>& grid5, const GridGeometry& geom,
                             const RenderOverlay& overlay) {
  return render_montage(grid5.template cast<float>(), geom, overlay);
}

}  // namespace sidekick
