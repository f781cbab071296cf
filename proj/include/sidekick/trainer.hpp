#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "sidekick/agent.hpp"
#include "sidekick/loss.hpp"
#include "sidekick/sidekick.hpp"

namespace sidekick {

// ---------------------------------------------------------------------------
// Methods
// ---------------------------------------------------------------------------

enum class Method {
  one_view,      // T=1 completion, no exploration
  rnd_actions,   // random walk, reconstruction only
  rnd_rewards,   // shaped rewards from a uniform-random score grid
  ltla,          // REINFORCE on final reconstruction alone
  asymm_ac,      // actor-critic with a fully observed critic
  ours_rew,      // sidekick reward shaping
  ours_demo,     // sidekick demonstrations with annealed supervision
  ours_rew_ac,   // reward shaping + partially observed critic
  ours_demo_ac,  // demonstrations + partially observed critic
  demo_actions,  // sidekick drives actions at train AND test time
};

std::string method_name(Method m);
Method method_from(const std::string& s);

inline bool method_trains_policy(Method m) {
  return m != Method::one_view && m != Method::rnd_actions &&
         m != Method::demo_actions;
}
inline bool method_uses_demo(Method m) {
  return m == Method::ours_demo || m == Method::ours_demo_ac;
}
inline bool method_needs_scores(Method m) {
  return m == Method::ours_rew || m == Method::ours_rew_ac;
}
inline bool method_needs_cov(Method m) {
  return method_uses_demo(m) || m == Method::demo_actions;
}
// demo-actions lets the sidekick (which sees the whole grid) pick views when
// the trained model is deployed; reports must flag it accordingly.
inline bool method_full_obs_at_test(Method m) { return m == Method::demo_actions; }

inline CriticKind method_critic(Method m) {
  if (m == Method::asymm_ac) return CriticKind::full;
  if (m == Method::ours_rew_ac || m == Method::ours_demo_ac)
    return CriticKind::partial;
  return CriticKind::none;
}

// ---------------------------------------------------------------------------
// Configuration and schedules
// ---------------------------------------------------------------------------

struct TrainConfig {
  Method method = Method::ltla;
  std::size_t epochs = 300;
  std::size_t batch = 32;
  std::size_t budget = 4;  // T glimpses, T-1 motions
  double lambda_rec = 1.0;
  double lambda_pol = 1.0;
  double lr = 1e-4;
  double weight_decay = 1e-6;
  double entropy_weight = 0.01;
  double baseline_decay = 0.9;
  double reward_scale = 1.0;
  double reward_decay_factor = 5.0;
  std::size_t reward_decay_interval = 200;  // epochs
  std::size_t t_sup_decay_interval = 50;    // epochs
  std::size_t val_starts = 4;  // start poses sampled per validation sample
  std::uint64_t seed = 0;
  bool freeze_sense_fuse = true;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Supervision length: starts at T-1 (one per decision) and loses one step
// every `interval` epochs until it hits 0.
inline std::size_t t_sup_at(std::size_t epoch, std::size_t budget,
                            std::size_t interval) {
  std::size_t start = budget > 0 ? budget - 1 : 0;
  std::size_t dec = interval ? epoch / interval : 0;
  return dec >= start ? 0 : start - dec;
}

// Sidekick reward scale decays geometrically every `interval` epochs.
inline double reward_scale_at(std::size_t epoch, double initial, double factor,
                              std::size_t interval) {
  std::size_t k = interval ? epoch / interval : 0;
  return initial / std::pow(factor, double(k));
}

// ---------------------------------------------------------------------------
// Rewards and baselines
// ---------------------------------------------------------------------------

struct RewardTrace {
  std::vector<double> rewards;   // r_t, one per action
  std::vector<double> sidekick;  // the r^s_t components alone
  double final_rec = 0.0;        // reconstruction loss after the last glimpse
};

// r^s_t = scale * score(view reached by action t); the last action
// additionally carries -final_rec_loss. A null score map means no shaping.
template <typename Real>
RewardTrace compute_rewards(const EpisodeLog<Real>& ep, const ScoreMap* scores,
                            const GridGeometry& geom, double final_rec_loss,
                            double reward_scale) {
  std::size_t ta = ep.actions.size();
  if (ep.poses.size() != ta + 1)
    throw ShapeMismatchError("episode has " + std::to_string(ep.poses.size()) +
                             " poses for " + std::to_string(ta) + " actions");
  if (scores && scores->scores.size() != geom.n_views())
    throw ShapeMismatchError("score map size does not match geometry");
  RewardTrace tr;
  tr.final_rec = final_rec_loss;
  tr.rewards.resize(ta, 0.0);
  tr.sidekick.resize(ta, 0.0);
  for (std::size_t t = 0; t < ta; ++t) {
    const Pose& p = ep.poses[t + 1];
    double rs = scores
                    ? reward_scale *
                          double(scores->scores[std::size_t(p.elev) * geom.n_azim +
                                                std::size_t(p.azim)])
                    : 0.0;
    tr.sidekick[t] = rs;
    tr.rewards[t] = rs;
  }
  if (ta > 0) tr.rewards[ta - 1] += -final_rec_loss;
  return tr;
}

inline std::vector<double> returns_to_go(const std::vector<double>& rewards) {
  std::vector<double> g(rewards.size(), 0.0);
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc += rewards[i];
    g[i] = acc;
  }
  return g;
}

// Per-timestep exponential moving average of returns, initialized to 0.
struct Baseline {
  double decay = 0.9;
  std::vector<double> b;

  double value(std::size_t t) const { return t < b.size() ? b[t] : 0.0; }
  void update(const std::vector<double>& returns) {
    if (b.size() < returns.size()) b.resize(returns.size(), 0.0);
    for (std::size_t t = 0; t < returns.size(); ++t)
      b[t] = decay * b[t] + (1.0 - decay) * returns[t];
  }
};

// ---------------------------------------------------------------------------
// Per-step policy-head gradient pieces (all act on the logits, using the
// closed-form softmax jacobians).
// ---------------------------------------------------------------------------

// REINFORCE surrogate -coeff * log pi(action): grad_logit_j += coeff*(p_j - 1{j=a}).
template <typename Real>
void add_reinforce_grad(const Tensor<Real>& probs, std::size_t action, double coeff,
                        Tensor<Real>& grad_logits) {
  for (std::size_t j = 0; j < probs.numel(); ++j) {
    double g = coeff * (double(probs[j]) - (j == action ? 1.0 : 0.0));
    grad_logits[j] += Real(g);
  }
}

// Cross entropy against a one-hot target; returns the loss value.
template <typename Real>
double add_cross_entropy_grad(const Tensor<Real>& probs, std::size_t target,
                              double coeff, Tensor<Real>& grad_logits) {
  for (std::size_t j = 0; j < probs.numel(); ++j) {
    double g = coeff * (double(probs[j]) - (j == target ? 1.0 : 0.0));
    grad_logits[j] += Real(g);
  }
  return -std::log(std::max(double(probs[target]), 1e-300));
}

// Negative entropy sum_j p_j log p_j (0 at a deterministic policy, -ln K at
// uniform). Minimizing weight*this maximizes entropy.
template <typename Real>
double neg_entropy(const Tensor<Real>& probs) {
  double l = 0.0;
  for (std::size_t j = 0; j < probs.numel(); ++j) {
    double p = double(probs[j]);
    if (p > 0.0) l += p * std::log(p);
  }
  return l;
}

template <typename Real>
void add_neg_entropy_grad(const Tensor<Real>& probs, double weight,
                          Tensor<Real>& grad_logits) {
  double l = neg_entropy(probs);
  for (std::size_t j = 0; j < probs.numel(); ++j) {
    double p = double(probs[j]);
    double lp = p > 0.0 ? std::log(p) : 0.0;
    grad_logits[j] += Real(weight * p * (lp - l));
  }
}

// ---------------------------------------------------------------------------
// One episode: losses forward, all gradients backward through time.
// ---------------------------------------------------------------------------

struct EpisodeLosses {
  double rec_final = 0.0;  // reconstruction loss at the last step
  double rec_sum = 0.0;    // summed over all decoded steps
  double pol = 0.0;        // REINFORCE surrogate
  double demo = 0.0;       // cross entropy vs the sidekick
  double ent = 0.0;        // negative entropy (before weighting)
  double critic = 0.0;     // value regression
  std::vector<double> returns;
};

struct EpisodeLossConfig {
  double lambda_rec = 1.0;
  double lambda_pol = 1.0;
  double entropy_weight = 0.0;
  bool train_policy = true;
  bool into_sense = true;        // propagate below the fuse layer
  std::size_t n_supervised = 0;  // leading steps driven (and supervised) by demo
};

// Computes every loss term on a taped unroll and accumulates all parameter
// gradients. Advantage per action step comes from `advantages` (already
// baseline- or critic-subtracted); the caller owns reward/return bookkeeping.
template <typename Real>
EpisodeLosses episode_backward(CompletionModel<Real>& model, const Viewgrid& grid,
                               Unroll<Real>& un, const EpisodeLossConfig& cfg,
                               const std::vector<double>& advantages,
                               const std::vector<double>& returns,
                               const std::vector<std::size_t>* demo_targets) {
  const std::size_t steps = un.beliefs.size();
  const std::size_t ta = un.log.actions.size();
  if (un.caches.size() != steps)
    throw UsageError("episode was not recorded with the backward tape enabled");
  if (un.log.decoded.size() != steps && un.log.decoded.size() != 1)
    throw ShapeMismatchError("unexpected decoded step count");
  if (cfg.train_policy && advantages.size() != ta)
    throw ShapeMismatchError("advantage count does not match action count");
  if (cfg.n_supervised > 0 &&
      (!demo_targets || demo_targets->size() < cfg.n_supervised))
    throw ShapeMismatchError("demo target count does not cover supervised steps");

  EpisodeLosses out;
  out.returns = returns;

  // Reconstruction terms. decoded[k] belongs to step k when every step
  // decoded, otherwise to the final step only.
  std::vector<Tensor<Real>> rec_grads(steps);
  bool decode_every = un.log.decoded.size() == steps;
  for (std::size_t k = 0; k < un.log.decoded.size(); ++k) {
    std::size_t t = decode_every ? k : steps - 1;
    Tensor<Real> g;
    double l = reconstruction_loss(un.log.decoded[k], grid,
                                   un.log.poses[0].azim, &g);
    out.rec_sum += l;
    if (t == steps - 1) out.rec_final = l;
    if (cfg.lambda_rec != 0.0) {
      for (auto& v : g.data) v = Real(double(v) * cfg.lambda_rec);
      rec_grads[t] = std::move(g);
    }
  }

  // Policy-head gradients per action step.
  std::vector<Tensor<Real>> logit_grads(ta);
  for (std::size_t t = 0; t < ta; ++t) {
    logit_grads[t] = Tensor<Real>({kNumActions});
    const auto& probs = un.log.action_probs[t];
    if (!cfg.train_policy) continue;
    if (t < cfg.n_supervised) {
      double ce = add_cross_entropy_grad(probs, (*demo_targets)[t],
                                         cfg.lambda_pol, logit_grads[t]);
      out.demo += ce;
    } else {
      add_reinforce_grad(probs, un.log.actions[t],
                         cfg.lambda_pol * advantages[t], logit_grads[t]);
      out.pol -= cfg.lambda_pol * advantages[t] *
                 std::log(std::max(double(probs[un.log.actions[t]]), 1e-300));
    }
    if (cfg.entropy_weight != 0.0) {
      out.ent += neg_entropy(probs);
      add_neg_entropy_grad(probs, cfg.entropy_weight, logit_grads[t]);
    }
  }

  // Critic regression toward the empirical return-to-go.
  std::vector<double> critic_dv(ta, 0.0);
  if (!un.log.values.empty()) {
    if (un.log.values.size() != ta)
      throw ShapeMismatchError("critic value count does not match action count");
    for (std::size_t t = 0; t < ta; ++t) {
      double err = double(un.log.values[t]) - returns[t];
      out.critic += err * err;
      critic_dv[t] = 2.0 * err;
    }
  }

  // Backward through time.
  Tensor<Real> grad_grid_code;
  if (un.grid_code) grad_grid_code = Tensor<Real>(un.grid_code->code.shape);
  std::vector<Tensor<Real>> gh(steps);
  for (std::size_t t = 0; t < steps; ++t) gh[t] = model.initial_belief();
  for (std::size_t t = steps; t-- > 0;) {
    if (rec_grads[t].numel() > 0)
      model.backward_decode(un.caches[t], rec_grads[t], gh[t]);
    if (t < ta) {
      if (cfg.train_policy || cfg.entropy_weight != 0.0)
        model.backward_act(un.caches[t], logit_grads[t], gh[t]);
      if (un.caches[t].has_critic)
        model.backward_critic(un.caches[t], Real(critic_dv[t]), gh[t],
                              un.grid_code ? &grad_grid_code : nullptr);
    }
    auto [gf, gh_prev] = model.backward_aggregate(un.caches[t], gh[t]);
    model.backward_fuse_sense(un.caches[t], gf, cfg.into_sense);
    if (t > 0)
      for (std::size_t i = 0; i < gh_prev.numel(); ++i) gh[t - 1][i] += gh_prev[i];
  }
  if (un.grid_code) model.backward_grid_code(*un.grid_code, grad_grid_code,
                                             cfg.into_sense);
  return out;
}

template <typename Real>
void scale_grads(nn::ParamStore<Real>& store, double s) {
  for (auto* p : store.all())
    for (auto& g : p->grad.data) g = Real(double(g) * s);
}

// ---------------------------------------------------------------------------
// Deterministic shuffling / sampling helpers
// ---------------------------------------------------------------------------

inline void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
}

inline Pose random_pose(const GridGeometry& g, Rng& rng) {
  return Pose{int(rng.uniform_index(g.n_elev)), int(rng.uniform_index(g.n_azim))};
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

// Mean final reconstruction error (x1000) over sampled start poses, plus the
// adversarial variant (per-sample worst start). Deterministic given the rng
// stream; actions are argmax unless a source override is supplied.
template <typename Real>
std::pair<double, double> validation_error(
    const CompletionModel<Real>& model, const Dataset& ds, std::size_t budget,
    std::size_t n_starts, Rng& rng,
    const std::function<ActionSource<Real>(const Viewgrid&)>* source_for = nullptr) {
  if (ds.samples.empty()) return {0.0, 0.0};
  RolloutOptions opts;
  opts.budget = budget;
  Rng dummy(0, "val-actions");
  double sum = 0.0, adv_sum = 0.0;
  std::size_t count = 0;
  for (const auto& grid : ds.samples) {
    ActionSource<Real> src;
    src.kind = ActionSourceKind::agent_argmax;
    if (source_for) src = (*source_for)(grid);
    double worst = 0.0;
    for (std::size_t s = 0; s < n_starts; ++s) {
      Pose start = random_pose(ds.geometry, rng);
      auto un = rollout(model, grid, start, opts, src, dummy);
      double err =
          reconstruction_loss(un.log.decoded.back(), grid, start.azim) * 1000.0;
      sum += err;
      worst = std::max(worst, err);
      ++count;
    }
    adv_sum += worst;
  }
  return {sum / double(count), adv_sum / double(ds.samples.size())};
}

// ---------------------------------------------------------------------------
// T=1 pretraining of Sense, Fuse, Aggregate and Decode.
// ---------------------------------------------------------------------------

struct PretrainConfig {
  std::size_t epochs = 60;
  std::size_t batch = 32;
  double lr = 1e-3;
  double weight_decay = 1e-6;
  std::size_t val_starts = 4;
  std::uint64_t seed = 0;
};

struct TrainEpochRecord {
  nlohmann::json j;
};

struct TrainResult {
  std::vector<nlohmann::json> log;
  std::vector<double> val_avg;  // per epoch, x1000
  double final_val_avg = 0.0;
  double final_val_adv = 0.0;
  bool full_obs_at_test = false;
};

template <typename Real>
TrainResult pretrain_one_view(CompletionModel<Real>& model, const Dataset& train_ds,
                              const Dataset& val_ds, const PretrainConfig& cfg,
                              std::ostream* log_out = nullptr) {
  if (train_ds.samples.empty()) throw DataError("empty training dataset");
  nn::AdamConfig adam;
  adam.lr = cfg.lr;
  adam.weight_decay = cfg.weight_decay;
  Rng order_rng(cfg.seed, "pretrain-order");
  Rng start_rng(cfg.seed, "pretrain-starts");
  Rng val_rng(cfg.seed, "pretrain-val");
  Rng dummy(0, "pretrain-actions");
  RolloutOptions opts;
  opts.budget = 1;
  opts.keep_tape = true;
  ActionSource<Real> src;
  src.kind = ActionSourceKind::agent_argmax;
  EpisodeLossConfig lcfg;
  lcfg.train_policy = false;
  lcfg.entropy_weight = 0.0;

  TrainResult result;
  std::vector<std::size_t> idx(train_ds.samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  auto t0 = std::chrono::steady_clock::now();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_indices(idx, order_rng);
    double train_loss = 0.0;
    std::size_t in_batch = 0, episodes = 0;
    model.params().zero_grads();
    for (std::size_t i : idx) {
      const auto& grid = train_ds.samples[i];
      Pose start = random_pose(train_ds.geometry, start_rng);
      auto un = rollout(model, grid, start, opts, src, dummy);
      auto losses = episode_backward(model, grid, un, lcfg, {}, {}, nullptr);
      train_loss += losses.rec_final;
      ++episodes;
      if (++in_batch == cfg.batch) {
        scale_grads(model.params(), 1.0 / double(in_batch));
        model.params().adam_step(adam);
        in_batch = 0;
      }
    }
    if (in_batch > 0) {
      scale_grads(model.params(), 1.0 / double(in_batch));
      model.params().adam_step(adam);
    }
    auto [avg, adv] =
        validation_error(model, val_ds, 1, cfg.val_starts, val_rng);
    double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    nlohmann::json rec = {{"epoch", epoch},
                          {"split", "val"},
                          {"train_rec_x1000", train_loss / double(episodes) * 1000.0},
                          {"avg_x1000", avg},
                          {"adv_x1000", adv},
                          {"wall_s", wall}};
    result.log.push_back(rec);
    result.val_avg.push_back(avg);
    result.final_val_avg = avg;
    result.final_val_adv = adv;
    if (log_out) (*log_out) << rec.dump() << "\n";
  }
  return result;
}

// ---------------------------------------------------------------------------
// End-to-end training with the configured method.
// ---------------------------------------------------------------------------

template <typename Real>
TrainResult train(CompletionModel<Real>& model, const Dataset& train_ds,
                  const Dataset& val_ds, const TrainConfig& cfg,
                  const SidekickCache* cache, const SidekickCache* val_cache = nullptr,
                  std::ostream* log_out = nullptr) {
  if (train_ds.samples.empty()) throw DataError("empty training dataset");
  if (cfg.budget < 2 && cfg.method != Method::one_view)
    throw UsageError("exploration methods need a budget of at least 2");
  if (model.config().critic != method_critic(cfg.method))
    throw UsageError("model critic head does not match method " +
                     method_name(cfg.method));
  if (method_needs_scores(cfg.method) && (!cache || cache->scores.empty()))
    throw DependencyError("method " + method_name(cfg.method) +
                          " requires a sidekick score cache");
  if (method_needs_cov(cfg.method) && (!cache || cache->cov.empty()))
    throw DependencyError("method " + method_name(cfg.method) +
                          " requires a sidekick coverage cache");

  TrainResult result;
  result.full_obs_at_test = method_full_obs_at_test(cfg.method);
  if (cfg.method == Method::one_view) {
    // Nothing to train beyond the pretrained completion model.
    Rng val_rng(cfg.seed, "train-val");
    auto [avg, adv] = validation_error(model, val_ds, 1, cfg.val_starts, val_rng);
    result.final_val_avg = avg;
    result.final_val_adv = adv;
    result.val_avg.push_back(avg);
    nlohmann::json rec = {{"epoch", 0}, {"split", "val"}, {"avg_x1000", avg},
                          {"adv_x1000", adv}};
    result.log.push_back(rec);
    if (log_out) (*log_out) << rec.dump() << "\n";
    return result;
  }

  const auto& geom = train_ds.geometry;
  const auto actions = action_space();

  // Per-sample sidekick lookups.
  std::unordered_map<std::string, const ScoreMap*> score_of;
  std::unordered_map<std::string, const CoverageMatrix*> cov_of;
  if (cache) {
    for (const auto& sm : cache->scores) score_of[sm.sample_id] = &sm;
    for (const auto& cm : cache->cov) cov_of[cm.sample_id] = &cm;
  }
  std::vector<ScoreMap> random_scores;  // rnd-rewards baseline
  if (cfg.method == Method::rnd_rewards) {
    Rng rr(cfg.seed, "rnd-rewards");
    for (const auto& grid : train_ds.samples) {
      ScoreMap sm;
      sm.sample_id = grid.id;
      sm.scores.resize(geom.n_views());
      for (auto& v : sm.scores) v = float(rr.uniform());
      random_scores.push_back(std::move(sm));
    }
    for (const auto& sm : random_scores) score_of[sm.sample_id] = &sm;
  }

  if (cfg.freeze_sense_fuse) {
    model.params().freeze_group("sense");
    model.params().freeze_group("fuse");
  }

  nn::AdamConfig adam;
  adam.lr = cfg.lr;
  adam.weight_decay = cfg.weight_decay;
  Rng order_rng(cfg.seed, "train-order");
  Rng start_rng(cfg.seed, "train-starts");
  Rng action_rng(cfg.seed, "train-actions");
  Rng val_rng(cfg.seed, "train-val");
  Baseline baseline;
  baseline.decay = cfg.baseline_decay;
  const bool has_critic = model.has_critic();
  const bool train_policy = method_trains_policy(cfg.method);

  RolloutOptions opts;
  opts.budget = cfg.budget;
  opts.keep_tape = true;
  opts.decode_all = true;
  opts.run_critic = has_critic;

  std::vector<std::size_t> idx(train_ds.samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

  auto t0 = std::chrono::steady_clock::now();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double scale = reward_scale_at(epoch, cfg.reward_scale,
                                   cfg.reward_decay_factor,
                                   cfg.reward_decay_interval);
    std::size_t tsup = method_uses_demo(cfg.method)
                           ? t_sup_at(epoch, cfg.budget, cfg.t_sup_decay_interval)
                           : 0;
    shuffle_indices(idx, order_rng);
    double rec_acc = 0.0, pol_acc = 0.0, critic_acc = 0.0;
    std::size_t in_batch = 0, episodes = 0;
    model.params().zero_grads();
    for (std::size_t i : idx) {
      const auto& grid = train_ds.samples[i];
      Pose start = random_pose(geom, start_rng);

      std::vector<std::size_t> demo_targets;
      std::vector<Pose> demo_selected;
      ActionSource<Real> src;
      const CoverageMatrix* cov = nullptr;
      if (method_needs_cov(cfg.method)) {
        auto it = cov_of.find(grid.id);
        if (it == cov_of.end())
          throw DependencyError("no coverage entry for sample " + grid.id);
        cov = it->second;
      }
      switch (cfg.method) {
        case Method::rnd_actions:
          src.kind = ActionSourceKind::external;
          src.external = [&](std::size_t, const Pose&) {
            return actions[action_rng.uniform_index(actions.size())];
          };
          break;
        case Method::demo_actions:
        case Method::ours_demo:
        case Method::ours_demo_ac:
          src.kind = ActionSourceKind::external;
          src.external_until =
              cfg.method == Method::demo_actions ? std::size_t(-1) : tsup;
          src.external = [&](std::size_t t, const Pose& pose) {
            if (t == 0) demo_selected.clear();
            demo_selected.push_back(pose);
            std::size_t a = demo_step(*cov, geom, demo_selected, pose);
            demo_targets.push_back(a);
            return actions[a];
          };
          break;
        default:
          src.kind = ActionSourceKind::agent_sample;
          break;
      }

      auto un = rollout(model, grid, start, opts, src, action_rng);

      const ScoreMap* sm = nullptr;
      if (method_needs_scores(cfg.method) || cfg.method == Method::rnd_rewards) {
        auto it = score_of.find(grid.id);
        if (it == score_of.end())
          throw DependencyError("no score entry for sample " + grid.id);
        sm = it->second;
      }
      double final_rec =
          reconstruction_loss(un.log.decoded.back(), grid, start.azim);
      auto trace = compute_rewards(un.log, sm, geom, final_rec, scale);
      auto returns = returns_to_go(trace.rewards);
      std::vector<double> advantages(returns.size(), 0.0);
      for (std::size_t t = 0; t < returns.size(); ++t)
        advantages[t] = returns[t] - (has_critic ? double(un.log.values[t])
                                                 : baseline.value(t));
      if (!has_critic) baseline.update(returns);

      EpisodeLossConfig lcfg;
      lcfg.lambda_rec = cfg.lambda_rec;
      lcfg.lambda_pol = cfg.lambda_pol;
      lcfg.entropy_weight = train_policy ? cfg.entropy_weight : 0.0;
      lcfg.train_policy = train_policy;
      lcfg.into_sense = !cfg.freeze_sense_fuse;
      lcfg.n_supervised = method_uses_demo(cfg.method)
                              ? std::min(tsup, un.log.actions.size())
                              : 0;
      auto losses = episode_backward(model, grid, un, lcfg, advantages, returns,
                                     demo_targets.empty() ? nullptr : &demo_targets);
      rec_acc += losses.rec_final;
      pol_acc += losses.pol + losses.demo;
      critic_acc += losses.critic;
      ++episodes;
      if (++in_batch == cfg.batch) {
        scale_grads(model.params(), 1.0 / double(in_batch));
        model.params().adam_step(adam);
        in_batch = 0;
      }
    }
    if (in_batch > 0) {
      scale_grads(model.params(), 1.0 / double(in_batch));
      model.params().adam_step(adam);
    }

    // Per-epoch validation with the greedy policy (or the sidekick for the
    // full-observability demo-actions baseline, when a val cache is given).
    std::function<ActionSource<Real>(const Viewgrid&)> val_source;
    bool use_val_source = false;
    if (cfg.method == Method::demo_actions && val_cache && !val_cache->cov.empty()) {
      std::unordered_map<std::string, const CoverageMatrix*> vcov;
      for (const auto& cm : val_cache->cov) vcov[cm.sample_id] = &cm;
      val_source = [vcov, &geom, &actions](const Viewgrid& grid) {
        ActionSource<Real> s;
        s.kind = ActionSourceKind::external;
        auto selected = std::make_shared<std::vector<Pose>>();
        const CoverageMatrix* cm = vcov.at(grid.id);
        s.external = [selected, cm, &geom, &actions](std::size_t t, const Pose& pose) {
          if (t == 0) selected->clear();
          selected->push_back(pose);
          return actions[demo_step(*cm, geom, *selected, pose)];
        };
        return s;
      };
      use_val_source = true;
    }
    auto [avg, adv] = validation_error(model, val_ds, cfg.budget, cfg.val_starts,
                                       val_rng, use_val_source ? &val_source : nullptr);
    double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    nlohmann::json rec = {{"epoch", epoch},
                          {"split", "val"},
                          {"avg_x1000", avg},
                          {"adv_x1000", adv},
                          {"train_rec_x1000", rec_acc / double(episodes) * 1000.0},
                          {"train_pol", pol_acc / double(episodes)},
                          {"train_critic", critic_acc / double(episodes)},
                          {"reward_scale", scale},
                          {"t_sup", tsup},
                          {"wall_s", wall}};
    result.log.push_back(rec);
    result.val_avg.push_back(avg);
    result.final_val_avg = avg;
    result.final_val_adv = adv;
    if (log_out) (*log_out) << rec.dump() << "\n";
  }
  if (cfg.freeze_sense_fuse) model.params().unfreeze_all();
  return result;
}

}  // namespace sidekick
