#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sidekick/io.hpp"
#include "sidekick/nn.hpp"
#include "sidekick/viewgrid.hpp"

namespace sidekick {

constexpr std::size_t kNumActions = 15;

enum class EncoderKind { dense, conv };
enum class DecoderKind { dense, conv };
enum class CriticKind { none, partial, full };

struct ModelConfig {
  GridGeometry geometry;
  EncoderKind encoder = EncoderKind::dense;
  DecoderKind decoder = DecoderKind::dense;
  CriticKind critic = CriticKind::none;
  std::size_t view_code = 32;
  std::size_t prop_code = 8;
  std::size_t enc_hidden = 64;
  std::size_t fuse_hidden = 64;
  std::size_t fuse_out = 64;
  std::size_t hidden = 48;       // aggregator state size
  std::size_t dec_hidden = 64;
  std::size_t act_hidden = 32;
  std::size_t critic_hidden = 32;
  std::size_t grid_code = 32;    // full-observability critic viewgrid code
  std::uint64_t init_seed = 0;

  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);
EncoderKind encoder_kind_from(const std::string& s);
DecoderKind decoder_kind_from(const std::string& s);
CriticKind critic_kind_from(const std::string& s);

// Raw proprioception features fed to the network: elevation normalized to
// [0,1] plus the previous relative motion scaled to [-1,1].
template <typename Real>
Tensor<Real> prop_features(const Proprioception& p, const GridGeometry& g) {
  Tensor<Real> f({3});
  f[0] = g.n_elev > 1 ? Real(p.elev_abs) / Real(g.n_elev - 1) : Real(0);
  f[1] = Real(p.d_elev_prev);
  f[2] = Real(p.d_azim_prev) / Real(2);
  return f;
}

// p_t* for the full-observability critic: adds wrap-aware absolute azimuth.
template <typename Real>
Tensor<Real> prop_features_full(const Proprioception& p, const GridGeometry& g) {
  Tensor<Real> f({5});
  auto base = prop_features<Real>(p, g);
  f[0] = base[0];
  f[1] = base[1];
  f[2] = base[2];
  double phi = 6.283185307179586 * double(p.azim_abs) / double(g.n_azim);
  f[3] = Real(std::cos(phi));
  f[4] = Real(std::sin(phi));
  return f;
}

// ---------------------------------------------------------------------------
// The recurrent observation-completion agent.
// Parameter groups: sense, fuse, aggregate, decode, act, critic.
// ---------------------------------------------------------------------------

template <typename Real>
struct StepCache {
  // sense
  nn::DenseCache<Real> enc1, enc2, prop;
  nn::ConvCache<Real> cenc1, cenc2;
  nn::PoolCache<Real> pool1, pool2;
  // fuse
  nn::DenseCache<Real> fuse1, fuse2;
  Tensor<Real> view_code, prop_code;  // for splitting the fuse input grad
  // aggregate
  nn::GruCache<Real> gru;
  // decode
  bool has_decode = false;
  nn::DenseCache<Real> dec1, dec2;
  nn::DeconvCache<Real> dec_deconv1, dec_deconv2;
  // act
  bool has_act = false;
  nn::DenseCache<Real> act1, act2;
  Tensor<Real> probs;
  // critic
  bool has_critic = false;
  nn::DenseCache<Real> critic1, critic2;
};

template <typename Real>
struct GridCodeCache {
  std::vector<nn::DenseCache<Real>> enc1, enc2;
  std::vector<nn::ConvCache<Real>> cenc1, cenc2;
  std::vector<nn::PoolCache<Real>> pool1, pool2;
  nn::DenseCache<Real> fuse;
  Tensor<Real> code;
};

template <typename Real>
class CompletionModel {
public:
  explicit CompletionModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.geometry.validate();
    Rng rng(cfg.init_seed, "model-init");
    const auto& g = cfg_.geometry;
    using nn::Activation;

    if (cfg_.encoder == EncoderKind::dense) {
      enc1_ = nn::Dense<Real>("sense/view1", g.view_numel(), cfg_.enc_hidden,
                              Activation::tanh_act, rng);
      enc2_ = nn::Dense<Real>("sense/view2", cfg_.enc_hidden, cfg_.view_code,
                              Activation::tanh_act, rng);
      enc1_.register_params(store_);
    } else {
      if (g.view_h % 4 || g.view_w % 4)
        throw ShapeMismatchError("conv encoder requires H, W divisible by 4");
      cenc1_ = nn::Conv2d<Real>("sense/conv1", g.channels, 8, Activation::tanh_act,
                                rng);
      cenc2_ = nn::Conv2d<Real>("sense/conv2", 8, 16, Activation::tanh_act, rng);
      conv_flat_ = 16 * (g.view_h / 4) * (g.view_w / 4);
      enc2_ = nn::Dense<Real>("sense/view2", conv_flat_, cfg_.view_code,
                              Activation::tanh_act, rng);
      cenc1_.register_params(store_);
      cenc2_.register_params(store_);
    }
    enc2_.register_params(store_);
    prop_enc_ = nn::Dense<Real>("sense/prop", 3, cfg_.prop_code,
                                Activation::tanh_act, rng);
    prop_enc_.register_params(store_);

    fuse1_ = nn::Dense<Real>("fuse/fc1", cfg_.view_code + cfg_.prop_code,
                             cfg_.fuse_hidden, Activation::tanh_act, rng);
    fuse2_ = nn::Dense<Real>("fuse/fc2", cfg_.fuse_hidden, cfg_.fuse_out,
                             Activation::tanh_act, rng);
    fuse1_.register_params(store_);
    fuse2_.register_params(store_);

    gru_ = nn::GruCell<Real>("aggregate/gru", cfg_.fuse_out, cfg_.hidden, rng);
    gru_.register_params(store_);

    if (cfg_.decoder == DecoderKind::dense) {
      dec1_ = nn::Dense<Real>("decode/fc1", cfg_.hidden, cfg_.dec_hidden,
                              Activation::tanh_act, rng);
      dec2_ = nn::Dense<Real>("decode/fc2", cfg_.dec_hidden, g.grid_numel(),
                              Activation::sigmoid, rng);
      dec1_.register_params(store_);
      dec2_.register_params(store_);
    } else {
      if (g.view_h % 4 || g.view_w % 4)
        throw ShapeMismatchError("conv decoder requires H, W divisible by 4");
      dec_f_ = 16;
      dec_h0_ = g.view_h / 4;
      dec_w0_ = g.view_w / 4;
      dec1_ = nn::Dense<Real>("decode/fc1", cfg_.hidden, dec_f_ * dec_h0_ * dec_w0_,
                              Activation::tanh_act, rng);
      dec_deconv1_ = nn::Deconv2d<Real>("decode/deconv1", dec_f_, 8,
                                        Activation::tanh_act, rng);
      dec_deconv2_ = nn::Deconv2d<Real>("decode/deconv2", 8,
                                        g.n_views() * g.channels,
                                        Activation::sigmoid, rng);
      dec1_.register_params(store_);
      dec_deconv1_.register_params(store_);
      dec_deconv2_.register_params(store_);
    }

    act1_ = nn::Dense<Real>("act/fc1", cfg_.hidden + 3, cfg_.act_hidden,
                            Activation::tanh_act, rng);
    act2_ = nn::Dense<Real>("act/fc2", cfg_.act_hidden, kNumActions,
                            Activation::identity, rng);
    act1_.register_params(store_);
    act2_.register_params(store_);

    if (cfg_.critic == CriticKind::partial) {
      critic1_ = nn::Dense<Real>("critic/fc1", cfg_.hidden + 3, cfg_.critic_hidden,
                                 Activation::tanh_act, rng);
      critic2_ = nn::Dense<Real>("critic/fc2", cfg_.critic_hidden, 1,
                                 Activation::identity, rng);
      critic1_.register_params(store_);
      critic2_.register_params(store_);
    } else if (cfg_.critic == CriticKind::full) {
      grid_fuse_ = nn::Dense<Real>("critic/grid_fuse", g.n_views() * cfg_.view_code,
                                   cfg_.grid_code, Activation::tanh_act, rng);
      critic1_ = nn::Dense<Real>("critic/fc1", cfg_.hidden + 5 + cfg_.grid_code,
                                 cfg_.critic_hidden, Activation::tanh_act, rng);
      critic2_ = nn::Dense<Real>("critic/fc2", cfg_.critic_hidden, 1,
                                 Activation::identity, rng);
      grid_fuse_.register_params(store_);
      critic1_.register_params(store_);
      critic2_.register_params(store_);
    }
  }

  // The store holds raw pointers into layer members.
  CompletionModel(const CompletionModel&) = delete;
  CompletionModel& operator=(const CompletionModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  const GridGeometry& geometry() const { return cfg_.geometry; }
  nn::ParamStore<Real>& params() { return store_; }
  const nn::ParamStore<Real>& params() const { return store_; }

  Tensor<Real> initial_belief() const { return Tensor<Real>({cfg_.hidden}); }

  // --- Sense -------------------------------------------------------------
  Tensor<Real> sense_view(const Tensor<Real>& view, StepCache<Real>& c) const {
    if (cfg_.encoder == EncoderKind::dense) {
      Tensor<Real> flat({cfg_.geometry.view_numel()}, view.data);
      return enc2_.forward(enc1_.forward(flat, c.enc1), c.enc2);
    }
    auto h1 = pool1_.forward(cenc1_.forward(view, c.cenc1), c.pool1);
    auto h2 = pool2_.forward(cenc2_.forward(h1, c.cenc2), c.pool2);
    Tensor<Real> flat({conv_flat_}, std::move(h2.data));
    return enc2_.forward(flat, c.enc2);
  }

  Tensor<Real> sense_prop(const Tensor<Real>& feats, StepCache<Real>& c) const {
    return prop_enc_.forward(feats, c.prop);
  }

  // --- Fuse --------------------------------------------------------------
  Tensor<Real> fuse(const Tensor<Real>& view_code, const Tensor<Real>& prop_code,
                    StepCache<Real>& c) const {
    Tensor<Real> cat({cfg_.view_code + cfg_.prop_code});
    std::copy(view_code.data.begin(), view_code.data.end(), cat.data.begin());
    std::copy(prop_code.data.begin(), prop_code.data.end(),
              cat.data.begin() + std::ptrdiff_t(cfg_.view_code));
    c.view_code = view_code;
    c.prop_code = prop_code;
    return fuse2_.forward(fuse1_.forward(cat, c.fuse1), c.fuse2);
  }

  // --- Aggregate ---------------------------------------------------------
  Tensor<Real> aggregate(const Tensor<Real>& belief, const Tensor<Real>& fused,
                         StepCache<Real>& c) const {
    return gru_.forward(belief, fused, c.gru);
  }

  // --- Decode ------------------------------------------------------------
  Tensor<Real> decode(const Tensor<Real>& belief, StepCache<Real>& c) const {
    c.has_decode = true;
    const auto& g = cfg_.geometry;
    if (cfg_.decoder == DecoderKind::dense) {
      auto flat = dec2_.forward(dec1_.forward(belief, c.dec1), c.dec2);
      return Tensor<Real>({g.n_elev, g.n_azim, g.channels, g.view_h, g.view_w},
                          std::move(flat.data));
    }
    auto flat = dec1_.forward(belief, c.dec1);
    Tensor<Real> grid3({dec_f_, dec_h0_, dec_w0_}, std::move(flat.data));
    auto up = dec_deconv2_.forward(dec_deconv1_.forward(grid3, c.dec_deconv1),
                                   c.dec_deconv2);
    // [MN*C, H, W] -> [N, M, C, H, W] is a pure relabeling in row-major order.
    return Tensor<Real>({g.n_elev, g.n_azim, g.channels, g.view_h, g.view_w},
                        std::move(up.data));
  }

  // --- Act ---------------------------------------------------------------
  Tensor<Real> act(const Tensor<Real>& belief, const Tensor<Real>& prop_feats,
                   StepCache<Real>& c) const {
    c.has_act = true;
    Tensor<Real> cat({cfg_.hidden + 3});
    std::copy(belief.data.begin(), belief.data.end(), cat.data.begin());
    std::copy(prop_feats.data.begin(), prop_feats.data.end(),
              cat.data.begin() + std::ptrdiff_t(cfg_.hidden));
    auto logits = act2_.forward(act1_.forward(cat, c.act1), c.act2);
    Tensor<Real> probs({kNumActions});
    nn::softmax(logits.ptr(), probs.ptr(), kNumActions);
    c.probs = probs;
    return probs;
  }

  // --- Critic ------------------------------------------------------------
  bool has_critic() const { return cfg_.critic != CriticKind::none; }

  GridCodeCache<Real> encode_grid(const Viewgrid& grid) const {
    if (cfg_.critic != CriticKind::full)
      throw UsageError("encode_grid requires the full-observability critic");
    const auto& g = cfg_.geometry;
    GridCodeCache<Real> cache;
    std::size_t mn = g.n_views();
    Tensor<Real> cat({mn * cfg_.view_code});
    cache.enc1.resize(mn);
    cache.enc2.resize(mn);
    cache.cenc1.resize(mn);
    cache.cenc2.resize(mn);
    cache.pool1.resize(mn);
    cache.pool2.resize(mn);
    for (std::size_t v = 0; v < mn; ++v) {
      Tensor<Real> view({g.channels, g.view_h, g.view_w});
      std::size_t base = v * g.view_numel();
      for (std::size_t i = 0; i < g.view_numel(); ++i)
        view[i] = Real(grid.pixels[base + i]);
      Tensor<Real> code;
      if (cfg_.encoder == EncoderKind::dense) {
        Tensor<Real> flat({g.view_numel()}, std::move(view.data));
        code = enc2_.forward(enc1_.forward(flat, cache.enc1[v]), cache.enc2[v]);
      } else {
        auto h1 = pool1_.forward(cenc1_.forward(view, cache.cenc1[v]), cache.pool1[v]);
        auto h2 = pool2_.forward(cenc2_.forward(h1, cache.cenc2[v]), cache.pool2[v]);
        Tensor<Real> flat({conv_flat_}, std::move(h2.data));
        code = enc2_.forward(flat, cache.enc2[v]);
      }
      std::copy(code.data.begin(), code.data.end(),
                cat.data.begin() + std::ptrdiff_t(v * cfg_.view_code));
    }
    cache.code = grid_fuse_.forward(cat, cache.fuse);
    return cache;
  }

  Real critic_value(const Tensor<Real>& belief, const Proprioception& prop,
                    const GridCodeCache<Real>* grid_code, StepCache<Real>& c) const {
    c.has_critic = true;
    Tensor<Real> in;
    if (cfg_.critic == CriticKind::partial) {
      auto pf = prop_features<Real>(prop, cfg_.geometry);
      in = Tensor<Real>({cfg_.hidden + 3});
      std::copy(belief.data.begin(), belief.data.end(), in.data.begin());
      std::copy(pf.data.begin(), pf.data.end(),
                in.data.begin() + std::ptrdiff_t(cfg_.hidden));
    } else if (cfg_.critic == CriticKind::full) {
      if (!grid_code)
        throw UsageError("full-observability critic needs the viewgrid encoding");
      auto pf = prop_features_full<Real>(prop, cfg_.geometry);
      in = Tensor<Real>({cfg_.hidden + 5 + cfg_.grid_code});
      std::copy(belief.data.begin(), belief.data.end(), in.data.begin());
      std::copy(pf.data.begin(), pf.data.end(),
                in.data.begin() + std::ptrdiff_t(cfg_.hidden));
      std::copy(grid_code->code.data.begin(), grid_code->code.data.end(),
                in.data.begin() + std::ptrdiff_t(cfg_.hidden + 5));
    } else {
      throw UsageError("model has no critic");
    }
    return critic2_.forward(critic1_.forward(in, c.critic1), c.critic2)[0];
  }

  // --- Backward passes. All return/accumulate the gradient w.r.t. the
  // belief h_t that fed the corresponding head. -----------------------------

  void backward_decode(StepCache<Real>& c, const Tensor<Real>& grad_decoded,
                       Tensor<Real>& grad_belief) {
    if (!c.has_decode) throw ShapeMismatchError("stale cache: no decode recorded");
    if (cfg_.decoder == DecoderKind::dense) {
      Tensor<Real> flat({cfg_.geometry.grid_numel()}, grad_decoded.data);
      auto g1 = dec2_.backward(c.dec2, flat);
      auto gh = dec1_.backward(c.dec1, g1);
      accumulate(grad_belief, gh);
    } else {
      const auto& g = cfg_.geometry;
      Tensor<Real> up({g.n_views() * g.channels, g.view_h, g.view_w},
                      grad_decoded.data);
      auto gd1 = dec_deconv2_.backward(c.dec_deconv2, up);
      auto gflat3 = dec_deconv1_.backward(c.dec_deconv1, gd1);
      Tensor<Real> gflat({dec_f_ * dec_h0_ * dec_w0_}, std::move(gflat3.data));
      auto gh = dec1_.backward(c.dec1, gflat);
      accumulate(grad_belief, gh);
    }
  }

  // grad on logits (after softmax jacobian has been applied by the caller or
  // via closed form for CE-style losses).
  void backward_act(StepCache<Real>& c, const Tensor<Real>& grad_logits,
                    Tensor<Real>& grad_belief) {
    if (!c.has_act) throw ShapeMismatchError("stale cache: no act recorded");
    auto g1 = act2_.backward(c.act2, grad_logits);
    auto gcat = act1_.backward(c.act1, g1);
    for (std::size_t i = 0; i < cfg_.hidden; ++i) grad_belief[i] += gcat[i];
  }

  void backward_critic(StepCache<Real>& c, Real grad_value, Tensor<Real>& grad_belief,
                       Tensor<Real>* grad_grid_code) {
    if (!c.has_critic) throw ShapeMismatchError("stale cache: no critic recorded");
    Tensor<Real> gv({1});
    gv[0] = grad_value;
    auto g1 = critic2_.backward(c.critic2, gv);
    auto gcat = critic1_.backward(c.critic1, g1);
    for (std::size_t i = 0; i < cfg_.hidden; ++i) grad_belief[i] += gcat[i];
    if (cfg_.critic == CriticKind::full && grad_grid_code) {
      std::size_t off = cfg_.hidden + 5;
      for (std::size_t i = 0; i < cfg_.grid_code; ++i)
        (*grad_grid_code)[i] += gcat[off + i];
    }
  }

  void backward_grid_code(GridCodeCache<Real>& cache, const Tensor<Real>& grad_code,
                          bool into_sense) {
    auto gcat = grid_fuse_.backward(cache.fuse, grad_code);
    if (!into_sense) return;
    const auto& g = cfg_.geometry;
    for (std::size_t v = 0; v < g.n_views(); ++v) {
      Tensor<Real> gcode({cfg_.view_code});
      std::copy(gcat.data.begin() + std::ptrdiff_t(v * cfg_.view_code),
                gcat.data.begin() + std::ptrdiff_t((v + 1) * cfg_.view_code),
                gcode.data.begin());
      auto gflat = enc2_.backward(cache.enc2[v], gcode);
      if (cfg_.encoder == EncoderKind::dense) {
        enc1_.backward(cache.enc1[v], gflat);
      } else {
        auto gp2 = pool2_.backward(cache.pool2[v],
                                   Tensor<Real>({16, g.view_h / 4, g.view_w / 4},
                                                std::move(gflat.data)));
        auto gc2 = cenc2_.backward(cache.cenc2[v], gp2);
        auto gp1 = pool1_.backward(cache.pool1[v], gc2);
        cenc1_.backward(cache.cenc1[v], gp1);
      }
    }
  }

  // Backward through the recurrent cell: grad w.r.t. h_t in, grads w.r.t.
  // fused input and h_{t-1} out.
  std::pair<Tensor<Real>, Tensor<Real>> backward_aggregate(StepCache<Real>& c,
                                                           const Tensor<Real>& grad_h) {
    return gru_.backward(c.gru, grad_h);
  }

  // Backward through fuse and (unless frozen) the sense encoders.
  // Sense and Fuse freeze together, so the cutoff skips both backward passes.
  void backward_fuse_sense(StepCache<Real>& c, const Tensor<Real>& grad_fused,
                           bool into_sense) {
    if (!into_sense) return;
    auto g1 = fuse2_.backward(c.fuse2, grad_fused);
    auto gcat = fuse1_.backward(c.fuse1, g1);
    Tensor<Real> gview({cfg_.view_code}), gprop({cfg_.prop_code});
    std::copy(gcat.data.begin(), gcat.data.begin() + std::ptrdiff_t(cfg_.view_code),
              gview.data.begin());
    std::copy(gcat.data.begin() + std::ptrdiff_t(cfg_.view_code), gcat.data.end(),
              gprop.data.begin());
    prop_enc_.backward(c.prop, gprop);
    auto gflat = enc2_.backward(c.enc2, gview);
    if (cfg_.encoder == EncoderKind::dense) {
      enc1_.backward(c.enc1, gflat);
    } else {
      const auto& g = cfg_.geometry;
      auto gp2 = pool2_.backward(c.pool2, Tensor<Real>({16, g.view_h / 4, g.view_w / 4},
                                                       std::move(gflat.data)));
      auto gc2 = cenc2_.backward(c.cenc2, gp2);
      auto gp1 = pool1_.backward(c.pool1, gc2);
      cenc1_.backward(c.cenc1, gp1);
    }
  }

private:
  static void accumulate(Tensor<Real>& dst, const Tensor<Real>& src) {
    for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
  }

  ModelConfig cfg_;
  nn::ParamStore<Real> store_;
  std::size_t conv_flat_ = 0;
  std::size_t dec_f_ = 0, dec_h0_ = 0, dec_w0_ = 0;

  nn::Dense<Real> enc1_, enc2_, prop_enc_;
  nn::Conv2d<Real> cenc1_, cenc2_;
  nn::AvgPool2<Real> pool1_, pool2_;
  nn::Dense<Real> fuse1_, fuse2_;
  nn::GruCell<Real> gru_;
  nn::Dense<Real> dec1_, dec2_;
  nn::Deconv2d<Real> dec_deconv1_, dec_deconv2_;
  nn::Dense<Real> act1_, act2_;
  nn::Dense<Real> critic1_, critic2_, grid_fuse_;
};

// ---------------------------------------------------------------------------
// Episodes
// ---------------------------------------------------------------------------

enum class ActionSourceKind { agent_sample, agent_argmax, external };

template <typename Real>
struct ActionSource {
  ActionSourceKind kind = ActionSourceKind::agent_sample;
  // For external sources: called with (step index t, current pose).
  std::function<Action(std::size_t, const Pose&)> external;
  // External drives only steps t < external_until; later steps fall back to
  // sampling from the agent's policy (annealed supervision).
  std::size_t external_until = std::size_t(-1);
};

template <typename Real>
struct EpisodeLog {
  std::string sample_id;
  std::vector<Pose> poses;                       // T
  std::vector<Proprioception> props;             // T
  std::vector<Tensor<float>> views;              // T, [C,H,W]
  std::vector<Tensor<Real>> action_probs;        // T-1, [15]
  std::vector<std::size_t> actions;              // T-1
  std::vector<Real> values;                      // T-1 (critic only)
  std::vector<Tensor<Real>> decoded;             // all T (train) or final only
  std::vector<double> rewards;                   // T-1, filled by the trainer
  double final_rec_loss = 0.0;
};

template <typename Real>
struct Unroll {
  EpisodeLog<Real> log;
  std::vector<Tensor<Real>> beliefs;   // h_1..h_T
  std::vector<StepCache<Real>> caches; // per step, kept only in tape mode
  std::optional<GridCodeCache<Real>> grid_code;
};

struct RolloutOptions {
  std::size_t budget = 4;  // T
  bool keep_tape = false;
  bool decode_all = false;  // otherwise only the final step decodes
  bool run_critic = false;
};

// Runs one episode. Exactly T-1 motions are executed; action t is chosen
// after observing view t. The action RNG stream is consumed only by
// agent_sample episodes.
template <typename Real>
Unroll<Real> rollout(const CompletionModel<Real>& model, const Viewgrid& grid,
                     const Pose& start, const RolloutOptions& opts,
                     const ActionSource<Real>& source, Rng& action_rng) {
  if (grid.geometry != model.geometry())
    throw ShapeMismatchError("viewgrid geometry does not match model");
  if (opts.budget < 1) throw UsageError("budget T must be >= 1");
  if (start.elev < 0 || start.elev >= int(model.geometry().n_elev) ||
      start.azim < 0 || start.azim >= int(model.geometry().n_azim))
    throw UsageError("invalid start pose");

  const auto actions = action_space();
  Unroll<Real> un;
  un.log.sample_id = grid.id;
  auto belief = model.initial_belief();
  Pose pose = start;
  std::optional<Pose> prev;

  if (opts.run_critic && model.config().critic == CriticKind::full)
    un.grid_code = model.encode_grid(grid);

  for (std::size_t t = 0; t < opts.budget; ++t) {
    auto [view, prop] = observe(grid, pose, prev);
    un.log.poses.push_back(pose);
    un.log.props.push_back(prop);
    un.log.views.push_back(view);

    StepCache<Real> cache;
    auto view_r = view.template cast<Real>();
    auto pf = prop_features<Real>(prop, model.geometry());
    auto sv = model.sense_view(view_r, cache);
    auto sp = model.sense_prop(pf, cache);
    auto fused = model.fuse(sv, sp, cache);
    belief = model.aggregate(belief, fused, cache);

    bool last = (t + 1 == opts.budget);
    if (opts.decode_all || last)
      un.log.decoded.push_back(model.decode(belief, cache));

    if (!last) {
      auto probs = model.act(belief, pf, cache);
      un.log.action_probs.push_back(probs);
      if (opts.run_critic && model.has_critic())
        un.log.values.push_back(model.critic_value(
            belief, prop, un.grid_code ? &*un.grid_code : nullptr, cache));

      std::size_t a_idx = 0;
      switch (source.kind) {
        case ActionSourceKind::agent_sample:
          a_idx = action_rng.sample_discrete(probs.data);
          break;
        case ActionSourceKind::agent_argmax: {
          // Lexicographic tie-break via strict greater-than scan.
          for (std::size_t i = 1; i < kNumActions; ++i)
            if (probs[i] > probs[a_idx]) a_idx = i;
          break;
        }
        case ActionSourceKind::external:
          if (t < source.external_until)
            a_idx = action_index(source.external(t, pose));
          else
            a_idx = action_rng.sample_discrete(probs.data);
          break;
      }
      un.log.actions.push_back(a_idx);
      prev = pose;
      pose = apply_motion(pose, actions[a_idx], model.geometry());
    }

    un.beliefs.push_back(belief);
    if (opts.keep_tape) un.caches.push_back(std::move(cache));
  }
  return un;
}

// ---------------------------------------------------------------------------
// Checkpoints: manifest.json + params.bin (float32 LE, name-sorted).
// ---------------------------------------------------------------------------

struct CheckpointMeta {
  std::uint64_t training_step = 0;
  std::uint64_t seed = 0;
  std::string note;
};

template <typename Real>
void save_checkpoint(const CompletionModel<Real>& model, const CheckpointMeta& meta,
                     const std::string& dir) {
  ensure_dir(dir);
  auto sorted = model.params().name_sorted();
  std::vector<float> payload;
  nlohmann::json names = nlohmann::json::array();
  for (const auto* p : sorted) {
    nlohmann::json entry = {{"name", p->name}, {"shape", p->value.shape}};
    names.push_back(entry);
    for (Real v : p->value.data) payload.push_back(float(v));
  }
  write_f32(dir + "/params.bin", payload);
  nlohmann::json manifest = {{"format_version", 1},
                             {"kind", "checkpoint"},
                             {"arch", model_config_to_json(model.config())},
                             {"params", names},
                             {"payload_bytes", payload.size() * sizeof(float)},
                             {"endianness", "little"},
                             {"training_step", meta.training_step},
                             {"seed", meta.seed},
                             {"note", meta.note}};
  write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

template <typename Real>
std::unique_ptr<CompletionModel<Real>> load_checkpoint(
    const std::string& dir, CheckpointMeta* meta_out = nullptr) {
  std::string manifest_path = dir + "/manifest.json";
  if (!std::filesystem::exists(manifest_path))
    throw NotFoundError("checkpoint manifest not found: " + manifest_path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  ModelConfig cfg = model_config_from_json(manifest.at("arch"));
  auto model = std::make_unique<CompletionModel<Real>>(cfg);
  auto payload = read_f32(dir + "/params.bin");
  auto sorted = model->params().name_sorted();
  std::size_t expected = 0;
  for (auto* p : sorted) expected += p->value.numel();
  if (payload.size() != expected)
    throw ShapeMismatchError("checkpoint payload has " +
                             std::to_string(payload.size()) + " floats, model needs " +
                             std::to_string(expected));
  std::size_t off = 0;
  for (auto* p : sorted) {
    for (std::size_t i = 0; i < p->value.numel(); ++i)
      p->value[i] = Real(payload[off + i]);
    off += p->value.numel();
  }
  if (meta_out) {
    meta_out->training_step = manifest.value("training_step", std::uint64_t(0));
    meta_out->seed = manifest.value("seed", std::uint64_t(0));
    meta_out->note = manifest.value("note", std::string());
  }
  return model;
}

// Copies checkpoint parameters into an already-built model wherever names and
// shapes line up, leaving the rest (e.g. a freshly attached critic head) at
// their initialization. Returns the number of parameters restored.
template <typename Real>
std::size_t load_matching_params(CompletionModel<Real>& model, const std::string& dir) {
  std::string manifest_path = dir + "/manifest.json";
  if (!std::filesystem::exists(manifest_path))
    throw NotFoundError("checkpoint manifest not found: " + manifest_path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  auto payload = read_f32(dir + "/params.bin");
  std::size_t off = 0, restored = 0;
  for (const auto& entry : manifest.at("params")) {
    std::string name = entry.at("name").get<std::string>();
    Shape shape = entry.at("shape").get<Shape>();
    std::size_t n = shape_numel(shape);
    if (off + n > payload.size())
      throw TruncatedPayloadError("checkpoint payload is shorter than its manifest");
    auto* p = model.params().find(name);
    if (p && p->value.shape == shape) {
      for (std::size_t i = 0; i < n; ++i) p->value[i] = Real(payload[off + i]);
      ++restored;
    }
    off += n;
  }
  return restored;
}

inline std::uint64_t checkpoint_checksum(const std::string& dir) {
  return file_checksum(dir + "/params.bin");
}

}  // namespace sidekick
