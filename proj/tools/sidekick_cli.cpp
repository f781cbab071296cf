// Command-line pipeline: gen-data -> pretrain -> sidekick -> train -> eval
// -> visualize. Every stage writes a resolved config snapshot plus a stage
// marker keyed by its inputs, so reruns with unchanged inputs are skipped.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "sidekick/episode_io.hpp"
#include "sidekick/evalviz.hpp"
#include "sidekick/sidekick.hpp"
#include "sidekick/trainer.hpp"

using json = nlohmann::json;
using namespace sidekick;

namespace {

using Real = float;  // train-mode precision; tests exercise the double path

std::string out_path(const std::string& path) {
  const char* root = std::getenv("SIDEKICK_OUT_ROOT");
  if (root && *root && !path.empty() && path[0] != '/')
    return std::string(root) + "/" + path;
  return path;
}

std::size_t default_jobs() {
  const char* env = std::getenv("SIDEKICK_JOBS");
  if (env && *env) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end && *end == '\0' && v >= 1) return std::size_t(v);
  }
  return 1;
}

bool stage_done(const std::string& dir, const json& key) {
  std::string path = dir + "/stage.json";
  if (!std::filesystem::exists(path)) return false;
  try {
    json j = json::parse(read_text_file(path));
    return j.value("key", json()) == key;
  } catch (...) {
    return false;
  }
}

void mark_stage(const std::string& dir, const json& key) {
  write_text_file(dir + "/stage.json", json{{"key", key}}.dump(2) + "\n");
}

void write_config_snapshot(const std::string& dir, const json& cfg) {
  write_text_file(dir + "/config.json", cfg.dump(2) + "\n");
}

// Accepts either a checkpoint directory or a stage directory containing one.
std::string resolve_checkpoint(const std::string& dir, const char* stage_name) {
  if (std::filesystem::exists(dir + "/manifest.json")) return dir;
  if (std::filesystem::exists(dir + "/checkpoint/manifest.json"))
    return dir + "/checkpoint";
  throw DependencyError(std::string("no checkpoint found under '") + dir +
                        "' — run the " + stage_name + " stage first");
}

json stage_config_of(const std::string& dir) {
  std::string path = dir + "/config.json";
  if (!std::filesystem::exists(path))
    throw DependencyError("missing stage config: " + path);
  try {
    return json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw ParseError("malformed stage config " + path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const std::string& geom_str, std::size_t n, std::uint64_t seed,
                 const std::string& split, std::string out, bool preview) {
  out = out_path(out);
  SynthSpec spec;
  spec.geometry = parse_geometry(geom_str);
  spec.n_samples = n;
  spec.seed = seed;
  spec.split = split;
  json key = {{"cmd", "gen-data"}, {"geometry", spec.geometry.str()},
              {"n", n},            {"seed", seed},
              {"split", split},    {"preview", preview}};
  if (stage_done(out, key)) {
    std::cout << "gen-data: up to date in " << out << "\n";
    return 0;
  }
  auto ds = generate_synthetic(spec);
  save_dataset(ds, out, preview);
  write_config_snapshot(out, key);
  mark_stage(out, key);
  std::cout << "gen-data: wrote " << n << " samples, geometry "
            << spec.geometry.str() << ", split " << split << " -> " << out << "\n";
  return 0;
}

int cmd_pretrain(const std::string& data_dir, const std::string& val_dir,
                 std::string out, ModelConfig arch, PretrainConfig pcfg) {
  out = out_path(out);
  auto train_ds = load_dataset(data_dir);
  auto val_ds = load_dataset(val_dir.empty() ? data_dir : val_dir);
  arch.geometry = train_ds.geometry;
  arch.init_seed = pcfg.seed;
  json key = {{"cmd", "pretrain"},
              {"arch", model_config_to_json(arch)},
              {"epochs", pcfg.epochs},
              {"batch", pcfg.batch},
              {"lr", pcfg.lr},
              {"weight_decay", pcfg.weight_decay},
              {"val_starts", pcfg.val_starts},
              {"seed", pcfg.seed},
              {"data_checksum", dataset_checksum(data_dir)},
              {"val_checksum", dataset_checksum(val_dir.empty() ? data_dir : val_dir)}};
  if (stage_done(out, key)) {
    std::cout << "pretrain: up to date in " << out << "\n";
    return 0;
  }
  ensure_dir(out);
  CompletionModel<Real> model(arch);
  std::ofstream log(out + "/train_log.jsonl");
  auto result = pretrain_one_view(model, train_ds, val_ds, pcfg, &log);
  CheckpointMeta meta;
  meta.training_step = pcfg.epochs;
  meta.seed = pcfg.seed;
  meta.note = "one-view pretraining";
  save_checkpoint(model, meta, out + "/checkpoint");
  write_config_snapshot(out, key);
  mark_stage(out, key);
  std::cout << "pretrain: final val avg x1000 = " << result.final_val_avg
            << " -> " << out << "\n";
  return 0;
}

int cmd_sidekick(const std::string& data_dir, const std::string& model_dir,
                 std::string out, bool scores, bool cov, std::size_t jobs) {
  out = out_path(out);
  std::string ckpt = resolve_checkpoint(model_dir, "pretrain");
  auto ds = load_dataset(data_dir);
  std::uint64_t ds_sum = dataset_checksum(data_dir);
  std::uint64_t model_sum = checkpoint_checksum(ckpt);
  json key = {{"cmd", "sidekick"},     {"scores", scores},
              {"cov", cov},            {"data_checksum", ds_sum},
              {"model_checksum", model_sum}};
  if (stage_done(out, key)) {
    std::cout << "sidekick: up to date in " << out << "\n";
    return 0;
  }
  auto model = load_checkpoint<Real>(ckpt);
  if (model->geometry() != ds.geometry)
    throw ShapeMismatchError("model and dataset geometry differ");

  SidekickCache cache;
  cache.geometry = ds.geometry;
  cache.dataset_checksum = ds_sum;
  cache.model_checksum = model_sum;
  if (scores) cache.scores.resize(ds.samples.size());
  if (cov) cache.cov.resize(ds.samples.size());
  auto work = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      if (scores) cache.scores[i] = info_score(*model, ds.samples[i]);
      if (cov) cache.cov[i] = coverage_matrix(*model, ds.samples[i]);
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
  save_sidekick_cache(cache, out);
  write_config_snapshot(out, key);
  mark_stage(out, key);
  std::cout << "sidekick: cached " << ds.samples.size() << " samples ("
            << (scores ? "scores " : "") << (cov ? "coverage" : "") << ") -> "
            << out << "\n";
  return 0;
}

int cmd_train(const std::string& data_dir, const std::string& val_dir,
              const std::string& pretrained_dir, const std::string& cache_dir,
              const std::string& val_cache_dir, std::string out, TrainConfig cfg) {
  out = out_path(out);
  auto train_ds = load_dataset(data_dir);
  auto val_ds = load_dataset(val_dir.empty() ? data_dir : val_dir);
  std::string ckpt = resolve_checkpoint(pretrained_dir, "pretrain");

  std::uint64_t ds_sum = dataset_checksum(data_dir);
  std::uint64_t pre_sum = checkpoint_checksum(ckpt);
  SidekickCache cache, val_cache;
  bool have_cache = false, have_val_cache = false;
  if (method_needs_scores(cfg.method) || method_needs_cov(cfg.method)) {
    if (cache_dir.empty())
      throw DependencyError("method " + method_name(cfg.method) +
                            " needs --cache from the sidekick stage");
    cache = load_sidekick_cache(cache_dir, ds_sum, pre_sum);
    have_cache = true;
  }
  if (!val_cache_dir.empty()) {
    val_cache = load_sidekick_cache(val_cache_dir);
    have_val_cache = true;
  }

  json key = {{"cmd", "train"},
              {"config", train_config_to_json(cfg)},
              {"data_checksum", ds_sum},
              {"val_checksum", dataset_checksum(val_dir.empty() ? data_dir : val_dir)},
              {"pretrained_checksum", pre_sum},
              {"cache", have_cache ? json(cache_dir) : json(nullptr)}};
  if (stage_done(out, key)) {
    std::cout << "train: up to date in " << out << "\n";
    return 0;
  }
  ensure_dir(out);

  CheckpointMeta pre_meta;
  auto pre_model = load_checkpoint<Real>(ckpt, &pre_meta);
  ModelConfig arch = pre_model->config();
  arch.critic = method_critic(cfg.method);
  arch.init_seed = cfg.seed;
  CompletionModel<Real> model(arch);
  load_matching_params(model, ckpt);

  std::ofstream log(out + "/train_log.jsonl");
  auto result = train(model, train_ds, val_ds, cfg, have_cache ? &cache : nullptr,
                      have_val_cache ? &val_cache : nullptr, &log);
  CheckpointMeta meta;
  meta.training_step = cfg.epochs;
  meta.seed = cfg.seed;
  meta.note = method_name(cfg.method);
  save_checkpoint(model, meta, out + "/checkpoint");
  json snapshot = train_config_to_json(cfg);
  snapshot["method"] = method_name(cfg.method);
  snapshot["full_obs_at_test"] = result.full_obs_at_test;
  write_config_snapshot(out, snapshot);
  mark_stage(out, key);
  std::cout << "train[" << method_name(cfg.method)
            << "]: final val avg x1000 = " << result.final_val_avg << " -> "
            << out << "\n";
  return 0;
}

int cmd_eval(const std::string& data_dir, const std::vector<std::string>& model_dirs,
             const std::string& demo_cache_dir, std::string out,
             std::size_t budget, std::size_t jobs) {
  out = out_path(out);
  auto ds = load_dataset(data_dir);
  const auto actions = action_space();
  EvalReport report;
  report.geometry = ds.geometry;
  report.n_samples = ds.samples.size();
  report.budget = budget;
  report.split = ds.split;

  SidekickCache demo_cache;
  bool have_demo = false;
  if (!demo_cache_dir.empty()) {
    demo_cache = load_sidekick_cache(demo_cache_dir, dataset_checksum(data_dir));
    have_demo = true;
  }

  for (const auto& dir_raw : model_dirs) {
    std::string dir = out_path(dir_raw);
    json cfg = stage_config_of(dir);
    std::string method = cfg.value("method", std::string("model"));
    std::string ckpt = resolve_checkpoint(dir, "train");
    auto model = load_checkpoint<Real>(ckpt);
    if (model->geometry() != ds.geometry)
      throw ShapeMismatchError("model '" + dir + "' geometry does not match dataset");

    std::size_t model_budget = method == "one-view" ? 1 : budget;
    std::function<ActionSource<Real>(const Viewgrid&)> source_for;
    const std::function<ActionSource<Real>(const Viewgrid&)>* source_ptr = nullptr;
    bool full_obs = cfg.value("full_obs_at_test", method == "demo-actions");
    if (method == "demo-actions") {
      if (!have_demo || demo_cache.cov.empty())
        throw DependencyError(
            "demo-actions needs --demo-cache with coverage for the eval dataset");
      std::unordered_map<std::string, const CoverageMatrix*> cov_of;
      for (const auto& cm : demo_cache.cov) cov_of[cm.sample_id] = &cm;
      const auto& geom = ds.geometry;
      source_for = [cov_of, &geom, &actions](const Viewgrid& grid) {
        ActionSource<Real> s;
        s.kind = ActionSourceKind::external;
        auto selected = std::make_shared<std::vector<Pose>>();
        const CoverageMatrix* cm = cov_of.at(grid.id);
        s.external = [selected, cm, &geom, &actions](std::size_t t, const Pose& pose) {
          if (t == 0) selected->clear();
          selected->push_back(pose);
          return actions[demo_step(*cm, geom, *selected, pose)];
        };
        return s;
      };
      source_ptr = &source_for;
    }
    auto entry = evaluate(*model, ds, model_budget, method, source_ptr, jobs);
    entry.full_obs_at_test = full_obs;
    report.entries.push_back(std::move(entry));
  }
  finalize_report(report);
  save_eval_report(report, out);
  std::cout << eval_report_table(report);
  std::cout << "eval: report -> " << out << "\n";
  return 0;
}

int cmd_visualize(const std::string& model_dir, const std::string& data_dir,
                  std::size_t sample, int start_elev, int start_azim,
                  std::size_t budget, std::uint64_t seed, std::string out) {
  out = out_path(out);
  auto ds = load_dataset(data_dir);
  if (sample >= ds.samples.size())
    throw UsageError("sample index out of range (dataset has " +
                     std::to_string(ds.samples.size()) + ")");
  std::string ckpt = resolve_checkpoint(out_path(model_dir), "train");
  auto model = load_checkpoint<Real>(ckpt);
  const auto& grid = ds.samples[sample];
  const auto& geom = ds.geometry;

  RolloutOptions opts;
  opts.budget = budget;
  opts.decode_all = true;
  ActionSource<Real> src;
  src.kind = ActionSourceKind::agent_argmax;
  Rng rng(seed, "visualize");
  auto un = rollout(*model, grid, Pose{start_elev, start_azim}, opts, src, rng);
  un.log.final_rec_loss =
      reconstruction_loss(un.log.decoded.back(), grid, start_azim);

  ensure_dir(out);
  save_episode(un.log, geom, out + "/episode");

  // Ground truth and final reconstruction (shifted back to absolute azimuth).
  RenderOverlay plain;
  write_ppm(render_montage(grid.pixels, geom, plain), out + "/ground_truth.ppm");
  Tensor<float> recon({geom.n_elev, geom.n_azim, geom.channels, geom.view_h,
                       geom.view_w});
  std::size_t vn = geom.view_numel();
  const auto& final_dec = un.log.decoded.back();
  for (std::size_t e = 0; e < geom.n_elev; ++e)
    for (std::size_t a_ego = 0; a_ego < geom.n_azim; ++a_ego) {
      std::size_t a_abs = (a_ego + std::size_t(start_azim)) % geom.n_azim;
      for (std::size_t i = 0; i < vn; ++i)
        recon.data[(e * geom.n_azim + a_abs) * vn + i] =
            float(final_dec[(e * geom.n_azim + a_ego) * vn + i]);
    }
  write_ppm(render_montage(recon, geom, plain), out + "/reconstruction.ppm");

  // Per-decision heatmaps from the belief perturbation.
  json hj = json::array();
  for (std::size_t t = 0; t + 1 < un.beliefs.size(); ++t) {
    PerturbConfig pcfg;
    pcfg.seed = seed + t;
    auto pf = prop_features<Real>(un.log.props[t], geom);
    auto res = belief_perturbation(*model, un.beliefs[t], pf, pcfg);
    auto h = heatmap(*model, un.beliefs[t], res.delta, res.norm_ratio);
    RenderOverlay ov;
    for (std::size_t k = 0; k <= t; ++k) ov.observed.push_back(un.log.poses[k]);
    ov.arrows.push_back({un.log.poses[t], un.log.poses[t + 1]});
    ov.heat = &h;
    write_ppm(render_montage(grid.pixels, geom, ov),
              out + "/step" + std::to_string(t) + "_heatmap.ppm");
    hj.push_back({{"step", t},
                  {"objective", res.objective},
                  {"norm_ratio", res.norm_ratio},
                  {"iters", res.iters},
                  {"intensity", h.intensity}});
  }
  write_text_file(out + "/heatmaps.json", hj.dump(2) + "\n");
  json key = {{"cmd", "visualize"}, {"sample", sample},
              {"start", {start_elev, start_azim}}, {"budget", budget},
              {"seed", seed}};
  write_config_snapshot(out, key);
  std::cout << "visualize: episode with " << un.log.actions.size()
            << " actions, final rec x1000 = " << un.log.final_rec_loss * 1000.0
            << " -> " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active viewgrid completion: data, training, sidekicks, "
               "evaluation and visualization"};
  app.require_subcommand(1);
  std::size_t jobs = default_jobs();
  app.add_option("--jobs", jobs, "Parallel workers for eval/sidekick stages");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  std::string geom = "4x8x1x16x16", split = "train", out;
  std::size_t n = 200;
  std::uint64_t seed = 0;
  bool preview = false;
  gen->add_option("--geom", geom, "Geometry NxMxCxHxW");
  gen->add_option("--n", n, "Number of samples");
  gen->add_option("--seed", seed, "RNG seed");
  gen->add_option("--split", split, "Split tag (train/val/test)");
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_flag("--preview", preview, "Also write montage previews");

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "Train the one-glimpse completion model");
  std::string data_dir, val_dir;
  ModelConfig arch;
  PretrainConfig pcfg;
  std::string enc = "dense", dec = "dense";
  pre->add_option("--data", data_dir, "Training dataset dir")->required();
  pre->add_option("--val", val_dir, "Validation dataset dir");
  pre->add_option("--out", out, "Output directory")->required();
  pre->add_option("--epochs", pcfg.epochs);
  pre->add_option("--batch", pcfg.batch);
  pre->add_option("--lr", pcfg.lr);
  pre->add_option("--weight-decay", pcfg.weight_decay);
  pre->add_option("--val-starts", pcfg.val_starts);
  pre->add_option("--seed", pcfg.seed);
  pre->add_option("--encoder", enc, "dense|conv");
  pre->add_option("--decoder", dec, "dense|conv");
  pre->add_option("--view-code", arch.view_code);
  pre->add_option("--enc-hidden", arch.enc_hidden);
  pre->add_option("--fuse-hidden", arch.fuse_hidden);
  pre->add_option("--fuse-out", arch.fuse_out);
  pre->add_option("--hidden", arch.hidden);
  pre->add_option("--dec-hidden", arch.dec_hidden);
  pre->add_option("--act-hidden", arch.act_hidden);

  // sidekick
  auto* side = app.add_subcommand("sidekick", "Precompute sidekick scores/coverage");
  std::string model_dir;
  bool want_scores = false, want_cov = false;
  side->add_option("--data", data_dir, "Dataset dir")->required();
  side->add_option("--model", model_dir, "Pretrained model dir")->required();
  side->add_option("--out", out, "Output directory")->required();
  side->add_flag("--scores", want_scores, "Precompute per-view scores");
  side->add_flag("--cov", want_cov, "Precompute coverage matrices");

  // train
  auto* tr = app.add_subcommand("train", "End-to-end training with a method");
  std::string method = "ltla", cache_dir, val_cache_dir, config_file;
  TrainConfig tcfg;
  tr->add_option("--data", data_dir, "Training dataset dir")->required();
  tr->add_option("--val", val_dir, "Validation dataset dir");
  tr->add_option("--pretrained", model_dir, "Pretrain stage dir")->required();
  tr->add_option("--cache", cache_dir, "Sidekick cache dir");
  tr->add_option("--val-cache", val_cache_dir, "Sidekick cache for the val split");
  tr->add_option("--out", out, "Output directory")->required();
  tr->add_option("--method", method, "Training method");
  tr->add_option("--config", config_file, "JSON config file (flags override)");
  tr->add_option("--epochs", tcfg.epochs);
  tr->add_option("--batch", tcfg.batch);
  tr->add_option("--budget", tcfg.budget, "Glimpse budget T");
  tr->add_option("--lr", tcfg.lr);
  tr->add_option("--weight-decay", tcfg.weight_decay);
  tr->add_option("--lambda-rec", tcfg.lambda_rec);
  tr->add_option("--lambda-pol", tcfg.lambda_pol);
  tr->add_option("--entropy-weight", tcfg.entropy_weight);
  tr->add_option("--reward-scale", tcfg.reward_scale);
  tr->add_option("--reward-decay-factor", tcfg.reward_decay_factor);
  tr->add_option("--reward-decay-interval", tcfg.reward_decay_interval);
  tr->add_option("--t-sup-interval", tcfg.t_sup_decay_interval);
  tr->add_option("--val-starts", tcfg.val_starts);
  tr->add_option("--seed", tcfg.seed);

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate trained models (avg/adv)");
  std::vector<std::string> model_dirs;
  std::string demo_cache_dir;
  std::size_t budget = 4;
  ev->add_option("--data", data_dir, "Evaluation dataset dir")->required();
  ev->add_option("--model", model_dirs, "Train stage dir (repeatable)")->required();
  ev->add_option("--demo-cache", demo_cache_dir,
                 "Coverage cache on the eval split (demo-actions)");
  ev->add_option("--budget", budget, "Glimpse budget T");
  ev->add_option("--out", out, "Output directory")->required();

  // visualize
  auto* vis = app.add_subcommand("visualize", "Policy heatmaps for one episode");
  std::size_t sample = 0;
  int start_elev = 0, start_azim = 0;
  vis->add_option("--model", model_dir, "Train stage dir")->required();
  vis->add_option("--data", data_dir, "Dataset dir")->required();
  vis->add_option("--sample", sample, "Sample index");
  vis->add_option("--start-elev", start_elev);
  vis->add_option("--start-azim", start_azim);
  vis->add_option("--budget", budget, "Glimpse budget T");
  vis->add_option("--seed", seed, "Perturbation seed");
  vis->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return int(ErrorCode::usage);
  }

  try {
    if (gen->parsed())
      return cmd_gen_data(geom, n, seed, split, out, preview);
    if (pre->parsed()) {
      arch.encoder = encoder_kind_from(enc);
      arch.decoder = decoder_kind_from(dec);
      return cmd_pretrain(data_dir, val_dir, out, arch, pcfg);
    }
    if (side->parsed()) {
      if (!want_scores && !want_cov) want_scores = want_cov = true;
      return cmd_sidekick(data_dir, model_dir, out, want_scores, want_cov, jobs);
    }
    if (tr->parsed()) {
      if (!config_file.empty()) {
        // File supplies the base config; explicit flags stay on top (CLI11
        // already wrote them into tcfg, so only un-set fields are replaced).
        TrainConfig base;
        try {
          base = train_config_from_json(json::parse(read_text_file(config_file)));
        } catch (const json::exception& e) {
          throw ParseError("malformed config file: " + std::string(e.what()));
        }
        auto keep = [&](const char* flag) { return tr->count(flag) > 0; };
        if (!keep("--method")) method = method_name(base.method);
        if (!keep("--epochs")) tcfg.epochs = base.epochs;
        if (!keep("--batch")) tcfg.batch = base.batch;
        if (!keep("--budget")) tcfg.budget = base.budget;
        if (!keep("--lr")) tcfg.lr = base.lr;
        if (!keep("--weight-decay")) tcfg.weight_decay = base.weight_decay;
        if (!keep("--lambda-rec")) tcfg.lambda_rec = base.lambda_rec;
        if (!keep("--lambda-pol")) tcfg.lambda_pol = base.lambda_pol;
        if (!keep("--entropy-weight")) tcfg.entropy_weight = base.entropy_weight;
        if (!keep("--reward-scale")) tcfg.reward_scale = base.reward_scale;
        if (!keep("--reward-decay-factor"))
          tcfg.reward_decay_factor = base.reward_decay_factor;
        if (!keep("--reward-decay-interval"))
          tcfg.reward_decay_interval = base.reward_decay_interval;
        if (!keep("--t-sup-interval"))
          tcfg.t_sup_decay_interval = base.t_sup_decay_interval;
        if (!keep("--val-starts")) tcfg.val_starts = base.val_starts;
        if (!keep("--seed")) tcfg.seed = base.seed;
        tcfg.baseline_decay = base.baseline_decay;
        tcfg.freeze_sense_fuse = base.freeze_sense_fuse;
      }
      tcfg.method = method_from(method);
      return cmd_train(data_dir, val_dir, model_dir, cache_dir, val_cache_dir, out,
                       tcfg);
    }
    if (ev->parsed())
      return cmd_eval(data_dir, model_dirs, demo_cache_dir, out, budget, jobs);
    if (vis->parsed())
      return cmd_visualize(model_dir, data_dir, sample, start_elev, start_azim,
                           budget, seed, out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return int(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
