#include "sidekick/trainer.hpp"

namespace sidekick {

using nlohmann::json;

std::string method_name(Method m) {
  switch (m) {
    case Method::one_view: return "one-view";
    case Method::rnd_actions: return "rnd-actions";
    case Method::rnd_rewards: return "rnd-rewards";
    case Method::ltla: return "ltla";
    case Method::asymm_ac: return "asymm-ac";
    case Method::ours_rew: return "ours-rew";
    case Method::ours_demo: return "ours-demo";
    case Method::ours_rew_ac: return "ours-rew-ac";
    case Method::ours_demo_ac: return "ours-demo-ac";
    case Method::demo_actions: return "demo-actions";
  }
  return "unknown";
}

Method method_from(const std::string& s) {
  for (Method m : {Method::one_view, Method::rnd_actions, Method::rnd_rewards,
                   Method::ltla, Method::asymm_ac, Method::ours_rew,
                   Method::ours_demo, Method::ours_rew_ac, Method::ours_demo_ac,
                   Method::demo_actions})
    if (method_name(m) == s) return m;
  throw UsageError("unknown method: " + s);
}

json train_config_to_json(const TrainConfig& cfg) {
  return {{"method", method_name(cfg.method)},
          {"epochs", cfg.epochs},
          {"batch", cfg.batch},
          {"budget", cfg.budget},
          {"lambda_rec", cfg.lambda_rec},
          {"lambda_pol", cfg.lambda_pol},
          {"lr", cfg.lr},
          {"weight_decay", cfg.weight_decay},
          {"entropy_weight", cfg.entropy_weight},
          {"baseline_decay", cfg.baseline_decay},
          {"reward_scale", cfg.reward_scale},
          {"reward_decay_factor", cfg.reward_decay_factor},
          {"reward_decay_interval", cfg.reward_decay_interval},
          {"t_sup_decay_interval", cfg.t_sup_decay_interval},
          {"val_starts", cfg.val_starts},
          {"seed", cfg.seed},
          {"freeze_sense_fuse", cfg.freeze_sense_fuse}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  try {
    if (j.contains("method")) cfg.method = method_from(j.at("method").get<std::string>());
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch = j.value("batch", cfg.batch);
    cfg.budget = j.value("budget", cfg.budget);
    cfg.lambda_rec = j.value("lambda_rec", cfg.lambda_rec);
    cfg.lambda_pol = j.value("lambda_pol", cfg.lambda_pol);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.entropy_weight = j.value("entropy_weight", cfg.entropy_weight);
    cfg.baseline_decay = j.value("baseline_decay", cfg.baseline_decay);
    cfg.reward_scale = j.value("reward_scale", cfg.reward_scale);
    cfg.reward_decay_factor = j.value("reward_decay_factor", cfg.reward_decay_factor);
    cfg.reward_decay_interval =
        j.value("reward_decay_interval", cfg.reward_decay_interval);
    cfg.t_sup_decay_interval =
        j.value("t_sup_decay_interval", cfg.t_sup_decay_interval);
    cfg.val_starts = j.value("val_starts", cfg.val_starts);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.freeze_sense_fuse = j.value("freeze_sense_fuse", cfg.freeze_sense_fuse);
  } catch (const json::exception& e) {
    throw ParseError("malformed training config: " + std::string(e.what()));
  }
  if (cfg.lambda_rec < 0 || cfg.lambda_pol < 0)
    throw UsageError("loss weights must be nonnegative");
  return cfg;
}

}  // namespace sidekick
