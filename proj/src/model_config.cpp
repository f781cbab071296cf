#include "sidekick/agent.hpp"

namespace sidekick {

using nlohmann::json;

namespace {

std::string encoder_name(EncoderKind k) {
  return k == EncoderKind::dense ? "dense" : "conv";
}
std::string decoder_name(DecoderKind k) {
  return k == DecoderKind::dense ? "dense" : "conv";
}
std::string critic_name(CriticKind k) {
  switch (k) {
    case CriticKind::none: return "none";
    case CriticKind::partial: return "partial";
    case CriticKind::full: return "full";
  }
  return "none";
}

}  // namespace

EncoderKind encoder_kind_from(const std::string& s) {
  if (s == "dense") return EncoderKind::dense;
  if (s == "conv") return EncoderKind::conv;
  throw ParseError("unknown encoder kind: " + s);
}

DecoderKind decoder_kind_from(const std::string& s) {
  if (s == "dense") return DecoderKind::dense;
  if (s == "conv") return DecoderKind::conv;
  throw ParseError("unknown decoder kind: " + s);
}

CriticKind critic_kind_from(const std::string& s) {
  if (s == "none") return CriticKind::none;
  if (s == "partial") return CriticKind::partial;
  if (s == "full") return CriticKind::full;
  throw ParseError("unknown critic kind: " + s);
}

json model_config_to_json(const ModelConfig& cfg) {
  return {{"geometry",
           {{"n_elev", cfg.geometry.n_elev},
            {"n_azim", cfg.geometry.n_azim},
            {"channels", cfg.geometry.channels},
            {"view_h", cfg.geometry.view_h},
            {"view_w", cfg.geometry.view_w}}},
          {"encoder", encoder_name(cfg.encoder)},
          {"decoder", decoder_name(cfg.decoder)},
          {"critic", critic_name(cfg.critic)},
          {"view_code", cfg.view_code},
          {"prop_code", cfg.prop_code},
          {"enc_hidden", cfg.enc_hidden},
          {"fuse_hidden", cfg.fuse_hidden},
          {"fuse_out", cfg.fuse_out},
          {"hidden", cfg.hidden},
          {"dec_hidden", cfg.dec_hidden},
          {"act_hidden", cfg.act_hidden},
          {"critic_hidden", cfg.critic_hidden},
          {"grid_code", cfg.grid_code},
          {"init_seed", cfg.init_seed}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig cfg;
  try {
    const auto& g = j.at("geometry");
    cfg.geometry.n_elev = g.at("n_elev").get<std::size_t>();
    cfg.geometry.n_azim = g.at("n_azim").get<std::size_t>();
    cfg.geometry.channels = g.at("channels").get<std::size_t>();
    cfg.geometry.view_h = g.at("view_h").get<std::size_t>();
    cfg.geometry.view_w = g.at("view_w").get<std::size_t>();
    cfg.encoder = encoder_kind_from(j.at("encoder").get<std::string>());
    cfg.decoder = decoder_kind_from(j.at("decoder").get<std::string>());
    cfg.critic = critic_kind_from(j.at("critic").get<std::string>());
    cfg.view_code = j.at("view_code").get<std::size_t>();
    cfg.prop_code = j.at("prop_code").get<std::size_t>();
    cfg.enc_hidden = j.at("enc_hidden").get<std::size_t>();
    cfg.fuse_hidden = j.at("fuse_hidden").get<std::size_t>();
    cfg.fuse_out = j.at("fuse_out").get<std::size_t>();
    cfg.hidden = j.at("hidden").get<std::size_t>();
    cfg.dec_hidden = j.at("dec_hidden").get<std::size_t>();
    cfg.act_hidden = j.at("act_hidden").get<std::size_t>();
    cfg.critic_hidden = j.at("critic_hidden").get<std::size_t>();
    cfg.grid_code = j.at("grid_code").get<std::size_t>();
    cfg.init_seed = j.at("init_seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ParseError("malformed model config: " + std::string(e.what()));
  }
  return cfg;
}

}  // namespace sidekick
