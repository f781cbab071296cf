#pragma once

#include <string>

#include <json.hpp>

#include "sidekick/agent.hpp"
#include "sidekick/io.hpp"

namespace sidekick {

// Episode files: episode.json carries the discrete record (poses, actions,
// rewards); episode.bin carries the float payload (views, action
// distributions, critic values, decoded grids) as float32 LE in that order.

template <typename Real>
void save_episode(const EpisodeLog<Real>& ep, const GridGeometry& geom,
                  const std::string& dir) {
  ensure_dir(dir);
  nlohmann::json j;
  j["format_version"] = 1;
  j["kind"] = "episode";
  j["sample_id"] = ep.sample_id;
  j["geometry"] = geom.str();
  j["endianness"] = "little";
  auto poses = nlohmann::json::array();
  for (const auto& p : ep.poses) poses.push_back({p.elev, p.azim});
  j["poses"] = poses;
  auto props = nlohmann::json::array();
  for (const auto& p : ep.props)
    props.push_back({p.elev_abs, p.d_elev_prev, p.d_azim_prev, p.azim_abs});
  j["props"] = props;
  j["actions"] = ep.actions;
  j["rewards"] = ep.rewards;
  j["final_rec_loss"] = ep.final_rec_loss;
  j["n_views"] = ep.views.size();
  j["n_probs"] = ep.action_probs.size();
  j["n_values"] = ep.values.size();
  j["n_decoded"] = ep.decoded.size();

  std::vector<float> payload;
  for (const auto& v : ep.views)
    for (float x : v.data) payload.push_back(x);
  for (const auto& p : ep.action_probs)
    for (Real x : p.data) payload.push_back(float(x));
  for (Real v : ep.values) payload.push_back(float(v));
  for (const auto& d : ep.decoded)
    for (Real x : d.data) payload.push_back(float(x));
  j["payload_bytes"] = payload.size() * sizeof(float);
  write_f32(dir + "/episode.bin", payload);
  write_text_file(dir + "/episode.json", j.dump(2) + "\n");
}

inline EpisodeLog<float> load_episode(const std::string& dir, GridGeometry* geom_out) {
  std::string manifest_path = dir + "/episode.json";
  if (!std::filesystem::exists(manifest_path))
    throw NotFoundError("episode manifest not found: " + manifest_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed episode manifest: " + std::string(e.what()));
  }
  EpisodeLog<float> ep;
  GridGeometry geom;
  std::size_t n_views = 0, n_probs = 0, n_values = 0, n_decoded = 0, bytes = 0;
  try {
    geom = parse_geometry(j.at("geometry").get<std::string>());
    ep.sample_id = j.at("sample_id").get<std::string>();
    for (const auto& p : j.at("poses"))
      ep.poses.push_back(Pose{p.at(0).get<int>(), p.at(1).get<int>()});
    for (const auto& p : j.at("props"))
      ep.props.push_back(Proprioception{p.at(0).get<int>(), p.at(1).get<int>(),
                                        p.at(2).get<int>(), p.at(3).get<int>()});
    ep.actions = j.at("actions").get<std::vector<std::size_t>>();
    ep.rewards = j.at("rewards").get<std::vector<double>>();
    ep.final_rec_loss = j.at("final_rec_loss").get<double>();
    n_views = j.at("n_views").get<std::size_t>();
    n_probs = j.at("n_probs").get<std::size_t>();
    n_values = j.at("n_values").get<std::size_t>();
    n_decoded = j.at("n_decoded").get<std::size_t>();
    bytes = j.at("payload_bytes").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed episode manifest: " + std::string(e.what()));
  }
  std::size_t expect = n_views * geom.view_numel() + n_probs * kNumActions +
                       n_values + n_decoded * geom.grid_numel();
  if (bytes != expect * sizeof(float))
    throw ShapeMismatchError("episode payload size disagrees with its manifest");
  auto payload = read_f32(dir + "/episode.bin");
  if (payload.size() != expect)
    throw TruncatedPayloadError("episode.bin is truncated or oversized");
  std::size_t off = 0;
  for (std::size_t i = 0; i < n_views; ++i) {
    Tensor<float> v({geom.channels, geom.view_h, geom.view_w});
    std::copy_n(payload.begin() + std::ptrdiff_t(off), v.numel(), v.data.begin());
    off += v.numel();
    ep.views.push_back(std::move(v));
  }
  for (std::size_t i = 0; i < n_probs; ++i) {
    Tensor<float> p({kNumActions});
    std::copy_n(payload.begin() + std::ptrdiff_t(off), kNumActions, p.data.begin());
    off += kNumActions;
    ep.action_probs.push_back(std::move(p));
  }
  for (std::size_t i = 0; i < n_values; ++i) ep.values.push_back(payload[off++]);
  for (std::size_t i = 0; i < n_decoded; ++i) {
    Tensor<float> d({geom.n_elev, geom.n_azim, geom.channels, geom.view_h,
                     geom.view_w});
    std::copy_n(payload.begin() + std::ptrdiff_t(off), d.numel(), d.data.begin());
    off += d.numel();
    ep.decoded.push_back(std::move(d));
  }
  if (geom_out) *geom_out = geom;
  return ep;
}

}  // namespace sidekick
