#include "sidekick/sidekick.hpp"

#include <cmath>

#include <json.hpp>

#include "sidekick/io.hpp"

namespace sidekick {

using nlohmann::json;

namespace {

// Chebyshev distance on the viewgrid: azimuth wraps, elevation does not.
int grid_cheby(const Pose& a, const Pose& b, const GridGeometry& g) {
  int da = std::abs(wrap_azim_delta(a.azim, b.azim, g.n_azim));
  int de = std::abs(a.elev - b.elev);
  return std::max(da, de);
}

}  // namespace

NmsResult nms_select(const std::vector<float>& scores, const GridGeometry& geom,
                     std::size_t k, int radius) {
  std::size_t mn = geom.n_views();
  if (scores.size() != mn)
    throw ShapeMismatchError("score map has " + std::to_string(scores.size()) +
                             " entries, geometry implies " + std::to_string(mn));
  if (k > mn)
    throw UsageError("cannot select " + std::to_string(k) + " views from a grid of " +
                     std::to_string(mn));
  if (radius < 0) throw UsageError("nms radius must be >= 0");

  NmsResult out;
  std::vector<bool> taken(mn, false), suppressed(mn, false);
  auto pose_of = [&](std::size_t i) {
    return Pose{int(i / geom.n_azim), int(i % geom.n_azim)};
  };
  while (out.poses.size() < k) {
    std::ptrdiff_t best = -1;
    for (std::size_t i = 0; i < mn; ++i) {
      if (taken[i] || suppressed[i]) continue;
      if (best < 0 || scores[i] > scores[std::size_t(best)]) best = std::ptrdiff_t(i);
    }
    if (best < 0) {
      // Everything unselected is suppressed; finish without the constraint.
      out.relaxed = true;
      for (std::size_t i = 0; i < mn; ++i) {
        if (taken[i]) continue;
        if (best < 0 || scores[i] > scores[std::size_t(best)]) best = std::ptrdiff_t(i);
      }
    }
    std::size_t pick = std::size_t(best);
    taken[pick] = true;
    out.poses.push_back(pose_of(pick));
    for (std::size_t i = 0; i < mn; ++i)
      if (grid_cheby(pose_of(pick), pose_of(i), geom) <= radius) suppressed[i] = true;
  }
  return out;
}

double coverage_objective(const CoverageMatrix& cov, const GridGeometry& geom,
                          const std::vector<Pose>& selected) {
  std::size_t mn = geom.n_views();
  if (cov.cov.size() != mn * mn)
    throw ShapeMismatchError("coverage matrix size does not match geometry");
  double total = 0.0;
  for (std::size_t j = 0; j < mn; ++j) {
    double c = 0.0;
    for (const auto& p : selected)
      c += double(cov.cov[(std::size_t(p.elev) * geom.n_azim + std::size_t(p.azim)) * mn + j]);
    total += std::min(1.0, c);
  }
  return total / double(mn);
}

std::size_t demo_step(const CoverageMatrix& cov, const GridGeometry& geom,
                      const std::vector<Pose>& selected, const Pose& pose) {
  const auto actions = action_space();
  std::vector<Pose> trial = selected;
  trial.push_back(pose);  // placeholder slot for the candidate successor
  std::size_t best = 0;
  double best_obj = -1.0;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    trial.back() = apply_motion(pose, actions[i], geom);
    double obj = coverage_objective(cov, geom, trial);
    if (obj > best_obj) {
      best_obj = obj;
      best = i;
    }
  }
  return best;
}

DemoTrajectory demo_trajectory(const CoverageMatrix& cov, const GridGeometry& geom,
                               const Pose& start, std::size_t budget) {
  if (budget < 1) throw UsageError("budget T must be >= 1");
  const auto actions = action_space();
  DemoTrajectory out;
  out.poses.push_back(start);
  out.objectives.push_back(coverage_objective(cov, geom, out.poses));
  for (std::size_t t = 1; t < budget; ++t) {
    std::size_t a = demo_step(cov, geom, out.poses, out.poses.back());
    out.actions.push_back(a);
    out.poses.push_back(apply_motion(out.poses.back(), actions[a], geom));
    out.objectives.push_back(coverage_objective(cov, geom, out.poses));
  }
  return out;
}

void save_sidekick_cache(const SidekickCache& cache, const std::string& dir) {
  ensure_dir(dir);
  json ids = json::array();
  const std::size_t n =
      cache.scores.empty() ? cache.cov.size() : cache.scores.size();
  if (!cache.scores.empty() && !cache.cov.empty() &&
      cache.scores.size() != cache.cov.size())
    throw ShapeMismatchError("score and coverage sample counts differ");
  for (std::size_t i = 0; i < n; ++i)
    ids.push_back(cache.scores.empty() ? cache.cov[i].sample_id
                                       : cache.scores[i].sample_id);

  std::size_t score_bytes = 0, cov_bytes = 0;
  if (!cache.scores.empty()) {
    std::vector<float> payload;
    payload.reserve(n * cache.geometry.n_views());
    for (const auto& sm : cache.scores) {
      if (sm.scores.size() != cache.geometry.n_views())
        throw ShapeMismatchError("score map size does not match geometry");
      payload.insert(payload.end(), sm.scores.begin(), sm.scores.end());
    }
    write_f32(dir + "/scores.bin", payload);
    score_bytes = payload.size() * sizeof(float);
  }
  if (!cache.cov.empty()) {
    std::size_t mn = cache.geometry.n_views();
    std::vector<float> payload;
    payload.reserve(n * mn * mn);
    for (const auto& cm : cache.cov) {
      if (cm.cov.size() != mn * mn)
        throw ShapeMismatchError("coverage matrix size does not match geometry");
      payload.insert(payload.end(), cm.cov.begin(), cm.cov.end());
    }
    write_f32(dir + "/cov.bin", payload);
    cov_bytes = payload.size() * sizeof(float);
  }

  json manifest = {{"format_version", 1},
                   {"kind", "sidekick_cache"},
                   {"geometry", cache.geometry.str()},
                   {"n_samples", n},
                   {"ids", ids},
                   {"dataset_checksum", cache.dataset_checksum},
                   {"model_checksum", cache.model_checksum},
                   {"has_scores", !cache.scores.empty()},
                   {"has_cov", !cache.cov.empty()},
                   {"score_bytes", score_bytes},
                   {"cov_bytes", cov_bytes},
                   {"endianness", "little"}};
  write_text_file(dir + "/sidekick.json", manifest.dump(2) + "\n");
}

SidekickCache load_sidekick_cache(const std::string& dir,
                                  std::optional<std::uint64_t> expect_dataset,
                                  std::optional<std::uint64_t> expect_model) {
  std::string manifest_path = dir + "/sidekick.json";
  if (!std::filesystem::exists(manifest_path))
    throw NotFoundError("sidekick cache manifest not found: " + manifest_path);
  json manifest;
  try {
    manifest = json::parse(read_text_file(manifest_path));
  } catch (const json::exception& e) {
    throw ParseError("malformed sidekick manifest: " + std::string(e.what()));
  }

  SidekickCache cache;
  std::size_t n = 0;
  std::vector<std::string> ids;
  bool has_scores = false, has_cov = false;
  std::size_t score_bytes = 0, cov_bytes = 0;
  try {
    cache.geometry = parse_geometry(manifest.at("geometry").get<std::string>());
    n = manifest.at("n_samples").get<std::size_t>();
    ids = manifest.at("ids").get<std::vector<std::string>>();
    cache.dataset_checksum = manifest.at("dataset_checksum").get<std::uint64_t>();
    cache.model_checksum = manifest.at("model_checksum").get<std::uint64_t>();
    has_scores = manifest.at("has_scores").get<bool>();
    has_cov = manifest.at("has_cov").get<bool>();
    score_bytes = manifest.at("score_bytes").get<std::size_t>();
    cov_bytes = manifest.at("cov_bytes").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ParseError("malformed sidekick manifest: " + std::string(e.what()));
  }
  if (ids.size() != n)
    throw ShapeMismatchError("sidekick manifest lists " + std::to_string(ids.size()) +
                             " ids for " + std::to_string(n) + " samples");

  if (expect_dataset && *expect_dataset != cache.dataset_checksum)
    throw ChecksumError("sidekick cache was built for a different dataset");
  if (expect_model && *expect_model != cache.model_checksum)
    throw ChecksumError("sidekick cache was built by a different model");

  std::size_t mn = cache.geometry.n_views();
  if (has_scores) {
    if (score_bytes != n * mn * sizeof(float))
      throw ShapeMismatchError("sidekick score payload size does not match manifest");
    auto payload = read_f32(dir + "/scores.bin");
    if (payload.size() * sizeof(float) != score_bytes)
      throw TruncatedPayloadError("scores.bin is truncated or oversized");
    for (std::size_t i = 0; i < n; ++i) {
      ScoreMap sm;
      sm.sample_id = ids[i];
      sm.scores.assign(payload.begin() + std::ptrdiff_t(i * mn),
                       payload.begin() + std::ptrdiff_t((i + 1) * mn));
      cache.scores.push_back(std::move(sm));
    }
  }
  if (has_cov) {
    if (cov_bytes != n * mn * mn * sizeof(float))
      throw ShapeMismatchError("sidekick coverage payload size does not match manifest");
    auto payload = read_f32(dir + "/cov.bin");
    if (payload.size() * sizeof(float) != cov_bytes)
      throw TruncatedPayloadError("cov.bin is truncated or oversized");
    for (std::size_t i = 0; i < n; ++i) {
      CoverageMatrix cm;
      cm.sample_id = ids[i];
      cm.cov.assign(payload.begin() + std::ptrdiff_t(i * mn * mn),
                    payload.begin() + std::ptrdiff_t((i + 1) * mn * mn));
      cache.cov.push_back(std::move(cm));
    }
  }
  return cache;
}

}  // namespace sidekick
