#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>

#include "sidekick/sidekick.hpp"

using namespace sidekick;

namespace {

std::string temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("sidekick-sk-" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

int wrapped_cheby(const Pose& a, const Pose& b, const GridGeometry& g) {
  int de = std::abs(a.elev - b.elev);
  int da = std::abs(a.azim - b.azim);
  da = std::min(da, int(g.n_azim) - da);
  return std::max(de, da);
}

// Reference selection written against the stated semantics with a different
// mechanism: sort candidates by (-score, elev, azim) once, then sweep the
// sorted list each round for the first pick that is neither taken nor within
// the suppression radius of an earlier pick. Relaxes when a sweep finds
// nothing.
NmsResult nms_oracle(const std::vector<float>& scores, const GridGeometry& g,
                     std::size_t k, int radius) {
  std::size_t mn = g.n_views();
  std::vector<std::size_t> order(mn);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (scores[x] != scores[y]) return scores[x] > scores[y];
    return x < y;  // row-major index order == (elev, azim) lexicographic
  });
  NmsResult out;
  std::vector<char> taken(mn, 0);
  while (out.poses.size() < k) {
    std::size_t pick = mn;
    for (std::size_t idx : order) {
      if (taken[idx]) continue;
      Pose p{int(idx / g.n_azim), int(idx % g.n_azim)};
      bool blocked = false;
      if (!out.relaxed)
        for (const auto& q : out.poses)
          if (wrapped_cheby(p, q, g) <= radius) blocked = true;
      if (!blocked) {
        pick = idx;
        break;
      }
    }
    if (pick == mn) {
      out.relaxed = true;
      continue;
    }
    taken[pick] = 1;
    out.poses.push_back({int(pick / g.n_azim), int(pick % g.n_azim)});
  }
  return out;
}

double objective_oracle(const CoverageMatrix& cov, const GridGeometry& g,
                        const std::vector<Pose>& selected) {
  std::size_t mn = g.n_views();
  double total = 0.0;
  for (std::size_t j = 0; j < mn; ++j) {
    double c = 0.0;
    for (const auto& p : selected)
      c += cov.cov[(std::size_t(p.elev) * g.n_azim + std::size_t(p.azim)) * mn + j];
    total += std::min(1.0, c);
  }
  return total / double(mn);
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.geometry = GridGeometry{2, 4, 1, 8, 8};
  cfg.view_code = 6;
  cfg.prop_code = 4;
  cfg.enc_hidden = 8;
  cfg.fuse_hidden = 8;
  cfg.fuse_out = 8;
  cfg.hidden = 8;
  cfg.dec_hidden = 8;
  cfg.act_hidden = 8;
  cfg.critic_hidden = 4;
  cfg.grid_code = 4;
  cfg.init_seed = 3;
  return cfg;
}

Dataset tiny_data(std::size_t n = 2, std::uint64_t seed = 13) {
  SynthSpec spec;
  spec.geometry = GridGeometry{2, 4, 1, 8, 8};
  spec.n_samples = n;
  spec.seed = seed;
  return generate_synthetic(spec);
}

CoverageMatrix random_cov(const GridGeometry& g, Rng& rng) {
  std::size_t mn = g.n_views();
  CoverageMatrix cm;
  cm.sample_id = "synthetic";
  cm.cov.resize(mn * mn);
  for (auto& v : cm.cov) v = float(rng.uniform(0.0, 1.0));
  return cm;
}

}  // namespace

TEST_CASE("greedy suppression matches a reference implementation on random grids") {
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng(seed, "nms-fuzz");
    GridGeometry g;
    g.n_elev = 1 + rng.uniform_index(5);
    g.n_azim = 2 + rng.uniform_index(8);  // up to 9
    g.channels = 1;
    g.view_h = g.view_w = 4;
    std::size_t mn = g.n_views();
    std::vector<float> scores(mn);
    // Quantized scores so ties actually happen.
    for (auto& s : scores) s = float(rng.uniform_index(5)) / 4.0f;
    std::size_t k = 1 + rng.uniform_index(mn);
    int radius = int(rng.uniform_index(3));
    auto got = nms_select(scores, g, k, radius);
    auto want = nms_oracle(scores, g, k, radius);
    REQUIRE(got.poses.size() == k);
    CHECK(got.relaxed == want.relaxed);
    for (std::size_t i = 0; i < k; ++i) CHECK(got.poses[i] == want.poses[i]);
    ++checked;
  }
  CHECK(checked == 1000);
}

TEST_CASE("suppression handles quota and radius edge cases") {
  GridGeometry g{2, 4, 1, 4, 4};
  std::vector<float> scores(8, 0.5f);
  CHECK_THROWS_AS(nms_select(scores, g, 9, 1), UsageError);
  CHECK_THROWS_AS(nms_select(scores, g, 2, -1), UsageError);

  SUBCASE("equal scores pick in row-major order with no suppression") {
    auto r = nms_select(scores, g, 3, 0);
    CHECK(!r.relaxed);
    CHECK(r.poses[0] == Pose{0, 0});
    CHECK(r.poses[1] == Pose{0, 1});
    CHECK(r.poses[2] == Pose{0, 2});
  }
  SUBCASE("an oversized radius forces relaxation but still fills the quota") {
    auto r = nms_select(scores, g, 4, 4);
    CHECK(r.relaxed);
    CHECK(r.poses.size() == 4);
    std::sort(r.poses.begin(), r.poses.end(), [](const Pose& a, const Pose& b) {
      return a.elev != b.elev ? a.elev < b.elev : a.azim < b.azim;
    });
    CHECK(std::adjacent_find(r.poses.begin(), r.poses.end()) == r.poses.end());
  }
  SUBCASE("suppression is azimuth wrap-aware") {
    std::vector<float> s = {1.0f, 0.1f, 0.2f, 0.9f,
                            0.0f, 0.0f, 0.0f, 0.0f};
    // (0,3) at 0.9 neighbors (0,0) across the wrap, so radius 1 suppresses it
    // and the far-lower (0,2) wins the second slot.
    auto r = nms_select(s, g, 2, 1);
    CHECK(r.poses[0] == Pose{0, 0});
    CHECK(r.poses[1] == Pose{0, 2});
  }
}

TEST_CASE("coverage objective is a clipped mean, bounded and monotone") {
  GridGeometry g{1, 2, 1, 4, 4};
  CoverageMatrix cm;
  cm.cov = {0.8f, 0.3f,
            0.4f, 0.9f};
  CHECK(coverage_objective(cm, g, {}) == doctest::Approx(0.0));
  CHECK(coverage_objective(cm, g, {{0, 0}}) == doctest::Approx((0.8 + 0.3) / 2));
  // Both views: column sums 1.2 and 1.2 clip to 1.
  CHECK(coverage_objective(cm, g, {{0, 0}, {0, 1}}) == doctest::Approx(1.0));

  Rng rng(4, "cov-monotone");
  GridGeometry g2{3, 5, 1, 4, 4};
  auto cm2 = random_cov(g2, rng);
  std::vector<Pose> sel;
  double prev = 0.0;
  for (int step = 0; step < 6; ++step) {
    sel.push_back({int(rng.uniform_index(3)), int(rng.uniform_index(5))});
    double c = coverage_objective(cm2, g2, sel);
    CHECK(c >= prev - 1e-12);
    CHECK(c <= 1.0 + 1e-12);
    CHECK(c == doctest::Approx(objective_oracle(cm2, g2, sel)));
    prev = c;
  }
}

TEST_CASE("greedy demonstration step matches exhaustive lookahead") {
  auto actions = action_space();
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    Rng rng(seed, "demo-fuzz");
    GridGeometry g;
    g.n_elev = 1 + rng.uniform_index(3);
    g.n_azim = 2 + rng.uniform_index(6);
    g.channels = 1;
    g.view_h = g.view_w = 4;
    auto cm = random_cov(g, rng);
    Pose pose{int(rng.uniform_index(g.n_elev)), int(rng.uniform_index(g.n_azim))};
    std::vector<Pose> selected = {pose};
    if (seed % 3 == 0)
      selected.push_back({int(rng.uniform_index(g.n_elev)),
                          int(rng.uniform_index(g.n_azim))});

    std::size_t best = 0;
    double best_obj = -1.0;
    for (std::size_t i = 0; i < actions.size(); ++i) {
      auto next = apply_motion(pose, actions[i], g);
      auto trial = selected;
      trial.push_back(next);
      double obj = objective_oracle(cm, g, trial);
      if (obj > best_obj) {
        best_obj = obj;
        best = i;
      }
    }
    CHECK(demo_step(cm, g, selected, pose) == best);
  }
}

TEST_CASE("demonstration trajectories improve coverage monotonically") {
  Rng rng(8, "demo-traj");
  GridGeometry g{2, 5, 1, 4, 4};
  auto cm = random_cov(g, rng);
  auto traj = demo_trajectory(cm, g, {1, 2}, 4);
  REQUIRE(traj.poses.size() == 4);
  REQUIRE(traj.actions.size() == 3);
  REQUIRE(traj.objectives.size() == 4);
  CHECK(traj.poses[0] == Pose{1, 2});
  auto actions = action_space();
  for (std::size_t t = 0; t + 1 < traj.poses.size(); ++t) {
    CHECK(apply_motion(traj.poses[t], actions[traj.actions[t]], g) ==
          traj.poses[t + 1]);
    CHECK(traj.objectives[t + 1] >= traj.objectives[t] - 1e-12);
  }
  CHECK(traj.objectives[0] ==
        doctest::Approx(objective_oracle(cm, g, {traj.poses[0]})));

  auto one = demo_trajectory(cm, g, {0, 0}, 1);
  CHECK(one.poses.size() == 1);
  CHECK(one.actions.empty());
  CHECK_THROWS_AS(demo_trajectory(cm, g, {0, 0}, 0), UsageError);
}

TEST_CASE("informativeness scores normalize to [0, 1] with both extremes hit") {
  CompletionModel<double> model(tiny_config());
  auto ds = tiny_data();
  auto sm = info_score(model, ds.samples[0]);
  REQUIRE(sm.scores.size() == 8);
  float lo = 1.0f, hi = 0.0f;
  for (float s : sm.scores) {
    CHECK(s >= 0.0f);
    CHECK(s <= 1.0f);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  CHECK(lo == 0.0f);
  CHECK(hi == 1.0f);
}

TEST_CASE("a sample with no view preference scores every view 1") {
  // One elevation and constant pixels: every start produces the identical
  // observation, so all one-glimpse errors tie.
  ModelConfig cfg = tiny_config();
  cfg.geometry = GridGeometry{1, 4, 1, 8, 8};
  CompletionModel<double> model(cfg);
  Viewgrid grid;
  grid.geometry = cfg.geometry;
  grid.id = "flat";
  grid.pixels = Tensor<float>({1, 4, 1, 8, 8});
  std::fill(grid.pixels.data.begin(), grid.pixels.data.end(), 0.5f);
  auto sm = info_score(model, grid);
  for (float s : sm.scores) CHECK(s == 1.0f);
}

TEST_CASE("coverage matrices normalize over all entries") {
  CompletionModel<double> model(tiny_config());
  auto ds = tiny_data();
  auto cm = coverage_matrix(model, ds.samples[0]);
  REQUIRE(cm.cov.size() == 64);
  float lo = 1.0f, hi = 0.0f;
  for (float v : cm.cov) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo == 0.0f);
  CHECK(hi == 1.0f);
}

TEST_CASE("sidekick caches round-trip bit-exactly") {
  CompletionModel<float> model(tiny_config());
  auto ds = tiny_data(3);
  auto cache = precompute_cache(model, ds, 111, 222, true, true);
  auto dir = temp_dir("cache");
  save_sidekick_cache(cache, dir);
  auto loaded = load_sidekick_cache(dir, 111, 222);
  CHECK(loaded.geometry == cache.geometry);
  CHECK(loaded.dataset_checksum == 111);
  CHECK(loaded.model_checksum == 222);
  REQUIRE(loaded.scores.size() == 3);
  REQUIRE(loaded.cov.size() == 3);
  for (std::size_t s = 0; s < 3; ++s) {
    CHECK(loaded.scores[s].sample_id == cache.scores[s].sample_id);
    CHECK(loaded.scores[s].scores == cache.scores[s].scores);
    CHECK(loaded.cov[s].cov == cache.cov[s].cov);
  }
  auto dir2 = temp_dir("cache2");
  save_sidekick_cache(loaded, dir2);
  CHECK(read_file_bytes(dir + "/scores.bin") == read_file_bytes(dir2 + "/scores.bin"));
  CHECK(read_file_bytes(dir + "/cov.bin") == read_file_bytes(dir2 + "/cov.bin"));
  CHECK(read_text_file(dir + "/sidekick.json") ==
        read_text_file(dir2 + "/sidekick.json"));
}

TEST_CASE("stale caches are rejected, not served") {
  CompletionModel<float> model(tiny_config());
  auto ds = tiny_data(2);
  auto cache = precompute_cache(model, ds, 111, 222, true, false);
  auto dir = temp_dir("cache-stale");
  save_sidekick_cache(cache, dir);
  CHECK_THROWS_AS(load_sidekick_cache(dir, 999, 222), ChecksumError);
  CHECK_THROWS_AS(load_sidekick_cache(dir, 111, 999), ChecksumError);
  // No expectations given: loads fine.
  auto loaded = load_sidekick_cache(dir);
  CHECK(loaded.scores.size() == 2);
  CHECK(loaded.cov.empty());
}

TEST_CASE("cache loading distinguishes failure modes") {
  CompletionModel<float> model(tiny_config());
  auto ds = tiny_data(2);
  auto cache = precompute_cache(model, ds, 1, 2, true, false);
  auto dir = temp_dir("cache-errors");

  SUBCASE("missing") {
    CHECK_THROWS_AS(load_sidekick_cache(dir + "/nope"), NotFoundError);
  }
  SUBCASE("corrupt json") {
    save_sidekick_cache(cache, dir);
    write_text_file(dir + "/sidekick.json", "!!");
    CHECK_THROWS_AS(load_sidekick_cache(dir), ParseError);
  }
  SUBCASE("declared size disagrees with geometry") {
    save_sidekick_cache(cache, dir);
    auto j = nlohmann::json::parse(read_text_file(dir + "/sidekick.json"));
    j["score_bytes"] = j["score_bytes"].get<std::size_t>() + 4;
    write_text_file(dir + "/sidekick.json", j.dump(2));
    CHECK_THROWS_AS(load_sidekick_cache(dir), ShapeMismatchError);
  }
  SUBCASE("payload truncated") {
    save_sidekick_cache(cache, dir);
    auto bytes = read_file_bytes(dir + "/scores.bin");
    bytes.resize(bytes.size() - 4);
    write_file_bytes(dir + "/scores.bin", bytes.data(), bytes.size());
    CHECK_THROWS_AS(load_sidekick_cache(dir), TruncatedPayloadError);
  }
}
