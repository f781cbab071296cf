#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sidekick/common.hpp"
#include "sidekick/tensor.hpp"

namespace sidekick {

struct GridGeometry {
  std::size_t n_elev = 4;   // N
  std::size_t n_azim = 8;   // M
  std::size_t channels = 1; // C
  std::size_t view_h = 16;  // H
  std::size_t view_w = 16;  // W

  std::size_t n_views() const { return n_elev * n_azim; }
  std::size_t view_numel() const { return channels * view_h * view_w; }
  std::size_t grid_numel() const { return n_views() * view_numel(); }

  void validate() const {
    if (n_elev < 1 || n_azim < 2 || view_h < 4 || view_w < 4 ||
        view_h != view_w || channels < 1)
      throw DataError("invalid grid geometry: N>=1, M>=2, H=W>=4, C>=1 required");
  }

  bool operator==(const GridGeometry&) const = default;

  std::string str() const {
    return std::to_string(n_elev) + "x" + std::to_string(n_azim) + "x" +
           std::to_string(channels) + "x" + std::to_string(view_h) + "x" +
           std::to_string(view_w);
  }
};

// Parses "NxMxCxHxW"; throws UsageError on malformed strings.
GridGeometry parse_geometry(const std::string& s);

struct Pose {
  int elev = 0;
  int azim = 0;
  bool operator==(const Pose&) const = default;
};

// Relative camera motion, d_elev in {-1,0,1}, d_azim in {-2..2}.
struct Action {
  int d_elev = 0;
  int d_azim = 0;
  bool operator==(const Action&) const = default;
};

struct Proprioception {
  int elev_abs = 0;
  int d_elev_prev = 0;
  int d_azim_prev = 0;
  // Absolute azimuth, for full-observability consumers only; the agent's own
  // inputs never include it.
  int azim_abs = 0;
};

// Full viewgrid of one environment; pixels in [0,1], row-major [N,M,C,H,W].
struct Viewgrid {
  GridGeometry geometry;
  Tensor<float> pixels;
  std::string id;

  float at(int e, int a, std::size_t c, std::size_t y, std::size_t x) const {
    const auto& g = geometry;
    return pixels[((((std::size_t(e) * g.n_azim) + std::size_t(a)) * g.channels + c) *
                       g.view_h +
                   y) *
                      g.view_w +
                  x];
  }
};

struct Dataset {
  GridGeometry geometry;
  std::vector<Viewgrid> samples;
  std::string split = "train";
};

struct SynthSpec {
  GridGeometry geometry;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  std::string split = "train";
};

// The 3x5 motion neighborhood in row-major order; (0,0) stay action included.
std::vector<Action> action_space();

// Index of an action in action_space(); throws UsageError if not a member.
std::size_t action_index(const Action& a);

// Azimuth wraps modulo M; elevation clamps to [0, N-1].
Pose apply_motion(const Pose& pose, const Action& action, const GridGeometry& geom);

// Signed shortest azimuth offset from `from` to `to`, wrap-aware, in
// (-M/2, M/2]; e.g. 7 -> 0 with M=8 gives +1.
int wrap_azim_delta(int from, int to, std::size_t m);

// Exact slice of the grid at `pose` plus proprioception relative to
// `prev_pose` (zero relative components when absent).
std::pair<Tensor<float>, Proprioception> observe(const Viewgrid& grid,
                                                 const Pose& pose,
                                                 const std::optional<Pose>& prev_pose);

// Band-limited random fields on (elevation, azimuth), azimuth-periodic, cut
// into overlapping view patches so neighboring views share content.
Dataset generate_synthetic(const SynthSpec& spec);

void save_dataset(const Dataset& ds, const std::string& dir,
                  bool write_preview = false);
Dataset load_dataset(const std::string& dir);

// FNV-1a of the payload file; used to key sidekick caches to a dataset.
std::uint64_t dataset_checksum(const std::string& dir);

}  // namespace sidekick
