#include "sidekick/viewgrid.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "sidekick/image.hpp"
#include "sidekick/io.hpp"

namespace sidekick {

using nlohmann::json;

GridGeometry parse_geometry(const std::string& s) {
  GridGeometry g;
  unsigned long n, m, c, h, w;
  int consumed = 0;
  if (std::sscanf(s.c_str(), "%lux%lux%lux%lux%lu%n", &n, &m, &c, &h, &w,
                  &consumed) != 5 ||
      consumed != int(s.size()))
    throw UsageError("bad geometry string '" + s + "', expected NxMxCxHxW");
  g.n_elev = n;
  g.n_azim = m;
  g.channels = c;
  g.view_h = h;
  g.view_w = w;
  try {
    g.validate();
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
  return g;
}

std::vector<Action> action_space() {
  std::vector<Action> out;
  out.reserve(15);
  for (int de = -1; de <= 1; ++de)
    for (int da = -2; da <= 2; ++da) out.push_back({de, da});
  return out;
}

std::size_t action_index(const Action& a) {
  if (a.d_elev < -1 || a.d_elev > 1 || a.d_azim < -2 || a.d_azim > 2)
    throw UsageError("action outside the 3x5 motion neighborhood");
  return std::size_t(a.d_elev + 1) * 5 + std::size_t(a.d_azim + 2);
}

Pose apply_motion(const Pose& pose, const Action& action, const GridGeometry& geom) {
  Pose out;
  out.elev = std::clamp(pose.elev + action.d_elev, 0, int(geom.n_elev) - 1);
  int m = int(geom.n_azim);
  out.azim = ((pose.azim + action.d_azim) % m + m) % m;
  return out;
}

int wrap_azim_delta(int from, int to, std::size_t m) {
  int mi = int(m);
  int d = ((to - from) % mi + mi) % mi;  // in [0, M)
  if (d > mi / 2) d -= mi;
  return d;  // in (-M/2, M/2]
}

std::pair<Tensor<float>, Proprioception> observe(
    const Viewgrid& grid, const Pose& pose, const std::optional<Pose>& prev_pose) {
  const auto& g = grid.geometry;
  if (pose.elev < 0 || pose.elev >= int(g.n_elev) || pose.azim < 0 ||
      pose.azim >= int(g.n_azim))
    throw ShapeMismatchError("pose out of range for geometry " + g.str());
  Tensor<float> view({g.channels, g.view_h, g.view_w});
  std::size_t base =
      (std::size_t(pose.elev) * g.n_azim + std::size_t(pose.azim)) * g.view_numel();
  std::copy_n(grid.pixels.ptr() + base, g.view_numel(), view.ptr());

  Proprioception prop;
  prop.elev_abs = pose.elev;
  prop.azim_abs = pose.azim;
  if (prev_pose) {
    prop.d_elev_prev = pose.elev - prev_pose->elev;
    prop.d_azim_prev = wrap_azim_delta(prev_pose->azim, pose.azim, g.n_azim);
  }
  return {std::move(view), prop};
}

// ---------------------------------------------------------------------------
// Synthetic generation: a low-frequency field over (elevation, azimuth),
// periodic in azimuth, sampled into overlapping patches. Each view spans two
// grid cells in both directions so adjacent views share half their content.
// ---------------------------------------------------------------------------

namespace {

constexpr double kTwoPi = 6.283185307179586;
constexpr double kOverlap = 2.0;  // view extent in grid cells
constexpr int kAzimFreqs = 4;     // azimuth harmonics 0..3
constexpr int kElevFreqs = 3;     // elevation harmonics 0..2

struct FieldCoeffs {
  // amp[k][l], azim phase psi[k][l], elev phase chi[k][l]
  double amp[kAzimFreqs][kElevFreqs];
  double psi[kAzimFreqs][kElevFreqs];
  double chi[kAzimFreqs][kElevFreqs];

  void randomize(Rng& rng) {
    for (int k = 0; k < kAzimFreqs; ++k)
      for (int l = 0; l < kElevFreqs; ++l) {
        amp[k][l] = rng.gaussian() / (1.0 + k + l);
        psi[k][l] = rng.uniform(0.0, kTwoPi);
        chi[k][l] = rng.uniform(0.0, kTwoPi);
      }
  }

  double eval(double u_elev, double phi) const {
    double v = 0.0;
    for (int k = 0; k < kAzimFreqs; ++k)
      for (int l = 0; l < kElevFreqs; ++l)
        v += amp[k][l] * std::cos(k * phi + psi[k][l]) *
             std::cos(l * 3.141592653589793 * u_elev + chi[k][l]);
    return v;
  }
};

}  // namespace

Dataset generate_synthetic(const SynthSpec& spec) {
  spec.geometry.validate();
  const auto& g = spec.geometry;
  Dataset ds;
  ds.geometry = g;
  ds.split = spec.split;
  ds.samples.reserve(spec.n_samples);

  Rng rng(spec.seed, "synth/" + spec.split);
  for (std::size_t s = 0; s < spec.n_samples; ++s) {
    Viewgrid grid;
    grid.geometry = g;
    grid.id = spec.split + "-" + std::to_string(s);
    grid.pixels = Tensor<float>({g.n_elev, g.n_azim, g.channels, g.view_h, g.view_w});

    std::vector<FieldCoeffs> coeffs(g.channels);
    for (auto& c : coeffs) c.randomize(rng);

    std::vector<double> raw(g.grid_numel());
    std::size_t idx = 0;
    for (std::size_t i = 0; i < g.n_elev; ++i)
      for (std::size_t j = 0; j < g.n_azim; ++j)
        for (std::size_t c = 0; c < g.channels; ++c)
          for (std::size_t y = 0; y < g.view_h; ++y) {
            double u = (double(i) + 0.5 +
                        ((double(y) + 0.5) / double(g.view_h) - 0.5) * kOverlap) /
                       double(g.n_elev);
            for (std::size_t x = 0; x < g.view_w; ++x) {
              double phi =
                  kTwoPi *
                  (double(j) +
                   ((double(x) + 0.5) / double(g.view_w) - 0.5) * kOverlap) /
                  double(g.n_azim);
              raw[idx++] = coeffs[c].eval(u, phi);
            }
          }

    double lo = raw[0], hi = raw[0];
    for (double v : raw) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    for (std::size_t i = 0; i < raw.size(); ++i)
      grid.pixels[i] =
          hi > lo ? float((raw[i] - lo) / (hi - lo)) : 0.5f;
    ds.samples.push_back(std::move(grid));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Dataset on disk: manifest.json + data.bin (float32 LE, [N,M,C,H,W] per
// sample, concatenated in manifest order), optional preview/ montages.
// ---------------------------------------------------------------------------

namespace {

json geometry_to_json(const GridGeometry& g) {
  return {{"n_elev", g.n_elev},
          {"n_azim", g.n_azim},
          {"channels", g.channels},
          {"view_h", g.view_h},
          {"view_w", g.view_w}};
}

GridGeometry geometry_from_json(const json& j) {
  GridGeometry g;
  g.n_elev = j.at("n_elev").get<std::size_t>();
  g.n_azim = j.at("n_azim").get<std::size_t>();
  g.channels = j.at("channels").get<std::size_t>();
  g.view_h = j.at("view_h").get<std::size_t>();
  g.view_w = j.at("view_w").get<std::size_t>();
  return g;
}

ImageRGB viewgrid_montage(const Viewgrid& grid) {
  const auto& g = grid.geometry;
  const std::size_t gap = 2;
  ImageRGB img(g.n_azim * (g.view_w + gap) + gap, g.n_elev * (g.view_h + gap) + gap,
               255);
  for (std::size_t i = 0; i < g.n_elev; ++i)
    for (std::size_t j = 0; j < g.n_azim; ++j)
      for (std::size_t y = 0; y < g.view_h; ++y)
        for (std::size_t x = 0; x < g.view_w; ++x) {
          double r, gg, b;
          if (g.channels >= 3) {
            r = grid.at(int(i), int(j), 0, y, x);
            gg = grid.at(int(i), int(j), 1, y, x);
            b = grid.at(int(i), int(j), 2, y, x);
          } else {
            r = gg = b = grid.at(int(i), int(j), 0, y, x);
          }
          img.set(gap + j * (g.view_w + gap) + x, gap + i * (g.view_h + gap) + y,
                  to_u8(r), to_u8(gg), to_u8(b));
        }
  return img;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& dir, bool write_preview) {
  ds.geometry.validate();
  ensure_dir(dir);
  std::size_t sample_floats = ds.geometry.grid_numel();

  std::vector<float> payload;
  payload.reserve(sample_floats * ds.samples.size());
  json ids = json::array();
  for (const auto& s : ds.samples) {
    if (s.geometry != ds.geometry)
      throw ShapeMismatchError("sample geometry differs from dataset geometry");
    payload.insert(payload.end(), s.pixels.data.begin(), s.pixels.data.end());
    ids.push_back(s.id);
  }
  write_f32(dir + "/data.bin", payload);

  json manifest = {{"format_version", 1},
                   {"kind", "viewgrid-dataset"},
                   {"geometry", geometry_to_json(ds.geometry)},
                   {"n_samples", ds.samples.size()},
                   {"split", ds.split},
                   {"endianness", "little"},
                   {"payload_bytes", payload.size() * sizeof(float)},
                   {"ids", ids}};
  write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");

  if (write_preview) {
    ensure_dir(dir + "/preview");
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
      write_ppm(viewgrid_montage(ds.samples[i]),
                dir + "/preview/sample_" + std::to_string(i) + ".ppm");
  }
}

Dataset load_dataset(const std::string& dir) {
  std::string manifest_path = dir + "/manifest.json";
  if (!std::filesystem::exists(manifest_path))
    throw NotFoundError("dataset manifest not found: " + manifest_path);

  json manifest;
  try {
    manifest = json::parse(read_text_file(manifest_path));
  } catch (const json::exception& e) {
    throw ParseError("malformed dataset manifest: " + std::string(e.what()));
  }

  Dataset ds;
  std::size_t n_samples = 0;
  std::size_t payload_bytes = 0;
  try {
    ds.geometry = geometry_from_json(manifest.at("geometry"));
    n_samples = manifest.at("n_samples").get<std::size_t>();
    ds.split = manifest.at("split").get<std::string>();
    payload_bytes = manifest.at("payload_bytes").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ParseError("malformed dataset manifest: " + std::string(e.what()));
  }
  ds.geometry.validate();

  std::size_t expected_bytes = n_samples * ds.geometry.grid_numel() * sizeof(float);
  if (payload_bytes != expected_bytes)
    throw ShapeMismatchError(
        "payload size disagrees with manifest geometry/sample count: manifest "
        "declares " +
        std::to_string(payload_bytes) + " bytes, geometry implies " +
        std::to_string(expected_bytes));

  std::string data_path = dir + "/data.bin";
  auto bytes = read_file_bytes(data_path);
  if (bytes.size() != payload_bytes)
    throw TruncatedPayloadError("data.bin has " + std::to_string(bytes.size()) +
                                " bytes, manifest declares " +
                                std::to_string(payload_bytes));

  const float* f = reinterpret_cast<const float*>(bytes.data());
  auto ids = manifest.value("ids", json::array());
  ds.samples.resize(n_samples);
  std::size_t sample_floats = ds.geometry.grid_numel();
  for (std::size_t s = 0; s < n_samples; ++s) {
    auto& grid = ds.samples[s];
    grid.geometry = ds.geometry;
    grid.id = s < ids.size() ? ids[s].get<std::string>() : std::to_string(s);
    grid.pixels = Tensor<float>({ds.geometry.n_elev, ds.geometry.n_azim,
                                 ds.geometry.channels, ds.geometry.view_h,
                                 ds.geometry.view_w});
    std::copy_n(f + s * sample_floats, sample_floats, grid.pixels.ptr());
    grid.pixels.check_finite("dataset sample " + grid.id);
  }
  return ds;
}

std::uint64_t dataset_checksum(const std::string& dir) {
  return file_checksum(dir + "/data.bin");
}

}  // namespace sidekick
