#include "sidekick/evalviz.hpp"

#include <iomanip>
#include <sstream>

#include "sidekick/io.hpp"

namespace sidekick {

using nlohmann::json;

void finalize_report(EvalReport& report, const std::string& reference) {
  const EvalEntry* base = nullptr;
  for (const auto& e : report.entries)
    if (e.method == reference) base = &e;
  for (auto& e : report.entries) {
    if (!base || base->avg_x1000 == 0.0 || base->adv_x1000 == 0.0) {
      e.avg_improvement_pct = 0.0;
      e.adv_improvement_pct = 0.0;
      continue;
    }
    e.avg_improvement_pct = improvement_pct(base->avg_x1000, e.avg_x1000);
    e.adv_improvement_pct = improvement_pct(base->adv_x1000, e.adv_x1000);
  }
}

json eval_report_to_json(const EvalReport& report) {
  json entries = json::array();
  for (const auto& e : report.entries) {
    json pe = json::array();
    for (const auto& row : e.per_start) pe.push_back(row);
    entries.push_back({{"method", e.method},
                       {"avg_x1000", e.avg_x1000},
                       {"adv_x1000", e.adv_x1000},
                       {"avg_improvement_pct", e.avg_improvement_pct},
                       {"adv_improvement_pct", e.adv_improvement_pct},
                       {"full_obs_at_test", e.full_obs_at_test},
                       {"per_start_x1000", pe}});
  }
  return {{"kind", "eval_report"},
          {"format_version", 1},
          {"geometry", report.geometry.str()},
          {"n_samples", report.n_samples},
          {"budget", report.budget},
          {"split", report.split},
          {"entries", entries}};
}

std::string eval_report_table(const EvalReport& report) {
  std::ostringstream os;
  os << "method           avg x1000   avg impr%   adv x1000   adv impr%\n";
  os << "---------------  ----------  ----------  ----------  ----------\n";
  for (const auto& e : report.entries) {
    std::string name = e.method + (e.full_obs_at_test ? "*" : "");
    os << std::left << std::setw(15) << name << "  " << std::right << std::fixed
       << std::setprecision(2) << std::setw(10) << e.avg_x1000 << "  "
       << std::setw(10) << e.avg_improvement_pct << "  " << std::setw(10)
       << e.adv_x1000 << "  " << std::setw(10) << e.adv_improvement_pct << "\n";
  }
  bool starred = false;
  for (const auto& e : report.entries) starred = starred || e.full_obs_at_test;
  if (starred) os << "* requires full observability at test time\n";
  return os.str();
}

void save_eval_report(const EvalReport& report, const std::string& dir) {
  ensure_dir(dir);
  write_text_file(dir + "/report.json", eval_report_to_json(report).dump(2) + "\n");
  write_text_file(dir + "/report.txt", eval_report_table(report));
}

namespace {

// Hot colormap: black -> red -> yellow -> white.
void colormap_hot(double v, std::uint8_t& r, std::uint8_t& g, std::uint8_t& b) {
  v = std::clamp(v, 0.0, 1.0);
  r = to_u8(std::min(1.0, 3.0 * v));
  g = to_u8(std::clamp(3.0 * v - 1.0, 0.0, 1.0));
  b = to_u8(std::clamp(3.0 * v - 2.0, 0.0, 1.0));
}

}  // namespace

ImageRGB render_montage(const Tensor<float>& grid5, const GridGeometry& geom,
                        const RenderOverlay& overlay) {
  require_shape(grid5, {geom.n_elev, geom.n_azim, geom.channels, geom.view_h,
                        geom.view_w},
                "montage viewgrid");
  const int gap = overlay.gap;
  const std::size_t tile_w = geom.view_w, tile_h = geom.view_h;
  ImageRGB img(geom.n_azim * tile_w + (geom.n_azim + 1) * std::size_t(gap),
               geom.n_elev * tile_h + (geom.n_elev + 1) * std::size_t(gap), 40);
  auto tile_origin = [&](const Pose& p) {
    return std::pair<int, int>(
        gap + p.azim * int(tile_w + std::size_t(gap)),
        gap + p.elev * int(tile_h + std::size_t(gap)));
  };

  std::size_t vn = geom.view_numel(), hw = tile_h * tile_w;
  for (std::size_t e = 0; e < geom.n_elev; ++e)
    for (std::size_t a = 0; a < geom.n_azim; ++a) {
      const float* view = grid5.ptr() + (e * geom.n_azim + a) * vn;
      double heat = 0.0;
      if (overlay.heat)
        heat = overlay.heat->intensity[e * geom.n_azim + a];
      auto [ox, oy] = tile_origin(Pose{int(e), int(a)});
      for (std::size_t y = 0; y < tile_h; ++y)
        for (std::size_t x = 0; x < tile_w; ++x) {
          double r, g, b;
          if (geom.channels >= 3) {
            r = view[0 * hw + y * tile_w + x];
            g = view[1 * hw + y * tile_w + x];
            b = view[2 * hw + y * tile_w + x];
          } else {
            r = g = b = view[y * tile_w + x];
          }
          if (overlay.heat) {
            std::uint8_t hr, hg, hb;
            colormap_hot(heat, hr, hg, hb);
            double al = overlay.alpha;
            r = (1.0 - al) * r + al * double(hr) / 255.0;
            g = (1.0 - al) * g + al * double(hg) / 255.0;
            b = (1.0 - al) * b + al * double(hb) / 255.0;
          }
          img.set(std::size_t(ox) + x, std::size_t(oy) + y, to_u8(r), to_u8(g),
                  to_u8(b));
        }
    }

  for (const auto& p : overlay.observed) {
    auto [ox, oy] = tile_origin(p);
    draw_rect_outline(img, ox - 1, oy - 1, int(tile_w) + 2, int(tile_h) + 2, 0,
                      255, 0);
  }
  for (const auto& [from, to] : overlay.arrows) {
    auto [fx, fy] = tile_origin(from);
    auto [tx, ty] = tile_origin(to);
    int cx0 = fx + int(tile_w) / 2, cy0 = fy + int(tile_h) / 2;
    int cx1 = tx + int(tile_w) / 2, cy1 = ty + int(tile_h) / 2;
    draw_line(img, cx0, cy0, cx1, cy1, 255, 200, 0);
    // A small head marking the destination.
    draw_rect_outline(img, cx1 - 1, cy1 - 1, 3, 3, 255, 200, 0);
  }
  return img;
}

}  // namespace sidekick
