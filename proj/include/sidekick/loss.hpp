#pragma once

#include "sidekick/tensor.hpp"
#include "sidekick/viewgrid.hpp"

namespace sidekick {

// Reconstruction loss between a decoded viewgrid in egocentric azimuth
// coordinates (column 0 = first observed azimuth) and the absolutely indexed
// ground truth. The decoded grid's azimuth axis is cyclically shifted by the
// episode's starting azimuth before comparing. Returns the mean-per-pixel
// squared error; reporting multiplies by 1000 at the boundary only.
//
// If grad_decoded is non-null it receives dLoss/dDecoded (same egocentric
// layout as `decoded`), overwriting previous contents.
template <typename Real>
double reconstruction_loss(const Tensor<Real>& decoded, const Viewgrid& grid,
                           int start_azim, Tensor<Real>* grad_decoded = nullptr) {
  const auto& g = grid.geometry;
  require_shape(decoded, {g.n_elev, g.n_azim, g.channels, g.view_h, g.view_w},
                "decoded viewgrid");
  if (grad_decoded) {
    grad_decoded->shape = decoded.shape;
    grad_decoded->data.assign(decoded.numel(), Real(0));
  }
  const std::size_t vn = g.view_numel();
  const std::size_t m = g.n_azim;
  const double inv_n = 1.0 / double(g.grid_numel());
  double acc = 0.0;
  for (std::size_t e = 0; e < g.n_elev; ++e)
    for (std::size_t a_ego = 0; a_ego < m; ++a_ego) {
      // Egocentric column a_ego depicts true azimuth (a_ego + start_azim) mod M.
      std::size_t a_true = (a_ego + std::size_t(start_azim)) % m;
      const Real* dec = decoded.ptr() + (e * m + a_ego) * vn;
      const float* gt = grid.pixels.ptr() + (e * m + a_true) * vn;
      Real* gd = grad_decoded ? grad_decoded->ptr() + (e * m + a_ego) * vn : nullptr;
      for (std::size_t i = 0; i < vn; ++i) {
        double diff = double(dec[i]) - double(gt[i]);
        acc += diff * diff;
        if (gd) gd[i] = Real(2.0 * diff * inv_n);
      }
    }
  return acc * inv_n;
}

// Mean-per-pixel squared error between one decoded (egocentric) view and the
// ground-truth view at an absolute pose. Used by the coverage sidekick.
template <typename Real>
double view_mse(const Tensor<Real>& decoded, const Viewgrid& grid, int start_azim,
                const Pose& target) {
  const auto& g = grid.geometry;
  std::size_t vn = g.view_numel();
  std::size_t a_ego =
      std::size_t(((target.azim - start_azim) % int(g.n_azim) + int(g.n_azim)) %
                  int(g.n_azim));
  const Real* dec =
      decoded.ptr() + (std::size_t(target.elev) * g.n_azim + a_ego) * vn;
  const float* gt =
      grid.pixels.ptr() +
      (std::size_t(target.elev) * g.n_azim + std::size_t(target.azim)) * vn;
  double acc = 0.0;
  for (std::size_t i = 0; i < vn; ++i) {
    double diff = double(dec[i]) - double(gt[i]);
    acc += diff * diff;
  }
  return acc / double(vn);
}

}  // namespace sidekick
