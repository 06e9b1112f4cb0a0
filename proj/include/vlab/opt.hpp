#pragma once

// Derivative-free simplex (Nelder-Mead) local minimizer.  Used where the
// objective goes through event times and integrator stops, so gradients are
// too noisy to trust.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace vlab {

struct SimplexResult {
  std::vector<double> x;
  double f = 0.0;
  int evals = 0;
  bool converged = false;
};

inline SimplexResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                 std::vector<double> x0, double step,
                                 double f_tol = 1e-10, double x_tol = 1e-10,
                                 int max_evals = 20000) {
  const std::size_t n = x0.size();
  std::vector<std::vector<double>> pts(n + 1, x0);
  std::vector<double> fv(n + 1);
  int evals = 0;
  for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += step;
  for (std::size_t i = 0; i <= n; ++i) {
    fv[i] = f(pts[i]);
    ++evals;
  }

  auto order = [&]() {
    std::vector<std::size_t> idx(n + 1);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    std::vector<std::vector<double>> p2(n + 1);
    std::vector<double> f2(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
      p2[i] = pts[idx[i]];
      f2[i] = fv[idx[i]];
    }
    pts.swap(p2);
    fv.swap(f2);
  };

  SimplexResult res;
  while (evals < max_evals) {
    order();
    // convergence: function spread and simplex size
    double fspread = std::abs(fv[n] - fv[0]);
    double xsize = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      xsize = std::max(xsize, std::abs(pts[n][i] - pts[0][i]));
    if (fspread < f_tol * (1.0 + std::abs(fv[0])) && xsize < x_tol) {
      res.converged = true;
      break;
    }

    std::vector<double> centroid(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) centroid[j] += pts[i][j] / static_cast<double>(n);

    auto blend = [&](double coef) {
      std::vector<double> p(n);
      for (std::size_t j = 0; j < n; ++j)
        p[j] = centroid[j] + coef * (pts[n][j] - centroid[j]);
      return p;
    };

    auto xr = blend(-1.0);
    double fr = f(xr);
    ++evals;
    if (fr < fv[0]) {
      auto xe = blend(-2.0);
      double fe = f(xe);
      ++evals;
      if (fe < fr) {
        pts[n] = xe;
        fv[n] = fe;
      } else {
        pts[n] = xr;
        fv[n] = fr;
      }
    } else if (fr < fv[n - 1]) {
      pts[n] = xr;
      fv[n] = fr;
    } else {
      auto xc = blend(fr < fv[n] ? -0.5 : 0.5);
      double fc = f(xc);
      ++evals;
      if (fc < std::min(fr, fv[n])) {
        pts[n] = xc;
        fv[n] = fc;
      } else {
        // shrink toward the best point
        for (std::size_t i = 1; i <= n; ++i) {
          for (std::size_t j = 0; j < n; ++j)
            pts[i][j] = pts[0][j] + 0.5 * (pts[i][j] - pts[0][j]);
          fv[i] = f(pts[i]);
          ++evals;
        }
      }
    }
  }
  order();
  res.x = pts[0];
  res.f = fv[0];
  res.evals = evals;
  return res;
}

}  // namespace vlab
