#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <functional>
#include <vector>

namespace mfegra::detail {

using ObjectiveFn = std::function<double(const Eigen::VectorXd&)>;

struct OptimResult {
  Eigen::VectorXd x;
  double f = -std::numeric_limits<double>::infinity();
  int evals = 0;
};

/// Box-constrained Nelder-Mead ascent. Candidate vertices are projected back
/// into [lower, upper]. Deterministic for a fixed start.
inline OptimResult nelder_mead_max(const ObjectiveFn& fn, const Eigen::VectorXd& start,
                                   const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                   int max_evals, double ftol = 1e-9) {
  const Eigen::Index d = start.size();
  auto clamp = [&](Eigen::VectorXd x) {
    for (Eigen::Index i = 0; i < d; ++i) x[i] = std::clamp(x[i], lower[i], upper[i]);
    return x;
  };

  int evals = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evals;
    return fn(x);
  };

  // Initial simplex: start plus a 5% box-width step per coordinate.
  std::vector<Eigen::VectorXd> xs;
  std::vector<double> fs;
  xs.push_back(clamp(start));
  fs.push_back(eval(xs[0]));
  for (Eigen::Index i = 0; i < d; ++i) {
    Eigen::VectorXd v = xs[0];
    double h = 0.05 * (upper[i] - lower[i]);
    v[i] = (v[i] + h <= upper[i]) ? v[i] + h : v[i] - h;
    xs.push_back(clamp(v));
    fs.push_back(eval(xs.back()));
  }

  auto order = [&]() {
    // descending f
    std::vector<std::size_t> idx(xs.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fs[a] > fs[b]; });
    std::vector<Eigen::VectorXd> xs2(xs.size());
    std::vector<double> fs2(fs.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      xs2[i] = xs[idx[i]];
      fs2[i] = fs[idx[i]];
    }
    xs.swap(xs2);
    fs.swap(fs2);
  };

  const std::size_t n = xs.size();
  while (evals < max_evals) {
    order();
    if (fs.front() - fs.back() < ftol * (std::abs(fs.front()) + ftol)) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (std::size_t i = 0; i + 1 < n; ++i) centroid += xs[i];
    centroid /= static_cast<double>(n - 1);

    Eigen::VectorXd xr = clamp(centroid + (centroid - xs.back()));
    double fr = eval(xr);
    if (fr > fs[0]) {
      Eigen::VectorXd xe = clamp(centroid + 2.0 * (centroid - xs.back()));
      double fe = eval(xe);
      if (fe > fr) {
        xs.back() = xe;
        fs.back() = fe;
      } else {
        xs.back() = xr;
        fs.back() = fr;
      }
    } else if (fr > fs[n - 2]) {
      xs.back() = xr;
      fs.back() = fr;
    } else {
      Eigen::VectorXd xc = clamp(centroid + 0.5 * (xs.back() - centroid));
      double fc = eval(xc);
      if (fc > fs.back()) {
        xs.back() = xc;
        fs.back() = fc;
      } else {
        for (std::size_t i = 1; i < n; ++i) {
          xs[i] = clamp(xs[0] + 0.5 * (xs[i] - xs[0]));
          fs[i] = eval(xs[i]);
        }
      }
    }
  }
  order();
  return {xs.front(), fs.front(), evals};
}

/// Coordinate pattern search (poll +/- step along each axis, move to the best
/// improving poll, halve the step on failure). Returns the final incumbent;
/// `trail` collects the distinct accepted incumbents, best last.
inline OptimResult pattern_search_max(const ObjectiveFn& fn, const Eigen::VectorXd& start,
                                      const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                      int iterations, std::vector<Eigen::VectorXd>* trail = nullptr) {
  const Eigen::Index d = start.size();
  Eigen::VectorXd step = 0.25 * (upper - lower);
  Eigen::VectorXd x = start;
  for (Eigen::Index i = 0; i < d; ++i) x[i] = std::clamp(x[i], lower[i], upper[i]);
  int evals = 0;
  double fx = fn(x);
  ++evals;
  if (trail) trail->push_back(x);

  for (int it = 0; it < iterations; ++it) {
    double best_f = fx;
    Eigen::VectorXd best_x = x;
    for (Eigen::Index i = 0; i < d; ++i) {
      for (double sgn : {+1.0, -1.0}) {
        Eigen::VectorXd cand = x;
        cand[i] = std::clamp(cand[i] + sgn * step[i], lower[i], upper[i]);
        if (cand[i] == x[i]) continue;
        double fc = fn(cand);
        ++evals;
        if (fc > best_f) {
          best_f = fc;
          best_x = cand;
        }
      }
    }
    if (best_f > fx) {
      x = best_x;
      fx = best_f;
      if (trail) trail->push_back(x);
    } else {
      step *= 0.5;
    }
  }
  return {x, fx, evals};
}

}  // namespace mfegra::detail
