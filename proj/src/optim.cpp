#include "pdx/optim.hpp"

#include <algorithm>
#include <cmath>

#include "pdx/errors.hpp"

namespace pdx {

void Bounds::validate() const {
  if (lo.size() != hi.size() || lo.empty())
    throw ArgumentError("Bounds: lo/hi must be non-empty and equally sized");
  for (size_t i = 0; i < lo.size(); ++i)
    if (!(lo[i] <= hi[i])) throw ArgumentError("Bounds: lo > hi at index " + std::to_string(i));
}

bool Bounds::degenerate() const {
  for (size_t i = 0; i < lo.size(); ++i)
    if (lo[i] < hi[i]) return false;
  return true;
}

std::vector<double> Bounds::clip(std::vector<double> x) const {
  for (size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
  return x;
}

OptimResult differential_evolution(const ObjectiveFn& f, const Bounds& b, size_t budget,
                                   uint64_t seed, const DeConfig& cfg) {
  b.validate();
  if (budget < 1) throw ArgumentError("differential_evolution: budget must be >= 1");
  OptimResult res;
  const size_t dim = b.dim();

  if (b.degenerate()) {
    res.x = b.lo;
    res.fx = f(res.x);
    res.evaluations = 1;
    res.history.emplace_back(1, res.fx);
    return res;
  }

  Rng rng(seed);
  size_t np = std::max<size_t>(4, cfg.pop_per_dim * dim);
  np = std::min(np, std::max<size_t>(4, budget / 2));  // keep at least one full generation

  std::vector<std::vector<double>> pop(np);
  std::vector<double> fit(np);
  size_t evals = 0;
  auto note_best = [&](size_t idx) {
    if (res.history.empty() || fit[idx] < res.fx) {
      res.fx = fit[idx];
      res.x = pop[idx];
      res.history.emplace_back(evals, res.fx);
    }
  };

  for (size_t i = 0; i < np && evals < budget; ++i) {
    pop[i].resize(dim);
    for (size_t d = 0; d < dim; ++d) pop[i][d] = rng.uniform(b.lo[d], b.hi[d]);
    fit[i] = f(pop[i]);
    ++evals;
    note_best(i);
  }

  std::vector<std::vector<double>> trials(np);
  std::vector<double> tfit(np);
  while (evals < budget) {
    size_t gen_n = std::min(np, budget - evals);
    for (size_t i = 0; i < gen_n; ++i) {
      size_t r1, r2, r3;
      do r1 = rng.below(np); while (r1 == i);
      do r2 = rng.below(np); while (r2 == i || r2 == r1);
      do r3 = rng.below(np); while (r3 == i || r3 == r1 || r3 == r2);
      size_t jrand = rng.below(dim);
      std::vector<double> t = pop[i];
      for (size_t d = 0; d < dim; ++d) {
        if (d == jrand || rng.uniform() < cfg.CR)
          t[d] = pop[r1][d] + cfg.F * (pop[r2][d] - pop[r3][d]);
      }
      trials[i] = b.clip(std::move(t));
      tfit[i] = f(trials[i]);
      ++evals;
    }
    for (size_t i = 0; i < gen_n; ++i) {  // barrier: apply replacements together
      if (tfit[i] <= fit[i]) {
        pop[i] = trials[i];
        fit[i] = tfit[i];
        note_best(i);
      }
    }
  }
  res.evaluations = evals;
  return res;
}

OptimResult nelder_mead(const ObjectiveFn& f, const std::vector<double>& x0, const Bounds& b,
                        size_t budget, double initial_step) {
  b.validate();
  if (x0.size() != b.dim()) throw ArgumentError("nelder_mead: x0 dimension mismatch");
  const size_t dim = b.dim();
  OptimResult res;

  if (b.degenerate() || budget <= dim + 1) {
    res.x = b.clip(x0);
    res.fx = f(res.x);
    res.evaluations = 1;
    res.history.emplace_back(1, res.fx);
    return res;
  }

  size_t evals = 0;
  auto eval = [&](const std::vector<double>& x) {
    ++evals;
    return f(x);
  };

  std::vector<std::vector<double>> sx(dim + 1, b.clip(x0));
  std::vector<double> sf(dim + 1);
  for (size_t d = 0; d < dim; ++d) {
    double span = b.hi[d] - b.lo[d];
    double step = span > 0.0 ? initial_step * span : std::max(1e-8, initial_step * std::abs(sx[0][d]));
    sx[d + 1][d] = std::clamp(sx[d + 1][d] + step, b.lo[d], b.hi[d]);
    if (sx[d + 1][d] == sx[0][d])  // stuck at the upper bound: step down instead
      sx[d + 1][d] = std::clamp(sx[0][d] - step, b.lo[d], b.hi[d]);
  }
  for (size_t i = 0; i <= dim; ++i) sf[i] = eval(sx[i]);

  auto record = [&]() {
    size_t besti = std::min_element(sf.begin(), sf.end()) - sf.begin();
    if (res.history.empty() || sf[besti] < res.fx) {
      res.fx = sf[besti];
      res.x = sx[besti];
      res.history.emplace_back(evals, res.fx);
    }
  };
  record();

  while (evals + 2 <= budget) {
    std::vector<size_t> order(dim + 1);
    for (size_t i = 0; i <= dim; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t c) { return sf[a] < sf[c]; });
    size_t best = order[0], worst = order[dim], second = order[dim - 1];

    std::vector<double> centroid(dim, 0.0);
    for (size_t i = 0; i <= dim; ++i)
      if (i != worst)
        for (size_t d = 0; d < dim; ++d) centroid[d] += sx[i][d] / dim;

    auto blend = [&](double coef) {
      std::vector<double> x(dim);
      for (size_t d = 0; d < dim; ++d) x[d] = centroid[d] + coef * (centroid[d] - sx[worst][d]);
      return b.clip(std::move(x));
    };

    auto xr = blend(1.0);
    double fr = eval(xr);
    if (fr < sf[best]) {
      auto xe = blend(2.0);
      double fe = eval(xe);
      if (fe < fr) {
        sx[worst] = xe;
        sf[worst] = fe;
      } else {
        sx[worst] = xr;
        sf[worst] = fr;
      }
    } else if (fr < sf[second]) {
      sx[worst] = xr;
      sf[worst] = fr;
    } else {
      auto xc = blend(fr < sf[worst] ? 0.5 : -0.5);
      double fc = eval(xc);
      if (fc < std::min(fr, sf[worst])) {
        sx[worst] = xc;
        sf[worst] = fc;
      } else {  // shrink toward the best vertex
        for (size_t i = 0; i <= dim && evals < budget; ++i) {
          if (i == best) continue;
          for (size_t d = 0; d < dim; ++d) sx[i][d] = sx[best][d] + 0.5 * (sx[i][d] - sx[best][d]);
          sf[i] = eval(sx[i]);
        }
      }
    }
    record();

    double spread = 0.0;
    for (size_t i = 0; i <= dim; ++i) spread = std::max(spread, std::abs(sf[i] - sf[best]));
    if (spread < 1e-15 * (1.0 + std::abs(sf[best]))) break;
  }
  res.evaluations = evals;
  return res;
}

}  // namespace pdx
