#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "qshrink/covariance.hpp"
#include "qshrink/dataset.hpp"
#include "qshrink/distributions.hpp"
#include "qshrink/parallel.hpp"
#include "qshrink/quantile_solver.hpp"
#include "qshrink/rng.hpp"

namespace qshrink {

/// 0.05, 0.10, ..., 0.95.
inline std::vector<double> default_tau_grid() {
  std::vector<double> g;
  for (int k = 1; k <= 19; ++k) g.push_back(0.05 * k);
  return g;
}

struct ProcessRow {
  std::string term;
  double tau = 0.5;
  double estimate = 0.0;
  double band_low = std::numeric_limits<double>::quiet_NaN();
  double band_high = std::numeric_limits<double>::quiet_NaN();
};

struct OlsRow {
  std::string term;
  double estimate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct QuantileProcess {
  std::vector<ProcessRow> rows;  // tau-major, terms in coefficient order
  std::vector<OlsRow> ols;
  Index boot_failures = 0;  // failed bootstrap fits, excluded from the bands
  double level = 0.90;
};

/// Coefficient paths over a tau grid with pairs-bootstrap percentile bands
/// (each resample refits every tau) and the OLS fit with t intervals at the
/// same level.
inline QuantileProcess quantile_process(const Dataset& data, const std::vector<double>& tau_grid, Index n_boot,
                                        std::uint64_t seed, double level = 0.90, unsigned threads = 1) {
  data.validate();
  if (tau_grid.empty()) throw DomainError("tau grid is empty");
  for (double t : tau_grid) require_tau(t);
  if (n_boot < 0) throw DomainError("bootstrap count must be nonnegative");
  if (!(level > 0.0 && level < 1.0)) throw DomainError("band level must lie in (0, 1)");
  const Index k = data.n_coef();
  const std::size_t nt = tau_grid.size();

  QuantileProcess out;
  out.level = level;
  std::vector<VectorXd> point;
  for (double t : tau_grid) point.push_back(fit_quantile(data, t).beta);

  // draws[b][t] holds the coefficient vector, or is empty when that fit failed
  std::vector<std::vector<VectorXd>> draws(static_cast<std::size_t>(n_boot));
  detail::parallel_for(n_boot, threads, [&](Index b) {
    Philox rng(seed, static_cast<std::uint64_t>(b), StreamRole::resample);
    std::vector<Index> rows(static_cast<std::size_t>(data.n()));
    for (auto& i : rows) i = static_cast<Index>(rng.below(static_cast<std::uint64_t>(data.n())));
    const Dataset bd = subset_rows(data, rows);
    auto& slot = draws[static_cast<std::size_t>(b)];
    slot.resize(nt);
    for (std::size_t t = 0; t < nt; ++t) {
      try {
        QuantileFit f = fit_quantile(bd, tau_grid[t]);
        if (f.beta.allFinite()) slot[t] = std::move(f.beta);
      } catch (const std::exception&) {
      }
    }
  });

  const double lo_p = 0.5 * (1.0 - level), hi_p = 1.0 - lo_p;
  for (std::size_t t = 0; t < nt; ++t) {
    std::vector<std::vector<double>> samples(static_cast<std::size_t>(k));
    for (const auto& d : draws) {
      if (d[t].size() == 0) {
        ++out.boot_failures;
        continue;
      }
      for (Index j = 0; j < k; ++j) samples[static_cast<std::size_t>(j)].push_back(d[t](j));
    }
    for (Index j = 0; j < k; ++j) {
      ProcessRow r;
      r.term = coef_label(data, j);
      r.tau = tau_grid[t];
      r.estimate = point[t](j);
      auto& s = samples[static_cast<std::size_t>(j)];
      if (!s.empty()) {
        std::sort(s.begin(), s.end());
        r.band_low = sorted_quantile(s, lo_p);
        r.band_high = sorted_quantile(s, hi_p);
      }
      out.rows.push_back(r);
    }
  }

  const OlsFit ols = fit_ols(data);
  const double q = dist::student_t_two_sided_quantile(1.0 - level, static_cast<double>(ols.df_resid));
  for (Index j = 0; j < k; ++j) {
    const double se = std::sqrt(ols.sigma2 * ols.xtx_inv(j, j));
    out.ols.push_back({coef_label(data, j), ols.beta(j), ols.beta(j) - q * se, ols.beta(j) + q * se});
  }
  return out;
}

}  // namespace qshrink
