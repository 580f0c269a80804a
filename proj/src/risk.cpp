#include "spex/risk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "spex/parallel.hpp"
#include "spex/stats.hpp"

namespace spex {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double marginal_return_level(const MarginalSlice& slice, Eigen::Index s,
                             double period_years) {
  const auto& sm = slice.site[static_cast<std::size_t>(s)];
  const double p = 1.0 - 1.0 / (92.0 * period_years);
  if (p <= 1.0 - sm.lambda)
    throw std::invalid_argument(
        "marginal_return_level: level lies below the threshold; use body "
        "quantiles for sub-threshold periods");
  return sm.quantile(p);
}

std::vector<double> threshold_on_pareto(const MarginalSlice& slice,
                                        double t_critical) {
  std::vector<double> tp(slice.site.size());
  for (std::size_t s = 0; s < slice.site.size(); ++s) {
    const double f = slice.site[s].cdf(t_critical);
    tp[s] = f >= 1.0 ? kInf : 1.0 / (1.0 - f);
  }
  return tp;
}

void validate_event(const MarginalSlice& slice, double t_critical) {
  double u_max = -kInf;
  std::size_t arg = 0;
  for (std::size_t s = 0; s < slice.site.size(); ++s)
    if (slice.site[s].u > u_max) {
      u_max = slice.site[s].u;
      arg = s;
    }
  if (t_critical < u_max)
    throw std::invalid_argument(
        "event temperature " + std::to_string(t_critical) +
        " lies below the marginal threshold " + std::to_string(u_max) +
        " at site index " + std::to_string(arg) +
        "; the r-Pareto approximation covers marginal extremes only");
}

EventEstimate estimate_event(const SimBatch& batch,
                             const std::vector<double>& t_pareto, double v_r,
                             EventOptions opts) {
  const auto m = static_cast<Eigen::Index>(batch.m());
  const auto n = batch.profiles.cols();
  const auto L = batch.aux_risks.size();
  if (m == 0 || L == 0) throw std::invalid_argument("estimate_event: empty batch");
  if (t_pareto.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("estimate_event: threshold/site mismatch");

  EventEstimate est;

  // componentwise maxima of the unit-risk profiles and the b scaling
  double b = kInf;
  for (Eigen::Index s = 0; s < n; ++s) {
    if (!std::isfinite(t_pareto[static_cast<std::size_t>(s)])) continue;
    const double omega = batch.profiles.col(s).maxCoeff();
    b = std::min(b, t_pareto[static_cast<std::size_t>(s)] / omega);
  }
  if (!std::isfinite(b)) {  // T beyond every site's endpoint
    est.prob = 0.0;
    est.return_period_years = kInf;
    est.b_scaling = 0.0;
    return est;
  }
  if (opts.b_override) {
    b = *opts.b_override;
  } else if (b <= v_r) {
    // no scaling headroom: the minimal valid scaling is v_r itself
    b = v_r;
    est.unscaled_fallback = true;
  }
  est.b_scaling = b;

  // auxiliary risks sorted descending, with per-group prefix counts so the
  // risk-group spread is available alongside the profile-batch spread
  const int RG = static_cast<int>(std::max<std::size_t>(2, std::min<std::size_t>(10, L)));
  std::vector<std::size_t> order(L);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t bz) {
    return batch.aux_risks[a] > batch.aux_risks[bz];
  });
  std::vector<double> sorted_r(L);
  std::vector<int> group_of(L);
  for (std::size_t k = 0; k < L; ++k) {
    sorted_r[k] = batch.aux_risks[order[k]];
    group_of[k] = static_cast<int>(order[k] % static_cast<std::size_t>(RG));
  }
  // prefix[g][k] = how many of the k largest risks belong to group g
  std::vector<std::vector<std::int32_t>> prefix(
      static_cast<std::size_t>(RG), std::vector<std::int32_t>(L + 1, 0));
  for (std::size_t k = 0; k < L; ++k)
    for (int g = 0; g < RG; ++g)
      prefix[static_cast<std::size_t>(g)][k + 1] =
          prefix[static_cast<std::size_t>(g)][k] + (group_of[k] == g ? 1 : 0);
  std::vector<double> group_size(static_cast<std::size_t>(RG), 0.0);
  for (std::size_t k = 0; k < L; ++k)
    group_size[static_cast<std::size_t>(group_of[k])] += 1.0;

  auto count_above = [&](double inv) {
    auto it = std::lower_bound(sorted_r.begin(), sorted_r.end(), inv,
                               [](double a, double v) { return a > v; });
    return static_cast<std::size_t>(it - sorted_r.begin());
  };

  // per-profile tallies; deterministic slots for the reduction
  std::vector<double> hit_count(static_cast<std::size_t>(m), 0.0);
  std::vector<double> cover_sum(static_cast<std::size_t>(m), 0.0);
  Eigen::MatrixXd hits_by_group = Eigen::MatrixXd::Zero(m, RG);
  Eigen::MatrixXd cover_by_group = Eigen::MatrixXd::Zero(m, RG);
  parallel_for(static_cast<std::size_t>(m), [&](std::size_t i) {
    // k_s = #{j: r_j b w_i(s) > T^P(s)}; the event hit count is the maximum
    double cover = 0.0;
    std::size_t k_max = 0;
    for (Eigen::Index s = 0; s < n; ++s) {
      const double tp = t_pareto[static_cast<std::size_t>(s)];
      if (!std::isfinite(tp)) continue;
      const double rho = b * batch.profiles(static_cast<Eigen::Index>(i), s) / tp;
      if (!(rho > 0.0)) continue;
      const std::size_t k = count_above(1.0 / rho);
      k_max = std::max(k_max, k);
      cover += static_cast<double>(k) / static_cast<double>(n);
      for (int g = 0; g < RG; ++g)
        cover_by_group(static_cast<Eigen::Index>(i), g) +=
            prefix[static_cast<std::size_t>(g)][k] / static_cast<double>(n);
    }
    hit_count[i] = static_cast<double>(k_max);
    cover_sum[i] = cover;
    for (int g = 0; g < RG; ++g)
      hits_by_group(static_cast<Eigen::Index>(i), g) =
          prefix[static_cast<std::size_t>(g)][k_max];
  });

  const double denom = b * static_cast<double>(m) * static_cast<double>(L);
  const double total_hits = pairwise_sum(hit_count);
  const double total_cover = pairwise_sum(cover_sum);
  est.hits = static_cast<std::size_t>(total_hits);
  est.prob = total_hits / denom;
  est.coverage = total_cover / denom;
  est.coverage_given_event = total_hits > 0.0 ? total_cover / total_hits : 0.0;
  est.return_period_years = est.prob > 0.0 ? 1.0 / (92.0 * est.prob) : kInf;

  // Monte Carlo error has two sources: the m profiles and the L shared
  // auxiliary risks. Batch means over each capture both spreads.
  const int G = std::max(2, std::min<int>(opts.n_batches, static_cast<int>(m)));
  std::vector<double> bp(static_cast<std::size_t>(G), 0.0), bc(static_cast<std::size_t>(G), 0.0);
  std::vector<double> bn(static_cast<std::size_t>(G), 0.0);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto g = static_cast<std::size_t>(i * G / m);
    bp[g] += hit_count[static_cast<std::size_t>(i)];
    bc[g] += cover_sum[static_cast<std::size_t>(i)];
    bn[g] += 1.0;
  }
  std::vector<double> pg(static_cast<std::size_t>(G)), cg(static_cast<std::size_t>(G));
  for (int g = 0; g < G; ++g) {
    const double d = b * bn[static_cast<std::size_t>(g)] * static_cast<double>(L);
    pg[static_cast<std::size_t>(g)] = bp[static_cast<std::size_t>(g)] / d;
    cg[static_cast<std::size_t>(g)] = bc[static_cast<std::size_t>(g)] / d;
  }
  const double se_prof = sample_sd(pg) / std::sqrt(static_cast<double>(G));
  const double se_cov_prof = sample_sd(cg) / std::sqrt(static_cast<double>(G));

  std::vector<double> rg_p(static_cast<std::size_t>(RG)), rg_c(static_cast<std::size_t>(RG));
  for (int g = 0; g < RG; ++g) {
    const double d = b * static_cast<double>(m) * group_size[static_cast<std::size_t>(g)];
    rg_p[static_cast<std::size_t>(g)] = hits_by_group.col(g).sum() / d;
    rg_c[static_cast<std::size_t>(g)] = cover_by_group.col(g).sum() / d;
  }
  const double se_risk = sample_sd(rg_p) / std::sqrt(static_cast<double>(RG));
  const double se_cov_risk = sample_sd(rg_c) / std::sqrt(static_cast<double>(RG));

  est.se = std::sqrt(se_prof * se_prof + se_risk * se_risk);
  est.coverage_se = std::sqrt(se_cov_prof * se_cov_prof + se_cov_risk * se_cov_risk);
  return est;
}

std::vector<ChiDataScale> chi_data_scale(const SimBatch& batch,
                                         const std::vector<double>& t_pareto,
                                         double v_r,
                                         const std::vector<double>& h_grid,
                                         double bin_width_km) {
  const auto n = batch.profiles.cols();
  const auto m = static_cast<Eigen::Index>(batch.m());
  const auto L = batch.aux_risks.size();

  const Projection proj = panel_projection(batch.sites);
  const Eigen::MatrixX2d xy = project_sites(batch.sites, proj);

  double b = kInf;
  for (Eigen::Index s = 0; s < n; ++s) {
    if (!std::isfinite(t_pareto[static_cast<std::size_t>(s)])) continue;
    b = std::min(b, t_pareto[static_cast<std::size_t>(s)] /
                        batch.profiles.col(s).maxCoeff());
  }
  if (!std::isfinite(b)) b = v_r;
  if (b <= v_r) b = v_r;

  std::vector<double> sorted_r = batch.aux_risks;
  std::sort(sorted_r.begin(), sorted_r.end(), std::greater<>());
  auto count_r_above = [&](double inv) {
    auto it = std::lower_bound(sorted_r.begin(), sorted_r.end(), inv,
                               [](double a, double v) { return a > v; });
    return static_cast<double>(it - sorted_r.begin());
  };

  std::vector<ChiDataScale> out;
  for (double h : h_grid) {
    ChiDataScale row;
    row.h = h;
    // ordered pairs within the distance band
    std::vector<std::pair<int, int>> pairs;
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index c = 0; c < n; ++c) {
        if (a == c) continue;
        const double d = (xy.row(a) - xy.row(c)).norm();
        if (std::abs(d - h) <= bin_width_km / 2.0)
          pairs.emplace_back(static_cast<int>(a), static_cast<int>(c));
      }
    row.n_pairs = pairs.size();
    if (h == 0.0) {  // a site paired with itself
      row.conditional = 1.0;
      ChiDataScale self = row;
      // unconditional at h = 0 is the single-site exceedance probability
      double acc = 0.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        double per_profile = 0.0;
        for (Eigen::Index s = 0; s < n; ++s) {
          const double tp = t_pareto[static_cast<std::size_t>(s)];
          if (!std::isfinite(tp)) continue;
          per_profile += count_r_above(tp / (b * batch.profiles(i, s)));
        }
        acc += per_profile / static_cast<double>(n);
      }
      self.unconditional = acc / (b * static_cast<double>(m) * static_cast<double>(L));
      out.push_back(self);
      continue;
    }
    if (pairs.empty()) {
      row.empty_conditioning = true;
      out.push_back(row);
      continue;
    }

    std::vector<double> num(static_cast<std::size_t>(m), 0.0);
    std::vector<double> den(static_cast<std::size_t>(m), 0.0);
    std::vector<double> joint(static_cast<std::size_t>(m), 0.0);
    parallel_for(static_cast<std::size_t>(m), [&](std::size_t i) {
      const auto row_i = batch.profiles.row(static_cast<Eigen::Index>(i));
      double nn = 0.0, dd = 0.0, jj = 0.0;
      for (const auto& [a, c] : pairs) {
        const double tpa = t_pareto[static_cast<std::size_t>(a)];
        const double tpc = t_pareto[static_cast<std::size_t>(c)];
        if (!std::isfinite(tpa)) continue;
        const double inv_a = tpa / (b * row_i(a));
        dd += count_r_above(inv_a);
        if (!std::isfinite(tpc)) continue;
        const double inv_both = std::max(inv_a, tpc / (b * row_i(c)));
        const double both = count_r_above(inv_both);
        nn += both;
        jj += both;
      }
      num[i] = nn;
      den[i] = dd;
      joint[i] = jj;
    });
    const double total_num = pairwise_sum(num);
    const double total_den = pairwise_sum(den);
    row.empty_conditioning = total_den == 0.0;
    row.conditional = total_den > 0.0 ? total_num / total_den : 0.0;
    row.unconditional = pairwise_sum(joint) /
                        (b * static_cast<double>(m) * static_cast<double>(L) *
                         static_cast<double>(pairs.size()));
    out.push_back(row);
  }
  return out;
}

}  // namespace spex
