#include "spex/chi.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "spex/csv.hpp"
#include "spex/parallel.hpp"
#include "spex/rng.hpp"
#include "spex/stats.hpp"

namespace spex {

namespace {

struct PairCounts {
  int i, j;
  double h;
  std::vector<std::int32_t> joint_by_year;
  std::vector<std::int32_t> cond_by_year;  // cond_i + cond_j
  long coobserved = 0;
};

}  // namespace

ChiCloud chi_empirical(const Panel& pareto, double p, ChiOptions opts) {
  if (pareto.scale != ValueScale::pareto)
    throw std::invalid_argument("chi_empirical: panel must be on Pareto scale");
  if (!(p > 0.5 && p < 1.0))
    throw std::invalid_argument("chi_empirical: p must lie in (0.5, 1)");
  const double v_p = 1.0 / (1.0 - p);

  // year blocks for the bootstrap
  std::vector<int> years;
  std::vector<int> year_of_time(static_cast<std::size_t>(pareto.n_times()));
  {
    std::map<int, int> index;
    for (std::size_t t = 0; t < pareto.times.size(); ++t) {
      auto [it, inserted] = index.emplace(pareto.times[t].year,
                                          static_cast<int>(years.size()));
      if (inserted) years.push_back(pareto.times[t].year);
      year_of_time[t] = it->second;
    }
  }
  const std::size_t n_years = years.size();

  const auto proj = panel_projection(pareto.sites);
  const auto xy = project_sites(pareto.sites, proj);

  const auto ns = pareto.n_sites();
  ChiCloud cloud;
  cloud.p = p;

  std::vector<PairCounts> counts;
  counts.reserve(static_cast<std::size_t>(ns) * (static_cast<std::size_t>(ns) - 1) / 2);
  for (Eigen::Index i = 0; i < ns; ++i) {
    for (Eigen::Index j = i + 1; j < ns; ++j) {
      PairCounts pc;
      pc.i = static_cast<int>(i);
      pc.j = static_cast<int>(j);
      pc.h = (xy.row(i) - xy.row(j)).norm();
      pc.joint_by_year.assign(n_years, 0);
      pc.cond_by_year.assign(n_years, 0);
      counts.push_back(std::move(pc));
    }
  }

  parallel_for(counts.size(), [&](std::size_t k) {
    PairCounts& pc = counts[k];
    const Eigen::Index i = pc.i, j = pc.j;
    for (Eigen::Index t = 0; t < pareto.n_times(); ++t) {
      if (!pareto.observed(t, i) || !pareto.observed(t, j)) continue;
      ++pc.coobserved;
      const bool ei = pareto.values(t, i) > v_p;
      const bool ej = pareto.values(t, j) > v_p;
      const int y = year_of_time[static_cast<std::size_t>(t)];
      if (ei && ej) ++pc.joint_by_year[static_cast<std::size_t>(y)];
      if (ei) ++pc.cond_by_year[static_cast<std::size_t>(y)];
      if (ej) ++pc.cond_by_year[static_cast<std::size_t>(y)];
    }
  });

  // retain pairs with conditioning exceedances and enough overlap
  std::vector<const PairCounts*> retained;
  for (const auto& pc : counts) {
    const long cond = std::accumulate(pc.cond_by_year.begin(), pc.cond_by_year.end(), 0L);
    if (pc.coobserved < opts.min_coobserved || cond == 0) {
      ++cloud.n_excluded;
      continue;
    }
    retained.push_back(&pc);
  }
  if (retained.empty())
    throw std::runtime_error("chi_empirical: no pair has conditioning exceedances");

  auto pair_chi = [](long joint2, long cond) {
    return cond > 0 ? static_cast<double>(joint2) / static_cast<double>(cond) : -1.0;
  };

  cloud.pairs.resize(retained.size());
  for (std::size_t k = 0; k < retained.size(); ++k) {
    const auto& pc = *retained[k];
    PairChi& out = cloud.pairs[k];
    out.site_i = pc.i;
    out.site_j = pc.j;
    out.h = pc.h;
    out.n_joint = std::accumulate(pc.joint_by_year.begin(), pc.joint_by_year.end(), 0L);
    out.n_cond = std::accumulate(pc.cond_by_year.begin(), pc.cond_by_year.end(), 0L);
    out.n_coobserved = pc.coobserved;
    out.chi = pair_chi(2 * out.n_joint, out.n_cond);
  }

  // pass 1 over bootstrap replicates: per-pair variance of chi*
  const int B = opts.n_boot;
  std::vector<double> mult(n_years);
  std::vector<double> sum(retained.size(), 0.0), sumsq(retained.size(), 0.0);
  auto replicate_chi = [&](const PairCounts& pc, const std::vector<double>& m,
                           double fallback) {
    double joint2 = 0.0, cond = 0.0;
    for (std::size_t y = 0; y < m.size(); ++y) {
      joint2 += 2.0 * m[y] * pc.joint_by_year[y];
      cond += m[y] * pc.cond_by_year[y];
    }
    return cond > 0.0 ? joint2 / cond : fallback;
  };
  auto draw_multiplicities = [&](int b, std::vector<double>& m) {
    Rng rng(opts.seed, static_cast<std::uint64_t>(b) + 1);
    std::fill(m.begin(), m.end(), 0.0);
    for (std::size_t y = 0; y < n_years; ++y)
      m[rng.below(n_years)] += 1.0;
  };
  for (int b = 0; b < B; ++b) {
    draw_multiplicities(b, mult);
    for (std::size_t k = 0; k < retained.size(); ++k) {
      const double c = replicate_chi(*retained[k], mult, cloud.pairs[k].chi);
      sum[k] += c;
      sumsq[k] += c * c;
    }
  }
  for (std::size_t k = 0; k < retained.size(); ++k) {
    const double mb = sum[k] / B;
    cloud.pairs[k].boot_var = std::max(sumsq[k] / B - mb * mb, 0.0) *
                              static_cast<double>(B) / std::max(B - 1, 1);
  }

  // equal-pair-count bins over distance
  std::vector<std::size_t> order(retained.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return cloud.pairs[a].h < cloud.pairs[b].h;
  });
  const std::size_t n_bins =
      std::min<std::size_t>(static_cast<std::size_t>(opts.n_bins), retained.size());
  std::vector<std::vector<std::size_t>> bin_members(n_bins);
  for (std::size_t r = 0; r < order.size(); ++r)
    bin_members[r * n_bins / order.size()].push_back(order[r]);

  auto weight_of = [&](std::size_t k) {
    return 1.0 / std::max(cloud.pairs[k].boot_var, 1e-8);
  };

  cloud.bins.resize(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) {
    ChiBin& bin = cloud.bins[b];
    bin.n_pairs = bin_members[b].size();
    double wsum = 0.0, cw = 0.0, hw = 0.0;
    bin.h_lo = cloud.pairs[bin_members[b].front()].h;
    bin.h_hi = cloud.pairs[bin_members[b].back()].h;
    for (auto k : bin_members[b]) {
      const double w = weight_of(k);
      wsum += w;
      cw += w * cloud.pairs[k].chi;
      hw += w * cloud.pairs[k].h;
    }
    bin.chi = cw / wsum;
    bin.h_mid = hw / wsum;
  }

  // pass 2: percentile CIs of the weighted bin means (same streams)
  std::vector<std::vector<double>> bin_reps(n_bins, std::vector<double>(B));
  for (int b = 0; b < B; ++b) {
    draw_multiplicities(b, mult);
    for (std::size_t g = 0; g < n_bins; ++g) {
      double wsum = 0.0, cw = 0.0;
      for (auto k : bin_members[g]) {
        const double w = weight_of(k);
        wsum += w;
        cw += w * replicate_chi(*retained[k], mult, cloud.pairs[k].chi);
      }
      bin_reps[g][static_cast<std::size_t>(b)] = cw / wsum;
    }
  }
  const double a = (1.0 - opts.ci_level) / 2.0;
  for (std::size_t g = 0; g < n_bins; ++g) {
    auto sorted = bin_reps[g];
    std::sort(sorted.begin(), sorted.end());
    cloud.bins[g].ci_lo = quantile_type7_sorted(sorted, a);
    cloud.bins[g].ci_hi = quantile_type7_sorted(sorted, 1.0 - a);
    const double mb = mean(bin_reps[g]);
    double ss = 0.0;
    for (double v : bin_reps[g]) ss += (v - mb) * (v - mb);
    cloud.bins[g].boot_var = ss / std::max<std::size_t>(bin_reps[g].size() - 1, 1);
  }
  if (opts.keep_replicates) cloud.bin_replicates = std::move(bin_reps);
  return cloud;
}

void save_chi(const ChiCloud& cloud, const std::string& pair_path,
              const std::string& bin_path) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& pc : cloud.pairs)
    rows.push_back({std::to_string(pc.site_i), std::to_string(pc.site_j),
                    fmt_g9(pc.h), fmt_g9(pc.chi), std::to_string(pc.n_joint),
                    std::to_string(pc.n_cond), std::to_string(pc.n_coobserved),
                    fmt_g9(pc.boot_var)});
  write_csv(pair_path,
            {"site_i", "site_j", "h_km", "chi", "n_joint", "n_cond",
             "n_coobserved", "boot_var"},
            rows);

  rows.clear();
  for (const auto& b : cloud.bins)
    rows.push_back({fmt_g9(b.h_mid), fmt_g9(b.h_lo), fmt_g9(b.h_hi),
                    fmt_g9(b.chi), fmt_g9(b.ci_lo), fmt_g9(b.ci_hi),
                    std::to_string(b.n_pairs)});
  write_csv(bin_path,
            {"h_mid", "h_lo", "h_hi", "chi", "ci_lo", "ci_hi", "n_pairs"}, rows);
}

}  // namespace spex
