#include "spex/resample.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include "spex/rng.hpp"
#include "spex/stats.hpp"

namespace spex {

namespace {

// contiguous row ranges of each summer, in time order
std::vector<std::pair<Eigen::Index, Eigen::Index>> year_ranges(const Panel& p) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
  Eigen::Index start = 0;
  for (Eigen::Index t = 1; t <= p.n_times(); ++t) {
    if (t == p.n_times() ||
        p.times[static_cast<std::size_t>(t)].year !=
            p.times[static_cast<std::size_t>(start)].year) {
      out.emplace_back(start, t);
      start = t;
    }
  }
  return out;
}

}  // namespace

Panel block_bootstrap_replicate(const Panel& uniform, const BootstrapPlan& plan,
                                int replicate) {
  if (uniform.scale != ValueScale::uniform)
    throw std::invalid_argument("block_bootstrap: panel must be on uniform scale");
  if (plan.block_length < 1 || plan.block_length > 92)
    throw std::invalid_argument("block_bootstrap: block length must lie in [1, 92]");

  const auto ranges = year_ranges(uniform);
  Eigen::Index longest = 0;
  for (const auto& [a, b] : ranges) longest = std::max(longest, b - a);
  if (plan.block_length > longest)
    throw std::invalid_argument(
        "block_bootstrap: block length exceeds the longest summer (" +
        std::to_string(longest) + " retained days)");

  Rng rng(plan.seed, static_cast<std::uint64_t>(replicate));
  Panel out = uniform;

  // sample a source run of `len` consecutive rows from any summer long enough
  auto sample_block = [&](Eigen::Index len) {
    for (;;) {
      const auto& r = ranges[rng.below(ranges.size())];
      const Eigen::Index span = r.second - r.first;
      if (span < len) continue;
      const auto start =
          r.first + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(span - len + 1)));
      return start;
    }
  };

  for (const auto& [a, b] : ranges) {
    Eigen::Index t = a;
    while (t < b) {
      const Eigen::Index len = std::min<Eigen::Index>(plan.block_length, b - t);
      const Eigen::Index src = sample_block(len);
      for (Eigen::Index k = 0; k < len; ++k) {
        for (Eigen::Index s = 0; s < uniform.n_sites(); ++s) {
          if (!uniform.observed(t + k, s)) continue;  // frozen target mask
          if (uniform.observed(src + k, s))
            out.values(t + k, s) = uniform.values(src + k, s);
          else
            out.values(t + k, s) = rng.uniform();
        }
      }
      t += len;
    }
  }
  out.check_mask_consistency("block_bootstrap");
  return out;
}

BiasCorrectResult bias_correct(
    const std::vector<ObsTailFit>& boot_fits, const ObsTailFit& full_fit,
    const std::function<ObsTailFit(std::size_t, double)>& refit) {
  if (boot_fits.size() < 100)
    throw std::invalid_argument("bias_correct: need at least 100 replicates, got " +
                                std::to_string(boot_fits.size()));
  double mean_xi = 0.0;
  for (const auto& f : boot_fits) mean_xi += f.xi / static_cast<double>(boot_fits.size());

  BiasCorrectResult out;
  out.shift = full_fit.xi - mean_xi;
  for (std::size_t r = 0; r < boot_fits.size(); ++r) {
    const double xi_adj = boot_fits[r].xi + out.shift;
    try {
      ObsTailFit corrected = refit(r, xi_adj);
      corrected.xi = xi_adj;
      out.corrected.push_back(std::move(corrected));
    } catch (const std::exception&) {
      ++out.n_dropped;
    }
  }
  return out;
}

namespace {

// Lloyd's k-means with seeded k-means++ initialisation
std::vector<int> kmeans(const Eigen::MatrixX2d& xy, int k, std::uint64_t seed) {
  const auto n = xy.rows();
  Rng rng(seed, 0);
  std::vector<Eigen::RowVector2d> centres;
  centres.push_back(xy.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)))));
  while (static_cast<int>(centres.size()) < k) {
    std::vector<double> d2(static_cast<std::size_t>(n));
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centres) best = std::min(best, (xy.row(i) - c).squaredNorm());
      d2[static_cast<std::size_t>(i)] = best;
      total += best;
    }
    double u = rng.uniform() * total;
    Eigen::Index pick = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      u -= d2[static_cast<std::size_t>(i)];
      if (u <= 0.0) {
        pick = i;
        break;
      }
    }
    centres.push_back(xy.row(pick));
  }

  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (xy.row(i) - centres[static_cast<std::size_t>(c)]).squaredNorm();
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (assign[static_cast<std::size_t>(i)] != best) {
        assign[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    for (int c = 0; c < k; ++c) {
      Eigen::RowVector2d acc(0.0, 0.0);
      int cnt = 0;
      for (Eigen::Index i = 0; i < n; ++i)
        if (assign[static_cast<std::size_t>(i)] == c) {
          acc += xy.row(i);
          ++cnt;
        }
      if (cnt > 0) centres[static_cast<std::size_t>(c)] = acc / cnt;
    }
    if (!changed) break;
  }
  return assign;
}

}  // namespace

FoldSpec make_folds(const Panel& panel, FoldKind kind, FoldOptions opts) {
  FoldSpec spec;
  spec.kind = kind;
  spec.assignment = Eigen::MatrixXi::Constant(panel.n_times(), panel.n_sites(), -1);

  if (kind == FoldKind::k90) {
    spec.n_folds = opts.n_folds;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> entries;
    for (Eigen::Index t = 0; t < panel.n_times(); ++t)
      for (Eigen::Index s = 0; s < panel.n_sites(); ++s)
        if (panel.observed(t, s)) entries.emplace_back(t, s);
    // shuffled round-robin: folds are a uniform random partition with sizes
    // differing by at most one
    Rng rng(opts.seed, 0);
    for (std::size_t i = entries.size(); i > 1; --i)
      std::swap(entries[i - 1], entries[rng.below(i)]);
    for (std::size_t i = 0; i < entries.size(); ++i)
      spec.assignment(entries[i].first, entries[i].second) =
          static_cast<int>(i % static_cast<std::size_t>(opts.n_folds));
    return spec;
  }

  // spatio-temporal folds: spatial k-means clusters x every n-th week
  if (panel.n_sites() < opts.n_clusters)
    throw std::invalid_argument("make_folds: ST needs at least " +
                                std::to_string(opts.n_clusters) + " stations");
  spec.n_folds = opts.n_clusters * opts.n_temporal;
  const Projection proj = panel_projection(panel.sites);
  const auto xy = project_sites(panel.sites, proj);
  spec.site_cluster = kmeans(xy, opts.n_clusters, opts.seed);

  std::vector<std::size_t> fold_sizes(static_cast<std::size_t>(spec.n_folds), 0);
  for (Eigen::Index t = 0; t < panel.n_times(); ++t) {
    const int week = panel.times[static_cast<std::size_t>(t)].day_of_summer / 7;
    const int group = week % opts.n_temporal;
    for (Eigen::Index s = 0; s < panel.n_sites(); ++s) {
      if (!panel.observed(t, s)) continue;
      const int fold = spec.site_cluster[static_cast<std::size_t>(s)] * opts.n_temporal + group;
      spec.assignment(t, s) = fold;
      ++fold_sizes[static_cast<std::size_t>(fold)];
    }
  }

  // merge empty intersections into the nearest cluster's same temporal group
  std::vector<int> remap(static_cast<std::size_t>(spec.n_folds));
  std::iota(remap.begin(), remap.end(), 0);
  Eigen::MatrixX2d centres(opts.n_clusters, 2);
  for (int c = 0; c < opts.n_clusters; ++c) {
    Eigen::RowVector2d acc(0.0, 0.0);
    int cnt = 0;
    for (Eigen::Index s = 0; s < panel.n_sites(); ++s)
      if (spec.site_cluster[static_cast<std::size_t>(s)] == c) {
        acc += xy.row(s);
        ++cnt;
      }
    centres.row(c) = cnt > 0 ? (acc / cnt).eval() : acc;
  }
  for (int f = 0; f < spec.n_folds; ++f) {
    if (fold_sizes[static_cast<std::size_t>(f)] > 0) continue;
    const int cluster = f / opts.n_temporal, group = f % opts.n_temporal;
    double best = std::numeric_limits<double>::infinity();
    int target = f;
    for (int c = 0; c < opts.n_clusters; ++c) {
      if (c == cluster || fold_sizes[static_cast<std::size_t>(c * opts.n_temporal + group)] == 0)
        continue;
      const double d = (centres.row(c) - centres.row(cluster)).squaredNorm();
      if (d < best) {
        best = d;
        target = c * opts.n_temporal + group;
      }
    }
    if (target != f) {
      remap[static_cast<std::size_t>(f)] = target;
      ++spec.n_empty_merged;
    }
  }
  if (spec.n_empty_merged > 0)
    for (Eigen::Index t = 0; t < panel.n_times(); ++t)
      for (Eigen::Index s = 0; s < panel.n_sites(); ++s)
        if (spec.assignment(t, s) >= 0)
          spec.assignment(t, s) = remap[static_cast<std::size_t>(spec.assignment(t, s))];
  return spec;
}

double crps_quadrature(const std::function<double(double)>& quantile,
                       const std::function<double(double)>& cdf, double y,
                       double tau_step, int n_tail_points) {
  std::vector<double> xs;
  for (double tau = 0.001; tau < 0.9995; tau += tau_step) xs.push_back(quantile(tau));
  // geometric tail refinement from 0.999 toward 1
  double eps = 1e-3;
  for (int j = 1; j <= n_tail_points; ++j) {
    eps *= std::pow(1e-3, 1.0 / n_tail_points);
    xs.push_back(quantile(1.0 - eps));
  }
  xs.push_back(y);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    const double a = xs[i], b = xs[i + 1];
    if (a == b) continue;
    const double ind = a >= y ? 1.0 : 0.0;  // constant on the segment: y is a knot
    const double fa = cdf(a) - ind;
    const double fb = cdf(b) - ind;
    acc += 0.5 * (fa * fa + fb * fb) * (b - a);
  }
  return acc;
}

ScoreResult score(const Panel& panel, const Mask& held, const QuantileFn& quantile,
                  const CdfFn& cdf, const std::vector<double>& taus,
                  ScoreOptions opts) {
  if (held.rows() != panel.n_times() || held.cols() != panel.n_sites())
    throw std::invalid_argument("score: held-out mask shape mismatch");

  // full site-year groups provide the empirical reference quantiles
  std::map<std::pair<Eigen::Index, int>, std::vector<double>> groups;
  for (Eigen::Index t = 0; t < panel.n_times(); ++t)
    for (Eigen::Index s = 0; s < panel.n_sites(); ++s)
      if (panel.observed(t, s))
        groups[{s, panel.times[static_cast<std::size_t>(t)].year}].push_back(
            panel.values(t, s));
  for (auto& [key, vals] : groups) std::sort(vals.begin(), vals.end());

  ScoreResult out;
  double sq_acc = 0.0, crps_acc = 0.0;
  for (Eigen::Index t = 0; t < panel.n_times(); ++t) {
    const DayIndex& di = panel.times[static_cast<std::size_t>(t)];
    for (Eigen::Index s = 0; s < panel.n_sites(); ++s) {
      if (!held(t, s)) continue;
      if (!panel.observed(t, s))
        throw std::invalid_argument("score: held-out entry is unobserved");
      const auto& sorted = groups.at({s, di.year});
      if (sorted.size() < opts.min_site_year_obs) continue;
      for (double tau : taus) {
        const double emp = quantile_type7_sorted(sorted, tau);
        const double pred = quantile(di, s, tau);
        sq_acc += (emp - pred) * (emp - pred);
        ++out.n_quantiles;
      }
      const double obs = panel.values(t, s);
      crps_acc += crps_quadrature([&](double tt) { return quantile(di, s, tt); },
                                  [&](double x) { return cdf(di, s, x); }, obs,
                                  opts.tau_step, opts.n_tail_points);
      ++out.n_scored;
    }
  }
  out.rmse = out.n_quantiles > 0 ? std::sqrt(sq_acc / static_cast<double>(out.n_quantiles)) : 0.0;
  out.crps = out.n_scored > 0 ? crps_acc / static_cast<double>(out.n_scored) : 0.0;
  return out;
}

}  // namespace spex
