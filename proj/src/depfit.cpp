#include "spex/depfit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"
#include "spex/optim.hpp"
#include "spex/stats.hpp"

namespace spex {

std::optional<double> risk_value(const Eigen::VectorXd& values,
                                 const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>& observed,
                                 int min_observed) {
  double acc = 0.0;
  int n = 0;
  for (Eigen::Index s = 0; s < values.size(); ++s) {
    if (!observed(s)) continue;
    acc += values(s);
    ++n;
  }
  if (n < min_observed) return std::nullopt;
  return acc / static_cast<double>(n);
}

RiskSample risk_sample(const Panel& pareto, int min_observed) {
  if (pareto.scale != ValueScale::pareto)
    throw std::invalid_argument("risk_sample: panel must be on Pareto scale");
  RiskSample out;
  for (Eigen::Index t = 0; t < pareto.n_times(); ++t) {
    auto r = risk_value(pareto.values.row(t).transpose(),
                        pareto.observed.row(t).transpose(), min_observed);
    if (r)
      out.risks.push_back(*r);
    else
      ++out.n_excluded;
  }
  return out;
}

RiskThreshold risk_threshold(const std::vector<double>& risks, double level) {
  if (risks.empty()) throw std::invalid_argument("risk_threshold: empty risk sample");
  RiskThreshold rt;
  rt.v_r = quantile_type7(risks, level);
  rt.n_total = risks.size();
  for (double r : risks)
    if (r > rt.v_r) ++rt.n_exceed;
  return rt;
}

namespace {

double wls_objective(const std::vector<ChiBin>& bins, const VariogramParams& v) {
  double acc = 0.0;
  for (const auto& b : bins) {
    const double w = 1.0 / std::max(b.boot_var, 1e-8);
    const double r = b.chi - chi_isotropic(b.h_mid, v);
    acc += w * r * r;
  }
  return acc;
}

// invert chi = 2 - 2 Phi(sqrt(gamma/2)) for gamma
double gamma_from_chi(double chi) {
  const double c = std::clamp(chi, 1e-6, 1.0 - 1e-6);
  const double x = norm_quantile(1.0 - c / 2.0);
  return 2.0 * x * x;
}

}  // namespace

VariogramParams fit_variogram_to_bins(const std::vector<ChiBin>& bins,
                                      double* objective, bool* oversmooth) {
  if (bins.size() < 3)
    throw std::invalid_argument("fit_variogram_to_bins: need at least 3 bins");
  double h_max = 0.0;
  for (const auto& b : bins) h_max = std::max(h_max, b.h_mid);

  const double lo_a = std::log(1e-8), hi_a = std::log(1e3);
  const double lo_p = std::log(1e-3 * h_max), hi_p = std::log(1e3 * h_max);
  const double lo_n = std::log(0.05), hi_n = std::log(50.0);
  auto obj = [&](const std::vector<double>& x) {
    if (x[0] < lo_a || x[0] > hi_a || x[1] < lo_p || x[1] > hi_p ||
        x[2] < lo_n || x[2] > hi_n)
      return std::numeric_limits<double>::infinity();
    return wls_objective(bins, {std::exp(x[0]), std::exp(x[1]), std::exp(x[2])});
  };

  const double alpha0 = std::max(gamma_from_chi(bins.back().chi), 1e-6);
  std::vector<std::vector<double>> starts;
  for (double nu0 : {0.5, 1.0, 2.0})
    for (double f : {0.5, 2.0})
      starts.push_back({std::log(alpha0), std::log(f * h_max), std::log(nu0)});

  NelderMeadOptions opts;
  opts.x_tol = 1e-10;
  opts.f_tol = 1e-12;
  opts.restarts = 3;
  opts.initial_step = 0.4;
  OptimResult r = nelder_mead_multistart(obj, starts, opts);
  if (!std::isfinite(r.value))
    throw std::runtime_error("fit_variogram_to_bins: optimizer failed");

  VariogramParams v{std::exp(r.x[0]), std::exp(r.x[1]), std::exp(r.x[2])};
  if (objective) *objective = r.value;
  if (oversmooth) *oversmooth = v.nu > 10.0;
  return v;
}

namespace {

// 1-D re-fit of the sill with (phi, nu) held fixed
double fit_alpha_only(const std::vector<ChiBin>& bins,
                      const std::vector<double>& chis, const VariogramParams& base) {
  auto obj = [&](double log_a) {
    VariogramParams v = base;
    v.alpha = std::exp(log_a);
    double acc = 0.0;
    for (std::size_t b = 0; b < bins.size(); ++b) {
      const double w = 1.0 / std::max(bins[b].boot_var, 1e-8);
      const double r = chis[b] - chi_isotropic(bins[b].h_mid, v);
      acc += w * r * r;
    }
    return -acc;
  };
  return std::exp(brent_maximize(obj, std::log(1e-8), std::log(1e3), 1e-10).x);
}

}  // namespace

DependenceModel fit_dependence(const Panel& pareto, double p_fit,
                               DepFitOptions opts,
                               const CovariateSeries* time_covariate) {
  DependenceModel model;
  model.p_fit = p_fit;

  ChiOptions copts;
  copts.n_bins = opts.n_bins;
  copts.n_boot = opts.n_boot;
  copts.seed = opts.seed;
  ChiCloud cloud = chi_empirical(pareto, p_fit, copts);
  model.vario = fit_variogram_to_bins(cloud.bins, &model.objective, &model.oversmooth);

  RiskSample rs = risk_sample(pareto, opts.min_observed);
  model.v_r = risk_threshold(rs.risks, opts.risk_level).v_r;

  if (time_covariate) {
    // Split summers at the median M^I and compare sill estimates on the two
    // halves; a1 is the implied log-linear slope with bootstrap percentile CI.
    std::vector<double> mi;
    for (const auto& t : pareto.times) mi.push_back(time_covariate->at(t).m_i);
    const double med = quantile_type7(mi, 0.5);

    auto subset = [&](bool high) {
      Panel sub = pareto;
      std::vector<Eigen::Index> keep;
      for (Eigen::Index t = 0; t < pareto.n_times(); ++t)
        if ((mi[static_cast<std::size_t>(t)] > med) == high)
          keep.push_back(t);
      sub.times.clear();
      sub.values.resize(static_cast<Eigen::Index>(keep.size()), pareto.n_sites());
      sub.observed.resize(static_cast<Eigen::Index>(keep.size()), pareto.n_sites());
      for (std::size_t i = 0; i < keep.size(); ++i) {
        sub.times.push_back(pareto.times[static_cast<std::size_t>(keep[i])]);
        sub.values.row(static_cast<Eigen::Index>(i)) = pareto.values.row(keep[i]);
        sub.observed.row(static_cast<Eigen::Index>(i)) = pareto.observed.row(keep[i]);
      }
      return sub;
    };

    ChiOptions sopts = copts;
    sopts.keep_replicates = true;
    sopts.seed = opts.seed + 1;
    ChiCloud lo = chi_empirical(subset(false), p_fit, sopts);
    sopts.seed = opts.seed + 2;
    ChiCloud hi = chi_empirical(subset(true), p_fit, sopts);

    double mi_lo = 0.0, mi_hi = 0.0;
    int c_lo = 0, c_hi = 0;
    for (double v : mi)
      if (v > med) { mi_hi += v; ++c_hi; } else { mi_lo += v; ++c_lo; }
    mi_lo /= std::max(c_lo, 1);
    mi_hi /= std::max(c_hi, 1);
    const double dmi = mi_hi - mi_lo;

    auto point_chis = [](const ChiCloud& c) {
      std::vector<double> out;
      for (const auto& b : c.bins) out.push_back(b.chi);
      return out;
    };
    const double a_lo = fit_alpha_only(lo.bins, point_chis(lo), model.vario);
    const double a_hi = fit_alpha_only(hi.bins, point_chis(hi), model.vario);

    TimeVarFit tv;
    tv.a1 = (std::log(a_hi) - std::log(a_lo)) / dmi;
    tv.a0 = std::log(a_lo) - tv.a1 * mi_lo;

    const int B = std::min<int>(opts.n_boot,
                                static_cast<int>(lo.bin_replicates.front().size()));
    std::vector<double> a1_reps;
    std::vector<double> chis_lo(lo.bins.size()), chis_hi(hi.bins.size());
    for (int b = 0; b < B; ++b) {
      for (std::size_t g = 0; g < lo.bins.size(); ++g)
        chis_lo[g] = lo.bin_replicates[g][static_cast<std::size_t>(b)];
      for (std::size_t g = 0; g < hi.bins.size(); ++g)
        chis_hi[g] = hi.bin_replicates[g][static_cast<std::size_t>(b)];
      const double al = fit_alpha_only(lo.bins, chis_lo, model.vario);
      const double ah = fit_alpha_only(hi.bins, chis_hi, model.vario);
      a1_reps.push_back((std::log(ah) - std::log(al)) / dmi);
    }
    std::sort(a1_reps.begin(), a1_reps.end());
    tv.ci_lo = quantile_type7_sorted(a1_reps, 0.025);
    tv.ci_hi = quantile_type7_sorted(a1_reps, 0.975);
    tv.significant = tv.ci_lo > 0.0 || tv.ci_hi < 0.0;
    model.time_var = tv;
  }
  return model;
}

void save_dependence(const DependenceModel& m, const std::string& path) {
  nlohmann::json j;
  j["vario"] = {{"alpha", m.vario.alpha}, {"phi", m.vario.phi}, {"nu", m.vario.nu}};
  j["v_r"] = m.v_r;
  j["risk_kind"] = m.risk_kind;
  j["p_fit"] = m.p_fit;
  j["objective"] = m.objective;
  j["oversmooth"] = m.oversmooth;
  if (m.time_var) {
    j["time_var"] = {{"a0", m.time_var->a0},
                     {"a1", m.time_var->a1},
                     {"ci_lo", m.time_var->ci_lo},
                     {"ci_hi", m.time_var->ci_hi},
                     {"significant", m.time_var->significant}};
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

DependenceModel load_dependence(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  DependenceModel m;
  m.vario.alpha = j.at("vario").at("alpha").get<double>();
  m.vario.phi = j.at("vario").at("phi").get<double>();
  m.vario.nu = j.at("vario").at("nu").get<double>();
  m.v_r = j.at("v_r").get<double>();
  m.risk_kind = j.at("risk_kind").get<std::string>();
  m.p_fit = j.at("p_fit").get<double>();
  m.objective = j.value("objective", 0.0);
  m.oversmooth = j.value("oversmooth", false);
  if (j.contains("time_var")) {
    TimeVarFit tv;
    tv.a0 = j["time_var"].at("a0").get<double>();
    tv.a1 = j["time_var"].at("a1").get<double>();
    tv.ci_lo = j["time_var"].at("ci_lo").get<double>();
    tv.ci_hi = j["time_var"].at("ci_hi").get<double>();
    tv.significant = j["time_var"].at("significant").get<bool>();
    m.time_var = tv;
  }
  return m;
}

}  // namespace spex
