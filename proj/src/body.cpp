#include "spex/body.hpp"

#include <array>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "spex/parallel.hpp"

namespace spex {

std::string to_string(BodySpec s) {
  switch (s) {
    case BodySpec::base: return "base";
    case BodySpec::clim: return "clim";
    case BodySpec::clim_mi: return "clim+mi";
  }
  return "base";
}

BodySpec body_spec_from_string(const std::string& s) {
  if (s == "base") return BodySpec::base;
  if (s == "clim") return BodySpec::clim;
  if (s == "clim+mi" || s == "clim_mi") return BodySpec::clim_mi;
  throw std::runtime_error("unknown body model '" + s + "'");
}

std::vector<std::string> body_covariate_names(BodySpec s) {
  switch (s) {
    case BodySpec::base: return {"1"};
    case BodySpec::clim: return {"1", "q_c"};
    case BodySpec::clim_mi: return {"1", "q_c", "m_i"};
  }
  return {"1"};
}

std::vector<double> default_tau_grid() {
  std::vector<double> taus{0.01};
  for (int k = 1; k <= 19; ++k) taus.push_back(0.05 * k);
  taus.push_back(0.99);
  return taus;
}

std::vector<double> BodyModel::quantile_knots(const Eigen::VectorXd& q_c_row,
                                              double m_i) const {
  std::vector<double> q(tau_grid.size());
  for (std::size_t k = 0; k < tau_grid.size(); ++k) {
    const auto& b = fits[k].betas;
    double v = b[0];
    if (spec != BodySpec::base) v += b[1] * q_c_row(static_cast<Eigen::Index>(k));
    if (spec == BodySpec::clim_mi) v += b[2] * m_i;
    q[k] = v;
  }
  return q;
}

MonotoneCubic BodyModel::spline(const Eigen::VectorXd& q_c_row, double m_i) const {
  return MonotoneCubic(tau_grid, quantile_knots(q_c_row, m_i));
}

BodyModel build_body(std::vector<AldFit> fits, std::optional<BodyTraining> training) {
  if (fits.size() < 2) throw std::invalid_argument("build_body: need two or more fits");
  BodyModel m;
  for (const auto& f : fits) m.tau_grid.push_back(f.tau);
  for (std::size_t k = 0; k + 1 < m.tau_grid.size(); ++k)
    if (!(m.tau_grid[k] < m.tau_grid[k + 1]))
      throw std::invalid_argument("build_body: fits must be ordered by increasing tau");
  const auto& names = fits.front().covariate_spec;
  for (const auto& f : fits)
    if (f.covariate_spec != names)
      throw std::invalid_argument("build_body: mixed covariate specs");
  if (names == body_covariate_names(BodySpec::base)) m.spec = BodySpec::base;
  else if (names == body_covariate_names(BodySpec::clim)) m.spec = BodySpec::clim;
  else if (names == body_covariate_names(BodySpec::clim_mi)) m.spec = BodySpec::clim_mi;
  else throw std::invalid_argument("build_body: unrecognized covariate spec");
  m.fits = std::move(fits);

  if (training) {
    const Panel& panel = *training->panel;
    const Eigen::MatrixXd& q_c = *training->q_c;
    auto check = [&](Eigen::Index s, double m_i, const DayIndex* di) {
      const auto knots = m.quantile_knots(q_c.row(s).transpose(), m_i);
      for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
        if (!(knots[k] < knots[k + 1])) {
          const std::string when =
              di ? "year " + std::to_string(di->year) + " day " +
                       std::to_string(di->day_of_summer)
                 : std::string("all times");
          throw std::runtime_error(
              "build_body: crossing quantiles at " + when + ", site " +
              panel.sites[static_cast<std::size_t>(s)].id + ", tau " +
              std::to_string(m.tau_grid[k + 1]));
        }
      }
    };
    if (m.spec == BodySpec::clim_mi) {
      for (Eigen::Index t = 0; t < panel.n_times(); ++t) {
        const auto& di = panel.times[static_cast<std::size_t>(t)];
        const double m_i = training->cov->at(di).m_i;
        for (Eigen::Index s = 0; s < panel.n_sites(); ++s)
          if (panel.observed(t, s)) check(s, m_i, &di);
      }
    } else {
      // knots do not depend on time; one pass over sites suffices
      for (Eigen::Index s = 0; s < panel.n_sites(); ++s) {
        check(s, 0.0, nullptr);
        if (m.spec == BodySpec::base) break;
      }
    }
  }
  return m;
}

void body_design(const Panel& panel, const Eigen::MatrixXd& q_c,
                 const CovariateSeries& cov, BodySpec spec, std::size_t tau_idx,
                 Eigen::MatrixXd& X, Eigen::VectorXd& y) {
  const auto p = static_cast<Eigen::Index>(body_covariate_names(spec).size());
  std::vector<double> ys;
  std::vector<std::array<double, 3>> rows;
  for (Eigen::Index t = 0; t < panel.n_times(); ++t) {
    const double m_i =
        spec == BodySpec::clim_mi
            ? cov.at(panel.times[static_cast<std::size_t>(t)]).m_i
            : 0.0;
    for (Eigen::Index s = 0; s < panel.n_sites(); ++s) {
      if (!panel.observed(t, s)) continue;
      ys.push_back(panel.values(t, s));
      rows.push_back({1.0, q_c(s, static_cast<Eigen::Index>(tau_idx)), m_i});
    }
  }
  X.resize(static_cast<Eigen::Index>(rows.size()), p);
  y.resize(static_cast<Eigen::Index>(ys.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Eigen::Index j = 0; j < p; ++j)
      X(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
    y(static_cast<Eigen::Index>(i)) = ys[i];
  }
}

BodyModel fit_body(const Panel& panel, const Eigen::MatrixXd& q_c,
                   const CovariateSeries& cov, BodySpec spec,
                   std::vector<double> tau_grid) {
  std::vector<AldFit> fits(tau_grid.size());
  parallel_for(tau_grid.size(), [&](std::size_t k) {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    body_design(panel, q_c, cov, spec, k, X, y);
    fits[k] = fit_ald(X, y, tau_grid[k], body_covariate_names(spec));
  });
  BodyTraining training{&panel, &q_c, &cov};
  return build_body(std::move(fits), training);
}

void save_body(const BodyModel& m, const std::string& path) {
  nlohmann::json j;
  j["tau_grid"] = m.tau_grid;
  j["model"] = to_string(m.spec);
  j["covariate_spec"] = body_covariate_names(m.spec);
  nlohmann::json fits = nlohmann::json::array();
  for (const auto& f : m.fits) {
    fits.push_back({{"tau", f.tau},
                    {"betas", f.betas},
                    {"log_psi", f.log_psi},
                    {"n_obs", f.n_obs},
                    {"loglik", f.loglik}});
  }
  j["fits"] = std::move(fits);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

BodyModel load_body(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  BodyModel m;
  m.tau_grid = j.at("tau_grid").get<std::vector<double>>();
  m.spec = body_spec_from_string(j.at("model").get<std::string>());
  for (const auto& jf : j.at("fits")) {
    AldFit f;
    f.tau = jf.at("tau").get<double>();
    f.betas = jf.at("betas").get<std::vector<double>>();
    f.log_psi = jf.at("log_psi").get<double>();
    f.n_obs = jf.at("n_obs").get<std::size_t>();
    f.loglik = jf.at("loglik").get<double>();
    f.covariate_spec = body_covariate_names(m.spec);
    m.fits.push_back(std::move(f));
  }
  if (m.fits.size() != m.tau_grid.size())
    throw std::runtime_error(path + ": fit/tau count mismatch");
  return m;
}

}  // namespace spex
