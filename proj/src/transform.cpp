#include "spex/transform.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace spex {

namespace {

template <typename CellFn>
Panel transform_panel(const Panel& data, const MarginalModel& model,
                      ValueScale out_scale, CellFn&& fn) {
  Panel out = data;
  out.scale = out_scale;
  for (Eigen::Index t = 0; t < data.n_times(); ++t) {
    const MarginalSlice slice = model.at(data.times[static_cast<std::size_t>(t)]);
    for (Eigen::Index s = 0; s < data.n_sites(); ++s) {
      if (!data.observed(t, s)) continue;
      out.values(t, s) = fn(slice.site[static_cast<std::size_t>(s)], data.values(t, s), t, s);
    }
  }
  return out;
}

}  // namespace

namespace {

// shared endpoint-violation bookkeeping for the forward transforms
struct EndpointGuard {
  explicit EndpointGuard(const Panel& p) : data(p) {}
  const Panel& data;
  std::ostringstream offenders;
  int n_offend = 0;

  void record(Eigen::Index t, Eigen::Index s, double x) {
    if (n_offend < 10)
      offenders << (n_offend ? ", " : "") << "(row " << t << ", site "
                << data.sites[static_cast<std::size_t>(s)].id << ", x=" << x << ")";
    ++n_offend;
  }
  void raise_if_any(const char* op) {
    if (n_offend > 0)
      throw std::runtime_error(std::string(op) + ": F >= 1 at " +
                               std::to_string(n_offend) +
                               " observed entries (endpoint violation): " +
                               offenders.str());
  }
};

}  // namespace

Panel to_uniform(const Panel& data, const MarginalModel& model) {
  EndpointGuard guard(data);
  Panel out = transform_panel(
      data, model, ValueScale::uniform,
      [&](const SiteMarginal& sm, double x, Eigen::Index t, Eigen::Index s) {
        const double f = sm.cdf(x);
        if (f >= 1.0) guard.record(t, s, x);
        return f;
      });
  guard.raise_if_any("to_uniform");
  out.check_mask_consistency("to_uniform");
  return out;
}

Panel to_pareto(const Panel& data, const MarginalModel& model) {
  EndpointGuard guard(data);
  Panel out = transform_panel(
      data, model, ValueScale::pareto,
      [&](const SiteMarginal& sm, double x, Eigen::Index t, Eigen::Index s) {
        const double surv = sm.survival(x);
        if (surv <= 0.0) {
          guard.record(t, s, x);
          return std::numeric_limits<double>::quiet_NaN();
        }
        return 1.0 / surv;
      });
  guard.raise_if_any("to_pareto");
  out.check_mask_consistency("to_pareto");
  return out;
}

Panel uniform_to_pareto(const Panel& uniform) {
  if (uniform.scale != ValueScale::uniform)
    throw std::invalid_argument("uniform_to_pareto: input not on uniform scale");
  Panel out = uniform;
  out.scale = ValueScale::pareto;
  for (Eigen::Index t = 0; t < out.values.rows(); ++t)
    for (Eigen::Index s = 0; s < out.values.cols(); ++s)
      if (out.observed(t, s)) out.values(t, s) = 1.0 / (1.0 - out.values(t, s));
  return out;
}

Panel pareto_to_uniform(const Panel& pareto) {
  if (pareto.scale != ValueScale::pareto)
    throw std::invalid_argument("pareto_to_uniform: input not on pareto scale");
  Panel out = pareto;
  out.scale = ValueScale::uniform;
  for (Eigen::Index t = 0; t < out.values.rows(); ++t)
    for (Eigen::Index s = 0; s < out.values.cols(); ++s)
      if (out.observed(t, s)) out.values(t, s) = 1.0 - 1.0 / out.values(t, s);
  return out;
}

double from_frechet(double y, const SiteMarginal& site) {
  if (!(y > 0.0)) throw std::domain_error("from_frechet: y must be positive");
  // survival 1 - exp(-1/y) via expm1 keeps the deep tail exact
  const double surv = -std::expm1(-1.0 / y);
  if (surv < 0.5) return site.quantile_from_survival(std::max(surv, 1e-300));
  return site.quantile(std::max(std::exp(-1.0 / y), 1e-300));
}

Panel from_uniform(const Panel& uniform, const MarginalModel& model) {
  if (uniform.scale != ValueScale::uniform)
    throw std::invalid_argument("from_uniform: input not on uniform scale");
  Panel out = transform_panel(uniform, model, ValueScale::celsius,
                              [](const SiteMarginal& sm, double u, Eigen::Index, Eigen::Index) {
                                return sm.quantile(u);
                              });
  out.check_mask_consistency("from_uniform");
  return out;
}

}  // namespace spex
