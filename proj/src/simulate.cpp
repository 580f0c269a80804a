#include "spex/simulate.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"
#include "spex/csv.hpp"
#include "spex/parallel.hpp"
#include "spex/rng.hpp"
#include "spex/transform.hpp"

namespace spex {

Eigen::MatrixXd anchored_covariance(const Eigen::MatrixXd& dist,
                                    const VariogramParams& vario,
                                    Eigen::Index anchor) {
  const auto n = dist.rows();
  Eigen::VectorXd g0(n);
  for (Eigen::Index i = 0; i < n; ++i)
    g0(i) = matern_variogram(dist(i, anchor), vario);
  Eigen::MatrixXd cov(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      cov(i, j) = g0(i) + g0(j) - matern_variogram(dist(i, j), vario);
  return cov;
}

namespace {

// Cholesky of a covariance with additive jitter escalating x10 up to 1e-6.
Eigen::MatrixXd jittered_chol(const Eigen::MatrixXd& cov, double jitter0,
                              const char* context) {
  const auto n = cov.rows();
  for (double jitter = jitter0; jitter <= 1e-6 * 1.0000001; jitter *= 10.0) {
    Eigen::MatrixXd shifted = cov + jitter * Eigen::MatrixXd::Identity(n, n);
    Eigen::LLT<Eigen::MatrixXd> llt(shifted);
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  throw std::runtime_error(
      std::string(context) +
      ": covariance not positive semidefinite after jitter; min eigenvalue " +
      std::to_string(es.eigenvalues().minCoeff()));
}

}  // namespace

SimBatch simulate_profiles(const VariogramParams& vario,
                           const std::vector<SiteMeta>& sites, SimOptions opts) {
  if (opts.m < 1) throw std::invalid_argument("simulate_profiles: m must be >= 1");
  if (sites.empty()) throw std::invalid_argument("simulate_profiles: no sites");
  const auto n = static_cast<Eigen::Index>(sites.size());

  const Projection proj = panel_projection(sites);
  const Eigen::MatrixX2d xy = project_sites(sites, proj);
  const Eigen::MatrixXd dist = distance_matrix(xy);
  if (!dist.allFinite())
    throw std::invalid_argument("simulate_profiles: non-finite site distances");

  int ref = opts.reference_site;
  if (ref < 0) {
    // site nearest the domain centroid
    const Eigen::RowVector2d centre = xy.colwise().mean();
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = (xy.row(i) - centre).squaredNorm();
      if (d < best) {
        best = d;
        ref = static_cast<int>(i);
      }
    }
  }

  SimBatch batch;
  batch.sites = sites;
  batch.seed = opts.seed;
  batch.anchor = opts.anchor;
  batch.reference_site = ref;
  batch.profiles.resize(static_cast<Eigen::Index>(opts.m), n);
  batch.risks.resize(opts.m);
  batch.aux_risks.resize(opts.L);

  // single-site degenerate case: profile is identically 1
  if (n == 1) {
    batch.profiles.setOnes();
    Rng rng(opts.seed, 0);
    for (auto& r : batch.risks) r = rng.pareto();
    Rng aux(opts.seed, opts.m + 1);
    for (auto& r : batch.aux_risks) r = aux.pareto();
    return batch;
  }

  // gamma(i,j) table shared by every anchor
  Eigen::MatrixXd gam(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    gam(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j)
      gam(i, j) = gam(j, i) = matern_variogram(dist(i, j), vario);
  }

  // One factorization at the reference anchor serves every anchor: a field
  // anchored at site k is G - G(s_k), with drift column gamma(., s_k).
  const auto refi = static_cast<Eigen::Index>(ref);
  Eigen::MatrixXd cov(n - 1, n - 1);
  {
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == refi) continue;
      Eigen::Index c = 0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == refi) continue;
        cov(r, c) = gam(i, refi) + gam(j, refi) - gam(i, j);
        ++c;
      }
      ++r;
    }
  }
  const Eigen::MatrixXd chol = jittered_chol(cov, opts.jitter0, "simulate_profiles");

  // replicate streams are derived from (seed, i): parallel == serial
  parallel_for(opts.m, [&](std::size_t i) {
    Rng rng(opts.seed, i);
    const auto anchor =
        opts.anchor == AnchorMode::fixed
            ? refi
            : static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    Eigen::VectorXd z(n - 1);
    for (Eigen::Index k = 0; k < n - 1; ++k) z(k) = rng.normal();
    Eigen::VectorXd g_reduced = chol * z;
    Eigen::VectorXd g(n);
    {
      Eigen::Index r = 0;
      for (Eigen::Index s = 0; s < n; ++s)
        g(s) = (s == refi) ? 0.0 : g_reduced(r++);
    }
    if (anchor != refi) g.array() -= g(anchor);
    Eigen::VectorXd v(n);
    for (Eigen::Index s = 0; s < n; ++s) v(s) = std::exp(g(s) - gam(s, anchor));
    const double risk = v.mean();  // mean_observed risk on a complete site set
    batch.profiles.row(static_cast<Eigen::Index>(i)) = (v / risk).transpose();
    batch.risks[i] = rng.pareto();
  });

  Rng aux(opts.seed, opts.m + 1);
  for (auto& r : batch.aux_risks) r = aux.pareto();
  return batch;
}

Eigen::VectorXd to_data_scale(const Eigen::VectorXd& profile, double risk,
                              double v_r, const MarginalSlice& slice) {
  const auto n = profile.size();
  if (static_cast<std::size_t>(n) != slice.site.size())
    throw std::invalid_argument("to_data_scale: site count mismatch");
  Eigen::VectorXd out(n);
  for (Eigen::Index s = 0; s < n; ++s)
    out(s) = from_frechet(risk * v_r * profile(s),
                          slice.site[static_cast<std::size_t>(s)]);
  return out;
}

Eigen::MatrixXd to_data_scale(const SimBatch& batch, double v_r,
                              const MarginalSlice& slice) {
  Eigen::MatrixXd out(batch.profiles.rows(), batch.profiles.cols());
  parallel_for(batch.m(), [&](std::size_t i) {
    out.row(static_cast<Eigen::Index>(i)) =
        to_data_scale(batch.profiles.row(static_cast<Eigen::Index>(i)).transpose(),
                      batch.risks[i], v_r, slice)
            .transpose();
  });
  return out;
}

void save_sim_batch(const SimBatch& batch, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  std::vector<std::string> header;
  for (const auto& s : batch.sites) header.push_back(s.id);
  std::vector<std::vector<std::string>> rows;
  rows.reserve(batch.m());
  for (Eigen::Index i = 0; i < batch.profiles.rows(); ++i) {
    std::vector<std::string> row;
    row.reserve(header.size());
    for (Eigen::Index s = 0; s < batch.profiles.cols(); ++s)
      row.push_back(fmt_g9(batch.profiles(i, s)));
    rows.push_back(std::move(row));
  }
  write_csv(dir + "/profiles.csv", header, rows);

  rows.clear();
  for (double r : batch.risks) rows.push_back({fmt_g9(r)});
  write_csv(dir + "/risks.csv", {"risk"}, rows);
  rows.clear();
  for (double r : batch.aux_risks) rows.push_back({fmt_g9(r)});
  write_csv(dir + "/aux_risks.csv", {"risk"}, rows);

  nlohmann::json j;
  j["seed"] = batch.seed;
  j["m"] = batch.m();
  j["L"] = batch.aux_risks.size();
  j["anchor"] = batch.anchor == AnchorMode::mixture ? "mixture" : "fixed";
  j["reference_site"] = batch.reference_site;
  nlohmann::json sites = nlohmann::json::array();
  for (const auto& s : batch.sites)
    sites.push_back({{"id", s.id},
                     {"lon", s.lon},
                     {"lat", s.lat},
                     {"coast_dist", s.coast_dist},
                     {"kind", to_string(s.kind)}});
  j["sites"] = std::move(sites);
  std::ofstream out(dir + "/sim.json");
  out << j.dump(2) << "\n";
}

SimBatch load_sim_batch(const std::string& dir) {
  SimBatch batch;
  std::ifstream in(dir + "/sim.json");
  if (!in) throw std::runtime_error("cannot open " + dir + "/sim.json");
  nlohmann::json j;
  in >> j;
  batch.seed = j.at("seed").get<std::uint64_t>();
  batch.anchor = j.at("anchor").get<std::string>() == "fixed" ? AnchorMode::fixed
                                                              : AnchorMode::mixture;
  batch.reference_site = j.at("reference_site").get<int>();
  for (const auto& js : j.at("sites")) {
    SiteMeta s;
    s.id = js.at("id").get<std::string>();
    s.lon = js.at("lon").get<double>();
    s.lat = js.at("lat").get<double>();
    s.coast_dist = js.at("coast_dist").get<double>();
    s.kind = site_kind_from_string(js.at("kind").get<std::string>());
    batch.sites.push_back(std::move(s));
  }

  CsvTable profiles = read_csv(dir + "/profiles.csv");
  const auto m = static_cast<Eigen::Index>(profiles.rows.size());
  const auto n = static_cast<Eigen::Index>(batch.sites.size());
  batch.profiles.resize(m, n);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index s = 0; s < n; ++s)
      batch.profiles(i, s) = parse_double(
          profiles.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)],
          dir + "/profiles.csv", profiles.line_numbers[static_cast<std::size_t>(i)]);

  CsvTable risks = read_csv(dir + "/risks.csv");
  for (std::size_t i = 0; i < risks.rows.size(); ++i)
    batch.risks.push_back(parse_double(risks.rows[i][0], dir + "/risks.csv",
                                       risks.line_numbers[i]));
  CsvTable aux = read_csv(dir + "/aux_risks.csv");
  for (std::size_t i = 0; i < aux.rows.size(); ++i)
    batch.aux_risks.push_back(parse_double(aux.rows[i][0], dir + "/aux_risks.csv",
                                           aux.line_numbers[i]));
  return batch;
}

}  // namespace spex
