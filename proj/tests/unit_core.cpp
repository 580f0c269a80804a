#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "spex/covariates.hpp"
#include "spex/csv.hpp"
#include "spex/geo.hpp"
#include "spex/interp.hpp"
#include "spex/optim.hpp"
#include "spex/panel.hpp"
#include "spex/rng.hpp"
#include "spex/stats.hpp"

using namespace spex;

namespace {

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

const char* kTinyStation =
    "site_id,lon,lat,coast_dist,year,day,value\n"
    "a,-8.0,53.0,10,1990,160,20.5\n"
    "b,-7.5,53.2,25,1990,160,19.0\n"
    "a,-8.0,53.0,10,1990,161,\n";

}  // namespace

TEST_CASE("csv parsing and errors") {
  CsvTable t = parse_csv("x,y\n1,2\n# comment\n3,4\n");
  CHECK(t.header.size() == 2);
  CHECK(t.rows.size() == 2);
  CHECK(t.col("y") == 1);
  CHECK_THROWS_WITH_AS(parse_csv("x,y\n1\n"), doctest::Contains(":2"),
                       std::runtime_error);
  CHECK_THROWS(t.col("missing"));
  CHECK(fmt_g9(1.0 / 3.0) == "0.333333333");
}

TEST_CASE("load_panel: blank-to-mask, duplicates, grid completeness") {
  test::TempDir dir("load_panel");
  const std::string f = dir.str() + "/p.csv";
  write_file(f, kTinyStation);

  RawPanel p = load_panel(f, PanelSchema::station);
  CHECK(p.sites.size() == 2);
  CHECK(p.times.size() == 2);
  int observed = 0, missing = 0;
  for (Eigen::Index t = 0; t < p.observed.rows(); ++t)
    for (Eigen::Index s = 0; s < p.observed.cols(); ++s)
      (p.observed(t, s) ? observed : missing) += 1;
  CHECK(observed == 2);  // blank value and the absent (b, day 161) cell stay unobserved
  CHECK(missing == 2);

  // grid schema rejects the blank outright
  CHECK_THROWS_WITH_AS(load_panel(f, PanelSchema::grid),
                       doctest::Contains("forbids missing"), std::runtime_error);

  // duplicate (site, day) is a conflict
  write_file(f, std::string(kTinyStation) + "a,-8.0,53.0,10,1990,160,21.0\n");
  CHECK_THROWS_WITH_AS(load_panel(f, PanelSchema::station),
                       doctest::Contains("duplicate"), std::runtime_error);

  // malformed numeric field carries the line number
  write_file(f, "site_id,lon,lat,coast_dist,year,day,value\na,-8,53,10,1990,x,20\n");
  CHECK_THROWS_WITH_AS(load_panel(f, PanelSchema::station), doctest::Contains(":2"),
                       std::runtime_error);
}

TEST_CASE("summer_filter keeps JJA and drops empty rows") {
  RawPanel raw;
  raw.sites = {SiteMeta{"a", -8.0, 53.0, 10.0, SiteKind::station}};
  for (int year : {1991, 1992}) {  // non-leap and leap
    const int days = year == 1992 ? 366 : 365;
    for (int d = 1; d <= days; ++d) raw.times.push_back({year, d});
  }
  const auto nt = static_cast<Eigen::Index>(raw.times.size());
  raw.values = Eigen::MatrixXd::Constant(nt, 1, 15.0);
  raw.observed = Mask::Ones(nt, 1);

  Panel p = summer_filter(raw);
  int count91 = 0, count92 = 0;
  for (const auto& t : p.times) (t.year == 1991 ? count91 : count92) += 1;
  CHECK(count91 == 92);
  CHECK(count92 == 92);  // leap year does not change JJA
  CHECK(p.times.front().day_of_summer == 0);
  CHECK(p.times.back().day_of_summer == 91);

  // a day observed at no site disappears
  raw.observed(200, 0) = 0;  // doy 201 of 1991 = July 20
  raw.values(200, 0) = std::numeric_limits<double>::quiet_NaN();
  Panel q = summer_filter(raw);
  CHECK(q.n_times() == p.n_times() - 1);
  for (const auto& t : q.times)
    CHECK(!(t.year == 1991 && t.day_of_summer == 49));
}

TEST_CASE("summer_day maps calendar to day-of-summer") {
  CHECK(summer_day(1991, 152)->day_of_summer == 0);   // June 1 non-leap
  CHECK(summer_day(1992, 153)->day_of_summer == 0);   // June 1 leap
  CHECK(summer_day(1991, 243)->day_of_summer == 91);  // Aug 31
  CHECK(!summer_day(1991, 151).has_value());
  CHECK(!summer_day(1991, 244).has_value());
}

TEST_CASE("empirical_quantiles: type-7 and Monte Carlo") {
  Panel grid;
  grid.sites = {SiteMeta{"g0", -8, 53, 10, SiteKind::grid},
                SiteMeta{"g1", -7, 53, 10, SiteKind::grid}};
  const int n = 100;
  grid.values.resize(n, 2);
  grid.observed = Mask::Ones(n, 2);
  for (int i = 0; i < n; ++i) {
    grid.times.push_back({1990 + i / 92, i % 92});
    grid.values(i, 0) = static_cast<double>(i + 1);  // 1..100
    grid.values(i, 1) = 7.25;                        // constant series
  }
  const Eigen::MatrixXd q = empirical_quantiles(grid, {0.25, 0.5, 0.9});
  CHECK(q(0, 1) == doctest::Approx(50.5).epsilon(1e-12));
  CHECK(q(1, 0) == 7.25);
  CHECK(q(1, 2) == 7.25);
  CHECK(q(0, 0) <= q(0, 1));
  CHECK(q(0, 1) <= q(0, 2));

  CHECK_THROWS(empirical_quantiles(grid, {0.5, 0.5}));    // not increasing
  CHECK_THROWS(empirical_quantiles(grid, {0.001, 0.5}));  // outside range

  // 5152 standard-uniform draws: tau=0.9 close to the truth
  Panel big;
  big.sites = {SiteMeta{"g", -8, 53, 10, SiteKind::grid}};
  Rng rng(42);
  big.values.resize(5152, 1);
  big.observed = Mask::Ones(5152, 1);
  for (int i = 0; i < 5152; ++i) {
    big.times.push_back({1950 + i / 92, i % 92});
    big.values(i, 0) = rng.uniform();
  }
  const Eigen::MatrixXd q9 = empirical_quantiles(big, {0.9});
  CHECK(q9(0, 0) == doctest::Approx(0.9).epsilon(0.025));
}

TEST_CASE("panel round trip through the directory format") {
  SynthSpec spec;
  spec.n_stations = 6;
  spec.grid_nx = 3;
  spec.grid_ny = 2;
  spec.n_years = 2;
  spec.missing_rate = 0.35;
  SynthData d = generate(spec);

  test::TempDir dir("roundtrip");
  save_panel(d.station, dir.str() + "/p");
  Panel loaded = load_panel_dir(dir.str() + "/p");
  REQUIRE(loaded.n_sites() == d.station.n_sites());
  REQUIRE(loaded.n_times() == d.station.n_times());
  CHECK(loaded.scale == d.station.scale);
  for (Eigen::Index t = 0; t < loaded.n_times(); ++t) {
    CHECK(loaded.times[static_cast<std::size_t>(t)] ==
          d.station.times[static_cast<std::size_t>(t)]);
    for (Eigen::Index s = 0; s < loaded.n_sites(); ++s) {
      REQUIRE(loaded.observed(t, s) == d.station.observed(t, s));
      if (loaded.observed(t, s))
        CHECK(loaded.values(t, s) ==
              doctest::Approx(d.station.values(t, s)).epsilon(1e-8));
    }
  }
  // missing-mask consistency: observed count equals finite count
  int finite = 0;
  for (Eigen::Index t = 0; t < loaded.n_times(); ++t)
    for (Eigen::Index s = 0; s < loaded.n_sites(); ++s)
      if (std::isfinite(loaded.values(t, s))) ++finite;
  CHECK(finite == loaded.observed.cast<int>().sum());
}

TEST_CASE("projection and nearest sites") {
  Projection proj{-8.0, 53.0};
  CHECK(proj.to_km(-8.0, 53.0).norm() == doctest::Approx(0.0));
  CHECK(proj.to_km(-8.0, 54.0)(1) == doctest::Approx(111.19).epsilon(0.01));

  std::vector<SiteMeta> stations = {{"s0", -8.0, 53.0, 10, SiteKind::station},
                                    {"s1", -6.0, 55.0, 10, SiteKind::station}};
  std::vector<SiteMeta> grid = {{"g0", -8.1, 53.1, 10, SiteKind::grid},
                                {"g1", -6.2, 54.8, 10, SiteKind::grid},
                                {"g2", -9.5, 51.5, 10, SiteKind::grid}};
  const auto nearest = nearest_sites(stations, grid);
  CHECK(nearest[0] == 0);
  CHECK(nearest[1] == 1);
}

TEST_CASE("covariate series round trip and coverage") {
  CovariateSeries cov;
  std::vector<DayIndex> times;
  for (int y : {1990, 1991})
    for (int dos = 0; dos < 92; ++dos) {
      times.push_back({y, dos});
      cov.insert({y, dos}, {0.1 * (y - 1990), 0.05, 42.0});
    }
  CHECK(cov.covers(times));
  CHECK(!cov.covers({{1992, 0}}));

  test::TempDir dir("cov");
  save_covariates(cov, times, dir.str() + "/c.csv");
  CovariateSeries loaded = load_covariates(dir.str() + "/c.csv");
  CHECK(loaded.size() == times.size());
  CHECK(loaded.at({1990, 45}).m_i == doctest::Approx(cov.at({1990, 45}).m_i));
  CHECK(loaded.at_year(1993).m_i == doctest::Approx(cov.at({1991, 45}).m_i));
}

TEST_CASE("monotone cubic interpolant") {
  MonotoneCubic mc({0.1, 0.5, 0.9}, {1.0, 2.0, 3.0});
  CHECK(mc(0.5) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(mc(0.1) == 1.0);
  const double mid = mc(0.3);
  CHECK(mid > 1.0);
  CHECK(mid < 2.0);

  // strictly increasing on a dense grid, irregular spacing
  MonotoneCubic irregular({0.0, 0.1, 0.15, 0.6, 1.0}, {0.0, 5.0, 5.5, 6.0, 20.0});
  double prev = irregular(-0.2);
  for (double x = -0.19; x <= 1.2; x += 0.003) {
    const double y = irregular(x);
    CHECK(y > prev);
    prev = y;
  }

  for (double x : {0.05, 0.12, 0.3, 0.77, 0.99})
    CHECK(irregular.inverse(irregular(x)) == doctest::Approx(x).epsilon(1e-9));
  CHECK(irregular(1.5) > irregular(1.0));
  CHECK(irregular.inverse(irregular(1.5)) == doctest::Approx(1.5).epsilon(1e-9));
  CHECK_THROWS(MonotoneCubic({0.1, 0.5}, {2.0, 1.0}));
}

TEST_CASE("stats: normal quantile, ks, pairwise sum") {
  CHECK(norm_cdf(0.0) == doctest::Approx(0.5));
  for (double p : {1e-8, 0.01, 0.3, 0.5, 0.9, 1.0 - 1e-8})
    CHECK(norm_cdf(norm_quantile(p)) == doctest::Approx(p).epsilon(1e-10));
  CHECK(norm_quantile(0.975) == doctest::Approx(1.959964).epsilon(1e-5));

  Rng rng(7);
  std::vector<double> u(5000);
  for (auto& v : u) v = rng.uniform();
  CHECK(ks_uniform(u).p_value > 0.01);
  for (auto& v : u) v = std::min(1.0 - 1e-12, v * 0.8 + 0.2);
  CHECK(ks_uniform(u).p_value < 1e-6);

  std::vector<double> xs(1000, 0.1);
  CHECK(pairwise_sum(xs) == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("optimizers") {
  auto quad = [](const std::vector<double>& x) {
    return (x[0] - 3.0) * (x[0] - 3.0) + 2.0 * (x[1] + 1.0) * (x[1] + 1.0);
  };
  OptimResult r = nelder_mead(quad, {0.0, 0.0});
  CHECK(r.x[0] == doctest::Approx(3.0).epsilon(1e-5));
  CHECK(r.x[1] == doctest::Approx(-1.0).epsilon(1e-5));

  // non-smooth convex objective, check-loss flavoured
  auto vshape = [](const std::vector<double>& x) {
    return 0.7 * std::max(x[0] - 1.5, 0.0) + 0.3 * std::max(1.5 - x[0], 0.0);
  };
  r = nelder_mead(vshape, {8.0});
  CHECK(r.x[0] == doctest::Approx(1.5).epsilon(1e-4));

  auto concave = [](double x) { return -(x - 0.7) * (x - 0.7); };
  CHECK(brent_maximize(concave, -3.0, 4.0).x == doctest::Approx(0.7).epsilon(1e-7));

  CHECK(bisect([](double x) { return x * x * x - 2.0; }, 0.0, 2.0) ==
        doctest::Approx(std::cbrt(2.0)).epsilon(1e-9));
}

TEST_CASE("rng streams: determinism and distribution") {
  Rng a(123, 5), b(123, 5), c(123, 6);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  bool differs = false;
  Rng a2(123, 5);
  for (int i = 0; i < 100; ++i) differs |= a2.next_u64() != c.next_u64();
  CHECK(differs);

  Rng rng(99);
  double mean = 0.0, var = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    mean += z / n;
    var += z * z / n;
  }
  CHECK(mean == doctest::Approx(0.0).epsilon(0.02));
  CHECK(std::abs(var - 1.0) < 0.02);

  for (int i = 0; i < 1000; ++i) CHECK(rng.below(7) < 7);
  CHECK(rng.pareto() >= 1.0);
}
