#include "spex/panel.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include "spex/csv.hpp"
#include "spex/stats.hpp"

namespace spex {

std::string to_string(SiteKind k) {
  return k == SiteKind::station ? "station" : "grid";
}

std::string to_string(ValueScale s) {
  switch (s) {
    case ValueScale::celsius: return "celsius";
    case ValueScale::uniform: return "uniform";
    case ValueScale::pareto: return "pareto";
  }
  return "celsius";
}

SiteKind site_kind_from_string(const std::string& s) {
  if (s == "station") return SiteKind::station;
  if (s == "grid") return SiteKind::grid;
  throw std::runtime_error("unknown site kind '" + s + "'");
}

ValueScale scale_from_string(const std::string& s) {
  if (s == "celsius") return ValueScale::celsius;
  if (s == "uniform") return ValueScale::uniform;
  if (s == "pareto") return ValueScale::pareto;
  throw std::runtime_error("unknown value scale '" + s + "'");
}

bool Panel::is_complete() const {
  return observed.size() > 0 &&
         observed.cast<int>().sum() == static_cast<int>(observed.size());
}

int Panel::site_index(const std::string& id) const {
  for (std::size_t i = 0; i < sites.size(); ++i)
    if (sites[i].id == id) return static_cast<int>(i);
  return -1;
}

void Panel::check_mask_consistency(const std::string& context) const {
  for (Eigen::Index t = 0; t < values.rows(); ++t)
    for (Eigen::Index s = 0; s < values.cols(); ++s)
      if (static_cast<bool>(observed(t, s)) != std::isfinite(values(t, s)))
        throw std::runtime_error(context + ": mask/value mismatch at row " +
                                 std::to_string(t) + ", site " +
                                 sites[static_cast<std::size_t>(s)].id);
}

namespace {

bool is_leap(int year) {
  return year % 4 == 0 && (year % 100 != 0 || year % 400 == 0);
}

// month (1..12) and day-of-month from day-of-year
std::pair<int, int> month_day(int year, int doy) {
  static const int days_in[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  int rem = doy;
  for (int m = 0; m < 12; ++m) {
    int len = days_in[m] + ((m == 1 && is_leap(year)) ? 1 : 0);
    if (rem <= len) return {m + 1, rem};
    rem -= len;
  }
  throw std::runtime_error("day of year out of range: " + std::to_string(doy));
}

}  // namespace

std::optional<DayIndex> summer_day(int year, int doy) {
  auto [month, dom] = month_day(year, doy);
  if (month < 6 || month > 8) return std::nullopt;
  DayIndex di;
  di.year = year;
  di.day_of_summer = (month == 6 ? 0 : month == 7 ? 30 : 61) + dom - 1;
  return di;
}

RawPanel load_panel(const std::string& path, PanelSchema schema,
                    std::optional<BBox> bbox) {
  CsvTable t = read_csv(path);
  const auto c_site = t.col("site_id"), c_lon = t.col("lon"), c_lat = t.col("lat"),
             c_coast = t.col("coast_dist"), c_year = t.col("year"),
             c_day = t.col("day"), c_val = t.col("value");

  std::map<std::string, SiteMeta> site_map;
  std::set<CalendarDay> time_set;
  struct Cell {
    double value;
    bool observed;
    std::size_t line;
  };
  std::map<std::pair<std::string, CalendarDay>, Cell> cells;

  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const auto line = t.line_numbers[r];
    SiteMeta m;
    m.id = row[c_site];
    if (m.id.empty())
      throw std::runtime_error(path + ":" + std::to_string(line) + ": empty site_id");
    m.lon = parse_double(row[c_lon], path, line);
    m.lat = parse_double(row[c_lat], path, line);
    m.coast_dist = parse_double(row[c_coast], path, line);
    m.kind = schema == PanelSchema::grid ? SiteKind::grid : SiteKind::station;
    if (m.coast_dist <= 0.0)
      throw std::runtime_error(path + ":" + std::to_string(line) +
                               ": coast_dist must be > 0 for site " + m.id);
    if (bbox && !bbox->contains(m.lon, m.lat)) continue;

    CalendarDay day;
    day.year = static_cast<int>(parse_long(row[c_year], path, line));
    day.doy = static_cast<int>(parse_long(row[c_day], path, line));
    if (day.doy < 1 || day.doy > (is_leap(day.year) ? 366 : 365))
      throw std::runtime_error(path + ":" + std::to_string(line) +
                               ": day " + std::to_string(day.doy) +
                               " out of range for year " + std::to_string(day.year));

    auto [it, inserted] = site_map.emplace(m.id, m);
    if (!inserted && (it->second.lon != m.lon || it->second.lat != m.lat ||
                      it->second.coast_dist != m.coast_dist))
      throw std::runtime_error(path + ":" + std::to_string(line) +
                               ": conflicting metadata for site " + m.id);

    Cell cell;
    cell.observed = !row[c_val].empty();
    cell.value = cell.observed ? parse_double(row[c_val], path, line)
                               : std::numeric_limits<double>::quiet_NaN();
    if (schema == PanelSchema::grid && !cell.observed)
      throw std::runtime_error(path + ":" + std::to_string(line) +
                               ": grid schema forbids missing values (site " +
                               m.id + ")");
    cell.line = line;
    auto key = std::make_pair(m.id, day);
    auto [cit, cinserted] = cells.emplace(key, cell);
    if (!cinserted)
      throw std::runtime_error(
          path + ":" + std::to_string(line) + ": duplicate entry for site " +
          m.id + ", year " + std::to_string(day.year) + " day " +
          std::to_string(day.doy) + " (first at line " +
          std::to_string(cit->second.line) + ")");
    time_set.insert(day);
  }

  RawPanel p;
  for (auto& [id, m] : site_map) p.sites.push_back(m);
  p.times.assign(time_set.begin(), time_set.end());
  const auto nt = static_cast<Eigen::Index>(p.times.size());
  const auto ns = static_cast<Eigen::Index>(p.sites.size());
  p.values = Eigen::MatrixXd::Constant(nt, ns, std::numeric_limits<double>::quiet_NaN());
  p.observed = Mask::Zero(nt, ns);

  std::map<CalendarDay, Eigen::Index> time_idx;
  for (Eigen::Index i = 0; i < nt; ++i) time_idx[p.times[static_cast<std::size_t>(i)]] = i;
  std::map<std::string, Eigen::Index> site_idx;
  for (Eigen::Index i = 0; i < ns; ++i) site_idx[p.sites[static_cast<std::size_t>(i)].id] = i;

  for (const auto& [key, cell] : cells) {
    const auto ti = time_idx.at(key.second);
    const auto si = site_idx.at(key.first);
    if (cell.observed) {
      p.values(ti, si) = cell.value;
      p.observed(ti, si) = 1;
    }
  }
  return p;
}

Panel summer_filter(const RawPanel& raw) {
  Panel out;
  out.sites = raw.sites;
  std::vector<Eigen::Index> keep;
  std::vector<DayIndex> days;
  for (std::size_t t = 0; t < raw.times.size(); ++t) {
    const auto& cd = raw.times[t];
    auto di = summer_day(cd.year, cd.doy);
    if (!di) continue;
    if (raw.observed.row(static_cast<Eigen::Index>(t)).cast<int>().sum() == 0) continue;
    keep.push_back(static_cast<Eigen::Index>(t));
    days.push_back(*di);
  }
  out.times = std::move(days);
  const auto nt = static_cast<Eigen::Index>(keep.size());
  out.values.resize(nt, raw.values.cols());
  out.observed.resize(nt, raw.values.cols());
  for (Eigen::Index i = 0; i < nt; ++i) {
    out.values.row(i) = raw.values.row(keep[static_cast<std::size_t>(i)]);
    out.observed.row(i) = raw.observed.row(keep[static_cast<std::size_t>(i)]);
  }
  return out;
}

void save_panel(const Panel& panel, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  std::vector<std::vector<std::string>> meta;
  for (const auto& s : panel.sites)
    meta.push_back({s.id, fmt_g9(s.lon), fmt_g9(s.lat), fmt_g9(s.coast_dist),
                    to_string(s.kind), to_string(panel.scale)});
  write_csv(dir + "/meta.csv",
            {"site_id", "lon", "lat", "coast_dist", "kind", "scale"}, meta);

  std::vector<std::string> header = {"year", "day_of_summer"};
  for (const auto& s : panel.sites) header.push_back(s.id);

  std::vector<std::vector<std::string>> vals, mask;
  for (Eigen::Index t = 0; t < panel.n_times(); ++t) {
    const auto& di = panel.times[static_cast<std::size_t>(t)];
    std::vector<std::string> vrow = {std::to_string(di.year),
                                     std::to_string(di.day_of_summer)};
    std::vector<std::string> mrow = vrow;
    for (Eigen::Index s = 0; s < panel.n_sites(); ++s) {
      const bool obs = panel.observed(t, s) != 0;
      vrow.push_back(obs ? fmt_g9(panel.values(t, s)) : "");
      mrow.push_back(obs ? "1" : "0");
    }
    vals.push_back(std::move(vrow));
    mask.push_back(std::move(mrow));
  }
  write_csv(dir + "/values.csv", header, vals);
  write_csv(dir + "/mask.csv", header, mask);
}

Panel load_panel_dir(const std::string& dir) {
  Panel p;
  CsvTable meta = read_csv(dir + "/meta.csv");
  const auto c_id = meta.col("site_id"), c_lon = meta.col("lon"),
             c_lat = meta.col("lat"), c_coast = meta.col("coast_dist"),
             c_kind = meta.col("kind"), c_scale = meta.col("scale");
  for (std::size_t r = 0; r < meta.rows.size(); ++r) {
    const auto& row = meta.rows[r];
    SiteMeta s;
    s.id = row[c_id];
    s.lon = parse_double(row[c_lon], dir + "/meta.csv", meta.line_numbers[r]);
    s.lat = parse_double(row[c_lat], dir + "/meta.csv", meta.line_numbers[r]);
    s.coast_dist = parse_double(row[c_coast], dir + "/meta.csv", meta.line_numbers[r]);
    s.kind = site_kind_from_string(row[c_kind]);
    p.scale = scale_from_string(row[c_scale]);
    p.sites.push_back(std::move(s));
  }

  CsvTable vals = read_csv(dir + "/values.csv");
  CsvTable mask = read_csv(dir + "/mask.csv");
  if (vals.rows.size() != mask.rows.size())
    throw std::runtime_error(dir + ": values/mask row count mismatch");
  const auto ns = static_cast<Eigen::Index>(p.sites.size());
  const auto nt = static_cast<Eigen::Index>(vals.rows.size());
  p.values = Eigen::MatrixXd::Constant(nt, ns, std::numeric_limits<double>::quiet_NaN());
  p.observed = Mask::Zero(nt, ns);
  for (Eigen::Index t = 0; t < nt; ++t) {
    const auto& vrow = vals.rows[static_cast<std::size_t>(t)];
    const auto& mrow = mask.rows[static_cast<std::size_t>(t)];
    DayIndex di;
    di.year = static_cast<int>(parse_long(vrow[0], dir, vals.line_numbers[static_cast<std::size_t>(t)]));
    di.day_of_summer = static_cast<int>(parse_long(vrow[1], dir, vals.line_numbers[static_cast<std::size_t>(t)]));
    p.times.push_back(di);
    for (Eigen::Index s = 0; s < ns; ++s) {
      const bool obs = mrow[static_cast<std::size_t>(s) + 2] == "1";
      if (obs) {
        p.values(t, s) = parse_double(vrow[static_cast<std::size_t>(s) + 2], dir,
                                      vals.line_numbers[static_cast<std::size_t>(t)]);
        p.observed(t, s) = 1;
      }
    }
  }
  p.check_mask_consistency(dir);
  return p;
}

Eigen::MatrixXd empirical_quantiles(const Panel& grid,
                                    const std::vector<double>& taus) {
  for (std::size_t k = 0; k + 1 < taus.size(); ++k)
    if (!(taus[k] < taus[k + 1]))
      throw std::invalid_argument("empirical_quantiles: taus must be strictly increasing");
  for (double tau : taus)
    if (tau < 0.01 - 1e-12 || tau > 0.99 + 1e-12)
      throw std::invalid_argument("empirical_quantiles: tau outside [0.01, 0.99]");

  Eigen::MatrixXd q(grid.n_sites(), static_cast<Eigen::Index>(taus.size()));
  for (Eigen::Index s = 0; s < grid.n_sites(); ++s) {
    std::vector<double> series;
    series.reserve(static_cast<std::size_t>(grid.n_times()));
    for (Eigen::Index t = 0; t < grid.n_times(); ++t)
      if (grid.observed(t, s)) series.push_back(grid.values(t, s));
    if (series.empty())
      throw std::runtime_error("empirical_quantiles: empty series at site " +
                               grid.sites[static_cast<std::size_t>(s)].id);
    std::sort(series.begin(), series.end());
    for (std::size_t k = 0; k < taus.size(); ++k)
      q(s, static_cast<Eigen::Index>(k)) = quantile_type7_sorted(series, taus[k]);
  }
  return q;
}

Projection panel_projection(const std::vector<SiteMeta>& sites) {
  std::vector<double> lons, lats;
  for (const auto& s : sites) {
    lons.push_back(s.lon);
    lats.push_back(s.lat);
  }
  return make_projection(lons, lats);
}

Eigen::MatrixX2d project_sites(const std::vector<SiteMeta>& sites,
                               const Projection& proj) {
  Eigen::MatrixX2d xy(static_cast<Eigen::Index>(sites.size()), 2);
  for (std::size_t i = 0; i < sites.size(); ++i)
    xy.row(static_cast<Eigen::Index>(i)) = proj.to_km(sites[i].lon, sites[i].lat).transpose();
  return xy;
}

std::vector<int> nearest_sites(const std::vector<SiteMeta>& sites,
                               const std::vector<SiteMeta>& grid) {
  if (grid.empty()) throw std::invalid_argument("nearest_sites: empty grid");
  std::vector<SiteMeta> all = sites;
  all.insert(all.end(), grid.begin(), grid.end());
  const Projection proj = panel_projection(all);
  const auto sxy = project_sites(sites, proj);
  const auto gxy = project_sites(grid, proj);
  std::vector<int> nearest(sites.size(), 0);
  for (Eigen::Index i = 0; i < sxy.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < gxy.rows(); ++j) {
      const double d = (sxy.row(i) - gxy.row(j)).squaredNorm();
      if (d < best) {
        best = d;
        nearest[static_cast<std::size_t>(i)] = static_cast<int>(j);
      }
    }
  }
  return nearest;
}

}  // namespace spex
