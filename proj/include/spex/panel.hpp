#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "spex/geo.hpp"

namespace spex {

enum class SiteKind { station, grid };
enum class ValueScale { celsius, uniform, pareto };

std::string to_string(SiteKind k);
std::string to_string(ValueScale s);
SiteKind site_kind_from_string(const std::string& s);
ValueScale scale_from_string(const std::string& s);

struct SiteMeta {
  std::string id;
  double lon = 0.0;
  double lat = 0.0;
  double coast_dist = 0.0;  // km, strictly positive
  SiteKind kind = SiteKind::station;
};

// Raw calendar day as ingested; only summer days survive summer_filter.
struct CalendarDay {
  int year = 0;
  int doy = 0;  // day of year, 1-based
  auto operator<=>(const CalendarDay&) const = default;
};

// Summer (JJA) day; day_of_summer in [0, 91], 0 = June 1.
struct DayIndex {
  int year = 0;
  int day_of_summer = 0;
  auto operator<=>(const DayIndex&) const = default;
};

// DayIndex for a calendar day, or nullopt outside June-August
std::optional<DayIndex> summer_day(int year, int doy);

using Mask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

// Panel straight off a CSV, times still on the raw calendar.
struct RawPanel {
  std::vector<SiteMeta> sites;
  std::vector<CalendarDay> times;
  Eigen::MatrixXd values;  // time x site, NaN where unobserved
  Mask observed;           // time x site
};

// Summer-indexed panel; the common currency of the pipeline.
// A climate grid is a Panel with kind grid and a complete mask.
struct Panel {
  std::vector<SiteMeta> sites;
  std::vector<DayIndex> times;
  Eigen::MatrixXd values;
  Mask observed;
  ValueScale scale = ValueScale::celsius;

  Eigen::Index n_sites() const { return static_cast<Eigen::Index>(sites.size()); }
  Eigen::Index n_times() const { return static_cast<Eigen::Index>(times.size()); }
  bool is_complete() const;
  int site_index(const std::string& id) const;  // -1 if absent

  // values entry finite iff observed; throws on violation
  void check_mask_consistency(const std::string& context) const;
};

enum class PanelSchema { station, grid };

// CSV header: site_id,lon,lat,coast_dist,year,day,value (day = day of year).
// Blank value means missing; the grid schema rejects blanks outright.
RawPanel load_panel(const std::string& path, PanelSchema schema,
                    std::optional<BBox> bbox = std::nullopt);

// Keep June/July/August only, assign DayIndex, drop days observed nowhere.
Panel summer_filter(const RawPanel& raw);

// Directory persistence: meta.csv + values.csv + mask.csv.
void save_panel(const Panel& panel, const std::string& dir);
Panel load_panel_dir(const std::string& dir);

// Type-7 empirical quantiles of each site's full series: sites x taus.
Eigen::MatrixXd empirical_quantiles(const Panel& grid,
                                    const std::vector<double>& taus);

// index of the nearest site in `grid` for every site in `sites` (km metric)
std::vector<int> nearest_sites(const std::vector<SiteMeta>& sites,
                               const std::vector<SiteMeta>& grid);

// shared projection + projected coordinates for a site list
Eigen::MatrixX2d project_sites(const std::vector<SiteMeta>& sites,
                               const Projection& proj);
Projection panel_projection(const std::vector<SiteMeta>& sites);

}  // namespace spex
