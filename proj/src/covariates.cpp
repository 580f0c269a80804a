#include "spex/covariates.hpp"

#include <cmath>
#include <stdexcept>

#include "spex/csv.hpp"

namespace spex {

const CovariateRow& CovariateSeries::at(DayIndex t) const {
  auto it = rows_.find(t);
  if (it == rows_.end())
    throw std::runtime_error("covariates: no entry for year " +
                             std::to_string(t.year) + " day " +
                             std::to_string(t.day_of_summer));
  return it->second;
}

bool CovariateSeries::covers(const std::vector<DayIndex>& times) const {
  for (const auto& t : times)
    if (!rows_.count(t)) return false;
  return true;
}

CovariateRow CovariateSeries::at_year(int year) const {
  if (rows_.empty()) throw std::runtime_error("covariates: empty series");
  // mid-summer entry of the requested year, else of the nearest year
  auto it = rows_.lower_bound(DayIndex{year, 45});
  if (it == rows_.end()) --it;
  auto prev = it;
  if (it != rows_.begin()) {
    --prev;
    auto dist = [&](const DayIndex& d) {
      return std::abs(d.year - year) * 92 + std::abs(d.day_of_summer - 45);
    };
    if (dist(prev->first) < dist(it->first)) it = prev;
  }
  return it->second;
}

CovariateSeries load_covariates(const std::string& path) {
  CsvTable t = read_csv(path);
  const auto c_year = t.col("year"), c_day = t.col("day"), c_mi = t.col("m_i"),
             c_mg = t.col("m_g"), c_co2 = t.col("co2");
  CovariateSeries out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const auto line = t.line_numbers[r];
    const int year = static_cast<int>(parse_long(row[c_year], path, line));
    const int doy = static_cast<int>(parse_long(row[c_day], path, line));
    auto di = summer_day(year, doy);
    if (!di) continue;
    CovariateRow cr;
    cr.m_i = parse_double(row[c_mi], path, line);
    cr.m_g = parse_double(row[c_mg], path, line);
    cr.co2 = parse_double(row[c_co2], path, line);
    if (!std::isfinite(cr.m_i) || !std::isfinite(cr.m_g))
      throw std::runtime_error(path + ":" + std::to_string(line) +
                               ": non-finite anomaly");
    out.insert(*di, cr);
  }
  return out;
}

void save_covariates(const CovariateSeries& cov,
                     const std::vector<DayIndex>& times,
                     const std::string& path) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& t : times) {
    const auto& r = cov.at(t);
    const bool leap = t.year % 4 == 0 && (t.year % 100 != 0 || t.year % 400 == 0);
    const int june1 = leap ? 153 : 152;
    rows.push_back({std::to_string(t.year), std::to_string(june1 + t.day_of_summer),
                    fmt_g9(r.m_i), fmt_g9(r.m_g), fmt_g9(r.co2)});
  }
  write_csv(path, {"year", "day", "m_i", "m_g", "co2"}, rows);
}

}  // namespace spex
