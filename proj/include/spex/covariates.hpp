#pragma once

#include <map>
#include <string>
#include <vector>

#include "spex/panel.hpp"

namespace spex {

// Per-day covariate values: temperature anomalies and CO2.
struct CovariateRow {
  double m_i = 0.0;   // Irish mean anomaly
  double m_g = 0.0;   // global mean anomaly
  double co2 = 0.0;
};

class CovariateSeries {
 public:
  void insert(DayIndex t, CovariateRow row) { rows_[t] = row; }
  const CovariateRow& at(DayIndex t) const;
  bool covers(const std::vector<DayIndex>& times) const;
  std::size_t size() const { return rows_.size(); }

  // linear-in-year look-up for synthetic/forecast years outside the series:
  // takes the row of the nearest available summer day in that year, or the
  // closest year if the exact year is absent
  CovariateRow at_year(int year) const;

 private:
  std::map<DayIndex, CovariateRow> rows_;
};

// CSV header: year,day,m_i,m_g,co2 with day = day of year; rows outside
// JJA are ignored so one file can cover the full calendar.
CovariateSeries load_covariates(const std::string& path);
void save_covariates(const CovariateSeries& cov,
                     const std::vector<DayIndex>& times,
                     const std::string& path);

}  // namespace spex
