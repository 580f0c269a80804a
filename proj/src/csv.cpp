#include "spex/csv.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace spex {

std::size_t CsvTable::col(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end())
    throw std::runtime_error("csv: missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = (b == std::string::npos) ? std::string{} : f.substr(b, e - b + 1);
  }
  return out;
}

}  // namespace

CsvTable parse_csv(const std::string& text, const std::string& origin) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_line(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                               ": expected " + std::to_string(t.header.size()) +
                               " fields, got " + std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(lineno);
  }
  if (t.header.empty()) throw std::runtime_error(origin + ": empty csv");
  return t;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), path);
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (std::size_t i = 0; i < header.size(); ++i)
    out << header[i] << (i + 1 < header.size() ? "," : "\n");
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i)
      out << row[i] << (i + 1 < row.size() ? "," : "\n");
  }
}

std::string fmt_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& context,
                    std::size_t line) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(context + ":" + std::to_string(line) +
                             ": bad numeric field '" + s + "'");
  }
}

long parse_long(const std::string& s, const std::string& context,
                std::size_t line) {
  try {
    std::size_t pos = 0;
    long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(context + ":" + std::to_string(line) +
                             ": bad integer field '" + s + "'");
  }
}

}  // namespace spex
