#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "feddrive/core.hpp"
#include "feddrive/trip_metrics.hpp"

namespace feddrive::csvio {

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  if (b == e) return false;
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

/// Format a double so that parsing it back recovers the exact bits.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

/// Raw telematics stream, one block per vehicle in input order. Rows with
/// unparseable fields are dropped, matching the missing-value policy.
inline std::map<std::string, std::vector<metrics::DrivingRecord>> read_records_csv(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open records CSV: " + path);
  std::string line;
  if (!std::getline(in, line)) throw data_error("empty records CSV: " + path);
  const auto header = split_line(line);
  if (header.size() != 8 || header[0] != "vehicle_id") {
    throw data_error("records CSV must have columns "
                     "vehicle_id,timestamp,speed,rpm,bearing,brake,mileage,fuel");
  }
  std::map<std::string, std::vector<metrics::DrivingRecord>> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != 8) continue;
    metrics::DrivingRecord r;
    if (!parse_double(cells[1], r.timestamp) || !parse_double(cells[2], r.speed) ||
        !parse_double(cells[3], r.rpm) || !parse_double(cells[4], r.bearing) ||
        !parse_double(cells[5], r.brake) || !parse_double(cells[6], r.mileage) ||
        !parse_double(cells[7], r.fuel)) {
      continue;
    }
    out[cells[0]].push_back(r);
  }
  return out;
}

/// Per-trip metric table: (vehicle_id, trip_id, one column per metric).
struct MetricTable {
  std::vector<std::string> vehicle_ids;
  std::vector<std::string> trip_ids;
  std::vector<std::string> metric_names;
  Matrix X;

  /// Groups rows by vehicle, preserving first-seen vehicle order.
  std::vector<std::pair<std::string, Matrix>> by_vehicle() const {
    std::vector<std::pair<std::string, Matrix>> groups;
    std::map<std::string, std::size_t> index;
    for (std::size_t r = 0; r < X.rows(); ++r) {
      auto it = index.find(vehicle_ids[r]);
      if (it == index.end()) {
        it = index.emplace(vehicle_ids[r], groups.size()).first;
        groups.emplace_back(vehicle_ids[r], Matrix{});
      }
      std::vector<double> row(X.row(r), X.row(r) + X.cols());
      groups[it->second].second.append_row(row);
    }
    return groups;
  }
};

inline void write_metrics_csv(const std::string& path, const MetricTable& t) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write metrics CSV: " + path);
  out << "vehicle_id,trip_id";
  for (const auto& name : t.metric_names) out << ',' << name;
  out << '\n';
  for (std::size_t r = 0; r < t.X.rows(); ++r) {
    out << t.vehicle_ids[r] << ',' << t.trip_ids[r];
    for (std::size_t j = 0; j < t.X.cols(); ++j) out << ',' << format_double(t.X(r, j));
    out << '\n';
  }
}

inline MetricTable read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open metrics CSV: " + path);
  std::string line;
  if (!std::getline(in, line)) throw data_error("empty metrics CSV: " + path);
  const auto header = split_line(line);
  if (header.size() < 3 || header[0] != "vehicle_id" || header[1] != "trip_id") {
    throw data_error("metrics CSV must start with vehicle_id,trip_id columns");
  }
  MetricTable t;
  t.metric_names.assign(header.begin() + 2, header.end());
  const std::size_t d = t.metric_names.size();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != d + 2) throw data_error("ragged metrics CSV row: " + line);
    std::vector<double> row(d);
    for (std::size_t j = 0; j < d; ++j) {
      if (!parse_double(cells[j + 2], row[j])) {
        throw data_error("bad numeric cell in metrics CSV: " + cells[j + 2]);
      }
    }
    t.vehicle_ids.push_back(cells[0]);
    t.trip_ids.push_back(cells[1]);
    t.X.append_row(row);
  }
  return t;
}

inline void write_histogram_csv(const std::string& path,
                                const std::vector<double>& edges,
                                const std::vector<std::size_t>& counts) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write histogram CSV: " + path);
  out << "bin_left,bin_right,count\n";
  for (std::size_t b = 0; b < counts.size(); ++b) {
    out << format_double(edges[b]) << ',' << format_double(edges[b + 1]) << ','
        << counts[b] << '\n';
  }
}

/// Minimal SVG bar chart for a histogram export.
inline void write_histogram_svg(const std::string& path,
                                const std::vector<double>& edges,
                                const std::vector<std::size_t>& counts,
                                const std::string& title = "") {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write SVG: " + path);
  const double w = 640, h = 360, pad = 40;
  std::size_t peak = 1;
  for (auto c : counts) peak = std::max(peak, c);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\""
      << h << "\">\n";
  if (!title.empty()) {
    out << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\">" << title
        << "</text>\n";
  }
  const double bw = (w - 2 * pad) / static_cast<double>(counts.size());
  for (std::size_t b = 0; b < counts.size(); ++b) {
    const double bh = (h - 2 * pad) * static_cast<double>(counts[b]) /
                      static_cast<double>(peak);
    out << "<rect x=\"" << pad + bw * static_cast<double>(b) << "\" y=\""
        << h - pad - bh << "\" width=\"" << bw * 0.92 << "\" height=\"" << bh
        << "\" fill=\"#4878a8\"/>\n";
  }
  out << "<line x1=\"" << pad << "\" y1=\"" << h - pad << "\" x2=\"" << w - pad
      << "\" y2=\"" << h - pad << "\" stroke=\"#333\"/>\n";
  out << "<text x=\"" << pad << "\" y=\"" << h - pad + 16 << "\" font-size=\"11\">"
      << format_double(edges.front()) << "</text>\n";
  out << "<text x=\"" << w - pad << "\" y=\"" << h - pad + 16
      << "\" font-size=\"11\" text-anchor=\"end\">" << format_double(edges.back())
      << "</text>\n</svg>\n";
}

}  // namespace feddrive::csvio
