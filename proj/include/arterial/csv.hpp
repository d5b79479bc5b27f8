#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "arterial/matcher.hpp"
#include "arterial/measures.hpp"

namespace arterial {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Trajectory input: journey_id,t,lon,lat,speed_mph,heading_deg (rows need not
// be sorted).
inline std::vector<RawPoint> read_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trajectory file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty trajectory file: " + path);
  std::vector<RawPoint> pts;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() < 6) throw std::runtime_error("bad trajectory row: " + line);
    RawPoint p;
    p.journey_id = f[0];
    p.t = std::stod(f[1]);
    p.lon = std::stod(f[2]);
    p.lat = std::stod(f[3]);
    p.speed_mph = std::stod(f[4]);
    p.heading_deg = std::stod(f[5]);
    pts.push_back(std::move(p));
  }
  return pts;
}

inline void write_trajectory_csv(const std::string& path, const std::vector<RawPoint>& pts) {
  std::ofstream out(path);
  out << "journey_id,t,lon,lat,speed_mph,heading_deg\n";
  out.precision(10);
  for (const auto& p : pts)
    out << p.journey_id << ',' << p.t << ',' << p.lon << ',' << p.lat << ',' << p.speed_mph
        << ',' << p.heading_deg << '\n';
}

inline void write_matched_csv(const std::string& path, const std::vector<Journey>& journeys) {
  std::ofstream out(path);
  out << "journey_id,link_id,t,chainage_m,speed_mph,cross_track_m\n";
  out.precision(10);
  for (const auto& j : journeys)
    for (const auto& p : j.points)
      out << p.raw.journey_id << ',' << p.link_id << ',' << p.raw.t << ',' << p.chainage_m << ','
          << p.raw.speed_mph << ',' << p.cross_track_m << '\n';
}

// Seconds on the analysis clock (day 0 = Monday 00:00) to ISO-8601 with a
// nominal epoch of 2024-01-01 (a Monday).
inline std::string iso8601(double t_seconds) {
  long long total = static_cast<long long>(t_seconds);
  long long day = total / 86400, rem = total % 86400;
  // civil date arithmetic from 2024-01-01
  static const int mdays[] = {31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  int year = 2024, month = 0;
  long long d = day;
  while (true) {
    bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    int dim = (month == 1 && !leap) ? 28 : mdays[month];
    if (d < dim) break;
    d -= dim;
    if (++month == 12) { month = 0; ++year; }
  }
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02lld:%02lld:%02lld", year, month + 1,
                static_cast<int>(d) + 1, rem / 3600, (rem % 3600) / 60, rem % 60);
  return buf;
}

inline void write_window_csv(const std::string& path, const std::vector<LinkWindowRecord>& recs) {
  std::ofstream out(path);
  out << "link_id,window_start,n_vehicles,travel_time_s,speed_mph,control_delay_s,"
         "stop_delay_s,n_stops,queue_m,aog_ratio,sf_ratio,imputed\n";
  out.precision(10);
  for (const auto& r : recs)
    out << r.link_id << ',' << iso8601(r.window_start) << ',' << r.n_vehicles << ','
        << r.travel_time_s << ',' << r.speed_mph << ',' << r.control_delay_s << ','
        << r.stop_delay_s << ',' << r.n_stops << ',' << r.queue_m << ',' << r.aog_ratio << ','
        << r.sf_ratio << ',' << (r.imputed ? 1 : 0) << '\n';
}

inline double parse_iso8601(const std::string& s) {
  int y, mo, d, h, mi, se;
  if (std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &h, &mi, &se) != 6)
    throw std::runtime_error("bad timestamp: " + s);
  static const int mdays[] = {31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  long long days = 0;
  for (int year = 2024; year < y; ++year) {
    bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    days += leap ? 366 : 365;
  }
  bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
  for (int m = 0; m < mo - 1; ++m) days += (m == 1 && !leap) ? 28 : mdays[m];
  days += d - 1;
  return static_cast<double>(days) * 86400.0 + h * 3600.0 + mi * 60.0 + se;
}

inline std::vector<LinkWindowRecord> read_window_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open window file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty window file: " + path);
  std::vector<LinkWindowRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() < 12) throw std::runtime_error("bad window row: " + line);
    LinkWindowRecord r;
    r.link_id = f[0];
    r.window_start = parse_iso8601(f[1]);
    r.n_vehicles = std::stoi(f[2]);
    r.travel_time_s = std::stod(f[3]);
    r.speed_mph = std::stod(f[4]);
    r.control_delay_s = std::stod(f[5]);
    r.stop_delay_s = std::stod(f[6]);
    r.n_stops = std::stod(f[7]);
    r.queue_m = std::stod(f[8]);
    r.aog_ratio = std::stod(f[9]);
    r.sf_ratio = std::stod(f[10]);
    r.imputed = f[11] == "1";
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace arterial
