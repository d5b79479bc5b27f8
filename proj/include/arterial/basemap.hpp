#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "arterial/geo.hpp"

namespace arterial {

struct Intersection {
  std::string id;
  LonLat position;
};

struct Link {
  std::string id;
  std::string upstream;    // intersection id
  std::string downstream;  // intersection id
  std::vector<LonLat> geometry;  // upstream stop line -> downstream stop line
  double length_m = 0.0;
  int lanes = 1;
  double speed_limit_mph = 45.0;
  std::string road_id;

  // Centerline in the link's local frame (anchored at the first vertex).
  const Polyline& polyline() const { return *polyline_; }
  const LocalFrame& frame() const { return *frame_; }

  void build_geometry() {
    frame_.emplace(geometry.front());
    std::vector<Vec2> xy;
    xy.reserve(geometry.size());
    for (const auto& g : geometry) xy.push_back(frame_->to_xy(g));
    polyline_.emplace(std::move(xy));
  }

 private:
  std::optional<LocalFrame> frame_;
  std::optional<Polyline> polyline_;
};

class LinkGraph {
 public:
  std::vector<Intersection> intersections;
  std::vector<Link> links;
  std::vector<std::pair<std::string, std::string>> movements;  // from-link -> to-link

  const Link& link(const std::string& id) const {
    auto it = link_index_.find(id);
    if (it == link_index_.end()) throw std::out_of_range("unknown link id: " + id);
    return links[it->second];
  }
  std::size_t link_pos(const std::string& id) const { return link_index_.at(id); }
  bool has_link(const std::string& id) const { return link_index_.count(id) != 0; }

  void validate() {
    if (links.empty()) throw std::runtime_error("empty graph: no links");
    std::set<std::string> node_ids;
    for (const auto& n : intersections) {
      if (std::fabs(n.position.lat) > 90.0 || std::fabs(n.position.lon) > 180.0)
        throw std::runtime_error("intersection " + n.id + " has out-of-range coordinates");
      if (!node_ids.insert(n.id).second)
        throw std::runtime_error("duplicate intersection id: " + n.id);
    }
    link_index_.clear();
    for (std::size_t i = 0; i < links.size(); ++i) {
      Link& l = links[i];
      if (!link_index_.emplace(l.id, i).second)
        throw std::runtime_error("duplicate link id: " + l.id);
      if (!node_ids.count(l.upstream))
        throw std::runtime_error("link " + l.id + " references unknown intersection: " + l.upstream);
      if (!node_ids.count(l.downstream))
        throw std::runtime_error("link " + l.id + " references unknown intersection: " + l.downstream);
      if (l.upstream == l.downstream)
        throw std::runtime_error("link " + l.id + " has identical endpoints");
      if (l.geometry.size() < 2)
        throw std::runtime_error("link " + l.id + " needs >= 2 geometry vertices");
      l.build_geometry();
      double poly_len = l.polyline().length();
      if (poly_len <= 0.0) throw std::runtime_error("zero-length link: " + l.id);
      if (l.length_m <= 0.0) l.length_m = poly_len;
      if (std::fabs(l.length_m - poly_len) > 0.005 * poly_len)
        throw std::runtime_error("link " + l.id + " length_m deviates > 0.5% from geometry");
    }
    for (const auto& [from, to] : movements) {
      if (!link_index_.count(from))
        throw std::runtime_error("movement references unknown link: " + from);
      if (!link_index_.count(to))
        throw std::runtime_error("movement references unknown link: " + to);
    }
  }

 private:
  std::unordered_map<std::string, std::size_t> link_index_;
};

inline LinkGraph parse_basemap(const nlohmann::json& j) {
  LinkGraph g;
  for (const auto& n : j.at("intersections"))
    g.intersections.push_back({n.at("id").get<std::string>(),
                               {n.at("lon").get<double>(), n.at("lat").get<double>()}});
  for (const auto& lj : j.at("links")) {
    Link l;
    l.id = lj.at("id").get<std::string>();
    l.upstream = lj.at("upstream").get<std::string>();
    l.downstream = lj.at("downstream").get<std::string>();
    for (const auto& v : lj.at("geometry"))
      l.geometry.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
    l.lanes = lj.value("lanes", 1);
    l.speed_limit_mph = lj.value("speed_limit_mph", 45.0);
    l.road_id = lj.value("road_id", std::string("R0"));
    if (lj.contains("length_m")) l.length_m = lj.at("length_m").get<double>();
    g.links.push_back(std::move(l));
  }
  if (j.contains("movements"))
    for (const auto& m : j.at("movements"))
      g.movements.emplace_back(m.at(0).get<std::string>(), m.at(1).get<std::string>());
  g.validate();
  return g;
}

inline LinkGraph load_basemap(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open basemap file: " + path);
  nlohmann::json j;
  in >> j;
  return parse_basemap(j);
}

inline nlohmann::json basemap_to_json(const LinkGraph& g) {
  nlohmann::json j;
  j["intersections"] = nlohmann::json::array();
  for (const auto& n : g.intersections)
    j["intersections"].push_back({{"id", n.id}, {"lon", n.position.lon}, {"lat", n.position.lat}});
  j["links"] = nlohmann::json::array();
  for (const auto& l : g.links) {
    nlohmann::json geom = nlohmann::json::array();
    for (const auto& v : l.geometry) geom.push_back({v.lon, v.lat});
    j["links"].push_back({{"id", l.id},
                          {"upstream", l.upstream},
                          {"downstream", l.downstream},
                          {"geometry", geom},
                          {"length_m", l.length_m},
                          {"lanes", l.lanes},
                          {"speed_limit_mph", l.speed_limit_mph},
                          {"road_id", l.road_id}});
  }
  j["movements"] = nlohmann::json::array();
  for (const auto& [a, b] : g.movements) j["movements"].push_back({a, b});
  return j;
}

struct FixedAdjacency {
  std::vector<std::string> order;        // link-id index list
  std::vector<std::vector<int>> raw;     // entries in {0,1,2}
  std::vector<std::vector<double>> normalized;  // row-stochastic (or all-zero rows)
};

// raw[i][j] = 2 if the links share an intersection and a direct movement
// connects them (either direction), 1 if they share an intersection without a
// movement, 0 otherwise. Diagonal is 2 (self connection). Rows with a nonzero
// sum are divided by it; all-zero rows stay zero.
inline FixedAdjacency build_fixed_adjacency(const LinkGraph& g) {
  const std::size_t n = g.links.size();
  FixedAdjacency adj;
  adj.order.reserve(n);
  for (const auto& l : g.links) adj.order.push_back(l.id);

  std::set<std::pair<std::string, std::string>> moves(g.movements.begin(), g.movements.end());
  adj.raw.assign(n, std::vector<int>(n, 0));
  for (std::size_t i = 0; i < n; ++i) {
    adj.raw[i][i] = 2;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const Link& a = g.links[i];
      const Link& b = g.links[j];
      bool share = a.upstream == b.upstream || a.upstream == b.downstream ||
                   a.downstream == b.upstream || a.downstream == b.downstream;
      if (!share) continue;
      bool moved = moves.count({a.id, b.id}) || moves.count({b.id, a.id});
      adj.raw[i][j] = moved ? 2 : 1;
    }
  }
  adj.normalized.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) row_sum += adj.raw[i][j];
    if (row_sum > 0.0)
      for (std::size_t j = 0; j < n; ++j) adj.normalized[i][j] = adj.raw[i][j] / row_sum;
  }
  return adj;
}

// Compass bearing of the link polyline at a given chainage.
inline double link_bearing(const Link& link, double chainage_m) {
  return link.polyline().bearing_at(chainage_m);
}

}  // namespace arterial
