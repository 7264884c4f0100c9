#include "autocab/geo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "autocab/error.hpp"

namespace autocab {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

double normalize_lon(double lon) {
  while (lon >= 180.0) lon -= 360.0;
  while (lon < -180.0) lon += 360.0;
  return lon;
}

BBox bbox_from_json(const nlohmann::json& j) {
  BBox b{j.at("min_lat").get<double>(), j.at("max_lat").get<double>(), j.at("min_lon").get<double>(),
         j.at("max_lon").get<double>()};
  if (!(b.min_lat < b.max_lat) || !(b.min_lon < b.max_lon)) {
    throw Error(ErrorCode::ParseError, "degenerate bbox " + j.dump());
  }
  return b;
}

Condition condition_from_json(const nlohmann::json& j) {
  Condition c;
  c.signal = j.at("signal").get<std::string>();
  if (find_signal(c.signal) == nullptr) throw Error(ErrorCode::InvalidBinding, "regulation signal " + c.signal);
  auto cmp = parse_comparator(j.at("cmp").get<std::string>());
  if (!cmp) throw Error(ErrorCode::ParseError, "bad comparator " + j.at("cmp").dump());
  c.cmp = *cmp;
  c.literal = value_from_json(j.at("value"));
  return c;
}

RegionProfile region_from_json(const nlohmann::json& j) {
  RegionProfile r;
  r.region_id = j.at("region_id").get<std::string>();
  r.name = j.value("name", r.region_id);
  if (j.contains("bbox")) r.bbox = bbox_from_json(j.at("bbox"));
  const auto& anchor = j.at("anchor");
  r.anchor_lat = anchor.at("lat").get<double>();
  r.anchor_lon = anchor.at("lon").get<double>();
  r.anchor_heading_deg = anchor.value("heading_deg", 0.0);
  r.urban_limit_kmh = j.at("urban_limit_kmh").get<std::int64_t>();
  r.highway_limit_kmh = j.at("highway_limit_kmh").get<std::int64_t>();
  r.rural_limit_kmh = j.at("rural_limit_kmh").get<std::int64_t>();
  if (r.urban_limit_kmh <= 0 || r.highway_limit_kmh <= 0 || r.rural_limit_kmh <= 0) {
    throw Error(ErrorCode::ParseError, r.region_id + ": limits must be positive");
  }
  const auto& climate = j.at("climate");
  for (const auto& [season, t] : climate.at("mean_temp_c").items()) r.climate.mean_temp_c[season] = t.get<double>();
  r.climate.humidity_pct = climate.at("humidity_pct").get<std::int64_t>();
  r.climate.heat_prone = climate.at("heat_prone").get<bool>();
  for (const auto& reg : j.value("regulations", nlohmann::json::array())) {
    Regulation rule;
    rule.rule_id = reg.at("rule_id").get<std::string>();
    rule.message = reg.at("message").get<std::string>();
    for (const auto& c : reg.at("when")) rule.when.push_back(condition_from_json(c));
    r.regulations.push_back(std::move(rule));
  }
  r.norms = j.value("norms", std::vector<std::string>{});
  r.tags = j.value("tags", std::vector<std::string>{});
  for (const auto& z : j.value("outage_zones", nlohmann::json::array())) r.outage_zones.push_back(bbox_from_json(z));
  if (r.bbox && !r.bbox->contains(r.anchor_lat, r.anchor_lon)) {
    throw Error(ErrorCode::ParseError, r.region_id + ": anchor outside bbox");
  }
  return r;
}

void add_fact(ContextReport& report, std::string key, std::string value) {
  report.facts.emplace_back(std::move(key), std::move(value));
}

}  // namespace

bool evaluate(const Condition& c, const VehicleState& state) {
  return compare_values(query_signal(state, c.signal), c.cmp, c.literal);
}

nlohmann::json to_json(const GeoFix& fix) {
  return {{"lat", fix.lat},
          {"lon", fix.lon},
          {"heading_deg", fix.heading_deg},
          {"timestamp", fix.timestamp},
          {"quality", fix.quality == FixQuality::Ok ? "Ok" : "Lost"},
          {"last_good_timestamp", fix.last_good_timestamp},
          {"estimated", fix.estimated}};
}

GeoFix geo_fix_from_json(const nlohmann::json& j) {
  GeoFix fix;
  fix.lat = j.at("lat").get<double>();
  fix.lon = j.at("lon").get<double>();
  fix.heading_deg = j.value("heading_deg", 0.0);
  fix.timestamp = j.value("timestamp", 0.0);
  fix.quality = j.value("quality", std::string("Ok")) == "Lost" ? FixQuality::Lost : FixQuality::Ok;
  fix.last_good_timestamp = j.value("last_good_timestamp", fix.timestamp);
  fix.estimated = j.value("estimated", false);
  return fix;
}

bool RegionProfile::has_tag(std::string_view tag) const {
  return std::find(tags.begin(), tags.end(), tag) != tags.end();
}

std::int64_t RegionProfile::limit_for(RoadType road) const {
  switch (road) {
    case RoadType::Urban: return urban_limit_kmh;
    case RoadType::Highway: return highway_limit_kmh;
    case RoadType::Rural: return rural_limit_kmh;
  }
  return urban_limit_kmh;
}

RegionKB RegionKB::from_json(const nlohmann::json& j) {
  RegionKB kb;
  kb.kb_version_ = j.at("kb_version").get<std::string>();
  std::optional<std::size_t> default_index;
  for (const auto& item : j.at("regions")) {
    RegionProfile region;
    try {
      region = region_from_json(item);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, "region " + item.value("region_id", std::string("?")) + ": " + e.what());
    }
    if (kb.find(region.region_id) != nullptr) throw Error(ErrorCode::DuplicateId, "region " + region.region_id);
    if (!region.bbox) {
      if (default_index) throw Error(ErrorCode::ParseError, "more than one region without bbox");
      default_index = kb.regions_.size();
    }
    kb.regions_.push_back(std::move(region));
  }
  if (!default_index) throw Error(ErrorCode::ParseError, "region KB has no Default region");
  kb.default_index_ = *default_index;
  for (std::size_t a = 0; a < kb.regions_.size(); ++a) {
    for (std::size_t b = a + 1; b < kb.regions_.size(); ++b) {
      const auto& ra = kb.regions_[a];
      const auto& rb = kb.regions_[b];
      if (ra.bbox && rb.bbox && ra.bbox->intersects(*rb.bbox)) {
        throw Error(ErrorCode::ParseError, "regions " + ra.region_id + " and " + rb.region_id + " overlap");
      }
    }
  }
  return kb;
}

RegionKB RegionKB::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open region KB " + path);
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
}

const RegionProfile& RegionKB::default_region() const { return regions_.at(default_index_); }

const RegionProfile* RegionKB::find(std::string_view region_id) const {
  for (const auto& r : regions_) {
    if (r.region_id == region_id) return &r;
  }
  return nullptr;
}

const RegionProfile& RegionKB::require(std::string_view region_id) const {
  const auto* r = find(region_id);
  if (r == nullptr) throw Error(ErrorCode::UnknownRegion, std::string(region_id));
  return *r;
}

std::vector<BBox> RegionKB::all_outage_zones() const {
  std::vector<BBox> zones;
  for (const auto& r : regions_) zones.insert(zones.end(), r.outage_zones.begin(), r.outage_zones.end());
  return zones;
}

const RegionProfile& lookup_region(const RegionKB& kb, double lat, double lon) {
  for (const auto& r : kb.regions()) {
    if (r.bbox && r.bbox->contains(lat, lon)) return r;
  }
  return kb.default_region();
}

const RegionProfile& lookup_region(const RegionKB& kb, const GeoFix& fix) {
  return lookup_region(kb, fix.lat, fix.lon);
}

std::string_view to_string(QueryKind kind) {
  switch (kind) {
    case QueryKind::Weather: return "Weather";
    case QueryKind::SpeedRules: return "SpeedRules";
    case QueryKind::Equipment: return "Equipment";
    case QueryKind::Norms: return "Norms";
  }
  return "?";
}

QueryKind parse_query_kind(std::string_view text) {
  for (auto k : {QueryKind::Weather, QueryKind::SpeedRules, QueryKind::Equipment, QueryKind::Norms}) {
    if (to_string(k) == text) return k;
  }
  throw Error(ErrorCode::UnknownQueryKind, std::string(text));
}

const std::string* ContextReport::fact(std::string_view key) const {
  for (const auto& [k, v] : facts) {
    if (k == key) return &v;
  }
  return nullptr;
}

nlohmann::json ContextReport::to_json() const {
  nlohmann::json f = nlohmann::json::array();
  for (const auto& [k, v] : facts) f.push_back({k, v});
  return {{"kind", to_string(kind)}, {"source_region", source_region}, {"estimated", estimated}, {"facts", f}};
}

std::string season_at(double sim_clock) {
  // Non-leap months are close enough for season boundaries.
  const int day = static_cast<int>(std::floor(sim_clock / 86400.0)) % 365;
  if (day < 59 || day >= 334) return "winter";
  if (day < 151) return "spring";
  if (day < 243) return "summer";
  return "autumn";
}

ContextReport virtual_sensor_query(const RegionProfile& profile, QueryKind kind, const VehicleState& state) {
  ContextReport report;
  report.kind = kind;
  report.source_region = profile.region_id;
  switch (kind) {
    case QueryKind::SpeedRules: {
      const auto limit = profile.limit_for(state.road.road_type);
      add_fact(report, "road_type", std::string(to_string(state.road.road_type)));
      add_fact(report, "limit_kmh", std::to_string(limit));
      add_fact(report, "current_speed_kmh", value_to_string(state.motion.speed_kmh));
      add_fact(report, "overspeed", state.motion.speed_kmh > static_cast<double>(limit) + 1e-9 ? "true" : "false");
      add_fact(report, "rule", std::string(to_string(state.road.road_type)) + " roads limited to " +
                                   std::to_string(limit) + " km/h unless otherwise posted");
      break;
    }
    case QueryKind::Weather: {
      const auto season = season_at(state.system.sim_clock);
      add_fact(report, "season", season);
      auto it = profile.climate.mean_temp_c.find(season);
      if (it != profile.climate.mean_temp_c.end()) add_fact(report, "mean_temp_c", value_to_string(it->second));
      add_fact(report, "humidity_pct", std::to_string(profile.climate.humidity_pct));
      add_fact(report, "heat_prone", profile.climate.heat_prone ? "true" : "false");
      break;
    }
    case QueryKind::Equipment: {
      int violations = 0;
      for (const auto& rule : profile.regulations) {
        bool violated = !rule.when.empty() &&
                        std::all_of(rule.when.begin(), rule.when.end(),
                                    [&](const Condition& c) { return evaluate(c, state); });
        violations += violated ? 1 : 0;
        add_fact(report, rule.rule_id, (violated ? "VIOLATED: " : "ok: ") + rule.message);
      }
      add_fact(report, "violations", std::to_string(violations));
      break;
    }
    case QueryKind::Norms: {
      int n = 0;
      for (const auto& norm : profile.norms) add_fact(report, "norm_" + std::to_string(++n), norm);
      if (n == 0) add_fact(report, "norms", "none recorded");
      break;
    }
  }
  return report;
}

ContextReport virtual_sensor_query(const RegionProfile& profile, std::string_view kind, const VehicleState& state) {
  return virtual_sensor_query(profile, parse_query_kind(kind), state);
}

std::pair<double, double> step_position(double lat, double lon, double heading_deg, double distance_m) {
  const double h = heading_deg * kDegToRad;
  const double dn = distance_m * std::cos(h);
  const double de = distance_m * std::sin(h);
  const double dlat = dn / kEarthRadiusM / kDegToRad;
  const double mid_lat = (lat + dlat / 2.0) * kDegToRad;
  const double dlon = de / (kEarthRadiusM * std::cos(mid_lat)) / kDegToRad;
  return {std::clamp(lat + dlat, -90.0, 90.0), normalize_lon(lon + dlon)};
}

GeoFix advance_fix(const GeoFix& fix, double speed_kmh, double dt, std::span<const BBox> outage_zones) {
  if (!(dt > 0.0)) throw Error(ErrorCode::NonPositiveDt, "dt=" + std::to_string(dt));
  GeoFix next = fix;
  next.timestamp = fix.timestamp + dt;
  next.estimated = false;
  auto [lat, lon] = step_position(fix.lat, fix.lon, fix.heading_deg, speed_kmh / 3.6 * dt);
  bool in_outage = std::any_of(outage_zones.begin(), outage_zones.end(),
                               [&](const BBox& z) { return z.contains(lat, lon); });
  if (in_outage) {
    next.quality = FixQuality::Lost;  // lat/lon stay at the last good fix
  } else {
    next.lat = lat;
    next.lon = lon;
    next.quality = FixQuality::Ok;
    next.last_good_timestamp = next.timestamp;
  }
  return next;
}

GeoFix dead_reckon(const GeoFix& last, double speed_kmh, double heading_deg, double dt) {
  if (last.quality != FixQuality::Lost) throw Error(ErrorCode::PreconditionViolated, "dead reckoning needs a lost fix");
  if (!(dt > 0.0)) throw Error(ErrorCode::PreconditionViolated, "dead reckoning needs dt > 0");
  GeoFix est = last;
  auto [lat, lon] = step_position(last.lat, last.lon, heading_deg, speed_kmh / 3.6 * dt);
  est.lat = lat;
  est.lon = lon;
  est.heading_deg = heading_deg;
  est.timestamp = last.last_good_timestamp + dt;
  est.estimated = true;
  return est;
}

GeoTrack start_track(const RegionProfile& region, double timestamp) {
  GeoTrack track;
  track.true_lat = region.anchor_lat;
  track.true_lon = region.anchor_lon;
  track.fix.lat = region.anchor_lat;
  track.fix.lon = region.anchor_lon;
  track.fix.heading_deg = region.anchor_heading_deg;
  track.fix.timestamp = timestamp;
  track.fix.last_good_timestamp = timestamp;
  return track;
}

GeoTrack advance_track(const GeoTrack& track, double speed_kmh, double dt, std::span<const BBox> outage_zones) {
  GeoFix truth = track.fix;
  truth.lat = track.true_lat;
  truth.lon = track.true_lon;
  truth.quality = FixQuality::Ok;
  GeoTrack next;
  GeoFix moved = advance_fix(truth, speed_kmh, dt, {});
  next.true_lat = moved.lat;
  next.true_lon = moved.lon;
  bool in_outage = std::any_of(outage_zones.begin(), outage_zones.end(),
                               [&](const BBox& z) { return z.contains(moved.lat, moved.lon); });
  next.fix = track.fix;
  next.fix.timestamp = moved.timestamp;
  next.fix.estimated = false;
  if (in_outage) {
    next.fix.quality = FixQuality::Lost;
  } else {
    next.fix.lat = moved.lat;
    next.fix.lon = moved.lon;
    next.fix.quality = FixQuality::Ok;
    next.fix.last_good_timestamp = moved.timestamp;
  }
  return next;
}

}  // namespace autocab
