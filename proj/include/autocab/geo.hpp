#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "autocab/value.hpp"
#include "autocab/vehicle.hpp"

namespace autocab {

inline constexpr double kEarthRadiusM = 6371008.8;

enum class FixQuality { Ok, Lost };

struct GeoFix {
  double lat = 0.0;
  double lon = 0.0;
  double heading_deg = 0.0;  // [0, 360)
  double timestamp = 0.0;    // simulated seconds
  FixQuality quality = FixQuality::Ok;
  double last_good_timestamp = 0.0;
  bool estimated = false;  // produced by dead reckoning

  bool operator==(const GeoFix&) const = default;
};

nlohmann::json to_json(const GeoFix& fix);
GeoFix geo_fix_from_json(const nlohmann::json& j);

// Half-open on both axes: lat in [min_lat, max_lat), lon in [min_lon, max_lon).
struct BBox {
  double min_lat = 0.0;
  double max_lat = 0.0;
  double min_lon = 0.0;
  double max_lon = 0.0;

  bool contains(double lat, double lon) const {
    return lat >= min_lat && lat < max_lat && lon >= min_lon && lon < max_lon;
  }
  bool intersects(const BBox& o) const {
    return min_lat < o.max_lat && o.min_lat < max_lat && min_lon < o.max_lon && o.min_lon < max_lon;
  }
};

struct Condition {
  std::string signal;
  Comparator cmp = Comparator::Eq;
  Value literal;
};

bool evaluate(const Condition& c, const VehicleState& state);

// A regulation is violated when every condition holds.
struct Regulation {
  std::string rule_id;
  std::vector<Condition> when;
  std::string message;
};

struct Climate {
  std::map<std::string, double> mean_temp_c;  // winter, spring, summer, autumn
  std::int64_t humidity_pct = 50;
  bool heat_prone = false;
};

struct RegionProfile {
  std::string region_id;
  std::string name;
  std::optional<BBox> bbox;  // absent only for the Default region
  double anchor_lat = 0.0;
  double anchor_lon = 0.0;
  double anchor_heading_deg = 0.0;
  std::int64_t urban_limit_kmh = 50;
  std::int64_t highway_limit_kmh = 120;
  std::int64_t rural_limit_kmh = 90;
  Climate climate;
  std::vector<Regulation> regulations;
  std::vector<std::string> norms;
  std::vector<std::string> tags;
  std::vector<BBox> outage_zones;

  bool has_tag(std::string_view tag) const;
  std::int64_t limit_for(RoadType road) const;
};

// Immutable after load.
class RegionKB {
 public:
  static RegionKB from_json(const nlohmann::json& j);
  static RegionKB load(const std::string& path);

  const std::string& kb_version() const { return kb_version_; }
  std::span<const RegionProfile> regions() const { return regions_; }
  const RegionProfile& default_region() const;
  const RegionProfile* find(std::string_view region_id) const;
  const RegionProfile& require(std::string_view region_id) const;
  std::vector<BBox> all_outage_zones() const;

 private:
  std::string kb_version_;
  std::vector<RegionProfile> regions_;
  std::size_t default_index_ = 0;
};

const RegionProfile& lookup_region(const RegionKB& kb, const GeoFix& fix);
const RegionProfile& lookup_region(const RegionKB& kb, double lat, double lon);

enum class QueryKind { Weather, SpeedRules, Equipment, Norms };

std::string_view to_string(QueryKind kind);
QueryKind parse_query_kind(std::string_view text);  // throws UnknownQueryKind

struct ContextReport {
  QueryKind kind = QueryKind::Weather;
  std::vector<std::pair<std::string, std::string>> facts;
  std::string source_region;
  bool estimated = false;  // derived from a dead-reckoned position

  const std::string* fact(std::string_view key) const;
  nlohmann::json to_json() const;
};

ContextReport virtual_sensor_query(const RegionProfile& profile, QueryKind kind, const VehicleState& state);
ContextReport virtual_sensor_query(const RegionProfile& profile, std::string_view kind, const VehicleState& state);

// Season name for a simulated clock value (epoch is 1 January).
std::string season_at(double sim_clock);

// Flat-earth step of `distance_m` along `heading_deg`.
std::pair<double, double> step_position(double lat, double lon, double heading_deg, double distance_m);

GeoFix advance_fix(const GeoFix& fix, double speed_kmh, double dt, std::span<const BBox> outage_zones);
GeoFix dead_reckon(const GeoFix& last, double speed_kmh, double heading_deg, double dt);

// True vehicle position plus the fix the receiver reports. The truth keeps
// moving through outages; the reported fix freezes.
struct GeoTrack {
  double true_lat = 0.0;
  double true_lon = 0.0;
  GeoFix fix;
};

GeoTrack start_track(const RegionProfile& region, double timestamp);
GeoTrack advance_track(const GeoTrack& track, double speed_kmh, double dt, std::span<const BBox> outage_zones);

}  // namespace autocab
