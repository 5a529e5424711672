#pragma once

#include <span>
#include <string>
#include <vector>

namespace dockflow::geo {

// Mean Earth radius, km.
inline constexpr double kEarthRadiusKm = 6371.0088;

inline constexpr int kNoNeighborhood = -1;
inline constexpr double kDefaultStopRadiusM = 300.0;

/// Great-circle distance between two WGS84 points, in kilometres.
double haversine_km(double lat1, double lon1, double lat2, double lon2);

struct TransitStop {
    std::string stop_id;
    double lat = 0;
    double lon = 0;
};

struct LonLat {
    double lon = 0;
    double lat = 0;
};

// One polygon: an outer ring plus zero or more hole rings.  Rings may be
// open or closed; a closing vertex equal to the first is ignored.
struct PolygonPart {
    std::vector<std::vector<LonLat>> rings;
};

// A named region.  MultiPolygon geometries contribute several parts under
// a single id.
struct Neighborhood {
    int id = kNoNeighborhood;
    std::string name;
    std::vector<PolygonPart> parts;
};

/// Even-odd containment over all rings of all parts.  Points exactly on any
/// ring edge (outer or hole) count as inside.
bool neighborhood_contains(const Neighborhood& nb, double lat, double lon);

/// Id of the first neighborhood (in list order) containing the point, or
/// kNoNeighborhood.
int locate_neighborhood(std::span<const Neighborhood> neighborhoods, double lat, double lon);

/// Number of stops within `radius_m` of the point, boundary inclusive.
int nearby_stop_count(std::span<const TransitStop> stops, double lat, double lon,
                      double radius_m = kDefaultStopRadiusM);

}  // namespace dockflow::geo
