#include "dockflow/geo.hpp"

#include <cmath>

namespace dockflow::geo {

namespace {

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

// True when p lies exactly on segment [a, b].
bool on_segment(const LonLat& p, const LonLat& a, const LonLat& b) {
    const double cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
    if (cross != 0.0) return false;
    return p.lon >= std::fmin(a.lon, b.lon) && p.lon <= std::fmax(a.lon, b.lon) &&
           p.lat >= std::fmin(a.lat, b.lat) && p.lat <= std::fmax(a.lat, b.lat);
}

// Counts crossings of a rightward ray from p; `on_edge` is set when p lies
// on the ring itself.  Half-open vertex rule keeps shared vertices single.
int ray_crossings(const std::vector<LonLat>& ring, const LonLat& p, bool& on_edge) {
    int crossings = 0;
    const std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i) {
        const LonLat& a = ring[i];
        const LonLat& b = ring[(i + 1) % n];
        if (a.lon == b.lon && a.lat == b.lat) continue;  // closing vertex duplicate
        if (on_segment(p, a, b)) {
            on_edge = true;
            return 0;
        }
        if ((a.lat > p.lat) != (b.lat > p.lat)) {
            const double x = a.lon + (p.lat - a.lat) / (b.lat - a.lat) * (b.lon - a.lon);
            if (x > p.lon) ++crossings;
        }
    }
    return crossings;
}

}  // namespace

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
    const double phi1 = lat1 * kDegToRad;
    const double phi2 = lat2 * kDegToRad;
    const double dphi = (lat2 - lat1) * kDegToRad;
    const double dlam = (lon2 - lon1) * kDegToRad;
    const double sp = std::sin(dphi / 2);
    const double sl = std::sin(dlam / 2);
    const double a = sp * sp + std::cos(phi1) * std::cos(phi2) * sl * sl;
    return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(std::fmin(1.0, a)));
}

bool neighborhood_contains(const Neighborhood& nb, double lat, double lon) {
    const LonLat p{lon, lat};
    for (const PolygonPart& part : nb.parts) {
        int crossings = 0;
        bool on_edge = false;
        for (const auto& ring : part.rings) {
            crossings += ray_crossings(ring, p, on_edge);
            if (on_edge) return true;  // boundary (outer or hole) counts as inside
        }
        if (crossings % 2 == 1) return true;
    }
    return false;
}

int locate_neighborhood(std::span<const Neighborhood> neighborhoods, double lat, double lon) {
    for (const Neighborhood& nb : neighborhoods) {
        if (neighborhood_contains(nb, lat, lon)) return nb.id;
    }
    return kNoNeighborhood;
}

int nearby_stop_count(std::span<const TransitStop> stops, double lat, double lon, double radius_m) {
    int count = 0;
    for (const TransitStop& s : stops) {
        if (haversine_km(lat, lon, s.lat, s.lon) * 1000.0 <= radius_m) ++count;
    }
    return count;
}

}  // namespace dockflow::geo
