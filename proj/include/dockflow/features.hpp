#pragma once

#include <array>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dockflow/geo.hpp"
#include "dockflow/ingest.hpp"
#include "dockflow/matrix.hpp"
#include "dockflow/time.hpp"

namespace dockflow::feat {

enum class Direction { Incoming = 0, Outgoing = 1 };

inline const char* direction_label(Direction d) {
    return d == Direction::Incoming ? "in" : "out";
}

// One detection unit: aggregated traffic for (station, clock hour, direction).
struct StationHourRow {
    std::string station_id;
    Timestamp hour_start = 0;
    Direction direction = Direction::Incoming;
    int traffic_load = 0;
    double avg_distance_km = 0;
    double avg_duration_min = 0;
    double avg_speed_kmh = 0;
    double subscriber_ratio = 0;
    int hour = 0;
    int day_of_month = 0;
    int weekday = 0;  // Monday = 0
    int is_holiday = 0;
    double avg_temp = 0;
    double avg_precip = 0;
    double avg_wind = 0;
    int coco = 0;
    int nearby_transit_stops = 0;
    int neighborhood_id = geo::kNoNeighborhood;
};

// Station master record, reconciled from trip rows (first mention wins).
struct StationInfo {
    std::string station_id;
    double lat = 0;
    double lon = 0;
    int nearby_stops = 0;
    int neighborhood_id = geo::kNoNeighborhood;
};

// A trip mentioning a known station with coordinates > 50 m away from the
// registered ones.
struct CoordConflict {
    std::string station_id;
    std::string trip_id;
    double lat = 0, lon = 0;
    double distance_m = 0;
};

// Per-trip contribution to one cell, retained for min/avg/max checks.
struct TripStats {
    double distance_km = 0;
    double duration_min = 0;
    double speed_kmh = 0;
    bool subscriber = false;
};

struct AggregateResult {
    std::vector<StationHourRow> rows;                // sorted (station, hour, direction)
    std::vector<std::vector<TripStats>> cell_trips;  // parallel to rows
    std::vector<StationInfo> stations;               // sorted by station_id
    std::vector<CoordConflict> warnings;
};

// Numeric encoding order; one column per aggregated feature.
inline constexpr std::array<const char*, 16> kFeatureColumns = {
    "traffic_load",   "direction",     "avg_distance_km", "avg_duration_min",
    "avg_speed_kmh",  "subscriber_ratio", "hour",         "day_of_month",
    "weekday",        "is_holiday",    "avg_temp",        "avg_precip",
    "avg_wind",       "coco",          "nearby_transit_stops", "neighborhood_id",
};

// Per-trip speeds above this are capped before averaging so one bad row
// cannot blow up a cell (the trip itself is still kept for detection).
inline constexpr double kSpeedCapKmh = 99.0;

struct FeatureMatrix {
    std::vector<StationHourRow> rows;
    NumericMatrix numeric;
};

/// Aggregates accepted trips into station-hour rows.  A trip counts toward
/// the Outgoing cell of its start station (hour of start time) and the
/// Incoming cell of its end station (hour of end time).  Weather is joined
/// on the cell hour, forward-filling gaps (back-filling before the first
/// observation).  Throws Error{data} when weather is empty.
AggregateResult aggregate_station_hours(std::span<const ingest::TripRecord> trips,
                                        std::span<const ingest::WeatherHour> weather,
                                        std::span<const geo::TransitStop> stops,
                                        std::span<const geo::Neighborhood> neighborhoods,
                                        const ingest::HolidayCalendar& holidays);

/// Encodes rows into the fixed 16-column numeric view.  Direction Incoming
/// is 0 and Outgoing 1; a station outside every neighborhood encodes as -1.
FeatureMatrix encode_features(std::vector<StationHourRow> rows);

/// Recovers the categorical/integer fields of row r from the numeric view.
/// Exact for every in-range input; used to verify the encoding is lossless.
StationHourRow decode_numeric_row(const NumericMatrix& m, std::size_t r);

/// Per-trip matrix [duration_min, distance_km, speed_kmh] used to tune
/// contamination.
NumericMatrix trip_feature_matrix(std::span<const ingest::TripRecord> trips);

void write_station_hours_csv(std::ostream& out, std::span<const StationHourRow> rows);
void write_matrix_csv(std::ostream& out, const NumericMatrix& m);
void write_stations_csv(std::ostream& out, std::span<const StationInfo> stations);

// Binary bundle carried between CLI stages; doubles stored bit-exactly.
struct FeatureBundle {
    FeatureMatrix matrix;
    std::vector<StationInfo> stations;
};

void write_feature_bundle(std::ostream& out, const FeatureMatrix& m,
                          std::span<const StationInfo> stations);
FeatureBundle read_feature_bundle(std::istream& in);

void write_matrix_bin(std::ostream& out, const NumericMatrix& m);
NumericMatrix read_matrix_bin(std::istream& in);

}  // namespace dockflow::feat
