#pragma once

#include <istream>
#include <set>
#include <string>
#include <vector>

#include "dockflow/geo.hpp"
#include "dockflow/time.hpp"

namespace dockflow::ingest {

enum class UserType { Subscriber, Casual };

struct TripRecord {
    std::string trip_id;
    Timestamp start_time = 0;
    Timestamp end_time = 0;
    long duration_s = 0;  // always end_time - start_time
    std::string start_station_id;
    std::string end_station_id;
    double start_lat = 0, start_lon = 0;
    double end_lat = 0, end_lon = 0;
    UserType user_type = UserType::Casual;
};

struct WeatherHour {
    Timestamp hour_start = 0;
    double temp = 0;        // °C
    double precip = 0;      // mm over the hour
    double wind_speed = 0;  // km/h
    int coco = 0;           // categorical condition code
};

// A skipped input row, kept so callers can audit instead of losing data.
struct RejectedRow {
    long row_number = 0;  // 1-based data row (header excluded)
    std::string reason;
    std::string detail;
};

// Logical-field to column-name mapping for trip files.  Defaults follow the
// Bluebikes public export.  When trip_id_column is empty a synthetic id
// "r<row>" is assigned.
struct TripSchema {
    std::string start_time = "starttime";
    std::string end_time = "stoptime";
    std::string start_station_id = "start station id";
    std::string start_lat = "start station latitude";
    std::string start_lon = "start station longitude";
    std::string end_station_id = "end station id";
    std::string end_lat = "end station latitude";
    std::string end_lon = "end station longitude";
    std::string user_type = "usertype";
    std::string trip_id_column;  // optional
};

struct HolidayCalendar {
    std::set<std::int64_t> days;

    bool contains(Timestamp ts) const { return days.count(day_index(ts)) > 0; }
};

template <typename T>
struct ParseResult {
    std::vector<T> records;
    std::vector<RejectedRow> rejected;
    long data_rows = 0;  // records.size() + rejected.size(), for conservation checks
};

/// Parses a delimited trip file.  Malformed rows are returned as rejects,
/// never dropped.  Throws Error{data} for a missing mandatory column or an
/// empty file.
ParseResult<TripRecord> parse_trips(std::istream& in, const TripSchema& schema = {});

/// Parses hourly weather (time, temp, prcp, wspd, coco).  Output is sorted
/// by hour_start; a duplicate hour is fatal.
ParseResult<WeatherHour> parse_weather(std::istream& in);

/// Parses a GTFS stops file (stop_id, stop_lat, stop_lon; other columns
/// ignored).
ParseResult<geo::TransitStop> parse_stops(std::istream& in);

/// Parses a FeatureCollection of Polygon/MultiPolygon features carrying a
/// "name" property.  Ids are assigned by accepted-feature order, starting
/// at 0.  Malformed JSON is fatal; per-feature problems reject the feature.
ParseResult<geo::Neighborhood> parse_neighborhoods(std::istream& in);

/// Parses one ISO date per line; blank lines and `#` comments are skipped.
ParseResult<std::int64_t> parse_holidays(std::istream& in);

HolidayCalendar make_calendar(const ParseResult<std::int64_t>& parsed);

}  // namespace dockflow::ingest
