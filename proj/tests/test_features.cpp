#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dockflow/errors.hpp"
#include "dockflow/features.hpp"
#include "dockflow/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>

using namespace dockflow;
using namespace dockflow::feat;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

struct FixtureData {
    ingest::ParseResult<ingest::TripRecord> trips;
    ingest::ParseResult<ingest::WeatherHour> weather;
    ingest::ParseResult<geo::TransitStop> stops;
    ingest::ParseResult<geo::Neighborhood> neighborhoods;
    ingest::HolidayCalendar calendar;
};

FixtureData load_fixture() {
    const std::string dir = DOCKFLOW_FIXTURE_DIR;
    FixtureData d;
    {
        std::ifstream in(dir + "/trips_20.csv");
        REQUIRE(in.good());
        d.trips = ingest::parse_trips(in);
    }
    {
        std::ifstream in(dir + "/weather_jan.csv");
        REQUIRE(in.good());
        d.weather = ingest::parse_weather(in);
    }
    {
        std::ifstream in(dir + "/stops.txt");
        REQUIRE(in.good());
        d.stops = ingest::parse_stops(in);
    }
    {
        std::ifstream in(dir + "/neighborhoods.geojson");
        REQUIRE(in.good());
        d.neighborhoods = ingest::parse_neighborhoods(in);
    }
    {
        std::ifstream in(dir + "/holidays.txt");
        REQUIRE(in.good());
        d.calendar = ingest::make_calendar(ingest::parse_holidays(in));
    }
    return d;
}

AggregateResult aggregate_fixture(const FixtureData& d) {
    return aggregate_station_hours(d.trips.records, d.weather.records, d.stops.records,
                                   d.neighborhoods.records, d.calendar);
}

}  // namespace

TEST_CASE("fixture aggregation reproduces the golden station-hour table") {
    const FixtureData d = load_fixture();
    const AggregateResult agg = aggregate_fixture(d);
    std::ostringstream out;
    write_station_hours_csv(out, agg.rows);
    CHECK(out.str() == slurp(std::string(DOCKFLOW_FIXTURE_DIR) + "/golden/station_hours.csv"));
}

TEST_CASE("fixture encoding reproduces the golden numeric matrix") {
    const FixtureData d = load_fixture();
    const AggregateResult agg = aggregate_fixture(d);
    const FeatureMatrix fm = encode_features(agg.rows);
    std::ostringstream out;
    write_matrix_csv(out, fm.numeric);
    CHECK(out.str() == slurp(std::string(DOCKFLOW_FIXTURE_DIR) + "/golden/feature_matrix.csv"));
}

TEST_CASE("every accepted trip lands in exactly one cell per direction") {
    const FixtureData d = load_fixture();
    const AggregateResult agg = aggregate_fixture(d);
    long out_load = 0, in_load = 0;
    for (const auto& row : agg.rows) {
        if (row.direction == Direction::Outgoing) out_load += row.traffic_load;
        else in_load += row.traffic_load;
    }
    CHECK(out_load == long(d.trips.records.size()));
    CHECK(in_load == long(d.trips.records.size()));

    // The retained per-cell trips match the loads.
    REQUIRE(agg.cell_trips.size() == agg.rows.size());
    for (std::size_t i = 0; i < agg.rows.size(); ++i) {
        CHECK(long(agg.cell_trips[i].size()) == agg.rows[i].traffic_load);
    }
}

TEST_CASE("cell averages sit between the per-trip extremes") {
    const FixtureData d = load_fixture();
    const AggregateResult agg = aggregate_fixture(d);
    for (std::size_t i = 0; i < agg.rows.size(); ++i) {
        const auto& row = agg.rows[i];
        const auto& trips = agg.cell_trips[i];
        REQUIRE_FALSE(trips.empty());
        double lo_d = trips[0].distance_km, hi_d = lo_d;
        double lo_m = trips[0].duration_min, hi_m = lo_m;
        double lo_s = trips[0].speed_kmh, hi_s = lo_s;
        int subs = 0;
        for (const auto& t : trips) {
            lo_d = std::min(lo_d, t.distance_km);
            hi_d = std::max(hi_d, t.distance_km);
            lo_m = std::min(lo_m, t.duration_min);
            hi_m = std::max(hi_m, t.duration_min);
            lo_s = std::min(lo_s, t.speed_kmh);
            hi_s = std::max(hi_s, t.speed_kmh);
            subs += t.subscriber ? 1 : 0;
            CHECK(t.speed_kmh <= kSpeedCapKmh);
        }
        CHECK(row.avg_distance_km >= lo_d - 1e-12);
        CHECK(row.avg_distance_km <= hi_d + 1e-12);
        CHECK(row.avg_duration_min >= lo_m - 1e-12);
        CHECK(row.avg_duration_min <= hi_m + 1e-12);
        CHECK(row.avg_speed_kmh >= lo_s - 1e-12);
        CHECK(row.avg_speed_kmh <= hi_s + 1e-12);
        CHECK(row.subscriber_ratio == doctest::Approx(double(subs) / double(trips.size())));
    }
}

TEST_CASE("aggregation output is sorted and rerun-deterministic") {
    const FixtureData d = load_fixture();
    const AggregateResult a = aggregate_fixture(d);
    const AggregateResult b = aggregate_fixture(d);
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].station_id == b.rows[i].station_id);
        CHECK(a.rows[i].hour_start == b.rows[i].hour_start);
        CHECK(a.rows[i].direction == b.rows[i].direction);
        CHECK(a.rows[i].avg_speed_kmh == b.rows[i].avg_speed_kmh);
    }
    for (std::size_t i = 1; i < a.rows.size(); ++i) {
        const auto& p = a.rows[i - 1];
        const auto& q = a.rows[i];
        const auto key = [](const StationHourRow& r) {
            return std::make_tuple(r.station_id, r.hour_start, int(r.direction));
        };
        CHECK(key(p) < key(q));
    }
}

TEST_CASE("weather joins by forward fill with back fill before the first hour") {
    std::vector<ingest::TripRecord> trips;
    ingest::TripRecord t;
    t.trip_id = "t1";
    t.start_time = make_timestamp(2023, 1, 5, 6, 0, 0);   // before first weather row
    t.end_time = make_timestamp(2023, 1, 5, 9, 30, 0);    // between 08:00 and 17:00 rows
    t.duration_s = long(t.end_time - t.start_time);
    t.start_station_id = "X";
    t.end_station_id = "Y";
    t.start_lat = 42.0;
    t.start_lon = -71.0;
    t.end_lat = 42.01;
    t.end_lon = -71.01;
    t.user_type = ingest::UserType::Subscriber;
    trips.push_back(t);

    std::vector<ingest::WeatherHour> weather = {
        {make_timestamp(2023, 1, 5, 8, 0, 0), 4.0, 1.5, 20.0, 7},
        {make_timestamp(2023, 1, 5, 17, 0, 0), 6.0, 0.0, 8.0, 3},
    };
    ingest::HolidayCalendar cal;
    const auto agg = aggregate_station_hours(trips, weather, {}, {}, cal);
    REQUIRE(agg.rows.size() == 2);
    // Outgoing cell at 06:00 back-fills from the 08:00 observation.
    const auto& out_row = agg.rows[0].direction == Direction::Outgoing ? agg.rows[0] : agg.rows[1];
    const auto& in_row = agg.rows[0].direction == Direction::Outgoing ? agg.rows[1] : agg.rows[0];
    CHECK(out_row.avg_temp == doctest::Approx(4.0));
    CHECK(out_row.coco == 7);
    // Incoming cell at 09:00 forward-fills from 08:00 (17:00 lies ahead).
    CHECK(in_row.avg_temp == doctest::Approx(4.0));
    CHECK(in_row.avg_wind == doctest::Approx(20.0));
}

TEST_CASE("the golden table proves forward fill at the 18:00 gap") {
    const FixtureData d = load_fixture();
    const AggregateResult agg = aggregate_fixture(d);
    // C at 18:00 Incoming: no 18:00 weather row exists; 17:00 values carry over.
    const auto it = std::find_if(agg.rows.begin(), agg.rows.end(), [](const StationHourRow& r) {
        return r.station_id == "C" && r.hour == 18 && r.direction == Direction::Incoming;
    });
    REQUIRE(it != agg.rows.end());
    CHECK(it->avg_temp == doctest::Approx(6.0));
    CHECK(it->avg_wind == doctest::Approx(8.0));
    CHECK(it->coco == 3);
}

TEST_CASE("per-trip speed is capped before averaging") {
    std::vector<ingest::TripRecord> trips;
    ingest::TripRecord t;
    t.trip_id = "fast";
    t.start_time = make_timestamp(2023, 1, 5, 8, 0, 0);
    t.end_time = t.start_time + 60;  // one minute
    t.duration_s = 60;
    t.start_station_id = "X";
    t.end_station_id = "Y";
    t.start_lat = 42.0;
    t.start_lon = -71.0;
    t.end_lat = 42.5;  // ~55 km away in one minute
    t.end_lon = -71.0;
    t.user_type = ingest::UserType::Casual;
    trips.push_back(t);
    std::vector<ingest::WeatherHour> weather = {
        {make_timestamp(2023, 1, 5, 8, 0, 0), 4.0, 0.0, 10.0, 1}};
    ingest::HolidayCalendar cal;
    const auto agg = aggregate_station_hours(trips, weather, {}, {}, cal);
    for (const auto& row : agg.rows) {
        CHECK(row.avg_speed_kmh == doctest::Approx(kSpeedCapKmh));
    }

    const NumericMatrix tm = trip_feature_matrix(trips);
    REQUIRE(tm.rows() == 1);
    REQUIRE(tm.cols == 3);
    CHECK(tm.at(0, 2) == doctest::Approx(kSpeedCapKmh));
}

TEST_CASE("station registry keeps first coordinates and flags far conflicts") {
    auto make_trip = [](const char* id, double slat) {
        ingest::TripRecord t;
        t.trip_id = id;
        t.start_time = make_timestamp(2023, 1, 5, 8, 0, 0);
        t.end_time = t.start_time + 600;
        t.duration_s = 600;
        t.start_station_id = "X";
        t.end_station_id = "Y";
        t.start_lat = slat;
        t.start_lon = -71.0;
        t.end_lat = 42.1;
        t.end_lon = -71.1;
        t.user_type = ingest::UserType::Subscriber;
        return t;
    };
    std::vector<ingest::WeatherHour> weather = {
        {make_timestamp(2023, 1, 5, 8, 0, 0), 4.0, 0.0, 10.0, 1}};
    ingest::HolidayCalendar cal;

    // 30 m apart: registered silently.
    std::vector<ingest::TripRecord> close = {make_trip("a", 42.0), make_trip("b", 42.00027)};
    const auto agg_close = aggregate_station_hours(close, weather, {}, {}, cal);
    CHECK(agg_close.warnings.empty());
    const auto x_close = std::find_if(agg_close.stations.begin(), agg_close.stations.end(),
                                      [](const StationInfo& s) { return s.station_id == "X"; });
    REQUIRE(x_close != agg_close.stations.end());
    CHECK(x_close->lat == doctest::Approx(42.0));  // first mention wins

    // 111 m apart: flagged.
    std::vector<ingest::TripRecord> far = {make_trip("a", 42.0), make_trip("b", 42.001)};
    const auto agg_far = aggregate_station_hours(far, weather, {}, {}, cal);
    REQUIRE(agg_far.warnings.size() == 1);
    CHECK(agg_far.warnings[0].station_id == "X");
    CHECK(agg_far.warnings[0].trip_id == "b");
    CHECK(agg_far.warnings[0].distance_m > 50.0);
    const auto x_far = std::find_if(agg_far.stations.begin(), agg_far.stations.end(),
                                    [](const StationInfo& s) { return s.station_id == "X"; });
    REQUIRE(x_far != agg_far.stations.end());
    CHECK(x_far->lat == doctest::Approx(42.0));
}

TEST_CASE("aggregation requires weather data") {
    std::vector<ingest::TripRecord> trips;
    ingest::TripRecord t;
    t.trip_id = "t";
    t.start_time = make_timestamp(2023, 1, 5, 8, 0, 0);
    t.end_time = t.start_time + 600;
    t.duration_s = 600;
    t.start_station_id = "X";
    t.end_station_id = "Y";
    t.start_lat = 42.0;
    t.start_lon = -71.0;
    t.end_lat = 42.1;
    t.end_lon = -71.1;
    trips.push_back(t);
    ingest::HolidayCalendar cal;
    try {
        aggregate_station_hours(trips, {}, {}, {}, cal);
        FAIL("expected a thrown Error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::data);
    }
}

TEST_CASE("numeric encoding round-trips every integer field exactly") {
    const FixtureData d = load_fixture();
    const AggregateResult agg = aggregate_fixture(d);
    const FeatureMatrix fm = encode_features(agg.rows);
    REQUIRE(fm.numeric.rows() == agg.rows.size());
    REQUIRE(fm.numeric.cols == kFeatureColumns.size());
    REQUIRE(fm.numeric.column_names.size() == kFeatureColumns.size());
    for (std::size_t c = 0; c < kFeatureColumns.size(); ++c) {
        CHECK(fm.numeric.column_names[c] == kFeatureColumns[c]);
    }
    for (std::size_t r = 0; r < fm.numeric.rows(); ++r) {
        const StationHourRow back = decode_numeric_row(fm.numeric, r);
        const StationHourRow& orig = fm.rows[r];
        CHECK(back.traffic_load == orig.traffic_load);
        CHECK(back.direction == orig.direction);
        CHECK(back.avg_distance_km == orig.avg_distance_km);
        CHECK(back.avg_duration_min == orig.avg_duration_min);
        CHECK(back.avg_speed_kmh == orig.avg_speed_kmh);
        CHECK(back.subscriber_ratio == orig.subscriber_ratio);
        CHECK(back.hour == orig.hour);
        CHECK(back.day_of_month == orig.day_of_month);
        CHECK(back.weekday == orig.weekday);
        CHECK(back.is_holiday == orig.is_holiday);
        CHECK(back.avg_temp == orig.avg_temp);
        CHECK(back.avg_precip == orig.avg_precip);
        CHECK(back.avg_wind == orig.avg_wind);
        CHECK(back.coco == orig.coco);
        CHECK(back.nearby_transit_stops == orig.nearby_transit_stops);
        CHECK(back.neighborhood_id == orig.neighborhood_id);
    }
}

TEST_CASE("encoding rejects empty and non-finite input") {
    CHECK_THROWS_AS(encode_features({}), Error);
    StationHourRow row;
    row.station_id = "X";
    row.avg_speed_kmh = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(encode_features({row}), Error);
}

TEST_CASE("feature bundle round-trips bit-exactly through the binary form") {
    const FixtureData d = load_fixture();
    const AggregateResult agg = aggregate_fixture(d);
    const FeatureMatrix fm = encode_features(agg.rows);

    std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
    write_feature_bundle(buf, fm, agg.stations);
    const FeatureBundle back = read_feature_bundle(buf);

    REQUIRE(back.matrix.rows.size() == fm.rows.size());
    REQUIRE(back.matrix.numeric.values.size() == fm.numeric.values.size());
    for (std::size_t i = 0; i < fm.numeric.values.size(); ++i) {
        CHECK(back.matrix.numeric.values[i] == fm.numeric.values[i]);
    }
    for (std::size_t i = 0; i < fm.rows.size(); ++i) {
        CHECK(back.matrix.rows[i].station_id == fm.rows[i].station_id);
        CHECK(back.matrix.rows[i].hour_start == fm.rows[i].hour_start);
        CHECK(back.matrix.rows[i].direction == fm.rows[i].direction);
    }
    REQUIRE(back.stations.size() == agg.stations.size());
    for (std::size_t i = 0; i < agg.stations.size(); ++i) {
        CHECK(back.stations[i].station_id == agg.stations[i].station_id);
        CHECK(back.stations[i].lat == agg.stations[i].lat);
        CHECK(back.stations[i].lon == agg.stations[i].lon);
        CHECK(back.stations[i].nearby_stops == agg.stations[i].nearby_stops);
        CHECK(back.stations[i].neighborhood_id == agg.stations[i].neighborhood_id);
    }

    // Writing again produces identical bytes.
    std::ostringstream again;
    write_feature_bundle(again, fm, agg.stations);
    std::ostringstream first;
    write_feature_bundle(first, fm, agg.stations);
    CHECK(first.str() == again.str());
}

TEST_CASE("numeric matrix binary form round-trips and rejects corruption") {
    NumericMatrix m;
    m.cols = 3;
    m.column_names = {"a", "b", "c"};
    const std::vector<double> r1 = {1.5, -2.25, 1e-300};
    const std::vector<double> r2 = {0.0, 4.0, 5.0};
    m.push_row(r1);
    m.push_row(r2);

    std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
    write_matrix_bin(buf, m);
    const NumericMatrix back = read_matrix_bin(buf);
    CHECK(back.cols == m.cols);
    CHECK(back.column_names == m.column_names);
    REQUIRE(back.values.size() == m.values.size());
    for (std::size_t i = 0; i < m.values.size(); ++i) CHECK(back.values[i] == m.values[i]);

    // Wrong magic.
    std::istringstream junk("NOTMAGIC................");
    CHECK_THROWS_AS(read_matrix_bin(junk), Error);

    // Truncated payload.
    std::ostringstream full(std::ios::out | std::ios::binary);
    write_matrix_bin(full, m);
    const std::string bytes = full.str();
    std::istringstream cut(bytes.substr(0, bytes.size() - 7), std::ios::in | std::ios::binary);
    CHECK_THROWS_AS(read_matrix_bin(cut), Error);
}

TEST_CASE("stations csv lists the fixture stations with derived context") {
    const FixtureData d = load_fixture();
    const AggregateResult agg = aggregate_fixture(d);
    REQUIRE(agg.stations.size() == 3);
    CHECK(agg.stations[0].station_id == "A");
    CHECK(agg.stations[0].nearby_stops == 2);
    CHECK(agg.stations[0].neighborhood_id == 0);
    CHECK(agg.stations[1].station_id == "B");
    CHECK(agg.stations[1].nearby_stops == 1);
    CHECK(agg.stations[1].neighborhood_id == 1);
    CHECK(agg.stations[2].station_id == "C");
    CHECK(agg.stations[2].nearby_stops == 0);
    CHECK(agg.stations[2].neighborhood_id == 1);

    std::ostringstream out;
    write_stations_csv(out, agg.stations);
    const std::string text = out.str();
    CHECK(text.find("station_id") != std::string::npos);
    CHECK(text.find("A,") != std::string::npos);
    std::ostringstream out2;
    write_stations_csv(out2, agg.stations);
    CHECK(out.str() == out2.str());
}
