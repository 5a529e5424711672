#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dockflow/errors.hpp"
#include "dockflow/ingest.hpp"

#include <fstream>
#include <sstream>
#include <string>

using namespace dockflow;
using namespace dockflow::ingest;

namespace {

std::ifstream open_fixture(const std::string& name) {
    std::ifstream in(std::string(DOCKFLOW_FIXTURE_DIR) + "/" + name);
    REQUIRE(in.good());
    return in;
}

template <typename T>
void check_conservation(const ParseResult<T>& r) {
    CHECK(long(r.records.size() + r.rejected.size()) == r.data_rows);
}

}  // namespace

TEST_CASE("trip fixture parses with the two known rejects") {
    auto in = open_fixture("trips_20.csv");
    const auto result = parse_trips(in);
    check_conservation(result);
    CHECK(result.data_rows == 20);
    CHECK(result.records.size() == 18);
    REQUIRE(result.rejected.size() == 2);
    CHECK(result.rejected[0].row_number == 11);
    CHECK(result.rejected[0].reason == "negative_duration");
    CHECK(result.rejected[1].row_number == 18);
    CHECK(result.rejected[1].reason == "coordinate_out_of_range");

    const TripRecord& first = result.records.front();
    CHECK(first.trip_id == "r1");
    CHECK(first.start_station_id == "A");
    CHECK(first.end_station_id == "B");
    CHECK(first.duration_s == 18 * 60);
    CHECK(first.duration_s == first.end_time - first.start_time);
    CHECK(first.start_lat == doctest::Approx(42.3601));
    CHECK(first.user_type == UserType::Subscriber);
    for (const auto& t : result.records) CHECK(t.duration_s > 0);
}

TEST_CASE("trip parsing maps user types case-insensitively and rejects unknowns") {
    std::istringstream in(
        "starttime,stoptime,start station id,start station latitude,start station longitude,"
        "end station id,end station latitude,end station longitude,usertype\n"
        "2023-01-02 08:00:00,2023-01-02 08:10:00,A,42.0,-71.0,B,42.1,-71.1,SUBSCRIBER\n"
        "2023-01-02 08:00:00,2023-01-02 08:10:00,A,42.0,-71.0,B,42.1,-71.1,member\n"
        "2023-01-02 08:00:00,2023-01-02 08:10:00,A,42.0,-71.0,B,42.1,-71.1,Customer\n"
        "2023-01-02 08:00:00,2023-01-02 08:10:00,A,42.0,-71.0,B,42.1,-71.1,casual\n"
        "2023-01-02 08:00:00,2023-01-02 08:10:00,A,42.0,-71.0,B,42.1,-71.1,visitor\n");
    const auto result = parse_trips(in);
    check_conservation(result);
    REQUIRE(result.records.size() == 4);
    CHECK(result.records[0].user_type == UserType::Subscriber);
    CHECK(result.records[1].user_type == UserType::Subscriber);
    CHECK(result.records[2].user_type == UserType::Casual);
    CHECK(result.records[3].user_type == UserType::Casual);
    REQUIRE(result.rejected.size() == 1);
    CHECK(result.rejected[0].reason == "bad_user_type");
    CHECK(result.rejected[0].row_number == 5);
}

TEST_CASE("trip row rejects cover each malformed shape") {
    std::istringstream in(
        "starttime,stoptime,start station id,start station latitude,start station longitude,"
        "end station id,end station latitude,end station longitude,usertype\n"
        // wrong field count
        "2023-01-02 08:00:00,2023-01-02 08:10:00,A,42.0\n"
        // unparseable timestamp
        "2023-13-02 08:00:00,2023-01-02 08:10:00,A,42.0,-71.0,B,42.1,-71.1,Subscriber\n"
        // blank station id
        "2023-01-02 08:00:00,2023-01-02 08:10:00, ,42.0,-71.0,B,42.1,-71.1,Subscriber\n"
        // non-numeric coordinate
        "2023-01-02 08:00:00,2023-01-02 08:10:00,A,x,-71.0,B,42.1,-71.1,Subscriber\n"
        // longitude out of range
        "2023-01-02 08:00:00,2023-01-02 08:10:00,A,42.0,-181.0,B,42.1,-71.1,Subscriber\n"
        // end before start
        "2023-01-02 08:10:00,2023-01-02 08:00:00,A,42.0,-71.0,B,42.1,-71.1,Subscriber\n"
        // zero duration
        "2023-01-02 08:00:00,2023-01-02 08:00:00,A,42.0,-71.0,B,42.1,-71.1,Subscriber\n"
        // one good row to prove parsing continues
        "2023-01-02 08:00:00,2023-01-02 08:10:00,A,42.0,-71.0,B,42.1,-71.1,Subscriber\n");
    const auto result = parse_trips(in);
    check_conservation(result);
    CHECK(result.records.size() == 1);
    REQUIRE(result.rejected.size() == 7);
    CHECK(result.rejected[0].reason == "field_count");
    CHECK(result.rejected[1].reason == "bad_timestamp");
    CHECK(result.rejected[2].reason == "missing_station");
    CHECK(result.rejected[3].reason == "bad_number");
    CHECK(result.rejected[4].reason == "coordinate_out_of_range");
    CHECK(result.rejected[5].reason == "negative_duration");
    CHECK(result.rejected[6].reason == "zero_duration");
}

TEST_CASE("trip schema honors a custom trip id column and custom names") {
    TripSchema schema;
    schema.trip_id_column = "ride_id";
    schema.start_time = "began";
    schema.end_time = "ended";
    std::istringstream in(
        "ride_id,began,ended,start station id,start station latitude,start station longitude,"
        "end station id,end station latitude,end station longitude,usertype\n"
        "XYZ,2023-01-02 08:00:00,2023-01-02 08:10:00,A,42.0,-71.0,B,42.1,-71.1,Subscriber\n");
    const auto result = parse_trips(in, schema);
    REQUIRE(result.records.size() == 1);
    CHECK(result.records[0].trip_id == "XYZ");
}

TEST_CASE("trip parsing fails fast on structural problems") {
    std::istringstream empty("");
    CHECK_THROWS_AS(parse_trips(empty), Error);

    std::istringstream header_only(
        "starttime,stoptime,start station id,start station latitude,start station longitude,"
        "end station id,end station latitude,end station longitude,usertype\n");
    try {
        parse_trips(header_only);
        FAIL("expected a thrown Error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::data);
    }

    std::istringstream missing_col("starttime,stoptime\n2023-01-02 08:00:00,2023-01-02 08:10:00\n");
    try {
        parse_trips(missing_col);
        FAIL("expected a thrown Error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::data);
    }
}

TEST_CASE("weather parses sorted with rejects for malformed rows") {
    auto in = open_fixture("weather_jan.csv");
    const auto result = parse_weather(in);
    check_conservation(result);
    REQUIRE(result.records.size() == 4);
    CHECK(result.rejected.empty());
    CHECK(result.records[0].temp == doctest::Approx(-1.0));
    CHECK(result.records[0].coco == 1);
    CHECK(result.records[3].wind_speed == doctest::Approx(8.0));
    for (std::size_t i = 1; i < result.records.size(); ++i) {
        CHECK(result.records[i - 1].hour_start < result.records[i].hour_start);
    }
}

TEST_CASE("weather rows arriving out of order are sorted") {
    std::istringstream in(
        "time,temp,prcp,wspd,coco\n"
        "2023-01-02 09:00:00,1.0,0.0,10.0,1\n"
        "2023-01-02 08:00:00,2.0,0.0,11.0,2\n");
    const auto result = parse_weather(in);
    REQUIRE(result.records.size() == 2);
    CHECK(result.records[0].temp == doctest::Approx(2.0));
    CHECK(result.records[1].temp == doctest::Approx(1.0));
}

TEST_CASE("duplicate weather hours are fatal, negative values reject the row") {
    std::istringstream dup(
        "time,temp,prcp,wspd,coco\n"
        "2023-01-02 08:00:00,1.0,0.0,10.0,1\n"
        "2023-01-02 08:00:00,2.0,0.0,11.0,2\n");
    try {
        parse_weather(dup);
        FAIL("expected a thrown Error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::data);
    }

    std::istringstream neg(
        "time,temp,prcp,wspd,coco\n"
        "2023-01-02 08:00:00,-5.0,0.0,10.0,1\n"
        "2023-01-02 09:00:00,1.0,-0.1,10.0,1\n"
        "2023-01-02 10:00:00,1.0,0.0,-10.0,1\n"
        "2023-01-02 11:00:00,1.0,0.0,10.0,-1\n");
    const auto result = parse_weather(neg);
    check_conservation(result);
    CHECK(result.records.size() == 1);  // negative temperature is legitimate
    REQUIRE(result.rejected.size() == 3);
    for (const auto& r : result.rejected) CHECK(r.reason == "negative_value");
}

TEST_CASE("stops fixture parses all four stops") {
    auto in = open_fixture("stops.txt");
    const auto result = parse_stops(in);
    check_conservation(result);
    REQUIRE(result.records.size() == 4);
    CHECK(result.rejected.empty());
    CHECK(result.records[0].stop_id == "s1");
    CHECK(result.records[0].lat == doctest::Approx(42.3601));
    CHECK(result.records[3].lon == doctest::Approx(-71.1097));
}

TEST_CASE("stop rows with bad coordinates are rejected") {
    std::istringstream in(
        "stop_id,stop_name,stop_lat,stop_lon\n"
        "ok,Fine,42.0,-71.0\n"
        "bad1,NoLat,,-71.0\n"
        "bad2,Junk,abc,-71.0\n"
        "bad3,Range,95.0,-71.0\n");
    const auto result = parse_stops(in);
    check_conservation(result);
    CHECK(result.records.size() == 1);
    CHECK(result.rejected.size() == 3);
}

TEST_CASE("neighborhood fixture yields sequential ids and hole-aware rings") {
    auto in = open_fixture("neighborhoods.geojson");
    const auto result = parse_neighborhoods(in);
    check_conservation(result);
    REQUIRE(result.records.size() == 2);
    CHECK(result.rejected.empty());
    CHECK(result.records[0].id == 0);
    CHECK(result.records[0].name == "Riverside");
    CHECK(result.records[1].id == 1);
    CHECK(result.records[1].name == "Hillcrest");
    REQUIRE(result.records[1].parts.size() == 1);
    CHECK(result.records[1].parts[0].rings.size() == 2);  // outer plus one hole

    // Station A sits in Riverside, B and C in Hillcrest.
    CHECK(geo::locate_neighborhood(result.records, 42.3601, -71.0589) == 0);
    CHECK(geo::locate_neighborhood(result.records, 42.3736, -71.1097) == 1);
    CHECK(geo::locate_neighborhood(result.records, 42.34, -71.10) == 1);
    // Inside Hillcrest's hole.
    CHECK(geo::locate_neighborhood(result.records, 42.337, -71.113) == geo::kNoNeighborhood);
}

TEST_CASE("MultiPolygon features contribute several parts under one id") {
    auto in = open_fixture("neighborhoods_multi.geojson");
    const auto result = parse_neighborhoods(in);
    REQUIRE(result.records.size() == 1);
    CHECK(result.records[0].name == "Twin Isles");
    CHECK(result.records[0].parts.size() == 2);
    CHECK(geo::locate_neighborhood(result.records, 42.205, -71.195) == 0);
    CHECK(geo::locate_neighborhood(result.records, 42.205, -71.165) == 0);
    CHECK(geo::locate_neighborhood(result.records, 42.205, -71.18) == geo::kNoNeighborhood);
}

TEST_CASE("neighborhood parsing is strict about JSON but lenient per feature") {
    std::istringstream broken("{ not json");
    try {
        parse_neighborhoods(broken);
        FAIL("expected a thrown Error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::data);
    }

    // One nameless feature, one unsupported geometry, one unclosed ring,
    // one good feature.  The good one still gets id 0.
    std::istringstream mixed(R"({
      "type": "FeatureCollection",
      "features": [
        {"type": "Feature", "properties": {},
         "geometry": {"type": "Polygon", "coordinates": [[[0,0],[1,0],[1,1],[0,0]]]}},
        {"type": "Feature", "properties": {"name": "Pt"},
         "geometry": {"type": "Point", "coordinates": [0, 0]}},
        {"type": "Feature", "properties": {"name": "Open"},
         "geometry": {"type": "Polygon", "coordinates": [[[0,0],[1,0],[1,1],[0,1]]]}},
        {"type": "Feature", "properties": {"name": "Good"},
         "geometry": {"type": "Polygon", "coordinates": [[[0,0],[1,0],[1,1],[0,1],[0,0]]]}}
      ]})");
    const auto result = parse_neighborhoods(mixed);
    check_conservation(result);
    CHECK(result.data_rows == 4);
    REQUIRE(result.records.size() == 1);
    CHECK(result.records[0].id == 0);
    CHECK(result.records[0].name == "Good");
    REQUIRE(result.rejected.size() == 3);
    CHECK(result.rejected[0].reason == "missing_name");
    CHECK(result.rejected[1].reason == "bad_geometry");
    CHECK(result.rejected[2].reason == "bad_ring");
}

TEST_CASE("holiday fixture skips comments and makes a working calendar") {
    auto in = open_fixture("holidays.txt");
    const auto result = parse_holidays(in);
    check_conservation(result);
    CHECK(result.data_rows == 2);  // the comment line is not a data row
    REQUIRE(result.records.size() == 2);
    CHECK(result.rejected.empty());

    const HolidayCalendar cal = make_calendar(result);
    CHECK(cal.contains(make_timestamp(2023, 1, 2, 8, 0, 0)));
    CHECK(cal.contains(make_timestamp(2023, 1, 16, 23, 59, 59)));
    CHECK_FALSE(cal.contains(make_timestamp(2023, 1, 3, 0, 0, 0)));
}

TEST_CASE("holiday lines that are not dates become rejects") {
    std::istringstream in(
        "# comment\n"
        "\n"
        "2023-01-02\n"
        "not-a-date\n"
        "2023-02-30\n"
        "2023-01-16\n");
    const auto result = parse_holidays(in);
    check_conservation(result);
    CHECK(result.data_rows == 4);
    CHECK(result.records.size() == 2);
    REQUIRE(result.rejected.size() == 2);
    CHECK(result.rejected[0].reason == "bad_date");
    CHECK(result.rejected[1].reason == "bad_date");
}
