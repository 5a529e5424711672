#include "dockflow/ingest.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>

#include "dockflow/csv.hpp"
#include "dockflow/errors.hpp"

namespace dockflow::ingest {

namespace {

using nlohmann::json;

bool valid_lat(double v) { return v >= -90.0 && v <= 90.0; }
bool valid_lon(double v) { return v >= -180.0 && v <= 180.0; }

struct FieldError {
    std::string reason;
    std::string detail;
};

}  // namespace

ParseResult<TripRecord> parse_trips(std::istream& in, const TripSchema& schema) {
    CsvReader reader(in);
    std::vector<std::string> fields;
    if (!reader.next_row(fields)) throw Error(Errc::data, "trip file is empty");
    HeaderIndex header(fields);

    const std::size_t c_start = header.require(schema.start_time);
    const std::size_t c_end = header.require(schema.end_time);
    const std::size_t c_ssid = header.require(schema.start_station_id);
    const std::size_t c_slat = header.require(schema.start_lat);
    const std::size_t c_slon = header.require(schema.start_lon);
    const std::size_t c_esid = header.require(schema.end_station_id);
    const std::size_t c_elat = header.require(schema.end_lat);
    const std::size_t c_elon = header.require(schema.end_lon);
    const std::size_t c_user = header.require(schema.user_type);
    std::optional<std::size_t> c_id;
    if (!schema.trip_id_column.empty()) c_id = header.require(schema.trip_id_column);

    ParseResult<TripRecord> out;
    long row = 0;
    while (reader.next_row(fields)) {
        ++row;
        ++out.data_rows;
        auto reject = [&](const std::string& reason, const std::string& detail) {
            out.rejected.push_back({row, reason, detail});
        };

        if (fields.size() < header.size()) {
            reject("field_count", "expected " + std::to_string(header.size()) + " fields, got " +
                                      std::to_string(fields.size()));
            continue;
        }

        TripRecord t;
        auto start = parse_timestamp(trim(fields[c_start]));
        auto end = parse_timestamp(trim(fields[c_end]));
        if (!start || !end) {
            reject("bad_timestamp", !start ? fields[c_start] : fields[c_end]);
            continue;
        }
        t.start_time = *start;
        t.end_time = *end;

        t.start_station_id = trim(fields[c_ssid]);
        t.end_station_id = trim(fields[c_esid]);
        if (t.start_station_id.empty() || t.end_station_id.empty()) {
            reject("missing_station", "");
            continue;
        }

        auto slat = parse_double(fields[c_slat]);
        auto slon = parse_double(fields[c_slon]);
        auto elat = parse_double(fields[c_elat]);
        auto elon = parse_double(fields[c_elon]);
        if (!slat || !slon || !elat || !elon) {
            reject("bad_number", "coordinate fields");
            continue;
        }
        if (!valid_lat(*slat) || !valid_lat(*elat) || !valid_lon(*slon) || !valid_lon(*elon)) {
            reject("coordinate_out_of_range", "");
            continue;
        }
        t.start_lat = *slat;
        t.start_lon = *slon;
        t.end_lat = *elat;
        t.end_lon = *elon;

        const std::string user = to_lower(trim(fields[c_user]));
        if (user == "subscriber" || user == "member") {
            t.user_type = UserType::Subscriber;
        } else if (user == "customer" || user == "casual") {
            t.user_type = UserType::Casual;
        } else {
            reject("bad_user_type", fields[c_user]);
            continue;
        }

        if (t.end_time < t.start_time) {
            reject("negative_duration", "");
            continue;
        }
        if (t.end_time == t.start_time) {
            reject("zero_duration", "");
            continue;
        }
        t.duration_s = static_cast<long>(t.end_time - t.start_time);

        t.trip_id = c_id ? trim(fields[*c_id]) : "r" + std::to_string(row);
        out.records.push_back(std::move(t));
    }
    if (out.data_rows == 0) throw Error(Errc::data, "trip file has a header but no data rows");
    return out;
}

ParseResult<WeatherHour> parse_weather(std::istream& in) {
    CsvReader reader(in);
    std::vector<std::string> fields;
    if (!reader.next_row(fields)) throw Error(Errc::data, "weather file is empty");
    HeaderIndex header(fields);
    const std::size_t c_time = header.require("time");
    const std::size_t c_temp = header.require("temp");
    const std::size_t c_prcp = header.require("prcp");
    const std::size_t c_wspd = header.require("wspd");
    const std::size_t c_coco = header.require("coco");

    ParseResult<WeatherHour> out;
    long row = 0;
    while (reader.next_row(fields)) {
        ++row;
        ++out.data_rows;
        auto reject = [&](const std::string& reason, const std::string& detail) {
            out.rejected.push_back({row, reason, detail});
        };
        if (fields.size() < header.size()) {
            reject("field_count", "");
            continue;
        }
        auto ts = parse_timestamp(trim(fields[c_time]));
        if (!ts) {
            reject("bad_timestamp", fields[c_time]);
            continue;
        }
        auto temp = parse_double(fields[c_temp]);
        auto prcp = parse_double(fields[c_prcp]);
        auto wspd = parse_double(fields[c_wspd]);
        auto coco = parse_long(fields[c_coco]);
        if (!temp || !prcp || !wspd || !coco) {
            reject("bad_number", "");
            continue;
        }
        if (*prcp < 0 || *wspd < 0 || *coco < 0) {
            reject("negative_value", "");
            continue;
        }
        out.records.push_back(
            {floor_hour(*ts), *temp, *prcp, *wspd, static_cast<int>(*coco)});
    }
    std::stable_sort(out.records.begin(), out.records.end(),
                     [](const WeatherHour& a, const WeatherHour& b) {
                         return a.hour_start < b.hour_start;
                     });
    for (std::size_t i = 1; i < out.records.size(); ++i) {
        if (out.records[i].hour_start == out.records[i - 1].hour_start) {
            throw Error(Errc::data, "duplicate weather hour " +
                                        format_timestamp(out.records[i].hour_start));
        }
    }
    return out;
}

ParseResult<geo::TransitStop> parse_stops(std::istream& in) {
    CsvReader reader(in);
    std::vector<std::string> fields;
    if (!reader.next_row(fields)) throw Error(Errc::data, "stops file is empty");
    HeaderIndex header(fields);
    const std::size_t c_id = header.require("stop_id");
    const std::size_t c_lat = header.require("stop_lat");
    const std::size_t c_lon = header.require("stop_lon");

    ParseResult<geo::TransitStop> out;
    long row = 0;
    while (reader.next_row(fields)) {
        ++row;
        ++out.data_rows;
        if (fields.size() < header.size()) {
            out.rejected.push_back({row, "field_count", ""});
            continue;
        }
        auto lat = parse_double(fields[c_lat]);
        auto lon = parse_double(fields[c_lon]);
        if (!lat || !lon) {
            out.rejected.push_back({row, "bad_number", ""});
            continue;
        }
        if (!valid_lat(*lat) || !valid_lon(*lon)) {
            out.rejected.push_back({row, "coordinate_out_of_range", ""});
            continue;
        }
        out.records.push_back({trim(fields[c_id]), *lat, *lon});
    }
    return out;
}

namespace {

// Converts one GeoJSON polygon coordinate array into rings; returns an error
// description instead of a partial polygon.
std::optional<FieldError> read_rings(const json& coords, geo::PolygonPart& part) {
    if (!coords.is_array() || coords.empty()) return FieldError{"bad_geometry", "empty polygon"};
    for (const json& ring_json : coords) {
        if (!ring_json.is_array() || ring_json.size() < 4)
            return FieldError{"bad_ring", "ring with fewer than 4 points"};
        std::vector<geo::LonLat> ring;
        ring.reserve(ring_json.size());
        for (const json& pt : ring_json) {
            if (!pt.is_array() || pt.size() < 2 || !pt[0].is_number() || !pt[1].is_number())
                return FieldError{"bad_ring", "non-numeric coordinate"};
            ring.push_back({pt[0].get<double>(), pt[1].get<double>()});
        }
        if (ring.front().lon != ring.back().lon || ring.front().lat != ring.back().lat)
            return FieldError{"bad_ring", "ring not closed"};
        part.rings.push_back(std::move(ring));
    }
    return std::nullopt;
}

}  // namespace

ParseResult<geo::Neighborhood> parse_neighborhoods(std::istream& in) {
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(Errc::data, std::string("neighborhood file is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" ||
        !doc.contains("features") || !doc["features"].is_array()) {
        throw Error(Errc::data, "neighborhood file is not a FeatureCollection");
    }

    ParseResult<geo::Neighborhood> out;
    int next_id = 0;
    long row = 0;
    for (const json& feature : doc["features"]) {
        ++row;
        ++out.data_rows;
        auto reject = [&](const FieldError& fe) {
            out.rejected.push_back({row, fe.reason, fe.detail});
        };

        if (!feature.is_object() || !feature.contains("geometry") ||
            !feature["geometry"].is_object()) {
            reject({"bad_feature", "missing geometry"});
            continue;
        }
        const json& geom = feature["geometry"];
        const std::string type = geom.value("type", "");
        if (type != "Polygon" && type != "MultiPolygon") {
            reject({"bad_geometry", "unsupported type " + type});
            continue;
        }
        std::string name;
        if (feature.contains("properties") && feature["properties"].is_object()) {
            name = feature["properties"].value("name", "");
        }
        if (name.empty()) {
            reject({"missing_name", ""});
            continue;
        }
        if (!geom.contains("coordinates")) {
            reject({"bad_geometry", "missing coordinates"});
            continue;
        }

        geo::Neighborhood nb;
        nb.name = name;
        std::optional<FieldError> err;
        if (type == "Polygon") {
            geo::PolygonPart part;
            err = read_rings(geom["coordinates"], part);
            if (!err) nb.parts.push_back(std::move(part));
        } else {
            for (const json& poly : geom["coordinates"]) {
                geo::PolygonPart part;
                err = read_rings(poly, part);
                if (err) break;
                nb.parts.push_back(std::move(part));
            }
        }
        if (err) {
            reject(*err);
            continue;
        }
        nb.id = next_id++;
        out.records.push_back(std::move(nb));
    }
    return out;
}

ParseResult<std::int64_t> parse_holidays(std::istream& in) {
    ParseResult<std::int64_t> out;
    std::string line;
    long row = 0;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        ++row;
        ++out.data_rows;
        auto day = parse_date(t);
        if (!day) {
            out.rejected.push_back({row, "bad_date", t});
            continue;
        }
        out.records.push_back(*day);
    }
    return out;
}

HolidayCalendar make_calendar(const ParseResult<std::int64_t>& parsed) {
    HolidayCalendar cal;
    cal.days.insert(parsed.records.begin(), parsed.records.end());
    return cal;
}

}  // namespace dockflow::ingest
