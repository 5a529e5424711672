// dockflow: station-hour anomaly detection for bike-share trip logs.
//
// Pipeline stages persist artifacts under the output directory so each
// command can run (and re-run, byte-identically) on its own:
//   ingest -> featurize -> detect -> explain / report
// plus `synth` (generate a labeled benchmark dataset) and `bench`
// (end-to-end quality metrics and explanation timing).

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <span>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dockflow/csv.hpp"
#include "dockflow/diffi.hpp"
#include "dockflow/errors.hpp"
#include "dockflow/features.hpp"
#include "dockflow/ingest.hpp"
#include "dockflow/isolation_forest.hpp"
#include "dockflow/manifest.hpp"
#include "dockflow/matrix.hpp"
#include "dockflow/reports.hpp"
#include "dockflow/synth.hpp"
#include "dockflow/time.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dockflow;

namespace {

bool log_enabled() {
    const char* v = std::getenv("DOCKFLOW_LOG");
    return v != nullptr && *v != '\0' && std::string(v) != "0";
}

void log_info(const std::string& msg) {
    if (log_enabled()) std::cerr << "[dockflow] " << msg << "\n";
}

// Exact-round-trip double formatting for stage artifacts.
std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct RunConfig {
    std::string trips, weather, stops, neighborhoods, holidays;
    std::string out = "out";
    std::uint64_t seed = 42;
    int trees = 100;
    int subsample = 256;
    std::optional<double> contamination;
    std::string predicate;                        // explain
    bool explain_global = false;                  // explain
    std::vector<std::string> report_predicates;  // report; default {"all"}
    std::size_t top_k = 20;                       // report
    json synth = json::object();                  // synth / bench
    std::size_t bench_repetitions = 3;
};

RunConfig load_config(const std::optional<std::string>& path) {
    RunConfig cfg;
    if (!path) return cfg;
    json doc;
    try {
        doc = json::parse(artifact::read_file(*path));
    } catch (const json::exception& e) {
        throw Error(Errc::usage, "config file " + *path + " is not valid JSON: " + e.what());
    }
    if (!doc.is_object()) throw Error(Errc::usage, "config file must hold a JSON object");
    try {
        cfg.trips = doc.value("trips", cfg.trips);
        cfg.weather = doc.value("weather", cfg.weather);
        cfg.stops = doc.value("stops", cfg.stops);
        cfg.neighborhoods = doc.value("neighborhoods", cfg.neighborhoods);
        cfg.holidays = doc.value("holidays", cfg.holidays);
        cfg.out = doc.value("out", cfg.out);
        cfg.seed = doc.value("seed", cfg.seed);
        cfg.trees = doc.value("trees", cfg.trees);
        cfg.subsample = doc.value("subsample", cfg.subsample);
        if (doc.contains("contamination") && !doc["contamination"].is_null())
            cfg.contamination = doc["contamination"].get<double>();
        cfg.predicate = doc.value("predicate", cfg.predicate);
        cfg.explain_global = doc.value("explain_global", cfg.explain_global);
        if (doc.contains("report_predicates"))
            cfg.report_predicates = doc["report_predicates"].get<std::vector<std::string>>();
        cfg.top_k = doc.value("top_k", cfg.top_k);
        if (doc.contains("synth")) cfg.synth = doc["synth"];
        cfg.bench_repetitions = doc.value("bench_repetitions", cfg.bench_repetitions);
    } catch (const json::exception& e) {
        throw Error(Errc::usage, std::string("bad config value: ") + e.what());
    }
    return cfg;
}

std::string read_artifact(const fs::path& path, const std::string& hint) {
    try {
        return artifact::read_file(path);
    } catch (const Error&) {
        throw Error(Errc::missing_artifact,
                    "missing artifact " + path.string() + " (" + hint + ")");
    }
}

void write_rejects_csv(std::ostream& out, std::span<const ingest::RejectedRow> rejects) {
    out << "row_number,reason,detail\n";
    for (const ingest::RejectedRow& r : rejects) {
        out << r.row_number << ',' << csv_escape(r.reason) << ',' << csv_escape(r.detail) << '\n';
    }
}

// ---- canonical stage-artifact forms ------------------------------------

const ingest::TripSchema kCanonicalTripSchema = [] {
    ingest::TripSchema s;
    s.trip_id_column = "tripid";
    return s;
}();

std::string canonical_trips_csv(std::span<const ingest::TripRecord> trips) {
    std::ostringstream out;
    out << "tripid,starttime,stoptime,start station id,start station latitude,"
           "start station longitude,end station id,end station latitude,"
           "end station longitude,usertype\n";
    for (const ingest::TripRecord& t : trips) {
        out << csv_escape(t.trip_id) << ',' << format_timestamp(t.start_time) << ','
            << format_timestamp(t.end_time) << ',' << csv_escape(t.start_station_id) << ','
            << fmt_g17(t.start_lat) << ',' << fmt_g17(t.start_lon) << ','
            << csv_escape(t.end_station_id) << ',' << fmt_g17(t.end_lat) << ','
            << fmt_g17(t.end_lon) << ','
            << (t.user_type == ingest::UserType::Subscriber ? "Subscriber" : "Customer") << '\n';
    }
    return out.str();
}

std::string canonical_weather_csv(std::span<const ingest::WeatherHour> weather) {
    std::ostringstream out;
    out << "time,temp,prcp,wspd,coco\n";
    for (const ingest::WeatherHour& w : weather) {
        out << format_timestamp(w.hour_start) << ',' << fmt_g17(w.temp) << ','
            << fmt_g17(w.precip) << ',' << fmt_g17(w.wind_speed) << ',' << w.coco << '\n';
    }
    return out.str();
}

std::string canonical_stops_csv(std::span<const geo::TransitStop> stops) {
    std::ostringstream out;
    out << "stop_id,stop_lat,stop_lon\n";
    for (const geo::TransitStop& s : stops) {
        out << csv_escape(s.stop_id) << ',' << fmt_g17(s.lat) << ',' << fmt_g17(s.lon) << '\n';
    }
    return out.str();
}

std::string canonical_neighborhoods_json(std::span<const geo::Neighborhood> hoods) {
    json features = json::array();
    for (const geo::Neighborhood& n : hoods) {
        json coords = json::array();
        for (const geo::PolygonPart& part : n.parts) {
            json rings = json::array();
            for (const auto& ring : part.rings) {
                json pts = json::array();
                for (const geo::LonLat& p : ring) pts.push_back(json::array({p.lon, p.lat}));
                rings.push_back(std::move(pts));
            }
            coords.push_back(std::move(rings));
        }
        features.push_back(json{{"type", "Feature"},
                                {"properties", {{"name", n.name}}},
                                {"geometry",
                                 {{"type", "MultiPolygon"}, {"coordinates", std::move(coords)}}}});
    }
    return json{{"type", "FeatureCollection"}, {"features", std::move(features)}}.dump(1) + "\n";
}

std::string canonical_holidays_txt(std::span<const std::int64_t> days) {
    std::ostringstream out;
    out << "# holiday calendar\n";
    for (std::int64_t d : days) out << format_date(d) << '\n';
    return out.str();
}

// ---- station-hour row <-> JSON (for anomalies.json) ---------------------

json row_to_json(const feat::StationHourRow& r) {
    return json{{"station_id", r.station_id},
                {"hour_start", format_timestamp(r.hour_start)},
                {"direction", feat::direction_label(r.direction)},
                {"traffic_load", r.traffic_load},
                {"avg_distance_km", r.avg_distance_km},
                {"avg_duration_min", r.avg_duration_min},
                {"avg_speed_kmh", r.avg_speed_kmh},
                {"subscriber_ratio", r.subscriber_ratio},
                {"hour", r.hour},
                {"day_of_month", r.day_of_month},
                {"weekday", r.weekday},
                {"is_holiday", r.is_holiday},
                {"avg_temp", r.avg_temp},
                {"avg_precip", r.avg_precip},
                {"avg_wind", r.avg_wind},
                {"coco", r.coco},
                {"nearby_transit_stops", r.nearby_transit_stops},
                {"neighborhood_id", r.neighborhood_id}};
}

feat::StationHourRow row_from_json(const json& j) {
    feat::StationHourRow r;
    r.station_id = j.at("station_id").get<std::string>();
    auto ts = parse_timestamp(j.at("hour_start").get<std::string>());
    if (!ts) throw Error(Errc::data, "bad hour_start in anomaly record");
    r.hour_start = *ts;
    r.direction = j.at("direction").get<std::string>() == "in" ? feat::Direction::Incoming
                                                               : feat::Direction::Outgoing;
    r.traffic_load = j.at("traffic_load").get<int>();
    r.avg_distance_km = j.at("avg_distance_km").get<double>();
    r.avg_duration_min = j.at("avg_duration_min").get<double>();
    r.avg_speed_kmh = j.at("avg_speed_kmh").get<double>();
    r.subscriber_ratio = j.at("subscriber_ratio").get<double>();
    r.hour = j.at("hour").get<int>();
    r.day_of_month = j.at("day_of_month").get<int>();
    r.weekday = j.at("weekday").get<int>();
    r.is_holiday = j.at("is_holiday").get<int>();
    r.avg_temp = j.at("avg_temp").get<double>();
    r.avg_precip = j.at("avg_precip").get<double>();
    r.avg_wind = j.at("avg_wind").get<double>();
    r.coco = j.at("coco").get<int>();
    r.nearby_transit_stops = j.at("nearby_transit_stops").get<int>();
    r.neighborhood_id = j.at("neighborhood_id").get<int>();
    return r;
}

json anomalies_to_json(const report::DetectResult& result,
                       std::span<const std::string> columns) {
    json records = json::array();
    for (const report::AnomalyRecord& a : result.anomalies) {
        records.push_back(json{{"row_index", a.row_index},
                               {"score", a.score},
                               {"threshold", a.threshold},
                               {"row", row_to_json(a.row)},
                               {"local", diffi::importance_to_json(a.local, columns)}});
    }
    return json{{"contamination", result.contamination},
                {"contamination_source", result.contamination_source},
                {"threshold", result.threshold},
                {"warnings", result.warnings},
                {"anomalies", std::move(records)}};
}

struct LoadedAnomalies {
    double contamination = 0;
    std::string contamination_source;
    double threshold = 0;
    std::vector<report::AnomalyRecord> records;
};

LoadedAnomalies anomalies_from_json(const json& doc) {
    LoadedAnomalies out;
    try {
        out.contamination = doc.at("contamination").get<double>();
        out.contamination_source = doc.at("contamination_source").get<std::string>();
        out.threshold = doc.at("threshold").get<double>();
        for (const json& j : doc.at("anomalies")) {
            report::AnomalyRecord a;
            a.row_index = j.at("row_index").get<std::size_t>();
            a.score = j.at("score").get<double>();
            a.threshold = j.at("threshold").get<double>();
            a.row = row_from_json(j.at("row"));
            a.local = diffi::importance_from_json(j.at("local"));
            out.records.push_back(std::move(a));
        }
    } catch (const json::exception& e) {
        throw Error(Errc::data, std::string("corrupt anomalies artifact: ") + e.what());
    }
    return out;
}

json parse_artifact_json(const std::string& bytes, const fs::path& path) {
    try {
        return json::parse(bytes);
    } catch (const json::exception& e) {
        throw Error(Errc::data, "corrupt artifact " + path.string() + ": " + e.what());
    }
}

// ---- commands -----------------------------------------------------------

int cmd_ingest(const RunConfig& cfg) {
    if (cfg.trips.empty() || cfg.weather.empty())
        throw Error(Errc::usage, "ingest requires --trips and --weather (or config keys)");

    const fs::path dir = fs::path(cfg.out) / "ingest";
    artifact::LockFile lock(dir);
    artifact::Manifest manifest;
    manifest.command = "ingest";

    const std::string trips_bytes = artifact::read_file(cfg.trips);
    const std::string weather_bytes = artifact::read_file(cfg.weather);
    manifest.add_input("trips", trips_bytes);
    manifest.add_input("weather", weather_bytes);

    std::istringstream trips_in(trips_bytes);
    auto trips = ingest::parse_trips(trips_in);
    std::istringstream weather_in(weather_bytes);
    auto weather = ingest::parse_weather(weather_in);

    ingest::ParseResult<geo::TransitStop> stops;
    if (!cfg.stops.empty()) {
        const std::string bytes = artifact::read_file(cfg.stops);
        manifest.add_input("stops", bytes);
        std::istringstream in(bytes);
        stops = ingest::parse_stops(in);
    }
    ingest::ParseResult<geo::Neighborhood> hoods;
    if (!cfg.neighborhoods.empty()) {
        const std::string bytes = artifact::read_file(cfg.neighborhoods);
        manifest.add_input("neighborhoods", bytes);
        std::istringstream in(bytes);
        hoods = ingest::parse_neighborhoods(in);
    }
    ingest::ParseResult<std::int64_t> holidays;
    if (!cfg.holidays.empty()) {
        const std::string bytes = artifact::read_file(cfg.holidays);
        manifest.add_input("holidays", bytes);
        std::istringstream in(bytes);
        holidays = ingest::parse_holidays(in);
    }

    auto emit = [&](const char* name, const std::string& bytes) {
        artifact::write_file(dir / name, bytes);
        manifest.add_output(name, bytes);
    };
    emit("trips.csv", canonical_trips_csv(trips.records));
    emit("weather.csv", canonical_weather_csv(weather.records));
    emit("stops.csv", canonical_stops_csv(stops.records));
    emit("neighborhoods.json", canonical_neighborhoods_json(hoods.records));
    emit("holidays.txt", canonical_holidays_txt(holidays.records));

    auto emit_rejects = [&](const char* name, std::span<const ingest::RejectedRow> rejects) {
        std::ostringstream out;
        write_rejects_csv(out, rejects);
        emit(name, out.str());
    };
    emit_rejects("rejects_trips.csv", trips.rejected);
    emit_rejects("rejects_weather.csv", weather.rejected);
    emit_rejects("rejects_stops.csv", stops.rejected);
    emit_rejects("rejects_neighborhoods.csv", hoods.rejected);
    emit_rejects("rejects_holidays.csv", holidays.rejected);

    manifest.params = json{{"trips_path", cfg.trips},
                           {"weather_path", cfg.weather},
                           {"stops_path", cfg.stops},
                           {"neighborhoods_path", cfg.neighborhoods},
                           {"holidays_path", cfg.holidays}};
    manifest.write(dir);

    std::cout << "ingest: " << trips.records.size() << " trips (" << trips.rejected.size()
              << " rejected), " << weather.records.size() << " weather hours ("
              << weather.rejected.size() << " rejected), " << stops.records.size() << " stops, "
              << hoods.records.size() << " neighborhoods, " << holidays.records.size()
              << " holidays -> " << dir.string() << "\n";
    return 0;
}

int cmd_featurize(const RunConfig& cfg) {
    const fs::path ingest_dir = fs::path(cfg.out) / "ingest";
    const fs::path dir = fs::path(cfg.out) / "features";
    const std::string hint = "run `dockflow ingest` first";

    const std::string trips_bytes = read_artifact(ingest_dir / "trips.csv", hint);
    const std::string weather_bytes = read_artifact(ingest_dir / "weather.csv", hint);
    const std::string stops_bytes = read_artifact(ingest_dir / "stops.csv", hint);
    const std::string hoods_bytes = read_artifact(ingest_dir / "neighborhoods.json", hint);
    const std::string holidays_bytes = read_artifact(ingest_dir / "holidays.txt", hint);

    artifact::LockFile lock(dir);
    artifact::Manifest manifest;
    manifest.command = "featurize";
    manifest.add_input("trips.csv", trips_bytes);
    manifest.add_input("weather.csv", weather_bytes);
    manifest.add_input("stops.csv", stops_bytes);
    manifest.add_input("neighborhoods.json", hoods_bytes);
    manifest.add_input("holidays.txt", holidays_bytes);

    std::istringstream trips_in(trips_bytes), weather_in(weather_bytes), stops_in(stops_bytes),
        hoods_in(hoods_bytes), holidays_in(holidays_bytes);
    auto trips = ingest::parse_trips(trips_in, kCanonicalTripSchema);
    auto weather = ingest::parse_weather(weather_in);
    auto stops = ingest::parse_stops(stops_in);
    auto hoods = ingest::parse_neighborhoods(hoods_in);
    auto holidays = ingest::parse_holidays(holidays_in);
    if (!trips.rejected.empty() || !weather.rejected.empty() || !stops.rejected.empty() ||
        !hoods.rejected.empty() || !holidays.rejected.empty())
        throw Error(Errc::data, "corrupt stage artifacts under " + ingest_dir.string() +
                                    " (canonical files must parse with zero rejects)");

    auto agg = feat::aggregate_station_hours(trips.records, weather.records, stops.records,
                                             hoods.records, ingest::make_calendar(holidays));
    feat::FeatureMatrix matrix = feat::encode_features(agg.rows);
    NumericMatrix trip_matrix = feat::trip_feature_matrix(trips.records);

    auto emit = [&](const char* name, const std::string& bytes) {
        artifact::write_file(dir / name, bytes);
        manifest.add_output(name, bytes);
    };
    {
        std::ostringstream out;
        feat::write_station_hours_csv(out, matrix.rows);
        emit("station_hours.csv", out.str());
    }
    {
        std::ostringstream out;
        feat::write_stations_csv(out, agg.stations);
        emit("stations.csv", out.str());
    }
    {
        std::ostringstream out;
        feat::write_feature_bundle(out, matrix, agg.stations);
        emit("features.bin", out.str());
    }
    {
        std::ostringstream out;
        feat::write_matrix_bin(out, trip_matrix);
        emit("trip_features.bin", out.str());
    }
    {
        std::ostringstream out;
        out << "station_id,trip_id,lat,lon,distance_m\n";
        for (const feat::CoordConflict& w : agg.warnings) {
            out << csv_escape(w.station_id) << ',' << csv_escape(w.trip_id) << ','
                << fmt_g17(w.lat) << ',' << fmt_g17(w.lon) << ',' << fmt_g17(w.distance_m)
                << '\n';
        }
        emit("coordinate_conflicts.csv", out.str());
    }

    manifest.params = json{{"stop_radius_m", geo::kDefaultStopRadiusM}};
    manifest.write(dir);

    std::cout << "featurize: " << matrix.rows.size() << " station-hour rows, "
              << agg.stations.size() << " stations, " << trip_matrix.rows() << " trips, "
              << agg.warnings.size() << " coordinate conflicts -> " << dir.string() << "\n";
    return 0;
}

int cmd_detect(const RunConfig& cfg) {
    const fs::path feat_dir = fs::path(cfg.out) / "features";
    const fs::path dir = fs::path(cfg.out) / "detect";
    const std::string hint = "run `dockflow featurize` first";

    const std::string bundle_bytes = read_artifact(feat_dir / "features.bin", hint);
    const std::string trip_bytes = read_artifact(feat_dir / "trip_features.bin", hint);

    artifact::LockFile lock(dir);
    artifact::Manifest manifest;
    manifest.command = "detect";
    manifest.add_input("features.bin", bundle_bytes);
    manifest.add_input("trip_features.bin", trip_bytes);

    std::istringstream bundle_in(bundle_bytes);
    feat::FeatureBundle bundle = feat::read_feature_bundle(bundle_in);
    std::istringstream trip_in(trip_bytes);
    NumericMatrix trip_matrix = feat::read_matrix_bin(trip_in);

    report::DetectOptions options;
    options.forest.n_trees = cfg.trees;
    options.forest.subsample = cfg.subsample;
    options.forest.seed = cfg.seed;
    options.contamination_override = cfg.contamination;
    report::DetectResult result = report::two_stage_detect(trip_matrix, bundle.matrix, options);
    for (const std::string& w : result.warnings) std::cerr << "warning: " << w << "\n";

    auto emit = [&](const char* name, const std::string& bytes) {
        artifact::write_file(dir / name, bytes);
        manifest.add_output(name, bytes);
    };
    emit("model.json", iforest::model_to_json(result.model).dump(1) + "\n");
    {
        std::ostringstream out;
        out << "row_index,station_id,hour_start,direction,expected_path_length,anomaly_score,"
               "is_anomaly\n";
        for (const iforest::ScoredRow& s : result.scores) {
            const feat::StationHourRow& row = bundle.matrix.rows[s.row_index];
            out << s.row_index << ',' << csv_escape(row.station_id) << ','
                << format_timestamp(row.hour_start) << ',' << feat::direction_label(row.direction)
                << ',' << fmt_g17(s.expected_path_length) << ',' << fmt_g17(s.anomaly_score)
                << ',' << (s.is_anomaly ? 1 : 0) << '\n';
        }
        emit("scores.csv", out.str());
    }
    emit("anomalies.json",
         anomalies_to_json(result, bundle.matrix.numeric.column_names).dump(1) + "\n");

    manifest.params = json{{"n_trees", cfg.trees},
                           {"subsample", cfg.subsample},
                           {"seed", cfg.seed},
                           {"contamination", result.contamination},
                           {"contamination_source", result.contamination_source},
                           {"threshold", result.threshold}};
    manifest.write(dir);

    std::cout << "detect: " << result.anomalies.size() << " of " << result.scores.size()
              << " station-hour rows flagged (contamination " << fmt6(result.contamination)
              << " from " << result.contamination_source << ", threshold "
              << fmt6(result.threshold) << ") -> " << dir.string() << "\n";
    return 0;
}

int cmd_explain(const RunConfig& cfg) {
    const fs::path detect_dir = fs::path(cfg.out) / "detect";
    const fs::path dir = fs::path(cfg.out) / "explain";
    const std::string hint = "run `dockflow detect` first";

    const std::string anomalies_bytes = read_artifact(detect_dir / "anomalies.json", hint);
    LoadedAnomalies loaded =
        anomalies_from_json(parse_artifact_json(anomalies_bytes, detect_dir / "anomalies.json"));

    const report::Predicate predicate =
        report::Predicate::parse(cfg.predicate.empty() ? "all" : cfg.predicate);
    diffi::ImportanceVector subset = report::subset_explain(loaded.records, predicate);

    artifact::LockFile lock(dir);
    artifact::Manifest manifest;
    manifest.command = "explain";
    manifest.add_input("anomalies.json", anomalies_bytes);

    const std::string model_bytes = read_artifact(detect_dir / "model.json", hint);
    iforest::ForestModel model =
        iforest::model_from_json(parse_artifact_json(model_bytes, detect_dir / "model.json"));
    manifest.add_input("model.json", model_bytes);

    std::size_t matched = 0;
    for (const report::AnomalyRecord& a : loaded.records) {
        if (predicate.matches(a.row)) ++matched;
    }
    json doc{{"predicate", predicate.name()},
             {"matched_anomalies", matched},
             {"subset", diffi::importance_to_json(subset, model.column_names)}};
    if (cfg.explain_global) {
        const fs::path feat_dir = fs::path(cfg.out) / "features";
        const std::string bundle_bytes =
            read_artifact(feat_dir / "features.bin", "run `dockflow featurize` first");
        manifest.add_input("features.bin", bundle_bytes);
        std::istringstream bundle_in(bundle_bytes);
        feat::FeatureBundle bundle = feat::read_feature_bundle(bundle_in);
        diffi::ImportanceVector global =
            diffi::global_diffi(model, bundle.matrix.numeric, loaded.threshold);
        doc["global"] = diffi::importance_to_json(global, model.column_names);
    }

    const std::string bytes = doc.dump(1) + "\n";
    artifact::write_file(dir / "explain.json", bytes);
    manifest.add_output("explain.json", bytes);
    manifest.params = json{{"predicate", predicate.name()}, {"global", cfg.explain_global}};
    manifest.write(dir);

    std::cout << "explain: predicate \"" << predicate.name() << "\" -> "
              << (dir / "explain.json").string() << "\n";
    return 0;
}

int cmd_report(const RunConfig& cfg) {
    const fs::path feat_dir = fs::path(cfg.out) / "features";
    const fs::path detect_dir = fs::path(cfg.out) / "detect";
    const fs::path dir = fs::path(cfg.out) / "report";

    const std::string bundle_bytes =
        read_artifact(feat_dir / "features.bin", "run `dockflow featurize` first");
    const std::string anomalies_bytes =
        read_artifact(detect_dir / "anomalies.json", "run `dockflow detect` first");

    artifact::LockFile lock(dir);
    artifact::Manifest manifest;
    manifest.command = "report";
    manifest.add_input("features.bin", bundle_bytes);
    manifest.add_input("anomalies.json", anomalies_bytes);

    std::istringstream bundle_in(bundle_bytes);
    feat::FeatureBundle bundle = feat::read_feature_bundle(bundle_in);
    LoadedAnomalies loaded =
        anomalies_from_json(parse_artifact_json(anomalies_bytes, detect_dir / "anomalies.json"));

    std::vector<std::string> spec_list =
        cfg.report_predicates.empty() ? std::vector<std::string>{"all"} : cfg.report_predicates;
    std::vector<report::Predicate> predicates;
    for (const std::string& text : spec_list) {
        report::Predicate p = report::Predicate::parse(text);
        const bool any = std::any_of(loaded.records.begin(), loaded.records.end(),
                                     [&](const report::AnomalyRecord& a) {
                                         return p.matches(a.row);
                                     });
        if (any) {
            predicates.push_back(std::move(p));
        } else {
            std::cerr << "warning: predicate \"" << p.name()
                      << "\" matches no anomaly; skipping its ranking\n";
        }
    }

    report::ReportBundle rb =
        report::build_report_bundle(bundle.matrix.rows, loaded.records, bundle.stations,
                                    predicates);
    for (const std::string& w : rb.temporal.warnings) std::cerr << "warning: " << w << "\n";

    auto emit = [&](const char* name, const std::string& bytes) {
        artifact::write_file(dir / name, bytes);
        manifest.add_output(name, bytes);
    };
    {
        std::ostringstream out;
        report::write_neighborhood_daily_csv(out, rb.neighborhood_daily);
        emit("neighborhood_daily.csv", out.str());
    }
    {
        std::ostringstream out;
        report::write_station_counts_csv(out, rb.station_counts);
        emit("station_counts.csv", out.str());
    }
    {
        std::ostringstream out;
        report::write_temporal_csv(out, rb.temporal.hourly, "hour");
        emit("temporal_hourly.csv", out.str());
    }
    {
        std::ostringstream out;
        report::write_temporal_csv(out, rb.temporal.weekday, "weekday");
        emit("temporal_weekday.csv", out.str());
    }
    emit("top_stations.geojson", rb.map_export.dump(1) + "\n");

    const fs::path plots = dir / "plots";
    report::render_plots(rb, plots.string(), bundle.matrix.numeric.column_names);
    std::vector<fs::path> plot_files;
    for (const auto& entry : fs::directory_iterator(plots)) {
        if (entry.is_regular_file()) plot_files.push_back(entry.path());
    }
    std::sort(plot_files.begin(), plot_files.end());
    for (const fs::path& p : plot_files) {
        manifest.outputs["plots/" + p.filename().string()] = artifact::hash_file(p);
    }

    json predicate_names = json::array();
    for (const report::Predicate& p : predicates) predicate_names.push_back(p.name());
    manifest.params = json{{"predicates", std::move(predicate_names)}, {"top_k", cfg.top_k}};
    manifest.write(dir);

    std::cout << "report: " << rb.neighborhood_daily.size() << " neighborhood-days, "
              << rb.station_counts.counts.size() << " stations ranked, "
              << rb.subset_rankings.size() << " subset rankings -> " << dir.string() << "\n";
    return 0;
}

synth::SynthConfig synth_config_for(const RunConfig& cfg, bool seed_given) {
    synth::SynthConfig sc = cfg.synth.empty() ? synth::SynthConfig{}
                                              : synth::SynthConfig::from_json(cfg.synth);
    if (seed_given || !cfg.synth.contains("seed")) sc.seed = cfg.seed;
    return sc;
}

int cmd_synth(const RunConfig& cfg, bool seed_given) {
    const fs::path dir = fs::path(cfg.out) / "synth";
    const synth::SynthConfig sc = synth_config_for(cfg, seed_given);
    synth::SynthDataset ds = synth::generate(sc);

    artifact::LockFile lock(dir);
    artifact::Manifest manifest;
    manifest.command = "synth";
    manifest.params = sc.to_json();

    auto emit = [&](const char* name, const std::string& bytes) {
        artifact::write_file(dir / name, bytes);
        manifest.add_output(name, bytes);
    };
    emit("trips.csv", ds.trips_csv);
    emit("weather.csv", ds.weather_csv);
    emit("stops.txt", ds.stops_txt);
    emit("neighborhoods.geojson", ds.neighborhoods_geojson);
    emit("holidays.txt", ds.holidays_txt);
    emit("labels.csv", ds.labels_csv());
    emit("synth_config.json", sc.to_json().dump(1) + "\n");
    manifest.write(dir);

    std::size_t planted = 0;
    for (const synth::CellLabel& l : ds.labels) planted += l.anomalous ? 1 : 0;
    std::cout << "synth: " << ds.labels.size() << " labeled cells (" << planted
              << " planted anomalous), seed " << sc.seed << " -> " << dir.string() << "\n";
    return 0;
}

int cmd_bench(const RunConfig& cfg, bool seed_given) {
    const fs::path dir = fs::path(cfg.out) / "bench";
    const synth::SynthConfig sc = synth_config_for(cfg, seed_given);

    log_info("generating benchmark dataset");
    synth::SynthDataset ds = synth::generate(sc);

    std::istringstream trips_in(ds.trips_csv), weather_in(ds.weather_csv),
        stops_in(ds.stops_txt), hoods_in(ds.neighborhoods_geojson),
        holidays_in(ds.holidays_txt);
    auto trips = ingest::parse_trips(trips_in);
    auto weather = ingest::parse_weather(weather_in);
    auto stops = ingest::parse_stops(stops_in);
    auto hoods = ingest::parse_neighborhoods(hoods_in);
    auto holidays = ingest::parse_holidays(holidays_in);
    if (!trips.rejected.empty() || !weather.rejected.empty() || !stops.rejected.empty() ||
        !hoods.rejected.empty() || !holidays.rejected.empty())
        throw Error(Errc::data, "generated dataset failed to round-trip without rejects");

    log_info("running the pipeline");
    auto agg = feat::aggregate_station_hours(trips.records, weather.records, stops.records,
                                             hoods.records, ingest::make_calendar(holidays));
    feat::FeatureMatrix matrix = feat::encode_features(agg.rows);
    NumericMatrix trip_matrix = feat::trip_feature_matrix(trips.records);

    report::DetectOptions options;
    options.forest.n_trees = cfg.trees;
    options.forest.subsample = cfg.subsample;
    options.forest.seed = cfg.seed;
    options.contamination_override = cfg.contamination;
    report::DetectResult result = report::two_stage_detect(trip_matrix, matrix, options);

    synth::EvalMetrics metrics = synth::evaluate(ds.labels, matrix, result);

    log_info("timing local importance");
    synth::TimingReport timing =
        synth::benchmark_local_diffi(result.model, matrix.numeric, cfg.bench_repetitions);

    artifact::LockFile lock(dir);
    artifact::Manifest manifest;
    manifest.command = "bench";
    manifest.add_input("synth_config", sc.to_json().dump());

    const std::string metrics_bytes = synth::metrics_to_json(metrics).dump(1) + "\n";
    artifact::write_file(dir / "metrics.json", metrics_bytes);
    manifest.add_output("metrics.json", metrics_bytes);

    // Wall-clock output: written but deliberately left out of the hashed
    // output set so re-runs stay manifest-identical.
    artifact::write_file(dir / "timing.json", synth::timing_to_json(timing).dump(1) + "\n");

    manifest.params = json{{"n_trees", cfg.trees},
                           {"subsample", cfg.subsample},
                           {"seed", cfg.seed},
                           {"repetitions", cfg.bench_repetitions},
                           {"unhashed_outputs", json::array({"timing.json"})}};
    manifest.write(dir);

    std::cout << "bench: auroc " << fmt6(metrics.auroc) << ", precision "
              << fmt6(metrics.precision) << ", recall " << fmt6(metrics.recall) << ", top1 "
              << fmt6(metrics.top1_hit_rate) << ", top2 " << fmt6(metrics.top2_hit_rate)
              << " (" << metrics.planted << "/" << metrics.rows << " planted)\n";
    std::cout << "bench: local importance mean " << fmt6(timing.mean_s * 1000.0) << " ms, p95 "
              << fmt6(timing.p95_s * 1000.0) << " ms over " << timing.samples << " samples -> "
              << dir.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dockflow: station-hour anomaly detection for bike-share trip logs"};
    app.require_subcommand(1);
    app.fallthrough();

    std::optional<std::string> config_path;
    std::optional<std::string> out_flag;
    std::optional<std::uint64_t> seed_flag;
    std::optional<int> trees_flag, subsample_flag;
    std::optional<double> contamination_flag;
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--out", out_flag, "output directory (default: out)");
    app.add_option("--seed", seed_flag, "deterministic RNG seed");
    app.add_option("--trees", trees_flag, "number of trees per forest");
    app.add_option("--subsample", subsample_flag, "per-tree subsample size");
    app.add_option("--contamination", contamination_flag,
                   "contamination override in (0,1); skips stage-1 tuning");

    std::string trips_flag, weather_flag, stops_flag, hoods_flag, holidays_flag;
    CLI::App* ingest_cmd = app.add_subcommand("ingest", "parse source files into stage tables");
    ingest_cmd->add_option("--trips", trips_flag, "trip CSV path");
    ingest_cmd->add_option("--weather", weather_flag, "hourly weather CSV path");
    ingest_cmd->add_option("--stops", stops_flag, "GTFS stops file path");
    ingest_cmd->add_option("--neighborhoods", hoods_flag, "neighborhood GeoJSON path");
    ingest_cmd->add_option("--holidays", holidays_flag, "holiday date list path");

    CLI::App* featurize_cmd =
        app.add_subcommand("featurize", "aggregate trips into the station-hour table");

    CLI::App* detect_cmd =
        app.add_subcommand("detect", "fit the forest and flag anomalous station-hours");

    std::string predicate_flag;
    bool global_flag = false;
    CLI::App* explain_cmd =
        app.add_subcommand("explain", "feature importance for a subset of anomalies");
    explain_cmd->add_option("--predicate", predicate_flag,
                            "conjunctive filter, e.g. \"hour=8,direction=out\" (default: all)");
    explain_cmd->add_flag("--global", global_flag, "also compute the dataset-level ranking");

    std::vector<std::string> report_predicates_flag;
    std::optional<std::size_t> top_k_flag;
    CLI::App* report_cmd = app.add_subcommand("report", "summary tables, map export, and plots");
    report_cmd->add_option("--subset", report_predicates_flag,
                           "predicate for an extra subset ranking (repeatable)");
    report_cmd->add_option("--top-k", top_k_flag, "stations kept in the ranking (default 20)");

    std::optional<std::string> synth_config_flag;
    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a labeled synthetic dataset");
    synth_cmd->add_option("--synth-config", synth_config_flag, "JSON generator config");

    std::optional<std::size_t> repetitions_flag;
    CLI::App* bench_cmd =
        app.add_subcommand("bench", "detection quality and explanation timing on synthetic data");
    bench_cmd->add_option("--synth-config", synth_config_flag, "JSON generator config");
    bench_cmd->add_option("--repetitions", repetitions_flag,
                          "timing passes over the dataset (default 3)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(Errc::usage);
    }

    try {
        RunConfig cfg = load_config(config_path);
        if (out_flag) cfg.out = *out_flag;
        if (seed_flag) cfg.seed = *seed_flag;
        if (trees_flag) cfg.trees = *trees_flag;
        if (subsample_flag) cfg.subsample = *subsample_flag;
        if (contamination_flag) cfg.contamination = *contamination_flag;
        if (!trips_flag.empty()) cfg.trips = trips_flag;
        if (!weather_flag.empty()) cfg.weather = weather_flag;
        if (!stops_flag.empty()) cfg.stops = stops_flag;
        if (!hoods_flag.empty()) cfg.neighborhoods = hoods_flag;
        if (!holidays_flag.empty()) cfg.holidays = holidays_flag;
        if (!predicate_flag.empty()) cfg.predicate = predicate_flag;
        if (global_flag) cfg.explain_global = true;
        if (!report_predicates_flag.empty()) cfg.report_predicates = report_predicates_flag;
        if (top_k_flag) cfg.top_k = *top_k_flag;
        if (repetitions_flag) cfg.bench_repetitions = *repetitions_flag;
        if (synth_config_flag) {
            cfg.synth = json::parse(artifact::read_file(*synth_config_flag));
        }

        if (cfg.trees < 1 || cfg.subsample < 2)
            throw Error(Errc::usage, "--trees must be >= 1 and --subsample >= 2");

        if (ingest_cmd->parsed()) return cmd_ingest(cfg);
        if (featurize_cmd->parsed()) return cmd_featurize(cfg);
        if (detect_cmd->parsed()) return cmd_detect(cfg);
        if (explain_cmd->parsed()) return cmd_explain(cfg);
        if (report_cmd->parsed()) return cmd_report(cfg);
        if (synth_cmd->parsed()) return cmd_synth(cfg, seed_flag.has_value());
        if (bench_cmd->parsed()) return cmd_bench(cfg, seed_flag.has_value());
        throw Error(Errc::usage, "no subcommand given");
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(Errc::generic);
    }
}
