#include "dockflow/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <tuple>

#include "dockflow/csv.hpp"
#include "dockflow/errors.hpp"

namespace dockflow::feat {

namespace {

// Most recent weather row at or before `hour`; the first row when `hour`
// predates all observations.  `weather` must be sorted and non-empty.
const ingest::WeatherHour& weather_at(std::span<const ingest::WeatherHour> weather,
                                      Timestamp hour) {
    auto it = std::upper_bound(weather.begin(), weather.end(), hour,
                               [](Timestamp h, const ingest::WeatherHour& w) {
                                   return h < w.hour_start;
                               });
    if (it == weather.begin()) return weather.front();
    return *(it - 1);
}

}  // namespace

AggregateResult aggregate_station_hours(std::span<const ingest::TripRecord> trips,
                                        std::span<const ingest::WeatherHour> weather,
                                        std::span<const geo::TransitStop> stops,
                                        std::span<const geo::Neighborhood> neighborhoods,
                                        const ingest::HolidayCalendar& holidays) {
    if (weather.empty()) throw Error(Errc::data, "cannot aggregate without weather rows");
    std::vector<ingest::WeatherHour> wx(weather.begin(), weather.end());
    std::stable_sort(wx.begin(), wx.end(),
                     [](const ingest::WeatherHour& a, const ingest::WeatherHour& b) {
                         return a.hour_start < b.hour_start;
                     });

    AggregateResult out;

    // Station registry: first trip mentioning a station pins its coordinates.
    std::map<std::string, StationInfo> registry;
    auto register_station = [&](const std::string& id, double lat, double lon,
                                const std::string& trip_id) {
        auto [it, inserted] = registry.try_emplace(id, StationInfo{id, lat, lon, 0, 0});
        if (inserted) return;
        const double d_m = geo::haversine_km(it->second.lat, it->second.lon, lat, lon) * 1000.0;
        if (d_m > 50.0) out.warnings.push_back({id, trip_id, lat, lon, d_m});
    };
    for (const ingest::TripRecord& t : trips) {
        register_station(t.start_station_id, t.start_lat, t.start_lon, t.trip_id);
        register_station(t.end_station_id, t.end_lat, t.end_lon, t.trip_id);
    }
    for (auto& [id, info] : registry) {
        info.nearby_stops = geo::nearby_stop_count(stops, info.lat, info.lon);
        info.neighborhood_id = geo::locate_neighborhood(neighborhoods, info.lat, info.lon);
    }

    // Cell accumulation in file order; the map key yields the final row order
    // (station, hour, Incoming before Outgoing).
    using CellKey = std::tuple<std::string, Timestamp, int>;
    std::map<CellKey, std::vector<TripStats>> cells;
    for (const ingest::TripRecord& t : trips) {
        TripStats s;
        s.distance_km = geo::haversine_km(t.start_lat, t.start_lon, t.end_lat, t.end_lon);
        s.duration_min = t.duration_s / 60.0;
        s.speed_kmh = std::min(s.distance_km / (t.duration_s / 3600.0), kSpeedCapKmh);
        s.subscriber = t.user_type == ingest::UserType::Subscriber;
        cells[{t.start_station_id, floor_hour(t.start_time),
               static_cast<int>(Direction::Outgoing)}].push_back(s);
        cells[{t.end_station_id, floor_hour(t.end_time),
               static_cast<int>(Direction::Incoming)}].push_back(s);
    }

    for (auto& [key, stats] : cells) {
        const auto& [station_id, hour_ts, dir_code] = key;
        StationHourRow row;
        row.station_id = station_id;
        row.hour_start = hour_ts;
        row.direction = static_cast<Direction>(dir_code);
        row.traffic_load = static_cast<int>(stats.size());

        double sum_d = 0, sum_t = 0, sum_v = 0;
        int subs = 0;
        for (const TripStats& s : stats) {
            sum_d += s.distance_km;
            sum_t += s.duration_min;
            sum_v += s.speed_kmh;
            subs += s.subscriber ? 1 : 0;
        }
        const double n = static_cast<double>(stats.size());
        row.avg_distance_km = sum_d / n;
        row.avg_duration_min = sum_t / n;
        row.avg_speed_kmh = sum_v / n;
        row.subscriber_ratio = subs / n;

        row.hour = hour_of_day(hour_ts);
        row.day_of_month = day_of_month(hour_ts);
        row.weekday = dockflow::weekday(hour_ts);
        row.is_holiday = holidays.contains(hour_ts) ? 1 : 0;

        const ingest::WeatherHour& w = weather_at(wx, hour_ts);
        row.avg_temp = w.temp;
        row.avg_precip = w.precip;
        row.avg_wind = w.wind_speed;
        row.coco = w.coco;

        const StationInfo& info = registry.at(station_id);
        row.nearby_transit_stops = info.nearby_stops;
        row.neighborhood_id = info.neighborhood_id;

        out.rows.push_back(std::move(row));
        out.cell_trips.push_back(std::move(stats));
    }

    out.stations.reserve(registry.size());
    for (auto& [id, info] : registry) out.stations.push_back(info);
    return out;
}

FeatureMatrix encode_features(std::vector<StationHourRow> rows) {
    if (rows.empty()) throw Error(Errc::data, "cannot encode an empty row list");
    FeatureMatrix m;
    m.numeric.cols = kFeatureColumns.size();
    m.numeric.column_names.assign(kFeatureColumns.begin(), kFeatureColumns.end());
    m.numeric.values.reserve(rows.size() * kFeatureColumns.size());
    for (const StationHourRow& r : rows) {
        const double vals[16] = {
            static_cast<double>(r.traffic_load),
            static_cast<double>(static_cast<int>(r.direction)),
            r.avg_distance_km,
            r.avg_duration_min,
            r.avg_speed_kmh,
            r.subscriber_ratio,
            static_cast<double>(r.hour),
            static_cast<double>(r.day_of_month),
            static_cast<double>(r.weekday),
            static_cast<double>(r.is_holiday),
            r.avg_temp,
            r.avg_precip,
            r.avg_wind,
            static_cast<double>(r.coco),
            static_cast<double>(r.nearby_transit_stops),
            static_cast<double>(r.neighborhood_id),
        };
        for (double v : vals) {
            if (!std::isfinite(v)) throw Error(Errc::data, "non-finite value in feature encoding");
            m.numeric.values.push_back(v);
        }
    }
    m.rows = std::move(rows);
    return m;
}

StationHourRow decode_numeric_row(const NumericMatrix& m, std::size_t r) {
    StationHourRow row;
    row.traffic_load = static_cast<int>(m.at(r, 0));
    row.direction = m.at(r, 1) == 0.0 ? Direction::Incoming : Direction::Outgoing;
    row.avg_distance_km = m.at(r, 2);
    row.avg_duration_min = m.at(r, 3);
    row.avg_speed_kmh = m.at(r, 4);
    row.subscriber_ratio = m.at(r, 5);
    row.hour = static_cast<int>(m.at(r, 6));
    row.day_of_month = static_cast<int>(m.at(r, 7));
    row.weekday = static_cast<int>(m.at(r, 8));
    row.is_holiday = static_cast<int>(m.at(r, 9));
    row.avg_temp = m.at(r, 10);
    row.avg_precip = m.at(r, 11);
    row.avg_wind = m.at(r, 12);
    row.coco = static_cast<int>(m.at(r, 13));
    row.nearby_transit_stops = static_cast<int>(m.at(r, 14));
    row.neighborhood_id = static_cast<int>(m.at(r, 15));
    return row;
}

NumericMatrix trip_feature_matrix(std::span<const ingest::TripRecord> trips) {
    if (trips.empty()) throw Error(Errc::data, "cannot build a trip matrix from zero trips");
    NumericMatrix m;
    m.cols = 3;
    m.column_names = {"duration_min", "distance_km", "speed_kmh"};
    m.values.reserve(trips.size() * 3);
    for (const ingest::TripRecord& t : trips) {
        const double dist = geo::haversine_km(t.start_lat, t.start_lon, t.end_lat, t.end_lon);
        const double dur_min = t.duration_s / 60.0;
        const double speed = std::min(dist / (t.duration_s / 3600.0), kSpeedCapKmh);
        m.values.push_back(dur_min);
        m.values.push_back(dist);
        m.values.push_back(speed);
    }
    return m;
}

void write_station_hours_csv(std::ostream& out, std::span<const StationHourRow> rows) {
    out << "station_id,hour_start,direction,traffic_load,avg_distance_km,avg_duration_min,"
           "avg_speed_kmh,subscriber_ratio,hour,day_of_month,weekday,is_holiday,avg_temp,"
           "avg_precip,avg_wind,coco,nearby_transit_stops,neighborhood_id\n";
    for (const StationHourRow& r : rows) {
        out << csv_escape(r.station_id) << ',' << format_timestamp(r.hour_start) << ','
            << direction_label(r.direction) << ',' << r.traffic_load << ','
            << fmt6(r.avg_distance_km) << ',' << fmt6(r.avg_duration_min) << ','
            << fmt6(r.avg_speed_kmh) << ',' << fmt6(r.subscriber_ratio) << ',' << r.hour << ','
            << r.day_of_month << ',' << r.weekday << ',' << r.is_holiday << ','
            << fmt6(r.avg_temp) << ',' << fmt6(r.avg_precip) << ',' << fmt6(r.avg_wind) << ','
            << r.coco << ',' << r.nearby_transit_stops << ',' << r.neighborhood_id << '\n';
    }
}

void write_matrix_csv(std::ostream& out, const NumericMatrix& m) {
    for (std::size_t c = 0; c < m.column_names.size(); ++c) {
        if (c) out << ',';
        out << m.column_names[c];
    }
    out << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols; ++c) {
            if (c) out << ',';
            out << fmt6(m.at(r, c));
        }
        out << '\n';
    }
}

void write_stations_csv(std::ostream& out, std::span<const StationInfo> stations) {
    out << "station_id,lat,lon,nearby_transit_stops,neighborhood_id\n";
    for (const StationInfo& s : stations) {
        out << csv_escape(s.station_id) << ',' << fmt6(s.lat) << ',' << fmt6(s.lon) << ','
            << s.nearby_stops << ',' << s.neighborhood_id << '\n';
    }
}

namespace {

// Little-endian fixed-width binary primitives for the inter-stage bundle.
void put_u64(std::ostream& out, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>(v >> (8 * i));
    out.write(buf, 8);
}

void put_i64(std::ostream& out, std::int64_t v) { put_u64(out, static_cast<std::uint64_t>(v)); }

void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

void put_str(std::ostream& out, const std::string& s) {
    put_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    if (!in) throw Error(Errc::data, "truncated binary artifact");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

std::int64_t get_i64(std::istream& in) { return static_cast<std::int64_t>(get_u64(in)); }

double get_f64(std::istream& in) {
    std::uint64_t bits = get_u64(in);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

std::string get_str(std::istream& in) {
    std::uint64_t n = get_u64(in);
    if (n > (1u << 20)) throw Error(Errc::data, "implausible string length in binary artifact");
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw Error(Errc::data, "truncated binary artifact");
    return s;
}

constexpr char kBundleMagic[8] = {'D', 'F', 'F', 'E', 'A', 'T', '0', '1'};
constexpr char kMatrixMagic[8] = {'D', 'F', 'M', 'A', 'T', 'R', '0', '1'};

}  // namespace

void write_feature_bundle(std::ostream& out, const FeatureMatrix& m,
                          std::span<const StationInfo> stations) {
    out.write(kBundleMagic, 8);
    put_u64(out, m.rows.size());
    for (const StationHourRow& r : m.rows) {
        put_str(out, r.station_id);
        put_i64(out, r.hour_start);
        put_i64(out, static_cast<int>(r.direction));
        put_i64(out, r.traffic_load);
        put_f64(out, r.avg_distance_km);
        put_f64(out, r.avg_duration_min);
        put_f64(out, r.avg_speed_kmh);
        put_f64(out, r.subscriber_ratio);
        put_i64(out, r.hour);
        put_i64(out, r.day_of_month);
        put_i64(out, r.weekday);
        put_i64(out, r.is_holiday);
        put_f64(out, r.avg_temp);
        put_f64(out, r.avg_precip);
        put_f64(out, r.avg_wind);
        put_i64(out, r.coco);
        put_i64(out, r.nearby_transit_stops);
        put_i64(out, r.neighborhood_id);
    }
    put_u64(out, stations.size());
    for (const StationInfo& s : stations) {
        put_str(out, s.station_id);
        put_f64(out, s.lat);
        put_f64(out, s.lon);
        put_i64(out, s.nearby_stops);
        put_i64(out, s.neighborhood_id);
    }
}

FeatureBundle read_feature_bundle(std::istream& in) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kBundleMagic, 8) != 0)
        throw Error(Errc::data, "not a feature bundle");
    const std::uint64_t n = get_u64(in);
    std::vector<StationHourRow> rows;
    rows.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        StationHourRow r;
        r.station_id = get_str(in);
        r.hour_start = get_i64(in);
        r.direction = static_cast<Direction>(get_i64(in));
        r.traffic_load = static_cast<int>(get_i64(in));
        r.avg_distance_km = get_f64(in);
        r.avg_duration_min = get_f64(in);
        r.avg_speed_kmh = get_f64(in);
        r.subscriber_ratio = get_f64(in);
        r.hour = static_cast<int>(get_i64(in));
        r.day_of_month = static_cast<int>(get_i64(in));
        r.weekday = static_cast<int>(get_i64(in));
        r.is_holiday = static_cast<int>(get_i64(in));
        r.avg_temp = get_f64(in);
        r.avg_precip = get_f64(in);
        r.avg_wind = get_f64(in);
        r.coco = static_cast<int>(get_i64(in));
        r.nearby_transit_stops = static_cast<int>(get_i64(in));
        r.neighborhood_id = static_cast<int>(get_i64(in));
        rows.push_back(std::move(r));
    }
    FeatureBundle bundle;
    const std::uint64_t ns = get_u64(in);
    bundle.stations.reserve(ns);
    for (std::uint64_t i = 0; i < ns; ++i) {
        StationInfo s;
        s.station_id = get_str(in);
        s.lat = get_f64(in);
        s.lon = get_f64(in);
        s.nearby_stops = static_cast<int>(get_i64(in));
        s.neighborhood_id = static_cast<int>(get_i64(in));
        bundle.stations.push_back(std::move(s));
    }
    bundle.matrix = encode_features(std::move(rows));
    return bundle;
}

void write_matrix_bin(std::ostream& out, const NumericMatrix& m) {
    out.write(kMatrixMagic, 8);
    put_u64(out, m.rows());
    put_u64(out, m.cols);
    for (const std::string& name : m.column_names) put_str(out, name);
    for (double v : m.values) put_f64(out, v);
}

NumericMatrix read_matrix_bin(std::istream& in) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMatrixMagic, 8) != 0)
        throw Error(Errc::data, "not a matrix artifact");
    NumericMatrix m;
    const std::uint64_t rows = get_u64(in);
    m.cols = get_u64(in);
    m.column_names.reserve(m.cols);
    for (std::size_t c = 0; c < m.cols; ++c) m.column_names.push_back(get_str(in));
    m.values.reserve(rows * m.cols);
    for (std::uint64_t i = 0; i < rows * m.cols; ++i) m.values.push_back(get_f64(in));
    return m;
}

}  // namespace dockflow::feat
