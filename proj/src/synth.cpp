#include "dockflow/synth.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dockflow/csv.hpp"
#include "dockflow/diffi.hpp"
#include "dockflow/errors.hpp"

namespace dockflow::synth {

namespace {

using iforest::Rng;

// Demand multiplier per hour of day: commute peaks at 8 and 17.  Kept
// gentle so no single hour's load level is a sparse tail on its own.
constexpr double kProfile[24] = {1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.2, 1.6, 2.0, 1.6, 1.2, 1.2,
                                 1.2, 1.2, 1.2, 1.2, 1.6, 2.0, 1.8, 1.4, 1.2, 1.2, 1.0, 1.0};

// Flat noise with the given standard deviation.  A uniform draw over
// [-sd*sqrt(3), sd*sqrt(3)] has exactly that sd but hard bounds, so the
// noise never manufactures natural outliers in the tails.
double flat_noise(Rng& rng, double sd) {
    return sd * 1.7320508075688772 * (2.0 * rng.uniform01() - 1.0);
}

bool is_weather_feature(const std::string& f) {
    return f == "avg_wind" || f == "avg_temp" || f == "avg_precip";
}

bool is_traffic_feature(const std::string& f) {
    return f == "traffic_load" || f == "avg_duration_min" || f == "subscriber_ratio";
}

std::string station_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "S%02d", i);
    return buf;
}

std::string fmt_coord(double v) { return fmt6(v); }

std::string fmt3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

// "YYYY-MM-DD HH:MM:SS" (trip/weather source format, space separator)
std::string source_timestamp(Timestamp ts) {
    std::string s = format_timestamp(ts);
    s[10] = ' ';
    return s;
}

// Picks exactly k distinct indices out of n, deterministic in rng.
std::vector<std::size_t> pick_k(std::size_t n, std::size_t k, Rng& rng) {
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.uniform_index(n - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

struct PlanTargets {
    // (day, hour) slots labeled by a weather plan, with the plan index
    std::map<std::pair<int, int>, std::size_t> hour_causes;
    // (day, hour, station) outgoing cells labeled by a traffic plan
    std::map<std::tuple<int, int, int>, std::size_t> cell_causes;
};

}  // namespace

SynthConfig SynthConfig::from_json(const nlohmann::json& doc) {
    SynthConfig c;
    c.n_stations = doc.value("n_stations", c.n_stations);
    c.n_days = doc.value("n_days", c.n_days);
    c.first_day_year = doc.value("first_day_year", c.first_day_year);
    c.first_day_month = doc.value("first_day_month", c.first_day_month);
    c.first_day_dom = doc.value("first_day_dom", c.first_day_dom);
    c.first_hour = doc.value("first_hour", c.first_hour);
    c.last_hour = doc.value("last_hour", c.last_hour);
    c.base_demand = doc.value("base_demand", c.base_demand);
    c.demand_noise_sd = doc.value("demand_noise_sd", c.demand_noise_sd);
    c.subscriber_p = doc.value("subscriber_p", c.subscriber_p);
    if (doc.contains("weather")) {
        const nlohmann::json& w = doc["weather"];
        c.weather.temp_mean = w.value("temp_mean", c.weather.temp_mean);
        c.weather.temp_sd = w.value("temp_sd", c.weather.temp_sd);
        c.weather.wind_mean = w.value("wind_mean", c.weather.wind_mean);
        c.weather.wind_sd = w.value("wind_sd", c.weather.wind_sd);
        c.weather.precip_prob = w.value("precip_prob", c.weather.precip_prob);
        c.weather.precip_mean = w.value("precip_mean", c.weather.precip_mean);
    }
    c.seed = doc.value("seed", c.seed);
    if (doc.contains("plan")) {
        c.plan.clear();
        for (const nlohmann::json& pj : doc["plan"]) {
            AnomalyPlan p;
            p.feature = pj.value("feature", p.feature);
            p.shift_sigma = pj.value("shift_sigma", p.shift_sigma);
            p.rate = pj.value("rate", p.rate);
            if (pj.contains("hours_of_day"))
                p.hours_of_day = pj["hours_of_day"].get<std::vector<int>>();
            if (pj.contains("stations")) p.stations = pj["stations"].get<std::vector<int>>();
            c.plan.push_back(std::move(p));
        }
    }
    return c;
}

nlohmann::json SynthConfig::to_json() const {
    nlohmann::json plan_json = nlohmann::json::array();
    for (const AnomalyPlan& p : plan) {
        plan_json.push_back(nlohmann::json{{"feature", p.feature},
                                           {"shift_sigma", p.shift_sigma},
                                           {"rate", p.rate},
                                           {"hours_of_day", p.hours_of_day},
                                           {"stations", p.stations}});
    }
    return nlohmann::json{{"n_stations", n_stations},
                          {"n_days", n_days},
                          {"first_day_year", first_day_year},
                          {"first_day_month", first_day_month},
                          {"first_day_dom", first_day_dom},
                          {"first_hour", first_hour},
                          {"last_hour", last_hour},
                          {"base_demand", base_demand},
                          {"demand_noise_sd", demand_noise_sd},
                          {"subscriber_p", subscriber_p},
                          {"weather",
                           {{"temp_mean", weather.temp_mean},
                            {"temp_sd", weather.temp_sd},
                            {"wind_mean", weather.wind_mean},
                            {"wind_sd", weather.wind_sd},
                            {"precip_prob", weather.precip_prob},
                            {"precip_mean", weather.precip_mean}}},
                          {"plan", std::move(plan_json)},
                          {"seed", seed}};
}

std::string SynthDataset::labels_csv() const {
    std::ostringstream out;
    out << "station_id,hour_start,direction,label,cause_feature\n";
    for (const CellLabel& l : labels) {
        out << l.station_id << ',' << format_timestamp(l.hour_start) << ','
            << feat::direction_label(l.direction) << ','
            << (l.anomalous ? "anomalous" : "normal") << ',' << l.cause_feature << '\n';
    }
    return out.str();
}

std::vector<CellLabel> labels_from_csv(std::istream& in) {
    CsvReader reader(in);
    std::vector<std::string> fields;
    if (!reader.next_row(fields)) throw Error(Errc::data, "label file is empty");
    std::vector<CellLabel> out;
    while (reader.next_row(fields)) {
        if (fields.size() < 5) throw Error(Errc::data, "malformed label row");
        CellLabel l;
        l.station_id = fields[0];
        auto ts = parse_timestamp(fields[1]);
        if (!ts) throw Error(Errc::data, "bad label timestamp: " + fields[1]);
        l.hour_start = *ts;
        l.direction = fields[2] == "in" ? feat::Direction::Incoming : feat::Direction::Outgoing;
        l.anomalous = fields[3] == "anomalous";
        l.cause_feature = fields[4];
        out.push_back(std::move(l));
    }
    return out;
}

SynthDataset generate(const SynthConfig& config) {
    if (config.n_stations < 2) throw Error(Errc::usage, "n_stations must be >= 2");
    if (config.n_days < 1) throw Error(Errc::usage, "n_days must be >= 1");
    if (config.first_hour < 0 || config.last_hour > 23 || config.first_hour > config.last_hour)
        throw Error(Errc::usage, "active hours must satisfy 0 <= first <= last <= 23");
    for (const AnomalyPlan& p : config.plan) {
        if (!is_weather_feature(p.feature) && !is_traffic_feature(p.feature))
            throw Error(Errc::usage,
                        "unsupported planted feature: " + p.feature +
                            " (weather: avg_wind/avg_temp/avg_precip; traffic: "
                            "traffic_load/avg_duration_min/subscriber_ratio)");
        if (p.rate < 0.0 || p.rate >= 1.0)
            throw Error(Errc::usage, "plan rate must be in [0, 1)");
        if (p.shift_sigma <= 0.0) throw Error(Errc::usage, "plan shift must be > 0");
        for (int h : p.hours_of_day) {
            if (h < config.first_hour || h > config.last_hour)
                throw Error(Errc::usage, "plan hour outside the active range");
        }
        for (int s : p.stations) {
            if (s < 0 || s >= config.n_stations)
                throw Error(Errc::usage, "plan station index out of range");
        }
    }

    const int S = config.n_stations;
    const int n_hours = config.last_hour - config.first_hour + 1;
    const std::int64_t day0 =
        days_from_civil(config.first_day_year, config.first_day_month, config.first_day_dom);

    // Stations sit evenly on a ~1.3 km circle.  Every station then sees the
    // same multiset of destination distances, so no station reads as a
    // positional outlier on the distance axis.
    std::vector<double> lat(static_cast<std::size_t>(S)), lon(static_cast<std::size_t>(S));
    for (int i = 0; i < S; ++i) {
        const double a = 2.0 * 3.14159265358979323846 * i / S;
        lat[static_cast<std::size_t>(i)] = 42.312 + 0.012 * std::cos(a);
        lon[static_cast<std::size_t>(i)] = -71.120 + 0.016 * std::sin(a);
    }

    // Hourly weather over the full span (all 24 hours, so the join never
    // needs to fill).
    // Weather is drawn from two-regime mixtures (calm/breezy, cold/mild)
    // with a little within-regime jitter.  The mixture keeps the configured
    // standard deviation honest while bounding every tail, so a planted
    // k-sigma shift opens a clean gap instead of blending into natural
    // extremes.
    Rng weather_rng = Rng::tree_stream(config.seed, 1000000);
    const std::size_t total_hours = static_cast<std::size_t>(config.n_days) * 24;
    std::vector<double> w_temp(total_hours), w_wind(total_hours), w_precip(total_hours);
    auto regime_value = [&](double mean, double sd, double jitter_frac) {
        const double regime = weather_rng.uniform01() < 0.5 ? -1.0 : 1.0;
        const double jitter = jitter_frac * (weather_rng.uniform01() - 0.5);
        return mean + sd * (regime + jitter);
    };
    for (std::size_t i = 0; i < total_hours; ++i) {
        w_temp[i] = regime_value(config.weather.temp_mean, config.weather.temp_sd, 0.4);
        w_wind[i] = std::max(
            0.0, regime_value(config.weather.wind_mean, config.weather.wind_sd, 0.1));
        const double u = weather_rng.uniform01();
        const double u2 = weather_rng.uniform01();
        w_precip[i] = u < config.weather.precip_prob
                          ? config.weather.precip_mean * (0.9 + 0.2 * u2)
                          : 0.0;
    }

    // Plan targets.  Weather plans pick (day, hour) slots; traffic plans
    // pick outgoing cells.  Duration shifts spill the incoming side into
    // the next hour, so they avoid each day's last active hour (the spill
    // then lands in an hour that already has cells).
    PlanTargets targets;
    for (std::size_t pi = 0; pi < config.plan.size(); ++pi) {
        const AnomalyPlan& p = config.plan[pi];
        if (p.rate == 0.0) continue;
        Rng plan_rng = Rng::tree_stream(config.seed, 2000000 + pi);
        auto hour_allowed = [&](int hour) {
            if (p.feature == "avg_duration_min" && hour == config.last_hour) return false;
            if (p.hours_of_day.empty()) return true;
            return std::find(p.hours_of_day.begin(), p.hours_of_day.end(), hour) !=
                   p.hours_of_day.end();
        };
        auto station_allowed = [&](int st) {
            if (p.stations.empty()) return true;
            return std::find(p.stations.begin(), p.stations.end(), st) != p.stations.end();
        };

        if (is_weather_feature(p.feature)) {
            std::vector<std::pair<int, int>> slots;
            for (int day = 0; day < config.n_days; ++day) {
                for (int hour = config.first_hour; hour <= config.last_hour; ++hour) {
                    if (hour_allowed(hour)) slots.emplace_back(day, hour);
                }
            }
            const double expect = p.rate * static_cast<double>(slots.size());
            if (expect < 1.0)
                throw Error(Errc::usage, "infeasible plan: rate x target slots < 1");
            const std::size_t k = static_cast<std::size_t>(std::lround(expect));
            for (std::size_t idx : pick_k(slots.size(), k, plan_rng)) {
                targets.hour_causes[slots[idx]] = pi;
            }
        } else {
            std::vector<std::tuple<int, int, int>> cells;
            for (int day = 0; day < config.n_days; ++day) {
                for (int hour = config.first_hour; hour <= config.last_hour; ++hour) {
                    if (!hour_allowed(hour)) continue;
                    for (int st = 0; st < S; ++st) {
                        if (station_allowed(st)) cells.emplace_back(day, hour, st);
                    }
                }
            }
            const double expect = p.rate * static_cast<double>(cells.size());
            if (expect < 1.0)
                throw Error(Errc::usage, "infeasible plan: rate x target cells < 1");
            const std::size_t k = static_cast<std::size_t>(std::lround(expect));
            for (std::size_t idx : pick_k(cells.size(), k, plan_rng)) {
                targets.cell_causes[cells[idx]] = pi;
            }
        }
    }

    // Apply weather perturbations.
    for (const auto& [slot, pi] : targets.hour_causes) {
        const AnomalyPlan& p = config.plan[pi];
        const std::size_t w = static_cast<std::size_t>(slot.first) * 24 +
                              static_cast<std::size_t>(slot.second);
        if (p.feature == "avg_wind") w_wind[w] += p.shift_sigma * config.weather.wind_sd;
        else if (p.feature == "avg_temp") w_temp[w] += p.shift_sigma * config.weather.temp_sd;
        else w_precip[w] += p.shift_sigma * config.weather.precip_mean;
    }

    // Storms bite: hours with wind past 16 km/h ride slower and draw
    // fewer riders.  Ordinary hours never cross that bar, so the effect
    // leaves them untouched.
    auto storm_severity = [&](int day, int hour) {
        const double w = w_wind[static_cast<std::size_t>(day) * 24 + static_cast<std::size_t>(hour)];
        return w > 16.0 ? 1.0 : 0.0;
    };

    // Baseline outgoing demand per (day, hour, station), after weather so
    // storm hours ride lighter.
    Rng demand_rng = Rng::tree_stream(config.seed, 1000001);
    std::vector<int> demand(static_cast<std::size_t>(config.n_days) * static_cast<std::size_t>(n_hours) *
                            static_cast<std::size_t>(S));
    auto demand_at = [&](int day, int hour, int station) -> int& {
        return demand[(static_cast<std::size_t>(day) * static_cast<std::size_t>(n_hours) +
                       static_cast<std::size_t>(hour - config.first_hour)) *
                          static_cast<std::size_t>(S) +
                      static_cast<std::size_t>(station)];
    };
    for (int day = 0; day < config.n_days; ++day) {
        for (int hour = config.first_hour; hour <= config.last_hour; ++hour) {
            const double keep = 1.0 - 0.05 * storm_severity(day, hour);
            for (int st = 0; st < S; ++st) {
                const double mean = config.base_demand * kProfile[hour];
                const int n = static_cast<int>(std::lround(
                    (mean + flat_noise(demand_rng, config.demand_noise_sd)) * keep));
                demand_at(day, hour, st) = std::max(1, n);
            }
        }
    }

    // Trips.  Destinations alternate between the two ring neighbors, so
    // trip j out of station i targets i+1 (j even) or i-1 (j odd).  The
    // first trip always reaches i+1, which gives every station incoming
    // traffic in every active hour (the cell universe is exactly
    // station x active hour x direction); arrivals average the two
    // neighbors' departures, so incoming loads stay as tight as outgoing;
    // and every trip covers the same neighbor chord, so the distance
    // column never manufactures positional outliers.
    Rng trip_rng = Rng::tree_stream(config.seed, 1000002);
    std::ostringstream trips;
    trips << "starttime,stoptime,start station id,start station latitude,"
             "start station longitude,end station id,end station latitude,"
             "end station longitude,usertype\n";
    // Trip duration follows the pair distance at 13-17 km/h, so per-cell
    // speed and duration averages stay inside a tight band and planted
    // shifts are the only extremes.  ~300 s matches the spread of the
    // resulting duration distribution.
    const double duration_sd_s = 300.0;

    std::set<std::pair<int, Timestamp>> out_cells, in_cells;
    for (int day = 0; day < config.n_days; ++day) {
        for (int hour = config.first_hour; hour <= config.last_hour; ++hour) {
            const Timestamp hour_ts = (day0 + day) * kSecondsPerDay + hour * kSecondsPerHour;
            for (int st = 0; st < S; ++st) {
                int n = demand_at(day, hour, st);
                const AnomalyPlan* cell_plan = nullptr;
                auto it = targets.cell_causes.find({day, hour, st});
                if (it != targets.cell_causes.end()) cell_plan = &config.plan[it->second];

                if (cell_plan && cell_plan->feature == "traffic_load") {
                    n += std::max(1, static_cast<int>(std::lround(cell_plan->shift_sigma *
                                                                  config.demand_noise_sd)));
                }

                for (int j = 0; j < n; ++j) {
                    const int dest = j % 2 == 0 ? (st + 1) % S : (st + S - 1) % S;

                    const Timestamp start = hour_ts +
                                            static_cast<Timestamp>(trip_rng.uniform_index(21)) * 60 +
                                            static_cast<Timestamp>(trip_rng.uniform_index(60));
                    const double dist_km =
                        geo::haversine_km(lat[static_cast<std::size_t>(st)],
                                          lon[static_cast<std::size_t>(st)],
                                          lat[static_cast<std::size_t>(dest)],
                                          lon[static_cast<std::size_t>(dest)]);
                    // Narrow speed band: per-cell speed and duration averages
                    // stay concentrated instead of growing CLT tails.
                    const double ride_kmh =
                        (13.0 + 4.0 * trip_rng.uniform01()) *
                        (1.0 - 0.07 * storm_severity(day, hour));
                    long dur_s = std::clamp(
                        static_cast<long>(std::lround(3600.0 * dist_km / ride_kmh)), 120L, 2280L);
                    if (cell_plan && cell_plan->feature == "avg_duration_min") {
                        dur_s += static_cast<long>(
                            std::lround(cell_plan->shift_sigma * duration_sd_s));
                        // keep the spill inside the next hour
                        const long max_end = static_cast<long>(hour_ts) + 2 * 3600 - 60;
                        dur_s = std::min(dur_s, max_end - static_cast<long>(start));
                    }
                    // Deterministic Bresenham spread: every cell lands within
                    // 1/n of subscriber_p, so the ratio column has no
                    // binomial tail for the forest to chase.
                    bool subscriber =
                        static_cast<long>(std::floor((j + 1) * config.subscriber_p)) !=
                        static_cast<long>(std::floor(j * config.subscriber_p));
                    if (cell_plan && cell_plan->feature == "subscriber_ratio") {
                        subscriber = config.subscriber_p < 0.5;  // flip to the minority type
                    }
                    const Timestamp end = start + dur_s;

                    trips << source_timestamp(start) << ',' << source_timestamp(end) << ','
                          << station_name(st) << ','
                          << fmt_coord(lat[static_cast<std::size_t>(st)]) << ','
                          << fmt_coord(lon[static_cast<std::size_t>(st)]) << ','
                          << station_name(dest) << ','
                          << fmt_coord(lat[static_cast<std::size_t>(dest)]) << ','
                          << fmt_coord(lon[static_cast<std::size_t>(dest)]) << ','
                          << (subscriber ? "Subscriber" : "Customer") << '\n';
                    out_cells.emplace(st, floor_hour(start));
                    in_cells.emplace(dest, floor_hour(end));
                }
            }
        }
    }

    SynthDataset ds;
    ds.trips_csv = trips.str();

    // Labels, in the aggregation's output order (station, hour, direction).
    std::map<std::tuple<std::string, Timestamp, int>, CellLabel> labels;
    auto add_label = [&](int st, Timestamp hour_ts, feat::Direction dir) {
        CellLabel l;
        l.station_id = station_name(st);
        l.hour_start = hour_ts;
        l.direction = dir;
        const int day = static_cast<int>(day_index(hour_ts) - day0);
        const int hour = hour_of_day(hour_ts);
        auto hit = targets.hour_causes.find({day, hour});
        if (hit != targets.hour_causes.end()) {
            l.anomalous = true;
            l.cause_feature = config.plan[hit->second].feature;
        }
        if (dir == feat::Direction::Outgoing) {
            auto cit = targets.cell_causes.find({day, hour, st});
            if (cit != targets.cell_causes.end()) {
                l.anomalous = true;
                l.cause_feature = config.plan[cit->second].feature;
            }
        }
        labels[{l.station_id, hour_ts, static_cast<int>(dir)}] = std::move(l);
    };
    for (const auto& [st, hour_ts] : out_cells) add_label(st, hour_ts, feat::Direction::Outgoing);
    for (const auto& [st, hour_ts] : in_cells) add_label(st, hour_ts, feat::Direction::Incoming);
    ds.labels.reserve(labels.size());
    for (auto& [key, label] : labels) ds.labels.push_back(std::move(label));

    // Weather file.
    std::ostringstream weather;
    weather << "time,temp,prcp,wspd,coco\n";
    for (std::size_t i = 0; i < total_hours; ++i) {
        const Timestamp ts = (day0 + static_cast<std::int64_t>(i / 24)) * kSecondsPerDay +
                             static_cast<Timestamp>(i % 24) * kSecondsPerHour;
        const int coco = w_precip[i] > 0.05 ? 7 : 1;
        weather << source_timestamp(ts) << ',' << fmt3(w_temp[i]) << ',' << fmt3(w_precip[i])
                << ',' << fmt3(w_wind[i]) << ',' << coco << '\n';
    }
    ds.weather_csv = weather.str();

    // Transit stops: one adjacent to every even-indexed station (so the
    // nearby-stop column splits the fleet roughly in half), plus one far
    // away that no station should count.
    std::ostringstream stops;
    stops << "stop_id,stop_name,stop_lat,stop_lon\n";
    for (int i = 0; i < S; i += 2) {
        stops << 't' << (i / 2 + 1) << ",Stop " << (i / 2 + 1) << ','
              << fmt_coord(lat[static_cast<std::size_t>(i)] + 0.001) << ','
              << fmt_coord(lon[static_cast<std::size_t>(i)]) << '\n';
    }
    stops << "t999,Remote Stop,42.500000,-71.500000\n";
    ds.stops_txt = stops.str();

    // Two rectangular neighborhoods splitting the circle by longitude.  The
    // boundary sits east of the circle's center so no station lands on it.
    const double lat_lo = 42.29, lat_hi = 42.34;
    auto rect = [&](double lon0, double lon1) {
        return nlohmann::json::array({nlohmann::json::array(
            {nlohmann::json::array({lon0, lat_lo}), nlohmann::json::array({lon1, lat_lo}),
             nlohmann::json::array({lon1, lat_hi}), nlohmann::json::array({lon0, lat_hi}),
             nlohmann::json::array({lon0, lat_lo})})});
    };
    nlohmann::json fc = {
        {"type", "FeatureCollection"},
        {"features",
         nlohmann::json::array(
             {nlohmann::json{{"type", "Feature"},
                             {"properties", {{"name", "West Ring"}}},
                             {"geometry",
                              {{"type", "Polygon"}, {"coordinates", rect(-71.16, -71.118)}}}},
              nlohmann::json{{"type", "Feature"},
                             {"properties", {{"name", "East Ring"}}},
                             {"geometry",
                              {{"type", "Polygon"},
                               {"coordinates", rect(-71.118, -71.09)}}}}})}};
    ds.neighborhoods_geojson = fc.dump(1) + "\n";

    // Holidays: dated just before the span, so the calendar round-trips but
    // no in-span cell carries the rare holiday flag (a tiny flagged minority
    // would isolate on that axis and mask the planted anomalies).
    std::ostringstream holidays;
    holidays << "# synthetic holiday calendar\n";
    holidays << format_date(day0 - 7) << '\n';
    ds.holidays_txt = holidays.str();

    return ds;
}

EvalMetrics evaluate(std::span<const CellLabel> labels, const feat::FeatureMatrix& matrix,
                     const report::DetectResult& detect) {
    std::map<std::tuple<std::string, Timestamp, int>, const CellLabel*> by_key;
    for (const CellLabel& l : labels) {
        by_key[{l.station_id, l.hour_start, static_cast<int>(l.direction)}] = &l;
    }
    if (by_key.size() != matrix.rows.size())
        throw Error(Errc::data, "label count (" + std::to_string(by_key.size()) +
                                    ") does not match row count (" +
                                    std::to_string(matrix.rows.size()) + ")");

    const std::size_t n = matrix.rows.size();
    std::vector<const CellLabel*> row_labels(n);
    for (std::size_t r = 0; r < n; ++r) {
        const feat::StationHourRow& row = matrix.rows[r];
        auto it = by_key.find(
            {row.station_id, row.hour_start, static_cast<int>(row.direction)});
        if (it == by_key.end())
            throw Error(Errc::data, "no ground-truth label for " + row.station_id + " at " +
                                        format_timestamp(row.hour_start));
        row_labels[r] = it->second;
    }

    EvalMetrics m;
    m.rows = n;
    for (const CellLabel* l : row_labels) {
        if (l->anomalous) ++m.planted;
    }
    if (m.planted == 0) throw Error(Errc::data, "ground truth contains no planted anomalies");
    if (m.planted == n) throw Error(Errc::data, "ground truth contains no normal cells");

    // AUROC by average ranks (Mann-Whitney with tie correction).
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return detect.scores[a].anomaly_score < detect.scores[b].anomaly_score;
    });
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && detect.scores[order[j + 1]].anomaly_score ==
                                detect.scores[order[i]].anomaly_score)
            ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) rank[order[t]] = avg;
        i = j + 1;
    }
    double pos_rank_sum = 0;
    for (std::size_t r = 0; r < n; ++r) {
        if (row_labels[r]->anomalous) pos_rank_sum += rank[r];
    }
    const double npos = static_cast<double>(m.planted);
    const double nneg = static_cast<double>(n - m.planted);
    m.auroc = (pos_rank_sum - npos * (npos + 1.0) / 2.0) / (npos * nneg);

    std::size_t tp = 0;
    for (const iforest::ScoredRow& s : detect.scores) {
        if (!s.is_anomaly) continue;
        ++m.flagged;
        if (row_labels[s.row_index]->anomalous) ++tp;
    }
    m.precision = m.flagged > 0 ? static_cast<double>(tp) / static_cast<double>(m.flagged) : 0.0;
    m.recall = static_cast<double>(tp) / npos;

    // Explanation fidelity over detected planted anomalies.
    std::size_t top1 = 0, top2 = 0;
    for (const report::AnomalyRecord& a : detect.anomalies) {
        const CellLabel* l = row_labels[a.row_index];
        if (!l->anomalous) continue;
        ++m.detected_planted;
        const auto& names = detect.model.column_names;
        const std::string& cause = l->cause_feature;
        if (!a.local.ranking.empty() && names[a.local.ranking[0]] == cause) {
            ++top1;
            ++top2;
        } else if (a.local.ranking.size() > 1 && names[a.local.ranking[1]] == cause) {
            ++top2;
        }
    }
    if (m.detected_planted > 0) {
        m.top1_hit_rate = static_cast<double>(top1) / static_cast<double>(m.detected_planted);
        m.top2_hit_rate = static_cast<double>(top2) / static_cast<double>(m.detected_planted);
    }
    return m;
}

nlohmann::json metrics_to_json(const EvalMetrics& m) {
    return nlohmann::json{{"auroc", m.auroc},
                          {"precision", m.precision},
                          {"recall", m.recall},
                          {"top1_hit_rate", m.top1_hit_rate},
                          {"top2_hit_rate", m.top2_hit_rate},
                          {"rows", m.rows},
                          {"planted", m.planted},
                          {"flagged", m.flagged},
                          {"detected_planted", m.detected_planted}};
}

namespace {

std::string hardware_descriptor() {
    std::ifstream cpuinfo("/proc/cpuinfo");
    std::string line;
    while (std::getline(cpuinfo, line)) {
        if (line.rfind("model name", 0) == 0) {
            const std::size_t colon = line.find(':');
            if (colon != std::string::npos) return trim(line.substr(colon + 1));
        }
    }
    return "unknown cpu";
}

}  // namespace

TimingReport benchmark_local_diffi(const iforest::ForestModel& model, const NumericMatrix& rows,
                                   std::size_t repetitions) {
    if (rows.rows() == 0) throw Error(Errc::data, "cannot benchmark on zero rows");
    if (repetitions == 0) throw Error(Errc::usage, "repetitions must be >= 1");

    using clock = std::chrono::steady_clock;
    std::vector<double> samples;
    samples.reserve(rows.rows() * repetitions);
    for (std::size_t rep = 0; rep < repetitions; ++rep) {
        for (std::size_t r = 0; r < rows.rows(); ++r) {
            const auto t0 = clock::now();
            volatile double sink = diffi::local_diffi(model, rows.row(r)).scores[0];
            (void)sink;
            const auto t1 = clock::now();
            samples.push_back(std::chrono::duration<double>(t1 - t0).count());
        }
    }
    std::sort(samples.begin(), samples.end());
    double sum = 0;
    for (double s : samples) sum += s;

    TimingReport report;
    report.samples = samples.size();
    report.repetitions = repetitions;
    report.n_trees = model.n_trees;
    report.mean_s = sum / static_cast<double>(samples.size());
    const std::size_t p95_idx =
        std::min(samples.size() - 1,
                 static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(samples.size()))) -
                     1);
    report.p95_s = samples[p95_idx];
    report.hardware = hardware_descriptor();
    return report;
}

nlohmann::json timing_to_json(const TimingReport& t) {
    return nlohmann::json{{"mean_s", t.mean_s},       {"p95_s", t.p95_s},
                          {"samples", t.samples},     {"repetitions", t.repetitions},
                          {"n_trees", t.n_trees},     {"hardware", t.hardware}};
}

}  // namespace dockflow::synth
