#include "dockflow/reports.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dockflow/csv.hpp"
#include "dockflow/errors.hpp"
#include "dockflow/svg.hpp"

namespace dockflow::report {

DetectResult two_stage_detect(const NumericMatrix& trip_matrix,
                              const feat::FeatureMatrix& station_matrix,
                              const DetectOptions& options) {
    if (station_matrix.numeric.rows() == 0)
        throw Error(Errc::data, "station-hour matrix is empty");

    DetectResult result;
    if (options.contamination_override) {
        const double c = *options.contamination_override;
        if (!(c > 0.0 && c < 1.0))
            throw Error(Errc::usage, "contamination override must be inside (0, 1)");
        result.contamination = c;
        result.contamination_source = "override";
    } else {
        if (trip_matrix.rows() == 0) throw Error(Errc::data, "trip matrix is empty");
        const iforest::ForestModel stage1 = iforest::fit(trip_matrix, options.forest);
        const std::vector<iforest::ScoredRow> trip_scores = iforest::score(stage1, trip_matrix);
        std::size_t above = 0;
        for (const iforest::ScoredRow& s : trip_scores) {
            if (s.anomaly_score > 0.5) ++above;
        }
        double fraction =
            static_cast<double>(above) / static_cast<double>(trip_scores.size());
        if (fraction == 0.0) {
            result.warnings.push_back(
                "stage 1 found no trip scoring above 0.5; using contamination floor 0.01");
        }
        result.contamination = std::clamp(fraction, kContaminationFloor, kContaminationCeil);
        result.contamination_source = "stage1";
    }

    result.model = iforest::fit(station_matrix.numeric, options.forest);
    result.scores = iforest::score(result.model, station_matrix.numeric);
    const iforest::ThresholdResult th =
        iforest::threshold_by_contamination(result.scores, result.contamination);
    result.threshold = th.threshold;

    for (const iforest::ScoredRow& s : result.scores) {
        if (!s.is_anomaly) continue;
        const feat::StationHourRow& row = station_matrix.rows[s.row_index];
        AnomalyRecord rec;
        rec.row_index = s.row_index;
        rec.row = row;
        rec.score = s.anomaly_score;
        rec.threshold = th.threshold;
        rec.local = diffi::local_diffi(
            result.model, station_matrix.numeric.row(s.row_index),
            row.station_id + "/" + format_timestamp(row.hour_start) + "/" +
                feat::direction_label(row.direction));
        result.anomalies.push_back(std::move(rec));
    }
    return result;
}

std::vector<NeighborhoodDay> neighborhood_daily_report(
    std::span<const AnomalyRecord> anomalies, std::span<const feat::StationHourRow> rows) {
    // station sets per (neighborhood, day): all active, then anomalous
    std::map<std::pair<int, int>, std::set<std::string>> active;
    for (const feat::StationHourRow& r : rows) {
        active[{r.neighborhood_id, r.day_of_month}].insert(r.station_id);
    }
    std::map<std::pair<int, int>, std::set<std::string>> anomalous;
    for (const AnomalyRecord& a : anomalies) {
        anomalous[{a.row.neighborhood_id, a.row.day_of_month}].insert(a.row.station_id);
    }

    std::vector<NeighborhoodDay> out;
    out.reserve(active.size());
    for (const auto& [key, stations] : active) {
        NeighborhoodDay d;
        d.neighborhood_id = key.first;
        d.day_of_month = key.second;
        d.stations_active = static_cast<int>(stations.size());
        auto it = anomalous.find(key);
        d.stations_anomalous = it == anomalous.end() ? 0 : static_cast<int>(it->second.size());
        d.pct_anomalous =
            100.0 * static_cast<double>(d.stations_anomalous) / static_cast<double>(d.stations_active);
        out.push_back(d);
    }
    return out;
}

StationCountReport station_count_report(std::span<const AnomalyRecord> anomalies, std::size_t k) {
    std::map<std::string, std::size_t> counts;
    for (const AnomalyRecord& a : anomalies) ++counts[a.row.station_id];

    StationCountReport report;
    report.counts.reserve(counts.size());
    for (const auto& [id, n] : counts) report.counts.push_back({id, n});
    std::sort(report.counts.begin(), report.counts.end(),
              [](const StationCount& a, const StationCount& b) {
                  if (a.count != b.count) return a.count > b.count;
                  return a.station_id < b.station_id;
              });
    report.top_k = std::min(k, report.counts.size());
    return report;
}

nlohmann::json station_map_export(const StationCountReport& report,
                                  std::span<const feat::StationInfo> stations) {
    std::map<std::string, const feat::StationInfo*> by_id;
    for (const feat::StationInfo& s : stations) by_id.emplace(s.station_id, &s);

    nlohmann::json features = nlohmann::json::array();
    for (std::size_t i = 0; i < report.top_k; ++i) {
        const StationCount& sc = report.counts[i];
        auto it = by_id.find(sc.station_id);
        if (it == by_id.end()) continue;
        features.push_back(nlohmann::json{
            {"type", "Feature"},
            {"geometry",
             {{"type", "Point"},
              {"coordinates", nlohmann::json::array({it->second->lon, it->second->lat})}}},
            {"properties",
             {{"station_id", sc.station_id},
              {"anomaly_count", sc.count},
              {"rank", i + 1}}}});
    }
    return nlohmann::json{{"type", "FeatureCollection"}, {"features", std::move(features)}};
}

namespace {

struct BucketSeries {
    // date -> trips, per bucket key
    std::map<std::int64_t, double> by_date;
};

TemporalBucket finish_bucket(int key, const std::vector<double>& per_day,
                             std::size_t anomaly_count) {
    TemporalBucket b;
    b.key = key;
    b.anomaly_count = anomaly_count;
    const std::size_t n = per_day.size();
    if (n == 0) return b;
    double sum = 0;
    for (double v : per_day) sum += v;
    b.mean_trips = sum / static_cast<double>(n);
    if (n >= 2) {
        double ss = 0;
        for (double v : per_day) ss += (v - b.mean_trips) * (v - b.mean_trips);
        const double sd = std::sqrt(ss / static_cast<double>(n - 1));
        b.ci95_half_width = 1.96 * sd / std::sqrt(static_cast<double>(n));
    }
    return b;
}

}  // namespace

TemporalProfile temporal_profile(std::span<const feat::StationHourRow> rows,
                                 std::span<const AnomalyRecord> anomalies) {
    TemporalProfile profile;
    if (rows.empty()) {
        profile.warnings.push_back("no rows; temporal profile is empty");
        profile.hourly.resize(24);
        profile.weekday.resize(7);
        for (int h = 0; h < 24; ++h) profile.hourly[h].key = h;
        for (int w = 0; w < 7; ++w) profile.weekday[w].key = w;
        return profile;
    }

    // Trip volume counts each trip once: Outgoing rows only.
    std::int64_t first_day = day_index(rows.front().hour_start);
    std::int64_t last_day = first_day;
    for (const feat::StationHourRow& r : rows) {
        first_day = std::min(first_day, day_index(r.hour_start));
        last_day = std::max(last_day, day_index(r.hour_start));
    }
    const std::int64_t n_days = last_day - first_day + 1;
    if (n_days == 1) {
        profile.warnings.push_back(
            "single day of data; confidence half-widths reported as 0");
    }

    // trips[hour][date offset] and trips[weekday] date sets
    std::vector<std::vector<double>> hour_by_day(24,
                                                 std::vector<double>(static_cast<std::size_t>(n_days), 0.0));
    std::vector<std::map<std::int64_t, double>> weekday_by_date(7);
    for (std::int64_t d = first_day; d <= last_day; ++d) {
        weekday_by_date[static_cast<std::size_t>((d + 3) % 7)].emplace(d, 0.0);
    }
    for (const feat::StationHourRow& r : rows) {
        if (r.direction != feat::Direction::Outgoing) continue;
        const std::int64_t d = day_index(r.hour_start) - first_day;
        hour_by_day[static_cast<std::size_t>(r.hour)][static_cast<std::size_t>(d)] +=
            static_cast<double>(r.traffic_load);
        weekday_by_date[static_cast<std::size_t>(r.weekday)][day_index(r.hour_start)] +=
            static_cast<double>(r.traffic_load);
    }

    std::vector<std::size_t> hour_anomalies(24, 0), weekday_anomalies(7, 0);
    for (const AnomalyRecord& a : anomalies) {
        ++hour_anomalies[static_cast<std::size_t>(a.row.hour)];
        ++weekday_anomalies[static_cast<std::size_t>(a.row.weekday)];
    }

    profile.hourly.reserve(24);
    for (int h = 0; h < 24; ++h) {
        profile.hourly.push_back(
            finish_bucket(h, hour_by_day[static_cast<std::size_t>(h)],
                          hour_anomalies[static_cast<std::size_t>(h)]));
    }
    profile.weekday.reserve(7);
    for (int w = 0; w < 7; ++w) {
        std::vector<double> per_day;
        per_day.reserve(weekday_by_date[static_cast<std::size_t>(w)].size());
        for (const auto& [date, trips] : weekday_by_date[static_cast<std::size_t>(w)]) {
            per_day.push_back(trips);
        }
        profile.weekday.push_back(
            finish_bucket(w, per_day, weekday_anomalies[static_cast<std::size_t>(w)]));
    }

    auto argmax = [](const std::vector<std::size_t>& counts) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < counts.size(); ++i) {
            if (counts[i] > counts[best]) best = i;
        }
        return static_cast<int>(best);
    };
    profile.argmax_anomaly_hour = argmax(hour_anomalies);
    profile.argmax_anomaly_weekday = argmax(weekday_anomalies);
    return profile;
}

bool Predicate::matches(const feat::StationHourRow& row) const {
    if (hour && row.hour != *hour) return false;
    if (weekday && row.weekday != *weekday) return false;
    if (day_of_month && row.day_of_month != *day_of_month) return false;
    if (is_holiday && row.is_holiday != *is_holiday) return false;
    if (neighborhood_id && row.neighborhood_id != *neighborhood_id) return false;
    if (direction && row.direction != *direction) return false;
    if (station_id && row.station_id != *station_id) return false;
    return true;
}

bool Predicate::empty() const {
    return !hour && !weekday && !day_of_month && !is_holiday && !neighborhood_id && !direction &&
           !station_id;
}

std::string Predicate::name() const {
    std::ostringstream out;
    const char* sep = "";
    auto add = [&](const std::string& field, const std::string& value) {
        out << sep << field << "=" << value;
        sep = "&";
    };
    if (hour) add("hour", std::to_string(*hour));
    if (weekday) add("weekday", std::to_string(*weekday));
    if (day_of_month) add("day_of_month", std::to_string(*day_of_month));
    if (is_holiday) add("is_holiday", std::to_string(*is_holiday));
    if (neighborhood_id) add("neighborhood_id", std::to_string(*neighborhood_id));
    if (direction) add("direction", feat::direction_label(*direction));
    if (station_id) add("station_id", *station_id);
    std::string s = out.str();
    return s.empty() ? "all" : s;
}

Predicate Predicate::parse(const std::string& text) {
    Predicate p;
    std::string t = trim(text);
    if (t.empty() || to_lower(t) == "all") return p;

    std::stringstream ss(t);
    std::string clause;
    while (std::getline(ss, clause, ',')) {
        const std::size_t eq = clause.find('=');
        if (eq == std::string::npos)
            throw Error(Errc::usage, "predicate clause lacks '=': " + clause);
        std::string field = to_lower(trim(clause.substr(0, eq)));
        std::size_t vstart = eq + 1;
        if (vstart < clause.size() && clause[vstart] == '=') ++vstart;  // accept ==
        std::string value = trim(clause.substr(vstart));
        if (value.empty()) throw Error(Errc::usage, "predicate clause lacks a value: " + clause);

        auto int_value = [&]() {
            auto v = parse_long(value);
            if (!v) throw Error(Errc::usage, "predicate value is not an integer: " + clause);
            return static_cast<int>(*v);
        };
        if (field == "hour") p.hour = int_value();
        else if (field == "weekday") p.weekday = int_value();
        else if (field == "day_of_month") p.day_of_month = int_value();
        else if (field == "is_holiday") p.is_holiday = int_value();
        else if (field == "neighborhood_id") p.neighborhood_id = int_value();
        else if (field == "direction") {
            const std::string v = to_lower(value);
            if (v == "in") p.direction = feat::Direction::Incoming;
            else if (v == "out") p.direction = feat::Direction::Outgoing;
            else throw Error(Errc::usage, "direction must be 'in' or 'out': " + clause);
        } else if (field == "station_id") {
            p.station_id = value;
        } else {
            throw Error(Errc::usage, "unknown predicate field: " + field);
        }
    }
    return p;
}

diffi::ImportanceVector subset_explain(std::span<const AnomalyRecord> anomalies,
                                       const Predicate& predicate) {
    std::vector<diffi::ImportanceVector> selected;
    for (const AnomalyRecord& a : anomalies) {
        if (predicate.matches(a.row)) selected.push_back(a.local);
    }
    if (selected.empty()) {
        std::set<std::string> strata;
        for (const AnomalyRecord& a : anomalies) {
            strata.insert("hour=" + std::to_string(a.row.hour) +
                          ",weekday=" + std::to_string(a.row.weekday) +
                          ",direction=" + feat::direction_label(a.row.direction));
        }
        std::ostringstream msg;
        msg << "predicate '" << predicate.name() << "' matches no anomalies; available strata:";
        if (strata.empty()) msg << " (none - there are no anomalies)";
        for (const std::string& s : strata) msg << "\n  " << s;
        throw Error(Errc::usage, msg.str());
    }
    return diffi::aggregate_local(selected, predicate.name());
}

ReportBundle build_report_bundle(std::span<const feat::StationHourRow> rows,
                                 std::span<const AnomalyRecord> anomalies,
                                 std::span<const feat::StationInfo> stations,
                                 std::span<const Predicate> predicates) {
    ReportBundle bundle;
    bundle.neighborhood_daily = neighborhood_daily_report(anomalies, rows);
    bundle.station_counts = station_count_report(anomalies);
    bundle.temporal = temporal_profile(rows, anomalies);
    bundle.map_export = station_map_export(bundle.station_counts, stations);
    for (const Predicate& p : predicates) {
        bundle.subset_rankings.push_back(subset_explain(anomalies, p));
    }
    return bundle;
}

void write_neighborhood_daily_csv(std::ostream& out, std::span<const NeighborhoodDay> table) {
    out << "neighborhood_id,day_of_month,stations_active,stations_anomalous,pct_anomalous\n";
    for (const NeighborhoodDay& d : table) {
        out << d.neighborhood_id << ',' << d.day_of_month << ',' << d.stations_active << ','
            << d.stations_anomalous << ',' << fmt6(d.pct_anomalous) << '\n';
    }
}

void write_station_counts_csv(std::ostream& out, const StationCountReport& report) {
    out << "station_id,anomaly_count\n";
    for (const StationCount& s : report.counts) {
        out << csv_escape(s.station_id) << ',' << s.count << '\n';
    }
}

void write_temporal_csv(std::ostream& out, std::span<const TemporalBucket> table,
                        const std::string& key_name) {
    out << key_name << ",mean_trips,ci95_half_width,anomaly_count\n";
    for (const TemporalBucket& b : table) {
        out << b.key << ',' << fmt6(b.mean_trips) << ',' << fmt6(b.ci95_half_width) << ','
            << b.anomaly_count << '\n';
    }
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::generic, "cannot write " + path.string());
    out << content;
    if (!out) throw Error(Errc::generic, "short write to " + path.string());
}

}  // namespace

void render_plots(const ReportBundle& bundle, const std::string& out_dir,
                  std::span<const std::string> column_names) {
    const std::filesystem::path dir(out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(Errc::generic, "cannot create plot directory " + out_dir);

    // neighborhood x day heatmap
    {
        std::set<int> nbhd_ids;
        int day_min = 32, day_max = 0;
        for (const NeighborhoodDay& d : bundle.neighborhood_daily) {
            nbhd_ids.insert(d.neighborhood_id);
            day_min = std::min(day_min, d.day_of_month);
            day_max = std::max(day_max, d.day_of_month);
        }
        std::vector<std::string> row_labels, col_labels;
        std::vector<double> values;
        if (!nbhd_ids.empty()) {
            std::map<int, std::size_t> nbhd_pos;
            for (int id : nbhd_ids) {
                nbhd_pos.emplace(id, row_labels.size());
                row_labels.push_back("nbhd " + std::to_string(id));
            }
            for (int d = day_min; d <= day_max; ++d) col_labels.push_back(std::to_string(d));
            values.assign(row_labels.size() * col_labels.size(), -1.0);
            for (const NeighborhoodDay& d : bundle.neighborhood_daily) {
                values[nbhd_pos[d.neighborhood_id] * col_labels.size() +
                       static_cast<std::size_t>(d.day_of_month - day_min)] = d.pct_anomalous;
            }
        }
        write_file(dir / "neighborhood_daily.svg",
                   svg::heatmap("Anomalous stations by neighborhood and day", row_labels,
                                col_labels, values, 100.0, "% of active stations"));
    }

    // top stations bar chart
    {
        std::vector<std::string> labels;
        std::vector<double> values;
        for (std::size_t i = 0; i < bundle.station_counts.top_k; ++i) {
            labels.push_back(bundle.station_counts.counts[i].station_id);
            values.push_back(static_cast<double>(bundle.station_counts.counts[i].count));
        }
        write_file(dir / "station_counts.svg",
                   svg::bar_chart("Anomaly count by station (top ranked)", labels, values));
    }

    // temporal profiles
    {
        auto chart = [&](std::span<const TemporalBucket> table,
                         std::span<const std::string> labels, const std::string& title) {
            std::vector<double> mean, hw, anomalies;
            for (const TemporalBucket& b : table) {
                mean.push_back(b.mean_trips);
                hw.push_back(b.ci95_half_width);
                anomalies.push_back(static_cast<double>(b.anomaly_count));
            }
            return svg::line_band_chart(title, labels, mean, hw, anomalies, "anomaly count");
        };
        std::vector<std::string> hour_labels;
        for (int h = 0; h < 24; ++h) hour_labels.push_back(std::to_string(h));
        write_file(dir / "temporal_hourly.svg",
                   chart(bundle.temporal.hourly, hour_labels, "Trips per day by hour"));
        const std::vector<std::string> weekday_labels = {"Mon", "Tue", "Wed", "Thu",
                                                         "Fri", "Sat", "Sun"};
        write_file(dir / "temporal_weekday.svg",
                   chart(bundle.temporal.weekday, weekday_labels, "Trips per day by weekday"));
    }

    // subset importance rankings
    for (std::size_t i = 0; i < bundle.subset_rankings.size(); ++i) {
        const diffi::ImportanceVector& iv = bundle.subset_rankings[i];
        std::vector<std::string> labels;
        std::vector<double> values;
        const std::size_t top = std::min<std::size_t>(iv.ranking.size(), 10);
        for (std::size_t j = 0; j < top; ++j) {
            const std::size_t f = iv.ranking[j];
            labels.push_back(f < column_names.size() ? column_names[f]
                                                     : "col" + std::to_string(f));
            values.push_back(iv.scores[f]);
        }
        write_file(dir / ("ranking_" + std::to_string(i) + ".svg"),
                   svg::bar_chart("Mean local importance: " + iv.subject, labels, values));
    }
}

}  // namespace dockflow::report
