#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dockflow/diffi.hpp"
#include "dockflow/features.hpp"
#include "dockflow/isolation_forest.hpp"

namespace dockflow::report {

// A flagged station-hour row with its explanation attached.
struct AnomalyRecord {
    std::size_t row_index = 0;  // into the station-hour matrix
    feat::StationHourRow row;
    double score = 0;
    double threshold = 0;
    diffi::ImportanceVector local;
};

struct DetectOptions {
    iforest::ForestConfig forest;  // shared by both stages
    std::optional<double> contamination_override;
};

inline constexpr double kContaminationFloor = 0.01;
inline constexpr double kContaminationCeil = 0.15;

struct DetectResult {
    double contamination = 0;
    std::string contamination_source;  // "stage1" or "override"
    double threshold = 0;
    iforest::ForestModel model;            // stage-2 model
    std::vector<iforest::ScoredRow> scores;  // all station-hour rows
    std::vector<AnomalyRecord> anomalies;
    std::vector<std::string> warnings;
};

/// Two-stage detection: a forest over per-trip [duration, distance, speed]
/// sets contamination as the fraction of trips scoring above 0.5, clipped
/// to [0.01, 0.15]; a second forest over the station-hour matrix is then
/// thresholded at that contamination and every flagged row gets a local
/// importance vector.  An explicit override skips stage 1 entirely.
DetectResult two_stage_detect(const NumericMatrix& trip_matrix,
                              const feat::FeatureMatrix& station_matrix,
                              const DetectOptions& options);

struct NeighborhoodDay {
    int neighborhood_id = 0;
    int day_of_month = 0;
    int stations_active = 0;
    int stations_anomalous = 0;
    double pct_anomalous = 0;  // [0, 100]
};

/// Percentage of active stations with at least one flagged row, per
/// (neighborhood, day).  Days where a neighborhood has no active station do
/// not appear.
std::vector<NeighborhoodDay> neighborhood_daily_report(std::span<const AnomalyRecord> anomalies,
                                                       std::span<const feat::StationHourRow> rows);

struct StationCount {
    std::string station_id;
    std::size_t count = 0;
};

struct StationCountReport {
    std::vector<StationCount> counts;  // descending count, id tie-break
    std::size_t top_k = 0;
};

StationCountReport station_count_report(std::span<const AnomalyRecord> anomalies,
                                        std::size_t k = 20);

/// Top-k stations as a FeatureCollection of points with
/// {station_id, anomaly_count, rank} properties.  Stations missing from the
/// registry are skipped.
nlohmann::json station_map_export(const StationCountReport& report,
                                  std::span<const feat::StationInfo> stations);

struct TemporalBucket {
    int key = 0;             // hour 0-23 or weekday 0-6
    double mean_trips = 0;   // mean per day (per date of that weekday)
    double ci95_half_width = 0;
    std::size_t anomaly_count = 0;
};

struct TemporalProfile {
    std::vector<TemporalBucket> hourly;   // 24 buckets
    std::vector<TemporalBucket> weekday;  // 7 buckets
    int argmax_anomaly_hour = 0;
    int argmax_anomaly_weekday = 0;
    std::vector<std::string> warnings;
};

/// Trip-volume and anomaly profiles by hour of day and weekday.  Trip
/// volume counts Outgoing traffic only (each trip once); days inside the
/// observed date span with no traffic count as zero.  Half-widths are
/// 1.96 * sample stddev / sqrt(#days), 0 with a warning for a single day.
TemporalProfile temporal_profile(std::span<const feat::StationHourRow> rows,
                                 std::span<const AnomalyRecord> anomalies);

// Conjunctive equality constraints over row fields.
struct Predicate {
    std::optional<int> hour;
    std::optional<int> weekday;
    std::optional<int> day_of_month;
    std::optional<int> is_holiday;
    std::optional<int> neighborhood_id;
    std::optional<feat::Direction> direction;
    std::optional<std::string> station_id;

    bool matches(const feat::StationHourRow& row) const;
    bool empty() const;
    std::string name() const;  // "all" when unconstrained

    // Parses "hour=8,weekday=3" (also accepts "==").  Unknown field or bad
    // value -> Error{usage}.
    static Predicate parse(const std::string& text);
};

/// Mean local importance over the anomalies selected by the predicate.
/// An empty selection raises an error listing the available
/// (hour, weekday, direction) strata.
diffi::ImportanceVector subset_explain(std::span<const AnomalyRecord> anomalies,
                                       const Predicate& predicate);

struct ReportBundle {
    std::vector<NeighborhoodDay> neighborhood_daily;
    StationCountReport station_counts;
    TemporalProfile temporal;
    std::vector<diffi::ImportanceVector> subset_rankings;
    nlohmann::json map_export;
};

ReportBundle build_report_bundle(std::span<const feat::StationHourRow> rows,
                                 std::span<const AnomalyRecord> anomalies,
                                 std::span<const feat::StationInfo> stations,
                                 std::span<const Predicate> predicates);

void write_neighborhood_daily_csv(std::ostream& out, std::span<const NeighborhoodDay> table);
void write_station_counts_csv(std::ostream& out, const StationCountReport& report);
void write_temporal_csv(std::ostream& out, std::span<const TemporalBucket> table,
                        const std::string& key_name);

/// Writes the SVG analogues of the bundle tables into `out_dir`:
/// neighborhood_daily.svg, station_counts.svg, temporal_hourly.svg,
/// temporal_weekday.svg, and one ranking_<i>.svg per subset ranking.
void render_plots(const ReportBundle& bundle, const std::string& out_dir,
                  std::span<const std::string> column_names);

}  // namespace dockflow::report
