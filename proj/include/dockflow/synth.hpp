#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dockflow/features.hpp"
#include "dockflow/isolation_forest.hpp"
#include "dockflow/reports.hpp"
#include "dockflow/time.hpp"

namespace dockflow::synth {

// One planted-anomaly rule.  Weather features (avg_wind, avg_temp,
// avg_precip) are hour-scoped: a selected hour perturbs the shared weather
// row and labels every cell of that hour.  Traffic features (traffic_load,
// avg_duration_min, subscriber_ratio) are cell-scoped: individual outgoing
// cells are perturbed and labeled.
struct AnomalyPlan {
    std::string feature = "avg_wind";
    double shift_sigma = 6.0;
    double rate = 0.05;                // fraction of the target universe
    std::vector<int> hours_of_day;     // optional restriction, e.g. {8}
    std::vector<int> stations;         // optional restriction (station indices)
};

struct WeatherParams {
    double temp_mean = 2.0;
    double temp_sd = 3.0;
    double wind_mean = 12.0;
    double wind_sd = 2.5;
    double precip_prob = 0.5;
    double precip_mean = 1.2;
};

struct SynthConfig {
    int n_stations = 10;
    int n_days = 31;
    int first_day_year = 2023, first_day_month = 1, first_day_dom = 1;
    int first_hour = 4, last_hour = 23;  // active hours, inclusive
    double base_demand = 12.0;
    double demand_noise_sd = 1.2;
    double subscriber_p = 0.75;
    WeatherParams weather;
    std::vector<AnomalyPlan> plan = {AnomalyPlan{}};
    std::uint64_t seed = 1;

    static SynthConfig from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;
};

struct CellLabel {
    std::string station_id;
    Timestamp hour_start = 0;
    feat::Direction direction = feat::Direction::Incoming;
    bool anomalous = false;
    std::string cause_feature;  // empty for normal cells
};

// Generated source files (as file contents) plus the ground truth.
struct SynthDataset {
    std::string trips_csv;
    std::string weather_csv;
    std::string stops_txt;
    std::string neighborhoods_geojson;
    std::string holidays_txt;
    std::vector<CellLabel> labels;  // exactly the cells aggregation will produce

    std::string labels_csv() const;
};

/// Deterministic in config.seed; every output parses through the ingest
/// module with zero rejects, and `labels` matches the aggregated cell set
/// one-to-one.
SynthDataset generate(const SynthConfig& config);

std::vector<CellLabel> labels_from_csv(std::istream& in);

struct EvalMetrics {
    double auroc = 0;
    double precision = 0;
    double recall = 0;
    double top1_hit_rate = 0;  // over detected planted anomalies
    double top2_hit_rate = 0;
    std::size_t rows = 0;
    std::size_t planted = 0;
    std::size_t flagged = 0;
    std::size_t detected_planted = 0;
};

/// Scores a pipeline run against ground truth.  Every station-hour row must
/// have a label and vice versa.
EvalMetrics evaluate(std::span<const CellLabel> labels, const feat::FeatureMatrix& matrix,
                     const report::DetectResult& detect);

nlohmann::json metrics_to_json(const EvalMetrics& m);

struct TimingReport {
    double mean_s = 0;
    double p95_s = 0;
    std::size_t samples = 0;
    std::size_t repetitions = 0;
    int n_trees = 0;
    std::string hardware;
};

/// Wall-clock per-sample local importance cost over `repetitions` passes of
/// every row.
TimingReport benchmark_local_diffi(const iforest::ForestModel& model, const NumericMatrix& rows,
                                   std::size_t repetitions);

nlohmann::json timing_to_json(const TimingReport& t);

}  // namespace dockflow::synth
