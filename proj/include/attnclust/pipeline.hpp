#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "attnclust/core.hpp"
#include "attnclust/dtc.hpp"
#include "attnclust/grabcut.hpp"
#include "attnclust/metrics.hpp"

namespace attnclust::pipeline {

enum class ReportFormat { Text, Json };

struct ExperimentConfig {
    std::filesystem::path features;
    std::optional<std::filesystem::path> transformed_features;
    std::optional<std::filesystem::path> labels;
    std::filesystem::path output_dir;
    std::string dataset; // defaults to the features file stem

    int clusters = 0;
    int embedded_dim = 0;  // 0: min(clusters, D, N-1)
    int kmeans_iters = 100;
    // Std-dev of the seeded Gaussian jitter used as the PI transform when no
    // transformed features are given; 0 disables it.
    double jitter_sigma = 0.0;

    dtc::TrainConfig train;
    bool ramp_length_set = false;

    metrics::NmiNormalization nmi_norm = metrics::NmiNormalization::Geometric;
    ReportFormat report_format = ReportFormat::Text;
    bool record_timing = false;

    grabcut::GrabcutParams grabcut;
    int grabcut_iterations = 5;
    std::uint64_t grabcut_seed = 0;

    // Resolved key=value view, used for the report's config echo.
    std::map<std::string, std::string> echo() const;
};

using KeyValues = std::map<std::string, std::string>;

// `key=value` per line; '#' starts a comment. Throws ConfigError.
KeyValues parse_key_values(std::string_view text);

/// Builds a config from key/value pairs; relative paths resolve against
/// base_dir. Unknown keys and malformed values throw ConfigError.
ExperimentConfig config_from_key_values(const KeyValues& values,
                                        const std::filesystem::path& base_dir);

/// Reads `path`, then applies `overrides` (each `key=value`, later wins).
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides);

struct Timing {
    double ingest_ms = 0.0;
    double init_ms = 0.0;
    double train_ms = 0.0;
    double eval_ms = 0.0;

    friend bool operator==(const Timing&, const Timing&) = default;
};

struct ExperimentReport {
    std::map<std::string, std::string> config;
    std::string dataset;
    dtc::Variant variant = dtc::Variant::Baseline;
    std::int64_t samples = 0;
    std::int64_t clusters = 0;
    std::int64_t embedded_dim = 0;
    std::vector<LossBreakdown> history;
    std::optional<metrics::Scores> scores;
    std::optional<Timing> timing;
};

bool operator==(const ExperimentReport& a, const ExperimentReport& b);

struct ExperimentResult {
    ExperimentReport report;
    LabelVector assignment;
    ClusterState state;
};

/// Loads and checks every input, then PCA -> k-means -> train -> predict ->
/// metrics. Nothing is written; errors carry a stage prefix
/// (config/ingest/init/train/eval).
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Writes <output_dir>/report.{txt,json} and <output_dir>/assignments.txt.
void write_outputs(const ExperimentConfig& cfg, const ExperimentResult& result);

std::string emit_report(const ExperimentReport& report, ReportFormat format);
nlohmann::json report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const nlohmann::json& j);

// Initial cluster state: PCA folded into the projection, k-means centers.
struct Initialization {
    ClusterState state;
    LabelVector assignment;
};
Initialization initialize(const FeatureMatrix& features, int clusters, int embedded_dim, double alpha,
                          std::uint64_t seed, int kmeans_iters);

/// Isotropic Gaussian blobs whose centers sit on a regular polygon in the
/// first two coordinates, adjacent centers `separation * sigma` apart.
/// Sample order is shuffled with the seed.
struct BlobSpec {
    int clusters = 3;
    int points = 200;
    int dim = 2;
    double separation = 10.0;
    double sigma = 1.0;
    std::uint64_t seed = 0;
};

struct Dataset {
    FeatureMatrix features;
    LabelVector labels;
};

Dataset make_blobs(const BlobSpec& spec);

// features + N(0, sigma^2) noise per entry.
FeatureMatrix jitter(const FeatureMatrix& features, double sigma, std::uint64_t seed);

}  // namespace attnclust::pipeline
