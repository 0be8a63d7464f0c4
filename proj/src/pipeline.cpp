#include "attnclust/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "attnclust/embedding.hpp"
#include "attnclust/image.hpp"
#include "attnclust/io.hpp"

namespace attnclust::pipeline {

namespace {

std::string format_double(double v) { return nlohmann::json(v).dump(); }

std::string trim(std::string_view s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string_view::npos) {
        return {};
    }
    const auto end = s.find_last_not_of(" \t\r");
    return std::string(s.substr(begin, end - begin + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    std::istringstream in(value);
    T out{};
    in >> out;
    if (!in || !in.eof()) {
        throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true" || value == "yes") {
        return true;
    }
    if (value == "0" || value == "false" || value == "no") {
        return false;
    }
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + value + "'");
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
    const std::filesystem::path p(value);
    return p.is_absolute() || base.empty() ? p : base / p;
}

// Re-raises module errors with the pipeline stage prepended. Precondition
// failures from the numeric modules can only come from config values here.
template <typename F>
auto staged(const char* stage, F&& body) -> decltype(body()) {
    const std::string prefix = std::string(stage) + ": ";
    try {
        return body();
    } catch (const ConfigError& e) {
        throw ConfigError(prefix + e.what());
    } catch (const DivergedError& e) {
        throw DivergedError(e.epoch(), prefix + e.what());
    } catch (const DataError& e) {
        throw DataError(prefix + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(prefix + e.what());
    } catch (const std::out_of_range& e) {
        throw ConfigError(prefix + e.what());
    }
}

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::string nmi_norm_name(metrics::NmiNormalization n) {
    return n == metrics::NmiNormalization::Geometric ? "geometric" : "arithmetic";
}

}  // namespace

KeyValues parse_key_values(std::string_view text) {
    KeyValues out;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        const std::string body = trim(std::string_view(line).substr(0, hash));
        if (body.empty()) {
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
        }
        const std::string key = trim(std::string_view(body).substr(0, eq));
        if (key.empty()) {
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        }
        out[key] = trim(std::string_view(body).substr(eq + 1));
    }
    return out;
}

ExperimentConfig config_from_key_values(const KeyValues& values, const std::filesystem::path& base_dir) {
    ExperimentConfig cfg;
    bool have_features = false;
    bool have_output = false;
    for (const auto& [key, value] : values) {
        if (key == "features") {
            cfg.features = resolve(base_dir, value);
            have_features = true;
        } else if (key == "transformed_features") {
            if (!value.empty()) {
                cfg.transformed_features = resolve(base_dir, value);
            }
        } else if (key == "labels") {
            if (!value.empty()) {
                cfg.labels = resolve(base_dir, value);
            }
        } else if (key == "output_dir") {
            cfg.output_dir = resolve(base_dir, value);
            have_output = true;
        } else if (key == "dataset") {
            cfg.dataset = value;
        } else if (key == "clusters") {
            cfg.clusters = parse_number<int>(key, value);
        } else if (key == "embedded_dim") {
            cfg.embedded_dim = parse_number<int>(key, value);
        } else if (key == "kmeans_iters") {
            cfg.kmeans_iters = parse_number<int>(key, value);
        } else if (key == "jitter_sigma") {
            cfg.jitter_sigma = parse_number<double>(key, value);
        } else if (key == "variant") {
            cfg.train.variant = dtc::parse_variant(value);
        } else if (key == "epochs") {
            cfg.train.epochs = parse_number<int>(key, value);
        } else if (key == "ramp_length") {
            cfg.train.ramp_length = parse_number<int>(key, value);
            cfg.ramp_length_set = true;
        } else if (key == "learning_rate") {
            cfg.train.learning_rate = parse_number<double>(key, value);
        } else if (key == "alpha") {
            cfg.train.alpha = parse_number<double>(key, value);
        } else if (key == "beta") {
            cfg.train.beta = parse_number<double>(key, value);
        } else if (key == "target_update_interval") {
            cfg.train.target_update_interval = parse_number<int>(key, value);
        } else if (key == "seed") {
            cfg.train.seed = parse_number<std::uint64_t>(key, value);
        } else if (key == "consistency_norm") {
            cfg.train.consistency_norm = dtc::parse_consistency_norm(value);
        } else if (key == "nmi_norm") {
            if (value == "geometric") {
                cfg.nmi_norm = metrics::NmiNormalization::Geometric;
            } else if (value == "arithmetic") {
                cfg.nmi_norm = metrics::NmiNormalization::Arithmetic;
            } else {
                throw ConfigError("nmi_norm must be geometric or arithmetic");
            }
        } else if (key == "report_format") {
            if (value == "text") {
                cfg.report_format = ReportFormat::Text;
            } else if (value == "json") {
                cfg.report_format = ReportFormat::Json;
            } else {
                throw ConfigError("report_format must be text or json");
            }
        } else if (key == "record_timing") {
            cfg.record_timing = parse_bool(key, value);
        } else if (key == "grabcut_iterations") {
            cfg.grabcut_iterations = parse_number<int>(key, value);
        } else if (key == "grabcut_gamma") {
            cfg.grabcut.gamma = parse_number<double>(key, value);
        } else if (key == "grabcut_components") {
            cfg.grabcut.gmm_components = parse_number<int>(key, value);
        } else if (key == "grabcut_seed") {
            cfg.grabcut_seed = parse_number<std::uint64_t>(key, value);
        } else {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
    if (!have_features) {
        throw ConfigError("config is missing 'features'");
    }
    if (!have_output) {
        throw ConfigError("config is missing 'output_dir'");
    }
    if (cfg.clusters < 2) {
        throw ConfigError("config needs clusters >= 2");
    }
    if (cfg.embedded_dim < 0 || cfg.kmeans_iters < 1 || cfg.jitter_sigma < 0.0) {
        throw ConfigError("embedded_dim, kmeans_iters or jitter_sigma out of range");
    }
    if (!cfg.ramp_length_set) {
        cfg.train.ramp_length = std::max(1, std::min(25, cfg.train.epochs));
    }
    if (cfg.dataset.empty()) {
        cfg.dataset = cfg.features.stem().string();
    }
    cfg.train.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    KeyValues values = parse_key_values(text);
    for (const std::string& item : overrides) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError("override '" + item + "' is not key=value");
        }
        values[trim(std::string_view(item).substr(0, eq))] = trim(std::string_view(item).substr(eq + 1));
    }
    return config_from_key_values(values, path.parent_path());
}

std::map<std::string, std::string> ExperimentConfig::echo() const {
    std::map<std::string, std::string> out;
    out["features"] = features.string();
    out["transformed_features"] = transformed_features ? transformed_features->string() : "";
    out["labels"] = labels ? labels->string() : "";
    out["output_dir"] = output_dir.string();
    out["dataset"] = dataset;
    out["clusters"] = std::to_string(clusters);
    out["embedded_dim"] = std::to_string(embedded_dim);
    out["kmeans_iters"] = std::to_string(kmeans_iters);
    out["jitter_sigma"] = format_double(jitter_sigma);
    out["variant"] = dtc::to_string(train.variant);
    out["epochs"] = std::to_string(train.epochs);
    out["ramp_length"] = std::to_string(train.ramp_length);
    out["learning_rate"] = format_double(train.learning_rate);
    out["alpha"] = format_double(train.alpha);
    out["beta"] = format_double(train.beta);
    out["target_update_interval"] = std::to_string(train.target_update_interval);
    out["seed"] = std::to_string(train.seed);
    out["consistency_norm"] = dtc::to_string(train.consistency_norm);
    out["nmi_norm"] = nmi_norm_name(nmi_norm);
    out["report_format"] = report_format == ReportFormat::Text ? "text" : "json";
    out["record_timing"] = record_timing ? "true" : "false";
    out["grabcut_iterations"] = std::to_string(grabcut_iterations);
    out["grabcut_gamma"] = format_double(grabcut.gamma);
    out["grabcut_components"] = std::to_string(grabcut.gmm_components);
    out["grabcut_seed"] = std::to_string(grabcut_seed);
    return out;
}

bool operator==(const ExperimentReport& a, const ExperimentReport& b) {
    auto same_scores = [](const std::optional<metrics::Scores>& x, const std::optional<metrics::Scores>& y) {
        if (x.has_value() != y.has_value()) {
            return false;
        }
        return !x || (x->accuracy == y->accuracy && x->nmi == y->nmi && x->ari == y->ari);
    };
    return a.config == b.config && a.dataset == b.dataset && a.variant == b.variant &&
           a.samples == b.samples && a.clusters == b.clusters && a.embedded_dim == b.embedded_dim &&
           a.history == b.history && same_scores(a.scores, b.scores) && a.timing == b.timing;
}

Initialization initialize(const FeatureMatrix& features, int clusters, int embedded_dim, double alpha,
                          std::uint64_t seed, int kmeans_iters) {
    const embedding::PcaModel pca = embedding::pca_fit(features, embedded_dim);
    const embedding::Projection proj = embedding::init_projection(pca);
    const Matrix z = embedding::project(features.data(), proj.weights, proj.offset);
    embedding::KmeansResult km = embedding::kmeans(FeatureMatrix(z), clusters, seed, kmeans_iters);
    ClusterState state{std::move(km.centers), proj.weights, proj.offset, alpha};
    state.validate();
    return {std::move(state), std::move(km.assignment)};
}

namespace {

struct Inputs {
    FeatureMatrix features;
    std::optional<FeatureMatrix> transformed;
    std::optional<LabelVector> labels;
    int embedded_dim;
};

Inputs load_inputs(const ExperimentConfig& cfg) {
    if (cfg.train.variant == dtc::Variant::PI && !cfg.transformed_features && cfg.jitter_sigma <= 0.0) {
        throw ConfigError("pi variant needs transformed_features or jitter_sigma > 0");
    }
    for (const auto* path : {&cfg.features, cfg.transformed_features ? &*cfg.transformed_features : nullptr,
                             cfg.labels ? &*cfg.labels : nullptr}) {
        if (path != nullptr && !std::filesystem::is_regular_file(*path)) {
            throw ConfigError("input file does not exist: " + path->string());
        }
    }
    if (std::filesystem::exists(cfg.output_dir) && !std::filesystem::is_directory(cfg.output_dir)) {
        throw ConfigError("output_dir exists and is not a directory: " + cfg.output_dir.string());
    }

    FeatureMatrix features = io::read_features(cfg.features);
    std::optional<FeatureMatrix> transformed;
    if (cfg.transformed_features) {
        transformed = io::read_features(*cfg.transformed_features);
        if (transformed->rows() != features.rows() || transformed->cols() != features.cols()) {
            throw DataError("transformed features are " + std::to_string(transformed->rows()) + "x" +
                            std::to_string(transformed->cols()) + ", features are " +
                            std::to_string(features.rows()) + "x" + std::to_string(features.cols()));
        }
    }
    std::optional<LabelVector> labels;
    if (cfg.labels) {
        labels = io::read_labels(*cfg.labels).remap_contiguous();
        if (static_cast<Eigen::Index>(labels->size()) != features.rows()) {
            throw DataError("labels file has " + std::to_string(labels->size()) + " entries for " +
                            std::to_string(features.rows()) + " samples");
        }
    }

    const auto n = static_cast<int>(features.rows());
    const auto d = static_cast<int>(features.cols());
    if (cfg.clusters > n) {
        throw ConfigError("clusters (" + std::to_string(cfg.clusters) + ") exceeds sample count " +
                          std::to_string(n));
    }
    const int limit = std::min(n - 1, d);
    const int embedded = cfg.embedded_dim > 0 ? cfg.embedded_dim : std::min(cfg.clusters, limit);
    if (embedded < 1 || embedded > limit) {
        throw ConfigError("embedded_dim " + std::to_string(embedded) + " outside [1, " +
                          std::to_string(limit) + "]");
    }
    return {std::move(features), std::move(transformed), std::move(labels), embedded};
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    Timing timing;
    auto t0 = Clock::now();
    Inputs in = staged("ingest", [&] { return load_inputs(cfg); });
    if (cfg.train.variant == dtc::Variant::PI && !in.transformed) {
        in.transformed = jitter(in.features, cfg.jitter_sigma, cfg.train.seed ^ 0x6a09e667f3bcc909ULL);
    }
    timing.ingest_ms = elapsed_ms(t0);

    t0 = Clock::now();
    Initialization init = staged("init", [&] {
        return initialize(in.features, cfg.clusters, in.embedded_dim, cfg.train.alpha, cfg.train.seed,
                          cfg.kmeans_iters);
    });
    timing.init_ms = elapsed_ms(t0);

    t0 = Clock::now();
    dtc::TrainResult trained = staged("train", [&] {
        return dtc::train(in.features, init.state, cfg.train, in.transformed ? &*in.transformed : nullptr);
    });
    timing.train_ms = elapsed_ms(t0);

    ExperimentResult result;
    t0 = Clock::now();
    if (in.labels) {
        result.report.scores =
            staged("eval", [&] { return metrics::evaluate(trained.assignment, *in.labels, cfg.nmi_norm); });
    }
    timing.eval_ms = elapsed_ms(t0);

    result.report.config = cfg.echo();
    result.report.config["embedded_dim"] = std::to_string(in.embedded_dim);
    result.report.dataset = cfg.dataset;
    result.report.variant = cfg.train.variant;
    result.report.samples = in.features.rows();
    result.report.clusters = cfg.clusters;
    result.report.embedded_dim = in.embedded_dim;
    result.report.history = std::move(trained.history);
    if (cfg.record_timing) {
        result.report.timing = timing;
    }
    result.assignment = std::move(trained.assignment);
    result.state = std::move(trained.state);
    return result;
}

void write_outputs(const ExperimentConfig& cfg, const ExperimentResult& result) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    if (ec) {
        throw Error("cannot create output directory " + cfg.output_dir.string() + ": " + ec.message());
    }
    const char* name = cfg.report_format == ReportFormat::Text ? "report.txt" : "report.json";
    write_file(cfg.output_dir / name, emit_report(result.report, cfg.report_format));
    io::write_labels(cfg.output_dir / "assignments.txt", result.assignment);
}

std::string emit_report(const ExperimentReport& report, ReportFormat format) {
    if (format == ReportFormat::Json) {
        return report_to_json(report).dump(2) + "\n";
    }
    auto metric = [&](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", v);
        return std::string(buf);
    };
    std::string out;
    out += "Model " + dtc::to_string(report.variant) + "\n";
    out += "Dataset " + report.dataset + "\n";
    if (report.scores) {
        out += "Accuracy " + metric(report.scores->accuracy) + "\n";
        out += "NMI " + metric(report.scores->nmi) + "\n";
        out += "ARI " + metric(report.scores->ari) + "\n";
    } else {
        out += "Accuracy n/a\nNMI n/a\nARI n/a\n";
    }
    out += "Samples " + std::to_string(report.samples) + "\n";
    out += "Clusters " + std::to_string(report.clusters) + "\n";
    out += "Epochs " + std::to_string(report.history.size()) + "\n";
    if (!report.history.empty()) {
        out += "FinalLoss " + format_double(report.history.back().total) + "\n";
    }
    return out;
}

nlohmann::json report_to_json(const ExperimentReport& report) {
    nlohmann::json j;
    j["config"] = report.config;
    j["dataset"] = report.dataset;
    j["variant"] = dtc::to_string(report.variant);
    j["samples"] = report.samples;
    j["clusters"] = report.clusters;
    j["embedded_dim"] = report.embedded_dim;
    j["history"] = nlohmann::json::array();
    for (const LossBreakdown& l : report.history) {
        j["history"].push_back(io::to_json(l));
    }
    if (report.scores) {
        j["metrics"] = {{"accuracy", report.scores->accuracy},
                        {"nmi", report.scores->nmi},
                        {"ari", report.scores->ari}};
    } else {
        j["metrics"] = nullptr;
    }
    if (report.timing) {
        j["timing"] = {{"ingest_ms", report.timing->ingest_ms},
                       {"init_ms", report.timing->init_ms},
                       {"train_ms", report.timing->train_ms},
                       {"eval_ms", report.timing->eval_ms}};
    }
    return j;
}

ExperimentReport report_from_json(const nlohmann::json& j) {
    ExperimentReport r;
    r.config = j.at("config").get<std::map<std::string, std::string>>();
    r.dataset = j.at("dataset").get<std::string>();
    r.variant = dtc::parse_variant(j.at("variant").get<std::string>());
    r.samples = j.at("samples").get<std::int64_t>();
    r.clusters = j.at("clusters").get<std::int64_t>();
    r.embedded_dim = j.at("embedded_dim").get<std::int64_t>();
    for (const auto& l : j.at("history")) {
        r.history.push_back(io::loss_from_json(l));
    }
    if (!j.at("metrics").is_null()) {
        const auto& m = j.at("metrics");
        r.scores = metrics::Scores{m.at("accuracy").get<double>(), m.at("nmi").get<double>(),
                                   m.at("ari").get<double>()};
    }
    if (j.contains("timing")) {
        const auto& t = j.at("timing");
        r.timing = Timing{t.at("ingest_ms").get<double>(), t.at("init_ms").get<double>(),
                          t.at("train_ms").get<double>(), t.at("eval_ms").get<double>()};
    }
    return r;
}

Dataset make_blobs(const BlobSpec& spec) {
    if (spec.clusters < 1 || spec.points < spec.clusters || spec.dim < 1 || !(spec.sigma > 0.0) ||
        spec.separation < 0.0) {
        throw std::invalid_argument("invalid blob specification");
    }
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.sigma);

    const double spacing = spec.separation * spec.sigma;
    Matrix centers = Matrix::Zero(spec.clusters, spec.dim);
    for (int c = 0; c < spec.clusters && spec.clusters > 1; ++c) {
        if (spec.dim == 1) {
            centers(c, 0) = spacing * c;
            continue;
        }
        const double radius = spacing / (2.0 * std::sin(std::numbers::pi / spec.clusters));
        const double angle = 2.0 * std::numbers::pi * c / spec.clusters;
        centers(c, 0) = radius * std::cos(angle);
        centers(c, 1) = radius * std::sin(angle);
    }

    std::vector<int> labels;
    for (int c = 0; c < spec.clusters; ++c) {
        const int count = spec.points / spec.clusters + (c < spec.points % spec.clusters ? 1 : 0);
        labels.insert(labels.end(), static_cast<std::size_t>(count), c);
    }
    // Fisher-Yates with explicit draws so the order only depends on the seed.
    for (std::size_t i = labels.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(labels[i - 1], labels[j]);
    }

    Matrix x(spec.points, spec.dim);
    for (int i = 0; i < spec.points; ++i) {
        for (int d = 0; d < spec.dim; ++d) {
            x(i, d) = centers(labels[static_cast<std::size_t>(i)], d) + noise(rng);
        }
    }
    return {FeatureMatrix(std::move(x)), LabelVector(std::move(labels))};
}

FeatureMatrix jitter(const FeatureMatrix& features, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) {
        throw std::invalid_argument("jitter sigma must be non-negative");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma > 0.0 ? sigma : 1.0);
    Matrix out = features.data();
    if (sigma > 0.0) {
        for (Eigen::Index i = 0; i < out.rows(); ++i) {
            for (Eigen::Index j = 0; j < out.cols(); ++j) {
                out(i, j) += noise(rng);
            }
        }
    }
    return FeatureMatrix(std::move(out));
}

}  // namespace attnclust::pipeline
