#include <atomic>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "attnclust/grabcut.hpp"
#include "attnclust/io.hpp"
#include "attnclust/metrics.hpp"
#include "attnclust/pipeline.hpp"
#include "attnclust/service.hpp"

#include <CLI11.hpp>
// After Eigen: <resolv.h> defines _res, which Eigen uses as a parameter name.
#include <httplib.h>

namespace fs = std::filesystem;
using namespace attnclust;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDiverged = 4;

Rect parse_rect(const std::string& text) {
    Rect r;
    char c1 = 0, c2 = 0, c3 = 0;
    std::istringstream in(text);
    if (!(in >> r.x >> c1 >> r.y >> c2 >> r.width >> c3 >> r.height) || c1 != ',' || c2 != ',' || c3 != ',' ||
        !in.eof()) {
        throw ConfigError("bbox must be x,y,w,h: '" + text + "'");
    }
    return r;
}

struct GrabcutOptions {
    int iterations = 5;
    std::uint64_t seed = 0;
    grabcut::GrabcutParams params;
};

void add_grabcut_options(CLI::App* cmd, GrabcutOptions& opt) {
    cmd->add_option("--iters", opt.iterations, "GrabCut rounds")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", opt.seed, "GMM initialisation seed");
    cmd->add_option("--gamma", opt.params.gamma, "smoothness weight");
    cmd->add_option("--components", opt.params.gmm_components, "GMM components per region")
        ->check(CLI::PositiveNumber);
}

BinaryMask segment_file(const fs::path& image_path, const Rect& bbox, const std::optional<fs::path>& strokes_path,
                        const GrabcutOptions& opt) {
    const RgbImage image = read_ppm(image_path);
    std::vector<grabcut::Stroke> strokes;
    if (strokes_path) {
        strokes = grabcut::parse_strokes(read_file(*strokes_path));
    }
    try {
        return grabcut::grabcut_segment(image, bbox, strokes, opt.iterations, opt.seed, opt.params);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(image_path.string() + ": " + e.what());
    } catch (const std::out_of_range& e) {
        throw ConfigError(image_path.string() + ": " + e.what());
    }
}

struct ManifestRow {
    fs::path image;
    Rect bbox;
    std::optional<fs::path> strokes;
};

std::vector<ManifestRow> parse_manifest(const fs::path& path) {
    std::istringstream in(read_file(path));
    const fs::path base = path.parent_path();
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
    std::vector<ManifestRow> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty() || line[0] == '#' || (line_no == 1 && line.rfind("image_path", 0) == 0)) {
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        for (std::string f; std::getline(ss, f, ',');) {
            fields.push_back(f);
        }
        if (fields.size() != 5 && fields.size() != 6) {
            throw DataError("manifest line " + std::to_string(line_no) + ": expected 5 or 6 fields");
        }
        ManifestRow row;
        row.image = resolve(fields[0]);
        row.bbox = parse_rect(fields[1] + "," + fields[2] + "," + fields[3] + "," + fields[4]);
        if (fields.size() == 6 && !fields[5].empty()) {
            row.strokes = resolve(fields[5]);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

int run_batch(const fs::path& manifest, const fs::path& out_dir, const GrabcutOptions& opt, unsigned threads) {
    const std::vector<ManifestRow> rows = parse_manifest(manifest);
    for (const ManifestRow& row : rows) {
        if (!fs::is_regular_file(row.image)) {
            throw ConfigError("missing image " + row.image.string());
        }
        if (row.strokes && !fs::is_regular_file(*row.strokes)) {
            throw ConfigError("missing strokes file " + row.strokes->string());
        }
    }
    fs::create_directories(out_dir);

    std::atomic<std::size_t> next{0};
    std::mutex report_mutex;
    int worst = 0;
    auto worker = [&] {
        for (std::size_t i = next++; i < rows.size(); i = next++) {
            const ManifestRow& row = rows[i];
            int code = 0;
            std::string message;
            try {
                const BinaryMask mask = segment_file(row.image, row.bbox, row.strokes, opt);
                write_pgm(out_dir / (row.image.stem().string() + ".pgm"), mask);
            } catch (const ConfigError& e) {
                code = kExitConfig;
                message = e.what();
            } catch (const DataError& e) {
                code = kExitData;
                message = e.what();
            }
            if (code != 0) {
                std::lock_guard lock(report_mutex);
                std::cerr << "error: " << row.image.string() << ": " << message << "\n";
                worst = std::max(worst, code);
            }
        }
    };
    threads = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(rows.size())));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }
    return worst;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deep clustering experiments and GrabCut region-of-interest tools"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "train and evaluate a clustering experiment");
    std::string config_path;
    std::vector<std::string> overrides;
    run->add_option("--config", config_path, "key=value config file")->required();
    run->add_option("overrides", overrides, "key=value overrides");

    // grabcut
    auto* gc = app.add_subcommand("grabcut", "segment one image");
    std::string gc_image, gc_bbox, gc_out, gc_cutout;
    std::optional<std::string> gc_strokes;
    GrabcutOptions gc_opt;
    gc->add_option("--image", gc_image, "input PPM")->required();
    gc->add_option("--bbox", gc_bbox, "x,y,w,h")->required();
    gc->add_option("--strokes", gc_strokes, "stroke file (fg|bg x0 y0 x1 y1 per line)");
    gc->add_option("--out", gc_out, "output mask PGM")->required();
    gc->add_option("--cutout", gc_cutout, "optional PPM with background blacked out");
    add_grabcut_options(gc, gc_opt);

    // grabcut-batch
    auto* batch = app.add_subcommand("grabcut-batch", "segment every image in a manifest");
    std::string manifest, out_dir;
    unsigned threads = std::max(1U, std::thread::hardware_concurrency());
    GrabcutOptions batch_opt;
    batch->add_option("--manifest", manifest, "CSV image_path,x,y,w,h[,strokes_path]")->required();
    batch->add_option("--out-dir", out_dir, "mask output directory")->required();
    batch->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    add_grabcut_options(batch, batch_opt);

    // eval
    auto* eval = app.add_subcommand("eval", "score predicted labels against ground truth");
    std::string pred_path, truth_path, nmi_norm = "geometric";
    eval->add_option("--pred", pred_path)->required();
    eval->add_option("--truth", truth_path)->required();
    eval->add_option("--nmi-norm", nmi_norm)->check(CLI::IsMember({"geometric", "arithmetic"}));

    // serve
    auto* serve = app.add_subcommand("serve", "run the annotation HTTP service");
    int port = 8080;
    std::string host = "127.0.0.1";
    std::optional<std::string> ui_dir;
    int ttl_seconds = 3600;
    serve->add_option("--port", port)->check(CLI::Range(0, 65535));
    serve->add_option("--host", host);
    serve->add_option("--ui-dir", ui_dir, "static UI bundle to serve at /");
    serve->add_option("--ttl", ttl_seconds, "idle session lifetime in seconds")->check(CLI::PositiveNumber);

    // synth
    auto* synth = app.add_subcommand("synth", "write a seeded Gaussian-blob dataset");
    pipeline::BlobSpec spec;
    std::string synth_features, synth_labels, synth_jitter;
    double jitter_sigma = 0.5;
    synth->add_option("--clusters", spec.clusters)->check(CLI::PositiveNumber);
    synth->add_option("--points", spec.points)->check(CLI::PositiveNumber);
    synth->add_option("--dim", spec.dim)->check(CLI::PositiveNumber);
    synth->add_option("--separation", spec.separation, "adjacent center distance in sigmas");
    synth->add_option("--sigma", spec.sigma);
    synth->add_option("--seed", spec.seed);
    synth->add_option("--features", synth_features, "output DTCF file")->required();
    synth->add_option("--labels", synth_labels, "output labels file")->required();
    synth->add_option("--jittered", synth_jitter, "also write a jittered copy (PI transform)");
    synth->add_option("--jitter-sigma", jitter_sigma);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*run) {
            const pipeline::ExperimentConfig cfg = [&] {
                try {
                    return pipeline::load_config(config_path, overrides);
                } catch (const ConfigError& e) {
                    throw ConfigError(std::string("config: ") + e.what());
                }
            }();
            const pipeline::ExperimentResult result = pipeline::run_experiment(cfg);
            pipeline::write_outputs(cfg, result);
            std::cout << pipeline::emit_report(result.report, pipeline::ReportFormat::Text);
        } else if (*gc) {
            const BinaryMask mask =
                segment_file(gc_image, parse_rect(gc_bbox),
                             gc_strokes ? std::optional<fs::path>(*gc_strokes) : std::nullopt, gc_opt);
            write_pgm(gc_out, mask);
            if (!gc_cutout.empty()) {
                write_ppm(gc_cutout, grabcut::apply_mask(read_ppm(gc_image), mask, Rgb{0, 0, 0}));
            }
            std::cout << "foreground " << mask.foreground_count() << "\n";
        } else if (*batch) {
            return run_batch(manifest, out_dir, batch_opt, threads);
        } else if (*eval) {
            const LabelVector pred = io::read_labels(pred_path);
            const LabelVector truth = io::read_labels(truth_path);
            if (pred.size() != truth.size()) {
                throw DataError("prediction has " + std::to_string(pred.size()) + " labels, truth has " +
                                std::to_string(truth.size()));
            }
            const auto norm = nmi_norm == "geometric" ? metrics::NmiNormalization::Geometric
                                                      : metrics::NmiNormalization::Arithmetic;
            const metrics::Scores s = metrics::evaluate(pred, truth, norm);
            std::printf("acc=%.4f nmi=%.4f ari=%.4f\n", s.accuracy, s.nmi, s.ari);
        } else if (*serve) {
            service::SessionStore store{std::chrono::seconds(ttl_seconds)};
            httplib::Server server;
            service::mount(server, store, ui_dir ? std::optional<fs::path>(*ui_dir) : std::nullopt);
            std::cerr << "listening on " << host << ":" << port << "\n";
            if (!server.listen(host, port)) {
                throw ConfigError("cannot listen on " + host + ":" + std::to_string(port));
            }
        } else if (*synth) {
            const pipeline::Dataset data = pipeline::make_blobs(spec);
            io::write_features(synth_features, data.features);
            io::write_labels(synth_labels, data.labels);
            if (!synth_jitter.empty()) {
                io::write_features(synth_jitter, pipeline::jitter(data.features, jitter_sigma, spec.seed + 1));
            }
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DivergedError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
