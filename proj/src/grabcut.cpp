#include "attnclust/grabcut.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <stdexcept>
#include <string>

#include "attnclust/errors.hpp"

namespace attnclust::grabcut {

std::vector<Point> rasterize(const Stroke& stroke) {
    std::vector<Point> out;
    int x = stroke.from.x;
    int y = stroke.from.y;
    const int dx = std::abs(stroke.to.x - x);
    const int dy = -std::abs(stroke.to.y - y);
    const int sx = x < stroke.to.x ? 1 : -1;
    const int sy = y < stroke.to.y ? 1 : -1;
    int err = dx + dy;
    while (true) {
        out.push_back({x, y});
        if (x == stroke.to.x && y == stroke.to.y) {
            break;
        }
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y += sy;
        }
    }
    return out;
}

std::vector<Stroke> parse_strokes(std::string_view text) {
    std::vector<Stroke> strokes;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') {
            continue;
        }
        std::istringstream fields(line);
        std::string kind;
        Stroke s;
        std::string extra;
        if (!(fields >> kind >> s.from.x >> s.from.y >> s.to.x >> s.to.y) || (fields >> extra)) {
            throw DataError("strokes line " + std::to_string(line_no) +
                            ": expected `fg|bg x0 y0 x1 y1`");
        }
        if (kind == "fg") {
            s.kind = Stroke::Kind::Foreground;
        } else if (kind == "bg") {
            s.kind = Stroke::Kind::Background;
        } else {
            throw DataError("strokes line " + std::to_string(line_no) + ": unknown kind '" + kind +
                            "'");
        }
        strokes.push_back(s);
    }
    return strokes;
}

std::string format_strokes(std::span<const Stroke> strokes) {
    std::string out;
    for (const Stroke& s : strokes) {
        out += s.kind == Stroke::Kind::Foreground ? "fg " : "bg ";
        out += std::to_string(s.from.x) + " " + std::to_string(s.from.y) + " " +
               std::to_string(s.to.x) + " " + std::to_string(s.to.y) + "\n";
    }
    return out;
}

void check_bbox(const Rect& bbox, int width, int height) {
    if (bbox.width <= 0 || bbox.height <= 0) {
        throw std::invalid_argument("bounding box has zero area");
    }
    if (bbox.x < 0 || bbox.y < 0 || bbox.x + bbox.width > width || bbox.y + bbox.height > height) {
        throw std::invalid_argument("bounding box extends outside the image");
    }
    if (bbox.width == width && bbox.height == height) {
        throw std::invalid_argument("no background sample: bounding box covers the whole image");
    }
}

Trimap Trimap::from_bbox(int width, int height, const Rect& bbox) {
    check_bbox(bbox, width, height);
    Trimap t;
    t.width_ = width;
    t.height_ = height;
    t.labels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
                     TrimapLabel::DefiniteBackground);
    for (int y = bbox.y; y < bbox.y + bbox.height; ++y) {
        for (int x = bbox.x; x < bbox.x + bbox.width; ++x) {
            t.labels_[t.index(x, y)] = TrimapLabel::ProbableForeground;
        }
    }
    return t;
}

void Trimap::apply_strokes(std::span<const Stroke> strokes) {
    for (const Stroke& s : strokes) {
        for (const Point& p : {s.from, s.to}) {
            if (p.x < 0 || p.y < 0 || p.x >= width_ || p.y >= height_) {
                throw std::out_of_range("stroke point (" + std::to_string(p.x) + "," +
                                        std::to_string(p.y) + ") outside the image");
            }
        }
    }
    for (const Stroke& s : strokes) {
        const TrimapLabel label = s.kind == Stroke::Kind::Foreground ? TrimapLabel::DefiniteForeground
                                                                     : TrimapLabel::DefiniteBackground;
        for (const Point& p : rasterize(s)) {
            labels_[index(p.x, p.y)] = label;
        }
    }
}

void Trimap::validate() const {
    bool fg = false;
    bool bg = false;
    for (TrimapLabel l : labels_) {
        (is_foreground(l) ? fg : bg) = true;
    }
    if (!fg) {
        throw std::invalid_argument("trimap has no foreground pixels");
    }
    if (!bg) {
        throw std::invalid_argument("no background sample in trimap");
    }
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Forward neighbour offsets matching GrabcutSession::smooth_.
constexpr std::array<std::array<int, 2>, 4> kForward = {{{1, 0}, {-1, 1}, {0, 1}, {1, 1}}};

ColorGmm initial_model(const std::vector<Color>& pixels, int components, std::uint64_t seed,
                       double epsilon) {
    const int k = std::min<int>(components, static_cast<int>(pixels.size()));
    return fit_gmm(pixels, k, seed, epsilon);
}

}  // namespace

GrabcutSession::GrabcutSession(RgbImage image, Trimap trimap, GrabcutParams params,
                               std::uint64_t seed)
    : image_(std::move(image)), trimap_(std::move(trimap)), params_(params) {
    if (image_.width() != trimap_.width() || image_.height() != trimap_.height()) {
        throw std::invalid_argument("trimap dimensions do not match the image");
    }
    if (params_.gmm_components < 1 || !(params_.gamma >= 0.0) || !(params_.covariance_epsilon > 0.0)) {
        throw std::invalid_argument("invalid grabcut parameters");
    }
    trimap_.validate();

    colors_.reserve(image_.pixel_count());
    for (const Rgb& p : image_.pixels()) {
        colors_.emplace_back(p.r, p.g, p.b);
    }
    compute_smoothness();

    mask_ = BinaryMask(image_.width(), image_.height());
    std::vector<Color> fg;
    std::vector<Color> bg;
    for (std::size_t i = 0; i < colors_.size(); ++i) {
        const bool f = is_foreground(trimap_[i]);
        mask_.set(i, f);
        (f ? fg : bg).push_back(colors_[i]);
    }
    fg_ = initial_model(fg, params_.gmm_components, splitmix64(seed), params_.covariance_epsilon);
    bg_ = initial_model(bg, params_.gmm_components, splitmix64(seed ^ 0x5bd1e995ULL),
                        params_.covariance_epsilon);
    energy_ = energy_of(mask_);
}

void GrabcutSession::compute_smoothness() {
    const int w = image_.width();
    const int h = image_.height();
    auto diff2 = [&](int x0, int y0, int x1, int y1) {
        return (colors_[image_.index(x0, y0)] - colors_[image_.index(x1, y1)]).squaredNorm();
    };

    double total = 0.0;
    std::size_t pairs = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (const auto& off : kForward) {
                const int nx = x + off[0];
                const int ny = y + off[1];
                if (nx >= 0 && nx < w && ny < h) {
                    total += diff2(x, y, nx, ny);
                    ++pairs;
                }
            }
        }
    }
    const double mean = pairs > 0 ? total / static_cast<double>(pairs) : 0.0;
    const double beta = mean > 0.0 ? 1.0 / (2.0 * mean) : 0.0;

    smooth_.assign(colors_.size(), {0.0, 0.0, 0.0, 0.0});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (std::size_t d = 0; d < kForward.size(); ++d) {
                const int nx = x + kForward[d][0];
                const int ny = y + kForward[d][1];
                if (nx >= 0 && nx < w && ny < h) {
                    const double dist = (kForward[d][0] != 0 && kForward[d][1] != 0) ? std::sqrt(2.0) : 1.0;
                    smooth_[image_.index(x, y)][d] =
                        params_.gamma / dist * std::exp(-beta * diff2(x, y, nx, ny));
                }
            }
        }
    }
}

double GrabcutSession::energy_of(const BinaryMask& mask) const {
    double data = 0.0;
    for (std::size_t i = 0; i < colors_.size(); ++i) {
        data += mask[i] ? fg_.min_cost(colors_[i]) : bg_.min_cost(colors_[i]);
    }
    double smooth = 0.0;
    const int w = image_.width();
    const int h = image_.height();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (std::size_t d = 0; d < kForward.size(); ++d) {
                const int nx = x + kForward[d][0];
                const int ny = y + kForward[d][1];
                if (nx >= 0 && nx < w && ny < h && mask.at(x, y) != mask.at(nx, ny)) {
                    smooth += smooth_[image_.index(x, y)][d];
                }
            }
        }
    }
    return data + smooth;
}

PixelGraph GrabcutSession::build_graph() const {
    const int w = image_.width();
    const int h = image_.height();
    PixelGraph graph(w * h);

    // Larger than any pixel's total n-link capacity, so hard t-links are never cut.
    std::vector<double> incident(colors_.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (std::size_t d = 0; d < kForward.size(); ++d) {
                const int nx = x + kForward[d][0];
                const int ny = y + kForward[d][1];
                if (nx >= 0 && nx < w && ny < h) {
                    const double c = smooth_[image_.index(x, y)][d];
                    incident[image_.index(x, y)] += c;
                    incident[image_.index(nx, ny)] += c;
                    if (c > 0.0) {
                        graph.add_nlink(static_cast<int>(image_.index(x, y)),
                                        static_cast<int>(image_.index(nx, ny)), c);
                    }
                }
            }
        }
    }
    const double hard = 1.0 + *std::max_element(incident.begin(), incident.end());

    for (std::size_t i = 0; i < colors_.size(); ++i) {
        const int node = static_cast<int>(i);
        switch (trimap_[i]) {
        case TrimapLabel::DefiniteForeground:
            graph.set_terminal_capacities(node, hard, 0.0);
            break;
        case TrimapLabel::DefiniteBackground:
            graph.set_terminal_capacities(node, 0.0, hard);
            break;
        default: {
            // Source link is cut when the pixel goes to background.
            const double cost_bg = bg_.min_cost(colors_[i]);
            const double cost_fg = fg_.min_cost(colors_[i]);
            const double floor = std::min(cost_bg, cost_fg);
            graph.set_terminal_capacities(node, cost_bg - floor, cost_fg - floor);
        }
        }
    }
    return graph;
}

RoundStats GrabcutSession::run_round() {
    // Assign each pixel to its cheapest component within its current region.
    std::vector<Color> fg_pixels;
    std::vector<Color> bg_pixels;
    std::vector<int> fg_assign;
    std::vector<int> bg_assign;
    for (std::size_t i = 0; i < colors_.size(); ++i) {
        if (mask_[i]) {
            fg_pixels.push_back(colors_[i]);
            fg_assign.push_back(static_cast<int>(fg_.best_component(colors_[i])));
        } else {
            bg_pixels.push_back(colors_[i]);
            bg_assign.push_back(static_cast<int>(bg_.best_component(colors_[i])));
        }
    }
    // An empty region keeps its previous model.
    if (!fg_pixels.empty()) {
        fg_ = ColorGmm::learn(fg_pixels, fg_assign, static_cast<int>(fg_.size()), params_.covariance_epsilon);
    }
    if (!bg_pixels.empty()) {
        bg_ = ColorGmm::learn(bg_pixels, bg_assign, static_cast<int>(bg_.size()), params_.covariance_epsilon);
    }

    const MinCut cut = max_flow_min_cut(build_graph());
    BinaryMask next(image_.width(), image_.height());
    std::size_t changed = 0;
    for (std::size_t i = 0; i < colors_.size(); ++i) {
        bool f = cut.source_side[i] != 0;
        if (is_definite(trimap_[i])) {
            f = trimap_[i] == TrimapLabel::DefiniteForeground;
        }
        next.set(i, f);
        changed += (f != mask_[i]) ? 1 : 0;
    }
    mask_ = std::move(next);
    energy_ = energy_of(mask_);
    ++rounds_;

    RoundStats stats;
    stats.energy = energy_;
    stats.changed_fraction = static_cast<double>(changed) / static_cast<double>(colors_.size());
    converged_ = stats.changed_fraction < params_.convergence_fraction;
    return stats;
}

SegmentResult grabcut_run(const RgbImage& image, const Rect& bbox, std::span<const Stroke> strokes,
                          int iterations, std::uint64_t seed, const GrabcutParams& params) {
    if (iterations < 1) {
        throw std::invalid_argument("grabcut needs at least one iteration");
    }
    Trimap trimap = Trimap::from_bbox(image.width(), image.height(), bbox);
    trimap.apply_strokes(strokes);
    GrabcutSession session(image, std::move(trimap), params, seed);

    SegmentResult result;
    result.energies.push_back(session.energy());
    while (session.rounds() < iterations && !session.converged()) {
        result.energies.push_back(session.run_round().energy);
    }
    result.rounds = session.rounds();
    result.mask = session.mask();
    return result;
}

BinaryMask grabcut_segment(const RgbImage& image, const Rect& bbox, std::span<const Stroke> strokes,
                           int iterations, std::uint64_t seed, const GrabcutParams& params) {
    return grabcut_run(image, bbox, strokes, iterations, seed, params).mask;
}

RgbImage apply_mask(const RgbImage& image, const BinaryMask& mask, Rgb fill) {
    if (image.width() != mask.width() || image.height() != mask.height()) {
        throw std::invalid_argument("mask dimensions do not match the image");
    }
    RgbImage out = image;
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            if (!mask.at(x, y)) {
                out.at(x, y) = fill;
            }
        }
    }
    return out;
}

}  // namespace attnclust::grabcut
