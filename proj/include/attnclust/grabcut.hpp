#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attnclust/gmm.hpp"
#include "attnclust/image.hpp"
#include "attnclust/maxflow.hpp"

namespace attnclust::grabcut {

enum class TrimapLabel : std::uint8_t {
    DefiniteBackground,
    ProbableBackground,
    ProbableForeground,
    DefiniteForeground,
};

inline bool is_foreground(TrimapLabel l) {
    return l == TrimapLabel::ProbableForeground || l == TrimapLabel::DefiniteForeground;
}

inline bool is_definite(TrimapLabel l) {
    return l == TrimapLabel::DefiniteForeground || l == TrimapLabel::DefiniteBackground;
}

/// A straight stroke segment; polylines are sequences of these.
struct Stroke {
    enum class Kind { Foreground, Background };
    Kind kind = Kind::Foreground;
    Point from;
    Point to;

    friend bool operator==(const Stroke&, const Stroke&) = default;
};

// Pixels covered by the segment (Bresenham, one pixel wide).
std::vector<Point> rasterize(const Stroke& stroke);

// Parses lines of `fg|bg x0 y0 x1 y1`. Blank lines and lines starting with
// '#' are ignored. Throws DataError naming the offending line.
std::vector<Stroke> parse_strokes(std::string_view text);
std::string format_strokes(std::span<const Stroke> strokes);

// Throws std::invalid_argument unless bbox has positive area, lies inside a
// width x height image and leaves at least one pixel outside it.
void check_bbox(const Rect& bbox, int width, int height);

class Trimap {
public:
    // Outside bbox: DefiniteBackground; inside: ProbableForeground.
    static Trimap from_bbox(int width, int height, const Rect& bbox);

    // Stroked pixels become DefiniteForeground / DefiniteBackground. Later
    // strokes win. Throws std::out_of_range if a stroke leaves the image.
    void apply_strokes(std::span<const Stroke> strokes);

    int width() const { return width_; }
    int height() const { return height_; }
    TrimapLabel at(int x, int y) const { return labels_[index(x, y)]; }
    TrimapLabel operator[](std::size_t i) const { return labels_[i]; }
    std::size_t pixel_count() const { return labels_.size(); }

    // Throws std::invalid_argument unless both a foreground-side and a
    // background-side pixel exist.
    void validate() const;

private:
    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<TrimapLabel> labels_;
};

struct GrabcutParams {
    int gmm_components = 5;
    double gamma = 50.0;
    double covariance_epsilon = kDefaultCovarianceEpsilon;
    // Stop once fewer than this fraction of pixels change label in a round.
    double convergence_fraction = 0.001;
};

struct RoundStats {
    double energy = 0.0;          // after the round's cut
    double changed_fraction = 0.0;
};

/// Iterative GMM fitting + min-cut on one image. Each round assigns every
/// pixel to its cheapest component, re-learns both GMMs in closed form and
/// re-cuts the graph. The energy (data + smoothness) never increases.
class GrabcutSession {
public:
    GrabcutSession(RgbImage image, Trimap trimap, GrabcutParams params, std::uint64_t seed);

    RoundStats run_round();

    const RgbImage& image() const { return image_; }
    const Trimap& trimap() const { return trimap_; }
    const BinaryMask& mask() const { return mask_; }
    // Energy of the current mask under the current GMMs.
    double energy() const { return energy_; }
    bool converged() const { return converged_; }
    int rounds() const { return rounds_; }
    const ColorGmm& foreground_model() const { return fg_; }
    const ColorGmm& background_model() const { return bg_; }

    // Energy of an arbitrary labelling under the current models.
    double energy_of(const BinaryMask& mask) const;

private:
    void compute_smoothness();
    PixelGraph build_graph() const;

    RgbImage image_;
    Trimap trimap_;
    GrabcutParams params_;
    std::vector<Color> colors_;
    // Forward neighbour weights per pixel: right, down-left, down, down-right.
    std::vector<std::array<double, 4>> smooth_;
    ColorGmm fg_;
    ColorGmm bg_;
    BinaryMask mask_;
    double energy_ = 0.0;
    bool converged_ = false;
    int rounds_ = 0;
};

struct SegmentResult {
    BinaryMask mask;
    // energies[0] is the initial labelling; one entry per completed round after.
    std::vector<double> energies;
    int rounds = 0;
};

/// Runs up to `iterations` rounds, stopping early when the label change
/// falls below params.convergence_fraction.
SegmentResult grabcut_run(const RgbImage& image, const Rect& bbox, std::span<const Stroke> strokes,
                          int iterations, std::uint64_t seed, const GrabcutParams& params = {});

BinaryMask grabcut_segment(const RgbImage& image, const Rect& bbox, std::span<const Stroke> strokes,
                           int iterations, std::uint64_t seed, const GrabcutParams& params = {});

// Background pixels replaced by fill; foreground untouched.
RgbImage apply_mask(const RgbImage& image, const BinaryMask& mask, Rgb fill);

}  // namespace attnclust::grabcut
