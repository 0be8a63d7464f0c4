#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "attnclust/errors.hpp"
#include "attnclust/grabcut.hpp"

namespace httplib {
class Server;
}

namespace attnclust::service {

// Carries the HTTP status the error maps to (400, 404 or 409).
class ServiceError : public Error {
public:
    ServiceError(int status, std::string code, const std::string& detail)
        : Error(detail), status_(status), code_(std::move(code)) {}
    int status() const { return status_; }
    const std::string& code() const { return code_; }

private:
    int status_;
    std::string code_;
};

struct SessionSummary {
    std::string id;
    int width = 0;
    int height = 0;
    std::uint64_t revision = 0;
    std::uint64_t seed = 0;
    std::optional<Rect> bbox;
    std::size_t stroke_count = 0;
    int rounds = 0;  // rounds run since the trimap last changed
    bool converged = false;
    bool has_mask = false;
    std::size_t foreground = 0;
    std::optional<double> energy;
};

struct IterateResult {
    std::uint64_t revision = 0;
    std::size_t foreground = 0;
    int rounds = 0;
    std::optional<double> energy;
};

// FNV-1a of the id; every iterate on the session uses it.
std::uint64_t session_seed(const std::string& id);

/// In-memory sessions. Any trimap change (bbox or strokes) discards the
/// segmentation state, so a mask after n total iterate rounds equals
/// grabcut_segment(image, bbox, all strokes, n, seed).
class SessionStore {
public:
    using Clock = std::chrono::steady_clock;

    explicit SessionStore(std::chrono::seconds ttl = std::chrono::hours(1),
                          grabcut::GrabcutParams params = {});
    ~SessionStore();
    SessionStore(const SessionStore&) = delete;
    SessionStore& operator=(const SessionStore&) = delete;

    std::string create(std::string_view image_bytes);
    std::uint64_t set_bbox(const std::string& id, const Rect& bbox);
    std::uint64_t add_strokes(const std::string& id, const std::vector<grabcut::Stroke>& strokes);
    IterateResult iterate(const std::string& id, int rounds);
    std::string mask_pgm(const std::string& id) const;
    SessionSummary summary(const std::string& id) const;

    std::size_t size() const;
    // Drops sessions idle for longer than the TTL as of `now`.
    std::size_t purge_expired(Clock::time_point now = Clock::now());

private:
    struct Session;
    std::shared_ptr<Session> find(const std::string& id) const;

    std::chrono::seconds ttl_;
    grabcut::GrabcutParams params_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::uint64_t counter_ = 0;
};

nlohmann::json to_json(const SessionSummary& s);

// {"strokes":[{"kind":"fg"|"bg","points":[[x,y],...]}]} -> segments.
// A single-point polyline becomes a one-pixel stroke.
std::vector<grabcut::Stroke> strokes_from_json(const nlohmann::json& body);

// Registers the REST routes on `server`; serves `ui_dir` statically if given.
void mount(httplib::Server& server, SessionStore& store,
           const std::optional<std::filesystem::path>& ui_dir = std::nullopt);

}  // namespace attnclust::service
