#include "attnclust/service.hpp"

#include <cstdio>
#include <mutex>
#include <random>

#include <httplib.h>

namespace attnclust::service {

using grabcut::Stroke;

struct SessionStore::Session {
    std::string id;
    RgbImage image;
    std::uint64_t seed = 0;
    std::optional<Rect> bbox;
    std::vector<Stroke> strokes;
    std::unique_ptr<grabcut::GrabcutSession> segmentation;
    std::optional<BinaryMask> mask;
    std::uint64_t revision = 0;
    SessionStore::Clock::time_point last_access;
    mutable std::shared_mutex mutex;

    void reset_segmentation() {
        segmentation.reset();
        mask.reset();
    }
};

namespace {

ServiceError bad_request(const std::string& detail) { return {400, "bad_request", detail}; }
ServiceError conflict(const std::string& detail) { return {409, "conflict", detail}; }

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

std::uint64_t session_seed(const std::string& id) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : id) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

SessionStore::SessionStore(std::chrono::seconds ttl, grabcut::GrabcutParams params)
    : ttl_(ttl), params_(params) {}

SessionStore::~SessionStore() = default;

std::shared_ptr<SessionStore::Session> SessionStore::find(const std::string& id) const {
    std::shared_lock lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) {
        throw ServiceError(404, "not_found", "unknown session '" + id + "'");
    }
    return it->second;
}

std::string SessionStore::create(std::string_view image_bytes) {
    if (image_bytes.empty()) {
        throw bad_request("empty image payload");
    }
    RgbImage image;
    try {
        image = decode_ppm(image_bytes);
    } catch (const std::exception& e) {
        throw bad_request(std::string("undecodable image: ") + e.what());
    }
    purge_expired();

    auto session = std::make_shared<Session>();
    session->image = std::move(image);
    session->last_access = Clock::now();

    static thread_local std::mt19937_64 rng{std::random_device{}()};
    std::unique_lock lock(mutex_);
    session->id = hex64(rng()) + hex64(++counter_);
    session->seed = session_seed(session->id);
    sessions_.emplace(session->id, session);
    return session->id;
}

std::uint64_t SessionStore::set_bbox(const std::string& id, const Rect& bbox) {
    const auto s = find(id);
    std::unique_lock lock(s->mutex);
    try {
        grabcut::check_bbox(bbox, s->image.width(), s->image.height());
    } catch (const std::invalid_argument& e) {
        throw bad_request(e.what());
    }
    s->bbox = bbox;
    s->strokes.clear();
    s->reset_segmentation();
    s->last_access = Clock::now();
    return ++s->revision;
}

std::uint64_t SessionStore::add_strokes(const std::string& id, const std::vector<Stroke>& strokes) {
    const auto s = find(id);
    std::unique_lock lock(s->mutex);
    if (!s->bbox) {
        throw conflict("strokes require a bounding box first");
    }
    for (const Stroke& stroke : strokes) {
        for (const Point p : {stroke.from, stroke.to}) {
            if (p.x < 0 || p.y < 0 || p.x >= s->image.width() || p.y >= s->image.height()) {
                throw bad_request("stroke point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                                  ") is outside the image");
            }
        }
    }
    if (!strokes.empty()) {
        s->strokes.insert(s->strokes.end(), strokes.begin(), strokes.end());
        s->reset_segmentation();
    }
    s->last_access = Clock::now();
    return ++s->revision;
}

IterateResult SessionStore::iterate(const std::string& id, int rounds) {
    if (rounds < 0) {
        throw bad_request("rounds must be non-negative");
    }
    const auto s = find(id);
    std::unique_lock lock(s->mutex);
    if (!s->bbox) {
        throw conflict("iterate requires a bounding box first");
    }
    if (rounds > 0) {
        if (!s->segmentation) {
            grabcut::Trimap trimap = grabcut::Trimap::from_bbox(s->image.width(), s->image.height(), *s->bbox);
            trimap.apply_strokes(s->strokes);
            try {
                s->segmentation =
                    std::make_unique<grabcut::GrabcutSession>(s->image, std::move(trimap), params_, s->seed);
            } catch (const std::invalid_argument& e) {
                throw bad_request(e.what());
            }
        }
        auto& seg = *s->segmentation;
        for (int i = 0; i < rounds && !seg.converged(); ++i) {
            seg.run_round();
        }
        s->mask = seg.mask();
    }
    s->last_access = Clock::now();
    IterateResult out;
    out.revision = ++s->revision;
    if (s->mask) {
        out.foreground = s->mask->foreground_count();
    }
    if (s->segmentation) {
        out.rounds = s->segmentation->rounds();
        out.energy = s->segmentation->energy();
    }
    return out;
}

std::string SessionStore::mask_pgm(const std::string& id) const {
    const auto s = find(id);
    std::shared_lock lock(s->mutex);
    if (!s->mask) {
        throw conflict("no mask yet: run iterate after the last trimap change");
    }
    return encode_pgm(*s->mask);
}

SessionSummary SessionStore::summary(const std::string& id) const {
    const auto s = find(id);
    std::shared_lock lock(s->mutex);
    SessionSummary out;
    out.id = s->id;
    out.width = s->image.width();
    out.height = s->image.height();
    out.revision = s->revision;
    out.seed = s->seed;
    out.bbox = s->bbox;
    out.stroke_count = s->strokes.size();
    out.has_mask = s->mask.has_value();
    if (s->mask) {
        out.foreground = s->mask->foreground_count();
    }
    if (s->segmentation) {
        out.rounds = s->segmentation->rounds();
        out.converged = s->segmentation->converged();
        out.energy = s->segmentation->energy();
    }
    return out;
}

std::size_t SessionStore::size() const {
    std::shared_lock lock(mutex_);
    return sessions_.size();
}

std::size_t SessionStore::purge_expired(Clock::time_point now) {
    std::unique_lock lock(mutex_);
    std::size_t dropped = 0;
    for (auto it = sessions_.begin(); it != sessions_.end();) {
        Clock::time_point last;
        {
            std::shared_lock session_lock(it->second->mutex);
            last = it->second->last_access;
        }
        if (now - last > ttl_) {
            it = sessions_.erase(it);
            ++dropped;
        } else {
            ++it;
        }
    }
    return dropped;
}

nlohmann::json to_json(const SessionSummary& s) {
    nlohmann::json j{{"id", s.id},
                     {"width", s.width},
                     {"height", s.height},
                     {"revision", s.revision},
                     {"seed", std::to_string(s.seed)},
                     {"strokes", s.stroke_count},
                     {"rounds", s.rounds},
                     {"converged", s.converged},
                     {"has_mask", s.has_mask},
                     {"foreground", s.foreground}};
    j["bbox"] = s.bbox ? nlohmann::json{{"x", s.bbox->x}, {"y", s.bbox->y}, {"w", s.bbox->width},
                                         {"h", s.bbox->height}}
                       : nlohmann::json(nullptr);
    j["energy"] = s.energy ? nlohmann::json(*s.energy) : nlohmann::json(nullptr);
    return j;
}

std::vector<Stroke> strokes_from_json(const nlohmann::json& body) {
    if (!body.is_object() || !body.contains("strokes") || !body["strokes"].is_array()) {
        throw bad_request("expected {\"strokes\": [...]}");
    }
    std::vector<Stroke> out;
    for (const auto& item : body["strokes"]) {
        const std::string kind = item.value("kind", "");
        if (kind != "fg" && kind != "bg") {
            throw bad_request("stroke kind must be \"fg\" or \"bg\"");
        }
        const auto& points = item.value("points", nlohmann::json::array());
        if (!points.is_array() || points.empty()) {
            throw bad_request("stroke needs at least one point");
        }
        std::vector<Point> poly;
        for (const auto& p : points) {
            if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() || !p[1].is_number_integer()) {
                throw bad_request("stroke points must be [x, y] integer pairs");
            }
            poly.push_back({p[0].get<int>(), p[1].get<int>()});
        }
        const auto k = kind == "fg" ? Stroke::Kind::Foreground : Stroke::Kind::Background;
        if (poly.size() == 1) {
            out.push_back({k, poly[0], poly[0]});
        }
        for (std::size_t i = 1; i < poly.size(); ++i) {
            out.push_back({k, poly[i - 1], poly[i]});
        }
    }
    return out;
}

namespace {

nlohmann::json parse_body(const httplib::Request& req) {
    try {
        return nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception& e) {
        throw bad_request(std::string("malformed json: ") + e.what());
    }
}

void send_json(httplib::Response& res, const nlohmann::json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
}

template <typename F>
httplib::Server::Handler guarded(F body) {
    return [body](const httplib::Request& req, httplib::Response& res) {
        try {
            body(req, res);
        } catch (const ServiceError& e) {
            send_json(res, {{"error", e.code()}, {"detail", e.what()}}, e.status());
        } catch (const nlohmann::json::exception& e) {
            send_json(res, {{"error", "bad_request"}, {"detail", e.what()}}, 400);
        } catch (const std::exception& e) {
            send_json(res, {{"error", "bad_request"}, {"detail", e.what()}}, 400);
        }
    };
}

}  // namespace

void mount(httplib::Server& server, SessionStore& store, const std::optional<std::filesystem::path>& ui_dir) {
    server.Post("/sessions", guarded([&store](const httplib::Request& req, httplib::Response& res) {
                    send_json(res, {{"id", store.create(req.body)}}, 201);
                }));
    server.Post(R"(/sessions/([^/]+)/bbox)",
                guarded([&store](const httplib::Request& req, httplib::Response& res) {
                    const auto body = parse_body(req);
                    const Rect bbox{body.at("x").get<int>(), body.at("y").get<int>(), body.at("w").get<int>(),
                                    body.at("h").get<int>()};
                    send_json(res, {{"revision", store.set_bbox(req.matches[1], bbox)}});
                }));
    server.Post(R"(/sessions/([^/]+)/strokes)",
                guarded([&store](const httplib::Request& req, httplib::Response& res) {
                    const auto strokes = strokes_from_json(parse_body(req));
                    send_json(res, {{"revision", store.add_strokes(req.matches[1], strokes)}});
                }));
    server.Post(R"(/sessions/([^/]+)/iterate)",
                guarded([&store](const httplib::Request& req, httplib::Response& res) {
                    const auto body = req.body.empty() ? nlohmann::json::object() : parse_body(req);
                    const IterateResult r = store.iterate(req.matches[1], body.value("rounds", 1));
                    send_json(res, {{"revision", r.revision},
                                    {"foreground", r.foreground},
                                    {"rounds", r.rounds},
                                    {"energy", r.energy ? nlohmann::json(*r.energy) : nlohmann::json(nullptr)}});
                }));
    server.Get(R"(/sessions/([^/]+)/mask)", guarded([&store](const httplib::Request& req, httplib::Response& res) {
                   res.set_content(store.mask_pgm(req.matches[1]), "image/x-portable-graymap");
               }));
    server.Get(R"(/sessions/([^/]+))", guarded([&store](const httplib::Request& req, httplib::Response& res) {
                   send_json(res, to_json(store.summary(req.matches[1])));
               }));
    if (ui_dir) {
        if (!server.set_mount_point("/", ui_dir->string())) {
            throw ConfigError("ui directory does not exist: " + ui_dir->string());
        }
    }
}

}  // namespace attnclust::service
