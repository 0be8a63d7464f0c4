#include "attnclust/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <sstream>
#include <vector>

#include "attnclust/image.hpp"

namespace attnclust::io {

namespace {

constexpr std::string_view kMagic = "DTCF";
constexpr std::size_t kHeaderBytes = 12;

std::uint32_t read_u32_le(std::string_view bytes, std::size_t at) {
    std::uint32_t v = 0;
    for (int b = 3; b >= 0; --b) {
        v = (v << 8) | static_cast<unsigned char>(bytes[at + static_cast<std::size_t>(b)]);
    }
    return v;
}

void write_u32_le(std::string& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) {
        out.push_back(static_cast<char>((v >> (8 * b)) & 0xffU));
    }
}

std::string trim(std::string_view s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string_view::npos) {
        return {};
    }
    const auto end = s.find_last_not_of(" \t\r");
    return std::string(s.substr(begin, end - begin + 1));
}

bool parse_double(const std::string& field, double& out) {
    const char* first = field.data();
    const char* last = field.data() + field.size();
    if (first != last && *first == '+') {
        ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(trim(std::string_view(line).substr(start, comma - start)));
        if (comma == std::string::npos) {
            break;
        }
        start = comma + 1;
    }
    return out;
}

}  // namespace

FeatureMatrix parse_features_binary(std::string_view bytes) {
    if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic) {
        throw DataError("bad magic at byte 0: expected DTCF");
    }
    if (bytes.size() < kHeaderBytes) {
        throw DataError("truncated at byte " + std::to_string(bytes.size()) +
                        ": header needs 12 bytes");
    }
    const std::uint32_t rows = read_u32_le(bytes, 4);
    const std::uint32_t cols = read_u32_le(bytes, 8);
    if (rows == 0 || cols == 0) {
        throw DataError("feature file declares an empty matrix (" + std::to_string(rows) + "x" +
                        std::to_string(cols) + ")");
    }
    const std::uint64_t payload = static_cast<std::uint64_t>(rows) * cols * 4U;
    if (bytes.size() - kHeaderBytes < payload) {
        throw DataError("truncated at byte " + std::to_string(bytes.size()) + ": expected " +
                        std::to_string(kHeaderBytes + payload) + " bytes");
    }
    if (bytes.size() - kHeaderBytes > payload) {
        throw DataError("trailing data at byte " + std::to_string(kHeaderBytes + payload));
    }
    Matrix m(rows, cols);
    std::size_t at = kHeaderBytes;
    for (std::uint32_t i = 0; i < rows; ++i) {
        for (std::uint32_t j = 0; j < cols; ++j) {
            const std::uint32_t raw = read_u32_le(bytes, at);
            float f = 0.0F;
            std::memcpy(&f, &raw, sizeof f);
            if (!std::isfinite(f)) {
                throw DataError("non-finite value at row " + std::to_string(i) + ", column " +
                                std::to_string(j) + " (byte " + std::to_string(at) + ")");
            }
            m(i, j) = static_cast<double>(f);
            at += 4;
        }
    }
    return FeatureMatrix(std::move(m));
}

std::string encode_features_binary(const FeatureMatrix& features) {
    std::string out(kMagic);
    write_u32_le(out, static_cast<std::uint32_t>(features.rows()));
    write_u32_le(out, static_cast<std::uint32_t>(features.cols()));
    out.reserve(out.size() + static_cast<std::size_t>(features.rows() * features.cols()) * 4);
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        for (Eigen::Index j = 0; j < features.cols(); ++j) {
            const auto f = static_cast<float>(features.data()(i, j));
            std::uint32_t raw = 0;
            std::memcpy(&raw, &f, sizeof raw);
            write_u32_le(out, raw);
        }
    }
    return out;
}

FeatureMatrix parse_features_csv(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    std::vector<std::vector<double>> rows;
    std::size_t width = 0;
    int line_no = 0;
    bool first_content = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        const auto fields = split_commas(line);
        std::vector<double> values(fields.size());
        bool numeric = true;
        for (std::size_t j = 0; j < fields.size() && numeric; ++j) {
            numeric = parse_double(fields[j], values[j]);
        }
        if (first_content) {
            first_content = false;
            width = fields.size();
            if (!numeric) {
                continue;  // header row
            }
        }
        if (!numeric) {
            throw DataError("csv line " + std::to_string(line_no) + ": non-numeric field");
        }
        if (fields.size() != width) {
            throw DataError("csv line " + std::to_string(line_no) + ": expected " +
                            std::to_string(width) + " fields, found " + std::to_string(fields.size()));
        }
        for (std::size_t j = 0; j < values.size(); ++j) {
            const auto f = static_cast<float>(values[j]);
            if (!std::isfinite(f)) {
                throw DataError("non-finite value at row " + std::to_string(rows.size()) +
                                ", column " + std::to_string(j) + " (csv line " +
                                std::to_string(line_no) + ")");
            }
            values[j] = static_cast<double>(f);
        }
        rows.push_back(std::move(values));
    }
    if (rows.empty()) {
        throw DataError("csv holds no data rows");
    }
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < width; ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return FeatureMatrix(std::move(m));
}

FeatureMatrix parse_features(std::string_view bytes) {
    if (bytes.substr(0, kMagic.size()) == kMagic) {
        return parse_features_binary(bytes);
    }
    return parse_features_csv(bytes);
}

FeatureMatrix read_features(const std::filesystem::path& path) {
    return parse_features(read_file(path));
}

void write_features(const std::filesystem::path& path, const FeatureMatrix& features) {
    write_file(path, encode_features_binary(features));
}

LabelVector parse_labels(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    std::vector<int> labels;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string field = trim(line);
        if (field.empty()) {
            continue;
        }
        int v = 0;
        const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
        if (ec != std::errc() || ptr != field.data() + field.size()) {
            throw DataError("labels line " + std::to_string(line_no) + ": not an integer: '" + field +
                            "'");
        }
        if (v < 0) {
            throw DataError("labels line " + std::to_string(line_no) + ": negative id " +
                            std::to_string(v));
        }
        labels.push_back(v);
    }
    return LabelVector(std::move(labels));
}

std::string encode_labels(const LabelVector& labels) {
    std::string out;
    for (int v : labels) {
        out += std::to_string(v);
        out.push_back('\n');
    }
    return out;
}

LabelVector read_labels(const std::filesystem::path& path) { return parse_labels(read_file(path)); }

void write_labels(const std::filesystem::path& path, const LabelVector& labels) {
    write_file(path, encode_labels(labels));
}

nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            row.push_back(m(i, j));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
    if (!j.is_array()) {
        throw DataError("matrix json must be an array of rows");
    }
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j.front().size());
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
            throw DataError("matrix json row " + std::to_string(r) + " has the wrong length");
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
        }
    }
    return m;
}

nlohmann::json to_json(const ProbabilityMatrix& p) { return matrix_to_json(p.data()); }

ProbabilityMatrix probability_from_json(const nlohmann::json& j) {
    return ProbabilityMatrix(matrix_from_json(j));
}

nlohmann::json to_json(const ClusterState& s) {
    nlohmann::json offset = nlohmann::json::array();
    for (Eigen::Index i = 0; i < s.projection_offset.size(); ++i) {
        offset.push_back(s.projection_offset(i));
    }
    return {{"alpha", s.alpha},
            {"centers", matrix_to_json(s.centers)},
            {"projection_offset", offset},
            {"projection_weights", matrix_to_json(s.projection_weights)}};
}

ClusterState cluster_state_from_json(const nlohmann::json& j) {
    ClusterState s;
    s.alpha = j.at("alpha").get<double>();
    s.centers = matrix_from_json(j.at("centers"));
    s.projection_weights = matrix_from_json(j.at("projection_weights"));
    const auto& offset = j.at("projection_offset");
    s.projection_offset.resize(static_cast<Eigen::Index>(offset.size()));
    for (std::size_t i = 0; i < offset.size(); ++i) {
        s.projection_offset(static_cast<Eigen::Index>(i)) = offset[i].get<double>();
    }
    s.validate();
    return s;
}

nlohmann::json to_json(const LossBreakdown& l) {
    return {{"l1", l.l1}, {"l2", l.l2}, {"omega", l.omega}, {"total", l.total}};
}

LossBreakdown loss_from_json(const nlohmann::json& j) {
    LossBreakdown l;
    l.l1 = j.at("l1").get<double>();
    l.l2 = j.at("l2").get<double>();
    l.omega = j.at("omega").get<double>();
    l.total = j.at("total").get<double>();
    return l;
}

}  // namespace attnclust::io
