#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "attnclust/core.hpp"

namespace attnclust::io {

/// Binary feature file: "DTCF", uint32 LE rows, uint32 LE cols, then
/// rows*cols float32 LE values, row-major.
FeatureMatrix parse_features_binary(std::string_view bytes);
std::string encode_features_binary(const FeatureMatrix& features);

/// Comma separated rows with an optional non-numeric header row. Values are
/// rounded to float32 so CSV and binary inputs load identically.
FeatureMatrix parse_features_csv(std::string_view text);

// Binary when the payload starts with the magic, CSV otherwise.
FeatureMatrix parse_features(std::string_view bytes);
FeatureMatrix read_features(const std::filesystem::path& path);
void write_features(const std::filesystem::path& path, const FeatureMatrix& features);

// One decimal integer per line; blank lines are skipped.
LabelVector parse_labels(std::string_view text);
std::string encode_labels(const LabelVector& labels);
LabelVector read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const LabelVector& labels);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ProbabilityMatrix& p);
ProbabilityMatrix probability_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ClusterState& s);
ClusterState cluster_state_from_json(const nlohmann::json& j);

nlohmann::json to_json(const LossBreakdown& l);
LossBreakdown loss_from_json(const nlohmann::json& j);

}  // namespace attnclust::io
