#pragma once

// JSON documents for specs, configs, spectra and reports.
// Non-finite doubles are written as null and read back as NaN.

#include <filesystem>
#include <string>

#include "json.hpp"
#include "flatspec/sharpness.hpp"
#include "flatspec/slq.hpp"
#include "flatspec/training.hpp"

namespace flatspec {

using Json = nlohmann::json;

void to_json(Json& j, const ModelSpec& s);
void from_json(const Json& j, ModelSpec& s);

void to_json(Json& j, const TrainConfig& c);
void from_json(const Json& j, TrainConfig& c);

void to_json(Json& j, const LanczosResult& r);
void from_json(const Json& j, LanczosResult& r);

// {P, m, probe, base_seed, seeds, nodes, weights, per_seed}
void to_json(Json& j, const RitzSpectrum& s);
void from_json(const Json& j, RitzSpectrum& s);

void to_json(Json& j, const SharpnessContext& c);
void from_json(const Json& j, SharpnessContext& c);

void to_json(Json& j, const SharpnessReport& r);
void from_json(const Json& j, SharpnessReport& r);

void to_json(Json& j, const EpochRecord& r);
void from_json(const Json& j, EpochRecord& r);

void to_json(Json& j, const BatchNormState& b);
void from_json(const Json& j, BatchNormState& b);

// Trained model state: spec, flat parameters, BN running statistics and the
// config that produced it.
struct Checkpoint {
  ModelSpec spec;
  ParamVector params;
  BatchNormState bn;
  TrainConfig config;
};
void to_json(Json& j, const Checkpoint& c);
void from_json(const Json& j, Checkpoint& c);

// Two-space indent, keys sorted, trailing newline.
std::string dump(const Json& j);
Json read_json_file(const std::filesystem::path& path);

}  // namespace flatspec
