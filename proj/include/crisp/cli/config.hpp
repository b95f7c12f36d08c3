#pragma once

#include "crisp/certification.hpp"
#include "crisp/corrector.hpp"
#include "crisp/io.hpp"
#include "crisp/selftrain.hpp"
#include "crisp/simulator.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace crisp::cli {

/// Invalid configuration: unparsable JSON, unknown keys, wrong types or
/// values outside their domain. Maps to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Every block with its default value.
Json default_config();

/// Overlays `user` on the defaults. Unknown keys and type mismatches throw
/// ConfigError; every key filled from the defaults is reported in `notices`
/// as its dotted path.
Json merge_config(const Json& user, std::vector<std::string>& notices);

/// Reads and merges a JSON file; no path means all defaults.
Json load_config(const std::optional<std::filesystem::path>& path, std::vector<std::string>& notices);

SceneConfig scene_config(const Json& cfg);
int n_objects(const Json& cfg);
ShapeBasis basis_from_config(const Json& cfg);
std::unique_ptr<Decoder> decoder_from_config(const Json& cfg, ShapeBasis basis);
PerturbationModel perturbation_config(const Json& cfg);
CorrectorConfig corrector_config(const Json& cfg);
CertificateConfig certificate_config(const Json& cfg);
EvaluationOptions evaluation_config(const Json& cfg);

struct SelfTrainSettings {
    int epochs = 5;
    LearningRates lr;
    double pose_bias_deg = 5.0;
    double code_bias = 0.15;
    double noise_sigma = 0.0;
    bool use_corrector = true;
    std::uint64_t seed = 11;
};
SelfTrainSettings selftrain_config(const Json& cfg);

struct DegeneracySettings {
    std::optional<double> threshold;
    bool use_estimates = false;
};
DegeneracySettings degeneracy_config(const Json& cfg);

} // namespace crisp::cli
