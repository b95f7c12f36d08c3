#pragma once

#include <filesystem>
#include <optional>
#include <string>

namespace crisp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitNumerical = 1;
inline constexpr int kExitConfig = 2;

struct CommonArgs {
    std::optional<std::filesystem::path> config;
    std::filesystem::path out;
    std::optional<long long> seed;
    int jobs = 1;
};

/// Writes a scene directory to args.out. --seed overrides scene.seed.
int cmd_gen_scene(const CommonArgs& args);

/// Writes results.csv and corrections.json to args.out. --seed overrides
/// perturbation.seed.
int cmd_correct(const CommonArgs& args, const std::filesystem::path& scene, const std::string& solver);

/// Writes epoch_stats.csv to args.out. --seed overrides selftrain.seed.
int cmd_selftrain(const CommonArgs& args, const std::filesystem::path& scene, const std::string& solver,
                  std::optional<int> epochs);

/// Writes degeneracy.csv to args.out: lambda_min of the basis Gram matrix per
/// cumulative view count.
int cmd_degeneracy_sweep(const CommonArgs& args, const std::filesystem::path& scene);

/// Applies CRISP_LOG (error, info, debug) to the default logger.
void configure_logging();

} // namespace crisp::cli
