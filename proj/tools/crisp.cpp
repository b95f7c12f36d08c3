#include "crisp/cli/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace crisp::cli;

int main(int argc, char** argv)
{
    configure_logging();

    CLI::App app{"Pose and shape correction, certification and self-training on synthetic scenes"};
    app.require_subcommand(1);

    CommonArgs common;
    std::string config, out, scene, solver = "bcd";
    long long seed = 0;
    int epochs = 0;

    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config, "JSON config file; missing keys take defaults");
        sub->add_option("--out", out, "Output directory")->required();
        sub->add_option("--seed", seed, "Seed override");
        sub->add_option("--jobs", common.jobs, "Worker threads (default 1)")->check(CLI::PositiveNumber);
    };

    auto* gen = app.add_subcommand("gen-scene", "Generate a synthetic scene directory");
    add_common(gen);

    auto* correct = app.add_subcommand("correct", "Correct every object of a scene and write results.csv");
    add_common(correct);
    correct->add_option("--scene", scene, "Scene directory")->required();
    correct->add_option("--solver", solver, "bcd or lsq")->check(CLI::IsMember({"bcd", "lsq"}));

    auto* train = app.add_subcommand("selftrain", "Run the correct-and-certify self-training loop");
    add_common(train);
    train->add_option("--scene", scene, "Scene directory")->required();
    train->add_option("--solver", solver, "bcd or lsq")->check(CLI::IsMember({"bcd", "lsq"}));
    auto* epochs_opt = train->add_option("--epochs", epochs, "Epoch count override")->check(CLI::PositiveNumber);

    auto* sweep = app.add_subcommand("degeneracy-sweep", "Minimum Gram eigenvalue per cumulative view count");
    add_common(sweep);
    sweep->add_option("--scene", scene, "Scene directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    if (!config.empty())
        common.config = config;
    common.out = out;
    for (auto* sub : {gen, correct, train, sweep})
        if (sub->count("--seed"))
            common.seed = seed;

    if (gen->parsed())
        return cmd_gen_scene(common);
    if (correct->parsed())
        return cmd_correct(common, scene, solver);
    if (train->parsed())
        return cmd_selftrain(common, scene, solver,
                             epochs_opt->count() ? std::optional<int>(epochs) : std::nullopt);
    return cmd_degeneracy_sweep(common, scene);
}
