#include "crisp/cli/commands.hpp"

#include "crisp/cli/config.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <fstream>

namespace crisp::cli {

namespace fs = std::filesystem;

namespace {

Json load(const CommonArgs& args)
{
    std::vector<std::string> notices;
    Json cfg = load_config(args.config, notices);
    const Json defaults = default_config();
    for (const auto& key : notices) {
        std::string pointer = "/" + key;
        std::replace(pointer.begin(), pointer.end(), '.', '/');
        spdlog::info("config: {} not set, using default {}", key, defaults.at(Json::json_pointer(pointer)).dump());
    }
    if (args.jobs < 1)
        throw ConfigError("--jobs must be at least 1");
    omp_set_num_threads(args.jobs);
    // Every block is range-checked, including ones the command does not use.
    scene_config(cfg);
    perturbation_config(cfg);
    corrector_config(cfg);
    certificate_config(cfg);
    evaluation_config(cfg);
    selftrain_config(cfg);
    degeneracy_config(cfg);
    return cfg;
}

void override_seed(Json& cfg, const char* block, const std::optional<long long>& seed)
{
    if (!seed)
        return;
    if (*seed < 0)
        throw ConfigError("--seed must be non-negative");
    cfg[block]["seed"] = *seed;
}

template <class F>
int guarded(const char* name, F&& body)
{
    try {
        return body();
    } catch (const ConfigError& e) {
        spdlog::error("{}: configuration error: {}", name, e.what());
        return kExitConfig;
    } catch (const FormatError& e) {
        spdlog::error("{}: input error: {}", name, e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        spdlog::error("{}: {}", name, e.what());
        return kExitNumerical;
    }
}

SceneDir open_scene(const fs::path& dir)
{
    if (!fs::is_directory(dir))
        throw ConfigError("scene directory " + dir.string() + " does not exist");
    return read_scene_dir(dir);
}

std::string flag(bool b)
{
    return b ? "1" : "0";
}

} // namespace

void configure_logging()
{
    auto logger = spdlog::stderr_color_mt("crisp");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    const char* env = std::getenv("CRISP_LOG");
    const std::string level = env ? env : "info";
    if (level == "error")
        spdlog::set_level(spdlog::level::err);
    else if (level == "debug")
        spdlog::set_level(spdlog::level::debug);
    else {
        spdlog::set_level(spdlog::level::info);
        if (level != "info")
            spdlog::warn("CRISP_LOG={} not recognized, using info", level);
    }
}

int cmd_gen_scene(const CommonArgs& args)
{
    return guarded("gen-scene", [&] {
        Json cfg = load(args);
        override_seed(cfg, "scene", args.seed);
        const SceneConfig sc = scene_config(cfg);
        const int n = n_objects(cfg);
        ShapeBasis basis = basis_from_config(cfg);
        const auto decoder = decoder_from_config(cfg, basis);
        if (sc.gt_alpha && sc.gt_alpha->dim() != decoder->dim())
            throw ConfigError("scene.gt_alpha has " + std::to_string(sc.gt_alpha->dim()) + " entries, basis " +
                              std::to_string(decoder->dim()));

        std::vector<Scene> scenes(static_cast<std::size_t>(n));
        std::vector<std::exception_ptr> errors(scenes.size());
#pragma omp parallel for schedule(dynamic, 1)
        for (int i = 0; i < n; ++i) {
            try {
                scenes[static_cast<std::size_t>(i)] = make_scene(*decoder, sc, i);
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
        for (const auto& e : errors)
            if (e)
                std::rethrow_exception(e);
        write_scene_dir(args.out, scenes, cfg, basis, *decoder);
        spdlog::info("gen-scene: wrote {} objects x {} views to {}", n, sc.n_views, args.out.string());
        return kExitOk;
    });
}

int cmd_correct(const CommonArgs& args, const fs::path& scene_path, const std::string& solver_name)
{
    return guarded("correct", [&] {
        Json cfg = load(args);
        override_seed(cfg, "perturbation", args.seed);
        SolverKind solver;
        try {
            solver = solver_from_string(solver_name);
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
        const PerturbationModel pm = perturbation_config(cfg);
        const CorrectorConfig cc = corrector_config(cfg);
        const CertificateConfig cert = certificate_config(cfg);
        const EvaluationOptions eval = evaluation_config(cfg);
        const SceneDir sd = open_scene(scene_path);
        const Decoder& decoder = *sd.decoder;

        const std::vector<std::string> header = {
            "object_id", "solver", "status", "certified", "certified_uncorrected", "adds", "adds_uncorrected",
            "chamfer_l1", "chamfer_l2", "chamfer_l2_uncorrected", "code_error", "code_error_uncorrected",
            "rotation_error_deg", "translation_error", "objective_initial", "objective_final", "z_iterations",
            "h_iterations", "wall_ms"};
        const std::size_t n = sd.scenes.size();
        std::vector<std::vector<std::string>> rows(n);
        std::vector<Json> results(n);
        std::vector<char> failed(n, 0);

#pragma omp parallel for schedule(dynamic, 1)
        for (std::size_t i = 0; i < n; ++i) {
            const Scene& scene = sd.scenes[i];
            try {
                const SceneEstimate est = synth_scene_estimates(scene, pm);
                const MultiViewBuffer buffer =
                    make_buffer(scene, est.z, std::max(cc.buffer_capacity, scene.frames.size()));
                const auto t0 = std::chrono::steady_clock::now();
                CorrectionResult r = solver == SolverKind::Bcd ? bcd_correct(buffer, est.alpha, decoder, cc)
                                                               : lsq_correct(buffer, est.alpha, decoder, cc);
                const double ms =
                    std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
                r.certified = oc_certificate(r.z_hat_stacked(), r.code_hat, decoder, cert);
                const CorrectionResult raw = uncorrected(buffer, est.alpha);
                const bool raw_cert = oc_certificate(raw.z_hat_stacked(), raw.code_hat, decoder, cert);
                const MetricsRecord m = evaluate(r, scene, decoder, eval);
                const MetricsRecord m0 = evaluate(raw, scene, decoder, eval);
                rows[i] = {std::to_string(scene.object_id), to_string(solver), "ok", flag(r.certified),
                           flag(raw_cert), format_double(m.adds), format_double(m0.adds),
                           format_double(m.chamfer_l1), format_double(m.chamfer_l2), format_double(m0.chamfer_l2),
                           format_double(m.code_error), format_double(m0.code_error),
                           format_double(m.rotation_error_deg), format_double(m.translation_error),
                           format_double(r.objective_trace.front()), format_double(r.objective_trace.back()),
                           std::to_string(r.z_iterations), std::to_string(r.h_iterations), format_double(ms)};
                results[i] = correction_to_json(r);
                results[i]["object_id"] = scene.object_id;
            } catch (const std::exception& e) {
                failed[i] = 1;
                rows[i] = std::vector<std::string>(header.size(), "");
                rows[i][0] = std::to_string(scene.object_id);
                rows[i][1] = to_string(solver);
                rows[i][2] = std::string("error: ") + e.what();
                results[i] = {{"object_id", scene.object_id}, {"error", e.what()}};
            }
        }

        fs::create_directories(args.out);
        const std::string hash =
            config_hash({{"run", cfg}, {"scene", sd.config}, {"solver", to_string(solver)}});
        CsvWriter csv(args.out / "results.csv", hash, header);
        int errors = 0;
        for (std::size_t i = 0; i < n; ++i) {
            csv.row(rows[i]);
            errors += failed[i];
        }
        std::ofstream js(args.out / "corrections.json", std::ios::binary);
        js << Json(results).dump(2) << '\n';
        if (errors > 0) {
            spdlog::error("correct: {} of {} objects failed", errors, n);
            return kExitNumerical;
        }
        spdlog::info("correct: {} objects, results in {}", n, args.out.string());
        return kExitOk;
    });
}

int cmd_selftrain(const CommonArgs& args, const fs::path& scene_path, const std::string& solver_name,
                  std::optional<int> epochs)
{
    return guarded("selftrain", [&] {
        Json cfg = load(args);
        override_seed(cfg, "selftrain", args.seed);
        if (epochs)
            cfg["selftrain"]["epochs"] = *epochs;
        SelfTrainSettings st = selftrain_config(cfg);
        LabelingConfig lc;
        try {
            lc.solver = solver_from_string(solver_name);
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
        lc.use_corrector = st.use_corrector;
        lc.corrector = corrector_config(cfg);
        lc.certificate = certificate_config(cfg);
        const SceneDir sd = open_scene(scene_path);

        BiasedOracleEstimator est = BiasedOracleEstimator::random(sd.decoder->dim(), st.pose_bias_deg,
                                                                  st.code_bias, st.noise_sigma, st.seed);
        fs::create_directories(args.out);
        const std::string hash = config_hash({{"run", cfg}, {"scene", sd.config}, {"solver", solver_name}});
        CsvWriter csv(args.out / "epoch_stats.csv", hash,
                      {"epoch", "certified_fraction", "mean_Lh", "mean_Lz", "bias_norm"});
        spdlog::info("selftrain: initial bias norm {}", est.bias_norm());
        for (int e = 1; e <= st.epochs; ++e) {
            const EpochStats s = self_train_epoch(est, sd.scenes, *sd.decoder, lc, st.lr, e);
            csv.row({std::to_string(s.epoch), format_double(s.certified_fraction), format_double(s.mean_lh),
                     format_double(s.mean_lz), format_double(s.bias_norm)});
            spdlog::info("selftrain: epoch {} certified {:.3f} bias {:.6g}", e, s.certified_fraction, s.bias_norm);
        }
        return kExitOk;
    });
}

int cmd_degeneracy_sweep(const CommonArgs& args, const fs::path& scene_path)
{
    return guarded("degeneracy-sweep", [&] {
        Json cfg = load(args);
        override_seed(cfg, "perturbation", args.seed);
        const DegeneracySettings ds = degeneracy_config(cfg);
        const PerturbationModel pm = perturbation_config(cfg);
        const SceneDir sd = open_scene(scene_path);
        const Eigen::Index k = sd.decoder->dim();

        fs::create_directories(args.out);
        const std::string hash = config_hash({{"run", cfg}, {"scene", sd.config}});
        CsvWriter csv(args.out / "degeneracy.csv", hash,
                      {"object_id", "n_frames", "lambda_min", "condition", "degenerate"});
        for (const Scene& scene : sd.scenes) {
            const SceneEstimate est = synth_scene_estimates(scene, pm);
            Eigen::MatrixXd rows(0, k);
            for (std::size_t v = 0; v < scene.frames.size(); ++v) {
                const PointCloud& z = ds.use_estimates ? est.z[v] : scene.frames[v].gt_z;
                // Basis columns only: column 0 of F is a blend of them and
                // would make every Gram matrix singular.
                const Eigen::MatrixXd f = build_F_matrix(z, *sd.decoder, scene.gt_alpha).rightCols(k);
                Eigen::MatrixXd grown(rows.rows() + f.rows(), k);
                grown << rows, f;
                rows = std::move(grown);
                const DegeneracyReport r = degeneracy_report(rows, ds.threshold);
                csv.row({std::to_string(scene.object_id), std::to_string(v + 1), format_double(r.lambda_min),
                         format_double(r.gram_condition), flag(r.is_degenerate)});
            }
        }
        return kExitOk;
    });
}

} // namespace crisp::cli
