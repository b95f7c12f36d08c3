#include "crisp/cli/config.hpp"

#include <fstream>

namespace crisp::cli {

Json default_config()
{
    return Json::parse(R"({
  "scene": {
    "n_objects": 10,
    "n_points": 200,
    "n_views": 1,
    "noise_sigma": 0.001,
    "outlier_fraction": 0.0,
    "outlier_radius": 0.5,
    "min_distance": 1.5,
    "max_distance": 3.0,
    "hemisphere_culling": true,
    "seed": 1,
    "view_directions": [],
    "gt_alpha": null
  },
  "basis": {
    "preset": "asymmetric",
    "k": 4,
    "shapes": null
  },
  "decoder": {
    "kind": "linear",
    "tau": 0.05
  },
  "perturbation": {
    "z_noise_sigma": 0.001,
    "rotation_deg": 5.0,
    "translation_m": 0.02,
    "code_perturb": 0.1,
    "seed": 7
  },
  "corrector": {
    "z_step": 0.001,
    "z_iters": 50,
    "h_step": 0.01,
    "h_iters": 25,
    "outer_rounds": 3,
    "convergence_tol": 1e-6,
    "buffer_capacity": 50
  },
  "certificate": {
    "epsilon": 0.01,
    "p": 0.98
  },
  "selftrain": {
    "epochs": 5,
    "lr_z": 0.0003,
    "lr_h": 0.0003,
    "pose_bias_deg": 5.0,
    "code_bias": 0.15,
    "noise_sigma": 0.0,
    "use_corrector": true,
    "seed": 11
  },
  "degeneracy": {
    "threshold": null,
    "source": "gt"
  },
  "evaluation": {
    "samples": 1000,
    "seed": 59297
  }
})");
}

namespace {

std::string type_name(const Json& j)
{
    if (j.is_number_integer())
        return "integer";
    if (j.is_number())
        return "number";
    return j.type_name();
}

bool compatible(const Json& def, const Json& user)
{
    if (def.is_null())
        return true;
    if (def.is_number_integer())
        return user.is_number_integer();
    if (def.is_number())
        return user.is_number();
    return def.type() == user.type();
}

void merge_into(Json& out, const Json& def, const Json& user, const std::string& path,
                std::vector<std::string>& notices)
{
    if (!user.is_object())
        throw ConfigError(path.empty() ? "config must be a JSON object" : path + " must be an object");
    for (auto it = user.begin(); it != user.end(); ++it)
        if (!def.contains(it.key()))
            throw ConfigError("unknown key '" + (path.empty() ? "" : path + ".") + it.key() + "'");
    for (auto it = def.begin(); it != def.end(); ++it) {
        const std::string key = path.empty() ? it.key() : path + "." + it.key();
        if (!user.contains(it.key())) {
            out[it.key()] = it.value();
            if (!it.value().is_object())
                notices.push_back(key);
            else
                merge_into(out[it.key()], it.value(), Json::object(), key, notices);
            continue;
        }
        const Json& u = user.at(it.key());
        if (it.value().is_object()) {
            out[it.key()] = Json::object();
            merge_into(out[it.key()], it.value(), u, key, notices);
        } else if (!compatible(it.value(), u)) {
            throw ConfigError(key + ": expected " + type_name(it.value()) + ", got " + type_name(u));
        } else {
            out[it.key()] = u;
        }
    }
}

template <class T>
T get(const Json& cfg, const char* block, const char* key)
{
    try {
        return cfg.at(block).at(key).get<T>();
    } catch (const Json::exception& e) {
        throw ConfigError(std::string(block) + "." + key + ": " + e.what());
    }
}

std::uint64_t get_seed(const Json& cfg, const char* block)
{
    const auto s = get<long long>(cfg, block, "seed");
    if (s < 0)
        throw ConfigError(std::string(block) + ".seed must be non-negative");
    return static_cast<std::uint64_t>(s);
}

// Re-throws library validation failures as configuration errors.
template <class F>
auto checked(F&& f)
{
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

} // namespace

Json merge_config(const Json& user, std::vector<std::string>& notices)
{
    Json out = Json::object();
    merge_into(out, default_config(), user, "", notices);
    return out;
}

Json load_config(const std::optional<std::filesystem::path>& path, std::vector<std::string>& notices)
{
    if (!path)
        return merge_config(Json::object(), notices);
    std::ifstream is(*path);
    if (!is)
        throw ConfigError("cannot open config " + path->string());
    Json user;
    try {
        user = Json::parse(is);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path->string() + ": " + e.what());
    }
    return merge_config(user, notices);
}

SceneConfig scene_config(const Json& cfg)
{
    SceneConfig s;
    s.n_points = get<int>(cfg, "scene", "n_points");
    s.n_views = get<int>(cfg, "scene", "n_views");
    s.noise_sigma = get<double>(cfg, "scene", "noise_sigma");
    s.outlier_fraction = get<double>(cfg, "scene", "outlier_fraction");
    s.outlier_radius = get<double>(cfg, "scene", "outlier_radius");
    s.min_distance = get<double>(cfg, "scene", "min_distance");
    s.max_distance = get<double>(cfg, "scene", "max_distance");
    s.hemisphere_culling = get<bool>(cfg, "scene", "hemisphere_culling");
    s.seed = get_seed(cfg, "scene");
    for (const auto& d : get<std::vector<std::vector<double>>>(cfg, "scene", "view_directions")) {
        if (d.size() != 3)
            throw ConfigError("scene.view_directions: each direction needs 3 components");
        s.view_directions.emplace_back(d[0], d[1], d[2]);
    }
    const Json& a = cfg.at("scene").at("gt_alpha");
    if (!a.is_null()) {
        if (!a.is_array())
            throw ConfigError("scene.gt_alpha must be an array or null");
        const auto v = get<std::vector<double>>(cfg, "scene", "gt_alpha");
        s.gt_alpha = LatentCode{Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()))};
    }
    checked([&] {
        s.validate();
        return 0;
    });
    return s;
}

int n_objects(const Json& cfg)
{
    const int n = get<int>(cfg, "scene", "n_objects");
    if (n < 1)
        throw ConfigError("scene.n_objects must be at least 1");
    return n;
}

ShapeBasis basis_from_config(const Json& cfg)
{
    const Json& b = cfg.at("basis");
    if (!b.at("shapes").is_null())
        return checked([&] { return basis_from_json({{"shapes", b.at("shapes")}}); });
    const auto preset = get<std::string>(cfg, "basis", "preset");
    if (preset == "asymmetric")
        return checked([&] { return asymmetric_basis(get<int>(cfg, "basis", "k")); });
    if (preset == "sphere_bump")
        return sphere_bump_basis();
    throw ConfigError("basis.preset: unknown preset '" + preset + "' (expected asymmetric or sphere_bump)");
}

std::unique_ptr<Decoder> decoder_from_config(const Json& cfg, ShapeBasis basis)
{
    return checked([&] { return decoder_from_json(cfg.at("decoder"), std::move(basis)); });
}

PerturbationModel perturbation_config(const Json& cfg)
{
    PerturbationModel pm;
    pm.z_noise_sigma = get<double>(cfg, "perturbation", "z_noise_sigma");
    pm.rotation_deg = get<double>(cfg, "perturbation", "rotation_deg");
    pm.translation_m = get<double>(cfg, "perturbation", "translation_m");
    pm.code_perturb = get<double>(cfg, "perturbation", "code_perturb");
    pm.seed = get_seed(cfg, "perturbation");
    if (pm.z_noise_sigma < 0.0 || pm.rotation_deg < 0.0 || pm.translation_m < 0.0 || pm.code_perturb < 0.0)
        throw ConfigError("perturbation: magnitudes must be non-negative");
    return pm;
}

CorrectorConfig corrector_config(const Json& cfg)
{
    CorrectorConfig c;
    c.z_step = get<double>(cfg, "corrector", "z_step");
    c.z_iters = get<int>(cfg, "corrector", "z_iters");
    c.h_step = get<double>(cfg, "corrector", "h_step");
    c.h_iters = get<int>(cfg, "corrector", "h_iters");
    c.outer_rounds = get<int>(cfg, "corrector", "outer_rounds");
    c.convergence_tol = get<double>(cfg, "corrector", "convergence_tol");
    const int cap = get<int>(cfg, "corrector", "buffer_capacity");
    if (cap < 1)
        throw ConfigError("corrector.buffer_capacity must be at least 1");
    c.buffer_capacity = static_cast<std::size_t>(cap);
    checked([&] {
        c.validate();
        return 0;
    });
    return c;
}

CertificateConfig certificate_config(const Json& cfg)
{
    CertificateConfig c;
    c.epsilon = get<double>(cfg, "certificate", "epsilon");
    c.p = get<double>(cfg, "certificate", "p");
    checked([&] {
        c.validate();
        return 0;
    });
    return c;
}

EvaluationOptions evaluation_config(const Json& cfg)
{
    EvaluationOptions e;
    const int n = get<int>(cfg, "evaluation", "samples");
    if (n < 1)
        throw ConfigError("evaluation.samples must be at least 1");
    e.samples = static_cast<std::size_t>(n);
    e.seed = get_seed(cfg, "evaluation");
    return e;
}

SelfTrainSettings selftrain_config(const Json& cfg)
{
    SelfTrainSettings s;
    s.epochs = get<int>(cfg, "selftrain", "epochs");
    s.lr.z = get<double>(cfg, "selftrain", "lr_z");
    s.lr.h = get<double>(cfg, "selftrain", "lr_h");
    s.pose_bias_deg = get<double>(cfg, "selftrain", "pose_bias_deg");
    s.code_bias = get<double>(cfg, "selftrain", "code_bias");
    s.noise_sigma = get<double>(cfg, "selftrain", "noise_sigma");
    s.use_corrector = get<bool>(cfg, "selftrain", "use_corrector");
    s.seed = get_seed(cfg, "selftrain");
    if (s.epochs < 1)
        throw ConfigError("selftrain.epochs must be at least 1");
    if (!(s.lr.z > 0.0) || !(s.lr.h > 0.0))
        throw ConfigError("selftrain: learning rates must be positive");
    if (s.code_bias < 0.0 || s.noise_sigma < 0.0)
        throw ConfigError("selftrain: code_bias and noise_sigma must be non-negative");
    return s;
}

DegeneracySettings degeneracy_config(const Json& cfg)
{
    DegeneracySettings d;
    const Json& t = cfg.at("degeneracy").at("threshold");
    if (!t.is_null()) {
        if (!t.is_number() || !(t.get<double>() > 0.0))
            throw ConfigError("degeneracy.threshold must be a positive number or null");
        d.threshold = t.get<double>();
    }
    const auto source = get<std::string>(cfg, "degeneracy", "source");
    if (source == "estimate")
        d.use_estimates = true;
    else if (source != "gt")
        throw ConfigError("degeneracy.source: expected gt or estimate");
    return d;
}

} // namespace crisp::cli
