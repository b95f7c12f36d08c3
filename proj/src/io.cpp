#include "crisp/io.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

namespace crisp {

namespace fs = std::filesystem;

std::uint64_t fnv1a64(std::string_view bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string config_hash(const Json& j)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
    return buf;
}

std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

std::string csv_field(std::string_view s)
{
    if (s.find_first_of(",\"\r\n") == std::string_view::npos)
        return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c;
    }
    out += '"';
    return out;
}

CsvWriter::CsvWriter(const fs::path& path, const std::string& hash, const std::vector<std::string>& header)
    : os_(path, std::ios::binary), width_(header.size())
{
    if (!os_)
        throw FormatError("cannot open " + path.string() + " for writing");
    os_ << "# config-hash: " << hash << "\r\n";
    row(header);
}

void CsvWriter::row(const std::vector<std::string>& fields)
{
    if (fields.size() != width_)
        throw Error("csv: row has " + std::to_string(fields.size()) + " fields, header " + std::to_string(width_));
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i)
            os_ << ',';
        os_ << csv_field(fields[i]);
    }
    os_ << "\r\n";
    os_.flush();
}

CsvTable read_csv(const fs::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw FormatError("cannot open " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    const std::string text = ss.str();

    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            record.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n')
                ++i;
            if (any || !field.empty()) {
                record.push_back(std::move(field));
                records.push_back(std::move(record));
            }
            field.clear();
            record.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (quoted)
        throw FormatError(path.string() + ": unterminated quoted field");
    if (any || !field.empty()) {
        record.push_back(std::move(field));
        records.push_back(std::move(record));
    }

    CsvTable t;
    std::size_t at = 0;
    const std::string prefix = "# config-hash: ";
    if (!records.empty() && records[0].size() == 1 && records[0][0].rfind(prefix, 0) == 0) {
        t.hash = records[0][0].substr(prefix.size());
        at = 1;
    }
    if (at >= records.size())
        throw FormatError(path.string() + ": missing header");
    t.header = records[at++];
    for (; at < records.size(); ++at) {
        if (records[at].size() != t.header.size())
            throw FormatError(path.string() + ": ragged row");
        t.rows.push_back(std::move(records[at]));
    }
    return t;
}

Json field_to_json(const SdfField& field)
{
    if (const auto* p = dynamic_cast<const AnalyticPrimitive*>(&field))
        return {{"kind", to_string(p->kind())},
                {"params", p->params()},
                {"offset", {p->offset().x(), p->offset().y(), p->offset().z()}}};
    if (const auto* u = dynamic_cast<const UnionField*>(&field)) {
        Json children = Json::array();
        for (const auto& c : u->children())
            children.push_back(field_to_json(*c));
        return {{"kind", "union"}, {"smoothness", u->smoothness()}, {"children", children}};
    }
    throw FormatError("field_to_json: only primitives and unions are serializable");
}

FieldPtr field_from_json(const Json& j)
{
    try {
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "union") {
            std::vector<FieldPtr> children;
            for (const auto& c : j.at("children"))
                children.push_back(field_from_json(c));
            return make_union(std::move(children), j.value("smoothness", 0.0));
        }
        Vec3 offset = Vec3::Zero();
        if (j.contains("offset")) {
            const auto o = j.at("offset").get<std::vector<double>>();
            if (o.size() != 3)
                throw FormatError("offset must have 3 components");
            offset = Vec3(o[0], o[1], o[2]);
        }
        return std::make_shared<AnalyticPrimitive>(primitive_kind_from_string(kind),
                                                   j.at("params").get<std::vector<double>>(), offset);
    } catch (const Json::exception& e) {
        throw FormatError(std::string("field manifest: ") + e.what());
    }
}

Json basis_to_json(const ShapeBasis& basis)
{
    Json shapes = Json::array();
    for (std::size_t k = 0; k < basis.fields.size(); ++k)
        shapes.push_back({{"field", field_to_json(*basis.fields[k])}, {"diameter", basis.diameters[k]}});
    return {{"shapes", shapes}};
}

ShapeBasis basis_from_json(const Json& j)
{
    try {
        ShapeBasis b;
        bool all_diameters = true;
        for (const auto& s : j.at("shapes")) {
            b.fields.push_back(field_from_json(s.at("field")));
            if (s.contains("diameter"))
                b.diameters.push_back(s.at("diameter").get<double>());
            else
                all_diameters = false;
        }
        if (b.fields.empty())
            throw FormatError("basis manifest: no shapes");
        if (!all_diameters)
            return ShapeBasis::from_fields(std::move(b.fields));
        for (double d : b.diameters)
            if (!(d > 0.0))
                throw FormatError("basis manifest: diameters must be positive");
        return b;
    } catch (const Json::exception& e) {
        throw FormatError(std::string("basis manifest: ") + e.what());
    }
}

Json decoder_to_json(const Decoder& decoder)
{
    if (const auto* k = dynamic_cast<const KernelBlend*>(&decoder))
        return {{"kind", "kernel"}, {"tau", k->tau()}};
    return {{"kind", decoder.name()}};
}

std::unique_ptr<Decoder> decoder_from_json(const Json& j, ShapeBasis basis)
{
    const std::string kind = j.value("kind", std::string("linear"));
    if (kind == "linear")
        return std::make_unique<LinearBlend>(std::move(basis));
    if (kind == "kernel")
        return std::make_unique<KernelBlend>(std::move(basis), j.value("tau", 0.05));
    throw FormatError("unknown decoder kind '" + kind + "' (expected linear or kernel)");
}

std::vector<double> pose_to_numbers(const Pose& pose)
{
    std::vector<double> v;
    v.reserve(12);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            v.push_back(pose.rotation(r, c));
    for (int a = 0; a < 3; ++a)
        v.push_back(pose.translation[a]);
    return v;
}

Pose pose_from_numbers(const std::vector<double>& v)
{
    if (v.size() != 12)
        throw FormatError("pose: expected 12 numbers");
    Pose p;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            p.rotation(r, c) = v[static_cast<std::size_t>(3 * r + c)];
    for (int a = 0; a < 3; ++a)
        p.translation[a] = v[static_cast<std::size_t>(9 + a)];
    return p;
}

namespace {

std::vector<double> to_vector(const Eigen::VectorXd& v)
{
    return {v.data(), v.data() + v.size()};
}

Eigen::VectorXd from_vector(const std::vector<double>& v)
{
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string view_file(int object, int view)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "object_%03d_view_%03d.csv", object, view);
    return buf;
}

} // namespace

Json correction_to_json(const CorrectionResult& r)
{
    Json poses = Json::array();
    for (const auto& p : r.poses)
        poses.push_back(pose_to_numbers(p));
    Json j = {{"solver", to_string(r.solver)},
              {"poses", poses},
              {"code", to_vector(r.code_hat.alpha)},
              {"objective_trace", r.objective_trace},
              {"certified", r.certified},
              {"outer_rounds", r.outer_rounds},
              {"z_iterations", r.z_iterations},
              {"h_iterations", r.h_iterations}};
    if (r.coeffs)
        j["coeffs"] = to_vector(r.coeffs->c);
    return j;
}

void write_scene_dir(const fs::path& dir, const std::vector<Scene>& scenes, const Json& config,
                     const ShapeBasis& basis, const Decoder& decoder)
{
    fs::create_directories(dir);
    Json objects = Json::array();
    for (const auto& s : scenes) {
        Json views = Json::array();
        for (const auto& f : s.frames) {
            const std::string file = view_file(s.object_id, f.view_id);
            write_cloud_csv(dir / file, f.x);
            views.push_back({{"view_id", f.view_id},
                             {"gt_pose", pose_to_numbers(f.gt_pose)},
                             {"outliers", f.outlier_indices},
                             {"points", file}});
        }
        objects.push_back({{"object_id", s.object_id}, {"gt_alpha", to_vector(s.gt_alpha.alpha)}, {"views", views}});
    }
    const Json doc = {{"config", config},
                      {"basis", basis_to_json(basis)},
                      {"decoder", decoder_to_json(decoder)},
                      {"objects", objects}};
    std::ofstream os(dir / "scene.json", std::ios::binary);
    if (!os)
        throw FormatError("cannot write " + (dir / "scene.json").string());
    os << doc.dump(2) << '\n';
}

SceneDir read_scene_dir(const fs::path& dir)
{
    std::ifstream is(dir / "scene.json");
    if (!is)
        throw FormatError("cannot open " + (dir / "scene.json").string());
    SceneDir out;
    try {
        const Json doc = Json::parse(is);
        out.config = doc.at("config");
        out.basis = basis_from_json(doc.at("basis"));
        out.decoder = decoder_from_json(doc.at("decoder"), out.basis);
        for (const auto& o : doc.at("objects")) {
            Scene s;
            s.object_id = o.at("object_id").get<int>();
            s.gt_alpha.alpha = from_vector(o.at("gt_alpha").get<std::vector<double>>());
            if (s.gt_alpha.dim() != out.decoder->dim())
                throw FormatError("scene.json: gt_alpha does not match the basis");
            for (const auto& v : o.at("views")) {
                Frame f;
                f.object_id = s.object_id;
                f.view_id = v.at("view_id").get<int>();
                f.gt_alpha = s.gt_alpha;
                f.gt_pose = pose_from_numbers(v.at("gt_pose").get<std::vector<double>>());
                f.outlier_indices = v.at("outliers").get<std::vector<int>>();
                f.x = read_cloud_csv(dir / v.at("points").get<std::string>());
                f.gt_z = f.gt_pose.apply(f.x);
                s.frames.push_back(std::move(f));
            }
            out.scenes.push_back(std::move(s));
        }
    } catch (const Json::exception& e) {
        throw FormatError(std::string("scene.json: ") + e.what());
    }
    return out;
}

} // namespace crisp
