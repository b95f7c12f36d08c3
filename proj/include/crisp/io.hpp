#pragma once

#include "crisp/corrector.hpp"
#include "crisp/simulator.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace crisp {

using Json = nlohmann::json;

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);

/// FNV-1a of the compact dump of `j` (object keys are sorted), as 16 hex digits.
std::string config_hash(const Json& j);

/// Shortest decimal form that reads back to the same double.
std::string format_double(double v);

/// RFC 4180 field: quoted when it holds a comma, quote, CR or LF, with inner
/// quotes doubled.
std::string csv_field(std::string_view s);

/// CSV file that starts with "# config-hash: <hex>" and a header row.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::string& hash, const std::vector<std::string>& header);
    void row(const std::vector<std::string>& fields);

private:
    std::ofstream os_;
    std::size_t width_;
};

/// Parsed CSV: provenance hash, header and rows (RFC 4180 quoting understood).
struct CsvTable {
    std::string hash;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};
CsvTable read_csv(const std::filesystem::path& path);

/// {"kind": "sphere", "params": [...], "offset": [x, y, z]} for primitives,
/// {"kind": "union", "smoothness": k, "children": [...]} for unions.
Json field_to_json(const SdfField& field);
FieldPtr field_from_json(const Json& j);

/// {"shapes": [{"field": ..., "diameter": d}, ...]}.
Json basis_to_json(const ShapeBasis& basis);
/// Diameters are taken from the manifest when present and recomputed otherwise.
ShapeBasis basis_from_json(const Json& j);

/// {"kind": "linear"} or {"kind": "kernel", "tau": t}.
Json decoder_to_json(const Decoder& decoder);
std::unique_ptr<Decoder> decoder_from_json(const Json& j, ShapeBasis basis);

/// Row-major R followed by t.
std::vector<double> pose_to_numbers(const Pose& pose);
Pose pose_from_numbers(const std::vector<double>& v);

/// Poses as 12 numbers each, code, optional LSQ coefficients, objective trace
/// and certificate flag.
Json correction_to_json(const CorrectionResult& r);

/// Directory layout: scene.json (config, basis, decoder, ground truth) and
/// object_<i>_view_<j>.csv with the camera-frame points of every view.
void write_scene_dir(const std::filesystem::path& dir, const std::vector<Scene>& scenes, const Json& config,
                     const ShapeBasis& basis, const Decoder& decoder);

struct SceneDir {
    Json config;
    ShapeBasis basis;
    std::unique_ptr<Decoder> decoder;
    std::vector<Scene> scenes;
};
SceneDir read_scene_dir(const std::filesystem::path& dir);

} // namespace crisp
