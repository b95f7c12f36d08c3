#include "crisp/sdf.hpp"

#include "crisp/kernels.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace crisp {

namespace {

template <typename U>
void put_le(std::ostream& os, U v)
{
    static_assert(std::is_unsigned_v<U>);
    char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i)
        buf[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    os.write(buf, sizeof(U));
}

template <typename U>
U get_le(std::istream& is)
{
    unsigned char buf[sizeof(U)];
    if (!is.read(reinterpret_cast<char*>(buf), sizeof(U)))
        throw FormatError("GSDF: truncated file");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
        v |= static_cast<U>(buf[i]) << (8 * i);
    return v;
}

} // namespace

GridSdf::GridSdf(Aabb bounds, Resolution resolution, std::vector<float> values)
    : bounds_(std::move(bounds)), res_(resolution), values_(std::move(values))
{
    for (auto r : res_)
        if (r < 2)
            throw FormatError("GridSdf: resolution must be at least 2 per axis");
    if ((bounds_.hi.array() <= bounds_.lo.array()).any())
        throw FormatError("GridSdf: empty bounds");
    const std::size_t expected = static_cast<std::size_t>(res_[0]) * res_[1] * res_[2];
    if (values_.size() != expected)
        throw FormatError("GridSdf: expected " + std::to_string(expected) + " samples, got " +
                          std::to_string(values_.size()));
}

GridSdf GridSdf::bake(const SdfField& field, const Aabb& bounds, Resolution resolution)
{
    return GridSdf(bounds, resolution, kernels::bake_grid(field, bounds, resolution));
}

Vec3 GridSdf::spacing() const
{
    const Vec3 cells(res_[0] - 1.0, res_[1] - 1.0, res_[2] - 1.0);
    return bounds_.extent().cwiseQuotient(cells);
}

double GridSdf::interpolate(const Vec3& p) const
{
    const Vec3 h = spacing();
    std::array<std::uint32_t, 3> i0{};
    Vec3 frac;
    for (int a = 0; a < 3; ++a) {
        const double u = (p[a] - bounds_.lo[a]) / h[a];
        const double cell = std::clamp(std::floor(u), 0.0, static_cast<double>(res_[a] - 2));
        i0[a] = static_cast<std::uint32_t>(cell);
        frac[a] = std::clamp(u - cell, 0.0, 1.0);
    }
    double acc = 0.0;
    for (int c = 0; c < 8; ++c) {
        const std::uint32_t dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
        const double w = (dx ? frac[0] : 1.0 - frac[0]) * (dy ? frac[1] : 1.0 - frac[1]) *
                         (dz ? frac[2] : 1.0 - frac[2]);
        if (w != 0.0)
            acc += w * node(i0[0] + dx, i0[1] + dy, i0[2] + dz);
    }
    return acc;
}

double GridSdf::eval(const Vec3& p) const
{
    if (bounds_.contains(p))
        return interpolate(p);
    const Vec3 clamped = p.cwiseMax(bounds_.lo).cwiseMin(bounds_.hi);
    return interpolate(clamped) + (p - clamped).norm();
}

Vec3 GridSdf::gradient(const Vec3& p) const
{
    const Vec3 h = spacing();
    Vec3 g;
    for (int a = 0; a < 3; ++a) {
        Vec3 e = Vec3::Zero();
        e[a] = h[a];
        g[a] = (eval(p + e) - eval(p - e)) / (2.0 * h[a]);
    }
    return g;
}

void GridSdf::write(const std::filesystem::path& path) const
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw FormatError("GSDF: cannot open " + path.string() + " for writing");
    os.write("GSDF", 4);
    put_le<std::uint32_t>(os, kVersion);
    for (const Vec3* v : {&bounds_.lo, &bounds_.hi})
        for (int a = 0; a < 3; ++a)
            put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>((*v)[a]));
    for (auto r : res_)
        put_le<std::uint32_t>(os, r);
    for (float v : values_)
        put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(v));
    if (!os)
        throw FormatError("GSDF: write failed for " + path.string());
}

GridSdf GridSdf::read(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw FormatError("GSDF: cannot open " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "GSDF", 4) != 0)
        throw FormatError("GSDF: bad magic in " + path.string());
    const auto version = get_le<std::uint32_t>(is);
    if (version != kVersion)
        throw FormatError("GSDF: unsupported version " + std::to_string(version));
    Aabb box;
    for (Vec3* v : {&box.lo, &box.hi})
        for (int a = 0; a < 3; ++a)
            (*v)[a] = std::bit_cast<double>(get_le<std::uint64_t>(is));
    Resolution res{};
    for (auto& r : res)
        r = get_le<std::uint32_t>(is);
    const std::size_t count = static_cast<std::size_t>(res[0]) * res[1] * res[2];
    std::vector<float> values(count);
    for (auto& v : values)
        v = std::bit_cast<float>(get_le<std::uint32_t>(is));
    return GridSdf(box, res, std::move(values));
}

} // namespace crisp
