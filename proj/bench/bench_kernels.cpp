// Serial loop vs OpenMP kernel, one pair per kernel. Sizes are point counts.

#include "crisp/kernels.hpp"
#include "crisp/simulator.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace crisp;

namespace {

const LinearBlend& decoder()
{
    static const LinearBlend dec(asymmetric_basis(10));
    return dec;
}

const LatentCode& code()
{
    static const LatentCode c{Eigen::VectorXd::Constant(10, 0.1)};
    return c;
}

PointCloud cloud(Eigen::Index n)
{
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(-0.25, 0.25);
    PointCloud p(3, n);
    for (Eigen::Index i = 0; i < p.size(); ++i)
        p.data()[i] = u(rng);
    return p;
}

template <bool Parallel>
void eval_batch(benchmark::State& st)
{
    const FieldPtr f = decoder().decode(code());
    const PointCloud x = cloud(st.range(0));
    for (auto _ : st)
        benchmark::DoNotOptimize(Parallel ? kernels::eval_batch(*f, x) : kernels::serial::eval_batch(*f, x));
    st.SetItemsProcessed(st.iterations() * st.range(0));
}

template <bool Parallel>
void field_matrix(benchmark::State& st)
{
    std::vector<const SdfField*> cols;
    for (const auto& f : decoder().basis().fields)
        cols.push_back(f.get());
    const PointCloud x = cloud(st.range(0));
    for (auto _ : st)
        benchmark::DoNotOptimize(Parallel ? kernels::field_matrix(x, cols) : kernels::serial::field_matrix(x, cols));
    st.SetItemsProcessed(st.iterations() * st.range(0));
}

template <bool Parallel>
void project_to_surface(benchmark::State& st)
{
    const FieldPtr f = decoder().decode(code());
    const PointCloud x0 = cloud(st.range(0));
    for (auto _ : st) {
        PointCloud x = x0;
        benchmark::DoNotOptimize(Parallel ? kernels::project_to_surface(*f, x, 1e-6, 50)
                                          : kernels::serial::project_to_surface(*f, x, 1e-6, 50));
    }
    st.SetItemsProcessed(st.iterations() * st.range(0));
}

template <bool Parallel>
void bake_grid(benchmark::State& st)
{
    const FieldPtr f = decoder().decode(code());
    const auto r = static_cast<std::uint32_t>(st.range(0));
    const Aabb box = f->bounds().padded(0.05);
    for (auto _ : st)
        benchmark::DoNotOptimize(Parallel ? kernels::bake_grid(*f, box, {r, r, r})
                                          : kernels::serial::bake_grid(*f, box, {r, r, r}));
    st.SetItemsProcessed(st.iterations() * st.range(0) * st.range(0) * st.range(0));
}

template <bool Parallel>
void nearest_distances(benchmark::State& st)
{
    const PointCloud q = cloud(st.range(0));
    const PointCloud ref = cloud(st.range(0) + 1);
    for (auto _ : st)
        benchmark::DoNotOptimize(Parallel ? kernels::nearest_distances(q, ref, Norm::L2)
                                          : kernels::serial::nearest_distances(q, ref, Norm::L2));
    st.SetItemsProcessed(st.iterations() * st.range(0));
}

template <bool Parallel>
void pose_objective(benchmark::State& st)
{
    const FieldPtr f = decoder().decode(code());
    const PointCloud x = cloud(st.range(0));
    const Mat3 r = Mat3::Identity();
    const Vec3 t(0.01, 0.0, -0.01);
    for (auto _ : st)
        benchmark::DoNotOptimize(Parallel ? kernels::pose_objective(*f, x, r, t)
                                          : kernels::serial::pose_objective(*f, x, r, t));
    st.SetItemsProcessed(st.iterations() * st.range(0));
}

template <bool Parallel>
void code_objective(benchmark::State& st)
{
    const PointCloud z = cloud(st.range(0));
    for (auto _ : st)
        benchmark::DoNotOptimize(Parallel ? kernels::code_objective(decoder(), z, code().alpha)
                                          : kernels::serial::code_objective(decoder(), z, code().alpha));
    st.SetItemsProcessed(st.iterations() * st.range(0));
}

} // namespace

#define CRISP_PAIR(fn, lo, hi)                                                                                         \
    BENCHMARK(fn<false>)->Name(#fn "/serial")->RangeMultiplier(4)->Range(lo, hi)->UseRealTime();                       \
    BENCHMARK(fn<true>)->Name(#fn "/omp")->RangeMultiplier(4)->Range(lo, hi)->UseRealTime()

CRISP_PAIR(eval_batch, 1 << 10, 1 << 16);
CRISP_PAIR(field_matrix, 1 << 10, 1 << 14);
CRISP_PAIR(project_to_surface, 1 << 10, 1 << 14);
CRISP_PAIR(bake_grid, 16, 64);
CRISP_PAIR(nearest_distances, 1 << 8, 1 << 12);
CRISP_PAIR(pose_objective, 1 << 10, 1 << 16);
CRISP_PAIR(code_objective, 1 << 10, 1 << 14);

BENCHMARK_MAIN();
