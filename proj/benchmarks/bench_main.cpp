#include "histreg/cam.hpp"
#include "histreg/features.hpp"
#include "histreg/phantom.hpp"
#include "histreg/register.hpp"
#include "histreg/standardize.hpp"

#include <benchmark/benchmark.h>

#include <numbers>

using namespace histreg;

namespace {

PhantomSlice slice(int size, const Affine2D& g = Affine2D::identity()) {
    PhantomSpec spec;
    spec.width = spec.height = size;
    spec.acquisition_noise = 1;
    spec.affines = {g};
    return generate_phantom(spec).slices[0];
}

Affine2D small_motion(int size) {
    const Vec2 c(0.5 * (size - 1), 0.5 * (size - 1));
    return compose(Affine2D::translation(2, -1), Affine2D::rotation(3 * std::numbers::pi / 180, c));
}

} // namespace

static void BM_Edgeness(benchmark::State& state) {
    const Image img = slice(static_cast<int>(state.range(0))).image;
    for (auto _ : state) benchmark::DoNotOptimize(edgeness_map(img, 3));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(img.size()));
}
BENCHMARK(BM_Edgeness)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

static void BM_Standardize(benchmark::State& state) {
    const Image img = slice(static_cast<int>(state.range(0))).image;
    const StandardScale scale = train_scale({img}, StandardScale{});
    for (auto _ : state) benchmark::DoNotOptimize(standardize_image(img, scale));
}
BENCHMARK(BM_Standardize)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_RegisterAffine(benchmark::State& state) {
    const int size = static_cast<int>(state.range(0));
    const PhantomSlice s = slice(size, small_motion(size));
    for (auto _ : state) benchmark::DoNotOptimize(register_affine(s.clean, s.image, RegistrationConfig{}));
}
BENCHMARK(BM_RegisterAffine)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_RegisterLags(benchmark::State& state) {
    const PhantomSlice s = slice(256, small_motion(256));
    const Affine2D init = register_affine(s.clean, s.image, RegistrationConfig{}).affine();
    for (auto _ : state) benchmark::DoNotOptimize(register_lags(s.clean, s.image, init, RegistrationConfig{}));
}
BENCHMARK(BM_RegisterLags)->Unit(benchmark::kMillisecond);

static void BM_CamSlice(benchmark::State& state) {
    const int size = static_cast<int>(state.range(0));
    const Image a = slice(size).image, b = slice(size, small_motion(size)).image;
    for (auto _ : state) benchmark::DoNotOptimize(cam_slice(a, b, a, CamConfig{}));
}
BENCHMARK(BM_CamSlice)->Arg(256)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
