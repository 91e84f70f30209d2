#include <benchmark/benchmark.h>

#include "prefplan/dsl.hpp"
#include "bench_common.hpp"

using namespace prefplan;

namespace {

const char* kPreference =
    "AND(linear(pointingInDirectionMetric(getPose(next_state, 'box_blue', 'world'), "
    "getPose(next_state, 'box_red', 'world'), main_axis=[0, -1, 0]), 0.3, 1.0, direction=false), "
    "linear(positionNorm(getPose(next_state, 'box_red', 'world'), "
    "getPose(next_state, 'box_blue', 'world'), norm='L2', axis=['x', 'y']), 0.1, 0.45, "
    "direction=false))";

void BM_DslParse(benchmark::State& state) {
    for (auto _ : state) {
        benchmark::DoNotOptimize(dsl::parse(kPreference));
    }
}
BENCHMARK(BM_DslParse);

void BM_DslEvaluate(benchmark::State& state) {
    const auto scenario = bench::twoBoxScenario();
    const auto expr = dsl::parse(kPreference);
    const auto prim = world::parsePrimitiveCall("pick(box_red)");
    world::Action action;
    action.params = {0.1, -0.2, 0.0, 0.4};
    for (auto _ : state) {
        const auto ctx = dsl::EvalContext::forSkill(scenario.initial, prim, action);
        benchmark::DoNotOptimize(dsl::evaluate(expr, ctx));
    }
}
BENCHMARK(BM_DslEvaluate);

void BM_DslPrettyPrint(benchmark::State& state) {
    const auto expr = dsl::parse(kPreference);
    for (auto _ : state) {
        benchmark::DoNotOptimize(dsl::prettyPrint(expr));
    }
}
BENCHMARK(BM_DslPrettyPrint);

}  // namespace
