#include <benchmark/benchmark.h>

#include "locoplan/geometry.hpp"

using namespace locoplan;

static TerrainPolygon square(double x0, double y0, double side, double z) {
  return TerrainPolygon::make("sq", {{x0, y0, z},
                                     {x0 + side, y0, z},
                                     {x0 + side, y0 + side, z},
                                     {x0, y0 + side, z}});
}

static void BM_classify_cell(benchmark::State& state) {
  std::vector<TerrainPolygon> polys;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      polys.push_back(square(0.05 + 0.2 * i, 0.05 + 0.2 * j, 0.15, 0.0));
  const CellRect cell{0, 0, 0.8, 0.8};
  ClassificationRules rules;
  for (auto _ : state)
    benchmark::DoNotOptimize(classify_cell(polys, cell, rules));
}
BENCHMARK(BM_classify_cell);

static void BM_polygon_to_halfspaces(benchmark::State& state) {
  const auto poly = square(0, 0, 0.4, 0.1);
  for (auto _ : state)
    benchmark::DoNotOptimize(polygon_to_halfspaces(poly));
}
BENCHMARK(BM_polygon_to_halfspaces);

BENCHMARK_MAIN();
