#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "led/array.hpp"
#include "led/sampler.hpp"
#include "led/scene.hpp"

namespace led {

// Best-of-K time-averaged error over the first `horizon` future steps
// (1-based step count).
double min_ade(const Array& preds, const Array& y, int horizon);

// Best-of-K endpoint error at future step `horizon` (1-based).
double min_fde(const Array& preds, const Array& y, int horizon);

// Fraction of a scene's intent modes with at least one prediction endpoint
// within `threshold` of the mode's noiseless reference endpoint.
double mode_coverage(const Array& preds, const TrajectoryScene& scene, double threshold);

struct MetricRow {
    std::string sampler;
    int k = 0;
    double horizon_frac = 0.0;
    double min_ade = 0.0;
    double min_fde = 0.0;
    double coverage = -1.0;  // -1 when the set carries no mode metadata
    int calls = 0;
    double wall_ns_mean = 0.0;
};

struct MetricReport {
    std::vector<MetricRow> rows;
    int scene_count = 0;
    std::uint64_t seed = 0;
};

using SceneSampler = std::function<PredictionSet(const TrajectoryScene&, Rng&)>;

struct SamplerSpec {
    std::string name;  // row label; also the sampler id prefix
    int k = 0;
    SceneSampler run;
};

// Runs each sampler over the test set (per-scene rng forked from `seed` by
// scene id, so results are independent of worker scheduling) and aggregates
// minADE/minFDE at horizon fractions {0.25, 0.5, 0.75, 1.0} plus coverage at
// the full horizon. `workers` > 1 evaluates scenes in parallel; aggregation
// order stays fixed.
MetricReport benchmark(const SceneSet& test, const std::vector<SamplerSpec>& samplers,
                       double coverage_threshold, std::uint64_t seed, int workers = 1);

void write_metric_report(const MetricReport& report, const std::string& path,
                         const std::vector<std::string>& headers);
MetricReport read_metric_report(const std::string& path);

extern const double kHorizonFracs[4];

}  // namespace led
