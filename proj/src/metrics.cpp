#include "led/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "led/errors.hpp"

namespace led {

const double kHorizonFracs[4] = {0.25, 0.5, 0.75, 1.0};

namespace {

void check_metric_args(const Array& preds, const Array& y, int horizon, const char* op) {
    if (preds.ndim() != 3 || preds.dim(2) != 2) {
        throw ShapeError(std::string(op) + ": predictions must be [K x T x 2], got " +
                         preds.shape_str());
    }
    if (y.ndim() != 2 || y.dim(1) != 2) {
        throw ShapeError(std::string(op) + ": ground truth must be [T x 2], got " + y.shape_str());
    }
    if (preds.dim(1) != y.dim(0)) {
        throw ShapeError(std::string(op) + ": prediction horizon " + preds.shape_str() +
                         " does not match ground truth " + y.shape_str());
    }
    if (horizon < 1 || horizon > y.dim(0)) {
        throw ConfigError(std::string(op) + ": horizon " + std::to_string(horizon) +
                          " out of range [1, " + std::to_string(y.dim(0)) + "]");
    }
}

}  // namespace

double min_ade(const Array& preds, const Array& y, int horizon) {
    check_metric_args(preds, y, horizon, "min_ade");
    double best = 0.0;
    for (int k = 0; k < preds.dim(0); ++k) {
        double acc = 0.0;
        for (int t = 0; t < horizon; ++t) {
            const double dx = preds.at(k, t, 0) - y.at(t, 0);
            const double dy = preds.at(k, t, 1) - y.at(t, 1);
            acc += std::sqrt(dx * dx + dy * dy);
        }
        acc /= static_cast<double>(horizon);
        if (k == 0 || acc < best) best = acc;
    }
    return best;
}

double min_fde(const Array& preds, const Array& y, int horizon) {
    check_metric_args(preds, y, horizon, "min_fde");
    double best = 0.0;
    for (int k = 0; k < preds.dim(0); ++k) {
        const double dx = preds.at(k, horizon - 1, 0) - y.at(horizon - 1, 0);
        const double dy = preds.at(k, horizon - 1, 1) - y.at(horizon - 1, 1);
        const double d = std::sqrt(dx * dx + dy * dy);
        if (k == 0 || d < best) best = d;
    }
    return best;
}

double mode_coverage(const Array& preds, const TrajectoryScene& scene, double threshold) {
    if (!scene.has_mode_meta()) {
        throw DataError("mode_coverage: scene " + std::to_string(scene.id) +
                        " carries no mode metadata");
    }
    const int modes = scene.mode_refs.dim(0);
    const int t_last = preds.dim(1) - 1;
    int covered = 0;
    for (int m = 0; m < modes; ++m) {
        for (int k = 0; k < preds.dim(0); ++k) {
            const double dx = preds.at(k, t_last, 0) - scene.mode_refs.at(m, 0);
            const double dy = preds.at(k, t_last, 1) - scene.mode_refs.at(m, 1);
            if (std::sqrt(dx * dx + dy * dy) <= threshold) {
                ++covered;
                break;
            }
        }
    }
    return static_cast<double>(covered) / static_cast<double>(modes);
}

namespace {

struct SceneOutcome {
    double ade[4] = {0, 0, 0, 0};
    double fde[4] = {0, 0, 0, 0};
    double coverage = -1.0;
    int calls = 0;
    std::int64_t wall_ns = 0;
};

}  // namespace

MetricReport benchmark(const SceneSet& test, const std::vector<SamplerSpec>& samplers,
                       double coverage_threshold, std::uint64_t seed, int workers) {
    if (test.scenes.empty()) throw DataError("benchmark: empty test set");
    for (const auto& s : test.scenes) {
        if (!s.has_future()) {
            throw DataError("benchmark: scene " + std::to_string(s.id) + " has no future");
        }
    }
    MetricReport report;
    report.scene_count = static_cast<int>(test.scenes.size());
    report.seed = seed;

    const int tf = test.t_future;
    int horizons[4];
    for (int h = 0; h < 4; ++h) {
        horizons[h] = std::max(1, static_cast<int>(std::llround(kHorizonFracs[h] * tf)));
    }
    const bool has_meta = test.scenes.front().has_mode_meta();

    const Rng base(seed);
    for (const auto& spec : samplers) {
        std::vector<SceneOutcome> outcomes(test.scenes.size());
        auto eval_scene = [&](std::size_t i) {
            const TrajectoryScene& scene = test.scenes[i];
            Rng rng = base.fork(static_cast<std::uint64_t>(scene.id));
            PredictionSet ps = spec.run(scene, rng);
            SceneOutcome& o = outcomes[i];
            for (int h = 0; h < 4; ++h) {
                o.ade[h] = min_ade(ps.trajectories, scene.future, horizons[h]);
                o.fde[h] = min_fde(ps.trajectories, scene.future, horizons[h]);
            }
            if (has_meta) o.coverage = mode_coverage(ps.trajectories, scene, coverage_threshold);
            o.calls = ps.denoiser_calls;
            o.wall_ns = ps.wall_ns;
        };
        if (workers <= 1) {
            for (std::size_t i = 0; i < test.scenes.size(); ++i) eval_scene(i);
        } else {
            std::vector<std::thread> pool;
            std::size_t per = (test.scenes.size() + static_cast<std::size_t>(workers) - 1) /
                              static_cast<std::size_t>(workers);
            for (int w = 0; w < workers; ++w) {
                const std::size_t lo = static_cast<std::size_t>(w) * per;
                const std::size_t hi = std::min(test.scenes.size(), lo + per);
                if (lo >= hi) break;
                pool.emplace_back([&, lo, hi] {
                    for (std::size_t i = lo; i < hi; ++i) eval_scene(i);
                });
            }
            for (auto& th : pool) th.join();
        }

        // Fixed-order aggregation.
        const double n = static_cast<double>(test.scenes.size());
        double wall_mean = 0.0, cov_mean = 0.0;
        int calls = outcomes.front().calls;
        for (const auto& o : outcomes) {
            wall_mean += static_cast<double>(o.wall_ns) / n;
            if (has_meta) cov_mean += o.coverage / n;
            if (o.calls != calls) {
                throw ContractError("benchmark: denoiser call count varies across scenes");
            }
        }
        for (int h = 0; h < 4; ++h) {
            MetricRow row;
            row.sampler = spec.name;
            row.k = spec.k;
            row.horizon_frac = kHorizonFracs[h];
            double ade = 0.0, fde = 0.0;
            for (const auto& o : outcomes) {
                ade += o.ade[h] / n;
                fde += o.fde[h] / n;
            }
            row.min_ade = ade;
            row.min_fde = fde;
            row.coverage = has_meta ? cov_mean : -1.0;
            row.calls = calls;
            row.wall_ns_mean = wall_mean;
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

MetricReport read_metric_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open report: " + path);
    MetricReport report;
    std::string line;
    bool header_seen = false;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line != "sampler,K,horizon_frac,min_ade,min_fde,coverage,calls,wall_ns_mean") {
                throw DataError(path + ":" + std::to_string(lineno) + ": bad report header");
            }
            header_seen = true;
            continue;
        }
        std::istringstream ls(line);
        MetricRow r;
        std::string field;
        auto next = [&] {
            if (!std::getline(ls, field, ',')) {
                throw DataError(path + ":" + std::to_string(lineno) + ": short report row");
            }
            return field;
        };
        try {
            r.sampler = next();
            r.k = std::stoi(next());
            r.horizon_frac = std::stod(next());
            r.min_ade = std::stod(next());
            r.min_fde = std::stod(next());
            r.coverage = std::stod(next());
            r.calls = std::stoi(next());
            r.wall_ns_mean = std::stod(next());
        } catch (const DataError&) {
            throw;
        } catch (const std::exception&) {
            throw DataError(path + ":" + std::to_string(lineno) + ": bad report field");
        }
        report.rows.push_back(std::move(r));
    }
    if (!header_seen) throw DataError(path + ": missing report header");
    return report;
}

void write_metric_report(const MetricReport& report, const std::string& path,
                         const std::vector<std::string>& headers) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open report for writing: " + path);
    for (const auto& h : headers) out << "# " << h << "\n";
    out << "sampler,K,horizon_frac,min_ade,min_fde,coverage,calls,wall_ns_mean\n";
    char buf[40];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << buf;
    };
    for (const auto& r : report.rows) {
        out << r.sampler << "," << r.k << ",";
        put(r.horizon_frac);
        out << ",";
        put(r.min_ade);
        out << ",";
        put(r.min_fde);
        out << ",";
        put(r.coverage);
        out << "," << r.calls << ",";
        std::snprintf(buf, sizeof buf, "%.0f", r.wall_ns_mean);
        out << buf << "\n";
    }
    if (!out) throw DataError("write failure on report: " + path);
}

}  // namespace led
