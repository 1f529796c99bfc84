#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "led/config.hpp"
#include "led/errors.hpp"
#include "led/metrics.hpp"
#include "led/sampler.hpp"
#include "led/selftest.hpp"
#include "led/training.hpp"
#include "led/version.hpp"

namespace {

using namespace led;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;  // key=value
    std::uint64_t seed = 1;
};

Config build_config(const CommonArgs& args) {
    Config cfg;
    if (!args.config_path.empty()) cfg.load_file(args.config_path);
    for (const auto& kv : args.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        }
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "configuration file (key = value lines)");
    cmd->add_option("--set", args.overrides, "override a config key (key=value, repeatable)");
    cmd->add_option("--seed", args.seed, "random seed");
}

// Checkpoint header + shape validation against the configured architecture.
ParameterStore load_checkpoint(const std::string& path, const Config& cfg, bool need_initializer) {
    ParameterStore store = ParameterStore::load(path);
    ParameterStore expected;
    const ModelConfig mc = cfg.model_config();
    const int tp = cfg.get_int("data.t_past");
    const int tf = cfg.get_int("data.t_future");
    register_denoiser_params(expected, mc, tp, tf, 0);
    if (need_initializer) register_initializer_params(expected, mc, tp, tf, 0);
    for (const auto& name : expected.names()) {
        if (!store.has(name)) {
            throw DataError("checkpoint " + path + " is missing parameter " + name +
                            " (wrong stage or architecture?)");
        }
        if (store.value(name).shape() != expected.value(name).shape()) {
            throw DataError("checkpoint " + path + " has shape " + store.value(name).shape_str() +
                            " for " + name + "; config expects " +
                            expected.value(name).shape_str());
        }
    }
    return store;
}

void write_predictions(const std::string& path, const Config& cfg, std::uint64_t seed,
                       const std::vector<std::pair<int, Array>>& scene_preds) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open prediction file for writing: " + path);
    for (const auto& h : cfg.artifact_headers(seed)) out << "# " << h << "\n";
    out << "scene_id,k,t,x,y\n";
    char buf[40];
    for (const auto& [sid, traj] : scene_preds) {
        for (int k = 0; k < traj.dim(0); ++k) {
            for (int t = 0; t < traj.dim(1); ++t) {
                out << sid << "," << k << "," << t << ",";
                std::snprintf(buf, sizeof buf, "%.17g", traj.at(k, t, 0));
                out << buf << ",";
                std::snprintf(buf, sizeof buf, "%.17g", traj.at(k, t, 1));
                out << buf << "\n";
            }
        }
    }
    if (!out) throw DataError("write failure on prediction file: " + path);
}

SceneSampler make_sampler(const std::string& kind, int k, int tau, const DiffusionSchedule& sched,
                          const ParameterStore& store, const ModelConfig& mc, int t_future) {
    if (kind == "standard") {
        return [=, &store, &sched](const TrajectoryScene& scene, Rng& rng) {
            return sample_standard(scene, k, t_future, sched, store, mc, rng);
        };
    }
    if (kind == "leapfrog") {
        return [=, &store, &sched](const TrajectoryScene& scene, Rng& rng) {
            return sample_leapfrog(scene, k, tau, t_future, sched, store, mc, rng);
        };
    }
    if (kind == "iid") {
        return [=, &store, &sched](const TrajectoryScene& scene, Rng& rng) {
            return sample_iid_truncated(scene, k, tau, t_future, sched, store, mc, rng);
        };
    }
    throw ConfigError("unknown sampler '" + kind + "' (expected standard|leapfrog|iid)");
}

int run_gen_data(const CommonArgs& common, const std::string& out_path) {
    Config cfg = build_config(common);
    GenConfig gc = cfg.gen_config();
    gc.seed = common.seed;
    SceneSet set = generate_synthetic(gc);
    write_scenes(set, out_path, cfg.artifact_headers(common.seed));
    std::cout << "wrote " << set.scenes.size() << " scenes to " << out_path << "\n";
    return 0;
}

int run_train_denoiser(const CommonArgs& common, const std::string& scenes_path,
                       const std::string& out_path, const std::string& report_path) {
    Config cfg = build_config(common);
    SceneSet scenes = read_scenes(scenes_path);
    const ModelConfig mc = cfg.model_config();
    const DiffusionSchedule sched = cfg.schedule();
    TrainConfig tc = cfg.train_config();
    tc.seed = common.seed;

    ParameterStore store;
    register_denoiser_params(store, mc, scenes.t_past, scenes.t_future, common.seed);
    TrainReport report = train_stage1(scenes, sched, store, mc, tc,
                                      [](int epoch, double loss, double, double wall) {
                                          std::cout << "stage1 epoch " << epoch << " loss " << loss
                                                    << " (" << wall << " ms)\n";
                                      });
    report.config_hash = cfg.hash_hex();
    store.save(out_path, cfg.artifact_headers(common.seed));
    if (!report_path.empty()) write_report(report, report_path, cfg.artifact_headers(common.seed));
    std::cout << "stage-1 checkpoint written to " << out_path << "\n";
    return 0;
}

int run_train_initializer(const CommonArgs& common, const std::string& scenes_path,
                          const std::string& denoiser_ckpt, const std::string& out_path,
                          const std::string& report_path) {
    Config cfg = build_config(common);
    SceneSet scenes = read_scenes(scenes_path);
    const ModelConfig mc = cfg.model_config();
    const DiffusionSchedule sched = cfg.schedule();
    TrainConfig tc = cfg.train_config();
    tc.seed = common.seed;

    ParameterStore store = load_checkpoint(denoiser_ckpt, cfg, /*need_initializer=*/false);
    store.freeze_prefix("denoiser.", true);
    register_initializer_params(store, mc, scenes.t_past, scenes.t_future, common.seed);
    TrainReport report = train_stage2(scenes, sched, store, mc, tc,
                                      [](int epoch, double loss, double, double wall) {
                                          std::cout << "stage2 epoch " << epoch << " loss " << loss
                                                    << " (" << wall << " ms)\n";
                                      });
    report.config_hash = cfg.hash_hex();
    store.save(out_path, cfg.artifact_headers(common.seed));
    if (!report_path.empty()) write_report(report, report_path, cfg.artifact_headers(common.seed));
    std::cout << "stage-2 checkpoint written to " << out_path << "\n";
    return 0;
}

int run_predict(const CommonArgs& common, const std::string& scenes_path, const std::string& ckpt,
                const std::string& sampler_kind, int tau, int k, const std::string& out_path,
                int workers) {
    Config cfg = build_config(common);
    SceneSet scenes = read_scenes(scenes_path);
    const ModelConfig mc = cfg.model_config();
    const DiffusionSchedule sched = cfg.schedule();
    if (tau < 0) tau = cfg.get_int("train.tau");
    if (k < 1) k = mc.k;
    ParameterStore store = load_checkpoint(ckpt, cfg, sampler_kind == "leapfrog");
    const int tf = scenes.t_future > 0 ? scenes.t_future : cfg.get_int("data.t_future");
    SceneSampler sampler = make_sampler(sampler_kind, k, tau, sched, store, mc, tf);

    std::vector<std::pair<int, Array>> preds(scenes.scenes.size());
    const Rng base(common.seed);
    auto eval_scene = [&](std::size_t i) {
        Rng rng = base.fork(static_cast<std::uint64_t>(scenes.scenes[i].id));
        preds[i] = {scenes.scenes[i].id, sampler(scenes.scenes[i], rng).trajectories};
    };
    if (workers <= 1) {
        for (std::size_t i = 0; i < scenes.scenes.size(); ++i) eval_scene(i);
    } else {
        std::vector<std::thread> pool;
        const std::size_t per =
            (scenes.scenes.size() + static_cast<std::size_t>(workers) - 1) / static_cast<std::size_t>(workers);
        for (int w = 0; w < workers; ++w) {
            const std::size_t lo = static_cast<std::size_t>(w) * per;
            const std::size_t hi = std::min(scenes.scenes.size(), lo + per);
            if (lo >= hi) break;
            pool.emplace_back([&, lo, hi] {
                for (std::size_t i = lo; i < hi; ++i) eval_scene(i);
            });
        }
        for (auto& th : pool) th.join();
    }
    write_predictions(out_path, cfg, common.seed, preds);
    std::cout << "wrote predictions for " << preds.size() << " scenes to " << out_path << "\n";
    return 0;
}

int run_eval(const CommonArgs& common, const std::string& scenes_path, const std::string& ckpt,
             const std::string& sampler_kind, int tau, int k, const std::string& out_path,
             int workers) {
    Config cfg = build_config(common);
    SceneSet scenes = read_scenes(scenes_path);
    const ModelConfig mc = cfg.model_config();
    const DiffusionSchedule sched = cfg.schedule();
    if (tau < 0) tau = cfg.get_int("train.tau");
    if (k < 1) k = mc.k;
    ParameterStore store = load_checkpoint(ckpt, cfg, sampler_kind == "leapfrog");

    std::vector<SamplerSpec> specs;
    SamplerSpec spec;
    spec.k = k;
    spec.run = make_sampler(sampler_kind, k, tau, sched, store, mc, scenes.t_future);
    spec.name = sampler_kind == "standard"
                    ? "standard_g" + std::to_string(sched.steps())
                    : sampler_kind + "_t" + std::to_string(tau);
    specs.push_back(std::move(spec));

    MetricReport report =
        benchmark(scenes, specs, cfg.get_double("eval.coverage_threshold"), common.seed, workers);
    write_metric_report(report, out_path, cfg.artifact_headers(common.seed));
    std::cout << "wrote metric report to " << out_path << "\n";
    return 0;
}

int run_bench(const CommonArgs& common, const std::string& scenes_path, const std::string& ckpt,
              const std::string& out_path, int workers) {
    Config cfg = build_config(common);
    SceneSet scenes = read_scenes(scenes_path);
    const ModelConfig mc = cfg.model_config();
    const DiffusionSchedule sched = cfg.schedule();
    ParameterStore store = load_checkpoint(ckpt, cfg, /*need_initializer=*/true);
    const int tf = scenes.t_future;

    std::vector<int> taus;
    {
        std::istringstream ts(cfg.get_string("bench.taus"));
        std::string tok;
        while (std::getline(ts, tok, ',')) taus.push_back(std::stoi(tok));
    }
    std::vector<SamplerSpec> specs;
    for (int tau : taus) {
        specs.push_back({"leapfrog_t" + std::to_string(tau), mc.k,
                         make_sampler("leapfrog", mc.k, tau, sched, store, mc, tf)});
    }
    specs.push_back({"standard_g" + std::to_string(sched.steps()), mc.k,
                     make_sampler("standard", mc.k, 0, sched, store, mc, tf)});
    const int bench_tau = cfg.get_int("train.tau");
    specs.push_back({"iid_t" + std::to_string(bench_tau), mc.k,
                     make_sampler("iid", mc.k, bench_tau, sched, store, mc, tf)});
    // Correlated-sampling comparison at small K: leapfrog subset vs i.i.d.
    const int ck = cfg.get_int("eval.coverage_k");
    specs.push_back({"leapfrog_t" + std::to_string(bench_tau) + "_k" + std::to_string(ck), ck,
                     make_sampler("leapfrog", ck, bench_tau, sched, store, mc, tf)});
    specs.push_back({"iid_t" + std::to_string(bench_tau) + "_k" + std::to_string(ck), ck,
                     make_sampler("iid", ck, bench_tau, sched, store, mc, tf)});

    MetricReport report =
        benchmark(scenes, specs, cfg.get_double("eval.coverage_threshold"), common.seed, workers);
    write_metric_report(report, out_path, cfg.artifact_headers(common.seed));
    std::cout << "wrote benchmark report to " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string("led ") + led::kVersion +
                 " - leapfrog diffusion trajectory prediction"};
    app.require_subcommand(1);

    CommonArgs common;
    std::string scenes_path, out_path, report_path, ckpt_path, denoiser_ckpt, sampler_kind;
    int tau = -1, k = -1, workers = 1;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic scene CSV");
    add_common(gen, common);
    gen->add_option("--out", out_path, "output scene CSV")->required();

    auto* tden = app.add_subcommand("train-denoiser", "stage 1: train the denoising module");
    add_common(tden, common);
    tden->add_option("--scenes", scenes_path, "training scene CSV")->required();
    tden->add_option("--out", out_path, "output checkpoint path")->required();
    tden->add_option("--report", report_path, "per-epoch training report CSV");

    auto* tini = app.add_subcommand("train-initializer",
                                    "stage 2: train the leapfrog initializer against a frozen denoiser");
    add_common(tini, common);
    tini->add_option("--scenes", scenes_path, "training scene CSV")->required();
    tini->add_option("--denoiser-ckpt", denoiser_ckpt, "stage-1 checkpoint to freeze")->required();
    tini->add_option("--out", out_path, "output checkpoint path")->required();
    tini->add_option("--report", report_path, "per-epoch training report CSV");

    auto* pred = app.add_subcommand("predict", "sample K futures per scene");
    add_common(pred, common);
    pred->add_option("--scenes", scenes_path, "input scene CSV")->required();
    pred->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
    pred->add_option("--sampler", sampler_kind, "standard|leapfrog|iid")->default_val("leapfrog");
    pred->add_option("--tau", tau, "leapfrog step (default: train.tau)");
    pred->add_option("--k", k, "samples per scene (default: model.k)");
    pred->add_option("--workers", workers, "parallel scene workers");
    pred->add_option("--out", out_path, "output prediction CSV")->required();

    auto* eval = app.add_subcommand("eval", "run a sampler over a test set and report metrics");
    add_common(eval, common);
    eval->add_option("--scenes", scenes_path, "test scene CSV")->required();
    eval->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
    eval->add_option("--sampler", sampler_kind, "standard|leapfrog|iid")->default_val("leapfrog");
    eval->add_option("--tau", tau, "leapfrog step (default: train.tau)");
    eval->add_option("--k", k, "samples per scene (default: model.k)");
    eval->add_option("--workers", workers, "parallel scene workers");
    eval->add_option("--out", out_path, "output metric CSV")->required();

    auto* bench = app.add_subcommand(
        "bench", "sweep leapfrog tau values against the standard sampler and ablations");
    add_common(bench, common);
    bench->add_option("--scenes", scenes_path, "test scene CSV")->required();
    bench->add_option("--ckpt", ckpt_path, "stage-2 checkpoint")->required();
    bench->add_option("--workers", workers, "parallel scene workers");
    bench->add_option("--out", out_path, "output benchmark CSV")->required();

    auto* self = app.add_subcommand("selftest", "run the oracle/invariant suite");
    add_common(self, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (gen->parsed()) return run_gen_data(common, out_path);
        if (tden->parsed()) return run_train_denoiser(common, scenes_path, out_path, report_path);
        if (tini->parsed())
            return run_train_initializer(common, scenes_path, denoiser_ckpt, out_path, report_path);
        if (pred->parsed())
            return run_predict(common, scenes_path, ckpt_path, sampler_kind, tau, k, out_path,
                               workers);
        if (eval->parsed())
            return run_eval(common, scenes_path, ckpt_path, sampler_kind, tau, k, out_path, workers);
        if (bench->parsed()) return run_bench(common, scenes_path, ckpt_path, out_path, workers);
        if (self->parsed()) return led::run_selftest(std::cout, common.seed) ? 0 : 1;
    } catch (const led::NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const led::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const led::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
