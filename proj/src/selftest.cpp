#include "led/selftest.hpp"

#include <cmath>
#include <ostream>

#include "led/diffusion.hpp"
#include "led/finite_diff.hpp"
#include "led/metrics.hpp"
#include "led/model.hpp"
#include "led/rng.hpp"
#include "led/scene.hpp"
#include "led/training.hpp"

namespace led {

namespace {

// Compact widths so the finite-difference sweeps stay fast.
ModelConfig tiny_model() {
    ModelConfig m;
    m.embed_dim = 4;
    m.attn_ff_dim = 6;
    m.attn_heads = 2;
    m.attn_layers = 2;
    m.conv_kernel = 3;
    m.conv_out = 3;
    m.gru_hidden = 5;
    m.fusion_hidden = 6;
    m.sigma_embed_dim = 3;
    m.context_dim = 6;
    m.denoiser_hidden = 6;
    m.k = 2;
    m.traj_scale = 2.0;
    return m;
}

TrajectoryScene tiny_scene(std::uint64_t seed) {
    Rng rng(seed);
    TrajectoryScene s;
    s.id = 0;
    s.past = rng.normal_array({4, 2});
    s.future = rng.normal_array({3, 2});
    s.n_neighbors = 2;
    s.neighbors = rng.normal_array({2, 4, 2});
    return s;
}

double stage2_loss_value(const TrajectoryScene& scene, const DiffusionSchedule& sched,
                         const ParameterStore& store, const ModelConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    Tape tape;
    VarId loss = stage2_forward_loss(tape, scene, sched, store, cfg, /*tau=*/2, /*w=*/50.0, rng);
    return tape.val(loss).scalar_value();
}

}  // namespace

bool run_selftest(std::ostream& out, std::uint64_t seed) {
    bool ok = true;
    auto check = [&](const char* name, bool pass) {
        out << (pass ? "PASS " : "FAIL ") << name << "\n";
        ok = ok && pass;
    };

    // Schedule endpoints are exact for every kind.
    {
        bool pass = true;
        for (auto kind : {ScheduleKind::Linear, ScheduleKind::Sigmoid, ScheduleKind::Quadratic}) {
            const auto s = make_schedule(kind, 1e-4, 5e-2, 100);
            pass = pass && s.beta(1) == 1e-4 && s.beta(100) == 5e-2;
        }
        check("schedule-endpoints", pass);
    }

    // Denoise/posterior identity and the dual posterior forms.
    {
        const auto sched = make_schedule(ScheduleKind::Linear, 1e-4, 5e-2, 100);
        Rng rng(seed);
        bool pass = true;
        for (int trial = 0; trial < 200 && pass; ++trial) {
            const int gamma = 1 + static_cast<int>(rng.next_below(100));
            Array y0 = rng.normal_array({6, 2});
            Array eps = rng.normal_array({6, 2});
            const DiffusedSample ds = diffuse(y0, gamma, eps, sched);
            Array z({6, 2});
            const Array stepped = denoise_step(ds.y, eps, z, gamma - 1, sched);
            const Array mu = posterior_mean_oracle(y0, ds.y, gamma, sched);
            const Array mu_eps = posterior_mean_eps_form(ds.y, eps, gamma, sched);
            for (std::size_t i = 0; i < mu.size(); ++i) {
                if (std::abs(stepped[i] - mu[i]) > 1e-10) pass = false;
                if (std::abs(mu[i] - mu_eps[i]) > 1e-12) pass = false;
            }
        }
        check("denoise-posterior-identity", pass);
    }

    // Reverse-mode gradients vs central finite differences through the whole
    // stage-2 objective (leapfrog init + denoise chain + losses).
    {
        const auto sched = make_schedule(ScheduleKind::Linear, 1e-2, 5e-2, 4);
        const ModelConfig cfg = tiny_model();
        ParameterStore store;
        register_model_params(store, cfg, 4, 3, seed);
        store.freeze_prefix("denoiser.", true);
        const TrajectoryScene scene = tiny_scene(seed + 1);

        Rng rng(seed + 2);
        Tape tape;
        VarId loss = stage2_forward_loss(tape, scene, sched, store, cfg, 2, 50.0, rng);
        tape.backward(loss);
        store.accumulate_grads(tape);

        // Frozen denoiser must keep zero gradient; unfrozen initializer must
        // match finite differences on a couple of representative parameters.
        bool pass = true;
        for (const auto& name : store.names()) {
            if (name.rfind("denoiser.", 0) == 0) {
                for (std::size_t i = 0; i < store.grad(name).size(); ++i) {
                    if (store.grad(name)[i] != 0.0) pass = false;
                }
            }
        }
        ParameterStore probe = store;
        for (const char* name : {"init.mu.fusion.w3", "init.sigma.fusion.b3",
                                 "init.sample.temporal.gru.uz"}) {
            Array fd = finite_diff_grad(
                [&](const Array& x) {
                    probe.value(name) = x;
                    return stage2_loss_value(scene, sched, probe, cfg, seed + 2);
                },
                store.value(name));
            probe.value(name) = store.value(name);
            if (grad_rel_err(store.grad(name), fd) > 1e-4) pass = false;
        }
        check("stage2-gradient-vs-finite-diff", pass);
    }

    // Metric equivalence against brute-force enumeration.
    {
        Rng rng(seed + 3);
        bool pass = true;
        for (int trial = 0; trial < 500 && pass; ++trial) {
            const int k = 1 + static_cast<int>(rng.next_below(6));
            const int tf = 1 + static_cast<int>(rng.next_below(8));
            Array preds = rng.normal_array({k, tf, 2});
            Array y = rng.normal_array({tf, 2});
            const int horizon = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(tf)));
            double best_ade = 1e300, best_fde = 1e300;
            for (int s = 0; s < k; ++s) {
                double acc = 0.0;
                for (int t = 0; t < horizon; ++t) {
                    acc += std::hypot(preds.at(s, t, 0) - y.at(t, 0),
                                      preds.at(s, t, 1) - y.at(t, 1));
                }
                best_ade = std::min(best_ade, acc / horizon);
                best_fde = std::min(best_fde, std::hypot(preds.at(s, horizon - 1, 0) - y.at(horizon - 1, 0),
                                                         preds.at(s, horizon - 1, 1) - y.at(horizon - 1, 1)));
            }
            if (std::abs(best_ade - min_ade(preds, y, horizon)) > 1e-12) pass = false;
            if (std::abs(best_fde - min_fde(preds, y, horizon)) > 1e-12) pass = false;
        }
        check("metric-brute-force-equivalence", pass);
    }

    out << (ok ? "selftest: all checks passed" : "selftest: FAILURES") << "\n";
    return ok;
}

}  // namespace led
