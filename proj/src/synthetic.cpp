#include <cmath>
#include <numbers>

#include "led/errors.hpp"
#include "led/rng.hpp"
#include "led/scene.hpp"

namespace led {

namespace {

struct AgentState {
    double px, py, vx, vy;
};

// Capped inverse-distance repulsion from all other agents.
void add_repulsion(const std::vector<AgentState>& agents, std::size_t self, double gain,
                   double cap, double& ax, double& ay) {
    if (gain == 0.0) return;
    for (std::size_t j = 0; j < agents.size(); ++j) {
        if (j == self) continue;
        const double dx = agents[self].px - agents[j].px;
        const double dy = agents[self].py - agents[j].py;
        const double r2 = dx * dx + dy * dy;
        if (r2 == 0.0) continue;
        const double r = std::sqrt(r2);
        double mag = gain / r;
        if (mag > cap) mag = cap;
        ax += mag * dx / r;
        ay += mag * dy / r;
    }
}

double mode_angle(const GenConfig& cfg, int mode) {
    if (cfg.modes == 1) return 0.0;
    const double u = 2.0 * static_cast<double>(mode) / static_cast<double>(cfg.modes - 1) - 1.0;
    return cfg.turn_angle * u;  // evenly spread over [-angle, +angle]
}

}  // namespace

SceneSet generate_synthetic(const GenConfig& cfg) {
    if (cfg.n_scenes < 1 || cfg.t_past < 1 || cfg.t_future < 1 || cfg.neighbors < 0 ||
        cfg.modes < 1) {
        throw ConfigError("generate_synthetic: counts must be positive (neighbors may be 0)");
    }
    std::vector<double> weights = cfg.mode_weights;
    if (weights.empty()) {
        weights.assign(static_cast<std::size_t>(cfg.modes), 1.0 / cfg.modes);
    }
    if (static_cast<int>(weights.size()) != cfg.modes) {
        throw ConfigError("generate_synthetic: need one weight per mode");
    }
    double wsum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw ConfigError("generate_synthetic: negative mode weight");
        wsum += w;
    }
    if (std::abs(wsum - 1.0) > 1e-9) {
        throw ConfigError("generate_synthetic: mode weights must sum to 1");
    }

    SceneSet set;
    set.t_past = cfg.t_past;
    set.t_future = cfg.t_future;
    set.n_neighbors = cfg.neighbors;
    set.has_gen_meta = true;
    set.gen_seed = cfg.seed;
    set.gen_modes = cfg.modes;
    set.gen_weights = weights;
    set.scenes.reserve(static_cast<std::size_t>(cfg.n_scenes));

    const Rng base(cfg.seed);
    const int n_agents = 1 + cfg.neighbors;
    const int total_t = cfg.t_past + cfg.t_future;
    constexpr double two_pi = 2.0 * std::numbers::pi;

    for (int sidx = 0; sidx < cfg.n_scenes; ++sidx) {
        Rng rng = base.fork(static_cast<std::uint64_t>(sidx));

        std::vector<AgentState> agents(static_cast<std::size_t>(n_agents));
        for (auto& a : agents) {
            a.px = 2.0 * rng.next_uniform() - 1.0;
            a.py = 2.0 * rng.next_uniform() - 1.0;
            const double speed = cfg.speed_min + (cfg.speed_max - cfg.speed_min) * rng.next_uniform();
            const double heading = two_pi * rng.next_uniform();
            a.vx = speed * std::cos(heading);
            a.vy = speed * std::sin(heading);
        }
        // Spread neighbors on a ring so repulsion has structure.
        for (int j = 1; j < n_agents; ++j) {
            const double r = 1.0 + 2.0 * rng.next_uniform();
            const double phi = two_pi * rng.next_uniform();
            agents[static_cast<std::size_t>(j)].px = agents[0].px + r * std::cos(phi);
            agents[static_cast<std::size_t>(j)].py = agents[0].py + r * std::sin(phi);
        }

        // Intent mode for the ego's future branch.
        int mode = cfg.modes - 1;
        {
            const double u = rng.next_uniform();
            double acc = 0.0;
            for (int m = 0; m < cfg.modes; ++m) {
                acc += weights[static_cast<std::size_t>(m)];
                if (u < acc) {
                    mode = m;
                    break;
                }
            }
        }

        std::vector<std::vector<double>> track(
            static_cast<std::size_t>(n_agents),
            std::vector<double>(static_cast<std::size_t>(total_t) * 2));

        TrajectoryScene scene;
        scene.id = sidx;
        scene.mode_label = mode;
        scene.mode_refs = Array({cfg.modes, 2});

        for (int t = 0; t < total_t; ++t) {
            if (t > 0) {
                for (std::size_t a = 0; a < agents.size(); ++a) {
                    double ax = cfg.accel_noise * rng.next_normal();
                    double ay = cfg.accel_noise * rng.next_normal();
                    add_repulsion(agents, a, cfg.repulsion_gain, cfg.repulsion_cap, ax, ay);
                    agents[a].vx += ax;
                    agents[a].vy += ay;
                }
                if (t == cfg.t_past) {
                    // Mode branch: rotate the ego's heading entering the future.
                    const double ang = mode_angle(cfg, mode);
                    const double c = std::cos(ang), sn = std::sin(ang);
                    const double vx = agents[0].vx, vy = agents[0].vy;
                    agents[0].vx = c * vx - sn * vy;
                    agents[0].vy = sn * vx + c * vy;
                    // Noiseless per-mode reference endpoints from this state.
                    for (int m = 0; m < cfg.modes; ++m) {
                        const double am = mode_angle(cfg, m);
                        const double cm = std::cos(am), sm = std::sin(am);
                        const double rvx = cm * vx - sm * vy;
                        const double rvy = sm * vx + cm * vy;
                        scene.mode_refs.at(m, 0) = agents[0].px + cfg.t_future * rvx;
                        scene.mode_refs.at(m, 1) = agents[0].py + cfg.t_future * rvy;
                    }
                }
                for (auto& a : agents) {
                    a.px += a.vx;
                    a.py += a.vy;
                }
            }
            for (int a = 0; a < n_agents; ++a) {
                track[static_cast<std::size_t>(a)][static_cast<std::size_t>(t) * 2] = agents[static_cast<std::size_t>(a)].px;
                track[static_cast<std::size_t>(a)][static_cast<std::size_t>(t) * 2 + 1] = agents[static_cast<std::size_t>(a)].py;
            }
        }

        scene.past = Array({cfg.t_past, 2});
        scene.future = Array({cfg.t_future, 2});
        for (int t = 0; t < cfg.t_past; ++t) {
            scene.past.at(t, 0) = track[0][static_cast<std::size_t>(t) * 2];
            scene.past.at(t, 1) = track[0][static_cast<std::size_t>(t) * 2 + 1];
        }
        for (int t = 0; t < cfg.t_future; ++t) {
            scene.future.at(t, 0) = track[0][static_cast<std::size_t>(cfg.t_past + t) * 2];
            scene.future.at(t, 1) = track[0][static_cast<std::size_t>(cfg.t_past + t) * 2 + 1];
        }
        scene.n_neighbors = cfg.neighbors;
        if (cfg.neighbors > 0) {
            scene.neighbors = Array({cfg.neighbors, cfg.t_past, 2});
            for (int j = 0; j < cfg.neighbors; ++j) {
                for (int t = 0; t < cfg.t_past; ++t) {
                    scene.neighbors.at(j, t, 0) = track[static_cast<std::size_t>(j + 1)][static_cast<std::size_t>(t) * 2];
                    scene.neighbors.at(j, t, 1) = track[static_cast<std::size_t>(j + 1)][static_cast<std::size_t>(t) * 2 + 1];
                }
            }
        }
        if (!scene.past.all_finite() || !scene.future.all_finite()) {
            throw NumericError("generate_synthetic: non-finite coordinates in scene " +
                               std::to_string(sidx));
        }
        set.scenes.push_back(std::move(scene));
    }
    return set;
}

}  // namespace led
