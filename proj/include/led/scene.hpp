#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "led/array.hpp"

namespace led {

// One prediction instance: ego past, neighbor pasts, ego future. Neighbor
// futures are never stored; only the ego is predicted.
struct TrajectoryScene {
    int id = 0;
    Array past;       // [T_p x 2]
    Array neighbors;  // [L x T_p x 2]; L may be 0 (shape kept as {0}? see has_neighbors)
    Array future;     // [T_f x 2], empty when absent (pure inference)
    int n_neighbors = 0;

    // Synthetic-set metadata (absent for externally converted data).
    int mode_label = -1;
    Array mode_refs;  // [M x 2] noiseless per-mode reference endpoints

    bool has_future() const { return future.size() > 0; }
    bool has_mode_meta() const { return mode_label >= 0 && mode_refs.size() > 0; }
};

struct GenConfig {
    int n_scenes = 2500;
    int t_past = 8;
    int t_future = 12;
    int neighbors = 4;
    int modes = 2;
    std::vector<double> mode_weights;  // empty -> uniform; must sum to 1
    double turn_angle = 0.6;           // radians; mode headings spread over [-angle, +angle]
    double speed_min = 0.5;
    double speed_max = 1.5;
    double accel_noise = 0.05;
    double repulsion_gain = 0.1;
    double repulsion_cap = 0.5;
    std::uint64_t seed = 1;
};

struct SceneSet {
    std::vector<TrajectoryScene> scenes;
    int t_past = 0;
    int t_future = 0;
    int n_neighbors = 0;

    // Generator metadata; present for synthetic sets.
    bool has_gen_meta = false;
    std::uint64_t gen_seed = 0;
    int gen_modes = 0;
    std::vector<double> gen_weights;
};

// Seeded multimodal scene generation: constant-speed kinematics with
// Gaussian acceleration noise and capped inverse-distance repulsion; the ego
// samples one of M intent modes at the past/future boundary and its heading
// rotates by that mode's angle. Per-scene streams are keyed by scene index.
SceneSet generate_synthetic(const GenConfig& cfg);

// Canonical trajectory interchange CSV: header comments, then
// `scene_id,agent_id,role,t,x,y` rows with 17-significant-digit coordinates.
// Synthetic metadata rides in `# meta` / `# scene` comment lines and round
// trips value-exactly.
void write_scenes(const SceneSet& set, const std::string& path,
                  const std::vector<std::string>& headers);
SceneSet read_scenes(const std::string& path);

// Seeded shuffle, then partition. Scene ids are preserved, so the two parts
// are disjoint and exhaustive.
std::pair<SceneSet, SceneSet> split(const SceneSet& set, double train_frac, std::uint64_t seed);

}  // namespace led
