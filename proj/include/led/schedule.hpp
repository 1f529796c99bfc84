#pragma once

#include <string>
#include <vector>

namespace led {

enum class ScheduleKind { Linear, Sigmoid, Quadratic };

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind k);

// Noise schedule for the forward chain. beta is 1-indexed by diffusion step
// (beta(1) .. beta(steps)); alpha_bar(0) == 1.
class DiffusionSchedule {
public:
    int steps() const { return static_cast<int>(beta_.size()); }
    ScheduleKind kind() const { return kind_; }

    double beta(int gamma) const { return beta_[index(gamma, 1)]; }
    double alpha(int gamma) const { return 1.0 - beta_[index(gamma, 1)]; }
    double alpha_bar(int gamma) const { return alpha_bar_[index(gamma, 0)]; }

    friend DiffusionSchedule make_schedule(ScheduleKind kind, double beta1, double betaT,
                                           int steps);

private:
    std::size_t index(int gamma, int lo) const;

    ScheduleKind kind_ = ScheduleKind::Linear;
    std::vector<double> beta_;       // beta_[i] = beta at step i+1
    std::vector<double> alpha_bar_;  // alpha_bar_[g] = prod_{i<=g} (1-beta_i), alpha_bar_[0]=1
};

// beta1/betaT are the exact endpoints for every kind (bit-exact; the
// interior is interpolated per kind). Requires 0 < beta1 <= betaT < 1 and
// steps >= 1; a single-step schedule is just {beta1}.
DiffusionSchedule make_schedule(ScheduleKind kind, double beta1, double betaT, int steps);

}  // namespace led
