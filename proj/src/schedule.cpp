#include "led/schedule.hpp"

#include <cmath>

#include "led/errors.hpp"

namespace led {

ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "linear") return ScheduleKind::Linear;
    if (s == "sigmoid") return ScheduleKind::Sigmoid;
    if (s == "quadratic") return ScheduleKind::Quadratic;
    throw ConfigError("unknown schedule kind: '" + s + "' (expected linear|sigmoid|quadratic)");
}

std::string to_string(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::Linear: return "linear";
        case ScheduleKind::Sigmoid: return "sigmoid";
        case ScheduleKind::Quadratic: return "quadratic";
    }
    return "?";
}

std::size_t DiffusionSchedule::index(int gamma, int lo) const {
    const int hi = lo == 0 ? steps() : steps();
    if (gamma < lo || gamma > hi) {
        throw ConfigError("diffusion step index " + std::to_string(gamma) + " out of range [" +
                          std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return static_cast<std::size_t>(gamma - lo);
}

DiffusionSchedule make_schedule(ScheduleKind kind, double beta1, double betaT, int steps) {
    if (!(beta1 > 0.0) || !(beta1 <= betaT) || !(betaT < 1.0)) {
        throw ConfigError("schedule endpoints must satisfy 0 < beta1 <= betaT < 1");
    }
    if (steps < 1) throw ConfigError("schedule needs at least one step");

    DiffusionSchedule s;
    s.kind_ = kind;
    s.beta_.resize(static_cast<std::size_t>(steps));
    if (steps == 1) {
        s.beta_[0] = beta1;
    } else {
        const double n = static_cast<double>(steps - 1);
        for (int g = 1; g <= steps; ++g) {
            const double u = static_cast<double>(g - 1) / n;  // 0 .. 1
            double b = 0.0;
            switch (kind) {
                case ScheduleKind::Linear:
                    b = beta1 + u * (betaT - beta1);
                    break;
                case ScheduleKind::Quadratic: {
                    const double r = std::sqrt(beta1) + u * (std::sqrt(betaT) - std::sqrt(beta1));
                    b = r * r;
                    break;
                }
                case ScheduleKind::Sigmoid: {
                    // Logistic ramp rescaled so the endpoints land exactly.
                    const double sharp = 6.0;
                    auto logistic = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
                    const double lo = logistic(-sharp), hi = logistic(sharp);
                    const double w = (logistic(sharp * (2.0 * u - 1.0)) - lo) / (hi - lo);
                    b = beta1 + w * (betaT - beta1);
                    break;
                }
            }
            s.beta_[static_cast<std::size_t>(g - 1)] = b;
        }
        // Endpoint exactness for every kind.
        s.beta_.front() = beta1;
        s.beta_.back() = betaT;
    }

    s.alpha_bar_.resize(static_cast<std::size_t>(steps) + 1);
    s.alpha_bar_[0] = 1.0;
    for (int g = 1; g <= steps; ++g) {
        s.alpha_bar_[static_cast<std::size_t>(g)] =
            s.alpha_bar_[static_cast<std::size_t>(g - 1)] * (1.0 - s.beta_[static_cast<std::size_t>(g - 1)]);
    }
    return s;
}

}  // namespace led
