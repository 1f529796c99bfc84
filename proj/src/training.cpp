#include "led/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "led/errors.hpp"

namespace led {

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

}  // namespace

void write_report(const TrainReport& report, const std::string& path,
                  const std::vector<std::string>& headers) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open report for writing: " + path);
    for (const auto& h : headers) out << "# " << h << "\n";
    out << "epoch,loss,grad_norm,wall_ms\n";
    char buf[40];
    for (std::size_t e = 0; e < report.epoch_loss.size(); ++e) {
        out << e + 1 << ",";
        std::snprintf(buf, sizeof buf, "%.17g", report.epoch_loss[e]);
        out << buf << ",";
        std::snprintf(buf, sizeof buf, "%.17g", report.epoch_grad_norm[e]);
        out << buf << ",";
        std::snprintf(buf, sizeof buf, "%.3f", report.epoch_wall_ms[e]);
        out << buf << "\n";
    }
}

int draw_stage1_gamma(Rng& rng, int steps) {
    return 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(steps)));
}

VarId stage1_forward_loss(Tape& tape, const TrajectoryScene& scene, const DiffusionSchedule& sched,
                          const ParameterStore& store, const ModelConfig& cfg, int gamma,
                          const Array& eps) {
    SceneInputs in = stage_scene(tape, scene, cfg);
    const Array y0_flat = normalized_future(scene, in, cfg);
    const DiffusedSample ds = diffuse(y0_flat, gamma, eps, sched);
    VarId context = context_encode(tape, store, cfg, in);
    VarId y_row = tape.input(ds.y.reshaped({1, static_cast<int>(ds.y.size())}));
    VarId eps_hat = estimate_noise(tape, store, cfg, y_row, context, gamma, sched.steps());
    return noise_estimation_loss_var(
        tape, reshape(tape, eps_hat, {static_cast<int>(eps.size())}), eps);
}

double stage1_step(const std::vector<const TrajectoryScene*>& batch, const DiffusionSchedule& sched,
                   ParameterStore& store, const ModelConfig& cfg, double lr, Rng& rng,
                   double* grad_norm_out) {
    if (batch.empty()) throw ContractError("stage1_step: empty batch");
    double total = 0.0;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (const TrajectoryScene* scene : batch) {
        if (!scene->has_future()) {
            throw DataError("stage1_step: scene " + std::to_string(scene->id) +
                            " has no ground-truth future");
        }
        const int gamma = draw_stage1_gamma(rng, sched.steps());
        Array eps({2 * scene->future.dim(0)});
        rng.fill_normal(eps);
        Tape tape;
        VarId loss = stage1_forward_loss(tape, *scene, sched, store, cfg, gamma, eps);
        total += tape.val(loss).scalar_value();
        tape.backward(scale(tape, loss, inv_b));
        store.accumulate_grads(tape);
    }
    if (grad_norm_out) *grad_norm_out = store.grad_norm();
    store.adam_step(lr);
    return total * inv_b;
}

double leapfrog_loss(const Array& y, const Array& predictions, double sigma, double w) {
    if (!(sigma > 0.0)) throw ContractError("leapfrog_loss: sigma must be positive");
    if (predictions.ndim() < 2) {
        throw ShapeError("leapfrog_loss: predictions must be [K x ...], got " +
                         predictions.shape_str());
    }
    const int k = predictions.dim(0);
    const std::size_t per = predictions.size() / static_cast<std::size_t>(k);
    if (per != y.size()) {
        throw ShapeError("leapfrog_loss: prediction shape " + predictions.shape_str() +
                         " does not match target " + y.shape_str());
    }
    double min_d = 0.0, sum_d = 0.0;
    for (int s = 0; s < k; ++s) {
        double acc = 0.0;
        for (std::size_t i = 0; i < per; ++i) {
            const double d = y[i] - predictions[static_cast<std::size_t>(s) * per + i];
            acc += d * d;
        }
        const double dist = std::sqrt(acc);
        sum_d += dist;
        if (s == 0 || dist < min_d) min_d = dist;
    }
    const double sigma2 = sigma * sigma;
    return w * min_d + sum_d / (sigma2 * k) + std::log(sigma2);
}

VarId leapfrog_loss_var(Tape& t, const Array& y_flat, VarId y_mat, VarId sigma, double w) {
    if (!(t.val(sigma).scalar_value() > 0.0)) {
        throw ContractError("leapfrog_loss: sigma must be positive");
    }
    const int k = t.val(y_mat).dim(0);
    std::vector<VarId> dists;
    dists.reserve(static_cast<std::size_t>(k));
    VarId target = t.input(y_flat);
    int argmin = 0;
    for (int s = 0; s < k; ++s) {
        dists.push_back(frob_norm(t, sub(t, row(t, y_mat, s), target)));
        if (t.val(dists.back()).scalar_value() < t.val(dists[static_cast<std::size_t>(argmin)]).scalar_value()) {
            argmin = s;
        }
    }
    VarId sum_d = sum(t, concat1d(t, dists));
    VarId sigma2 = mul(t, sigma, sigma);
    VarId uncertainty = add(t, div_elem(t, sum_d, scale(t, sigma2, static_cast<double>(k))),
                            log_op(t, sigma2));
    return add(t, scale(t, dists[static_cast<std::size_t>(argmin)], w), uncertainty);
}

VarId stage2_forward_loss(Tape& tape, const TrajectoryScene& scene, const DiffusionSchedule& sched,
                          const ParameterStore& store, const ModelConfig& cfg, int tau, double w,
                          Rng& rng, double* min_dist_out) {
    if (tau < 0 || tau > sched.steps()) {
        throw ConfigError("stage2: tau " + std::to_string(tau) + " out of range [0, " +
                          std::to_string(sched.steps()) + "]");
    }
    SceneInputs in = stage_scene(tape, scene, cfg);
    const Array y0_flat = normalized_future(scene, in, cfg);
    const int tf = scene.future.dim(0);
    LeapfrogVars lf = leapfrog_init(tape, store, cfg, in, tf);
    VarId y_mat = lf.y_tau;
    if (tau > 0) {
        VarId context = context_encode(tape, store, cfg, in);
        for (int dest = tau - 1; dest >= 0; --dest) {
            VarId eps_hat = estimate_noise(tape, store, cfg, y_mat, context, dest + 1, sched.steps());
            Array z({cfg.k, 2 * tf});
            if (dest > 0) rng.fill_normal(z);
            y_mat = denoise_step_var(tape, y_mat, eps_hat, z, dest, sched);
        }
    }
    if (min_dist_out) {
        const Array& ym = tape.val(y_mat);
        double best = 0.0;
        for (int s = 0; s < ym.dim(0); ++s) {
            double acc = 0.0;
            for (int j = 0; j < ym.dim(1); ++j) {
                const double d = ym.at(s, j) - y0_flat[static_cast<std::size_t>(j)];
                acc += d * d;
            }
            const double dist = std::sqrt(acc);
            if (s == 0 || dist < best) best = dist;
        }
        *min_dist_out = best;
    }
    return leapfrog_loss_var(tape, y0_flat, y_mat, lf.sigma, w);
}

Stage2Result stage2_step(const std::vector<const TrajectoryScene*>& batch,
                         const DiffusionSchedule& sched, ParameterStore& store,
                         const ModelConfig& cfg, int tau, double w, double lr, Rng& rng,
                         double* grad_norm_out) {
    if (batch.empty()) throw ContractError("stage2_step: empty batch");
    if (!store.all_frozen_with_prefix("denoiser.")) {
        throw ContractError("stage2_step: denoiser parameters must be frozen");
    }
    Stage2Result res;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (const TrajectoryScene* scene : batch) {
        if (!scene->has_future()) {
            throw DataError("stage2_step: scene " + std::to_string(scene->id) +
                            " has no ground-truth future");
        }
        Tape tape;
        double min_dist = 0.0;
        VarId loss = stage2_forward_loss(tape, *scene, sched, store, cfg, tau, w, rng, &min_dist);
        res.loss += tape.val(loss).scalar_value();
        res.min_dist += min_dist;
        tape.backward(scale(tape, loss, inv_b));
        store.accumulate_grads(tape);
    }
    if (grad_norm_out) *grad_norm_out = store.grad_norm();
    store.adam_step(lr);
    res.loss *= inv_b;
    res.min_dist *= inv_b;
    return res;
}

namespace {

std::vector<std::vector<const TrajectoryScene*>> make_batches(const SceneSet& train,
                                                              int batch_size, Rng& rng) {
    std::vector<std::size_t> order(train.scenes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(order[i - 1], order[j]);
    }
    std::vector<std::vector<const TrajectoryScene*>> batches;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        std::vector<const TrajectoryScene*> batch;
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
        for (std::size_t i = start; i < end; ++i) batch.push_back(&train.scenes[order[i]]);
        batches.push_back(std::move(batch));
    }
    return batches;
}

}  // namespace

TrainReport train_stage1(const SceneSet& train, const DiffusionSchedule& sched,
                         ParameterStore& store, const ModelConfig& cfg, const TrainConfig& tc,
                         const EpochHook& hook) {
    if (train.scenes.empty()) throw DataError("train_stage1: no scenes");
    TrainReport report;
    report.seed = tc.seed;
    Rng rng = Rng(tc.seed).fork(0x5741ULL);  // stage-1 stream
    for (int epoch = 0; epoch < tc.stage1_epochs; ++epoch) {
        const double lr = tc.stage1_lr * std::pow(0.5, epoch / tc.stage1_halve_every);
        const double t0 = now_ms();
        double loss_sum = 0.0, grad_sum = 0.0;
        auto batches = make_batches(train, tc.batch_size, rng);
        for (auto& batch : batches) {
            double gn = 0.0;
            loss_sum += stage1_step(batch, sched, store, cfg, lr, rng, &gn) *
                        static_cast<double>(batch.size());
            grad_sum += gn;
        }
        report.epoch_loss.push_back(loss_sum / static_cast<double>(train.scenes.size()));
        report.epoch_grad_norm.push_back(grad_sum / static_cast<double>(batches.size()));
        report.epoch_wall_ms.push_back(now_ms() - t0);
        if (hook) {
            hook(epoch + 1, report.epoch_loss.back(), report.epoch_grad_norm.back(),
                 report.epoch_wall_ms.back());
        }
    }
    return report;
}

TrainReport train_stage2(const SceneSet& train, const DiffusionSchedule& sched,
                         ParameterStore& store, const ModelConfig& cfg, const TrainConfig& tc,
                         const EpochHook& hook) {
    if (train.scenes.empty()) throw DataError("train_stage2: no scenes");
    TrainReport report;
    report.seed = tc.seed;
    Rng rng = Rng(tc.seed).fork(0x5742ULL);  // stage-2 stream
    for (int epoch = 0; epoch < tc.stage2_epochs; ++epoch) {
        const double lr =
            tc.stage2_lr * std::pow(tc.stage2_decay, epoch / tc.stage2_decay_every);
        const double t0 = now_ms();
        double loss_sum = 0.0, grad_sum = 0.0;
        auto batches = make_batches(train, tc.batch_size, rng);
        for (auto& batch : batches) {
            double gn = 0.0;
            loss_sum += stage2_step(batch, sched, store, cfg, tc.tau, tc.w, lr, rng, &gn).loss *
                        static_cast<double>(batch.size());
            grad_sum += gn;
        }
        report.epoch_loss.push_back(loss_sum / static_cast<double>(train.scenes.size()));
        report.epoch_grad_norm.push_back(grad_sum / static_cast<double>(batches.size()));
        report.epoch_wall_ms.push_back(now_ms() - t0);
        if (hook) {
            hook(epoch + 1, report.epoch_loss.back(), report.epoch_grad_norm.back(),
                 report.epoch_wall_ms.back());
        }
    }
    return report;
}

}  // namespace led
