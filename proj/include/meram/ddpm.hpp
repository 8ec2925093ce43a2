#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meram/noise_source.hpp"
#include "meram/rng.hpp"

namespace meram {

enum class ScheduleKind { Linear };

struct Schedule {
    long T = 0;
    std::vector<double> beta;      // beta[t-1] holds beta_t
    std::vector<double> alpha;     // 1 - beta_t
    std::vector<double> alpha_bar; // running product of alpha
};

Schedule make_schedule(long T, double beta_1, double beta_T,
                       ScheduleKind kind = ScheduleKind::Linear);

struct ImageBatch {
    long height = 0;
    long width = 0;
    std::vector<std::vector<double>> images; // flattened row-major pixels

    long n() const { return static_cast<long>(images.size()); }
    long pixels() const { return height * width; }
};

// Fully connected noise predictor: flattened image concatenated with a
// 32-dim sinusoidal embedding of the step index, two tanh hidden layers of
// width 256, linear output back to image shape. All parameters live in one
// flat vector so the optimizer and checkpoints can treat them uniformly.
struct Denoiser {
    long height = 0;
    long width = 0;
    long hidden = 256;
    long time_dim = 32;
    std::vector<double> params;

    long in_dim() const { return height * width + time_dim; }
    long out_dim() const { return height * width; }
    long n_params() const;
    // Offsets of the six tensors inside params, in order w1 b1 w2 b2 w3 b3.
    std::vector<std::pair<std::size_t, std::size_t>> tensor_spans() const;

    static Denoiser init(long height, long width, std::uint64_t seed,
                         long hidden = 256, long time_dim = 32);

    std::vector<double> predict(const std::vector<double>& image, long t) const;
};

std::vector<double> time_embedding(long t, long dim);

// Closed-form jump to step t: sqrt(abar_t) x0 + sqrt(1 - abar_t) noise.
ImageBatch forward_sample(const ImageBatch& x0, long t, const Schedule& sched,
                          const ImageBatch& noise);

// Mean squared error between the denoiser output on the noised batch and the
// noise that produced it. All samples share the step index t.
double loss(const Denoiser& d, const ImageBatch& x0, long t, const Schedule& sched,
            const ImageBatch& noise);

// Exact reverse-mode gradient of the same MSE, averaged over batch and
// pixels. Returns the loss value and fills grads (same layout as params).
double loss_and_grad(const Denoiser& d, const ImageBatch& xt, long t,
                     const ImageBatch& target, std::vector<double>& grads);

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;
};

void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& state, double lr = 1e-3, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

struct TrainOptions {
    long epochs = 50;
    long batch_size = 32;
    double lr = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t init_seed = 1;
    std::uint64_t shuffle_seed = 2;
    // Extra copies of the model taken as these epoch counts complete, so one
    // run can be compared at several budgets.
    std::vector<long> snapshot_epochs;
};

struct TrainResult {
    Denoiser model;
    std::vector<double> epoch_loss;
    std::vector<std::pair<long, Denoiser>> snapshots;
};

// Per batch: one step index uniform on [1, T], per-sample per-pixel noise
// from the source, one Adam update on the noise-prediction MSE.
TrainResult train(const ImageBatch& dataset, const Schedule& sched,
                  NoiseSource& noise, const TrainOptions& options);

// Ancestral reverse walk from source-drawn x_T; the t = 1 step adds no noise
// and the result is clamped to [-1, 1].
ImageBatch generate(const Denoiser& d, const Schedule& sched, NoiseSource& noise,
                    long n_images);

// Procedural block glyphs. Pixels are +1 on the stroke, -1 elsewhere, with
// uniform integer translation up to jitter pixels and independent sign flips
// at flip_prob.
ImageBatch make_letter_dataset(char letter, long size, long n, long jitter,
                               double flip_prob, Rng& rng);

std::vector<double> letter_template(char letter, long size);

// Index into "UCLA" of the nearest template by squared distance.
char nearest_template(const std::vector<double>& image, long size);

void save_checkpoint(const std::string& path, const Denoiser& d);
Denoiser load_checkpoint(const std::string& path);

} // namespace meram
