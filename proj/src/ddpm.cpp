#include "meram/ddpm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>

namespace meram {

namespace {

constexpr char ckpt_magic[8] = {'M', 'E', 'R', 'A', 'M', 'C', 'K', '1'};
constexpr std::uint32_t ckpt_version = 1;

void check_letter(char letter) {
    if (letter != 'U' && letter != 'C' && letter != 'L' && letter != 'A') {
        throw std::invalid_argument(std::string("unsupported letter '") + letter +
                                    "'; supported: U, C, L, A");
    }
}

struct Forward {
    std::vector<double> in;
    std::vector<double> a1;
    std::vector<double> a2;
    std::vector<double> out;
};

void run_forward(const Denoiser& d, const std::vector<double>& image, long t, Forward& f) {
    const long npix = d.out_dim();
    if (static_cast<long>(image.size()) != npix) {
        throw std::invalid_argument("denoiser: image size does not match model shape");
    }
    const long din = d.in_dim();
    const long h = d.hidden;
    f.in.resize(static_cast<std::size_t>(din));
    std::copy(image.begin(), image.end(), f.in.begin());
    const std::vector<double> emb = time_embedding(t, d.time_dim);
    std::copy(emb.begin(), emb.end(), f.in.begin() + npix);

    const auto spans = d.tensor_spans();
    const double* w1 = d.params.data() + spans[0].first;
    const double* b1 = d.params.data() + spans[1].first;
    const double* w2 = d.params.data() + spans[2].first;
    const double* b2 = d.params.data() + spans[3].first;
    const double* w3 = d.params.data() + spans[4].first;
    const double* b3 = d.params.data() + spans[5].first;

    f.a1.assign(static_cast<std::size_t>(h), 0.0);
    for (long i = 0; i < h; ++i) {
        double acc = b1[i];
        const double* row = w1 + i * din;
        for (long j = 0; j < din; ++j) acc += row[j] * f.in[static_cast<std::size_t>(j)];
        f.a1[static_cast<std::size_t>(i)] = std::tanh(acc);
    }
    f.a2.assign(static_cast<std::size_t>(h), 0.0);
    for (long i = 0; i < h; ++i) {
        double acc = b2[i];
        const double* row = w2 + i * h;
        for (long j = 0; j < h; ++j) acc += row[j] * f.a1[static_cast<std::size_t>(j)];
        f.a2[static_cast<std::size_t>(i)] = std::tanh(acc);
    }
    f.out.assign(static_cast<std::size_t>(npix), 0.0);
    for (long i = 0; i < npix; ++i) {
        double acc = b3[i];
        const double* row = w3 + i * h;
        for (long j = 0; j < h; ++j) acc += row[j] * f.a2[static_cast<std::size_t>(j)];
        f.out[static_cast<std::size_t>(i)] = acc;
    }
}

void check_same_shape(const ImageBatch& a, const ImageBatch& b, const char* what) {
    if (a.height != b.height || a.width != b.width || a.n() != b.n()) {
        throw std::invalid_argument(std::string(what) + ": batch shapes do not match");
    }
}

void check_t(long t, const Schedule& sched) {
    if (t < 1 || t > sched.T) throw std::invalid_argument("step index t outside [1, T]");
}

} // namespace

Schedule make_schedule(long T, double beta_1, double beta_T, ScheduleKind kind) {
    if (kind != ScheduleKind::Linear) throw std::invalid_argument("make_schedule: unknown kind");
    if (T < 2) throw std::invalid_argument("make_schedule: need T >= 2");
    if (!(beta_1 > 0.0) || !(beta_1 <= beta_T) || !(beta_T < 1.0)) {
        throw std::invalid_argument("make_schedule: need 0 < beta_1 <= beta_T < 1");
    }
    Schedule s;
    s.T = T;
    s.beta.reserve(static_cast<std::size_t>(T));
    s.alpha.reserve(static_cast<std::size_t>(T));
    s.alpha_bar.reserve(static_cast<std::size_t>(T));
    long double running = 1.0L;
    for (long t = 1; t <= T; ++t) {
        const double beta = beta_1 + (beta_T - beta_1) *
                                         static_cast<double>(t - 1) / static_cast<double>(T - 1);
        const double alpha = 1.0 - beta;
        running *= static_cast<long double>(alpha);
        s.beta.push_back(beta);
        s.alpha.push_back(alpha);
        s.alpha_bar.push_back(static_cast<double>(running));
    }
    return s;
}

std::vector<double> time_embedding(long t, long dim) {
    std::vector<double> emb(static_cast<std::size_t>(dim), 0.0);
    const long half = dim / 2;
    for (long i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
        emb[static_cast<std::size_t>(i)] = std::sin(static_cast<double>(t) * freq);
        emb[static_cast<std::size_t>(half + i)] = std::cos(static_cast<double>(t) * freq);
    }
    return emb;
}

long Denoiser::n_params() const {
    return hidden * in_dim() + hidden + hidden * hidden + hidden + out_dim() * hidden + out_dim();
}

std::vector<std::pair<std::size_t, std::size_t>> Denoiser::tensor_spans() const {
    const std::size_t din = static_cast<std::size_t>(in_dim());
    const std::size_t h = static_cast<std::size_t>(hidden);
    const std::size_t dout = static_cast<std::size_t>(out_dim());
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    std::size_t off = 0;
    for (const std::size_t len : {h * din, h, h * h, h, dout * h, dout}) {
        spans.emplace_back(off, len);
        off += len;
    }
    return spans;
}

Denoiser Denoiser::init(long height, long width, std::uint64_t seed, long hidden,
                        long time_dim) {
    Denoiser d;
    d.height = height;
    d.width = width;
    d.hidden = hidden;
    d.time_dim = time_dim;
    d.params.assign(static_cast<std::size_t>(d.n_params()), 0.0);
    Rng rng(seed);
    const auto spans = d.tensor_spans();
    const double s1 = 1.0 / std::sqrt(static_cast<double>(d.in_dim()));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (std::size_t i = 0; i < spans[0].second; ++i) {
        d.params[spans[0].first + i] = s1 * rng.normal();
    }
    for (std::size_t i = 0; i < spans[2].second; ++i) {
        d.params[spans[2].first + i] = s2 * rng.normal();
    }
    for (std::size_t i = 0; i < spans[4].second; ++i) {
        d.params[spans[4].first + i] = s2 * rng.normal();
    }
    return d;
}

std::vector<double> Denoiser::predict(const std::vector<double>& image, long t) const {
    Forward f;
    run_forward(*this, image, t, f);
    return std::move(f.out);
}

ImageBatch forward_sample(const ImageBatch& x0, long t, const Schedule& sched,
                          const ImageBatch& noise) {
    check_t(t, sched);
    check_same_shape(x0, noise, "forward_sample");
    const double abar = sched.alpha_bar[static_cast<std::size_t>(t - 1)];
    const double c0 = std::sqrt(abar);
    const double cn = std::sqrt(1.0 - abar);
    ImageBatch out = x0;
    for (long i = 0; i < out.n(); ++i) {
        auto& img = out.images[static_cast<std::size_t>(i)];
        const auto& eps = noise.images[static_cast<std::size_t>(i)];
        for (std::size_t j = 0; j < img.size(); ++j) img[j] = c0 * img[j] + cn * eps[j];
    }
    return out;
}

double loss(const Denoiser& d, const ImageBatch& x0, long t, const Schedule& sched,
            const ImageBatch& noise) {
    const ImageBatch xt = forward_sample(x0, t, sched, noise);
    Forward f;
    double acc = 0.0;
    for (long i = 0; i < xt.n(); ++i) {
        run_forward(d, xt.images[static_cast<std::size_t>(i)], t, f);
        const auto& target = noise.images[static_cast<std::size_t>(i)];
        for (std::size_t j = 0; j < f.out.size(); ++j) {
            const double r = f.out[j] - target[j];
            acc += r * r;
        }
    }
    return acc / (static_cast<double>(xt.n()) * static_cast<double>(d.out_dim()));
}

double loss_and_grad(const Denoiser& d, const ImageBatch& xt, long t,
                     const ImageBatch& target, std::vector<double>& grads) {
    check_same_shape(xt, target, "loss_and_grad");
    if (xt.height != d.height || xt.width != d.width) {
        throw std::invalid_argument("loss_and_grad: batch does not match model shape");
    }
    const long npix = d.out_dim();
    const long din = d.in_dim();
    const long h = d.hidden;
    grads.assign(d.params.size(), 0.0);
    const auto spans = d.tensor_spans();
    const double* w2 = d.params.data() + spans[2].first;
    const double* w3 = d.params.data() + spans[4].first;
    double* gw1 = grads.data() + spans[0].first;
    double* gb1 = grads.data() + spans[1].first;
    double* gw2 = grads.data() + spans[2].first;
    double* gb2 = grads.data() + spans[3].first;
    double* gw3 = grads.data() + spans[4].first;
    double* gb3 = grads.data() + spans[5].first;

    Forward f;
    std::vector<double> dout(static_cast<std::size_t>(npix));
    std::vector<double> dz2(static_cast<std::size_t>(h));
    std::vector<double> dz1(static_cast<std::size_t>(h));
    const double inv = 1.0 / (static_cast<double>(xt.n()) * static_cast<double>(npix));
    double acc = 0.0;
    for (long s = 0; s < xt.n(); ++s) {
        run_forward(d, xt.images[static_cast<std::size_t>(s)], t, f);
        const auto& tgt = target.images[static_cast<std::size_t>(s)];
        for (long i = 0; i < npix; ++i) {
            const double r = f.out[static_cast<std::size_t>(i)] - tgt[static_cast<std::size_t>(i)];
            acc += r * r;
            dout[static_cast<std::size_t>(i)] = 2.0 * r * inv;
        }
        // output layer
        for (long i = 0; i < npix; ++i) {
            const double g = dout[static_cast<std::size_t>(i)];
            double* row = gw3 + i * h;
            for (long j = 0; j < h; ++j) row[j] += g * f.a2[static_cast<std::size_t>(j)];
            gb3[i] += g;
        }
        // second hidden layer
        for (long j = 0; j < h; ++j) {
            double back = 0.0;
            for (long i = 0; i < npix; ++i) {
                back += w3[i * h + j] * dout[static_cast<std::size_t>(i)];
            }
            const double a = f.a2[static_cast<std::size_t>(j)];
            dz2[static_cast<std::size_t>(j)] = back * (1.0 - a * a);
        }
        for (long i = 0; i < h; ++i) {
            const double g = dz2[static_cast<std::size_t>(i)];
            double* row = gw2 + i * h;
            for (long j = 0; j < h; ++j) row[j] += g * f.a1[static_cast<std::size_t>(j)];
            gb2[i] += g;
        }
        // first hidden layer
        for (long j = 0; j < h; ++j) {
            double back = 0.0;
            for (long i = 0; i < h; ++i) {
                back += w2[i * h + j] * dz2[static_cast<std::size_t>(i)];
            }
            const double a = f.a1[static_cast<std::size_t>(j)];
            dz1[static_cast<std::size_t>(j)] = back * (1.0 - a * a);
        }
        for (long i = 0; i < h; ++i) {
            const double g = dz1[static_cast<std::size_t>(i)];
            double* row = gw1 + i * din;
            for (long j = 0; j < din; ++j) row[j] += g * f.in[static_cast<std::size_t>(j)];
            gb1[i] += g;
        }
    }
    return acc * inv;
}

void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps) {
    if (params.size() != grads.size()) throw std::invalid_argument("adam_step: size mismatch");
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: stale state");
    state.step += 1;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

TrainResult train(const ImageBatch& dataset, const Schedule& sched, NoiseSource& noise,
                  const TrainOptions& options) {
    if (dataset.n() == 0) throw std::invalid_argument("train: empty dataset");
    TrainResult result;
    result.model = Denoiser::init(dataset.height, dataset.width, options.init_seed);
    AdamState adam;
    std::vector<double> grads;
    const long n = dataset.n();
    const long npix = dataset.pixels();
    for (long epoch = 0; epoch < options.epochs; ++epoch) {
        Rng order_rng(options.shuffle_seed, static_cast<std::uint64_t>(epoch));
        std::vector<long> order(static_cast<std::size_t>(n));
        for (long i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
        for (long i = n - 1; i > 0; --i) {
            const long j = static_cast<long>(order_rng.uniform_index(
                static_cast<std::uint64_t>(i + 1)));
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        }
        double epoch_acc = 0.0;
        for (long base = 0; base < n; base += options.batch_size) {
            const long bn = std::min(options.batch_size, n - base);
            const long t = 1 + static_cast<long>(order_rng.uniform_index(
                               static_cast<std::uint64_t>(sched.T)));
            const double abar = sched.alpha_bar[static_cast<std::size_t>(t - 1)];
            const double c0 = std::sqrt(abar);
            const double cn = std::sqrt(1.0 - abar);
            ImageBatch xt, target;
            xt.height = target.height = dataset.height;
            xt.width = target.width = dataset.width;
            xt.images.resize(static_cast<std::size_t>(bn));
            target.images.resize(static_cast<std::size_t>(bn));
            for (long s = 0; s < bn; ++s) {
                const auto& x0 =
                    dataset.images[static_cast<std::size_t>(order[static_cast<std::size_t>(base + s)])];
                auto& eps = target.images[static_cast<std::size_t>(s)];
                auto& noised = xt.images[static_cast<std::size_t>(s)];
                eps.resize(static_cast<std::size_t>(npix));
                noised.resize(static_cast<std::size_t>(npix));
                for (long j = 0; j < npix; ++j) {
                    const double z = noise.next();
                    eps[static_cast<std::size_t>(j)] = z;
                    noised[static_cast<std::size_t>(j)] = c0 * x0[static_cast<std::size_t>(j)] + cn * z;
                }
            }
            const double batch_loss = loss_and_grad(result.model, xt, t, target, grads);
            adam_step(result.model.params, grads, adam, options.lr, options.adam_beta1,
                      options.adam_beta2, options.adam_eps);
            epoch_acc += batch_loss * static_cast<double>(bn);
        }
        result.epoch_loss.push_back(epoch_acc / static_cast<double>(n));
        for (const long snap : options.snapshot_epochs) {
            if (snap == epoch + 1) result.snapshots.emplace_back(snap, result.model);
        }
    }
    return result;
}

ImageBatch generate(const Denoiser& d, const Schedule& sched, NoiseSource& noise,
                    long n_images) {
    if (n_images < 1) throw std::invalid_argument("generate: need at least one image");
    const long npix = d.out_dim();
    ImageBatch out;
    out.height = d.height;
    out.width = d.width;
    out.images.resize(static_cast<std::size_t>(n_images));
    for (long img = 0; img < n_images; ++img) {
        std::vector<double> x(static_cast<std::size_t>(npix));
        for (auto& v : x) v = noise.next();
        for (long t = sched.T; t >= 1; --t) {
            const std::vector<double> eps_hat = d.predict(x, t);
            const double beta = sched.beta[static_cast<std::size_t>(t - 1)];
            const double abar = sched.alpha_bar[static_cast<std::size_t>(t - 1)];
            const double c_eps = beta / std::sqrt(1.0 - abar);
            const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha[static_cast<std::size_t>(t - 1)]);
            for (long j = 0; j < npix; ++j) {
                x[static_cast<std::size_t>(j)] =
                    inv_sqrt_alpha * (x[static_cast<std::size_t>(j)] -
                                      c_eps * eps_hat[static_cast<std::size_t>(j)]);
            }
            if (t > 1) {
                const double sb = std::sqrt(beta);
                for (long j = 0; j < npix; ++j) x[static_cast<std::size_t>(j)] += sb * noise.next();
            }
        }
        for (auto& v : x) v = std::clamp(v, -1.0, 1.0);
        out.images[static_cast<std::size_t>(img)] = std::move(x);
    }
    return out;
}

std::vector<double> letter_template(char letter, long size) {
    check_letter(letter);
    if (size < 8) throw std::invalid_argument("letter_template: size must be at least 8");
    const long margin = size / 8;
    const long stroke = std::max<long>(1, size / 8);
    const long lo = margin;
    const long hi = size - margin; // exclusive
    std::vector<double> img(static_cast<std::size_t>(size * size), -1.0);
    auto fill_rect = [&](long r0, long r1, long c0, long c1) {
        for (long r = r0; r < r1; ++r) {
            for (long c = c0; c < c1; ++c) {
                img[static_cast<std::size_t>(r * size + c)] = 1.0;
            }
        }
    };
    const bool left = letter == 'U' || letter == 'C' || letter == 'L' || letter == 'A';
    const bool right = letter == 'U' || letter == 'A';
    const bool top = letter == 'C' || letter == 'A';
    const bool bottom = letter == 'U' || letter == 'C' || letter == 'L';
    const bool middle = letter == 'A';
    if (left) fill_rect(lo, hi, lo, lo + stroke);
    if (right) fill_rect(lo, hi, hi - stroke, hi);
    if (top) fill_rect(lo, lo + stroke, lo, hi);
    if (bottom) fill_rect(hi - stroke, hi, lo, hi);
    if (middle) {
        const long mid = size / 2 - stroke / 2;
        fill_rect(mid, mid + stroke, lo, hi);
    }
    return img;
}

ImageBatch make_letter_dataset(char letter, long size, long n, long jitter,
                               double flip_prob, Rng& rng) {
    check_letter(letter);
    if (size < 8) throw std::invalid_argument("make_letter_dataset: size must be at least 8");
    if (n < 1) throw std::invalid_argument("make_letter_dataset: need at least one image");
    if (jitter < 0 || !(flip_prob >= 0.0 && flip_prob <= 1.0)) {
        throw std::invalid_argument("make_letter_dataset: bad jitter or flip probability");
    }
    const std::vector<double> canon = letter_template(letter, size);
    ImageBatch out;
    out.height = size;
    out.width = size;
    out.images.resize(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        long dx = 0, dy = 0;
        if (jitter > 0) {
            dx = static_cast<long>(rng.uniform_index(static_cast<std::uint64_t>(2 * jitter + 1))) - jitter;
            dy = static_cast<long>(rng.uniform_index(static_cast<std::uint64_t>(2 * jitter + 1))) - jitter;
        }
        std::vector<double> img(static_cast<std::size_t>(size * size), -1.0);
        for (long r = 0; r < size; ++r) {
            const long sr = r - dy;
            if (sr < 0 || sr >= size) continue;
            for (long c = 0; c < size; ++c) {
                const long sc = c - dx;
                if (sc < 0 || sc >= size) continue;
                img[static_cast<std::size_t>(r * size + c)] =
                    canon[static_cast<std::size_t>(sr * size + sc)];
            }
        }
        if (flip_prob > 0.0) {
            for (auto& v : img) {
                if (rng.uniform() < flip_prob) v = -v;
            }
        }
        out.images[static_cast<std::size_t>(i)] = std::move(img);
    }
    return out;
}

char nearest_template(const std::vector<double>& image, long size) {
    // Glyphs in generated or augmented images may sit a pixel or two off the
    // canonical position, so each template is compared over a small window of
    // translations and the best alignment counts. Pixels shifted in from
    // outside the frame take the background value.
    const long window = 2;
    const char letters[4] = {'U', 'C', 'L', 'A'};
    char best = 'U';
    double best_d = std::numeric_limits<double>::infinity();
    for (char l : letters) {
        const std::vector<double> tmpl = letter_template(l, size);
        for (long dy = -window; dy <= window; ++dy) {
            for (long dx = -window; dx <= window; ++dx) {
                double acc = 0.0;
                for (long r = 0; r < size; ++r) {
                    const long sr = r - dy;
                    for (long c = 0; c < size; ++c) {
                        const long sc = c - dx;
                        const double tv =
                            (sr >= 0 && sr < size && sc >= 0 && sc < size)
                                ? tmpl[static_cast<std::size_t>(sr * size + sc)]
                                : -1.0;
                        const double d =
                            image[static_cast<std::size_t>(r * size + c)] - tv;
                        acc += d * d;
                    }
                }
                if (acc < best_d) {
                    best_d = acc;
                    best = l;
                }
            }
        }
    }
    return best;
}

void save_checkpoint(const std::string& path, const Denoiser& d) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out.write(ckpt_magic, sizeof ckpt_magic);
    const std::uint32_t ver = ckpt_version;
    out.write(reinterpret_cast<const char*>(&ver), sizeof ver);
    const std::uint64_t dims[5] = {
        static_cast<std::uint64_t>(d.height), static_cast<std::uint64_t>(d.width),
        static_cast<std::uint64_t>(d.hidden), static_cast<std::uint64_t>(d.time_dim),
        static_cast<std::uint64_t>(d.params.size())};
    out.write(reinterpret_cast<const char*>(dims), sizeof dims);
    out.write(reinterpret_cast<const char*>(d.params.data()),
              static_cast<std::streamsize>(d.params.size() * sizeof(double)));
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Denoiser load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[8];
    std::uint32_t ver = 0;
    std::uint64_t dims[5] = {};
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char*>(&ver), sizeof ver);
    in.read(reinterpret_cast<char*>(dims), sizeof dims);
    if (!in || std::memcmp(magic, ckpt_magic, sizeof ckpt_magic) != 0 || ver != ckpt_version) {
        throw std::runtime_error("load_checkpoint: corrupt checkpoint header in " + path);
    }
    Denoiser d;
    d.height = static_cast<long>(dims[0]);
    d.width = static_cast<long>(dims[1]);
    d.hidden = static_cast<long>(dims[2]);
    d.time_dim = static_cast<long>(dims[3]);
    if (static_cast<long>(dims[4]) != d.n_params()) {
        throw std::runtime_error("load_checkpoint: parameter count does not match dims in " + path);
    }
    d.params.resize(dims[4]);
    in.read(reinterpret_cast<char*>(d.params.data()),
            static_cast<std::streamsize>(d.params.size() * sizeof(double)));
    if (!in) throw std::runtime_error("load_checkpoint: truncated checkpoint " + path);
    return d;
}

} // namespace meram
