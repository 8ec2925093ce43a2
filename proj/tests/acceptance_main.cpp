// Standalone acceptance gate. Each criterion prints diagnostic lines followed
// by exactly one [PASS]/[FAIL] verdict line; the exit status mirrors that
// verdict so ctest can track every criterion separately.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "meram/calibrate.hpp"
#include "meram/ddpm.hpp"
#include "meram/macrospin.hpp"
#include "meram/markov.hpp"
#include "meram/rng.hpp"
#include "meram/sampler.hpp"
#include "meram/stats.hpp"

using namespace meram;
namespace fs = std::filesystem;

namespace {

bool verdict(int criterion, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion,
                detail.c_str());
    return pass;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// ------------------------------------------------------------------ criterion 1
// Long pulse at the balance voltage: switching settles at a coin flip.

bool criterion_1() {
    const DeviceParams dev;
    PulseSpec pulse;
    pulse.voltage = dev.critical_voltage();
    pulse.width = 20e-9;
    const long n = 10000;
    const SwitchEstimate est = switching_probability(dev, pulse, Bit::P, n, 1e-12, 101, 4);
    const double band = 0.015; // 3 sigma of a fair binomial at this n
    const bool pass = std::abs(est.p - 0.5) <= band;
    return verdict(1, pass,
                   "20 ns pulse at " + fmt(pulse.voltage) + " V: p = " + fmt(est.p) +
                       " over " + std::to_string(n) + " trials (want 0.5 +/- " +
                       fmt(band) + ")");
}

// ------------------------------------------------------------------ criterion 2
// Below the balance voltage no pulse width reaches even odds.

bool criterion_2() {
    const DeviceParams dev;
    const double v = 0.875 * dev.critical_voltage();
    std::vector<double> widths;
    for (int i = 0; i < 30; ++i) widths.push_back(0.1e-9 + (3.0e-9 - 0.1e-9) * i / 29.0);
    const auto rows = sweep(dev, {v}, widths, 500, 1e-12, 202, 4);
    double worst = 0.0;
    double worst_w = 0.0;
    bool pass = true;
    for (const auto& r : rows) {
        const double upper = r.p_pa + r.ci_half_width;
        if (upper > worst) {
            worst = upper;
            worst_w = r.width;
        }
        if (upper >= 0.5) pass = false;
    }
    return verdict(2, pass,
                   "at " + fmt(v) + " V the largest upper 95% bound on p is " +
                       fmt(worst) + " (width " + fmt(worst_w * 1e9) +
                       " ns); every point must stay below 0.5");
}

// ------------------------------------------------------------------ criterion 3
// Above the balance voltage: a pulse-width resonance peaking past 0.8 before
// damping back toward 0.5, and a cold first crossing of the equator at
// pi/(gamma mu0 |h|).

bool criterion_3() {
    const DeviceParams dev;
    const double v = 1.125 * dev.critical_voltage();
    std::vector<double> widths;
    for (int i = 1; i <= 60; ++i) widths.push_back(0.05e-9 * i);
    const auto rows = sweep(dev, {v}, widths, 400, 1e-12, 303, 4);

    std::size_t imax = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].p_pa > rows[imax].p_pa) imax = i;
    }
    const double peak = rows[imax].p_pa;
    const double tail = rows.back().p_pa;
    const bool interior = imax + 1 < rows.size();
    const bool pass_peak = interior && peak > 0.8 && tail < peak - 0.1;
    std::printf("  resonance scan at %s V: max p = %s at %s ns, p(3 ns) = %s "
                "(need an interior peak above 0.8 that then decays)\n",
                fmt(v).c_str(), fmt(peak).c_str(), fmt(rows[imax].width * 1e9).c_str(),
                fmt(tail).c_str());

    // cold timing of the first equator crossing at the balance voltage
    DeviceParams cold = dev;
    cold.temperature = 0.0;
    const double h = norm(cold.h_ext);
    const double expected = M_PI / (cold.gamma * mu0 * h);
    const double dt = 1e-13;
    Rng rng(1);
    Vec3 m{0.0, 0.0, 1.0};
    double t_flip = -1.0;
    for (long i = 0; i < 10000; ++i) {
        step_heun(cold, m, cold.critical_voltage(), dt, rng);
        if (m.z < 0.0) {
            t_flip = static_cast<double>(i + 1) * dt;
            break;
        }
    }
    const bool pass_time = t_flip > 0.0 && std::abs(t_flip - expected) <= dt;
    std::printf("  cold equator crossing at %s ns vs stated %s ns, tolerance one "
                "step of %s ns\n",
                fmt(t_flip * 1e9).c_str(), fmt(expected * 1e9).c_str(),
                fmt(dt * 1e9).c_str());

    return verdict(3, pass_peak && pass_time,
                   "resonance peak " + fmt(peak) + " (need > 0.8 interior with decay) "
                   "and first crossing at " + fmt(t_flip * 1e9) + " ns (need " +
                       fmt(expected * 1e9) + " +/- " + fmt(dt * 1e9) + " ns)");
}

// ------------------------------------------------------------------ criterion 4
// The factored chain matches brute-force joint transition matrices.

double brute_entry(const UnitConfig& c, std::uint32_t to, std::uint32_t from) {
    double p = 1.0;
    for (int k = 0; k < c.n_bits(); ++k) {
        const bool fb = (from >> k) & 1U;
        const bool tb = (to >> k) & 1U;
        const auto& bt = c.bits[static_cast<std::size_t>(k)];
        if (!fb && !tb) p *= 1.0 - bt.p_pa;
        if (!fb && tb) p *= bt.p_pa;
        if (fb && !tb) p *= bt.p_ap;
        if (fb && tb) p *= 1.0 - bt.p_ap;
    }
    return p;
}

UnitConfig random_config(Rng& rng, int n) {
    UnitConfig c;
    for (int k = 0; k < n; ++k) {
        c.bits.push_back(BitTransition{0.02 + 0.96 * rng.uniform(),
                                       0.02 + 0.96 * rng.uniform()});
    }
    return c;
}

bool criterion_4() {
    Rng rng(404);
    double worst_entry = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 2 + rep % 3;
        const UnitConfig c = random_config(rng, n);
        const DenseMatrix m = kron_chain(c);
        const std::size_t dim = m.dim;
        for (std::size_t to = 0; to < dim; ++to) {
            for (std::size_t from = 0; from < dim; ++from) {
                const double d = std::abs(m.at(to, from) -
                                          brute_entry(c, static_cast<std::uint32_t>(to),
                                                      static_cast<std::uint32_t>(from)));
                worst_entry = std::max(worst_entry, d);
            }
        }
    }

    double worst_apply = 0.0;
    for (const int n : {5, 8, 10}) {
        const UnitConfig c = random_config(rng, n);
        const DenseMatrix m = kron_chain(c);
        DistVec dist;
        dist.p.resize(static_cast<std::size_t>(1) << n);
        double sum = 0.0;
        for (auto& x : dist.p) {
            x = rng.uniform();
            sum += x;
        }
        for (auto& x : dist.p) x /= sum;
        const DistVec fast = evolve(dist, c);
        for (std::size_t j = 0; j < dist.size(); ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < dist.size(); ++i) acc += m.at(j, i) * dist.p[i];
            worst_apply = std::max(worst_apply, std::abs(acc - fast.p[j]));
        }
    }
    const bool pass = worst_entry <= 1e-12 && worst_apply <= 1e-12;
    return verdict(4, pass,
                   "20 random units: worst matrix entry deviation " + fmt(worst_entry) +
                       ", worst factored-apply deviation " + fmt(worst_apply) +
                       " (both must be <= 1e-12)");
}

// ------------------------------------------------------------------ criterion 5
// Eight fair coins give the exact discrete triangle law, and a sampled chain
// reproduces it with the expected -1/2 step-to-step correlation.

bool criterion_5() {
    const UnitConfig c = UnitConfig::all_coins(8);
    const EpsDist law = epsilon_distribution(c);
    double worst = 0.0;
    for (long d = -255; d <= 255; ++d) {
        const double expect = (256.0 - std::abs(static_cast<double>(d))) / 65536.0;
        worst = std::max(worst, std::abs(law.prob_of_step(d) - expect));
    }

    StreamSpec spec;
    spec.mode = Mode::Sequential;
    spec.seed = 505;
    NoiseStream stream = open_stream(c, spec);
    const auto samples = stream.draw(1000000);
    std::vector<double> emp(law.prob.size(), 0.0);
    for (const double s : samples) {
        const long d = std::lround(s * 64.0);
        emp[static_cast<std::size_t>(d + law.half_span())] += 1e-6;
    }
    double tv = 0.0;
    for (std::size_t i = 0; i < emp.size(); ++i) tv += std::abs(emp[i] - law.prob[i]);
    tv *= 0.5;
    const auto r1 = lag_autocorr(samples, 1);

    const bool pass = worst <= 1e-12 && tv <= 0.01 && r1.has_value() &&
                      std::abs(*r1 + 0.5) <= 0.02;
    return verdict(5, pass,
                   "triangle-law max error " + fmt(worst) + " (<= 1e-12), chain TV " +
                       fmt(tv) + " (<= 0.01), lag-1 autocorrelation " +
                       fmt(r1.value_or(0.0)) + " (-0.5 +/- 0.02)");
}

// ------------------------------------------------------------------ criterion 6
// The fitted eight-bit unit approximates a unit Gaussian and its draws carry
// the right first two moments.

bool criterion_6() {
    const TargetDist target = discretize_gaussian(1.0, 8);
    FitOptions opts;
    opts.seed = 5;
    const CalibResult fit = fit_probabilities(target, 8, opts);
    const bool pass_fit = fit.achieved_tv <= 0.05 && fit.achieved_tv < fit.baseline_tv;

    StreamSpec spec;
    spec.mode = Mode::Independent;
    spec.seed = 606;
    NoiseStream stream = open_stream(fit.config, spec);
    const auto samples = stream.draw(40000);
    const Moments m = moments(samples);
    const bool pass_moments =
        std::abs(m.mean) <= 0.05 && m.stddev >= 0.9 && m.stddev <= 1.1;

    return verdict(6, pass_fit && pass_moments,
                   "fit TV " + fmt(fit.achieved_tv) + " (<= 0.05, all-coins reference " +
                       fmt(fit.baseline_tv) + "); 40000 draws: mean " + fmt(m.mean) +
                       " (|.| <= 0.05), std " + fmt(m.stddev) + " (in [0.9, 1.1])");
}

// ------------------------------------------------------------------ criterion 7
// Growing the sample is supposed to leave the per-dof chi-square flat or
// better in at least 8 of 10 seeded repetitions.

bool criterion_7() {
    const TargetDist target = discretize_gaussian(1.0, 8);
    FitOptions opts;
    opts.seed = 5;
    const CalibResult fit = fit_probabilities(target, 8, opts);

    // exact mismatch between the fitted law and the target drives the
    // statistic linearly in n; print that scale alongside the measurements
    const EpsDist fitted = epsilon_distribution(fit.config);
    double lambda = 0.0;
    for (std::size_t i = 0; i < fitted.prob.size(); ++i) {
        const double p = target.dist.prob[i];
        if (p > 1e-12) {
            const double d = fitted.prob[i] - p;
            lambda += d * d / p;
        }
    }
    std::printf("  per-sample noncentrality of the fitted law vs the target: %s\n",
                fmt(lambda).c_str());

    int ok = 0;
    for (int rep = 0; rep < 10; ++rep) {
        StreamSpec spec;
        spec.mode = Mode::Independent;
        spec.burn_in = 30;
        spec.seed = 700 + static_cast<std::uint64_t>(rep);
        NoiseStream small_stream = open_stream(fit.config, spec);
        const auto small = small_stream.draw(10000);
        spec.seed = 800 + static_cast<std::uint64_t>(rep);
        NoiseStream big_stream = open_stream(fit.config, spec);
        const auto big = big_stream.draw(40000);
        const GofReport g10 = chi2_gof(small, target.dist);
        const GofReport g40 = chi2_gof(big, target.dist);
        const double s10 = g10.statistic / static_cast<double>(g10.dof);
        const double s40 = g40.statistic / static_cast<double>(g40.dof);
        if (s40 <= s10) ++ok;
        std::printf("  rep %d: chi2/dof %s at n=10000 -> %s at n=40000%s\n", rep,
                    fmt(s10).c_str(), fmt(s40).c_str(), s40 <= s10 ? "" : " (grew)");
    }
    const bool pass = ok >= 8;
    return verdict(7, pass,
                   "chi2 per dof stayed flat in " + std::to_string(ok) +
                       "/10 repetitions (need >= 8); with a fixed model mismatch the "
                       "statistic scales like n times the printed noncentrality");
}

// ------------------------------------------------------------------ criterion 8
// Analytic denoiser gradients agree with central differences on every tensor.

bool criterion_8() {
    const Schedule sched = make_schedule(10, 1e-3, 0.1);
    Denoiser d = Denoiser::init(4, 4, 7, 16, 8);
    Rng rng(808);
    ImageBatch x0, noise;
    x0.height = noise.height = 4;
    x0.width = noise.width = 4;
    for (int i = 0; i < 3; ++i) {
        std::vector<double> a(16), b(16);
        for (auto& v : a) v = 0.7 * rng.normal();
        for (auto& v : b) v = rng.normal();
        x0.images.push_back(a);
        noise.images.push_back(b);
    }
    const long t = 6;
    const ImageBatch xt = forward_sample(x0, t, sched, noise);

    std::vector<double> grads, dummy;
    loss_and_grad(d, xt, t, noise, grads);
    const double h = 1e-5;
    double worst = 0.0;
    for (const auto& [off, len] : d.tensor_spans()) {
        for (const std::size_t pick : {std::size_t{0}, len / 3, len / 2, len - 1}) {
            const std::size_t idx = off + pick;
            const double saved = d.params[idx];
            d.params[idx] = saved + h;
            const double up = loss_and_grad(d, xt, t, noise, dummy);
            d.params[idx] = saved - h;
            const double down = loss_and_grad(d, xt, t, noise, dummy);
            d.params[idx] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double rel = std::abs(numeric - grads[idx]) /
                               std::max({std::abs(numeric), std::abs(grads[idx]), 1e-8});
            worst = std::max(worst, rel);
        }
    }
    const bool pass = worst <= 1e-4;
    return verdict(8, pass,
                   "worst relative gradient deviation " + fmt(worst) +
                       " across all six parameter tensors (must be <= 1e-4)");
}

// ------------------------------------------------------------------ criterion 9
// Letter-generation task end to end, with device-derived noise matched
// against ideal Gaussian noise.

bool criterion_9() {
    Rng data_rng(909);
    const ImageBatch dataset = make_letter_dataset('U', 16, 4096, 1, 0.01, data_rng);
    const Schedule sched = make_schedule(100, 1e-4, 0.02);
    TrainOptions opt;
    opt.epochs = 50;
    opt.batch_size = 16;
    opt.init_seed = 7;
    opt.shuffle_seed = 8;

    const TargetDist target = discretize_gaussian(1.0, 8);
    FitOptions fopts;
    fopts.seed = 5;
    const CalibResult fit = fit_probabilities(target, 8, fopts);
    StreamSpec spec;
    spec.mode = Mode::Independent;
    spec.burn_in = 10;
    spec.seed = 33;

    struct SourceRun {
        std::string name;
        double loss0 = 0.0, loss1 = 0.0;
        double accuracy = 0.0;
        double mmd2 = 0.0;
    };
    std::vector<SourceRun> runs;

    std::vector<std::vector<double>> reference(dataset.images.begin(),
                                               dataset.images.begin() + 50);

    for (const bool device_noise : {false, true}) {
        SourceRun sr;
        sr.name = device_noise ? "device" : "ideal";
        TrainResult tr;
        if (device_noise) {
            StreamSource src(open_stream(fit.config, spec));
            tr = train(dataset, sched, src, opt);
        } else {
            GaussianSource src(31);
            tr = train(dataset, sched, src, opt);
        }
        sr.loss0 = tr.epoch_loss.front();
        sr.loss1 = tr.epoch_loss.back();

        ImageBatch gen;
        if (device_noise) {
            StreamSpec gen_spec = spec;
            gen_spec.seed = 55;
            StreamSource src(open_stream(fit.config, gen_spec));
            gen = generate(tr.model, sched, src, 50);
        } else {
            GaussianSource src(77);
            gen = generate(tr.model, sched, src, 50);
        }
        long hits = 0;
        for (const auto& img : gen.images) {
            if (nearest_template(img, 16) == 'U') ++hits;
        }
        sr.accuracy = static_cast<double>(hits) / 50.0;
        sr.mmd2 = mmd2_rbf(gen.images, reference, 17).mmd2;
        std::printf("  %s noise: loss %s -> %s, letter accuracy %s, mmd2 %s\n",
                    sr.name.c_str(), fmt(sr.loss0).c_str(), fmt(sr.loss1).c_str(),
                    fmt(sr.accuracy).c_str(), fmt(sr.mmd2).c_str());
        runs.push_back(sr);
    }

    bool pass_loss = true, pass_acc = true;
    for (const auto& sr : runs) {
        if (!(sr.loss1 < 0.5 * sr.loss0)) pass_loss = false;
        if (!(sr.accuracy >= 0.8)) pass_acc = false;
    }
    const double m_ideal = runs[0].mmd2;
    const double m_device = runs[1].mmd2;
    const double rel = std::abs(m_device - m_ideal) / std::max(std::abs(m_ideal), 1e-4);
    const bool pass_mmd = rel <= 0.2;

    return verdict(9, pass_loss && pass_acc && pass_mmd,
                   "loss halved: " + std::string(pass_loss ? "yes" : "no") +
                       "; accuracies " + fmt(runs[0].accuracy) + "/" +
                       fmt(runs[1].accuracy) + " (>= 0.8 each); mmd2 " +
                       fmt(m_device) + " vs " + fmt(m_ideal) + ", relative gap " +
                       fmt(rel) + " (<= 0.2)");
}

// ----------------------------------------------------------------- criterion 10
// The command line pipeline is byte-reproducible, including across thread
// counts.

int run_cmd(const std::string& args) {
    const std::string cmd = std::string(MERAM_CLI_PATH) + " " + args + " > /dev/null";
    const int status = std::system(cmd.c_str());
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    if (code != 0) std::printf("  command failed (%d): %s\n", code, args.c_str());
    return code;
}

bool run_pipeline(const fs::path& out, int threads) {
    const std::string o = " --out " + out.string();
    const std::string cfg =
        std::string(MERAM_SOURCE_DIR) + "/configs/device_default.json";
    if (run_cmd("device-sweep --config " + cfg +
                " --voltages 2.4 --widths 0.4:2.0:2 --trials 400 --dt 1e-12 --seed 7"
                " --threads " + std::to_string(threads) + o) != 0) return false;
    if (run_cmd("calibrate --preset --seed 7" + o) != 0) return false;
    if (run_cmd("sample --n 500 --seed 9" + o) != 0) return false;
    const std::string tiny = " --letter U --size 8 --n-images 16 --epochs 2 --batch 8"
                             " --steps 5 --beta-lo 1e-3 --beta-hi 0.1 --jitter 0"
                             " --flip-prob 0 --seed 13" + o;
    if (run_cmd("train --source ideal" + tiny) != 0) return false;
    if (run_cmd("train --source meram" + tiny) != 0) return false;
    if (run_cmd("generate --source meram --n 3 --seed 15" + o) != 0) return false;
    if (run_cmd("evaluate --sources ideal,meram --epochs 1,2 --letter U --size 8"
                " --n-images 24 --n-gen 20 --steps 4 --batch 8 --jitter 0"
                " --flip-prob 0 --seed 17" + o) != 0) return false;
    return true;
}

bool criterion_10() {
    const fs::path root =
        fs::temp_directory_path() / ("meram_acceptance10_" + std::to_string(::getpid()));
    fs::remove_all(root);
    const fs::path a = root / "threads1";
    const fs::path b = root / "threads4";
    if (!run_pipeline(a, 1) || !run_pipeline(b, 4)) {
        return verdict(10, false, "pipeline stage exited nonzero; see lines above");
    }

    auto collect = [](const fs::path& base) {
        std::set<std::string> rel;
        for (const auto& e : fs::recursive_directory_iterator(base)) {
            if (e.is_regular_file()) {
                rel.insert(fs::relative(e.path(), base).string());
            }
        }
        return rel;
    };
    const auto fa = collect(a);
    const auto fb = collect(b);
    if (fa != fb) {
        return verdict(10, false, "run outputs disagree on the produced file set");
    }

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    long mismatched = 0;
    for (const auto& rel : fa) {
        if (slurp(a / rel) != slurp(b / rel)) {
            ++mismatched;
            std::printf("  differs: %s\n", rel.c_str());
        }
    }
    fs::remove_all(root);
    const bool pass = !fa.empty() && mismatched == 0;
    return verdict(10, pass,
                   std::to_string(fa.size()) +
                       " output files compared between a 1-thread and a 4-thread run "
                       "with identical seeds; " +
                       std::to_string(mismatched) + " differed");
}

} // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::fprintf(stderr, "usage: %s <criterion 1..10>\n", argv[0]);
        return 2;
    }
    const int k = std::atoi(argv[1]);
    bool pass = false;
    switch (k) {
    case 1: pass = criterion_1(); break;
    case 2: pass = criterion_2(); break;
    case 3: pass = criterion_3(); break;
    case 4: pass = criterion_4(); break;
    case 5: pass = criterion_5(); break;
    case 6: pass = criterion_6(); break;
    case 7: pass = criterion_7(); break;
    case 8: pass = criterion_8(); break;
    case 9: pass = criterion_9(); break;
    case 10: pass = criterion_10(); break;
    default:
        std::fprintf(stderr, "unknown criterion %s\n", argv[1]);
        return 2;
    }
    return pass ? 0 : 1;
}
