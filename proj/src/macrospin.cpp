#include "meram/macrospin.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "meram/parallel.hpp"

namespace meram {

namespace {

constexpr double z95 = 1.959963984540054;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t x = salt;
    std::uint64_t mixed = seed ^ Rng::splitmix64(x);
    return Rng::splitmix64(mixed);
}

// Damped precession right-hand side with the field in A/m. The prefactor
// gp_mu0 is gamma/(1+alpha^2) * mu0 so both torque terms share it.
inline Vec3 llg_rhs(double gp_mu0, double alpha, const Vec3& m, const Vec3& h) {
    const Vec3 mxh = cross(m, h);
    const Vec3 mxmxh = cross(m, mxh);
    return -gp_mu0 * (mxh + alpha * mxmxh);
}

// Loop-hoisted integrator state for a fixed (params, dt).
struct Stepper {
    const DeviceParams& p;
    double dt;
    double gp_mu0;
    double sigma;
    double aniso_scale; // 2/(mu0*m_sat), multiplies keff*m_z for the field

    Stepper(const DeviceParams& params, double step)
        : p(params),
          dt(step),
          gp_mu0(params.gamma / (1.0 + params.alpha * params.alpha) * mu0),
          sigma(thermal_field_sigma(params, step)),
          aniso_scale(2.0 / (mu0 * params.m_sat)) {}

    void step(Vec3& m, double keff, Rng& rng) const {
        Vec3 h_th{0.0, 0.0, 0.0};
        if (sigma > 0.0) {
            h_th = {sigma * rng.normal(), sigma * rng.normal(), sigma * rng.normal()};
        }
        const double hk = aniso_scale * keff;
        const Vec3 h1{p.h_ext.x + h_th.x, p.h_ext.y + h_th.y,
                      p.h_ext.z + h_th.z + hk * m.z};
        const Vec3 k1 = llg_rhs(gp_mu0, p.alpha, m, h1);
        const Vec3 mp = m + dt * k1;
        const Vec3 h2{p.h_ext.x + h_th.x, p.h_ext.y + h_th.y,
                      p.h_ext.z + h_th.z + hk * mp.z};
        const Vec3 k2 = llg_rhs(gp_mu0, p.alpha, mp, h2);
        m = normalized(m + (0.5 * dt) * (k1 + k2));
    }
};

void check_dt(double dt) {
    if (!(dt > 0.0) || dt > 1.0e-12) {
        throw std::invalid_argument("step_heun: dt must lie in (0, 1e-12] s, got " +
                                    std::to_string(dt));
    }
}

long steps_for(double duration, double dt) {
    return std::llround(duration / dt);
}

} // namespace

double DeviceParams::volume() const {
    const double r = diameter / 2.0;
    return std::numbers::pi * r * r * t_free;
}

void DeviceParams::validate() const {
    if (!(m_sat > 0.0)) throw std::invalid_argument("device: m_sat must be positive");
    if (!(t_free > 0.0)) throw std::invalid_argument("device: t_free must be positive");
    if (!(t_ox > 0.0)) throw std::invalid_argument("device: t_ox must be positive");
    if (!(diameter > 0.0)) throw std::invalid_argument("device: diameter must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("device: alpha must lie in (0, 1)");
    if (!(temperature >= 0.0)) throw std::invalid_argument("device: temperature must be non-negative");
    if (!(xi_vcma > 0.0)) throw std::invalid_argument("device: xi_vcma must be positive");
    if (!(r_ap > r_p)) throw std::invalid_argument("device: r_ap must exceed r_p");
    if (!(r_p > 0.0)) throw std::invalid_argument("device: r_p must be positive");
    const double vc = critical_voltage();
    if (!std::isfinite(vc) || !(vc > 0.0)) {
        throw std::invalid_argument("device: derived critical voltage is not positive and finite");
    }
}

void PulseSpec::validate() const {
    if (!(width > 0.0)) throw std::invalid_argument("pulse: width must be positive");
    if (!(relax_time >= 0.0)) throw std::invalid_argument("pulse: relax_time must be non-negative");
    if (!(voltage >= 0.0)) throw std::invalid_argument("pulse: voltage must be non-negative");
}

double keff_of_voltage(const DeviceParams& p, double v) {
    return p.k_eff0 - p.xi_vcma * v / (p.t_ox * p.t_free);
}

Vec3 effective_field(const DeviceParams& p, const Vec3& m, double v) {
    const double hk = 2.0 * keff_of_voltage(p, v) / (mu0 * p.m_sat);
    return {p.h_ext.x, p.h_ext.y, p.h_ext.z + hk * m.z};
}

double energy_density(const DeviceParams& p, const Vec3& m, double v) {
    return keff_of_voltage(p, v) * (1.0 - m.z * m.z) - mu0 * p.m_sat * dot(p.h_ext, m);
}

double thermal_field_sigma(const DeviceParams& p, double dt) {
    if (p.temperature == 0.0) return 0.0;
    const double num = 2.0 * p.alpha * k_boltzmann * p.temperature;
    const double den = mu0 * mu0 * p.gamma * p.m_sat * p.volume() * dt;
    return std::sqrt(num / den);
}

void step_heun(const DeviceParams& p, Vec3& m, double v, double dt, Rng& rng) {
    check_dt(dt);
    Stepper stepper(p, dt);
    stepper.step(m, keff_of_voltage(p, v), rng);
}

SpinState step_heun(const DeviceParams& p, const SpinState& s, double v, double dt, Rng& rng) {
    Vec3 m = s.m;
    step_heun(p, m, v, dt, rng);
    return make_state(m);
}

SpinState simulate_pulse(const DeviceParams& p, const SpinState& init,
                         const PulseSpec& pulse, double dt, Rng& rng) {
    check_dt(dt);
    pulse.validate();
    Stepper stepper(p, dt);
    Vec3 m = init.m;
    const double keff_on = keff_of_voltage(p, pulse.voltage);
    const double keff_off = p.k_eff0;
    const long n_pulse = steps_for(pulse.width, dt);
    const long n_relax = steps_for(pulse.relax_time, dt);
    for (long i = 0; i < n_pulse; ++i) stepper.step(m, keff_on, rng);
    for (long i = 0; i < n_relax; ++i) stepper.step(m, keff_off, rng);
    return make_state(m);
}

double wilson_half_width(long successes, long n) {
    const double nn = static_cast<double>(n);
    const double phat = static_cast<double>(successes) / nn;
    const double z2 = z95 * z95;
    const double denom = 1.0 + z2 / nn;
    return z95 * std::sqrt(phat * (1.0 - phat) / nn + z2 / (4.0 * nn * nn)) / denom;
}

SwitchEstimate switching_probability(const DeviceParams& p, const PulseSpec& pulse,
                                     Bit init_bit, long n_trials, double dt,
                                     std::uint64_t seed, int threads) {
    if (n_trials < 100) {
        throw std::invalid_argument("switching_probability: need at least 100 trials");
    }
    p.validate();
    pulse.validate();
    check_dt(dt);
    const Vec3 m0{0.0, 0.0, init_bit == Bit::P ? 1.0 : -1.0};
    std::vector<unsigned char> flipped(static_cast<std::size_t>(n_trials), 0);
    const std::uint64_t dir = init_bit == Bit::P ? 0 : 1;
    parallel_for(n_trials, threads, [&](long trial) {
        Rng rng(seed, 2 * static_cast<std::uint64_t>(trial) + dir);
        const SpinState out = simulate_pulse(p, SpinState{m0, init_bit}, pulse, dt, rng);
        flipped[static_cast<std::size_t>(trial)] = out.bit != init_bit ? 1 : 0;
    });
    long flips = 0;
    for (unsigned char f : flipped) flips += f;
    SwitchEstimate est;
    est.n_trials = n_trials;
    est.p = static_cast<double>(flips) / static_cast<double>(n_trials);
    est.ci_half_width = wilson_half_width(flips, n_trials);
    return est;
}

std::vector<ProbPoint> sweep(const DeviceParams& p, const std::vector<double>& voltages,
                             const std::vector<double>& widths, long n_trials, double dt,
                             std::uint64_t seed, int threads) {
    if (voltages.empty() || widths.empty()) {
        throw std::invalid_argument("sweep: voltage and width grids must be non-empty");
    }
    if (n_trials < 1) throw std::invalid_argument("sweep: n_trials must be positive");
    p.validate();
    check_dt(dt);

    // One job per (cell, direction, trial) so the table is reproducible for
    // any thread count. Outcomes land in index-addressed storage and are
    // reduced per cell afterwards.
    const long n_cells = static_cast<long>(voltages.size() * widths.size());
    const long jobs = n_cells * 2 * n_trials;
    std::vector<unsigned char> flipped(static_cast<std::size_t>(jobs), 0);
    parallel_for(jobs, threads, [&](long job) {
        const long cell = job / (2 * n_trials);
        const long rem = job % (2 * n_trials);
        const long dir = rem / n_trials;
        const long trial = rem % n_trials;
        const std::size_t iv = static_cast<std::size_t>(cell) / widths.size();
        const std::size_t iw = static_cast<std::size_t>(cell) % widths.size();
        PulseSpec pulse;
        pulse.voltage = voltages[iv];
        pulse.width = widths[iw];
        const Bit init = dir == 0 ? Bit::P : Bit::AP;
        const Vec3 m0{0.0, 0.0, dir == 0 ? 1.0 : -1.0};
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(cell)),
                2 * static_cast<std::uint64_t>(trial) + static_cast<std::uint64_t>(dir));
        const SpinState out = simulate_pulse(p, SpinState{m0, init}, pulse, dt, rng);
        flipped[static_cast<std::size_t>(job)] = out.bit != init ? 1 : 0;
    });

    std::vector<ProbPoint> table;
    table.reserve(static_cast<std::size_t>(n_cells));
    for (long cell = 0; cell < n_cells; ++cell) {
        const std::size_t iv = static_cast<std::size_t>(cell) / widths.size();
        const std::size_t iw = static_cast<std::size_t>(cell) % widths.size();
        long flips[2] = {0, 0};
        for (long dir = 0; dir < 2; ++dir) {
            const long base = cell * 2 * n_trials + dir * n_trials;
            for (long t = 0; t < n_trials; ++t) {
                flips[dir] += flipped[static_cast<std::size_t>(base + t)];
            }
        }
        ProbPoint pt;
        pt.voltage = voltages[iv];
        pt.width = widths[iw];
        pt.n_trials = n_trials;
        pt.p_pa = static_cast<double>(flips[0]) / static_cast<double>(n_trials);
        pt.p_ap = static_cast<double>(flips[1]) / static_cast<double>(n_trials);
        pt.ci_half_width = std::max(wilson_half_width(flips[0], n_trials),
                                    wilson_half_width(flips[1], n_trials));
        table.push_back(pt);
    }
    return table;
}

const ProbPoint& LookupTable::row_at(double width) const {
    for (const auto& row : rows) {
        if (std::abs(row.width - width) <= 1e-15) return row;
    }
    throw std::runtime_error("lookup: no row for width " + std::to_string(width) + " s");
}

bool LookupTable::has_width(double width) const {
    for (const auto& row : rows) {
        if (std::abs(row.width - width) <= 1e-15) return true;
    }
    return false;
}

LookupTable build_lookup(const DeviceParams& p, double voltage,
                         const std::vector<double>& widths, long n_trials, double dt,
                         std::uint64_t seed, int threads) {
    if (widths.empty()) throw std::invalid_argument("build_lookup: width grid is empty");
    if (!std::is_sorted(widths.begin(), widths.end())) {
        throw std::invalid_argument("build_lookup: widths must be sorted ascending");
    }
    LookupTable table;
    table.voltage = voltage;
    table.rows = sweep(p, {voltage}, widths, n_trials, dt, seed, threads);
    for (const auto& row : table.rows) {
        if (row.ci_half_width > 0.05) {
            throw std::runtime_error(
                "build_lookup: confidence interval " + std::to_string(row.ci_half_width) +
                " at width " + std::to_string(row.width) +
                " s exceeds 0.05; increase n_trials");
        }
    }
    return table;
}

} // namespace meram
