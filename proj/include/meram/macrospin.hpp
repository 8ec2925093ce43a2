#pragma once

#include <cstdint>
#include <vector>

#include "meram/rng.hpp"
#include "meram/vec3.hpp"

namespace meram {

constexpr double mu0 = 1.2566370614359172e-6;       // vacuum permeability, T·m/A
constexpr double k_boltzmann = 1.380649e-23;        // J/K

// Readout convention: the reference layer points along +z, so P (parallel,
// low resistance, bit 0) means m_z > 0 and AP (bit 1) means m_z <= 0.
enum class Bit : int { P = 0, AP = 1 };

struct DeviceParams {
    double m_sat = 1.4e5;          // saturation magnetization, A/m
    double k_eff0 = 62337.66233766234; // zero-bias effective PMA density, J/m^3
    double xi_vcma = 4.0e-14;      // VCMA coefficient, J/(V·m)
    double t_free = 1.1e-9;        // free-layer thickness, m
    double t_ox = 1.4e-9;          // oxide thickness, m
    double diameter = 1.0e-7;      // junction diameter, m
    double alpha = 0.05;           // Gilbert damping
    double gamma = 1.76e11;        // gyromagnetic ratio, rad/(s·T)
    double temperature = 300.0;    // K
    Vec3 h_ext{31035.2, 0.0, 0.0}; // external field, A/m (390 Oe along +x)
    double r_p = 1000.0;           // P-state resistance, ohm
    double r_ap = 2200.0;          // AP-state resistance, ohm

    // Gate voltage at which the VCMA term cancels the anisotropy entirely.
    double critical_voltage() const { return k_eff0 * t_ox * t_free / xi_vcma; }
    double volume() const;

    void validate() const; // throws std::invalid_argument on bad fields
};

struct PulseSpec {
    double voltage = 0.0;     // V, >= 0
    double width = 1.0e-9;    // s, > 0
    double relax_time = 5e-9; // zero-bias settle time before readout, s

    void validate() const;
};

struct SpinState {
    Vec3 m{0.0, 0.0, 1.0};
    Bit bit = Bit::P;
};

inline Bit read_bit(const Vec3& m) { return m.z > 0.0 ? Bit::P : Bit::AP; }

inline SpinState make_state(const Vec3& m_unit) {
    return SpinState{m_unit, read_bit(m_unit)};
}

double keff_of_voltage(const DeviceParams& p, double v);

// Deterministic part of the effective field, A/m. The thermal field is added
// by the integrator, not here.
Vec3 effective_field(const DeviceParams& p, const Vec3& m, double v);

// Anisotropy plus Zeeman energy density, J/m^3. Monotone non-increasing along
// zero-temperature trajectories; used by tests as a damping sanity check.
double energy_density(const DeviceParams& p, const Vec3& m, double v);

// Per-component standard deviation of the thermal field for one step, A/m.
double thermal_field_sigma(const DeviceParams& p, double dt);

// One Heun step of the damped precession with the thermal field held constant
// across predictor and corrector. dt must lie in (0, 1e-12].
void step_heun(const DeviceParams& p, Vec3& m, double v, double dt, Rng& rng);
SpinState step_heun(const DeviceParams& p, const SpinState& s, double v, double dt, Rng& rng);

// Integrates the pulse at its gate voltage, then relax_time at zero bias, and
// re-reads the bit from the final orientation.
SpinState simulate_pulse(const DeviceParams& p, const SpinState& init,
                         const PulseSpec& pulse, double dt, Rng& rng);

struct SwitchEstimate {
    double p = 0.0;             // fraction of trials that ended in the other state
    double ci_half_width = 0.0; // 95% Wilson half-interval
    long n_trials = 0;
};

// Monte Carlo switching probability from the given initial bit. Trial i uses
// an independent substream derived from (seed, i), so the estimate does not
// depend on thread count or execution order.
SwitchEstimate switching_probability(const DeviceParams& p, const PulseSpec& pulse,
                                     Bit init_bit, long n_trials, double dt,
                                     std::uint64_t seed, int threads = 1);

struct ProbPoint {
    double voltage = 0.0;
    double width = 0.0;
    double p_pa = 0.0;          // P -> AP
    double p_ap = 0.0;          // AP -> P
    long n_trials = 0;          // per direction
    double ci_half_width = 0.0; // max of the two Wilson half-intervals
};

// Full cross product of voltages and widths, rows in voltage-major order.
// Both transition directions are measured at every grid point.
std::vector<ProbPoint> sweep(const DeviceParams& p, const std::vector<double>& voltages,
                             const std::vector<double>& widths, long n_trials, double dt,
                             std::uint64_t seed, int threads = 1);

struct LookupTable {
    double voltage = 0.0;
    std::vector<ProbPoint> rows; // sorted by width

    // Row whose width matches within 1e-15 s; throws if absent.
    const ProbPoint& row_at(double width) const;
    bool has_width(double width) const;
};

// Single-voltage table for calibration use. Requires an ascending non-empty
// width grid and rejects the result if any confidence interval is wider than
// 0.05, since the inversion downstream cannot use such rows.
LookupTable build_lookup(const DeviceParams& p, double voltage,
                         const std::vector<double>& widths, long n_trials, double dt,
                         std::uint64_t seed, int threads = 1);

double wilson_half_width(long successes, long n);

} // namespace meram
