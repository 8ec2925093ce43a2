#pragma once

#include <string>
#include <vector>

#include "meram/calibrate.hpp"
#include "meram/macrospin.hpp"

namespace meram {

// Time stepping knobs that live next to the device description in config files.
struct SimParams {
    double dt = 1e-13;
    double relax_time = 5e-9;
};

struct DeviceConfig {
    DeviceParams device;
    SimParams sim;
};

DeviceConfig load_device_config(const std::string& path);
void save_device_config(const std::string& path, const DeviceConfig& cfg);

// Calibration artifact: bit probabilities, the matched pulses and fit quality
// numbers, plus the target width that produced them.
void save_calibration(const std::string& path, const CalibResult& result, double sigma);
CalibResult load_calibration(const std::string& path, double* sigma_out = nullptr);

// Switching probability tables, one row per (voltage, width) cell.
void write_prob_csv(const std::string& path, const std::vector<ProbPoint>& rows);
std::vector<ProbPoint> read_prob_csv(const std::string& path);

void write_dist_csv(const std::string& path, const std::vector<double>& values,
                    const std::vector<double>& probs);
void write_samples_csv(const std::string& path, const std::vector<double>& values);
std::vector<double> read_samples_csv(const std::string& path);
void write_loss_csv(const std::string& path, const std::vector<double>& losses,
                    const std::string& source);

// 8-bit binary PGM; pixel values are mapped linearly between [-1, 1] and [0, 255].
void write_pgm(const std::string& path, const std::vector<double>& image, long height,
               long width);
std::vector<double> read_pgm(const std::string& path, long& height, long& width);

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

} // namespace meram
