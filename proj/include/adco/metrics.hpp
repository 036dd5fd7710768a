// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adco/sim.hpp"

namespace adco {

// Multiplicative deduction per infraction kind, keyed by name so protocol
// entries without a simulator counterpart (red lights) stay configurable.
// Kinds missing from the table deduct nothing.
struct PenaltyTable {
    std::map<std::string, double> coeff;

    static PenaltyTable defaults();
    double penalty(const std::string& kind) const;
};
void validate_penalties(const PenaltyTable& p);

// Expert comfort ranges for the six per-frame dynamic variables.
struct ComfortThresholds {
    std::array<double, 2> lon_acc = {-4.05, 2.40};    // m/s^2
    std::array<double, 2> lat_acc = {-4.89, 4.89};    // m/s^2
    std::array<double, 2> yaw_rate = {-0.95, 0.95};   // rad/s
    std::array<double, 2> yaw_acc = {-1.93, 1.93};    // rad/s^2
    std::array<double, 2> jerk_lon = {-4.13, 4.13};   // m/s^3
    std::array<double, 2> jerk_mag = {-8.37, 8.37};   // m/s^3
};
void validate_thresholds(const ComfortThresholds& t);

struct DeParams {
    int checkpoints = 20;
    double outlier_ratio = 10.0;  // speed ratios above this (1000%) are dropped
    double min_progress = 0.05;   // routes stalling earlier are excluded
};

struct DcParams {
    int segment_frames = 20;
    double blocked_speed = 0.1;
    double blocked_duration_s = 60.0;
};

// Safety: mean over road segments of completion times the product of the
// segment's infraction penalties, on a 0-100 scale.
double compute_ds(const TrajectoryLog& log, const PenaltyTable& penalties);

// Efficiency: ego speed against the neighbour mean at evenly spaced arc-length
// checkpoints, in percent. nullopt when the route is excluded (insufficient
// progress or no usable checkpoint sample).
std::optional<double> compute_de(const TrajectoryLog& log, const DeParams& params = {});

// Comfort: fraction of consecutive frame segments whose every frame keeps all
// six dynamics inside the thresholds; blocked stretches count as passing.
// nullopt when the log is shorter than one segment.
std::optional<double> compute_dc(const TrajectoryLog& log, const ComfortThresholds& thresholds,
                                 const DcParams& params = {});

// Min-max normalization over the evaluated population. Constant columns map
// to 0.5 everywhere.
std::vector<double> normalize(const std::vector<double>& values, bool higher_is_better);

// Objective indicator weights from contrast (column standard deviation) and
// decorrelation. Columns must arrive normalized. Zero-variance columns get
// weight zero; an all-degenerate matrix falls back to uniform weights.
std::array<double, 4> critic_weights(const std::vector<std::array<double, 4>>& indicators);

// Crash-gated composite route score; energy enters with a negative sign, so
// x_e must be normalized with higher raw energy mapping to larger x_e.
double route_score(double x_ds, double x_de, double x_dc, double x_e,
                   const std::array<double, 4>& w, bool crashed);

double eer_av(const std::vector<double>& q_scores, double scale = 100.0);

struct RouteMetrics {
    std::string route;
    double ds = 0.0;
    std::optional<double> de;
    std::optional<double> dc;
    double energy_per_frame_j = 0.0;
    bool crashed = false;
    double fps = 0.0;
};

}  // namespace adco
