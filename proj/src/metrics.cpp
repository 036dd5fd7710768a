// SPDX-License-Identifier: Apache-2.0
#include "adco/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace adco {

PenaltyTable PenaltyTable::defaults() {
    PenaltyTable p;
    p.coeff = {
        {"collision_pedestrian", 0.50},
        {"collision_vehicle", 0.60},
        {"collision_static", 0.65},
        {"red_light", 0.70},
        {"off_route", 0.70},
    };
    return p;
}

double PenaltyTable::penalty(const std::string& kind) const {
    auto it = coeff.find(kind);
    return it == coeff.end() ? 1.0 : it->second;
}

void validate_penalties(const PenaltyTable& p) {
    for (const auto& [kind, c] : p.coeff)
        if (!(c > 0.0 && c <= 1.0))
            fail_validation("penalty '" + kind + "' must lie in (0, 1]");
}

void validate_thresholds(const ComfortThresholds& t) {
    for (const auto& pair : {t.lon_acc, t.lat_acc, t.yaw_rate, t.yaw_acc, t.jerk_lon, t.jerk_mag})
        if (!(pair[0] < pair[1]))
            fail_validation("comfort thresholds: every lower bound must be below its upper");
}

namespace {

int segment_of(const TrajectoryLog& log, double progress) {
    const int n = static_cast<int>(log.segment_starts_m.size());
    for (int i = n - 1; i >= 0; --i)
        if (progress >= log.segment_starts_m[i]) return i;
    return 0;
}

}  // namespace

double compute_ds(const TrajectoryLog& log, const PenaltyTable& penalties) {
    const std::size_t n = log.segment_starts_m.size();
    if (n == 0 || log.rc.size() != n) fail_validation("compute_ds: log has no segments");

    std::vector<double> product(n, 1.0);
    for (const auto& inf : log.infractions) {
        const double progress = log.frames.empty()
                                    ? 0.0
                                    : log.frames[std::min<std::size_t>(inf.frame,
                                                                       log.frames.size() - 1)]
                                          .progress_m;
        product[segment_of(log, progress)] *= penalties.penalty(infraction_kind_name(inf.kind));
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += log.rc[i] * product[i];
    return 100.0 * sum / static_cast<double>(n);
}

std::optional<double> compute_de(const TrajectoryLog& log, const DeParams& params) {
    if (log.frames.empty()) return std::nullopt;
    const double length = log.route_length_m;
    const double final_progress = log.frames.back().progress_m;
    if (final_progress < params.min_progress * length) return std::nullopt;

    std::vector<double> ratios;
    for (int j = 0; j < params.checkpoints; ++j) {
        const double target =
            static_cast<double>(j + 1) * length / static_cast<double>(params.checkpoints);
        // first frame at or past the checkpoint
        const FrameRecord* hit = nullptr;
        for (const auto& f : log.frames)
            if (f.progress_m >= target) {
                hit = &f;
                break;
            }
        if (!hit) break;  // later checkpoints are further still
        if (hit->neighbor_count == 0 || hit->neighbor_mean_speed <= 1e-9) continue;
        const double ratio = hit->state.v / hit->neighbor_mean_speed;
        if (ratio > params.outlier_ratio) continue;
        ratios.push_back(ratio);
    }
    if (ratios.empty()) return std::nullopt;
    double sum = 0.0;
    for (double r : ratios) sum += r;
    return 100.0 * sum / static_cast<double>(ratios.size());
}

std::optional<double> compute_dc(const TrajectoryLog& log, const ComfortThresholds& th,
                                 const DcParams& params) {
    const int n = static_cast<int>(log.frames.size());
    if (n < params.segment_frames) return std::nullopt;

    const auto blocked = detect_blocked(log, params.blocked_speed, params.blocked_duration_s);
    auto exempt = [&](int frame) {
        for (const auto& [a, b] : blocked)
            if (frame >= a && frame <= b) return true;
        return false;
    };
    auto within = [](double v, const std::array<double, 2>& range) {
        return v >= range[0] && v <= range[1];
    };
    auto frame_ok = [&](const FrameRecord& f) {
        return within(f.a_lon, th.lon_acc) && within(f.a_lat, th.lat_acc) &&
               within(f.yaw_rate, th.yaw_rate) && within(f.yaw_acc, th.yaw_acc) &&
               within(f.jerk_lon, th.jerk_lon) && within(f.jerk_mag, th.jerk_mag);
    };

    const int n_seg = n / params.segment_frames;  // trailing remainder dropped
    int smooth = 0;
    for (int s = 0; s < n_seg; ++s) {
        bool ok = true;
        for (int i = 0; i < params.segment_frames && ok; ++i) {
            const int frame = s * params.segment_frames + i;
            if (!exempt(frame) && !frame_ok(log.frames[frame])) ok = false;
        }
        if (ok) ++smooth;
    }
    return static_cast<double>(smooth) / static_cast<double>(n_seg);
}

std::vector<double> normalize(const std::vector<double>& values, bool higher_is_better) {
    if (values.empty()) fail_validation("normalize: empty column");
    const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
    const double mn = *mn_it, mx = *mx_it;
    std::vector<double> out(values.size());
    if (mx == mn) {
        std::fill(out.begin(), out.end(), 0.5);
        return out;
    }
    for (std::size_t i = 0; i < values.size(); ++i)
        out[i] = higher_is_better ? (values[i] - mn) / (mx - mn) : (mx - values[i]) / (mx - mn);
    return out;
}

std::array<double, 4> critic_weights(const std::vector<std::array<double, 4>>& indicators) {
    const std::size_t n = indicators.size();
    if (n < 2) fail_validation("critic_weights: need at least two routes");

    std::array<double, 4> mean{}, sigma{};
    for (int j = 0; j < 4; ++j) {
        for (const auto& row : indicators) mean[j] += row[j];
        mean[j] /= static_cast<double>(n);
        double var = 0.0;
        for (const auto& row : indicators) var += (row[j] - mean[j]) * (row[j] - mean[j]);
        sigma[j] = std::sqrt(var / static_cast<double>(n));  // population form
    }

    auto corr = [&](int i, int j) {
        if (i == j) return 1.0;
        if (sigma[i] == 0.0 || sigma[j] == 0.0) return 0.0;
        double cov = 0.0;
        for (const auto& row : indicators) cov += (row[i] - mean[i]) * (row[j] - mean[j]);
        cov /= static_cast<double>(n);
        return cov / (sigma[i] * sigma[j]);
    };

    std::array<double, 4> c{};
    double total = 0.0;
    for (int i = 0; i < 4; ++i) {
        if (sigma[i] == 0.0) {
            c[i] = 0.0;
            continue;
        }
        double info = 0.0;
        for (int j = 0; j < 4; ++j) info += 1.0 - std::abs(corr(i, j));
        c[i] = sigma[i] * info;
        total += c[i];
    }
    std::array<double, 4> w{};
    if (total <= 0.0) {
        w.fill(0.25);  // every column degenerate
    } else {
        for (int i = 0; i < 4; ++i) w[i] = c[i] / total;
    }
    return w;
}

double route_score(double x_ds, double x_de, double x_dc, double x_e,
                   const std::array<double, 4>& w, bool crashed) {
    const double gate = crashed ? 0.0 : 1.0;
    return w[0] * x_ds + gate * (w[1] * x_de + w[2] * x_dc - w[3] * x_e);
}

double eer_av(const std::vector<double>& q_scores, double scale) {
    if (q_scores.empty()) fail_validation("eer_av: empty score list");
    double sum = 0.0;
    for (double q : q_scores) sum += q;
    return scale * sum / static_cast<double>(q_scores.size());
}

}  // namespace adco
