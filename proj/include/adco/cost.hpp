// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "adco/graph.hpp"

namespace adco {

// Analytic stand-in for on-device measurement. Numbers are deliberately
// desk-scale and live in the run config; the defaults below describe a small
// edge accelerator where compute dominates per-node dispatch.
struct HardwareProfile {
    double flops_per_second_f32 = 2.0e8;
    double int8_speedup = 2.0;
    double launch_overhead_s = 5.0e-6;
    double bytes_per_second = 2.0e9;
    double joules_per_flop = 1.0e-9;
    double joules_per_byte = 2.0e-9;
    double idle_power_w = 2.0;
};
void validate_profile(const HardwareProfile& hw);

struct SpikeRule {
    enum class Trigger { ObstacleAhead, Probability };
    Trigger trigger = Trigger::ObstacleAhead;
    double probability = 0.0;       // Probability trigger only
    double added_latency_s = 0.150;
};
void validate_spike_rule(const SpikeRule& r);

// Per-frame inference latencies, with the frames where a conditional spike
// fired. Deterministic for a fixed seed.
struct LatencyTrace {
    std::vector<double> frame_latencies_s;
    std::set<int> spike_frames;
    std::uint64_t seed = 0;
};

std::int64_t node_flops(const Graph& g, const Node& n);
std::int64_t node_memory_bytes(const Graph& g, const Node& n);

// A node executes int8 when every input arrives through a Dequantize, i.e. it
// was wrapped by a quantization plan.
bool is_int8_node(const Graph& g, const GraphIndex& idx, const Node& n);

// Roofline-style per-node max(compute, memory) plus dispatch overhead.
// Tensors internal to fused nodes contribute no traffic.
double estimate_graph_latency(const Graph& g, const HardwareProfile& hw);

// Compute + traffic energy plus idle power over the frame's latency.
double estimate_frame_energy(const Graph& g, const HardwareProfile& hw);

LatencyTrace generate_latency_trace(const Graph& g, const HardwareProfile& hw, int n_frames,
                                    const std::vector<SpikeRule>& rules,
                                    const std::vector<bool>& trigger_signal, std::uint64_t seed);

// Energy of each trace frame: the graph's compute/traffic cost plus idle
// power integrated over that frame's latency.
std::vector<double> per_frame_energies(const Graph& g, const HardwareProfile& hw,
                                       const LatencyTrace& trace);

// Frames within the warm-up period are discarded; the remaining frames are
// cut into consecutive complete windows whose mean energies are averaged.
// Throws when not even one complete window remains.
double sliding_window_energy(const std::vector<double>& per_frame_energies_j, int window,
                             double warmup_s, double frame_period_s);

// ceil(warmup_s / frame_period_s), the number of frames the warm-up discards
int warmup_frame_count(double warmup_s, double frame_period_s);

}  // namespace adco
