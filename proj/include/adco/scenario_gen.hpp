// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <vector>

#include "adco/sim.hpp"

namespace adco {

Scenario scenario_from_json(const std::string& text);
std::string scenario_to_json(const Scenario& sc);
Scenario load_scenario_file(const std::filesystem::path& path);

// The bundled desk suite: 20 short two-segment routes (straight, cut-in,
// stopped-obstacle detour, merge and fog variants) with parameters jittered
// from the seed. Obstacle-ahead trigger windows are precomputed against a
// nominal ego schedule.
std::vector<Scenario> generate_desk_suite(std::uint64_t seed);

// scenarios/<name>.json plus a suite.json manifest
void write_suite(const std::filesystem::path& dir, const std::vector<Scenario>& scenarios,
                 std::uint64_t seed);
std::vector<Scenario> load_suite(const std::filesystem::path& suite_json);

// Per-decision obstacle-ahead booleans, indexed by nominal decision time k*dt.
std::vector<bool> trigger_signal_for(const Scenario& sc, double dt, int n_frames);

void write_trace_csv(const LatencyTrace& trace, const std::filesystem::path& path);
void write_log_csv(const TrajectoryLog& log, const std::filesystem::path& path);

}  // namespace adco
