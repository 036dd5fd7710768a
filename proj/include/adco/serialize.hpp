// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "adco/graph.hpp"
#include "adco/interp.hpp"

namespace adco {

// Model files are JSON documents with top-level keys `nodes`, `tensors`,
// `inputs`, `outputs`, `constants`. See docs/graph-format.md.
Graph parse_graph(const std::string& text);
std::string serialize_graph(const Graph& g);

Graph load_graph_file(const std::filesystem::path& path);
void save_graph_file(const Graph& g, const std::filesystem::path& path);

// Input bindings for range calibration. Each frame binds every graph input
// with a flat value array; shapes come from the graph's tensor table.
struct CalibrationSet {
    std::vector<TensorMap> frames;

    int count() const { return static_cast<int>(frames.size()); }
    void validate_against(const Graph& g) const;
};

CalibrationSet parse_calibration(const std::string& text, const Graph& g);
std::string serialize_calibration(const CalibrationSet& c);
CalibrationSet load_calibration_file(const std::filesystem::path& path, const Graph& g);
void save_calibration_file(const CalibrationSet& c, const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace adco
