// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "adco/graph.hpp"

namespace adco {

// One applied rewrite: `removed` lists the matched nodes taken out of the
// graph, `added` the nodes standing in for them. Entries with equal removed
// and added ids record in-place edits (folds, rewires).
struct Rewrite {
    std::string pattern;
    std::vector<std::string> removed;
    std::vector<std::string> added;

    bool operator==(const Rewrite&) const = default;
};

struct PassReport {
    std::string pass_name;
    int nodes_before = 0;
    int nodes_after = 0;
    std::vector<Rewrite> rewrites;

    // removed minus added over all rewrites; always equals
    // nodes_before - nodes_after
    int accounted_delta() const;
};

std::string pass_report_to_json(const PassReport& r);
std::string pass_reports_to_json(const std::vector<PassReport>& rs);

// Module removal request. Backbone, BevEncoder and Planner carry the core
// information pathway and may never be removed.
struct PruneSpec {
    std::set<ModuleTag> remove;
    bool rewire_to_planner = true;
};
void validate_prune_spec(const PruneSpec& spec);

// Each pass is a pure Graph -> Graph rewrite; the result is validated before
// returning and is interpreter-equivalent to the input (prune excepted).
std::pair<Graph, PassReport> fold_constants(const Graph& g);
std::pair<Graph, PassReport> eliminate_dead_nodes(const Graph& g);
std::pair<Graph, PassReport> fuse_basic(const Graph& g);
std::pair<Graph, PassReport> fuse_attention(const Graph& g);
std::pair<Graph, PassReport> prune_modules(const Graph& g, const PruneSpec& spec);

struct PassStep {
    std::string name;  // fold | dce | fuse_basic | fuse_attention | prune
    std::optional<PruneSpec> prune;
};

// The recommended staging for hardware-style optimization.
std::vector<PassStep> default_pipeline();

std::pair<Graph, std::vector<PassReport>> optimize_pipeline(const Graph& g,
                                                            const std::vector<PassStep>& steps);

}  // namespace adco
