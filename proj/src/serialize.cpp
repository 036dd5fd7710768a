// SPDX-License-Identifier: Apache-2.0
#include "adco/serialize.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace adco {

using nlohmann::json;

namespace {

json attr_to_json(const AttrValue& v) {
    if (auto* i = std::get_if<std::int64_t>(&v)) return *i;
    if (auto* d = std::get_if<double>(&v)) return *d;
    return std::get<std::vector<std::int64_t>>(v);
}

AttrValue attr_from_json(const std::string& node, const std::string& key, const json& j) {
    if (j.is_number_integer()) return j.get<std::int64_t>();
    if (j.is_number_float()) return j.get<double>();
    if (j.is_array()) {
        std::vector<std::int64_t> v;
        for (const auto& e : j) {
            if (!e.is_number_integer())
                fail_validation("node '" + node + "': attribute '" + key +
                                "' list must hold integers");
            v.push_back(e.get<std::int64_t>());
        }
        return v;
    }
    fail_validation("node '" + node + "': attribute '" + key + "' has unsupported type");
}

json constant_to_json(const DenseTensor& t) {
    json arr = json::array();
    if (t.dtype == DType::I8) {
        for (double v : t.data) arr.push_back(static_cast<std::int64_t>(v));
    } else {
        for (double v : t.data) arr.push_back(v);
    }
    return arr;
}

const json& require(const json& j, const char* key, const std::string& ctx) {
    auto it = j.find(key);
    if (it == j.end()) fail_validation(ctx + ": missing key '" + key + "'");
    return *it;
}

}  // namespace

std::string serialize_graph(const Graph& g) {
    json j;
    json tensors = json::object();
    for (const auto& [name, spec] : g.tensors)
        tensors[name] = {{"dtype", dtype_name(spec.dtype)}, {"shape", spec.shape}};
    j["tensors"] = std::move(tensors);
    j["inputs"] = g.graph_inputs;
    j["outputs"] = g.graph_outputs;

    json nodes = json::array();
    for (const auto& n : g.nodes) {
        json node = {{"id", n.id},
                     {"kind", node_kind_name(n.kind)},
                     {"tag", module_tag_name(n.tag)},
                     {"inputs", n.inputs},
                     {"outputs", n.outputs}};
        if (!n.attrs.empty()) {
            json attrs = json::object();
            for (const auto& [k, v] : n.attrs) attrs[k] = attr_to_json(v);
            node["attrs"] = std::move(attrs);
        }
        nodes.push_back(std::move(node));
    }
    j["nodes"] = std::move(nodes);

    json constants = json::object();
    for (const auto& [name, value] : g.constants) constants[name] = constant_to_json(value);
    j["constants"] = std::move(constants);

    return j.dump(1);
}

Graph parse_graph(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        fail_validation(std::string("graph document syntax error: ") + e.what());
    }
    if (!j.is_object()) fail_validation("graph document: top level must be an object");

    Graph g;
    for (const auto& [name, tj] : require(j, "tensors", "graph document").items()) {
        TensorSpec spec;
        spec.name = name;
        spec.dtype = dtype_from_name(require(tj, "dtype", "tensor '" + name + "'"));
        for (const auto& d : require(tj, "shape", "tensor '" + name + "'")) {
            if (!d.is_number_integer())
                fail_validation("tensor '" + name + "': shape entries must be integers");
            spec.shape.push_back(d.get<std::int64_t>());
        }
        g.tensors.emplace(name, std::move(spec));
    }
    for (const auto& e : require(j, "inputs", "graph document"))
        g.graph_inputs.push_back(e.get<std::string>());
    for (const auto& e : require(j, "outputs", "graph document"))
        g.graph_outputs.push_back(e.get<std::string>());

    for (const auto& nj : require(j, "nodes", "graph document")) {
        Node n;
        n.id = require(nj, "id", "node").get<std::string>();
        n.kind = node_kind_from_name(require(nj, "kind", "node '" + n.id + "'"));
        n.tag = module_tag_from_name(require(nj, "tag", "node '" + n.id + "'"));
        for (const auto& e : require(nj, "inputs", "node '" + n.id + "'"))
            n.inputs.push_back(e.get<std::string>());
        for (const auto& e : require(nj, "outputs", "node '" + n.id + "'"))
            n.outputs.push_back(e.get<std::string>());
        if (nj.contains("attrs"))
            for (const auto& [k, v] : nj.at("attrs").items())
                n.attrs.emplace(k, attr_from_json(n.id, k, v));
        g.nodes.push_back(std::move(n));
    }

    for (const auto& [name, cj] : require(j, "constants", "graph document").items()) {
        auto it = g.tensors.find(name);
        if (it == g.tensors.end())
            fail_validation("constant '" + name + "' has no tensor declaration");
        if (!cj.is_array()) fail_validation("constant '" + name + "': data must be an array");
        DenseTensor t;
        t.dtype = it->second.dtype;
        t.shape = it->second.shape;
        t.data.reserve(cj.size());
        for (const auto& v : cj) {
            if (!v.is_number()) fail_validation("constant '" + name + "': non-numeric entry");
            t.data.push_back(v.get<double>());
        }
        g.constants.emplace(name, std::move(t));
    }

    validate_graph(g);
    return g;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_runtime("cannot open '" + path.string() + "' for reading");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) fail_runtime("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) fail_runtime("failed writing '" + path.string() + "'");
}

Graph load_graph_file(const std::filesystem::path& path) {
    return parse_graph(read_text_file(path));
}

void save_graph_file(const Graph& g, const std::filesystem::path& path) {
    write_text_file(path, serialize_graph(g));
}

void CalibrationSet::validate_against(const Graph& g) const {
    for (std::size_t f = 0; f < frames.size(); ++f) {
        for (const auto& name : g.graph_inputs) {
            auto it = frames[f].find(name);
            if (it == frames[f].end())
                fail_validation("calibration frame " + std::to_string(f) +
                                " does not bind input '" + name + "'");
            if (it->second.shape != g.tensor_spec(name).shape)
                fail_validation("calibration frame " + std::to_string(f) + ": input '" + name +
                                "' has shape " + shape_str(it->second.shape) + ", expected " +
                                shape_str(g.tensor_spec(name).shape));
        }
    }
}

CalibrationSet parse_calibration(const std::string& text, const Graph& g) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        fail_validation(std::string("calibration file syntax error: ") + e.what());
    }
    CalibrationSet c;
    const auto& frames = require(j, "frames", "calibration file");
    for (const auto& fj : frames) {
        TensorMap frame;
        for (const auto& [name, arr] : fj.items()) {
            auto it = g.tensors.find(name);
            if (it == g.tensors.end())
                fail_validation("calibration binds unknown tensor '" + name + "'");
            std::vector<double> data;
            data.reserve(arr.size());
            for (const auto& v : arr) data.push_back(v.get<double>());
            frame.emplace(name, DenseTensor::from_flat(it->second.shape, std::move(data)));
        }
        c.frames.push_back(std::move(frame));
    }
    if (j.contains("count") && j.at("count").get<int>() != c.count())
        fail_validation("calibration file: count field disagrees with number of frames");
    c.validate_against(g);
    return c;
}

std::string serialize_calibration(const CalibrationSet& c) {
    json j;
    j["count"] = c.count();
    json frames = json::array();
    for (const auto& frame : c.frames) {
        json fj = json::object();
        for (const auto& [name, t] : frame) {
            json arr = json::array();
            for (double v : t.data) arr.push_back(v);
            fj[name] = std::move(arr);
        }
        frames.push_back(std::move(fj));
    }
    j["frames"] = std::move(frames);
    return j.dump();
}

CalibrationSet load_calibration_file(const std::filesystem::path& path, const Graph& g) {
    return parse_calibration(read_text_file(path), g);
}

void save_calibration_file(const CalibrationSet& c, const std::filesystem::path& path) {
    write_text_file(path, serialize_calibration(c));
}

}  // namespace adco
