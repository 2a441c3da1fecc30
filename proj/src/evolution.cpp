#include "rnas/evolution.hpp"

#include <algorithm>
#include <optional>
#include <sstream>

#include "rnas/hash.hpp"

namespace rnas {

namespace {

template <typename T>
std::vector<T> others(const std::vector<T>& values, const T& current) {
    std::vector<T> out;
    for (const T& v : values) {
        if (v != current) out.push_back(v);
    }
    return out;
}

struct Target {
    int vertex;
    NodeAttr attr;
};

std::vector<Target> mutable_targets(const Architecture& a, const SearchSpaceDef& s) {
    std::vector<Target> out;
    const BlockGraph& b = a.block;
    for (int v = 1; v < b.n - 1; ++v) {
        const NodeSpec& node = b.node(v);
        if (!others(s.layer_types, node.layer_type).empty()) out.push_back({v, NodeAttr::LayerType});
        if (!others(s.params_for(node.layer_type), node.layer_param).empty()) out.push_back({v, NodeAttr::LayerParam});
        if (!others(s.output_widths, node.output_width).empty()) out.push_back({v, NodeAttr::OutputWidth});
        if (!others(s.input_modes, node.input_mode).empty()) out.push_back({v, NodeAttr::InputMode});
        if (!others(s.activations, node.activation).empty()) out.push_back({v, NodeAttr::Activation});
    }
    if (!others(s.input_modes, b.output_node.input_mode).empty()) out.push_back({b.n - 1, NodeAttr::InputMode});
    if (!others(s.activations, b.output_node.activation).empty()) out.push_back({b.n - 1, NodeAttr::Activation});
    return out;
}

std::vector<Edge> missing_edges(const BlockGraph& b) {
    std::vector<Edge> out;
    for (int i = 0; i < b.n; ++i) {
        for (int j = i + 1; j < b.n; ++j) {
            if (!b.has_edge({i, j})) out.push_back({i, j});
        }
    }
    return out;
}

std::vector<OpKind> legal_kinds(const Architecture& a, const SearchSpaceDef& s) {
    std::vector<OpKind> out;
    const int edges = static_cast<int>(a.block.edges.size());
    if (!others(s.repeats_range, a.repeats).empty()) out.push_back(OpKind::ChangeRepeats);
    if (!others(s.width_range, a.hidden_width).empty()) out.push_back(OpKind::ChangeWidth);
    if (edges < s.edge_max && !missing_edges(a.block).empty()) out.push_back(OpKind::AddEdge);
    if (edges > s.edge_min) out.push_back(OpKind::RemoveEdge);
    if (!mutable_targets(a, s).empty()) out.push_back(OpKind::MutateNodeAttr);
    return out;
}

std::string edge_name(Edge e) { return "(" + std::to_string(e.from) + "," + std::to_string(e.to) + ")"; }

// Nodes with only incoming (outgoing) edges get one random outgoing
// (incoming) edge, repeated until no such node remains. `forbidden` keeps a
// removal from being undone by its own repair.
bool repair_dangling(BlockGraph& g, std::optional<Edge> forbidden, Rng& rng, std::vector<std::string>& log,
                     std::string& why) {
    for (int round = 0; round < g.n; ++round) {
        int dangling = -1;
        bool needs_output = false;
        for (int v = 1; v < g.n - 1 && dangling < 0; ++v) {
            const bool has_in = std::any_of(g.edges.begin(), g.edges.end(), [v](Edge e) { return e.to == v; });
            const bool has_out = std::any_of(g.edges.begin(), g.edges.end(), [v](Edge e) { return e.from == v; });
            if (has_in != has_out) {
                dangling = v;
                needs_output = has_in;
            }
        }
        if (dangling < 0) return true;

        std::vector<Edge> candidates;
        if (needs_output) {
            for (int j = dangling + 1; j < g.n; ++j) candidates.push_back({dangling, j});
        } else {
            for (int k = 0; k < dangling; ++k) candidates.push_back({k, dangling});
        }
        std::erase_if(candidates, [&](Edge e) { return g.has_edge(e) || (forbidden && e == *forbidden); });
        if (candidates.empty()) {
            why = "node " + std::to_string(dangling) + " cannot be reconnected";
            return false;
        }
        const Edge e = pick(rng, candidates);
        g.edges.push_back(e);
        log.push_back("node " + std::to_string(dangling) + " had only " + (needs_output ? "incoming" : "outgoing") +
                      " edges; added " + edge_name(e));
    }
    why = "dangling-node repair did not settle";
    return false;
}

template <typename T>
std::string arrow(const T& from, const T& to) {
    std::ostringstream os;
    os << from << " -> " << to;
    return os.str();
}

std::string node_repr(const NodeSpec& n) {
    return std::string(to_string(n.layer_type)) + "(" + std::to_string(n.layer_param) + ")";
}

void mutate_node(Architecture& a, const SearchSpaceDef& s, Target t, Rng& rng, EvolveResult& r) {
    BlockGraph& b = a.block;
    const std::string where = "v" + std::to_string(t.vertex) + " ";
    if (t.vertex == b.n - 1) {
        OutputNodeSpec& out = b.output_node;
        if (t.attr == NodeAttr::InputMode) {
            const auto v = pick(rng, others(s.input_modes, out.input_mode));
            r.change = where + "input_mode " + arrow(to_string(out.input_mode), to_string(v));
            out.input_mode = v;
        } else {
            const auto v = pick(rng, others(s.activations, out.activation));
            r.change = where + "activation " + arrow(to_string(out.activation), to_string(v));
            out.activation = v;
        }
        return;
    }
    NodeSpec& node = b.node(t.vertex);
    switch (t.attr) {
        case NodeAttr::LayerType: {
            const std::string before = node_repr(node);
            node.layer_type = pick(rng, others(s.layer_types, node.layer_type));
            node.layer_param = pick(rng, s.params_for(node.layer_type));
            r.change = where + "layer " + arrow(before, node_repr(node));
            break;
        }
        case NodeAttr::LayerParam: {
            const int v = pick(rng, others(s.params_for(node.layer_type), node.layer_param));
            r.change = where + "layer_param " + arrow(node.layer_param, v);
            node.layer_param = v;
            break;
        }
        case NodeAttr::OutputWidth: {
            const int v = pick(rng, others(s.output_widths, node.output_width));
            r.change = where + "output_width " + arrow(node.output_width, v);
            node.output_width = v;
            break;
        }
        case NodeAttr::InputMode: {
            const auto v = pick(rng, others(s.input_modes, node.input_mode));
            r.change = where + "input_mode " + arrow(to_string(node.input_mode), to_string(v));
            node.input_mode = v;
            break;
        }
        case NodeAttr::Activation: {
            const auto v = pick(rng, others(s.activations, node.activation));
            r.change = where + "activation " + arrow(to_string(node.activation), to_string(v));
            node.activation = v;
            break;
        }
    }
}

}  // namespace

std::string_view to_string(OpKind k) {
    switch (k) {
        case OpKind::ChangeRepeats:
            return "change_repeats";
        case OpKind::ChangeWidth:
            return "change_width";
        case OpKind::AddEdge:
            return "add_edge";
        case OpKind::RemoveEdge:
            return "remove_edge";
        case OpKind::MutateNodeAttr:
            return "mutate_node_attr";
    }
    return "?";
}

std::string_view to_string(NodeAttr a) {
    switch (a) {
        case NodeAttr::LayerType:
            return "layer_type";
        case NodeAttr::LayerParam:
            return "layer_param";
        case NodeAttr::OutputWidth:
            return "output_width";
        case NodeAttr::InputMode:
            return "input_mode";
        case NodeAttr::Activation:
            return "activation";
    }
    return "?";
}

std::string EvolutionOp::describe() const {
    if (kind != OpKind::MutateNodeAttr) return std::string(to_string(kind));
    return std::string(to_string(kind)) + "(v" + std::to_string(vertex) + ", " + std::string(to_string(attr)) + ")";
}

EvolveResult evolve(const Architecture& arch, const SearchSpaceDef& space, std::uint64_t seed, int retry_cap) {
    if (const auto report = validate(arch, space); !report.ok) {
        throw std::invalid_argument("evolve: parent is outside the search space: " + report.violations.front());
    }
    Rng rng(seed);
    std::string last_violation;
    for (int attempt = 1; attempt <= retry_cap; ++attempt) {
        const auto kinds = legal_kinds(arch, space);
        if (kinds.empty()) throw EvolutionError("evolve: no legal operation; every attribute range is a singleton");

        EvolveResult r{arch, {pick(rng, kinds)}, {}, {}, attempt};
        Architecture& a = r.arch;
        bool ok = true;
        switch (r.op.kind) {
            case OpKind::ChangeRepeats: {
                const int v = pick(rng, others(space.repeats_range, a.repeats));
                r.change = "repeats " + arrow(a.repeats, v);
                a.repeats = v;
                break;
            }
            case OpKind::ChangeWidth: {
                const int v = pick(rng, others(space.width_range, a.hidden_width));
                r.change = "hidden_width " + arrow(a.hidden_width, v);
                a.hidden_width = v;
                break;
            }
            case OpKind::AddEdge: {
                const Edge e = pick(rng, missing_edges(a.block));
                a.block.edges.push_back(e);
                r.change = "added " + edge_name(e);
                ok = repair_dangling(a.block, std::nullopt, rng, r.repair_log, last_violation);
                break;
            }
            case OpKind::RemoveEdge: {
                const Edge e = pick(rng, a.block.edges);
                std::erase(a.block.edges, e);
                r.change = "removed " + edge_name(e);
                ok = repair_dangling(a.block, e, rng, r.repair_log, last_violation);
                break;
            }
            case OpKind::MutateNodeAttr: {
                const Target t = pick(rng, mutable_targets(a, space));
                r.op.vertex = t.vertex;
                r.op.attr = t.attr;
                mutate_node(a, space, t, rng, r);
                break;
            }
        }
        if (!ok) continue;
        a.block.sort_edges();
        const auto report = validate(a, space);
        if (!report.ok) {
            last_violation = report.violations.front();
            continue;
        }
        return r;
    }
    throw EvolutionError("evolve: gave up after " + std::to_string(retry_cap) + " attempts; last violation: " +
                         last_violation);
}

int distance(const Architecture& a, const Architecture& b) {
    if (a.block.n != b.block.n || a.block.nodes.size() != b.block.nodes.size()) {
        throw IncomparableArchitectures("distance: blocks have different vertex counts (" +
                                        std::to_string(a.block.n) + " vs " + std::to_string(b.block.n) + ")");
    }
    int d = (a.repeats != b.repeats) + (a.hidden_width != b.hidden_width);

    std::vector<Edge> ea(a.block.edges), eb(b.block.edges), diff;
    std::sort(ea.begin(), ea.end());
    std::sort(eb.begin(), eb.end());
    ea.erase(std::unique(ea.begin(), ea.end()), ea.end());
    eb.erase(std::unique(eb.begin(), eb.end()), eb.end());
    std::set_symmetric_difference(ea.begin(), ea.end(), eb.begin(), eb.end(), std::back_inserter(diff));
    d += static_cast<int>(diff.size());

    for (std::size_t i = 0; i < a.block.nodes.size(); ++i) {
        const NodeSpec& x = a.block.nodes[i];
        const NodeSpec& y = b.block.nodes[i];
        d += (x.layer_type != y.layer_type) + (x.layer_param != y.layer_param) + (x.output_width != y.output_width) +
             (x.input_mode != y.input_mode) + (x.activation != y.activation);
    }
    d += (a.block.output_node.input_mode != b.block.output_node.input_mode) +
         (a.block.output_node.activation != b.block.output_node.activation);
    return d;
}

}  // namespace rnas
