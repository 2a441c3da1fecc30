#include "rnas/arch.hpp"

#include <algorithm>
#include <sstream>

#include "rnas/hash.hpp"
#include "rnas/search_space.hpp"

namespace rnas {

namespace {

constexpr std::array<std::string_view, 4> kLayerNames{"conv", "sep_conv", "attn", "glu"};
constexpr std::array<std::string_view, 3> kModeNames{"add", "mul", "concat"};
constexpr std::array<std::string_view, 3> kActivationNames{"none", "relu", "swish"};

constexpr int kMinNodes = 4;
constexpr int kMaxNodes = 16;

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(const std::array<std::string_view, N>& names, std::string_view s) {
    for (std::size_t i = 0; i < N; ++i) {
        if (names[i] == s) return static_cast<Enum>(i);
    }
    return std::nullopt;
}

// "{3..8}" for contiguous ranges, "{1, 3, 5}" otherwise.
std::string describe_set(const std::vector<int>& values) {
    std::vector<int> v(values);
    std::sort(v.begin(), v.end());
    std::ostringstream os;
    bool contiguous = v.size() > 2;
    for (std::size_t i = 1; i < v.size() && contiguous; ++i) contiguous = v[i] == v[i - 1] + 1;
    if (contiguous) {
        os << '{' << v.front() << ".." << v.back() << '}';
        return os.str();
    }
    os << '{';
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
    os << '}';
    return os.str();
}

template <typename T>
bool in(const std::vector<T>& values, const T& x) {
    return std::find(values.begin(), values.end(), x) != values.end();
}

bool edge_in_range(const BlockGraph& b, Edge e) { return e.from >= 0 && e.to < b.n && e.from < e.to; }

// Reachability over forward edges only; vertex ids index the returned vector.
std::vector<bool> reachable_from_input(const BlockGraph& b) {
    std::vector<bool> seen(static_cast<std::size_t>(std::max(b.n, 0)), false);
    if (b.n <= 0) return seen;
    seen[0] = true;
    std::vector<Edge> sorted(b.edges);
    std::sort(sorted.begin(), sorted.end());
    for (const Edge& e : sorted) {
        if (edge_in_range(b, e) && seen[static_cast<std::size_t>(e.from)]) seen[static_cast<std::size_t>(e.to)] = true;
    }
    return seen;
}

std::vector<bool> reaching_output(const BlockGraph& b) {
    std::vector<bool> seen(static_cast<std::size_t>(std::max(b.n, 0)), false);
    if (b.n <= 0) return seen;
    seen[static_cast<std::size_t>(b.n - 1)] = true;
    std::vector<Edge> sorted(b.edges);
    std::sort(sorted.begin(), sorted.end(), [](Edge a, Edge c) { return a.to > c.to || (a.to == c.to && a.from > c.from); });
    for (const Edge& e : sorted) {
        if (edge_in_range(b, e) && seen[static_cast<std::size_t>(e.to)]) seen[static_cast<std::size_t>(e.from)] = true;
    }
    return seen;
}

class Checked {
public:
    static std::uint64_t mul(std::uint64_t a, std::uint64_t b) {
        std::uint64_t r;
        if (__builtin_mul_overflow(a, b, &r)) throw ParamOverflow("parameter count overflows 64 bits");
        return r;
    }
    static std::uint64_t add(std::uint64_t a, std::uint64_t b) {
        std::uint64_t r;
        if (__builtin_add_overflow(a, b, &r)) throw ParamOverflow("parameter count overflows 64 bits");
        return r;
    }
};

std::uint64_t unsigned_width(std::int64_t w, const char* what) {
    if (w <= 0) throw std::invalid_argument(std::string("non-positive ") + what);
    return static_cast<std::uint64_t>(w);
}

std::uint64_t node_params(const NodeSpec& node, std::uint64_t w_in) {
    const std::uint64_t w_out = unsigned_width(node.output_width, "output width");
    const std::uint64_t linear = Checked::add(Checked::mul(w_in, w_out), w_out);
    switch (node.layer_type) {
        case LayerType::Conv: {
            const auto k = unsigned_width(node.layer_param, "kernel width");
            return Checked::add(Checked::mul(Checked::mul(k, w_in), w_out), w_out);
        }
        case LayerType::SepConv: {
            const auto k = unsigned_width(node.layer_param, "kernel width");
            return Checked::add(Checked::mul(k, w_in), linear);
        }
        case LayerType::Attn: {
            const std::uint64_t out_proj = Checked::add(Checked::mul(w_out, w_out), w_out);
            return Checked::add(Checked::mul(3, linear), out_proj);
        }
        case LayerType::GLU:
            return Checked::mul(2, linear);
    }
    return 0;
}

// JSON field access with pointer-style error paths.
class Reader {
public:
    Reader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {}

    [[noreturn]] void fail(const std::string& msg, const std::string& sub = "") const {
        const std::string where = sub.empty() ? path_ : path_ + "/" + sub;
        throw ParseError(where.empty() ? msg : where + ": " + msg, 0, where);
    }

    void expect_object(std::initializer_list<std::string_view> keys) const {
        if (!j_.is_object()) fail("expected an object");
        for (const auto& [k, v] : j_.items()) {
            if (std::find(keys.begin(), keys.end(), k) == keys.end()) fail("unknown key '" + k + "'");
        }
        for (auto k : keys) {
            if (!j_.contains(std::string(k))) fail("missing key '" + std::string(k) + "'");
        }
    }

    Reader at(const std::string& key) const { return {j_.at(key), path_ + "/" + key}; }
    Reader at(std::size_t i) const { return {j_.at(i), path_ + "/" + std::to_string(i)}; }
    const nlohmann::json& value() const { return j_; }

    int integer() const {
        if (!j_.is_number_integer()) fail("expected an integer");
        const auto v = j_.get<std::int64_t>();
        if (v < -(1LL << 30) || v > (1LL << 30)) fail("integer out of range");
        return static_cast<int>(v);
    }

    int integer_in(const std::vector<int>& allowed, std::string_view name) const {
        const int v = integer();
        if (!in(allowed, v)) {
            fail(std::string(name) + " " + std::to_string(v) + " outside range " + describe_set(allowed));
        }
        return v;
    }

    template <typename Enum, std::size_t N>
    Enum enumeration(const std::array<std::string_view, N>& names, std::string_view what) const {
        if (!j_.is_string()) fail(std::string("expected a ") + std::string(what) + " name");
        if (auto e = lookup<Enum>(names, j_.get<std::string>())) return *e;
        std::string options;
        for (auto n : names) options += (options.empty() ? "" : "|") + std::string(n);
        fail("unknown " + std::string(what) + " '" + j_.get<std::string>() + "' (expected " + options + ")");
    }

    const nlohmann::json& array() const {
        if (!j_.is_array()) fail("expected an array");
        return j_;
    }

private:
    const nlohmann::json& j_;
    std::string path_;
};

}  // namespace

std::string_view to_string(LayerType t) { return kLayerNames[static_cast<std::size_t>(t)]; }
std::string_view to_string(InputMode m) { return kModeNames[static_cast<std::size_t>(m)]; }
std::string_view to_string(Activation a) { return kActivationNames[static_cast<std::size_t>(a)]; }
std::optional<LayerType> layer_type_from_string(std::string_view s) { return lookup<LayerType>(kLayerNames, s); }
std::optional<InputMode> input_mode_from_string(std::string_view s) { return lookup<InputMode>(kModeNames, s); }
std::optional<Activation> activation_from_string(std::string_view s) { return lookup<Activation>(kActivationNames, s); }

bool BlockGraph::has_edge(Edge e) const { return std::find(edges.begin(), edges.end(), e) != edges.end(); }

void BlockGraph::sort_edges() { std::sort(edges.begin(), edges.end()); }

bool operator==(const BlockGraph& a, const BlockGraph& b) {
    if (a.n != b.n || a.nodes != b.nodes || a.output_node != b.output_node || a.edges.size() != b.edges.size()) {
        return false;
    }
    std::vector<Edge> ea(a.edges), eb(b.edges);
    std::sort(ea.begin(), ea.end());
    std::sort(eb.begin(), eb.end());
    return ea == eb;
}

std::vector<int> active_nodes(const BlockGraph& block) {
    const auto fwd = reachable_from_input(block);
    const auto bwd = reaching_output(block);
    std::vector<int> out;
    for (int v = 1; v < block.n - 1; ++v) {
        if (fwd[static_cast<std::size_t>(v)] && bwd[static_cast<std::size_t>(v)]) out.push_back(v);
    }
    return out;
}

bool has_input_output_path(const BlockGraph& block) {
    if (block.n < 2) return false;
    return reachable_from_input(block)[static_cast<std::size_t>(block.n - 1)];
}

ValidationReport validate(const Architecture& arch, const SearchSpaceDef& space) {
    ValidationReport r;
    auto violation = [&r](std::string msg) {
        r.ok = false;
        r.violations.push_back(std::move(msg));
    };
    const BlockGraph& b = arch.block;

    if (!in(space.repeats_range, arch.repeats)) {
        violation("repeats " + std::to_string(arch.repeats) + " outside " + describe_set(space.repeats_range));
    }
    if (!in(space.width_range, arch.hidden_width)) {
        violation("hidden_width " + std::to_string(arch.hidden_width) + " outside " + describe_set(space.width_range));
    }
    if (b.n != space.n) {
        violation("block has n = " + std::to_string(b.n) + ", search space uses n = " + std::to_string(space.n));
    }
    if (b.n < kMinNodes) {
        violation("block needs at least " + std::to_string(kMinNodes) + " vertices");
        return r;
    }
    if (b.nodes.size() != static_cast<std::size_t>(b.n - 2)) {
        violation("block lists " + std::to_string(b.nodes.size()) + " computational nodes, expected " +
                  std::to_string(b.n - 2));
        return r;
    }

    for (int v = 1; v < b.n - 1; ++v) {
        const NodeSpec& node = b.node(v);
        const std::string tag = "node " + std::to_string(v) + ": ";
        if (!in(space.layer_types, node.layer_type)) {
            violation(tag + "layer type " + std::string(to_string(node.layer_type)) + " not in search space");
        }
        const auto& params = space.params_for(node.layer_type);
        if (!in(params, node.layer_param)) {
            violation(tag + std::string(to_string(node.layer_type)) + " layer_param " +
                      std::to_string(node.layer_param) + " outside " + describe_set(params));
        }
        if (!in(space.output_widths, node.output_width)) {
            violation(tag + "output_width " + std::to_string(node.output_width) + " outside " +
                      describe_set(space.output_widths));
        }
        if (!in(space.input_modes, node.input_mode)) {
            violation(tag + "input mode " + std::string(to_string(node.input_mode)) + " not in search space");
        }
        if (!in(space.activations, node.activation)) {
            violation(tag + "activation " + std::string(to_string(node.activation)) + " not in search space");
        }
        if (node.layer_type == LayerType::Attn && node.layer_param > 0 && node.output_width % node.layer_param != 0) {
            violation(tag + "attention width " + std::to_string(node.output_width) + " not divisible by " +
                      std::to_string(node.layer_param) + " heads");
        }
    }
    if (!in(space.input_modes, b.output_node.input_mode)) {
        violation("output node: input mode " + std::string(to_string(b.output_node.input_mode)) +
                  " not in search space");
    }
    if (!in(space.activations, b.output_node.activation)) {
        violation("output node: activation " + std::string(to_string(b.output_node.activation)) +
                  " not in search space");
    }

    std::vector<Edge> seen;
    for (const Edge& e : b.edges) {
        const std::string name = "(" + std::to_string(e.from) + "," + std::to_string(e.to) + ")";
        if (e.from < 0 || e.to < 0 || e.from >= b.n || e.to >= b.n) {
            violation("edge " + name + " references a vertex outside 0.." + std::to_string(b.n - 1));
        } else if (e.from >= e.to) {
            violation("edge " + name + " violates i < j");
        }
        if (std::find(seen.begin(), seen.end(), e) != seen.end()) {
            violation("duplicate edge " + name);
        } else {
            seen.push_back(e);
        }
    }
    const int count = static_cast<int>(b.edges.size());
    if (count < space.edge_min) {
        violation("edge count below " + std::to_string(space.edge_min) + " (has " + std::to_string(count) + ")");
    }
    if (count > space.edge_max) {
        violation("edge count above " + std::to_string(space.edge_max) + " (has " + std::to_string(count) + ")");
    }
    if (!has_input_output_path(b)) {
        violation("no directed path from v0 to v" + std::to_string(b.n - 1));
    } else {
        const auto active = active_nodes(b);
        for (int v = 1; v < b.n - 1; ++v) {
            if (!in(active, v)) {
                r.warnings.push_back("node " + std::to_string(v) + " inactive (not on any v0->v" +
                                     std::to_string(b.n - 1) + " path)");
            }
        }
    }
    return r;
}

std::int64_t merged_input_width(const Architecture& arch, int vertex) {
    const BlockGraph& b = arch.block;
    const auto active = active_nodes(b);
    const InputMode mode = vertex == b.n - 1 ? b.output_node.input_mode : b.node(vertex).input_mode;
    std::int64_t merged = 0;
    for (const Edge& e : b.edges) {
        if (e.to != vertex || !edge_in_range(b, e)) continue;
        if (e.from != 0 && !in(active, e.from)) continue;
        const std::int64_t w = e.from == 0 ? arch.hidden_width : b.node(e.from).output_width;
        merged = mode == InputMode::Concat ? merged + w : std::max(merged, w);
    }
    return merged;
}

ParamBreakdown count_params_breakdown(const Architecture& arch, const ModelShapeConfig& shape) {
    const std::uint64_t hidden = unsigned_width(arch.hidden_width, "hidden width");
    const std::uint64_t classes = unsigned_width(shape.num_classes, "class count");
    ParamBreakdown p;

    const std::uint64_t rows = Checked::add(Checked::add(unsigned_width(shape.vocab_size, "vocabulary size"),
                                                         unsigned_width(shape.max_positions, "position count")),
                                            unsigned_width(shape.num_segments, "segment count"));
    p.embedding = Checked::mul(rows, hidden);

    for (int v : active_nodes(arch.block)) {
        const auto w_in = static_cast<std::uint64_t>(merged_input_width(arch, v));
        p.per_block = Checked::add(p.per_block, node_params(arch.block.node(v), w_in));
    }
    const auto merged = static_cast<std::uint64_t>(merged_input_width(arch, arch.block.n - 1));
    if (merged != hidden) p.per_block = Checked::add(p.per_block, Checked::add(Checked::mul(merged, hidden), hidden));

    p.blocks = Checked::mul(unsigned_width(arch.repeats, "repeat count"), p.per_block);
    p.classifier = Checked::add(Checked::mul(hidden, classes), classes);
    p.total = Checked::add(Checked::add(p.embedding, p.blocks), p.classifier);
    return p;
}

std::uint64_t count_params(const Architecture& arch, const ModelShapeConfig& shape) {
    return count_params_breakdown(arch, shape).total;
}

nlohmann::ordered_json to_json(const Architecture& arch) {
    using nlohmann::ordered_json;
    ordered_json nodes = ordered_json::array();
    for (const NodeSpec& n : arch.block.nodes) {
        ordered_json node;
        node["layer_type"] = to_string(n.layer_type);
        node["layer_param"] = n.layer_param;
        node["output_width"] = n.output_width;
        node["input_mode"] = to_string(n.input_mode);
        node["activation"] = to_string(n.activation);
        nodes.push_back(std::move(node));
    }
    std::vector<Edge> edges(arch.block.edges);
    std::sort(edges.begin(), edges.end());
    ordered_json edge_list = ordered_json::array();
    for (const Edge& e : edges) edge_list.push_back(ordered_json::array({e.from, e.to}));

    ordered_json out_node;
    out_node["input_mode"] = to_string(arch.block.output_node.input_mode);
    out_node["activation"] = to_string(arch.block.output_node.activation);

    ordered_json block;
    block["n"] = arch.block.n;
    block["nodes"] = std::move(nodes);
    block["output_node"] = std::move(out_node);
    block["edges"] = std::move(edge_list);

    ordered_json j;
    j["repeats"] = arch.repeats;
    j["hidden_width"] = arch.hidden_width;
    j["block"] = std::move(block);
    return j;
}

Architecture architecture_from_json(const nlohmann::json& j) {
    const SearchSpaceDef& domain = domain_space();
    Reader root(j, "");
    root.expect_object({"repeats", "hidden_width", "block"});

    Architecture arch;
    arch.repeats = root.at("repeats").integer_in(domain.repeats_range, "repeats");
    arch.hidden_width = root.at("hidden_width").integer_in(domain.width_range, "hidden_width");

    Reader block = root.at("block");
    block.expect_object({"n", "nodes", "output_node", "edges"});
    BlockGraph& b = arch.block;
    b.n = block.at("n").integer();
    if (b.n < kMinNodes || b.n > kMaxNodes) {
        block.fail("n " + std::to_string(b.n) + " outside range {" + std::to_string(kMinNodes) + ".." +
                       std::to_string(kMaxNodes) + "}",
                   "n");
    }

    Reader nodes = block.at("nodes");
    const auto& node_array = nodes.array();
    if (node_array.size() != static_cast<std::size_t>(b.n - 2)) {
        nodes.fail("expected " + std::to_string(b.n - 2) + " computational nodes, found " +
                   std::to_string(node_array.size()));
    }
    for (std::size_t i = 0; i < node_array.size(); ++i) {
        Reader r = nodes.at(i);
        r.expect_object({"layer_type", "layer_param", "output_width", "input_mode", "activation"});
        NodeSpec node;
        node.layer_type = r.at("layer_type").enumeration<LayerType>(kLayerNames, "layer type");
        const std::string pname = std::string(to_string(node.layer_type)) + " layer_param";
        node.layer_param = r.at("layer_param").integer_in(domain.params_for(node.layer_type), pname);
        node.output_width = r.at("output_width").integer_in(domain.output_widths, "output_width");
        node.input_mode = r.at("input_mode").enumeration<InputMode>(kModeNames, "input mode");
        node.activation = r.at("activation").enumeration<Activation>(kActivationNames, "activation");
        b.nodes.push_back(node);
    }

    Reader out = block.at("output_node");
    out.expect_object({"input_mode", "activation"});
    b.output_node.input_mode = out.at("input_mode").enumeration<InputMode>(kModeNames, "input mode");
    b.output_node.activation = out.at("activation").enumeration<Activation>(kActivationNames, "activation");

    Reader edges = block.at("edges");
    const auto& edge_array = edges.array();
    for (std::size_t i = 0; i < edge_array.size(); ++i) {
        Reader r = edges.at(i);
        if (!r.value().is_array() || r.value().size() != 2) r.fail("expected an [i, j] pair");
        std::vector<int> vertices;
        for (int v = 0; v < b.n; ++v) vertices.push_back(v);
        const int from = r.at(std::size_t{0}).integer_in(vertices, "vertex");
        const int to = r.at(std::size_t{1}).integer_in(vertices, "vertex");
        b.edges.push_back({from, to});
    }
    b.sort_edges();
    return arch;
}

std::string serialize(const Architecture& arch) { return to_json(arch).dump(); }

Architecture parse_architecture(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("malformed record at byte ") + std::to_string(e.byte) + ": " + e.what(), e.byte,
                         "");
    }
    return architecture_from_json(j);
}

std::string ArchDigest::hex() const { return to_hex(value); }

ArchDigest canonical_hash(const Architecture& arch) { return {fnv1a(serialize(arch))}; }

}  // namespace rnas
