#include "rnas/search_space.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "rnas/hash.hpp"

namespace rnas {

namespace {

const std::vector<int> kGluParams{kGluParam};

constexpr std::uint64_t kSaturated = std::numeric_limits<std::uint64_t>::max();

std::uint64_t sat_mul(std::uint64_t a, std::uint64_t b) {
    std::uint64_t r;
    return __builtin_mul_overflow(a, b, &r) ? kSaturated : r;
}

std::uint64_t sat_add(std::uint64_t a, std::uint64_t b) {
    std::uint64_t r;
    return __builtin_add_overflow(a, b, &r) ? kSaturated : r;
}

std::uint64_t binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    std::uint64_t r = 1;
    for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
    return r;
}

std::vector<Edge> all_edges(int n) {
    std::vector<Edge> out;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) out.push_back({i, j});
    }
    return out;
}

template <typename T>
T preferred_or_first(const std::vector<T>& values, T preferred) {
    return std::find(values.begin(), values.end(), preferred) != values.end() ? preferred : values.front();
}

bool attn_ok(const NodeSpec& n) {
    return n.layer_type != LayerType::Attn || (n.layer_param > 0 && n.output_width % n.layer_param == 0);
}

std::vector<NodeSpec> node_options(const SearchSpaceDef& s) {
    std::vector<NodeSpec> out;
    for (LayerType t : s.layer_types) {
        for (int p : s.params_for(t)) {
            for (int w : s.output_widths) {
                for (InputMode m : s.input_modes) {
                    for (Activation a : s.activations) {
                        NodeSpec node{t, p, w, m, a};
                        if (attn_ok(node)) out.push_back(node);
                    }
                }
            }
        }
    }
    return out;
}

std::vector<int> int_list(const nlohmann::json& j, const char* key) {
    if (!j.is_array()) throw SpaceError(std::string("space.") + key + ": expected an array");
    std::vector<int> out;
    for (const auto& v : j) {
        if (!v.is_number_integer()) throw SpaceError(std::string("space.") + key + ": expected integers");
        out.push_back(v.get<int>());
    }
    return out;
}

template <typename Enum, typename Parse>
std::vector<Enum> enum_list(const nlohmann::json& j, const char* key, Parse parse) {
    if (!j.is_array()) throw SpaceError(std::string("space.") + key + ": expected an array");
    std::vector<Enum> out;
    for (const auto& v : j) {
        auto e = v.is_string() ? parse(v.get<std::string>()) : std::nullopt;
        if (!e) throw SpaceError(std::string("space.") + key + ": unknown value " + v.dump());
        out.push_back(*e);
    }
    return out;
}

template <typename Enum>
nlohmann::ordered_json names(const std::vector<Enum>& values) {
    auto out = nlohmann::ordered_json::array();
    for (Enum v : values) out.push_back(to_string(v));
    return out;
}

}  // namespace

SearchSpaceDef SearchSpaceDef::with_nodes(int n) {
    SearchSpaceDef s;
    s.n = n;
    s.edge_max = n * (n - 1) / 2 - 3;
    return s;
}

const std::vector<int>& SearchSpaceDef::params_for(LayerType t) const {
    switch (t) {
        case LayerType::Conv:
            return conv_params;
        case LayerType::SepConv:
            return sep_conv_params;
        case LayerType::Attn:
            return attn_params;
        case LayerType::GLU:
            return kGluParams;
    }
    return kGluParams;
}

void SearchSpaceDef::check() const {
    if (n < 4 || n > 16) throw SpaceError("space: n must lie in {4..16}, got " + std::to_string(n));
    auto non_empty = [](bool empty, const char* name) {
        if (empty) throw SpaceError(std::string("space: empty range for ") + name);
    };
    non_empty(repeats_range.empty(), "repeats_range");
    non_empty(width_range.empty(), "width_range");
    non_empty(layer_types.empty(), "layer_types");
    non_empty(output_widths.empty(), "output_widths");
    non_empty(input_modes.empty(), "input_modes");
    non_empty(activations.empty(), "activations");
    for (LayerType t : layer_types) {
        if (params_for(t).empty()) throw SpaceError("space: empty parameter range for " + std::string(to_string(t)));
    }
    if (edge_min != 3) throw SpaceError("space: edge_min is fixed at 3");
    if (edge_max < edge_min || edge_max > possible_edges()) {
        throw SpaceError("space: edge_max must lie in {" + std::to_string(edge_min) + ".." +
                         std::to_string(possible_edges()) + "}");
    }
}

const SearchSpaceDef& domain_space() {
    static const SearchSpaceDef kDomain;
    return kDomain;
}

bool contains(const SearchSpaceDef& space, const Architecture& arch) { return validate(arch, space).ok; }

Architecture simplest(const SearchSpaceDef& space) {
    space.check();
    const ModelShapeConfig shape;
    const InputMode mode = preferred_or_first(space.input_modes, InputMode::Add);
    const Activation act = preferred_or_first(space.activations, Activation::None);
    const int width = *std::min_element(space.output_widths.begin(), space.output_widths.end());

    Architecture best;
    std::uint64_t best_count = kSaturated;
    for (LayerType t : space.layer_types) {
        for (int p : space.params_for(t)) {
            const NodeSpec node{t, p, width, mode, act};
            if (!attn_ok(node)) continue;
            Architecture a;
            a.repeats = *std::min_element(space.repeats_range.begin(), space.repeats_range.end());
            a.hidden_width = *std::min_element(space.width_range.begin(), space.width_range.end());
            a.block.n = space.n;
            a.block.nodes.assign(static_cast<std::size_t>(space.n - 2), node);
            a.block.output_node = {mode, act};
            a.block.edges = {{0, 1}, {1, 2}, {2, space.n - 1}};
            const auto c = count_params(a, shape);
            if (c < best_count) {
                best_count = c;
                best = a;
            }
        }
    }
    if (best_count == kSaturated) throw SpaceError("space admits no valid computational node");
    return best;
}

Architecture sample(const SearchSpaceDef& space, std::uint64_t seed) {
    space.check();
    Rng rng(seed);
    const auto candidates = all_edges(space.n);
    const int max_edges = std::min(space.edge_max, space.possible_edges());

    for (int attempt = 0; attempt < kSampleRetryCap; ++attempt) {
        Architecture a;
        a.repeats = pick(rng, space.repeats_range);
        a.hidden_width = pick(rng, space.width_range);
        a.block.n = space.n;
        for (int v = 1; v < space.n - 1; ++v) {
            NodeSpec node;
            node.layer_type = pick(rng, space.layer_types);
            node.layer_param = pick(rng, space.params_for(node.layer_type));
            node.output_width = pick(rng, space.output_widths);
            node.input_mode = pick(rng, space.input_modes);
            node.activation = pick(rng, space.activations);
            a.block.nodes.push_back(node);
        }
        a.block.output_node = {pick(rng, space.input_modes), pick(rng, space.activations)};

        const int count = space.edge_min + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(max_edges - space.edge_min + 1)));
        std::vector<Edge> pool(candidates);
        for (int k = 0; k < count; ++k) {
            const auto j = static_cast<std::size_t>(k) + uniform_index(rng, pool.size() - static_cast<std::size_t>(k));
            std::swap(pool[static_cast<std::size_t>(k)], pool[j]);
        }
        a.block.edges.assign(pool.begin(), pool.begin() + count);
        a.block.sort_edges();
        if (contains(space, a)) return a;
    }
    throw SpaceError("sample: no valid architecture after " + std::to_string(kSampleRetryCap) +
                     " draws; the space is probably misconfigured");
}

std::uint64_t cardinality_bound(const SearchSpaceDef& space) {
    std::uint64_t per_node = 0;
    for (LayerType t : space.layer_types) per_node = sat_add(per_node, space.params_for(t).size());
    per_node = sat_mul(per_node, space.output_widths.size());
    per_node = sat_mul(per_node, space.input_modes.size());
    per_node = sat_mul(per_node, space.activations.size());

    std::uint64_t total = sat_mul(space.repeats_range.size(), space.width_range.size());
    for (int v = 1; v < space.n - 1; ++v) total = sat_mul(total, per_node);
    total = sat_mul(total, sat_mul(space.input_modes.size(), space.activations.size()));

    std::uint64_t edge_sets = 0;
    for (int k = space.edge_min; k <= std::min(space.edge_max, space.possible_edges()); ++k) {
        edge_sets = sat_add(edge_sets, binomial(space.possible_edges(), k));
    }
    return sat_mul(total, edge_sets);
}

void enumerate_restricted(const SearchSpaceDef& space, const std::function<void(const Architecture&)>& visit,
                          std::uint64_t cap) {
    const std::uint64_t bound = cardinality_bound(space);
    if (bound == 0) throw SpaceError("enumerate: restricted space has cardinality 0 (an attribute range is empty)");
    if (bound > cap) {
        throw SpaceError("enumerate: cardinality bound " + std::to_string(bound) + " exceeds cap " +
                         std::to_string(cap));
    }
    space.check();

    const auto candidates = all_edges(space.n);
    const auto options = node_options(space);
    std::vector<OutputNodeSpec> outputs;
    for (InputMode m : space.input_modes) {
        for (Activation a : space.activations) outputs.push_back({m, a});
    }
    const auto slots = static_cast<std::size_t>(space.n - 2);
    if (options.empty()) return;

    const std::uint64_t subsets = std::uint64_t{1} << candidates.size();
    for (std::uint64_t mask = 0; mask < subsets; ++mask) {
        const int count = __builtin_popcountll(mask);
        if (count < space.edge_min || count > space.edge_max) continue;
        BlockGraph g;
        g.n = space.n;
        for (std::size_t e = 0; e < candidates.size(); ++e) {
            if (mask & (std::uint64_t{1} << e)) g.edges.push_back(candidates[e]);
        }
        if (!has_input_output_path(g)) continue;

        Architecture a;
        a.block = g;
        a.block.nodes.assign(slots, options.front());
        std::vector<std::size_t> digit(slots, 0);
        for (int r : space.repeats_range) {
            for (int w : space.width_range) {
                a.repeats = r;
                a.hidden_width = w;
                std::fill(digit.begin(), digit.end(), 0);
                while (true) {
                    for (std::size_t s = 0; s < slots; ++s) a.block.nodes[s] = options[digit[s]];
                    for (const auto& out : outputs) {
                        a.block.output_node = out;
                        visit(a);
                    }
                    std::size_t s = 0;
                    while (s < slots && ++digit[s] == options.size()) digit[s++] = 0;
                    if (s == slots) break;
                }
            }
        }
    }
}

std::vector<Architecture> enumerate_restricted(const SearchSpaceDef& space, std::uint64_t cap) {
    std::vector<Architecture> out;
    enumerate_restricted(space, [&out](const Architecture& a) { out.push_back(a); }, cap);
    return out;
}

nlohmann::ordered_json to_json(const SearchSpaceDef& s) {
    nlohmann::ordered_json j;
    j["n"] = s.n;
    j["repeats_range"] = s.repeats_range;
    j["width_range"] = s.width_range;
    j["layer_types"] = names(s.layer_types);
    j["conv_params"] = s.conv_params;
    j["sep_conv_params"] = s.sep_conv_params;
    j["attn_params"] = s.attn_params;
    j["output_widths"] = s.output_widths;
    j["input_modes"] = names(s.input_modes);
    j["activations"] = names(s.activations);
    j["edge_min"] = s.edge_min;
    j["edge_max"] = s.edge_max;
    return j;
}

SearchSpaceDef space_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw SpaceError("space: expected an object");
    SearchSpaceDef s;
    if (j.contains("n")) {
        if (!j["n"].is_number_integer()) throw SpaceError("space.n: expected an integer");
        s = SearchSpaceDef::with_nodes(j["n"].get<int>());
    }
    for (const auto& [key, value] : j.items()) {
        if (key == "n") {
        } else if (key == "repeats_range") {
            s.repeats_range = int_list(value, "repeats_range");
        } else if (key == "width_range") {
            s.width_range = int_list(value, "width_range");
        } else if (key == "layer_types") {
            s.layer_types = enum_list<LayerType>(value, "layer_types", layer_type_from_string);
        } else if (key == "conv_params") {
            s.conv_params = int_list(value, "conv_params");
        } else if (key == "sep_conv_params") {
            s.sep_conv_params = int_list(value, "sep_conv_params");
        } else if (key == "attn_params") {
            s.attn_params = int_list(value, "attn_params");
        } else if (key == "output_widths") {
            s.output_widths = int_list(value, "output_widths");
        } else if (key == "input_modes") {
            s.input_modes = enum_list<InputMode>(value, "input_modes", input_mode_from_string);
        } else if (key == "activations") {
            s.activations = enum_list<Activation>(value, "activations", activation_from_string);
        } else if (key == "edge_min" || key == "edge_max") {
            if (!value.is_number_integer()) throw SpaceError("space." + key + ": expected an integer");
            (key == "edge_min" ? s.edge_min : s.edge_max) = value.get<int>();
        } else {
            throw SpaceError("space: unknown key '" + key + "'");
        }
    }
    // Restricted spaces may only narrow the attribute domain.
    const SearchSpaceDef& d = domain_space();
    auto subset = [](const auto& values, const auto& domain, const char* name) {
        for (const auto& v : values) {
            if (std::find(domain.begin(), domain.end(), v) == domain.end()) {
                throw SpaceError(std::string("space.") + name + ": value outside the architecture domain");
            }
        }
    };
    subset(s.repeats_range, d.repeats_range, "repeats_range");
    subset(s.width_range, d.width_range, "width_range");
    subset(s.conv_params, d.conv_params, "conv_params");
    subset(s.sep_conv_params, d.sep_conv_params, "sep_conv_params");
    subset(s.attn_params, d.attn_params, "attn_params");
    subset(s.output_widths, d.output_widths, "output_widths");
    s.check();
    return s;
}

}  // namespace rnas
