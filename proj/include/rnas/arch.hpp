#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace rnas {

enum class LayerType : std::uint8_t { Conv, SepConv, Attn, GLU };
enum class InputMode : std::uint8_t { Add, Mul, Concat };
enum class Activation : std::uint8_t { None, ReLU, Swish };

inline constexpr std::array kAllLayerTypes{LayerType::Conv, LayerType::SepConv, LayerType::Attn, LayerType::GLU};
inline constexpr std::array kAllInputModes{InputMode::Add, InputMode::Mul, InputMode::Concat};
inline constexpr std::array kAllActivations{Activation::None, Activation::ReLU, Activation::Swish};

// GLU has no layer parameter; records carry this sentinel instead.
inline constexpr int kGluParam = 0;

std::string_view to_string(LayerType t);
std::string_view to_string(InputMode m);
std::string_view to_string(Activation a);
std::optional<LayerType> layer_type_from_string(std::string_view s);
std::optional<InputMode> input_mode_from_string(std::string_view s);
std::optional<Activation> activation_from_string(std::string_view s);

struct NodeSpec {
    LayerType layer_type = LayerType::Conv;
    int layer_param = 1;
    int output_width = 128;
    InputMode input_mode = InputMode::Add;
    Activation activation = Activation::None;

    friend bool operator==(const NodeSpec&, const NodeSpec&) = default;
};

struct OutputNodeSpec {
    InputMode input_mode = InputMode::Add;
    Activation activation = Activation::None;

    friend bool operator==(const OutputNodeSpec&, const OutputNodeSpec&) = default;
};

struct Edge {
    int from = 0;
    int to = 0;

    friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Repeated block as a DAG over vertices v0..v(n-1). v0 is the block input,
/// v(n-1) the output node, and nodes[i] describes computational vertex i+1.
struct BlockGraph {
    int n = 6;
    std::vector<NodeSpec> nodes;
    OutputNodeSpec output_node;
    std::vector<Edge> edges;

    const NodeSpec& node(int vertex) const { return nodes.at(static_cast<std::size_t>(vertex - 1)); }
    NodeSpec& node(int vertex) { return nodes.at(static_cast<std::size_t>(vertex - 1)); }
    bool has_edge(Edge e) const;
    void sort_edges();

    // Edge lists compare as sets.
    friend bool operator==(const BlockGraph& a, const BlockGraph& b);
};

struct Architecture {
    int repeats = 3;
    int hidden_width = 128;
    BlockGraph block;

    friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct ModelShapeConfig {
    std::int64_t vocab_size = 30522;
    std::int64_t max_positions = 128;
    std::int64_t num_segments = 2;
    std::int64_t num_classes = 2;

    friend bool operator==(const ModelShapeConfig&, const ModelShapeConfig&) = default;
};

struct SearchSpaceDef;

struct ValidationReport {
    bool ok = true;
    std::vector<std::string> violations;
    // Non-fatal observations, e.g. computational nodes off every input->output path.
    std::vector<std::string> warnings;
};

ValidationReport validate(const Architecture& arch, const SearchSpaceDef& space);

/// Computational vertices lying on at least one directed v0 -> v(n-1) path,
/// ascending. Tolerates malformed edge lists (out-of-range or backward edges
/// are ignored).
std::vector<int> active_nodes(const BlockGraph& block);

/// True when some directed path joins v0 and v(n-1).
bool has_input_output_path(const BlockGraph& block);

struct ParamBreakdown {
    std::uint64_t embedding = 0;
    std::uint64_t per_block = 0;
    std::uint64_t blocks = 0;
    std::uint64_t classifier = 0;
    std::uint64_t total = 0;
};

struct ParamOverflow : std::overflow_error {
    using std::overflow_error::overflow_error;
};

/// Analytic weight count of the student network (biases included, block
/// repetitions not shared). Throws ParamOverflow instead of wrapping.
ParamBreakdown count_params_breakdown(const Architecture& arch, const ModelShapeConfig& shape);
std::uint64_t count_params(const Architecture& arch, const ModelShapeConfig& shape);

/// Merged input width seen by `vertex` (computational node or output node).
/// v0 carries the hidden width; only active predecessors contribute.
std::int64_t merged_input_width(const Architecture& arch, int vertex);

struct ParseError : std::runtime_error {
    ParseError(const std::string& what, std::size_t position, std::string path)
        : std::runtime_error(what), position(position), path(std::move(path)) {}

    std::size_t position;  // byte offset for syntax errors, 0 otherwise
    std::string path;      // JSON pointer of the offending value
};

nlohmann::ordered_json to_json(const Architecture& arch);
Architecture architecture_from_json(const nlohmann::json& j);

/// Canonical one-line record: fixed key order, edges ascending.
std::string serialize(const Architecture& arch);
Architecture parse_architecture(std::string_view text);

struct ArchDigest {
    std::uint64_t value = 0;

    std::string hex() const;
    friend auto operator<=>(const ArchDigest&, const ArchDigest&) = default;
};

ArchDigest canonical_hash(const Architecture& arch);

}  // namespace rnas

template <>
struct std::hash<rnas::ArchDigest> {
    std::size_t operator()(const rnas::ArchDigest& d) const noexcept { return static_cast<std::size_t>(d.value); }
};
