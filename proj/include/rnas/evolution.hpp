#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rnas/arch.hpp"
#include "rnas/search_space.hpp"

namespace rnas {

enum class OpKind : std::uint8_t { ChangeRepeats, ChangeWidth, AddEdge, RemoveEdge, MutateNodeAttr };
enum class NodeAttr : std::uint8_t { LayerType, LayerParam, OutputWidth, InputMode, Activation };

std::string_view to_string(OpKind k);
std::string_view to_string(NodeAttr a);

struct EvolutionOp {
    OpKind kind = OpKind::ChangeRepeats;
    int vertex = -1;                       // MutateNodeAttr only
    NodeAttr attr = NodeAttr::LayerType;   // MutateNodeAttr only

    std::string describe() const;
    friend bool operator==(const EvolutionOp&, const EvolutionOp&) = default;
};

struct EvolveResult {
    Architecture arch;
    EvolutionOp op;
    std::string change;                   // e.g. "repeats 3 -> 5"
    std::vector<std::string> repair_log;  // edges added to reconnect dangling nodes
    int attempts = 1;
};

struct EvolutionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr int kEvolveRetryCap = 100;

/// Distance tolerance of a single evolution step for blocks with n vertices.
constexpr int step_tolerance(int n) { return n; }

/// One random evolution operation followed by dangling-node repair. The
/// result is in `space`, differs from `arch`, and lies within
/// step_tolerance(n) of it. Deterministic in (arch, space, seed).
EvolveResult evolve(const Architecture& arch, const SearchSpaceDef& space, std::uint64_t seed,
                    int retry_cap = kEvolveRetryCap);

struct IncomparableArchitectures : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Attribute-plus-edge edit count:
///   [repeats differ] + [hidden width differs] + |edge symmetric difference|
///   + number of differing node attributes (output node included).
int distance(const Architecture& a, const Architecture& b);

}  // namespace rnas
