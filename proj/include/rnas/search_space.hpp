#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "rnas/arch.hpp"

namespace rnas {

struct SpaceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Feasible architecture set: a Cartesian product of attribute ranges plus
/// edge-count bounds on the block DAG. Default-constructed values are the
/// full student space with n = 6.
struct SearchSpaceDef {
    int n = 6;
    std::vector<int> repeats_range{3, 4, 5, 6, 7, 8};
    std::vector<int> width_range{128, 256, 512};
    std::vector<LayerType> layer_types{kAllLayerTypes.begin(), kAllLayerTypes.end()};
    std::vector<int> conv_params{1, 3, 5};
    std::vector<int> sep_conv_params{3, 5, 7, 9, 11};
    std::vector<int> attn_params{4, 8, 16};
    std::vector<int> output_widths{128, 256, 512};
    std::vector<InputMode> input_modes{kAllInputModes.begin(), kAllInputModes.end()};
    std::vector<Activation> activations{kAllActivations.begin(), kAllActivations.end()};
    int edge_min = 3;
    int edge_max = 12;

    /// Full space for a given node count; edge_max = n(n-1)/2 - 3.
    static SearchSpaceDef with_nodes(int n);

    int possible_edges() const { return n * (n - 1) / 2; }
    const std::vector<int>& params_for(LayerType t) const;

    /// Throws SpaceError when a range is empty or the bounds are inconsistent.
    void check() const;

    friend bool operator==(const SearchSpaceDef&, const SearchSpaceDef&) = default;
};

/// Attribute domain every parsed record must respect (the default space).
const SearchSpaceDef& domain_space();

bool contains(const SearchSpaceDef& space, const Architecture& arch);

/// Minimum-parameter architecture: smallest repeats and width, a 3-edge chain
/// v0 -> v1 -> v2 -> v(n-1) of the cheapest node type.
Architecture simplest(const SearchSpaceDef& space);

/// Attribute-uniform random member of the space. Edge sets are drawn by
/// rejection; throws SpaceError after kSampleRetryCap failed draws.
Architecture sample(const SearchSpaceDef& space, std::uint64_t seed);
inline constexpr int kSampleRetryCap = 10000;

inline constexpr std::uint64_t kDefaultEnumerationCap = 1'000'000;

/// Upper bound on the number of members: attribute combinations times the
/// number of edge subsets with an admissible size.
std::uint64_t cardinality_bound(const SearchSpaceDef& space);

/// Calls `visit` once for every member of the space. Refuses (SpaceError
/// naming the bound) when the bound is zero or exceeds `cap`.
void enumerate_restricted(const SearchSpaceDef& space, const std::function<void(const Architecture&)>& visit,
                          std::uint64_t cap = kDefaultEnumerationCap);
std::vector<Architecture> enumerate_restricted(const SearchSpaceDef& space,
                                               std::uint64_t cap = kDefaultEnumerationCap);

nlohmann::ordered_json to_json(const SearchSpaceDef& space);
/// Overrides on top of the default space; unknown keys are rejected.
SearchSpaceDef space_from_json(const nlohmann::json& j);

}  // namespace rnas
