#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rnas/fitness.hpp"

namespace rnas {

struct AnalysisError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Architecture property used to group a history.
struct GroupProperty {
    enum class Kind { VertexCount, EdgeCount, LayerCount };
    Kind kind = Kind::VertexCount;
    LayerType layer = LayerType::Conv;  // LayerCount only

    /// "vertex_count", "edge_count" or "layer_count_<type>".
    std::string name() const;
    friend bool operator==(const GroupProperty&, const GroupProperty&) = default;
};

std::optional<GroupProperty> property_from_string(std::string_view name);
std::vector<GroupProperty> all_properties();

/// Vertex count is the number of active computational nodes; layer counts
/// count active nodes of one type.
int property_value(const Architecture& arch, const GroupProperty& p);

struct StatsRow {
    std::string property;
    int key = 0;
    std::uint64_t count = 0;
    double acc_mean = 0.0;
    double acc_std = 0.0;  // population standard deviation
    double rob_mean = 0.0;
    double rob_std = 0.0;

    friend bool operator==(const StatsRow&, const StatsRow&) = default;
};

/// One row per observed key, ascending. Records without scores (failed
/// evaluations) are skipped. Throws AnalysisError when nothing is left.
std::vector<StatsRow> group_stats(const std::vector<ScoredIndividual>& history, const GroupProperty& p);

/// group_stats for every property, ordered by (property name, key).
std::vector<StatsRow> all_group_stats(const std::vector<ScoredIndividual>& history);

inline constexpr std::string_view kCsvHeader = "property,key,count,acc_mean,acc_std,rob_mean,rob_std";

/// Header plus one line per row, sorted by (property, key). Numbers use the
/// shortest text that parses back to the same double.
std::string emit_csv(std::vector<StatsRow> rows);
std::vector<StatsRow> parse_csv(std::string_view text);
nlohmann::ordered_json emit_json(std::vector<StatsRow> rows);

}  // namespace rnas
