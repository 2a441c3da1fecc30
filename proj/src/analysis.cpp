#include "rnas/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>

namespace rnas {

namespace {

// Welford running mean and variance.
struct Moments {
    std::uint64_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++n;
        const double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }
    double population_std() const { return n ? std::sqrt(std::max(0.0, m2 / static_cast<double>(n))) : 0.0; }
};

std::string format_double(double x) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(std::string_view s, std::size_t line, const char* column) {
    T v{};
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
        throw AnalysisError("csv line " + std::to_string(line) + ": bad " + column + " '" + std::string(s) + "'");
    }
    return v;
}

void sort_rows(std::vector<StatsRow>& rows) {
    std::stable_sort(rows.begin(), rows.end(), [](const StatsRow& a, const StatsRow& b) {
        return a.property != b.property ? a.property < b.property : a.key < b.key;
    });
}

}  // namespace

std::string GroupProperty::name() const {
    switch (kind) {
        case Kind::VertexCount:
            return "vertex_count";
        case Kind::EdgeCount:
            return "edge_count";
        case Kind::LayerCount:
            return "layer_count_" + std::string(to_string(layer));
    }
    return "?";
}

std::optional<GroupProperty> property_from_string(std::string_view name) {
    for (const auto& p : all_properties()) {
        if (p.name() == name) return p;
    }
    return std::nullopt;
}

std::vector<GroupProperty> all_properties() {
    std::vector<GroupProperty> out{{GroupProperty::Kind::VertexCount}, {GroupProperty::Kind::EdgeCount}};
    for (LayerType t : kAllLayerTypes) out.push_back({GroupProperty::Kind::LayerCount, t});
    return out;
}

int property_value(const Architecture& arch, const GroupProperty& p) {
    switch (p.kind) {
        case GroupProperty::Kind::VertexCount:
            return static_cast<int>(active_nodes(arch.block).size());
        case GroupProperty::Kind::EdgeCount:
            return static_cast<int>(arch.block.edges.size());
        case GroupProperty::Kind::LayerCount: {
            int n = 0;
            for (int v : active_nodes(arch.block)) n += arch.block.node(v).layer_type == p.layer;
            return n;
        }
    }
    return 0;
}

std::vector<StatsRow> group_stats(const std::vector<ScoredIndividual>& history, const GroupProperty& p) {
    std::map<int, std::pair<Moments, Moments>> groups;
    for (const auto& ind : history) {
        if (!ind.scores) continue;
        auto& [acc, rob] = groups[property_value(ind.arch, p)];
        acc.add(ind.scores->accuracy_pct);
        rob.add(ind.scores->robustness_pct);
    }
    if (groups.empty()) throw AnalysisError("history has no evaluated records to group");
    std::vector<StatsRow> rows;
    for (const auto& [key, m] : groups) {
        rows.push_back({p.name(), key, m.first.n, m.first.mean, m.first.population_std(), m.second.mean,
                        m.second.population_std()});
    }
    return rows;
}

std::vector<StatsRow> all_group_stats(const std::vector<ScoredIndividual>& history) {
    std::vector<StatsRow> rows;
    for (const auto& p : all_properties()) {
        auto part = group_stats(history, p);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    sort_rows(rows);
    return rows;
}

std::string emit_csv(std::vector<StatsRow> rows) {
    sort_rows(rows);
    std::string out(kCsvHeader);
    out += '\n';
    for (const auto& r : rows) {
        out += r.property + ',' + std::to_string(r.key) + ',' + std::to_string(r.count) + ',' +
               format_double(r.acc_mean) + ',' + format_double(r.acc_std) + ',' + format_double(r.rob_mean) + ',' +
               format_double(r.rob_std) + '\n';
    }
    return out;
}

std::vector<StatsRow> parse_csv(std::string_view text) {
    std::vector<StatsRow> rows;
    std::size_t line_no = 0;
    std::size_t offset = 0;
    while (offset < text.size()) {
        const std::size_t eol = std::min(text.find('\n', offset), text.size());
        std::string_view line = text.substr(offset, eol - offset);
        offset = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line_no == 1) {
            if (line != kCsvHeader) throw AnalysisError("csv: unexpected header '" + std::string(line) + "'");
            continue;
        }
        if (line.empty()) continue;
        std::vector<std::string_view> cells;
        std::size_t start = 0;
        for (std::size_t comma; (comma = line.find(',', start)) != std::string_view::npos; start = comma + 1) {
            cells.push_back(line.substr(start, comma - start));
        }
        cells.push_back(line.substr(start));
        if (cells.size() != 7) throw AnalysisError("csv line " + std::to_string(line_no) + ": expected 7 columns");
        StatsRow r;
        r.property = std::string(cells[0]);
        r.key = parse_number<int>(cells[1], line_no, "key");
        r.count = parse_number<std::uint64_t>(cells[2], line_no, "count");
        r.acc_mean = parse_number<double>(cells[3], line_no, "acc_mean");
        r.acc_std = parse_number<double>(cells[4], line_no, "acc_std");
        r.rob_mean = parse_number<double>(cells[5], line_no, "rob_mean");
        r.rob_std = parse_number<double>(cells[6], line_no, "rob_std");
        rows.push_back(std::move(r));
    }
    if (line_no == 0) throw AnalysisError("csv: missing header");
    return rows;
}

nlohmann::ordered_json emit_json(std::vector<StatsRow> rows) {
    sort_rows(rows);
    auto out = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        out.push_back({{"property", r.property}, {"key", r.key}, {"count", r.count}, {"acc_mean", r.acc_mean},
                       {"acc_std", r.acc_std}, {"rob_mean", r.rob_mean}, {"rob_std", r.rob_std}});
    }
    return out;
}

}  // namespace rnas
