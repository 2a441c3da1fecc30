#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <set>

#include "rnas/arch.hpp"
#include "rnas/hash.hpp"
#include "rnas/search_space.hpp"
#include "test_util.hpp"

namespace rnas {
namespace {

using testing::conv;
using testing::make_arch;

bool contains_text(const std::vector<std::string>& lines, const std::string& needle) {
    return std::any_of(lines.begin(), lines.end(), [&](const std::string& s) { return s.find(needle) != s.npos; });
}

TEST(Validate, MinimalChainIsValid) {
    const auto r = validate(make_arch({{0, 1}, {1, 2}, {2, 5}}), SearchSpaceDef{});
    EXPECT_TRUE(r.ok);
    EXPECT_TRUE(r.violations.empty());
}

TEST(Validate, TwoEdgesViolatesLowerBound) {
    const auto r = validate(make_arch({{0, 1}, {1, 5}}), SearchSpaceDef{});
    EXPECT_FALSE(r.ok);
    EXPECT_TRUE(contains_text(r.violations, "edge count below 3"));
}

TEST(Validate, DisconnectedComponentIsOnlyAWarning) {
    const auto r = validate(make_arch({{0, 1}, {1, 5}, {2, 3}}), SearchSpaceDef{});
    EXPECT_TRUE(r.ok);
    EXPECT_TRUE(contains_text(r.warnings, "node 2 inactive"));
    EXPECT_TRUE(contains_text(r.warnings, "node 3 inactive"));
}

TEST(Validate, ReportsEachStructuralProblem) {
    Architecture a = make_arch({{0, 1}, {1, 1}, {1, 2}, {1, 2}, {2, 7}});
    a.repeats = 9;
    const auto r = validate(a, SearchSpaceDef{});
    EXPECT_FALSE(r.ok);
    EXPECT_TRUE(contains_text(r.violations, "repeats 9 outside {3..8}"));
    EXPECT_TRUE(contains_text(r.violations, "violates i < j"));
    EXPECT_TRUE(contains_text(r.violations, "duplicate edge (1,2)"));
    EXPECT_TRUE(contains_text(r.violations, "outside 0..5"));
    EXPECT_TRUE(contains_text(r.violations, "no directed path"));
}

TEST(Validate, TooManyEdges) {
    std::vector<Edge> all;
    for (int i = 0; i < 6; ++i)
        for (int j = i + 1; j < 6; ++j) all.push_back({i, j});
    all.resize(13);
    const auto r = validate(make_arch(all), SearchSpaceDef{});
    EXPECT_TRUE(contains_text(r.violations, "edge count above 12 (has 13)"));
}

TEST(Validate, AttentionHeadsMustDivideWidth) {
    // Every width in the default range is divisible by every head count, so
    // use a custom space to reach the check.
    SearchSpaceDef s;
    s.output_widths = {72};
    Architecture a = make_arch({{0, 1}, {1, 2}, {2, 5}});
    for (auto& n : a.block.nodes) n = {LayerType::Attn, 16, 72, InputMode::Add, Activation::None};
    EXPECT_TRUE(contains_text(validate(a, s).violations, "not divisible by 16 heads"));
}

TEST(ActiveNodes, SpecExamples) {
    EXPECT_EQ(active_nodes(make_arch({{0, 1}, {1, 5}}).block), (std::vector<int>{1}));
    EXPECT_EQ(active_nodes(make_arch({{0, 1}, {1, 2}, {2, 5}, {0, 3}, {3, 5}}).block), (std::vector<int>{1, 2, 3}));
    EXPECT_EQ(active_nodes(make_arch({{0, 1}, {1, 5}, {2, 3}}).block), (std::vector<int>{1}));
}

// Brute force: a vertex is active iff some explicit v0 -> sink path visits it.
std::set<int> active_by_paths(const BlockGraph& b) {
    std::set<int> out;
    std::vector<int> path{0};
    std::function<void(int)> walk = [&](int v) {
        if (v == b.n - 1) {
            for (int x : path)
                if (x != 0 && x != b.n - 1) out.insert(x);
            return;
        }
        for (const Edge& e : b.edges) {
            if (e.from == v) {
                path.push_back(e.to);
                walk(e.to);
                path.pop_back();
            }
        }
    };
    walk(0);
    return out;
}

TEST(ActiveNodes, MatchesPathEnumerationOnEverySmallDag) {
    for (int n = 4; n <= 6; ++n) {
        std::vector<Edge> possible;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) possible.push_back({i, j});
        BlockGraph empty;
        empty.n = n;
        for (int v = 1; v < n - 1; ++v) empty.nodes.push_back(conv(1, 128));
        for (std::uint32_t mask = 0; mask < (1u << possible.size()); ++mask) {
            BlockGraph b = empty;
            for (std::size_t k = 0; k < possible.size(); ++k)
                if (mask & (1u << k)) b.edges.push_back(possible[k]);
            const auto got = active_nodes(b);
            const auto want = active_by_paths(b);
            ASSERT_EQ(std::set<int>(got.begin(), got.end()), want) << "n=" << n << " mask=" << mask;
        }
    }
}

TEST(Params, NodeFormulas) {
    // Single node v1 on the chain v0 -> v1 -> v5, with v5's adapter absent
    // when v1's width equals the hidden width.
    auto single = [](NodeSpec node, int hidden) {
        Architecture a = make_arch({{0, 1}, {1, 5}, {0, 5}}, 3, hidden);
        a.block.node(1) = node;
        a.block.output_node.input_mode = InputMode::Add;
        return a;
    };
    const ModelShapeConfig shape;
    // Conv k=3, 128 -> 256: 3*128*256 + 256.
    {
        Architecture a = single(conv(3, 256), 128);
        const auto p = count_params_breakdown(a, shape);
        const std::uint64_t adapter = 256 * 128 + 128;
        EXPECT_EQ(p.per_block, 98'560u + adapter);
    }
    // GLU 128 -> 128: 2*(128*128 + 128).
    {
        Architecture a = single({LayerType::GLU, kGluParam, 128, InputMode::Add, Activation::None}, 128);
        EXPECT_EQ(count_params_breakdown(a, shape).per_block, 33'024u);
    }
    // SepConv k=5, 128 -> 128: 5*128 + 128*128 + 128.
    {
        Architecture a = single({LayerType::SepConv, 5, 128, InputMode::Add, Activation::None}, 128);
        EXPECT_EQ(count_params_breakdown(a, shape).per_block, 640u + 16'384u + 128u);
    }
    // Attn 128 -> 128: 3*(128*128 + 128) + 128*128 + 128.
    {
        Architecture a = single({LayerType::Attn, 8, 128, InputMode::Add, Activation::None}, 128);
        EXPECT_EQ(count_params_breakdown(a, shape).per_block, 4u * (16'384u + 128u));
    }
}

TEST(Params, ClassifierAndEmbedding) {
    const auto p = count_params_breakdown(make_arch({{0, 1}, {1, 2}, {2, 5}}), ModelShapeConfig{});
    EXPECT_EQ(p.classifier, 258u);
    EXPECT_EQ(p.embedding, (30522u + 128u + 2u) * 128u);
    EXPECT_EQ(p.blocks, 3 * p.per_block);
    EXPECT_EQ(p.total, p.embedding + p.blocks + p.classifier);
}

TEST(Params, ConcatMergeWidensInput) {
    Architecture a = make_arch({{0, 1}, {0, 2}, {1, 2}, {2, 5}});
    a.block.node(2).input_mode = InputMode::Concat;
    EXPECT_EQ(merged_input_width(a, 2), 256);
    a.block.node(2).input_mode = InputMode::Mul;
    a.block.node(1).output_width = 512;
    EXPECT_EQ(merged_input_width(a, 2), 512);
}

TEST(Params, InactivePredecessorsDoNotWidenInputs) {
    // v3 feeds v4 but is unreachable from v0.
    Architecture a = make_arch({{0, 4}, {3, 4}, {4, 5}});
    a.block.node(4).input_mode = InputMode::Concat;
    EXPECT_EQ(merged_input_width(a, 4), 128);
}

TEST(Params, OverflowIsReported) {
    ModelShapeConfig shape;
    shape.vocab_size = std::int64_t{1} << 62;
    EXPECT_THROW(count_params(make_arch({{0, 1}, {1, 2}, {2, 5}}), shape), ParamOverflow);
}

TEST(Params, MatchesFrozenFrameworkCounts) {
    const auto fixtures = nlohmann::json::parse(testing::read_file(testing::fixture_path("param_fixtures.json")));
    const auto counts = nlohmann::json::parse(testing::read_file(testing::fixture_path("param_counts.json")));
    ASSERT_GE(fixtures.size(), 10u);
    for (const auto& f : fixtures) {
        const std::string name = f.at("name");
        const auto p = count_params_breakdown(architecture_from_json(f.at("arch")), ModelShapeConfig{});
        const auto& want = counts.at(name);
        EXPECT_EQ(p.total, want.at("total").get<std::uint64_t>()) << name;
        EXPECT_EQ(p.blocks, want.at("blocks").get<std::uint64_t>()) << name;
        EXPECT_EQ(p.embedding, want.at("embedding").get<std::uint64_t>()) << name;
        EXPECT_EQ(p.classifier, want.at("classifier").get<std::uint64_t>()) << name;
    }
}

TEST(Serialization, RoundTripIsIdentity) {
    const Architecture a = make_arch({{0, 1}, {1, 2}, {2, 5}});
    EXPECT_EQ(parse_architecture(serialize(a)), a);
}

TEST(Serialization, EdgeInsertionOrderDoesNotMatter) {
    const Architecture a = make_arch({{0, 1}, {1, 2}, {2, 5}, {0, 3}, {3, 5}});
    const Architecture b = make_arch({{3, 5}, {2, 5}, {0, 3}, {1, 2}, {0, 1}});
    EXPECT_EQ(serialize(a), serialize(b));
    EXPECT_EQ(canonical_hash(a), canonical_hash(b));
}

TEST(Serialization, RecordShape) {
    const Architecture a = make_arch({{1, 2}, {0, 1}, {2, 5}});
    const std::string s = serialize(a);
    EXPECT_EQ(s.rfind(R"({"repeats":3,"hidden_width":128,"block":{"n":6,"nodes":[{"layer_type":"conv",)", 0), 0u);
    EXPECT_NE(s.find(R"("edges":[[0,1],[1,2],[2,5]])"), s.npos);
}

TEST(Serialization, RangeErrorsNameTheRange) {
    std::string s = serialize(make_arch({{0, 1}, {1, 2}, {2, 5}}));
    s.replace(s.find("\"repeats\":3"), 11, "\"repeats\":9");
    try {
        parse_architecture(s);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("{3..8}"), std::string::npos) << e.what();
        EXPECT_EQ(e.path, "/repeats");
    }
}

TEST(Serialization, RejectsUnknownAndMissingKeys) {
    const std::string s = serialize(make_arch({{0, 1}, {1, 2}, {2, 5}}));
    auto j = nlohmann::json::parse(s);
    j["extra"] = 1;
    EXPECT_THROW(architecture_from_json(j), ParseError);
    j = nlohmann::json::parse(s);
    j["block"].erase("edges");
    EXPECT_THROW(architecture_from_json(j), ParseError);
    j = nlohmann::json::parse(s);
    j["block"]["nodes"][0]["layer_type"] = "lstm";
    EXPECT_THROW(architecture_from_json(j), ParseError);
}

TEST(Serialization, SyntaxErrorsReportPosition) {
    try {
        parse_architecture(R"({"repeats": 3, "hidden_width": })");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_GT(e.position, 0u);
    }
}

TEST(Digest, SensitiveToEveryAttribute) {
    const Architecture a = make_arch({{0, 1}, {1, 2}, {2, 5}});
    Architecture b = a;
    b.block.node(3).activation = Activation::Swish;
    EXPECT_NE(serialize(a), serialize(b));
    EXPECT_NE(canonical_hash(a), canonical_hash(b));
    EXPECT_EQ(canonical_hash(a), canonical_hash(parse_architecture(serialize(a))));
    EXPECT_EQ(canonical_hash(a).hex().size(), 16u);
}

TEST(Digest, IsFnv1aOfCanonicalRecord) {
    const Architecture a = make_arch({{0, 1}, {1, 2}, {2, 5}});
    EXPECT_EQ(canonical_hash(a).value, fnv1a(serialize(a)));
    // Published FNV-1a 64 test vectors.
    EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(fnv1a("foobar"), 0x85944171f73967e8ULL);
}

}  // namespace
}  // namespace rnas
