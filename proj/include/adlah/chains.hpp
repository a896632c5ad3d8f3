#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adlah/errors.hpp"
#include "adlah/events.hpp"

namespace adlah {

// ---------------------------------------------------------------------------
// Canonical attack chains
// ---------------------------------------------------------------------------

struct GraphEdge {
    int from = 0;
    int to = 0;
    std::string label;  // "next" (temporal) or "uses" (resource)

    bool operator==(const GraphEdge&) const = default;
};

// Labeled directed multigraph; node identity is the label.
struct ChainGraph {
    std::vector<std::string> nodes;
    std::vector<GraphEdge> edges;

    int find_node(const std::string& label) const {
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (nodes[i] == label) return int(i);
        return -1;
    }
    int add_node(const std::string& label) {
        const int idx = find_node(label);
        if (idx >= 0) return idx;
        nodes.push_back(label);
        return int(nodes.size()) - 1;
    }
};

struct CanonicalChain {
    std::vector<std::string> tokens;
    ChainGraph graph;
    std::vector<std::string> source_sessions;
};

inline constexpr const char* kLoopMarker = "<loop>";

namespace detail {

inline const std::regex& re_url() {
    static const std::regex re(R"((https?|ftp)://[^\s]+)");
    return re;
}
inline const std::regex& re_ipv4() {
    static const std::regex re(R"(\b(\d{1,3}\.){3}\d{1,3}\b)");
    return re;
}
inline const std::regex& re_hex() {
    static const std::regex re(R"(\b[0-9a-f]{8,}\b)");
    return re;
}
inline const std::regex& re_home() {
    static const std::regex re(R"((/home/[^/\s]+|/root\b))");
    return re;
}
inline const std::regex& re_pid() {
    static const std::regex re(R"(\bpid[=\s]?\d+\b|\[\d+\])");
    return re;
}
inline const std::regex& re_epoch() {
    static const std::regex re(R"(\b\d{10,}\b)");
    return re;
}
inline const std::regex& re_spaces() {
    static const std::regex re(R"(\s+)");
    return re;
}

}  // namespace detail

// Lowercases, strips transient markers (PIDs, epoch timestamps) and masks
// variables: URLs -> <url>, IPv4 literals -> <ip>, long hex runs -> <hex>,
// user directories -> <home>. Already-masked classes are left alone, so the
// normalization is idempotent.
inline std::string normalize_command(const std::string& command) {
    std::string s;
    s.reserve(command.size());
    for (char c : command) s += char(std::tolower(static_cast<unsigned char>(c)));
    s = std::regex_replace(s, detail::re_url(), "<url>");
    s = std::regex_replace(s, detail::re_pid(), " ");
    s = std::regex_replace(s, detail::re_epoch(), " ");
    s = std::regex_replace(s, detail::re_ipv4(), "<ip>");
    s = std::regex_replace(s, detail::re_hex(), "<hex>");
    s = std::regex_replace(s, detail::re_home(), "<home>");
    s = std::regex_replace(s, detail::re_spaces(), " ");
    while (!s.empty() && s.front() == ' ') s.erase(s.begin());
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s;
}

// Sequencing passes: loops of period <= 3 repeated >= 3 times collapse to one
// cycle plus a marker; remaining consecutive duplicates (retries) merge.
inline std::vector<std::string> canonicalize_tokens(const std::vector<std::string>& raw) {
    std::vector<std::string> tokens;
    tokens.reserve(raw.size());
    for (const auto& cmd : raw) {
        std::string t = normalize_command(cmd);
        if (!t.empty()) tokens.push_back(std::move(t));
    }

    // loop compression (smallest period wins)
    std::vector<std::string> compressed;
    std::size_t i = 0;
    while (i < tokens.size()) {
        bool looped = false;
        for (std::size_t p = 1; p <= 3 && !looped; ++p) {
            if (i + p > tokens.size()) break;
            std::size_t reps = 1;
            while (i + (reps + 1) * p <= tokens.size()) {
                bool same = true;
                for (std::size_t k = 0; k < p; ++k)
                    if (tokens[i + k] != tokens[i + reps * p + k]) {
                        same = false;
                        break;
                    }
                if (!same) break;
                ++reps;
            }
            if (reps >= 3) {
                for (std::size_t k = 0; k < p; ++k) compressed.push_back(tokens[i + k]);
                compressed.push_back(kLoopMarker);
                i += reps * p;
                looped = true;
            }
        }
        if (!looped) compressed.push_back(tokens[i++]);
    }

    // retry merge
    std::vector<std::string> merged;
    for (auto& t : compressed)
        if (merged.empty() || merged.back() != t) merged.push_back(std::move(t));
    return merged;
}

// Multigraph over token and resource labels: a temporal edge per consecutive
// token pair, plus one "uses" edge from each token node to every masked
// resource class it mentions.
inline ChainGraph build_chain_graph(const std::vector<std::string>& tokens) {
    ChainGraph g;
    static const char* kResources[] = {"<url>", "<ip>", "<hex>", "<home>"};
    for (const auto& t : tokens) g.add_node(t);
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i)
        g.edges.push_back({g.find_node(tokens[i]), g.find_node(tokens[i + 1]), "next"});
    std::set<std::pair<int, int>> resource_edges;
    for (const auto& t : tokens) {
        const int from = g.find_node(t);
        for (const char* res : kResources) {
            if (t.find(res) == std::string::npos) continue;
            const int to = g.add_node(res);
            if (resource_edges.insert({from, to}).second)
                g.edges.push_back({from, to, "uses"});
        }
    }
    return g;
}

// Full canonicalization of one pod session.
inline CanonicalChain canonicalize(const std::vector<InteractionLog>& logs) {
    if (logs.empty()) throw ValidationError("canonicalize: empty interaction log list");
    for (std::size_t i = 1; i < logs.size(); ++i)
        if (logs[i].timestamp < logs[i - 1].timestamp)
            throw ValidationError("canonicalize: logs not time-ordered");
    std::vector<std::string> raw;
    raw.reserve(logs.size());
    for (const auto& log : logs) raw.push_back(log.command);
    CanonicalChain chain;
    chain.tokens = canonicalize_tokens(raw);
    chain.graph = build_chain_graph(chain.tokens);
    return chain;
}

// ---------------------------------------------------------------------------
// Distances
// ---------------------------------------------------------------------------

// Alignment distance over token sequences with unit substitution/indel costs
// (equal tokens align for free).
inline double sequence_distance(const std::vector<std::string>& a,
                                const std::vector<std::string>& b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<double> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = double(j);
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = double(i);
        for (std::size_t j = 1; j <= m; ++j) {
            const double sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0.0 : 1.0);
            cur[j] = std::min({sub, prev[j] + 1.0, cur[j - 1] + 1.0});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

inline constexpr int kGedMaxNodes = 25;

namespace detail {

// Multiset delta between two edge-label lists: relabels pair up, the excess
// is insert/delete. Cost = max(|A|,|B|) - |A intersect B|.
inline int edge_label_delta(std::vector<std::string> a, std::vector<std::string> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<std::string> common;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    return int(std::max(a.size(), b.size()) - common.size());
}

// labels of edges u->v
inline std::vector<std::string> edge_labels(const ChainGraph& g, int u, int v) {
    std::vector<std::string> out;
    for (const auto& e : g.edges)
        if (e.from == u && e.to == v) out.push_back(e.label);
    return out;
}

struct GedSearch {
    const ChainGraph& g1;
    const ChainGraph& g2;
    int n1, n2;
    std::vector<int> assign;       // g1 node -> g2 node or -1 (delete)
    std::vector<bool> used2;
    double best = std::numeric_limits<double>::infinity();

    GedSearch(const ChainGraph& a, const ChainGraph& b)
        : g1(a), g2(b), n1(int(a.nodes.size())), n2(int(b.nodes.size())),
          assign(n1, -2), used2(n2, false) {}

    double pair_edge_cost(int u, int v) const {
        // u is the node being assigned; v its image (or -1). Edge costs
        // against every previously assigned node, both directions, plus
        // self-loops on u itself.
        double cost = 0.0;
        {
            const auto self1 = edge_labels(g1, u, u);
            if (v >= 0)
                cost += edge_label_delta(self1, edge_labels(g2, v, v));
            else
                cost += double(self1.size());
        }
        for (int w = 0; w < n1; ++w) {
            if (assign[w] == -2 || w == u) continue;
            const int wv = assign[w];
            for (auto [x, y] : {std::pair{u, w}, std::pair{w, u}}) {
                const auto labels1 = edge_labels(g1, x, y);
                if (v >= 0 && wv >= 0) {
                    const int ix = (x == u) ? v : wv;
                    const int iy = (y == u) ? v : wv;
                    cost += edge_label_delta(labels1, edge_labels(g2, ix, iy));
                } else {
                    cost += double(labels1.size());  // endpoint deleted
                }
            }
        }
        return cost;
    }

    // Admissible remainder bound: matching the remaining label multisets
    // costs at least max(r1, r2) - |intersection|.
    double lower_bound(int depth) const {
        std::vector<std::string> rem1, rem2;
        for (int u = depth; u < n1; ++u) rem1.push_back(g1.nodes[u]);
        for (int v = 0; v < n2; ++v)
            if (!used2[v]) rem2.push_back(g2.nodes[v]);
        std::sort(rem1.begin(), rem1.end());
        std::sort(rem2.begin(), rem2.end());
        std::vector<std::string> common;
        std::set_intersection(rem1.begin(), rem1.end(), rem2.begin(), rem2.end(),
                              std::back_inserter(common));
        return double(std::max(rem1.size(), rem2.size()) - common.size());
    }

    double finish_cost() const {
        // unmatched g2 nodes are insertions, as is any g2 edge with an
        // endpoint outside the mapping image
        double cost = 0.0;
        for (int v = 0; v < n2; ++v)
            if (!used2[v]) cost += 1.0;
        for (const auto& e : g2.edges)
            if (!used2[e.from] || !used2[e.to]) cost += 1.0;
        return cost;
    }

    void dfs(int depth, double cost) {
        if (cost + lower_bound(depth) >= best) return;
        if (depth == n1) {
            const double total = cost + finish_cost();
            best = std::min(best, total);
            return;
        }
        for (int v = 0; v < n2; ++v) {
            if (used2[v]) continue;
            const double node_cost = g1.nodes[depth] == g2.nodes[v] ? 0.0 : 1.0;
            assign[depth] = v;
            used2[v] = true;
            dfs(depth + 1, cost + node_cost + pair_edge_cost(depth, v));
            used2[v] = false;
            assign[depth] = -2;
        }
        assign[depth] = -1;  // delete
        dfs(depth + 1, cost + 1.0 + pair_edge_cost(depth, -1));
        assign[depth] = -2;
    }
};

}  // namespace detail

// Exact graph edit distance with unit node/edge insert/delete/relabel costs,
// computed by branch-and-bound over node mappings. Canonical chains at desk
// scale stay small; anything larger is refused rather than approximated.
inline double graph_edit_distance(const ChainGraph& a, const ChainGraph& b) {
    if (int(a.nodes.size()) > kGedMaxNodes || int(b.nodes.size()) > kGedMaxNodes)
        throw ValidationError("graph_edit_distance: graph too large for exact GED (>" +
                              std::to_string(kGedMaxNodes) + " nodes)");
    detail::GedSearch search(a, b);
    search.dfs(0, 0.0);
    return search.best;
}

struct ChainDistance {
    double seq = 0.0;
    double graph = 0.0;
};

inline ChainDistance chain_similarity(const CanonicalChain& a, const CanonicalChain& b) {
    return {sequence_distance(a.tokens, b.tokens), graph_edit_distance(a.graph, b.graph)};
}

// ---------------------------------------------------------------------------
// Versioning
// ---------------------------------------------------------------------------

struct VersionTuple {
    int major = 1;
    int minor = 0;
    int patch = 0;

    bool operator==(const VersionTuple&) const = default;
    std::string str() const {
        return std::to_string(major) + "." + std::to_string(minor) + "." +
               std::to_string(patch);
    }
};

enum class BumpKind { none, patch, minor, major };

struct ChainStoreConfig {
    double eps = 3.0;          // join radius on seq + graph_weight * graph
    std::size_t min_pts = 3;   // promotion support
    SimTime min_span = 0;      // promotion temporal span
    double t_major = 4.0;      // graph-edit units
    double t_minor = 2.0;      // sequence-alignment units
    double graph_weight = 1.0;
    std::size_t max_representatives = 5;

    void validate() const {
        if (eps < 0.0 || t_major < 0.0 || t_minor < 0.0 || graph_weight < 0.0)
            throw ConfigError("chains: thresholds must be non-negative");
        if (min_pts < 1) throw ConfigError("chains.min_pts must be >= 1");
        if (max_representatives < 1) throw ConfigError("chains.max_representatives must be >= 1");
    }
};

struct Family {
    std::string family_id;  // set on promotion
    bool promoted = false;
    std::vector<CanonicalChain> representatives;
    std::uint64_t member_count = 0;
    SimTime first_seen = 0;
    SimTime last_seen = 0;
    std::map<std::string, std::uint64_t> proto_counts;
    std::map<int, std::uint64_t> port_counts;
    std::string vector_label;    // first weaponization step (verb)
    std::string platform = "unknown";
    VersionTuple version;

    std::string dominant_proto() const {
        std::string best = "TCP";
        std::uint64_t n = 0;
        for (const auto& [proto, count] : proto_counts)
            if (count > n || (count == n && proto < best)) {
                best = proto;
                n = count;
            }
        return best;
    }
};

// Exact name grammar; throws on characters outside the component alphabets.
inline std::string format_name(const std::string& family, const std::string& proto,
                               const std::string& vector, const std::string& platform,
                               const VersionTuple& v) {
    auto check = [](const std::string& s, const std::string& allowed, const char* what) {
        if (s.empty()) throw ValidationError(std::string("name: empty ") + what);
        for (char c : s)
            if (allowed.find(c) == std::string::npos)
                throw ValidationError(std::string("name: invalid character in ") + what +
                                      ": '" + s + "'");
    };
    check(family, "abcdefghijklmnopqrstuvwxyz0123456789", "family");
    check(proto, "ABCDEFGHIJKLMNOPQRSTUVWXYZ", "proto");
    check(vector, "abcdefghijklmnopqrstuvwxyz0123456789-", "vector");
    check(platform, "abcdefghijklmnopqrstuvwxyz0123456789-", "platform");
    return "ADLAH.BOT." + family + "." + proto + "." + vector + "." + platform + ":" + v.str();
}

inline std::string format_name(const Family& f) {
    return format_name(f.family_id, f.dominant_proto(), f.vector_label, f.platform, f.version);
}

struct ParsedName {
    std::string family, proto, vector, platform;
    VersionTuple version;
};

inline ParsedName parse_name(const std::string& name) {
    static const std::regex re(
        R"(^ADLAH\.BOT\.([a-z0-9]+)\.([A-Z]+)\.([a-z0-9-]+)\.([a-z0-9-]+):(\d+)\.(\d+)\.(\d+)$)");
    std::smatch m;
    if (!std::regex_match(name, m, re))
        throw ValidationError("name does not match the ADLAH.BOT grammar: " + name);
    ParsedName p;
    p.family = m[1];
    p.proto = m[2];
    p.vector = m[3];
    p.platform = m[4];
    p.version = {std::stoi(m[5]), std::stoi(m[6]), std::stoi(m[7])};
    return p;
}

// Compare against the nearest representative and bump per the three-tier
// scheme; MAJOR resets minor and patch, MINOR resets patch.
inline BumpKind assign_version(const CanonicalChain& chain, Family& family,
                               const ChainStoreConfig& cfg) {
    if (!family.promoted)
        throw ValidationError("assign_version: family is not promoted");
    double best_combined = std::numeric_limits<double>::infinity();
    ChainDistance nearest;
    for (const auto& rep : family.representatives) {
        const ChainDistance d = chain_similarity(chain, rep);
        const double combined = d.seq + cfg.graph_weight * d.graph;
        if (combined < best_combined) {
            best_combined = combined;
            nearest = d;
        }
    }
    BumpKind bump = BumpKind::none;
    if (nearest.graph >= cfg.t_major) {
        ++family.version.major;
        family.version.minor = 0;
        family.version.patch = 0;
        bump = BumpKind::major;
    } else if (nearest.seq >= cfg.t_minor) {
        ++family.version.minor;
        family.version.patch = 0;
        bump = BumpKind::minor;
    } else if (nearest.seq > 0.0 || nearest.graph > 0.0) {
        ++family.version.patch;
        bump = BumpKind::patch;
    }
    // exact duplicates add nothing; changed chains join the representative set
    if (bump != BumpKind::none) {
        family.representatives.push_back(chain);
        if (family.representatives.size() > cfg.max_representatives)
            family.representatives.erase(family.representatives.begin());
    }
    return bump;
}

// Longest common token subsequence, folded pairwise across representatives
// (exact for two; near-identical representatives keep the fold tight).
inline std::vector<std::string> common_subsequence(
    const std::vector<CanonicalChain>& representatives) {
    if (representatives.empty()) return {};
    std::vector<std::string> acc = representatives.front().tokens;
    for (std::size_t r = 1; r < representatives.size(); ++r) {
        const auto& b = representatives[r].tokens;
        const std::size_t n = acc.size(), m = b.size();
        std::vector<std::vector<int>> dp(n + 1, std::vector<int>(m + 1, 0));
        for (std::size_t i = 1; i <= n; ++i)
            for (std::size_t j = 1; j <= m; ++j)
                dp[i][j] = acc[i - 1] == b[j - 1] ? dp[i - 1][j - 1] + 1
                                                  : std::max(dp[i - 1][j], dp[i][j - 1]);
        std::vector<std::string> lcs;
        std::size_t i = n, j = m;
        while (i > 0 && j > 0) {
            if (acc[i - 1] == b[j - 1]) {
                lcs.push_back(acc[i - 1]);
                --i;
                --j;
            } else if (dp[i - 1][j] >= dp[i][j - 1]) {
                --i;
            } else {
                --j;
            }
        }
        std::reverse(lcs.begin(), lcs.end());
        acc = std::move(lcs);
        if (acc.empty()) break;
    }
    return acc;
}

struct SignatureRecord {
    std::string name;
    std::string family_id;
    std::string version;
    std::vector<std::string> rule;  // common token subsequence
    std::string proto;
    std::vector<int> port_hints;
    bool warning = false;  // empty rule

    nlohmann::json to_json() const {
        return nlohmann::json{{"name", name},       {"family", family_id},
                              {"version", version}, {"rule", rule},
                              {"proto", proto},     {"port_hints", port_hints},
                              {"warning", warning}};
    }
};

// ---------------------------------------------------------------------------
// Incremental family store (representative-linkage clustering)
// ---------------------------------------------------------------------------

class ChainStore {
  public:
    explicit ChainStore(ChainStoreConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

    struct AssignResult {
        bool outlier = false;       // provisional, unpromoted
        bool promoted_now = false;
        std::size_t cluster_index = 0;
        BumpKind bump = BumpKind::none;
        std::string family_id;      // empty while provisional
        VersionTuple version;
    };

    // Incremental density rule: the chain joins the nearest cluster whose
    // closest representative is within eps (combined distance); otherwise it
    // seeds a new provisional cluster. Provisional clusters promote to
    // families once support (member count, temporal span) clears thresholds.
    AssignResult add_chain(const CanonicalChain& chain, SimTime seen_at,
                           const std::string& proto_hint, int port_hint) {
        AssignResult res;
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t i = 0; i < clusters_.size(); ++i) {
            for (const auto& rep : clusters_[i].representatives) {
                const ChainDistance d = chain_similarity(chain, rep);
                const double combined = d.seq + cfg_.graph_weight * d.graph;
                if (combined < best) {
                    best = combined;
                    best_idx = i;
                }
            }
        }

        if (best <= cfg_.eps && !clusters_.empty()) {
            Family& fam = clusters_[best_idx];
            ++fam.member_count;
            fam.last_seen = std::max(fam.last_seen, seen_at);
            ++fam.proto_counts[proto_hint];
            ++fam.port_counts[port_hint];
            res.cluster_index = best_idx;
            if (fam.promoted) {
                res.bump = assign_version(chain, fam, cfg_);
            } else {
                fam.representatives.push_back(chain);
                if (fam.representatives.size() > cfg_.max_representatives)
                    fam.representatives.erase(fam.representatives.begin());
                if (fam.member_count >= cfg_.min_pts &&
                    fam.last_seen - fam.first_seen >= cfg_.min_span) {
                    promote(fam);
                    res.promoted_now = true;
                }
            }
            res.outlier = !fam.promoted;
            res.family_id = fam.family_id;
            res.version = fam.version;
            return res;
        }

        Family fam;
        fam.member_count = 1;
        fam.first_seen = fam.last_seen = seen_at;
        fam.representatives.push_back(chain);
        ++fam.proto_counts[proto_hint];
        ++fam.port_counts[port_hint];
        if (cfg_.min_pts == 1) promote(fam);
        res.outlier = !fam.promoted;
        res.promoted_now = fam.promoted;
        res.cluster_index = clusters_.size();
        res.family_id = fam.family_id;
        res.version = fam.version;
        clusters_.push_back(std::move(fam));
        return res;
    }

    const std::vector<Family>& clusters() const { return clusters_; }

    std::vector<const Family*> families() const {
        std::vector<const Family*> out;
        for (const auto& c : clusters_)
            if (c.promoted) out.push_back(&c);
        return out;
    }

    SignatureRecord export_signature(const Family& family) const {
        if (!family.promoted)
            throw ValidationError("export_signature: family is not promoted");
        SignatureRecord sig;
        sig.name = format_name(family);
        sig.family_id = family.family_id;
        sig.version = family.version.str();
        sig.rule = common_subsequence(family.representatives);
        sig.proto = family.dominant_proto();
        for (const auto& [port, count] : family.port_counts) sig.port_hints.push_back(port);
        sig.warning = sig.rule.empty();
        return sig;
    }

    // --- persistence -----------------------------------------------------//

    nlohmann::json to_json() const {
        nlohmann::json clusters = nlohmann::json::array();
        for (const auto& c : clusters_) {
            nlohmann::json reps = nlohmann::json::array();
            for (const auto& r : c.representatives)
                reps.push_back(nlohmann::json{{"tokens", r.tokens},
                                              {"sessions", r.source_sessions}});
            clusters.push_back(nlohmann::json{{"family_id", c.family_id},
                                              {"promoted", c.promoted},
                                              {"member_count", c.member_count},
                                              {"first_seen", c.first_seen},
                                              {"last_seen", c.last_seen},
                                              {"proto_counts", c.proto_counts},
                                              {"port_counts", port_counts_json(c)},
                                              {"vector", c.vector_label},
                                              {"platform", c.platform},
                                              {"representatives", reps},
                                              {"version", {{"major", c.version.major},
                                                           {"minor", c.version.minor},
                                                           {"patch", c.version.patch}}}});
        }
        return nlohmann::json{{"schema_version", 1},
                              {"clusters", clusters},
                              {"name_counters", name_counters_}};
    }

    static ChainStore from_json(const nlohmann::json& j, ChainStoreConfig cfg = {}) {
        if (!j.contains("schema_version") || j.at("schema_version").get<int>() != 1)
            throw IoError("family store: unsupported schema_version");
        ChainStore store(cfg);
        for (const auto& jc : j.at("clusters")) {
            Family c;
            c.family_id = jc.at("family_id").get<std::string>();
            c.promoted = jc.at("promoted").get<bool>();
            c.member_count = jc.at("member_count").get<std::uint64_t>();
            c.first_seen = jc.at("first_seen").get<SimTime>();
            c.last_seen = jc.at("last_seen").get<SimTime>();
            for (const auto& [proto, count] : jc.at("proto_counts").items())
                c.proto_counts[proto] = count.get<std::uint64_t>();
            for (const auto& [port, count] : jc.at("port_counts").items())
                c.port_counts[std::stoi(port)] = count.get<std::uint64_t>();
            c.vector_label = jc.at("vector").get<std::string>();
            c.platform = jc.at("platform").get<std::string>();
            c.version = {jc.at("version").at("major").get<int>(),
                         jc.at("version").at("minor").get<int>(),
                         jc.at("version").at("patch").get<int>()};
            for (const auto& jr : jc.at("representatives")) {
                CanonicalChain chain;
                chain.tokens = jr.at("tokens").get<std::vector<std::string>>();
                chain.source_sessions = jr.at("sessions").get<std::vector<std::string>>();
                chain.graph = build_chain_graph(chain.tokens);
                c.representatives.push_back(std::move(chain));
            }
            store.clusters_.push_back(std::move(c));
        }
        for (const auto& [verb, n] : j.at("name_counters").items())
            store.name_counters_[verb] = n.get<int>();
        return store;
    }

  private:
    static nlohmann::json port_counts_json(const Family& c) {
        nlohmann::json out = nlohmann::json::object();
        for (const auto& [port, count] : c.port_counts) out[std::to_string(port)] = count;
        return out;
    }

    static std::string first_verb(const std::string& token) {
        std::string verb;
        for (char ch : token) {
            if (ch == ' ') break;
            if ((ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9')) verb += ch;
        }
        return verb.empty() ? "cmd" : verb;
    }

    void promote(Family& fam) {
        fam.promoted = true;
        fam.version = VersionTuple{1, 0, 0};

        // id from the most frequent first token's verb plus a counter
        std::map<std::string, std::uint64_t> first_tokens;
        for (const auto& rep : fam.representatives)
            if (!rep.tokens.empty()) ++first_tokens[rep.tokens.front()];
        std::string dominant;
        std::uint64_t n = 0;
        for (const auto& [tok, count] : first_tokens)
            if (count > n || (count == n && tok < dominant)) {
                dominant = tok;
                n = count;
            }
        const std::string verb = first_verb(dominant);
        const int counter = ++name_counters_[verb];
        fam.family_id = verb + "kit" + std::to_string(counter);
        fam.vector_label = verb;
        fam.platform = infer_platform(fam);
    }

    static std::string infer_platform(const Family& fam) {
        bool arm = false, linux_marker = false, windows_marker = false;
        for (const auto& rep : fam.representatives)
            for (const auto& t : rep.tokens) {
                if (t.find("windows") != std::string::npos ||
                    t.find("powershell") != std::string::npos)
                    windows_marker = true;
                if (t.find("arm") != std::string::npos) arm = true;
                if (t.find("linux") != std::string::npos ||
                    t.find("busybox") != std::string::npos ||
                    t.find("uname") != std::string::npos)
                    linux_marker = true;
            }
        if (windows_marker) return "windows";
        if (arm) return "linux-arm";
        if (linux_marker) return "linux";
        return "unknown";
    }

    ChainStoreConfig cfg_;
    std::vector<Family> clusters_;
    std::map<std::string, int> name_counters_;
};

}  // namespace adlah
