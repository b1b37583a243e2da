#pragma once

#include "specmesh/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace specmesh {

struct Partition {
    Eigen::VectorXi assignment;  // per-vertex part id in [0, part_count)
    int part_count = 0;

    std::vector<int> part_sizes() const {
        std::vector<int> sizes(part_count, 0);
        for (Eigen::Index i = 0; i < assignment.size(); ++i) ++sizes[assignment(i)];
        return sizes;
    }
};

// Overlapped equal-sized block: global vertex ids, faces fully inside the
// block (reindexed locally), and the adjacency induced on the block by the
// full mesh graph. Local vertex order = ascending global id.
struct Submesh {
    std::vector<int> global_indices;
    Faces local_faces;
    std::vector<std::vector<int>> local_adjacency;
    std::vector<int> local_degrees;

    int size() const { return static_cast<int>(global_indices.size()); }

    Points local_coords(const Points& mesh_vertices) const {
        Points coords(size(), 3);
        for (int i = 0; i < size(); ++i) coords.row(i) = mesh_vertices.row(global_indices[i]);
        return coords;
    }
};

struct SubmeshOrder {
    std::vector<int> sequence;  // permutation of submesh ids
};

enum class AverageMode { Simple, Weighted };

namespace detail {

// Multi-source BFS hop distances; unreachable stays at max().
inline std::vector<int> hop_distances(const EdgeSet& edges, const std::vector<int>& sources) {
    std::vector<int> dist(edges.vertex_count(), std::numeric_limits<int>::max());
    std::deque<int> queue;
    for (int s : sources) {
        dist[s] = 0;
        queue.push_back(s);
    }
    while (!queue.empty()) {
        int v = queue.front();
        queue.pop_front();
        for (int w : edges.neighbors[v]) {
            if (dist[w] != std::numeric_limits<int>::max()) continue;
            dist[w] = dist[v] + 1;
            queue.push_back(w);
        }
    }
    return dist;
}

}  // namespace detail

// Deterministic balanced partition by multi-seed region growing. Seeds come
// from farthest-point sampling on the vertex graph (hop distance), so every
// connected component receives a seed before refinement. Growth always
// extends the currently smallest part, which keeps sizes within the
// ceil(n/k)*1.1 cap and each part connected by construction.
inline Partition partition_mesh(const Mesh& mesh, const EdgeSet& edges, int k, std::uint64_t seed) {
    const int n = static_cast<int>(mesh.vertex_count());
    require(k >= 1 && k <= n / 4, "part count k must satisfy 1 <= k <= n/4");

    std::vector<int> seeds;
    seeds.reserve(k);
    std::mt19937_64 rng(seed);
    seeds.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(n)));
    while (static_cast<int>(seeds.size()) < k) {
        auto dist = detail::hop_distances(edges, seeds);
        int best = -1;
        long long best_dist = -1;
        for (int v = 0; v < n; ++v) {
            long long d = dist[v] == std::numeric_limits<int>::max()
                              ? std::numeric_limits<long long>::max()
                              : dist[v];
            if (d > best_dist) {
                best_dist = d;
                best = v;
            }
        }
        seeds.push_back(best);
    }

    const int cap = static_cast<int>(std::ceil(static_cast<double>(n) / k) * 1.1);
    Partition part;
    part.part_count = k;
    part.assignment = Eigen::VectorXi::Constant(n, -1);

    std::vector<std::deque<int>> frontier(k);
    std::vector<int> sizes(k, 0);
    int assigned = 0;
    for (int p = 0; p < k; ++p) {
        part.assignment(seeds[p]) = p;
        sizes[p] = 1;
        ++assigned;
        frontier[p].push_back(seeds[p]);
    }

    auto pick_part = [&](bool respect_cap) {
        int best = -1;
        for (int p = 0; p < k; ++p) {
            if (frontier[p].empty()) continue;
            if (respect_cap && sizes[p] >= cap) continue;
            if (best == -1 || sizes[p] < sizes[best]) best = p;
        }
        return best;
    };

    while (assigned < n) {
        int p = pick_part(true);
        if (p == -1) p = pick_part(false);  // capped everywhere: coverage wins
        if (p == -1)
            throw InvalidArgument(
                "partition failed: k is incompatible with the mesh connectivity "
                "(a component ended up without a seed)");
        bool grew = false;
        while (!frontier[p].empty() && !grew) {
            int v = frontier[p].front();
            frontier[p].pop_front();
            for (int w : edges.neighbors[v]) {
                if (part.assignment(w) != -1) continue;
                part.assignment(w) = p;
                ++sizes[p];
                ++assigned;
                frontier[p].push_back(w);
                grew = true;
                break;
            }
            if (!grew) continue;
            // v may still have unassigned neighbors; keep it on the frontier
            frontier[p].push_front(v);
        }
    }
    return part;
}

// n_d for an overlapped run; floor matches the reference overlap-size tables.
inline int overlap_target_size(int max_raw_part_size, double growth) {
    require(growth >= 1.0, "overlap growth must be >= 1.0");
    return static_cast<int>(std::floor(growth * max_raw_part_size));
}

namespace detail {

inline Submesh build_submesh(const Mesh& mesh, const EdgeSet& edges, std::vector<int> members) {
    std::sort(members.begin(), members.end());
    Submesh sub;
    sub.global_indices = std::move(members);

    std::vector<int> local_of(mesh.vertex_count(), -1);
    for (int i = 0; i < sub.size(); ++i) local_of[sub.global_indices[i]] = i;

    sub.local_adjacency.resize(sub.size());
    sub.local_degrees.resize(sub.size());
    for (int i = 0; i < sub.size(); ++i) {
        for (int g : edges.neighbors[sub.global_indices[i]]) {
            if (local_of[g] != -1) sub.local_adjacency[i].push_back(local_of[g]);
        }
        sub.local_degrees[i] = static_cast<int>(sub.local_adjacency[i].size());
    }

    std::vector<Eigen::Vector3i> faces;
    for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
        const int a = local_of[mesh.faces(f, 0)];
        const int b = local_of[mesh.faces(f, 1)];
        const int c = local_of[mesh.faces(f, 2)];
        if (a != -1 && b != -1 && c != -1) faces.emplace_back(a, b, c);
    }
    sub.local_faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
    for (std::size_t i = 0; i < faces.size(); ++i)
        sub.local_faces.row(static_cast<Eigen::Index>(i)) = faces[i];
    return sub;
}

}  // namespace detail

// Expands every part to exactly n_d = floor(growth * max raw part size)
// vertices by BFS rings over the part boundary. The last ring is trimmed by
// ascending global id; parts that exhaust their component are padded with the
// smallest unused global ids.
inline std::vector<Submesh> expand_overlaps(const Mesh& mesh, const EdgeSet& edges,
                                            const Partition& partition, double growth) {
    const int n = static_cast<int>(mesh.vertex_count());
    auto sizes = partition.part_sizes();
    for (int p = 0; p < partition.part_count; ++p)
        require(sizes[p] > 0, "partition has an empty part");
    const int max_raw = *std::max_element(sizes.begin(), sizes.end());
    const int target = overlap_target_size(max_raw, growth);
    require(target <= n, "target submesh size exceeds the vertex count");

    std::vector<Submesh> submeshes;
    submeshes.reserve(partition.part_count);
    for (int p = 0; p < partition.part_count; ++p) {
        std::vector<char> member(n, 0);
        std::vector<int> members;
        members.reserve(target);
        for (int v = 0; v < n; ++v) {
            if (partition.assignment(v) == p) {
                member[v] = 1;
                members.push_back(v);
            }
        }
        std::vector<int> ring = members;
        while (static_cast<int>(members.size()) < target) {
            std::vector<int> next;
            for (int v : ring)
                for (int w : edges.neighbors[v])
                    if (!member[w]) {
                        member[w] = 1;  // marks "seen" to dedupe within the ring
                        next.push_back(w);
                    }
            if (next.empty()) break;  // component exhausted
            std::sort(next.begin(), next.end());
            const int room = target - static_cast<int>(members.size());
            if (static_cast<int>(next.size()) > room) next.resize(room);
            members.insert(members.end(), next.begin(), next.end());
            ring = std::move(next);
        }
        // disconnected remainder: pad with smallest unused ids
        for (int v = 0; v < n && static_cast<int>(members.size()) < target; ++v) {
            if (!member[v]) {
                member[v] = 1;
                members.push_back(v);
            }
        }
        submeshes.push_back(detail::build_submesh(mesh, edges, std::move(members)));
    }
    return submeshes;
}

// Seeded initial submesh, then breadth-first over the shared-vertex adjacency
// graph of the submeshes; neighbor ties broken by smallest id. Components
// without a visited submesh are started at their smallest id.
inline SubmeshOrder order_submeshes(const std::vector<Submesh>& submeshes, std::uint64_t seed) {
    require(!submeshes.empty(), "cannot order an empty submesh list");
    const int k = static_cast<int>(submeshes.size());

    int max_vertex = -1;
    for (const auto& sub : submeshes)
        for (int g : sub.global_indices) max_vertex = std::max(max_vertex, g);
    std::vector<std::vector<int>> owners(max_vertex + 1);
    for (int s = 0; s < k; ++s)
        for (int g : submeshes[s].global_indices) owners[g].push_back(s);

    std::vector<std::vector<int>> adjacency(k);
    for (const auto& list : owners)
        for (std::size_t a = 0; a < list.size(); ++a)
            for (std::size_t b = a + 1; b < list.size(); ++b) {
                adjacency[list[a]].push_back(list[b]);
                adjacency[list[b]].push_back(list[a]);
            }
    for (auto& list : adjacency) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
    }

    std::mt19937_64 rng(seed);
    const int initial = static_cast<int>(rng() % static_cast<std::uint64_t>(k));

    SubmeshOrder order;
    order.sequence.reserve(k);
    std::vector<char> visited(k, 0);
    std::deque<int> queue;
    auto visit = [&](int s) {
        visited[s] = 1;
        order.sequence.push_back(s);
        queue.push_back(s);
    };
    visit(initial);
    int next_unvisited = 0;
    while (static_cast<int>(order.sequence.size()) < k) {
        if (queue.empty()) {
            while (visited[next_unvisited]) ++next_unvisited;
            visit(next_unvisited);
            continue;
        }
        int s = queue.front();
        queue.pop_front();
        for (int t : adjacency[s])
            if (!visited[t]) visit(t);
    }
    return order;
}

// Stitches per-submesh reconstructions into global coordinates, Weighted mode
// weighs each copy by the vertex degree inside that submesh.
inline Points reconstruct_weighted(const std::vector<Submesh>& submeshes,
                                   const std::vector<Points>& local_results, int n,
                                   AverageMode mode) {
    require(submeshes.size() == local_results.size(),
            "submesh and result lists must have equal length");
    Points out = Points::Zero(n, 3);
    Eigen::VectorXd weight_sum = Eigen::VectorXd::Zero(n);
    Eigen::VectorXi copies = Eigen::VectorXi::Zero(n);
    Points fallback = Points::Zero(n, 3);  // plain mean, used if all weights are zero

    for (std::size_t s = 0; s < submeshes.size(); ++s) {
        const Submesh& sub = submeshes[s];
        require(local_results[s].rows() == sub.size(),
                "local result size does not match its submesh");
        for (int i = 0; i < sub.size(); ++i) {
            const int g = sub.global_indices[i];
            const double w =
                mode == AverageMode::Weighted ? static_cast<double>(sub.local_degrees[i]) : 1.0;
            out.row(g) += w * local_results[s].row(i);
            weight_sum(g) += w;
            fallback.row(g) += local_results[s].row(i);
            copies(g) += 1;
        }
    }

    std::vector<int> uncovered;
    for (int g = 0; g < n; ++g) {
        if (copies(g) == 0) {
            uncovered.push_back(g);
            continue;
        }
        if (weight_sum(g) > 0.0)
            out.row(g) /= weight_sum(g);
        else
            out.row(g) = fallback.row(g) / static_cast<double>(copies(g));
    }
    if (!uncovered.empty()) {
        std::ostringstream msg;
        msg << "reconstruction is missing " << uncovered.size() << " vertices:";
        for (std::size_t i = 0; i < uncovered.size() && i < 16; ++i) msg << ' ' << uncovered[i];
        if (uncovered.size() > 16) msg << " ...";
        throw InvalidArgument(msg.str());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Partition CSV (vertex_id,part_id) for experiment reproducibility.

inline void save_partition_csv(const Partition& partition, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    out << "vertex_id,part_id\n";
    for (Eigen::Index v = 0; v < partition.assignment.size(); ++v)
        out << v << ',' << partition.assignment(v) << '\n';
}

inline Partition load_partition_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty partition file");
    std::vector<std::pair<long, int>> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        long v;
        int p;
        char comma;
        if (!(ss >> v >> comma >> p) || comma != ',')
            throw ParseError(path + ":" + std::to_string(lineno) + ": malformed row");
        rows.emplace_back(v, p);
    }
    Partition partition;
    partition.assignment = Eigen::VectorXi::Constant(static_cast<Eigen::Index>(rows.size()), -1);
    for (auto [v, p] : rows) {
        if (v < 0 || v >= static_cast<long>(rows.size()))
            throw ParseError(path + ": vertex id out of range");
        partition.assignment(v) = p;
        partition.part_count = std::max(partition.part_count, p + 1);
    }
    return partition;
}

}  // namespace specmesh
