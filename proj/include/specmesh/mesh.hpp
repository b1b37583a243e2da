#pragma once

#include "specmesh/core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace specmesh {

// Triangle mesh: raw geometry signal plus indexed connectivity.
struct Mesh {
    Points vertices;  // n x 3
    Faces faces;      // n_f x 3, 0-based

    Eigen::Index vertex_count() const { return vertices.rows(); }
    Eigen::Index face_count() const { return faces.rows(); }

    void validate() const {
        require(vertex_count() >= 3, "mesh must have at least 3 vertices");
        require(face_count() >= 1, "mesh must have at least one face");
        const int n = static_cast<int>(vertex_count());
        for (Eigen::Index f = 0; f < faces.rows(); ++f) {
            const int a = faces(f, 0), b = faces(f, 1), c = faces(f, 2);
            if (a < 0 || b < 0 || c < 0 || a >= n || b >= n || c >= n)
                throw InvalidArgument("face " + std::to_string(f) + " references vertex out of range");
            if (a == b || b == c || a == c)
                throw InvalidArgument("face " + std::to_string(f) + " is degenerate (repeated vertex index)");
        }
    }
};

// Undirected adjacency derived from the face list; lists sorted ascending.
struct EdgeSet {
    std::vector<std::vector<int>> neighbors;

    int vertex_count() const { return static_cast<int>(neighbors.size()); }
    int degree(int v) const { return static_cast<int>(neighbors[v].size()); }
    std::size_t edge_count() const {
        std::size_t twice = 0;
        for (const auto& list : neighbors) twice += list.size();
        return twice / 2;
    }
};

inline EdgeSet build_edges(const Mesh& mesh) {
    EdgeSet edges;
    edges.neighbors.assign(mesh.vertex_count(), {});
    auto link = [&](int a, int b) {
        edges.neighbors[a].push_back(b);
        edges.neighbors[b].push_back(a);
    };
    for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
        const int a = mesh.faces(f, 0), b = mesh.faces(f, 1), c = mesh.faces(f, 2);
        link(a, b);
        link(b, c);
        link(c, a);
    }
    for (auto& list : edges.neighbors) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
    }
    return edges;
}

inline double mean_edge_length(const Mesh& mesh, const EdgeSet& edges) {
    double total = 0.0;
    std::size_t count = 0;
    for (int i = 0; i < edges.vertex_count(); ++i) {
        for (int j : edges.neighbors[i]) {
            if (j <= i) continue;  // each undirected edge once
            total += (mesh.vertices.row(i) - mesh.vertices.row(j)).norm();
            ++count;
        }
    }
    return count == 0 ? 0.0 : total / static_cast<double>(count);
}

// Per-face centroid, outward unit normal and area. Zero-area faces get a
// zero normal and are listed in `degenerate` so filters can skip them.
struct FaceGeometry {
    Points centroids;
    Points normals;
    Eigen::VectorXd areas;
    std::vector<int> degenerate;
};

inline FaceGeometry face_geometry(const Mesh& mesh) {
    const Eigen::Index nf = mesh.face_count();
    FaceGeometry geo;
    geo.centroids.resize(nf, 3);
    geo.normals.resize(nf, 3);
    geo.areas.resize(nf);
    for (Eigen::Index f = 0; f < nf; ++f) {
        const Eigen::Vector3d a = mesh.vertices.row(mesh.faces(f, 0));
        const Eigen::Vector3d b = mesh.vertices.row(mesh.faces(f, 1));
        const Eigen::Vector3d c = mesh.vertices.row(mesh.faces(f, 2));
        geo.centroids.row(f) = ((a + b + c) / 3.0).transpose();
        const Eigen::Vector3d cross = (b - a).cross(c - a);
        const double norm = cross.norm();
        geo.areas(f) = 0.5 * norm;
        if (norm > 0.0) {
            geo.normals.row(f) = (cross / norm).transpose();
        } else {
            geo.normals.row(f).setZero();
            geo.degenerate.push_back(static_cast<int>(f));
        }
    }
    return geo;
}

// Perturbs every coordinate by i.i.d. N(0, (sigma * mean edge length)^2).
// Sigma is dimensionless so the same value is comparable across model scales.
inline Mesh add_gaussian_noise(const Mesh& mesh, double sigma, std::uint64_t seed) {
    require(sigma >= 0.0, "noise sigma must be nonnegative");
    Mesh out = mesh;
    if (sigma == 0.0) return out;
    const double scale = sigma * mean_edge_length(mesh, build_edges(mesh));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, scale);
    for (Eigen::Index i = 0; i < out.vertices.rows(); ++i)
        for (int a = 0; a < 3; ++a) out.vertices(i, a) += gauss(rng);
    return out;
}

// ---------------------------------------------------------------------------
// OBJ / OFF text formats

enum class MeshFormat { Obj, Off };

inline MeshFormat format_from_path(const std::string& path) {
    auto ext = std::filesystem::path(path).extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (ext == ".obj") return MeshFormat::Obj;
    if (ext == ".off") return MeshFormat::Off;
    throw InvalidArgument("cannot deduce mesh format from extension '" + ext + "' (use .obj or .off)");
}

namespace detail {

[[noreturn]] inline void parse_fail(const std::string& path, int line, const std::string& what) {
    throw ParseError(path + ":" + std::to_string(line) + ": " + what);
}

inline Mesh finalize_parsed(const std::string& path, std::vector<Eigen::Vector3d>& vs,
                            std::vector<Eigen::Vector3i>& fs, int line) {
    if (vs.size() < 3 || fs.empty())
        parse_fail(path, line, "mesh needs at least 3 vertices and 1 face");
    Mesh mesh;
    mesh.vertices.resize(static_cast<Eigen::Index>(vs.size()), 3);
    for (std::size_t i = 0; i < vs.size(); ++i) mesh.vertices.row(static_cast<Eigen::Index>(i)) = vs[i];
    mesh.faces.resize(static_cast<Eigen::Index>(fs.size()), 3);
    for (std::size_t i = 0; i < fs.size(); ++i) mesh.faces.row(static_cast<Eigen::Index>(i)) = fs[i];
    mesh.validate();
    return mesh;
}

inline Mesh load_obj(const std::string& path, std::istream& in) {
    std::vector<Eigen::Vector3d> vs;
    std::vector<Eigen::Vector3i> fs;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            Eigen::Vector3d v;
            if (!(ss >> v.x() >> v.y() >> v.z())) parse_fail(path, lineno, "malformed vertex line");
            vs.push_back(v);
        } else if (tag == "f") {
            std::vector<long> idx;
            std::string tok;
            while (ss >> tok) {
                // "i", "i/t", "i/t/n", "i//n" — geometry index is the first field
                std::size_t slash = tok.find('/');
                try {
                    idx.push_back(std::stol(tok.substr(0, slash)));
                } catch (const std::exception&) {
                    parse_fail(path, lineno, "malformed face index '" + tok + "'");
                }
            }
            if (idx.size() != 3)
                parse_fail(path, lineno, "only triangle faces are supported (got " +
                                             std::to_string(idx.size()) + " indices)");
            Eigen::Vector3i f;
            for (int k = 0; k < 3; ++k) {
                long v = idx[k];
                if (v < 0) v = static_cast<long>(vs.size()) + v + 1;  // OBJ relative indexing
                if (v < 1 || v > static_cast<long>(vs.size()))
                    parse_fail(path, lineno, "face index out of range");
                f[k] = static_cast<int>(v - 1);
            }
            fs.push_back(f);
        }
        // other tags (vn, vt, usemtl, ...) are ignored
    }
    return finalize_parsed(path, vs, fs, lineno);
}

inline Mesh load_off(const std::string& path, std::istream& in) {
    auto next_content_line = [&](std::string& line, int& lineno) -> bool {
        while (std::getline(in, line)) {
            ++lineno;
            std::size_t pos = line.find_first_not_of(" \t\r");
            if (pos == std::string::npos || line[pos] == '#') continue;
            return true;
        }
        return false;
    };
    std::string line;
    int lineno = 0;
    if (!next_content_line(line, lineno)) parse_fail(path, lineno, "empty OFF file");
    std::istringstream header(line);
    std::string magic;
    header >> magic;
    if (magic != "OFF") parse_fail(path, lineno, "missing OFF header");

    long nv = -1, nf = -1, ne = 0;
    // counts may share the header line or follow it
    if (!(header >> nv >> nf >> ne)) {
        if (!next_content_line(line, lineno)) parse_fail(path, lineno, "missing OFF counts");
        std::istringstream counts(line);
        if (!(counts >> nv >> nf >> ne)) parse_fail(path, lineno, "malformed OFF counts");
    }
    if (nv < 0 || nf < 0) parse_fail(path, lineno, "negative OFF counts");

    std::vector<Eigen::Vector3d> vs;
    vs.reserve(static_cast<std::size_t>(nv));
    for (long i = 0; i < nv; ++i) {
        if (!next_content_line(line, lineno)) parse_fail(path, lineno, "unexpected end of vertex list");
        std::istringstream ss(line);
        Eigen::Vector3d v;
        if (!(ss >> v.x() >> v.y() >> v.z())) parse_fail(path, lineno, "malformed vertex line");
        vs.push_back(v);
    }
    std::vector<Eigen::Vector3i> fs;
    fs.reserve(static_cast<std::size_t>(nf));
    for (long i = 0; i < nf; ++i) {
        if (!next_content_line(line, lineno)) parse_fail(path, lineno, "unexpected end of face list");
        std::istringstream ss(line);
        long count = 0;
        if (!(ss >> count)) parse_fail(path, lineno, "malformed face line");
        if (count != 3) parse_fail(path, lineno, "only triangle faces are supported");
        Eigen::Vector3i f;
        for (int k = 0; k < 3; ++k) {
            long v;
            if (!(ss >> v)) parse_fail(path, lineno, "malformed face line");
            if (v < 0 || v >= nv) parse_fail(path, lineno, "face index out of range");
            f[k] = static_cast<int>(v);
        }
        fs.push_back(f);
    }
    return finalize_parsed(path, vs, fs, lineno);
}

}  // namespace detail

inline Mesh load_mesh(const std::string& path, MeshFormat format) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    return format == MeshFormat::Obj ? detail::load_obj(path, in) : detail::load_off(path, in);
}

inline Mesh load_mesh(const std::string& path) { return load_mesh(path, format_from_path(path)); }

inline void save_mesh(const Mesh& mesh, const std::string& path, MeshFormat format) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    out.precision(17);
    if (format == MeshFormat::Obj) {
        for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i)
            out << "v " << mesh.vertices(i, 0) << ' ' << mesh.vertices(i, 1) << ' '
                << mesh.vertices(i, 2) << '\n';
        for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f)
            out << "f " << mesh.faces(f, 0) + 1 << ' ' << mesh.faces(f, 1) + 1 << ' '
                << mesh.faces(f, 2) + 1 << '\n';
    } else {
        out << "OFF\n" << mesh.vertices.rows() << ' ' << mesh.faces.rows() << " 0\n";
        for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i)
            out << mesh.vertices(i, 0) << ' ' << mesh.vertices(i, 1) << ' ' << mesh.vertices(i, 2)
                << '\n';
        for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f)
            out << "3 " << mesh.faces(f, 0) << ' ' << mesh.faces(f, 1) << ' ' << mesh.faces(f, 2)
                << '\n';
    }
    if (!out) throw Error("write failed for '" + path + "'");
}

inline void save_mesh(const Mesh& mesh, const std::string& path) {
    save_mesh(mesh, path, format_from_path(path));
}

}  // namespace specmesh
