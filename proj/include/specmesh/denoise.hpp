#pragma once

#include "specmesh/metrics.hpp"
#include "specmesh/pipeline.hpp"

#include <cmath>
#include <vector>

namespace specmesh {

struct BilateralParams {
    double sigma_spatial = 0.0;  // 0: mean 1-ring centroid distance of the mesh
    double sigma_range = 0.35;   // unit-sphere distance between normals
    int normal_iterations = 5;
    int vertex_iterations = 10;
    int ring_depth = 1;          // neighborhood = faces sharing >=1 vertex, repeated

    void validate() const {
        require(sigma_spatial >= 0.0, "sigma_spatial must be positive (or 0 for automatic)");
        require(sigma_range > 0.0, "sigma_range must be positive");
        require(normal_iterations > 0 && vertex_iterations > 0 && ring_depth > 0,
                "iteration counts and ring depth must be positive");
    }
};

inline double spatial_kernel(const Eigen::RowVector3d& a, const Eigen::RowVector3d& b,
                             double sigma) {
    return std::exp(-(a - b).squaredNorm() / (2.0 * sigma * sigma));
}

inline double range_kernel(const Eigen::RowVector3d& a, const Eigen::RowVector3d& b,
                           double sigma) {
    return std::exp(-(a - b).squaredNorm() / (2.0 * sigma * sigma));
}

// Faces sharing at least one vertex (self included); `depth` repeats the
// expansion over the same relation.
inline std::vector<std::vector<int>> face_ring_adjacency(const Mesh& mesh, int depth = 1) {
    require(depth >= 1, "ring depth must be at least 1");
    const int nf = static_cast<int>(mesh.face_count());
    std::vector<std::vector<int>> faces_of_vertex(mesh.vertex_count());
    for (int f = 0; f < nf; ++f)
        for (int k = 0; k < 3; ++k) faces_of_vertex[mesh.faces(f, k)].push_back(f);

    std::vector<std::vector<int>> ring(nf);
    for (int f = 0; f < nf; ++f) {
        std::vector<int>& list = ring[f];
        for (int k = 0; k < 3; ++k)
            for (int g : faces_of_vertex[mesh.faces(f, k)]) list.push_back(g);
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
    }
    for (int d = 1; d < depth; ++d) {
        std::vector<std::vector<int>> wider(nf);
        for (int f = 0; f < nf; ++f) {
            std::vector<int>& list = wider[f];
            for (int g : ring[f]) list.insert(list.end(), ring[g].begin(), ring[g].end());
            std::sort(list.begin(), list.end());
            list.erase(std::unique(list.begin(), list.end()), list.end());
        }
        ring = std::move(wider);
    }
    return ring;
}

// Mean centroid distance over adjacent face pairs; the usual spatial scale.
inline double default_sigma_spatial(const FaceGeometry& geometry,
                                    const std::vector<std::vector<int>>& adjacency) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t f = 0; f < adjacency.size(); ++f) {
        for (int g : adjacency[f]) {
            if (g <= static_cast<int>(f)) continue;
            total += (geometry.centroids.row(static_cast<Eigen::Index>(f)) -
                      geometry.centroids.row(g))
                         .norm();
            ++count;
        }
    }
    require(count > 0, "mesh has no adjacent face pairs");
    return total / static_cast<double>(count);
}

// Area- and kernel-weighted normal averaging (Jacobi sweeps over the previous
// iteration's normals). Zero-area faces neither contribute (A_j = 0) nor get
// updated; a degenerate all-zero accumulation keeps the previous normal.
inline Points bilateral_normals(const FaceGeometry& geometry,
                                const std::vector<std::vector<int>>& adjacency,
                                const BilateralParams& params) {
    params.validate();
    const double sigma_s = params.sigma_spatial > 0.0 ? params.sigma_spatial
                                                      : default_sigma_spatial(geometry, adjacency);
    const Eigen::Index nf = geometry.normals.rows();
    require(static_cast<Eigen::Index>(adjacency.size()) == nf,
            "adjacency does not match the face count");

    std::vector<char> degenerate(nf, 0);
    for (int f : geometry.degenerate) degenerate[f] = 1;

    Points normals = geometry.normals;
    for (int pass = 0; pass < params.normal_iterations; ++pass) {
        Points next = normals;
        for (Eigen::Index f = 0; f < nf; ++f) {
            if (degenerate[f]) continue;
            Eigen::RowVector3d acc = Eigen::RowVector3d::Zero();
            for (int g : adjacency[f]) {
                const double area = geometry.areas(g);
                if (area <= 0.0) continue;
                const double ks = spatial_kernel(geometry.centroids.row(f),
                                                 geometry.centroids.row(g), sigma_s);
                const double kr =
                    range_kernel(normals.row(f), normals.row(g), params.sigma_range);
                acc += area * ks * kr * normals.row(g);
            }
            const double norm = acc.norm();
            if (norm > 0.0) next.row(f) = acc / norm;
        }
        normals = std::move(next);
    }
    return normals;
}

// Eq-style displacement energy: sum over faces z and their vertices j of
// |n_z . (m_z - v_j)|^2, with current centroids and fixed target normals.
inline double vertex_update_energy(const Points& vertices, const Faces& faces,
                                   const Points& target_normals) {
    double energy = 0.0;
    for (Eigen::Index f = 0; f < faces.rows(); ++f) {
        const Eigen::RowVector3d centroid = (vertices.row(faces(f, 0)) + vertices.row(faces(f, 1)) +
                                             vertices.row(faces(f, 2))) /
                                            3.0;
        for (int k = 0; k < 3; ++k) {
            const double d = target_normals.row(f).dot(centroid - vertices.row(faces(f, k)));
            energy += d * d;
        }
    }
    return energy;
}

// Iterative vertex repositioning toward the target normal field:
// v_j += (1/|F_j|) sum_{z in F_j} n_z (n_z . (m_z - v_j)), centroids
// recomputed once per pass (Jacobi, deterministic under parallel execution).
inline Mesh update_vertices(const Mesh& mesh, const Points& target_normals, int vertex_iterations) {
    require(target_normals.rows() == mesh.face_count(), "one target normal per face required");
    require(vertex_iterations >= 0, "vertex iterations must be nonnegative");
    std::vector<std::vector<int>> faces_of_vertex(mesh.vertex_count());
    for (Eigen::Index f = 0; f < mesh.face_count(); ++f)
        for (int k = 0; k < 3; ++k) faces_of_vertex[mesh.faces(f, k)].push_back(static_cast<int>(f));

    Mesh out = mesh;
    for (int pass = 0; pass < vertex_iterations; ++pass) {
        Points centroids(mesh.face_count(), 3);
        for (Eigen::Index f = 0; f < mesh.face_count(); ++f)
            centroids.row(f) = (out.vertices.row(mesh.faces(f, 0)) +
                                out.vertices.row(mesh.faces(f, 1)) +
                                out.vertices.row(mesh.faces(f, 2))) /
                               3.0;
        Points next = out.vertices;
        for (Eigen::Index v = 0; v < out.vertices.rows(); ++v) {
            const auto& incident = faces_of_vertex[v];
            if (incident.empty()) continue;
            Eigen::RowVector3d delta = Eigen::RowVector3d::Zero();
            for (int f : incident) {
                const Eigen::RowVector3d normal = target_normals.row(f);
                delta += normal * normal.dot(centroids.row(f) - out.vertices.row(v));
            }
            next.row(v) = out.vertices.row(v) + delta / static_cast<double>(incident.size());
        }
        out.vertices = std::move(next);
    }
    return out;
}

// Two-stage bilateral fine pass: filter face normals, then move vertices.
inline Mesh fine_denoise(const Mesh& mesh, const BilateralParams& params) {
    const FaceGeometry geometry = face_geometry(mesh);
    const auto adjacency = face_ring_adjacency(mesh, params.ring_depth);
    const Points filtered = bilateral_normals(geometry, adjacency, params);
    return update_vertices(mesh, filtered, params.vertex_iterations);
}

struct CoarseResult {
    Mesh mesh;
    BlockBases bases;
};

// Spectral low-pass per block, stitched back with weighted averaging.
// Connectivity is unchanged.
inline CoarseResult coarse_denoise(const Mesh& mesh, const PipelineConfig& config,
                                   AverageMode mode = AverageMode::Weighted) {
    mesh.validate();
    const EdgeSet edges = build_edges(mesh);
    CoarseResult result;
    result.bases = compute_block_bases(mesh, edges, config);
    result.mesh.vertices = coarse_reconstruct_points(mesh, result.bases, mode);
    result.mesh.faces = mesh.faces;
    return result;
}

// ---------------------------------------------------------------------------
// Bilateral filter as a frequency-selective graph transform

struct SpectralIdentityReport {
    double max_deviation = 0.0;            // between filter output and spectral prediction
    Eigen::VectorXd spectral_response;     // samples of 1 - lambda_i, ascending lambda
};

// Verifies D^{1/2} n_hat = U (I - Lambda) U^T D^{1/2} n where n_hat is the
// weight-graph filter output and (U, Lambda) diagonalize the
// symmetric-normalized Laplacian of the weight graph.
inline SpectralIdentityReport bilateral_spectral_identity_check(const Points& normals,
                                                                const Eigen::MatrixXd& weights) {
    const Eigen::Index n = weights.rows();
    require(weights.cols() == n, "weight matrix must be square");
    require(normals.rows() == n, "one normal per graph node required");
    require(n <= 500, "identity check is intended for small graphs (<= 500 faces)");

    const Eigen::VectorXd degree = weights.rowwise().sum();
    for (Eigen::Index i = 0; i < n; ++i)
        require(degree(i) > 0.0, "every node needs positive total weight");
    const Eigen::VectorXd d_sqrt = degree.array().sqrt();
    const Eigen::VectorXd d_inv_sqrt = degree.array().rsqrt();

    // direct filter route
    const Points filtered = degree.asDiagonal().inverse() * (weights * normals);

    // spectral route through the normalized Laplacian
    const Eigen::MatrixXd normalized =
        Eigen::MatrixXd::Identity(n, n) -
        d_inv_sqrt.asDiagonal() * weights * d_inv_sqrt.asDiagonal();
    const Eigen::MatrixXd symmetrized = 0.5 * (normalized + normalized.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetrized);
    if (solver.info() != Eigen::Success) throw Error("normalized Laplacian eigensolve failed");

    const Eigen::VectorXd response = Eigen::VectorXd::Ones(n) - solver.eigenvalues();
    const Points scaled = d_sqrt.asDiagonal() * normals;
    const Points predicted = solver.eigenvectors() * response.asDiagonal() *
                             solver.eigenvectors().transpose() * scaled;
    const Points direct_scaled = d_sqrt.asDiagonal() * filtered;

    SpectralIdentityReport report;
    report.max_deviation = (direct_scaled - predicted).cwiseAbs().maxCoeff();
    report.spectral_response = response;  // indexed by ascending eigenvalue
    return report;
}

// ---------------------------------------------------------------------------
// Dynamic meshes (frame sequences with shared connectivity)

struct DynamicDenoiseResult {
    std::vector<Mesh> frames;
    int basis_blocks_computed = 0;  // total basis computations; equals k
    StageTimings timings;
};

// Bases are computed once, from the first frame, and reused by every frame's
// coarse projection; frames are independent after that stage.
inline DynamicDenoiseResult denoise_dynamic(const std::vector<Mesh>& frames,
                                            const PipelineConfig& config,
                                            AverageMode mode = AverageMode::Weighted) {
    require(!frames.empty(), "dynamic denoising needs at least one frame");
    const Mesh& first = frames.front();
    first.validate();
    for (std::size_t i = 1; i < frames.size(); ++i) {
        const bool same = frames[i].vertex_count() == first.vertex_count() &&
                          frames[i].faces.rows() == first.faces.rows() &&
                          (frames[i].faces.array() == first.faces.array()).all();
        if (!same)
            throw InvalidArgument("frame " + std::to_string(i) +
                                  " does not share the sequence connectivity");
    }

    const EdgeSet edges = build_edges(first);
    Stopwatch basis_clock;
    const BlockBases bases = compute_block_bases(first, edges, config);
    DynamicDenoiseResult result;
    result.timings.merge(bases.timings);
    result.timings.add("shared_basis", basis_clock.seconds());
    result.basis_blocks_computed = static_cast<int>(bases.bases.size());

    Stopwatch frames_clock;
    result.frames.resize(frames.size());
    detail::parallel_for(static_cast<std::int64_t>(frames.size()), config.threads,
                         [&](std::int64_t i) {
                             result.frames[i].vertices =
                                 coarse_reconstruct_points(frames[i], bases, mode);
                             result.frames[i].faces = first.faces;
                         });
    result.timings.add("frames", frames_clock.seconds());
    return result;
}

}  // namespace specmesh
