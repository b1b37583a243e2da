#pragma once

#include "specmesh/spectral.hpp"

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

namespace specmesh {

enum class BasisMode { OI, DOI, SVD };

inline std::string to_string(BasisMode mode) {
    switch (mode) {
        case BasisMode::OI: return "oi";
        case BasisMode::DOI: return "doi";
        case BasisMode::SVD: return "svd";
    }
    return "?";
}

inline BasisMode basis_mode_from_string(const std::string& name) {
    if (name == "oi") return BasisMode::OI;
    if (name == "doi") return BasisMode::DOI;
    if (name == "svd") return BasisMode::SVD;
    throw InvalidArgument("unknown basis mode '" + name + "' (expected oi|doi|svd)");
}

inline std::string to_string(Weighting weighting) {
    return weighting == Weighting::Binary ? "binary" : "distance";
}

inline Weighting weighting_from_string(const std::string& name) {
    if (name == "binary") return Weighting::Binary;
    if (name == "distance") return Weighting::InverseSquaredDistance;
    throw InvalidArgument("unknown weighting '" + name + "' (expected binary|distance)");
}

// Block pipeline parameters: segmentation, subspace tracking and determinism.
struct PipelineConfig {
    int part_count = 8;             // k
    double growth = 1.15;           // overlap factor, n_d = floor(growth * max part)
    BasisMode basis_mode = BasisMode::OI;
    Weighting weighting = Weighting::InverseSquaredDistance;
    int subspace_size = 16;         // fixed c; initial c in DOI mode
    double eps_low = 0.004;         // DOI band, relative to bbox diagonal
    double eps_high = 0.04;
    int c_min = 2;
    int c_max = 0;                  // 0: derived from subspace_size and n_d
    int power = 2;                  // z
    int iterations = 2;             // t_max per OI update
    int initial_iterations = 60;    // cold-start OI when the dense oracle is unavailable
    int doi_iterations = 0;         // 0: derived from the c bounds
    std::uint64_t seed = 1;
    int dense_limit = 4096;
    double shift_scale = 1e-8;      // delta = shift_scale * trace(L)/n_d
    unsigned threads = 0;           // 0: SPECMESH_THREADS or hardware count

    int resolve_c_max(int block_size) const {
        int cm = c_max > 0 ? c_max : std::max(64, 2 * subspace_size);
        return std::min(cm, block_size);
    }
    int resolve_doi_iterations(int resolved_c_max) const {
        if (doi_iterations > 0) return doi_iterations;
        return (resolved_c_max - c_min) + 16;
    }
};

struct BlockStats {
    int subspace_size = 0;
    double residual_rms = 0.0;   // per-axis RMS projection residual
    double doi_residual = 0.0;   // last DOI control residual (relative)
    bool converged = true;
    int oi_iterations = 0;
};

struct BlockBases {
    std::vector<Submesh> submeshes;
    SubmeshOrder order;
    std::vector<SpectralBasis> bases;  // indexed by submesh id
    std::vector<BlockStats> stats;     // indexed by submesh id
    StageTimings timings;
    int block_size = 0;  // n_d

    std::vector<int> sizes_in_order() const {
        std::vector<int> out;
        out.reserve(order.sequence.size());
        for (int id : order.sequence) out.push_back(bases[id].subspace_size());
        return out;
    }
};

// Adjusts a warm-start basis to a new subspace size: shrink keeps the leading
// columns, growth appends seeded pseudorandom columns before
// re-orthonormalization. Deterministic, so encoder and decoder chains agree.
inline SpectralBasis resize_basis(const SpectralBasis& basis, int new_size, std::uint64_t seed) {
    const int old_size = basis.subspace_size();
    if (new_size == old_size) return basis;
    require(new_size >= 1 && new_size <= basis.rows(), "subspace size out of range");
    if (new_size < old_size) return SpectralBasis{basis.vectors.leftCols(new_size)};
    Eigen::MatrixXd grown(basis.rows(), new_size);
    grown.leftCols(old_size) = basis.vectors;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int j = old_size; j < new_size; ++j)
        for (Eigen::Index i = 0; i < basis.rows(); ++i) grown(i, j) = gauss(rng);
    return SpectralBasis{orthonormalize(grown)};
}

namespace detail {

inline SpectralBasis initial_block_basis(const Laplacian& laplacian,
                                         const ShiftedInverseOperator& op, int c,
                                         const PipelineConfig& cfg) {
    if (laplacian.size() <= cfg.dense_limit)
        return bottom_subspace(dense_eigendecomposition(laplacian, cfg.dense_limit), c);
    SpectralBasis cold = random_orthonormal_basis(laplacian.size(), c, cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    return orthogonal_iteration(op, cold, cfg.initial_iterations);
}

}  // namespace detail

// Segmentation shared by every basis mode: partition, overlap, order.
struct Segmentation {
    Partition partition;
    std::vector<Submesh> submeshes;
    SubmeshOrder order;
};

inline Segmentation segment_mesh(const Mesh& mesh, const EdgeSet& edges,
                                 const PipelineConfig& cfg) {
    Segmentation seg;
    seg.partition = partition_mesh(mesh, edges, cfg.part_count, cfg.seed);
    seg.submeshes = expand_overlaps(mesh, edges, seg.partition, cfg.growth);
    seg.order = order_submeshes(seg.submeshes, cfg.seed);
    return seg;
}

// Warm-start chain at externally fixed per-block subspace sizes (given in
// order-sequence position). This is the codec path: it never looks at vertex
// coordinates beyond what the weighting needs, so a decoder replays it
// bit-identically from connectivity alone when the weighting is binary.
inline BlockBases compute_block_bases_fixed_sizes(const Mesh& mesh, const EdgeSet& edges,
                                                  const PipelineConfig& cfg,
                                                  Segmentation segmentation,
                                                  const std::vector<int>& sizes_in_order) {
    BlockBases result;
    result.submeshes = std::move(segmentation.submeshes);
    result.order = std::move(segmentation.order);
    require(sizes_in_order.size() == result.order.sequence.size(),
            "need one subspace size per block");
    const int k = static_cast<int>(result.submeshes.size());
    result.bases.resize(k);
    result.stats.resize(k);
    result.block_size = result.submeshes.empty() ? 0 : result.submeshes.front().size();

    Stopwatch basis_clock;
    SpectralBasis previous;
    for (std::size_t pos = 0; pos < result.order.sequence.size(); ++pos) {
        const int id = result.order.sequence[pos];
        const Submesh& sub = result.submeshes[id];
        const int c = sizes_in_order[pos];
        require(c >= 1 && c <= sub.size(), "subspace size out of range for block");

        Stopwatch lap_clock;
        const Laplacian laplacian = build_laplacian(sub, mesh.vertices, cfg.weighting);
        result.timings.add("laplacian", lap_clock.seconds());

        Stopwatch fac_clock;
        const ShiftedInverseOperator op(laplacian, default_shift(laplacian, cfg.shift_scale),
                                        cfg.power);
        result.timings.add("factorize", fac_clock.seconds());

        Stopwatch oi_clock;
        SpectralBasis basis;
        if (pos == 0) {
            basis = detail::initial_block_basis(laplacian, op, c, cfg);
        } else {
            const SpectralBasis warm = resize_basis(previous, c, cfg.seed + 0x5851f42d4c957f2dULL * pos);
            basis = orthogonal_iteration(op, warm, cfg.iterations);
        }
        result.timings.add("basis", oi_clock.seconds());

        result.stats[id].subspace_size = c;
        result.stats[id].oi_iterations = pos == 0 ? 0 : cfg.iterations;
        result.stats[id].residual_rms =
            projection_residual_rms(basis, sub.local_coords(mesh.vertices));
        previous = basis;
        result.bases[id] = std::move(basis);
    }
    result.timings.add("basis_total", basis_clock.seconds());
    return result;
}

// Per-block subspace bases in submesh order. OI and DOI warm-start each block
// from the previous one; SVD decomposes every block independently.
inline BlockBases compute_block_bases(const Mesh& mesh, const EdgeSet& edges,
                                      const PipelineConfig& cfg) {
    Stopwatch seg_clock;
    Segmentation segmentation = segment_mesh(mesh, edges, cfg);
    const double seg_seconds = seg_clock.seconds();

    BlockBases result;
    const int k = static_cast<int>(segmentation.submeshes.size());

    if (cfg.basis_mode == BasisMode::OI) {
        std::vector<int> sizes(segmentation.order.sequence.size(), cfg.subspace_size);
        result = compute_block_bases_fixed_sizes(mesh, edges, cfg, std::move(segmentation), sizes);
        result.timings.add("segmentation", seg_seconds);
        return result;
    }

    result.submeshes = std::move(segmentation.submeshes);
    result.order = std::move(segmentation.order);
    result.bases.resize(k);
    result.stats.resize(k);
    result.block_size = result.submeshes.empty() ? 0 : result.submeshes.front().size();
    result.timings.add("segmentation", seg_seconds);

    if (cfg.basis_mode == BasisMode::SVD) {
        Stopwatch basis_clock;
        std::vector<std::string> errors(k);
        detail::parallel_for(k, cfg.threads, [&](std::int64_t id) {
            try {
                const Submesh& sub = result.submeshes[id];
                const Laplacian laplacian = build_laplacian(sub, mesh.vertices, cfg.weighting);
                const Spectrum spectrum = dense_eigendecomposition(laplacian, cfg.dense_limit);
                SpectralBasis basis = bottom_subspace(spectrum, cfg.subspace_size);
                result.stats[id].subspace_size = basis.subspace_size();
                result.stats[id].residual_rms =
                    projection_residual_rms(basis, sub.local_coords(mesh.vertices));
                result.bases[id] = std::move(basis);
            } catch (const std::exception& e) {
                errors[id] = e.what();
            }
        });
        for (const auto& err : errors)
            if (!err.empty()) throw Error(err);
        result.timings.add("svd", basis_clock.seconds());
        result.timings.add("basis_total", basis_clock.seconds());
        return result;
    }

    // DOI: sequential chain, subspace size adapts per block.
    Stopwatch basis_clock;
    SpectralBasis previous;
    for (std::size_t pos = 0; pos < result.order.sequence.size(); ++pos) {
        const int id = result.order.sequence[pos];
        const Submesh& sub = result.submeshes[id];
        const int c_max = cfg.resolve_c_max(sub.size());
        const int doi_t_max = cfg.resolve_doi_iterations(c_max);

        Stopwatch lap_clock;
        const Laplacian laplacian = build_laplacian(sub, mesh.vertices, cfg.weighting);
        result.timings.add("laplacian", lap_clock.seconds());

        Stopwatch fac_clock;
        const ShiftedInverseOperator op(laplacian, default_shift(laplacian, cfg.shift_scale),
                                        cfg.power);
        result.timings.add("factorize", fac_clock.seconds());

        Stopwatch oi_clock;
        SpectralBasis init;
        if (pos == 0) {
            const int c0 = std::clamp(cfg.subspace_size, cfg.c_min, c_max);
            init = detail::initial_block_basis(laplacian, op, c0, cfg);
        } else {
            const int c_init = std::clamp(previous.subspace_size(), cfg.c_min, c_max);
            init = resize_basis(previous, c_init, cfg.seed + 0x5851f42d4c957f2dULL * pos);
        }
        DoiResult doi = dynamic_oi(op, init, sub.local_coords(mesh.vertices), cfg.eps_low,
                                   cfg.eps_high, cfg.c_min, c_max, doi_t_max);
        result.timings.add("basis", oi_clock.seconds());

        result.stats[id].subspace_size = doi.basis.subspace_size();
        result.stats[id].doi_residual = doi.residual;
        result.stats[id].converged = doi.converged;
        result.stats[id].oi_iterations = doi.iterations;
        result.stats[id].residual_rms =
            projection_residual_rms(doi.basis, sub.local_coords(mesh.vertices));
        previous = doi.basis;
        result.bases[id] = std::move(doi.basis);
    }
    result.timings.add("basis_total", basis_clock.seconds());
    return result;
}

// Projects every block's coordinates onto its tracked basis.
inline std::vector<Points> project_blocks(const BlockBases& bases, const Points& vertices) {
    std::vector<Points> locals(bases.submeshes.size());
    for (std::size_t id = 0; id < bases.submeshes.size(); ++id) {
        const Points coords = bases.submeshes[id].local_coords(vertices);
        locals[id] = igft(bases.bases[id], gft(bases.bases[id], coords));
    }
    return locals;
}

// Full coarse pass: project per block and stitch back to global coordinates.
inline Points coarse_reconstruct_points(const Mesh& mesh, const BlockBases& bases,
                                        AverageMode mode = AverageMode::Weighted) {
    const std::vector<Points> locals = project_blocks(bases, mesh.vertices);
    return reconstruct_weighted(bases.submeshes, locals, static_cast<int>(mesh.vertex_count()),
                                mode);
}

}  // namespace specmesh
