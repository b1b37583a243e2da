#pragma once

#include "specmesh/partition.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace specmesh {

enum class Weighting { Binary, InverseSquaredDistance };

// L = D - C with D_ii = |N(i)| (neighbor count, both weightings) and
// C_ij = 1/||v_i - v_j||^2 or 1. With distance weights the row sums are not
// zero; that is the operator as defined, not a bug.
struct Laplacian {
    Eigen::SparseMatrix<double> matrix;
    Weighting weighting = Weighting::InverseSquaredDistance;

    Eigen::Index size() const { return matrix.rows(); }
    double trace() const {
        double t = 0.0;
        for (Eigen::Index i = 0; i < matrix.rows(); ++i) t += matrix.coeff(i, i);
        return t;
    }
};

inline Laplacian build_laplacian(const Submesh& submesh, const Points& mesh_vertices,
                                 Weighting weighting) {
    const int n = submesh.size();
    require(n >= 2, "submesh must have at least 2 vertices");
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(n) * 8);
    for (int i = 0; i < n; ++i) {
        triplets.emplace_back(i, i, static_cast<double>(submesh.local_degrees[i]));
        for (int j : submesh.local_adjacency[i]) {
            double w = 1.0;
            if (weighting == Weighting::InverseSquaredDistance) {
                const double d2 = (mesh_vertices.row(submesh.global_indices[i]) -
                                   mesh_vertices.row(submesh.global_indices[j]))
                                      .squaredNorm();
                if (!(d2 > 0.0) || !std::isfinite(1.0 / d2))
                    throw Error("coincident connected vertices " +
                                std::to_string(submesh.global_indices[i]) + " and " +
                                std::to_string(submesh.global_indices[j]) +
                                " make the distance weight singular");
                w = 1.0 / d2;
            }
            triplets.emplace_back(i, j, -w);
        }
    }
    Laplacian lap;
    lap.weighting = weighting;
    lap.matrix.resize(n, n);
    lap.matrix.setFromTriplets(triplets.begin(), triplets.end());
    return lap;
}

// Flips each column so its largest-magnitude entry is positive (first index
// wins ties); makes eigenvector and QR output bit-stable across runs.
inline void apply_sign_convention(Eigen::MatrixXd& columns) {
    for (Eigen::Index c = 0; c < columns.cols(); ++c) {
        Eigen::Index at = 0;
        double best = -1.0;
        for (Eigen::Index r = 0; r < columns.rows(); ++r) {
            const double mag = std::abs(columns(r, c));
            if (mag > best) {
                best = mag;
                at = r;
            }
        }
        if (columns(at, c) < 0.0) columns.col(c) = -columns.col(c);
    }
}

struct Spectrum {
    Eigen::VectorXd eigenvalues;   // ascending
    Eigen::MatrixXd eigenvectors;  // columns, sign convention applied
};

inline Spectrum dense_eigendecomposition(const Laplacian& laplacian, int dense_limit = 4096) {
    require(laplacian.size() <= dense_limit,
            "submesh size exceeds the dense eigendecomposition limit");
    Eigen::MatrixXd dense(laplacian.matrix);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dense);
    if (solver.info() != Eigen::Success)
        throw Error("dense eigendecomposition failed to converge");
    Spectrum spectrum;
    spectrum.eigenvalues = solver.eigenvalues();
    spectrum.eigenvectors = solver.eigenvectors();
    apply_sign_convention(spectrum.eigenvectors);
    return spectrum;
}

// n_d x c orthonormal subspace basis tracked per submesh.
struct SpectralBasis {
    Eigen::MatrixXd vectors;

    Eigen::Index rows() const { return vectors.rows(); }
    int subspace_size() const { return static_cast<int>(vectors.cols()); }
};

inline SpectralBasis bottom_subspace(const Spectrum& spectrum, int c) {
    require(c >= 1 && c <= spectrum.eigenvectors.cols(), "subspace size out of range");
    return SpectralBasis{spectrum.eigenvectors.leftCols(c)};
}

// Householder QR orthonormalization (thin Q). Throws on rank deficiency.
inline Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& block) {
    const Eigen::Index rows = block.rows(), cols = block.cols();
    require(cols >= 1 && rows >= cols, "block must be tall (rows >= cols >= 1)");
    const double scale = block.norm();
    if (scale == 0.0) throw Error("orthonormalize: block is rank deficient (all zero)");
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(block);
    for (Eigen::Index k = 0; k < cols; ++k)
        if (std::abs(qr.matrixQR()(k, k)) < 1e-13 * scale)
            throw Error("orthonormalize: block is rank deficient at column " + std::to_string(k));
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
    apply_sign_convention(q);
    return q;
}

inline SpectralBasis random_orthonormal_basis(Eigen::Index rows, int c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd block(rows, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) block(i, j) = gauss(rng);
    return SpectralBasis{orthonormalize(block)};
}

// Action of (L + delta I)^-z through a precomputed sparse factorization; the
// dense inverse is never formed.
class ShiftedInverseOperator {
public:
    ShiftedInverseOperator(const Laplacian& laplacian, double delta, int z)
        : shift_(delta), power_(z), size_(laplacian.size()) {
        require(delta > 0.0, "shift delta must be positive");
        require(z >= 1, "power z must be at least 1");
        Eigen::SparseMatrix<double> shifted = laplacian.matrix;
        Eigen::SparseMatrix<double> identity(size_, size_);
        identity.setIdentity();
        shifted += delta * identity;
        solver_ = std::make_shared<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
        solver_->compute(shifted);
        if (solver_->info() != Eigen::Success)
            throw Error("sparse factorization of the shifted Laplacian failed");
    }

    Eigen::Index size() const { return size_; }
    double shift() const { return shift_; }
    int power() const { return power_; }

    // One solve: (L + delta I)^-1 B.
    Eigen::MatrixXd apply_once(const Eigen::MatrixXd& block) const {
        require(block.rows() == size_, "operator/block dimension mismatch");
        return solver_->solve(block);
    }

    // Full R^z action.
    Eigen::MatrixXd apply(const Eigen::MatrixXd& block) const {
        Eigen::MatrixXd out = apply_once(block);
        for (int r = 1; r < power_; ++r) out = solver_->solve(out);
        return out;
    }

    // Leading m x m block of the dense image of R^z (coherence study).
    Eigen::MatrixXd leading_block(Eigen::Index m) const {
        require(m >= 1 && m <= size_, "leading block size out of range");
        Eigen::MatrixXd rhs = Eigen::MatrixXd::Identity(size_, m);
        return apply(rhs).topRows(m);
    }

private:
    std::shared_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> solver_;
    double shift_;
    int power_;
    Eigen::Index size_;
};

// Relative shift keeps conditioning comparable across model scales.
inline double default_shift(const Laplacian& laplacian, double scale = 1e-8) {
    const double mean_diag = laplacian.trace() / static_cast<double>(laplacian.size());
    return std::max(scale * mean_diag, 1e-300);
}

inline ShiftedInverseOperator shifted_inverse(const Laplacian& laplacian, double delta, int z) {
    return ShiftedInverseOperator(laplacian, delta, z);
}

// U(t) = Onorm(R^z U(t-1)), t = 1..t_max. Converges to the eigenvectors of L
// with smallest eigenvalues at rate |(lambda_c + delta)/(lambda_{c+1} + delta)|^z.
inline SpectralBasis orthogonal_iteration(const ShiftedInverseOperator& op,
                                          const SpectralBasis& init, int t_max) {
    require(init.rows() == op.size(), "initial basis does not match the operator size");
    require(t_max >= 0, "t_max must be nonnegative");
    Eigen::MatrixXd u = init.vectors;
    for (int t = 1; t <= t_max; ++t) u = orthonormalize(op.apply(u));
    return SpectralBasis{std::move(u)};
}

// Signed mean residual over the three coordinate axes:
// e = sum_axis (v_axis - U U^T v_axis). Axis components can cancel; this is
// the control signal, not a quality metric.
inline Eigen::VectorXd projection_residual(const SpectralBasis& basis, const Points& coords) {
    require(coords.rows() == basis.rows(), "coordinate/basis dimension mismatch");
    const Eigen::VectorXd summed = coords.rowwise().sum();
    return summed - basis.vectors * (basis.vectors.transpose() * summed);
}

// Per-axis RMS of the projection residual; safe companion for reporting.
inline double projection_residual_rms(const SpectralBasis& basis, const Points& coords) {
    const Points residual = coords - basis.vectors * (basis.vectors.transpose() * coords);
    return std::sqrt(residual.squaredNorm() / static_cast<double>(coords.size()));
}

inline double bounding_box_diagonal(const Points& coords) {
    if (coords.rows() == 0) return 0.0;
    return (coords.colwise().maxCoeff() - coords.colwise().minCoeff()).norm();
}

struct DoiResult {
    SpectralBasis basis;
    bool converged = false;
    double residual = 0.0;  // last ||e(t)||_2 relative to the bbox diagonal
    int iterations = 0;
};

// OI with one-column subspace adjustments: grow by the normalized residual
// while the residual is above eps_high, shrink while below eps_low, stop when
// it lands inside the band or a bound / t_max is hit. Thresholds are relative
// to the submesh bounding-box diagonal.
inline DoiResult dynamic_oi(const ShiftedInverseOperator& op, const SpectralBasis& init,
                            const Points& coords, double eps_low, double eps_high, int c_min,
                            int c_max, int t_max) {
    require(eps_low > 0.0 && eps_low < eps_high, "need 0 < eps_low < eps_high");
    require(c_min >= 1 && c_min <= init.subspace_size() && init.subspace_size() <= c_max,
            "need c_min <= init subspace size <= c_max");
    require(c_max <= op.size(), "c_max cannot exceed the submesh size");
    require(coords.rows() == op.size(), "coordinate/operator dimension mismatch");

    double scale = bounding_box_diagonal(coords);
    if (scale == 0.0) scale = 1.0;

    Eigen::MatrixXd u = init.vectors;
    bool appended_raw = false;  // a raw residual column awaits orthonormalization
    DoiResult result;
    for (int t = 1; t <= t_max; ++t) {
        u = orthonormalize(op.apply(u));  // also realizes a pending append
        appended_raw = false;
        result.iterations = t;

        const SpectralBasis current{u};
        const Eigen::VectorXd e = projection_residual(current, coords);
        result.residual = e.norm() / scale;

        if (result.residual > eps_high) {
            if (u.cols() >= c_max) break;  // bound hit, still above the band
            u.conservativeResize(Eigen::NoChange, u.cols() + 1);
            u.col(u.cols() - 1) = e / e.norm();
            appended_raw = true;
        } else if (result.residual < eps_low) {
            if (u.cols() <= c_min) {
                result.converged = true;  // below the band but quality satisfied
                break;
            }
            u = u.leftCols(u.cols() - 1).eval();
        } else {
            result.converged = true;
            break;
        }
    }
    if (appended_raw) u = orthonormalize(u);
    result.basis = SpectralBasis{std::move(u)};
    return result;
}

// GFT / inverse GFT of a 3-channel vertex signal.
inline Eigen::MatrixX3d gft(const SpectralBasis& basis, const Points& coords) {
    require(coords.rows() == basis.rows(), "coordinate/basis dimension mismatch");
    return basis.vectors.transpose() * coords;
}

inline Points igft(const SpectralBasis& basis, const Eigen::MatrixX3d& coefficients) {
    require(coefficients.rows() == basis.subspace_size(), "coefficient/basis dimension mismatch");
    return basis.vectors * coefficients;
}

// Largest principal angle between two orthonormal column spans of equal shape.
// sin(theta_max) is the top singular value of A - B (B^T A), which stays
// accurate for tiny angles where acos of a near-1 cosine would not.
inline double max_principal_angle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(),
            "principal angles need equally shaped bases");
    const Eigen::MatrixXd residual = a - b * (b.transpose() * a);
    const double s = residual.jacobiSvd().singularValues()(0);
    return std::asin(std::clamp(s, 0.0, 1.0));
}

// ---------------------------------------------------------------------------
// Binary basis dump: magic, version, n_d, c, row-major float64, little endian.

namespace detail {

constexpr char kBasisMagic[8] = {'S', 'M', 'B', 'A', 'S', 'I', 'S', '1'};

inline void put_u64(std::ostream& out, std::uint64_t v) {
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(bytes, 8);
}

inline std::uint64_t get_u64(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}

inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

}  // namespace detail

inline void write_basis(const SpectralBasis& basis, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out.write(detail::kBasisMagic, 8);
    detail::put_u64(out, static_cast<std::uint64_t>(basis.rows()));
    detail::put_u64(out, static_cast<std::uint64_t>(basis.subspace_size()));
    for (Eigen::Index r = 0; r < basis.rows(); ++r)
        for (Eigen::Index c = 0; c < basis.vectors.cols(); ++c)
            detail::put_f64(out, basis.vectors(r, c));
    if (!out) throw Error("write failed for '" + path + "'");
}

inline SpectralBasis read_basis(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || !std::equal(magic, magic + 8, detail::kBasisMagic))
        throw ParseError(path + ": not a basis dump");
    const auto rows = static_cast<Eigen::Index>(detail::get_u64(in));
    const auto cols = static_cast<Eigen::Index>(detail::get_u64(in));
    if (!in || rows < 1 || cols < 1 || cols > rows) throw ParseError(path + ": bad basis header");
    SpectralBasis basis;
    basis.vectors.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) basis.vectors(r, c) = detail::get_f64(in);
    if (!in) throw ParseError(path + ": truncated basis dump");
    return basis;
}

}  // namespace specmesh
