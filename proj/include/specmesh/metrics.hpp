#pragma once

#include "specmesh/spectral.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace specmesh {

constexpr double kNmsveFloorDb = -200.0;

struct NmsveTerms {
    double geometric = 0.0;  // ||v - v~||_2 over the stacked 3n vector
    double laplacian = 0.0;  // ||GL(v) - GL(v~)||_2, GL weights from the original mesh
    double linear() const { return geometric + laplacian; }
};

namespace detail {

// GL(v)_i = v_i - weighted neighbor mean with weights 1/d_ij; d_ij always
// measured on the reference coordinates so both meshes share the operator.
inline Points inverse_distance_smoothing_difference(const Points& coords,
                                                    const Points& reference_coords,
                                                    const EdgeSet& edges) {
    Points out(coords.rows(), 3);
    for (int i = 0; i < edges.vertex_count(); ++i) {
        if (edges.neighbors[i].empty()) {
            out.row(i) = coords.row(i);  // isolated vertex: GL term is the vertex itself
            continue;
        }
        Eigen::RowVector3d acc = Eigen::RowVector3d::Zero();
        double wsum = 0.0;
        for (int j : edges.neighbors[i]) {
            const double d = (reference_coords.row(i) - reference_coords.row(j)).norm();
            const double w = 1.0 / d;
            acc += w * coords.row(j);
            wsum += w;
        }
        out.row(i) = coords.row(i) - acc / wsum;
    }
    return out;
}

}  // namespace detail

inline NmsveTerms nmsve_terms(const Mesh& original, const Points& reconstructed) {
    require(original.vertex_count() == reconstructed.rows(),
            "nmsve needs equal vertex counts");
    const EdgeSet edges = build_edges(original);
    NmsveTerms terms;
    terms.geometric = (original.vertices - reconstructed).norm();
    const Points gl_original =
        detail::inverse_distance_smoothing_difference(original.vertices, original.vertices, edges);
    const Points gl_reconstructed =
        detail::inverse_distance_smoothing_difference(reconstructed, original.vertices, edges);
    terms.laplacian = (gl_original - gl_reconstructed).norm();
    return terms;
}

inline double nmsve_linear(const Mesh& original, const Points& reconstructed) {
    return nmsve_terms(original, reconstructed).linear() /
           (2.0 * static_cast<double>(original.vertex_count()));
}

// Normalized mean square visual error in dB, floored at -200 dB.
inline double nmsve(const Mesh& original, const Points& reconstructed) {
    const double value = nmsve_linear(original, reconstructed);
    if (value < 1e-20) return kNmsveFloorDb;
    return 10.0 * std::log10(value);
}

inline double nmsve(const Mesh& original, const Mesh& reconstructed) {
    return nmsve(original, reconstructed.vertices);
}

// Mean normal difference: mean of 1 - <n_ref, n_test>; 0 for identical
// fields, 2 for antipodal ones.
inline double mnd(const Points& reference_normals, const Points& test_normals) {
    require(reference_normals.rows() == test_normals.rows(), "mnd needs equal face counts");
    require(reference_normals.rows() > 0, "mnd needs at least one face");
    double total = 0.0;
    for (Eigen::Index f = 0; f < reference_normals.rows(); ++f) {
        const double dot = std::clamp(reference_normals.row(f).dot(test_normals.row(f)), -1.0, 1.0);
        total += 1.0 - dot;
    }
    return total / static_cast<double>(reference_normals.rows());
}

// Face angle difference theta in degrees, averaged over all faces.
inline double mean_angle_theta(const Points& reference_normals, const Points& test_normals) {
    require(reference_normals.rows() == test_normals.rows(),
            "mean_angle_theta needs equal face counts");
    require(reference_normals.rows() > 0, "mean_angle_theta needs at least one face");
    double total = 0.0;
    for (Eigen::Index f = 0; f < reference_normals.rows(); ++f) {
        const double dot = std::clamp(reference_normals.row(f).dot(test_normals.row(f)), -1.0, 1.0);
        total += std::acos(dot);
    }
    return total / static_cast<double>(reference_normals.rows()) * 180.0 / std::numbers::pi;
}

// ---------------------------------------------------------------------------
// Laplacian coherence study (operator images)

// Leading m x m block of a submesh's shifted-inverse image, the "fingerprint"
// compared across submeshes and models.
inline Eigen::MatrixXd operator_image(const ShiftedInverseOperator& op, Eigen::Index size = 100) {
    return op.leading_block(size);
}

inline Eigen::MatrixXd coherence_mean_image(const std::vector<Eigen::MatrixXd>& images) {
    require(!images.empty(), "mean image needs at least one operator image");
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(images.front().rows(), images.front().cols());
    for (const auto& image : images) {
        require(image.rows() == mean.rows() && image.cols() == mean.cols(),
                "operator images must share one size");
        mean += image;
    }
    return mean / static_cast<double>(images.size());
}

// Mean elementwise MSE between each image and a reference mean image.
inline double laplacian_coherence_mse(const std::vector<Eigen::MatrixXd>& images,
                                      const Eigen::MatrixXd& reference_mean) {
    require(!images.empty(), "coherence MSE needs at least one operator image");
    double total = 0.0;
    for (const auto& image : images) {
        if (image.rows() != reference_mean.rows() || image.cols() != reference_mean.cols())
            throw InvalidArgument("operator image size does not match the reference mean");
        total += (image - reference_mean).squaredNorm() /
                 static_cast<double>(image.rows() * image.cols());
    }
    return total / static_cast<double>(images.size());
}

// ---------------------------------------------------------------------------
// Boundary vs interior reconstruction error

struct BoundaryErrorStats {
    double interior_std = 0.0;
    std::optional<double> boundary_std;  // absent when no vertex overlaps (k = 1)
};

inline BoundaryErrorStats boundary_error_stats(const Points& original, const Points& reconstructed,
                                               const std::vector<Submesh>& submeshes) {
    require(original.rows() == reconstructed.rows(), "aligned reconstructions required");
    std::vector<int> membership(original.rows(), 0);
    for (const auto& sub : submeshes)
        for (int g : sub.global_indices) ++membership[g];

    auto population_std = [](const std::vector<double>& xs) {
        if (xs.empty()) return 0.0;
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        double var = 0.0;
        for (double x : xs) var += (x - mean) * (x - mean);
        return std::sqrt(var / static_cast<double>(xs.size()));
    };

    std::vector<double> interior, boundary;
    for (Eigen::Index v = 0; v < original.rows(); ++v) {
        const double err = (original.row(v) - reconstructed.row(v)).norm();
        if (membership[v] >= 2)
            boundary.push_back(err);
        else
            interior.push_back(err);
    }
    BoundaryErrorStats stats;
    stats.interior_std = population_std(interior);
    if (!boundary.empty()) stats.boundary_std = population_std(boundary);
    return stats;
}

// ---------------------------------------------------------------------------
// Report / CSV

struct MetricsReport {
    std::string label;
    double nmsve_db = 0.0;
    double mnd_value = 0.0;
    double theta_deg = 0.0;
    std::optional<double> bpv;
    double interior_std = 0.0;
    std::optional<double> boundary_std;
    StageTimings timings;
};

inline std::string metrics_csv_header() {
    return "label,nmsve_db,mnd,theta_deg,bpv,interior_std,boundary_std,"
           "segmentation_s,laplacian_s,factorize_s,basis_s,svd_s,total_basis_s,encode_s";
}

inline std::string metrics_csv_row(const MetricsReport& report) {
    std::ostringstream row;
    row.precision(10);
    auto opt = [](const std::optional<double>& v) {
        if (!v) return std::string();
        std::ostringstream s;
        s.precision(10);
        s << *v;
        return s.str();
    };
    row << report.label << ',' << report.nmsve_db << ',' << report.mnd_value << ','
        << report.theta_deg << ',' << opt(report.bpv) << ',' << report.interior_std << ','
        << opt(report.boundary_std) << ',' << report.timings.get("segmentation") << ','
        << report.timings.get("laplacian") << ',' << report.timings.get("factorize") << ','
        << report.timings.get("basis") << ',' << report.timings.get("svd") << ','
        << report.timings.get("basis_total") << ',' << report.timings.get("encode");
    return row.str();
}

}  // namespace specmesh
