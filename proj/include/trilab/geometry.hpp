#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <optional>

#include "trilab/base.hpp"

namespace trilab::geometry {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Axis-aligned box in R^d.
struct Box {
    VectorXd lo;
    VectorXd hi;

    int dim() const { return static_cast<int>(lo.size()); }
    bool contains(const VectorXd& x, double pad = 0.0) const;
    double volume() const;
    VectorXd center() const { return 0.5 * (lo + hi); }
    VectorXd widths() const { return hi - lo; }
    Box inflated(double pad) const;
};

/// Chart x: U -> U~ under which leaves are the fibers of
/// pi(y) = (y_3, ..., y_n), i.e. the first two chart coordinates move
/// within a leaf and the remaining n-2 identify the leaf.
struct LeafChart {
    std::function<VectorXd(const VectorXd&)> to_chart;
    std::function<VectorXd(const VectorXd&)> from_chart;
};

/// Graph-type hypersurface patch in R^{n+1}: the graphed coordinate sits at
/// graph_axis, the n frequency variables fill the remaining slots in order,
/// and an optional rotation positions the patch in ambient space.
struct HypersurfacePatch {
    int n = 0;
    int graph_axis = 0;  // index in [0, n] of the ambient slot carrying phi
    std::function<double(const VectorXd&)> phase;
    std::function<VectorXd(const VectorXd&)> gradient;
    std::function<MatrixXd(const VectorXd&)> hessian;
    Box domain;
    std::function<bool(const VectorXd&)> membership;  // optional extra predicate
    std::optional<LeafChart> leaf_chart;
    MatrixXd rotation;  // (n+1)x(n+1) orthogonal; identity when absent
    std::string label;

    bool in_domain(const VectorXd& xi) const;

    /// Ambient embedding Sigma(xi) in R^{n+1}.
    VectorXd embed(const VectorXd& xi) const;

    /// Columns are the ambient tangent vectors dSigma/dxi_i.
    MatrixXd tangent_basis(const VectorXd& xi) const;

    /// Leaf identifier pi(x(xi)) in R^{n-2}; requires a leaf chart.
    VectorXd leaf_id(const VectorXd& xi) const;

    /// Projected chart coordinate of xi (the leaf identifier), as used for
    /// packet lattices. Same as leaf_id but without the domain check.
    VectorXd chart_projection(const VectorXd& xi) const;

    bool has_identity_rotation(double tol = 1e-12) const;
};

using PatchPtr = std::shared_ptr<const HypersurfacePatch>;

/// Volume of the m-dimensional parallelepiped spanned by the vectors,
/// computed as sqrt(det(G^T G)).
double gram_volume(const std::vector<VectorXd>& vectors);

/// Unit normal to the patch at xi, in ambient coordinates. The un-rotated
/// normal is (-grad phi, 1)/sqrt(1+|grad phi|^2) with the +1 entry in the
/// graph_axis slot.
VectorXd unit_normal(const HypersurfacePatch& patch, const VectorXd& xi);

/// Derivative of the unit normal field: columns are dN/dxi_i (ambient).
MatrixXd normal_derivative(const HypersurfacePatch& patch, const VectorXd& xi);

struct ShapeOperatorResult {
    MatrixXd weingarten;    // n x n map in the graph chart basis
    VectorXd eigenvalues;   // principal curvatures, sorted by |.| ascending
    MatrixXd eigenvectors;  // chart coordinates, one column per eigenvalue
};

/// Weingarten map from the first/second fundamental forms of the graph,
/// solved as the symmetric generalized eigenproblem II v = lambda I v.
ShapeOperatorResult shape_operator(const HypersurfacePatch& patch, const VectorXd& xi);

/// Shape operator applied to an ambient tangent vector, returned as an
/// ambient vector. Only the magnitude is meaningful to callers.
VectorXd shape_apply(const HypersurfacePatch& patch, const VectorXd& xi, const VectorXd& tangent);

/// Ambient pushforwards of the first two chart directions (the leaf tangents),
/// normalized. Requires a leaf chart; differentiates the inverse chart.
std::array<VectorXd, 2> leaf_tangents(const HypersurfacePatch& patch, const VectorXd& xi);

/// Orthonormal basis of the orthogonal complement of the leaf tangent plane
/// inside the tangent space (the v_4..v_{n+1} of the curvature condition).
std::vector<VectorXd> leaf_complement_basis(const HypersurfacePatch& patch, const VectorXd& xi);

struct FoliationReport {
    double flatness_max = 0.0;      // max |S_N v| over sampled leaf tangents
    double normal_drift_max = 0.0;  // max |N(a)-N(b)| over sampled leaf segments
    std::size_t sample_count = 0;
    std::uint64_t seed = 0;
    bool flat(double tol = 1e-6) const { return flatness_max < tol && normal_drift_max < tol; }
};

/// Samples leaf tangent directions and checks that the shape operator kills
/// them and that the normal is constant along leaves.
FoliationReport check_foliation_flatness(const HypersurfacePatch& patch,
                                         std::size_t sample_count, std::uint64_t seed);

struct GlEstimate {
    double kappa_hat = 0.0;        // min vol(N, N2, N3)/|N| over dspan samples
    double inequality_margin = 0.0;  // min |aN+bN2+cN3| / (kappa_hat*max(|a||N|,|b|,|c|)/4)
    bool inequality_holds = false;
    std::size_t samples_used = 0;
    std::size_t samples_skipped = 0;  // |N| below threshold
    std::uint64_t seed = 0;
    bool degenerate(double tol = 1e-3) const { return kappa_hat < tol; }
};

/// Monte Carlo estimate of the transversality constant of the generalized
/// Loomis-Whitney lemma: N ranges over two-term combinations of pivot
/// normals, N2 and N3 over the other two patches.
GlEstimate gl_constant(const std::vector<PatchPtr>& patches, int pivot,
                       std::size_t sample_count, std::uint64_t seed);

struct DispersionRange {
    double min_ratio = kInf;
    double max_ratio = 0.0;
    std::size_t pairs_used = 0;
    std::size_t pairs_skipped = 0;  // same-leaf pairs
    bool dispersive() const { return pairs_used > 0 && min_ratio > 0.0; }
};

/// Ratio |N(xi1)-N(xi2)| / d(leaf_id(xi1), leaf_id(xi2)) over sampled pairs.
DispersionRange normal_dispersion_ratio(const HypersurfacePatch& patch,
                                        std::size_t sample_count, std::uint64_t seed);

/// Sampled lower estimates for the hypothesis constants of a triple.
struct ConditionReport {
    double nu_transversal = kInf;       // min vol(N1,N2,N3)
    double nu_curvature = kInf;         // min vol(N1,N2,N3,S v_4,...,S v_{n+1})
    double leaf_flatness_max = 0.0;     // worst patch
    double gl_constant = kInf;          // worst pivot
    double dispersion_ratio_min = kInf;
    double dispersion_ratio_max = 0.0;
    std::size_t sample_count = 0;
    std::uint64_t seed = 0;
};

/// Monte Carlo minimum of the transversality volume and of the curvature
/// volume over sampled points of three patches. Fills the nu fields only.
ConditionReport estimate_transversality(const std::vector<PatchPtr>& patches,
                                        std::size_t sample_count, std::uint64_t seed);

/// Full report: estimate_transversality plus foliation, GL and dispersion
/// scans of every patch/pivot. This is what `geometry check` emits.
ConditionReport full_condition_report(const std::vector<PatchPtr>& patches,
                                      std::size_t sample_count, std::uint64_t seed);

/// Uniform sample in the patch domain (n draws, retried on membership
/// failure with fresh draws; fixed draw order).
VectorXd sample_domain(const HypersurfacePatch& patch, Rng& rng);

}  // namespace trilab::geometry
