#include "trilab/geometry.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace trilab::geometry {

bool Box::contains(const VectorXd& x, double pad) const {
    if (x.size() != lo.size()) return false;
    for (int i = 0; i < lo.size(); ++i)
        if (x[i] < lo[i] - pad || x[i] > hi[i] + pad) return false;
    return true;
}

double Box::volume() const {
    double v = 1.0;
    for (int i = 0; i < lo.size(); ++i) v *= (hi[i] - lo[i]);
    return v;
}

Box Box::inflated(double pad) const {
    Box b = *this;
    b.lo.array() -= pad;
    b.hi.array() += pad;
    return b;
}

bool HypersurfacePatch::in_domain(const VectorXd& xi) const {
    if (!domain.contains(xi)) return false;
    if (membership && !membership(xi)) return false;
    return true;
}

VectorXd HypersurfacePatch::embed(const VectorXd& xi) const {
    VectorXd p(n + 1);
    int k = 0;
    for (int i = 0; i <= n; ++i) {
        if (i == graph_axis) continue;
        p[i] = xi[k++];
    }
    p[graph_axis] = phase(xi);
    if (rotation.size() > 0) return rotation * p;
    return p;
}

MatrixXd HypersurfacePatch::tangent_basis(const VectorXd& xi) const {
    MatrixXd basis = MatrixXd::Zero(n + 1, n);
    VectorXd g = gradient(xi);
    int k = 0;
    for (int i = 0; i <= n; ++i) {
        if (i == graph_axis) continue;
        basis(i, k) = 1.0;
        ++k;
    }
    for (int j = 0; j < n; ++j) basis(graph_axis, j) = g[j];
    if (rotation.size() > 0) return rotation * basis;
    return basis;
}

VectorXd HypersurfacePatch::leaf_id(const VectorXd& xi) const {
    require(leaf_chart.has_value(), "patch has no leaf chart");
    VectorXd c = leaf_chart->to_chart(xi);
    return c.tail(n - 2);
}

VectorXd HypersurfacePatch::chart_projection(const VectorXd& xi) const {
    return leaf_id(xi);
}

bool HypersurfacePatch::has_identity_rotation(double tol) const {
    if (rotation.size() == 0) return true;
    return (rotation - MatrixXd::Identity(n + 1, n + 1)).cwiseAbs().maxCoeff() <= tol;
}

double gram_volume(const std::vector<VectorXd>& vectors) {
    require(!vectors.empty(), "gram_volume: empty vector list");
    const int d = static_cast<int>(vectors[0].size());
    const int m = static_cast<int>(vectors.size());
    require(m <= d, "gram_volume: more vectors than ambient dimension");
    MatrixXd g(d, m);
    for (int j = 0; j < m; ++j) {
        require(vectors[j].size() == d, "gram_volume: dimension mismatch");
        g.col(j) = vectors[j];
    }
    double det = (g.transpose() * g).determinant();
    return det > 0.0 ? std::sqrt(det) : 0.0;
}

VectorXd unit_normal(const HypersurfacePatch& patch, const VectorXd& xi) {
    require(patch.in_domain(xi), "unit_normal: point outside patch domain");
    VectorXd g = patch.gradient(xi);
    VectorXd nvec(patch.n + 1);
    int k = 0;
    for (int i = 0; i <= patch.n; ++i) {
        if (i == patch.graph_axis) continue;
        nvec[i] = -g[k++];
    }
    nvec[patch.graph_axis] = 1.0;
    nvec /= std::sqrt(1.0 + g.squaredNorm());
    if (patch.rotation.size() > 0) nvec = patch.rotation * nvec;
    return nvec;
}

MatrixXd normal_derivative(const HypersurfacePatch& patch, const VectorXd& xi) {
    const int n = patch.n;
    VectorXd g = patch.gradient(xi);
    MatrixXd h = patch.hessian(xi);
    const double w = std::sqrt(1.0 + g.squaredNorm());
    // N = (-g, 1)/w in permuted slots; dN/dxi_j = (-H e_j, 0)/w - (-g,1) w_j / w^2
    // with w_j = (g . H e_j)/w.
    MatrixXd d = MatrixXd::Zero(n + 1, n);
    for (int j = 0; j < n; ++j) {
        double wj = g.dot(h.col(j)) / w;
        int k = 0;
        for (int i = 0; i <= n; ++i) {
            if (i == patch.graph_axis) continue;
            d(i, j) = -h(k, j) / w + g[k] * wj / (w * w);
            ++k;
        }
        d(patch.graph_axis, j) = -wj / (w * w);
    }
    if (patch.rotation.size() > 0) return patch.rotation * d;
    return d;
}

ShapeOperatorResult shape_operator(const HypersurfacePatch& patch, const VectorXd& xi) {
    require(patch.in_domain(xi), "shape_operator: point outside patch domain");
    const int n = patch.n;
    VectorXd g = patch.gradient(xi);
    MatrixXd hess = patch.hessian(xi);
    const double w = std::sqrt(1.0 + g.squaredNorm());

    MatrixXd first = MatrixXd::Identity(n, n) + g * g.transpose();
    MatrixXd second = hess / w;

    Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> solver(second, first);
    ensure(solver.info() == Eigen::Success, "shape_operator: eigen solve failed");

    VectorXd evals = solver.eigenvalues();
    MatrixXd evecs = solver.eigenvectors();

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return std::abs(evals[a]) < std::abs(evals[b]);
    });

    ShapeOperatorResult result;
    result.weingarten = first.ldlt().solve(second);
    result.eigenvalues.resize(n);
    result.eigenvectors.resize(n, n);
    for (int j = 0; j < n; ++j) {
        result.eigenvalues[j] = evals[order[j]];
        result.eigenvectors.col(j) = evecs.col(order[j]);
    }
    return result;
}

VectorXd shape_apply(const HypersurfacePatch& patch, const VectorXd& xi, const VectorXd& tangent) {
    MatrixXd basis = patch.tangent_basis(xi);
    // Solve basis * u = tangent; tangent vectors satisfy this exactly.
    VectorXd u = basis.colPivHouseholderQr().solve(tangent);
    return normal_derivative(patch, xi) * u;
}

std::array<VectorXd, 2> leaf_tangents(const HypersurfacePatch& patch, const VectorXd& xi) {
    require(patch.leaf_chart.has_value(), "leaf_tangents: patch has no leaf chart");
    const auto& chart = *patch.leaf_chart;
    VectorXd c = chart.to_chart(xi);
    const double step = 1e-6;
    std::array<VectorXd, 2> out;
    for (int k = 0; k < 2; ++k) {
        VectorXd cp = c, cm = c;
        cp[k] += step;
        cm[k] -= step;
        VectorXd dxi = (chart.from_chart(cp) - chart.from_chart(cm)) / (2.0 * step);
        VectorXd ambient = patch.tangent_basis(xi) * dxi;
        double norm = ambient.norm();
        ensure(norm > 1e-12, "leaf_tangents: degenerate chart direction");
        out[k] = ambient / norm;
    }
    return out;
}

std::vector<VectorXd> leaf_complement_basis(const HypersurfacePatch& patch, const VectorXd& xi) {
    const int n = patch.n;
    MatrixXd tangent = patch.tangent_basis(xi);
    auto leaves = leaf_tangents(patch, xi);
    MatrixXd l(n + 1, 2);
    l.col(0) = leaves[0];
    l.col(1) = leaves[1];
    Eigen::HouseholderQR<MatrixXd> lqr(l);
    MatrixXd ql = lqr.householderQ() * MatrixXd::Identity(n + 1, 2);
    MatrixXd projected = tangent - ql * (ql.transpose() * tangent);
    // Orthonormalize what is left of the tangent space: rank must be n-2.
    Eigen::ColPivHouseholderQR<MatrixXd> pqr(projected);
    pqr.setThreshold(1e-8);
    const int rank = static_cast<int>(pqr.rank());
    ensure(rank == n - 2, "leaf_complement_basis: unexpected rank");
    MatrixXd q = pqr.householderQ() * MatrixXd::Identity(n + 1, rank);
    std::vector<VectorXd> basis;
    basis.reserve(rank);
    for (int j = 0; j < rank; ++j) basis.push_back(q.col(j));
    return basis;
}

VectorXd sample_domain(const HypersurfacePatch& patch, Rng& rng) {
    const Box& box = patch.domain;
    for (int attempt = 0; attempt < 1000; ++attempt) {
        VectorXd xi(patch.n);
        for (int i = 0; i < patch.n; ++i) xi[i] = rng.uniform(box.lo[i], box.hi[i]);
        if (!patch.membership || patch.membership(xi)) return xi;
    }
    throw ConfigError("sample_domain: membership predicate rejected 1000 draws");
}

FoliationReport check_foliation_flatness(const HypersurfacePatch& patch,
                                         std::size_t sample_count, std::uint64_t seed) {
    require(patch.leaf_chart.has_value(), "check_foliation_flatness: missing leaf chart");
    Rng rng(seed);
    FoliationReport report;
    report.sample_count = sample_count;
    report.seed = seed;
    const auto& chart = *patch.leaf_chart;
    for (std::size_t s = 0; s < sample_count; ++s) {
        VectorXd xi = sample_domain(patch, rng);
        auto tangents = leaf_tangents(patch, xi);
        for (const auto& v : tangents)
            report.flatness_max = std::max(report.flatness_max, shape_apply(patch, xi, v).norm());
        // Walk a short segment inside the leaf and compare normals.
        VectorXd c = chart.to_chart(xi);
        VectorXd c2 = c;
        c2[0] += rng.uniform(-1.0, 1.0) * 1e-2;
        c2[1] += rng.uniform(-1.0, 1.0) * 1e-2;
        VectorXd xi2 = chart.from_chart(c2);
        if (patch.in_domain(xi2)) {
            double drift = (unit_normal(patch, xi2) - unit_normal(patch, xi)).norm();
            report.normal_drift_max = std::max(report.normal_drift_max, drift);
        }
    }
    return report;
}

ConditionReport estimate_transversality(const std::vector<PatchPtr>& patches,
                                        std::size_t sample_count, std::uint64_t seed) {
    require(patches.size() == 3, "estimate_transversality: need exactly 3 patches");
    Rng rng(seed);
    ConditionReport report;
    report.sample_count = sample_count;
    report.seed = seed;
    const bool curvature_ready =
        patches[0]->leaf_chart && patches[1]->leaf_chart && patches[2]->leaf_chart;
    for (std::size_t s = 0; s < sample_count; ++s) {
        std::vector<VectorXd> xis, normals;
        for (const auto& patch : patches) {
            VectorXd xi = sample_domain(*patch, rng);
            xis.push_back(xi);
            normals.push_back(unit_normal(*patch, xi));
        }
        report.nu_transversal = std::min(report.nu_transversal, gram_volume(normals));
        if (!curvature_ready) continue;
        for (int l = 0; l < 3; ++l) {
            std::vector<VectorXd> vecs = normals;
            for (const auto& v : leaf_complement_basis(*patches[l], xis[l]))
                vecs.push_back(shape_apply(*patches[l], xis[l], v));
            report.nu_curvature = std::min(report.nu_curvature, gram_volume(vecs));
        }
    }
    if (!curvature_ready) report.nu_curvature = 0.0;
    return report;
}

GlEstimate gl_constant(const std::vector<PatchPtr>& patches, int pivot,
                       std::size_t sample_count, std::uint64_t seed) {
    require(patches.size() == 3, "gl_constant: need exactly 3 patches");
    require(pivot >= 0 && pivot < 3, "gl_constant: invalid pivot index");
    require(patches[pivot]->leaf_chart.has_value(), "gl_constant: pivot patch needs a leaf chart");
    const int other1 = (pivot + 1) % 3;
    const int other2 = (pivot + 2) % 3;

    Rng rng(seed);
    GlEstimate est;
    est.seed = seed;

    struct Sample {
        VectorXd normal;  // N in dspan of the pivot normals (not normalized)
        VectorXd n2, n3;
    };
    std::vector<Sample> samples;
    samples.reserve(sample_count);

    for (std::size_t s = 0; s < sample_count; ++s) {
        VectorXd xa = sample_domain(*patches[pivot], rng);
        VectorXd xb = sample_domain(*patches[pivot], rng);
        double alpha = rng.uniform(-1.0, 1.0);
        double beta = rng.uniform(-1.0, 1.0);
        VectorXd x2 = sample_domain(*patches[other1], rng);
        VectorXd x3 = sample_domain(*patches[other2], rng);
        VectorXd nvec = alpha * unit_normal(*patches[pivot], xa) +
                        beta * unit_normal(*patches[pivot], xb);
        if (nvec.norm() < 1e-9) {
            ++est.samples_skipped;
            continue;
        }
        Sample smp{nvec, unit_normal(*patches[other1], x2), unit_normal(*patches[other2], x3)};
        double ratio = gram_volume({smp.normal, smp.n2, smp.n3}) / smp.normal.norm();
        est.kappa_hat = samples.empty() ? ratio : std::min(est.kappa_hat, ratio);
        samples.push_back(std::move(smp));
    }
    est.samples_used = samples.size();
    require(!samples.empty(), "gl_constant: all samples degenerate");

    // Verify the max-form inequality on random coefficient triples against
    // the sampled normals, with the documented factor-4 slack.
    est.inequality_margin = kInf;
    for (std::size_t s = 0; s < samples.size(); ++s) {
        const Sample& smp = samples[s];
        double a = rng.uniform(-1.0, 1.0);
        double b = rng.uniform(-1.0, 1.0);
        double c = rng.uniform(-1.0, 1.0);
        double lhs = (a * smp.normal + b * smp.n2 + c * smp.n3).norm();
        double rhs = est.kappa_hat / 4.0 *
                     std::max({std::abs(a) * smp.normal.norm(), std::abs(b), std::abs(c)});
        if (rhs > 0.0)
            est.inequality_margin = std::min(est.inequality_margin, lhs / rhs);
    }
    est.inequality_holds = est.inequality_margin >= 1.0;
    return est;
}

DispersionRange normal_dispersion_ratio(const HypersurfacePatch& patch,
                                        std::size_t sample_count, std::uint64_t seed) {
    require(patch.leaf_chart.has_value(), "normal_dispersion_ratio: missing leaf chart");
    Rng rng(seed);
    DispersionRange range;
    for (std::size_t s = 0; s < sample_count; ++s) {
        VectorXd x1 = sample_domain(patch, rng);
        VectorXd x2 = sample_domain(patch, rng);
        double dist = (patch.leaf_id(x1) - patch.leaf_id(x2)).norm();
        if (dist < 1e-12) {
            ++range.pairs_skipped;
            continue;
        }
        double ratio = (unit_normal(patch, x1) - unit_normal(patch, x2)).norm() / dist;
        range.min_ratio = std::min(range.min_ratio, ratio);
        range.max_ratio = std::max(range.max_ratio, ratio);
        ++range.pairs_used;
    }
    if (range.pairs_used == 0) range.min_ratio = 0.0;
    return range;
}

ConditionReport full_condition_report(const std::vector<PatchPtr>& patches,
                                      std::size_t sample_count, std::uint64_t seed) {
    ConditionReport report = estimate_transversality(patches, sample_count, seed);
    for (const auto& patch : patches) {
        if (!patch->leaf_chart) continue;
        auto fol = check_foliation_flatness(*patch, sample_count, seed);
        report.leaf_flatness_max = std::max(report.leaf_flatness_max,
                                            std::max(fol.flatness_max, fol.normal_drift_max));
        auto disp = normal_dispersion_ratio(*patch, sample_count, seed);
        report.dispersion_ratio_min = std::min(report.dispersion_ratio_min, disp.min_ratio);
        report.dispersion_ratio_max = std::max(report.dispersion_ratio_max, disp.max_ratio);
    }
    for (int pivot = 0; pivot < 3; ++pivot) {
        if (!patches[pivot]->leaf_chart) continue;
        report.gl_constant = std::min(report.gl_constant,
                                      gl_constant(patches, pivot, sample_count, seed).kappa_hat);
    }
    return report;
}

}  // namespace trilab::geometry
