#include "trilab/patches.hpp"

#include <cmath>

namespace trilab::patches {

Box make_box(const VectorXd& lo, const VectorXd& hi) {
    require(lo.size() == hi.size(), "box: lo/hi dimension mismatch");
    for (int i = 0; i < lo.size(); ++i)
        require(lo[i] < hi[i], "box: sides must have positive length");
    return Box{lo, hi};
}

Box centered_box(const VectorXd& center, const VectorXd& half_widths) {
    return make_box(center - half_widths, center + half_widths);
}

namespace {

void check_rotation(const MatrixXd& rot, int dim) {
    if (rot.size() == 0) return;
    require(rot.rows() == dim && rot.cols() == dim, "rotation: wrong dimensions");
    double err = (rot.transpose() * rot - MatrixXd::Identity(dim, dim)).cwiseAbs().maxCoeff();
    require(err <= 1e-9, "rotation: matrix is not orthogonal");
}

geometry::LeafChart permutation_chart(int n, const std::vector<int>& order) {
    // order[k] = source index of chart coordinate k
    std::vector<int> inverse(n);
    for (int k = 0; k < n; ++k) inverse[order[k]] = k;
    geometry::LeafChart chart;
    chart.to_chart = [order, n](const VectorXd& xi) {
        VectorXd c(n);
        for (int k = 0; k < n; ++k) c[k] = xi[order[k]];
        return c;
    };
    chart.from_chart = [inverse, n](const VectorXd& c) {
        VectorXd xi(n);
        for (int i = 0; i < n; ++i) xi[i] = c[inverse[i]];
        return xi;
    };
    return chart;
}

}  // namespace

PatchPtr sphere_cap(int n, int graph_axis, const Box& box, bool false_foliation) {
    require(n >= 1, "sphere_cap: n must be >= 1");
    require(box.dim() == n, "sphere_cap: box dimension mismatch");
    if (graph_axis < 0) graph_axis = n;
    require(graph_axis >= 0 && graph_axis <= n, "sphere_cap: graph_axis out of range");
    auto patch = std::make_shared<HypersurfacePatch>();
    patch->n = n;
    patch->graph_axis = graph_axis;
    patch->phase = [](const VectorXd& xi) { return std::sqrt(1.0 - xi.squaredNorm()); };
    patch->gradient = [](const VectorXd& xi) {
        double phi = std::sqrt(1.0 - xi.squaredNorm());
        return VectorXd(-xi / phi);
    };
    patch->hessian = [n](const VectorXd& xi) {
        double phi = std::sqrt(1.0 - xi.squaredNorm());
        MatrixXd h = -(MatrixXd::Identity(n, n) / phi + xi * xi.transpose() / (phi * phi * phi));
        return h;
    };
    patch->domain = box;
    patch->membership = [](const VectorXd& xi) { return xi.squaredNorm() < 0.99; };
    if (false_foliation && n >= 3) {
        std::vector<int> identity(n);
        for (int i = 0; i < n; ++i) identity[i] = i;
        patch->leaf_chart = permutation_chart(n, identity);
    }
    patch->label = "sphere_cap";
    return patch;
}

PatchPtr paraboloid(int n, const Box& box) {
    require(box.dim() == n, "paraboloid: box dimension mismatch");
    auto patch = std::make_shared<HypersurfacePatch>();
    patch->n = n;
    patch->graph_axis = n;
    patch->phase = [](const VectorXd& xi) { return xi.squaredNorm(); };
    patch->gradient = [](const VectorXd& xi) { return VectorXd(2.0 * xi); };
    patch->hessian = [n](const VectorXd&) { return MatrixXd(2.0 * MatrixXd::Identity(n, n)); };
    patch->domain = box;
    patch->label = "paraboloid";
    return patch;
}

PatchPtr double_cone(int n, const Box& box, double apex_margin) {
    require(n >= 3, "double_cone: needs n >= 3 for a 2-dimensional leaf structure");
    require(box.dim() == n, "double_cone: box dimension mismatch");
    const int m = n - 1;  // radial block size

    // Gnomonic chart base direction: the box center's radial part.
    VectorXd base = box.center().head(m);
    require(base.norm() > apex_margin, "double_cone: box too close to the apex");
    base.normalize();
    // Orthonormal complement of base inside R^{n-1}.
    Eigen::HouseholderQR<MatrixXd> qr(base);
    MatrixXd q = qr.householderQ();
    MatrixXd comp = q.rightCols(m - 1);

    auto patch = std::make_shared<HypersurfacePatch>();
    patch->n = n;
    patch->graph_axis = n;
    patch->phase = [m](const VectorXd& xi) { return xi.head(m).norm() - xi[m]; };
    patch->gradient = [m, n](const VectorXd& xi) {
        VectorXd g(n);
        double rho = xi.head(m).norm();
        g.head(m) = xi.head(m) / rho;
        g[m] = -1.0;
        return g;
    };
    patch->hessian = [m, n](const VectorXd& xi) {
        MatrixXd h = MatrixXd::Zero(n, n);
        double rho = xi.head(m).norm();
        VectorXd omega = xi.head(m) / rho;
        h.topLeftCorner(m, m) = (MatrixXd::Identity(m, m) - omega * omega.transpose()) / rho;
        return h;
    };
    patch->domain = box;
    patch->membership = [m, apex_margin](const VectorXd& xi) {
        return xi.head(m).norm() > apex_margin;
    };

    geometry::LeafChart chart;
    chart.to_chart = [m, n, base, comp](const VectorXd& xi) {
        VectorXd radial = xi.head(m);
        double along = radial.dot(base);
        VectorXd c(n);
        c[0] = radial.norm();
        c[1] = xi[m];
        for (int j = 0; j < m - 1; ++j) c[2 + j] = radial.dot(comp.col(j)) / along;
        return c;
    };
    chart.from_chart = [m, n, base, comp](const VectorXd& c) {
        VectorXd dir = base;
        for (int j = 0; j < m - 1; ++j) dir += c[2 + j] * comp.col(j);
        dir.normalize();
        VectorXd xi(n);
        xi.head(m) = c[0] * dir;
        xi[m] = c[1];
        return xi;
    };
    patch->leaf_chart = chart;
    patch->label = "double_cone";
    return patch;
}

PatchPtr cylinder(int n, const Box& box) {
    require(n >= 3, "cylinder: needs n >= 3");
    require(box.dim() == n, "cylinder: box dimension mismatch");
    const int m = n - 2;  // curved coordinates

    auto patch = std::make_shared<HypersurfacePatch>();
    patch->n = n;
    patch->graph_axis = 0;  // graphs the first ambient coordinate
    patch->phase = [m](const VectorXd& xi) { return std::sqrt(1.0 - xi.head(m).squaredNorm()); };
    patch->gradient = [m, n](const VectorXd& xi) {
        VectorXd g = VectorXd::Zero(n);
        double phi = std::sqrt(1.0 - xi.head(m).squaredNorm());
        g.head(m) = -xi.head(m) / phi;
        return g;
    };
    patch->hessian = [m, n](const VectorXd& xi) {
        MatrixXd h = MatrixXd::Zero(n, n);
        double phi = std::sqrt(1.0 - xi.head(m).squaredNorm());
        VectorXd r = xi.head(m);
        h.topLeftCorner(m, m) =
            -(MatrixXd::Identity(m, m) / phi + r * r.transpose() / (phi * phi * phi));
        return h;
    };
    patch->domain = box;
    patch->membership = [m](const VectorXd& xi) { return xi.head(m).squaredNorm() < 0.99; };

    // Leaves: curved coordinates fixed, last two coordinates free.
    std::vector<int> order(n);
    order[0] = n - 2;
    order[1] = n - 1;
    for (int k = 0; k < m; ++k) order[2 + k] = k;
    patch->leaf_chart = permutation_chart(n, order);
    patch->label = "cylinder";
    return patch;
}

PatchPtr hyperplane(int n, const VectorXd& a, double b, const Box& box, int graph_axis) {
    require(a.size() == n, "hyperplane: gradient dimension mismatch");
    require(box.dim() == n, "hyperplane: box dimension mismatch");
    if (graph_axis < 0) graph_axis = n;
    auto patch = std::make_shared<HypersurfacePatch>();
    patch->n = n;
    patch->graph_axis = graph_axis;
    VectorXd grad = a;
    patch->phase = [grad, b](const VectorXd& xi) { return grad.dot(xi) + b; };
    patch->gradient = [grad](const VectorXd&) { return grad; };
    patch->hessian = [n](const VectorXd&) { return MatrixXd(MatrixXd::Zero(n, n)); };
    patch->domain = box;
    if (n >= 3) {
        std::vector<int> identity(n);
        for (int i = 0; i < n; ++i) identity[i] = i;
        patch->leaf_chart = permutation_chart(n, identity);
    }
    patch->label = "hyperplane";
    return patch;
}

PatchPtr make_patch(const PatchSpec& spec) {
    PatchPtr patch;
    if (spec.kind == "sphere_cap") {
        patch = sphere_cap(spec.n, spec.graph_axis, spec.box, spec.false_foliation);
    } else if (spec.kind == "paraboloid") {
        patch = paraboloid(spec.n, spec.box);
    } else if (spec.kind == "double_cone") {
        patch = double_cone(spec.n, spec.box, spec.apex_margin);
    } else if (spec.kind == "cylinder") {
        patch = cylinder(spec.n, spec.box);
    } else if (spec.kind == "hyperplane") {
        patch = hyperplane(spec.n, spec.plane_gradient, spec.plane_offset, spec.box,
                           spec.graph_axis);
    } else {
        throw ConfigError("unknown patch kind: " + spec.kind);
    }
    if (spec.rotation.size() > 0 || !spec.label.empty()) {
        auto copy = std::make_shared<HypersurfacePatch>(*patch);
        if (spec.rotation.size() > 0) {
            check_rotation(spec.rotation, spec.n + 1);
            copy->rotation = spec.rotation;
        }
        if (!spec.label.empty()) copy->label = spec.label;
        patch = copy;
    }
    return patch;
}

namespace {

// Sector box of the standard cone: radial part centered on the unit
// direction at the given angle in the (xi_1, xi_2) plane.
Box sector_box(int n, double angle, double half_width) {
    VectorXd center = VectorXd::Zero(n);
    center[0] = std::cos(angle);
    center[1] = std::sin(angle);
    VectorXd half = VectorXd::Constant(n, half_width);
    return centered_box(center, half);
}

}  // namespace

std::vector<PatchPtr> standard_cone_triple(int n, double half_width) {
    const double third = 2.0 * M_PI / 3.0;
    std::vector<PatchPtr> triple;
    for (int i = 0; i < 3; ++i) {
        auto patch = double_cone(n, sector_box(n, i * third, half_width));
        auto named = std::make_shared<HypersurfacePatch>(*patch);
        named->label = "double_cone_" + std::to_string(i + 1);
        triple.push_back(named);
    }
    return triple;
}

std::vector<PatchPtr> gl_violating_triple(int n, double half_width) {
    auto triple = standard_cone_triple(n, half_width);
    // Replace the second surface by a hyperplane whose normal is a two-term
    // combination of pivot normals (taken at two points of the first sector).
    const auto& pivot = *triple[0];
    Rng rng(7);
    VectorXd xa = geometry::sample_domain(pivot, rng);
    VectorXd xb = geometry::sample_domain(pivot, rng);
    VectorXd nvec = (geometry::unit_normal(pivot, xa) + geometry::unit_normal(pivot, xb)).normalized();
    // For a graph over the last axis, the normal is (-a, 1)/sqrt(1+|a|^2),
    // so a = -n_head / n_last.
    require(std::abs(nvec[n]) > 1e-6, "gl_violating_triple: degenerate combined normal");
    VectorXd a = -nvec.head(n) / nvec[n];
    Box box = sector_box(n, 2.0 * M_PI / 3.0, half_width);
    auto plane = hyperplane(n, a, 0.0, box);
    auto named = std::make_shared<HypersurfacePatch>(*plane);
    named->label = "dspan_hyperplane";
    triple[1] = named;
    return triple;
}

}  // namespace trilab::patches
