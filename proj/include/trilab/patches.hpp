#pragma once

#include "trilab/geometry.hpp"

namespace trilab::patches {

using geometry::Box;
using geometry::HypersurfacePatch;
using geometry::PatchPtr;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Declarative description of a built-in patch, as read from configuration.
struct PatchSpec {
    std::string kind;  // sphere_cap | paraboloid | double_cone | cylinder | hyperplane
    int n = 3;
    int graph_axis = -1;  // default: last ambient slot
    Box box;              // frequency-side domain, dimension n
    VectorXd plane_gradient;  // hyperplane only
    double plane_offset = 0.0;
    MatrixXd rotation;        // optional (n+1)x(n+1), orthogonal
    bool false_foliation = false;  // declare an identity chart on a curved patch
    double apex_margin = 0.05;     // double_cone: reject |xi'| below this
    std::string label;
};

PatchPtr make_patch(const PatchSpec& spec);

/// phi = sqrt(1 - |xi|^2) over a box away from the unit sphere's equator.
PatchPtr sphere_cap(int n, int graph_axis, const Box& box, bool false_foliation = false);

/// phi = |xi|^2.
PatchPtr paraboloid(int n, const Box& box);

/// phi = |xi'| - xi_n with xi' the first n-1 coordinates; leaves are the
/// planes of fixed direction xi'/|xi'|, charted gnomonically around the
/// direction of the box center.
PatchPtr double_cone(int n, const Box& box, double apex_margin = 0.05);

/// Graph of the cylinder zeta_1^2+...+zeta_{n-1}^2 = 1 over the remaining
/// coordinates; the last two frequency coordinates are free leaf directions.
PatchPtr cylinder(int n, const Box& box);

/// phi = a . xi + b; completely flat, charted by the identity permutation.
PatchPtr hyperplane(int n, const VectorXd& a, double b, const Box& box, int graph_axis = -1);

/// Three sectors of one double cone, mutually transversal; the standard
/// compliant triple used throughout the experiments (identity rotations,
/// shared graph frame).
std::vector<PatchPtr> standard_cone_triple(int n, double half_width = 0.25);

/// Same pivot cone, but the second surface is a hyperplane whose normal is a
/// two-term combination of pivot normals. Violates the spanning lemma.
std::vector<PatchPtr> gl_violating_triple(int n, double half_width = 0.25);

/// Axis-aligned box helper.
Box make_box(const VectorXd& lo, const VectorXd& hi);
Box centered_box(const VectorXd& center, const VectorXd& half_widths);

}  // namespace trilab::patches
