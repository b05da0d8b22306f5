#pragma once

#include <iosfwd>

#include "trilab/geometry.hpp"

namespace trilab::waves {

using geometry::Box;
using geometry::PatchPtr;
using Eigen::VectorXd;

/// Tensor midpoint grid on an axis-aligned frequency box.
struct FrequencyGrid {
    Box box;
    std::vector<int> resolution;  // nodes per axis

    static FrequencyGrid regular(const Box& box, const std::vector<int>& resolution);

    /// Grid whose spacing h_a = 2 pi c^2 / (r L_a) for positive integers L_a,
    /// so the spatial period of the extension field is an exact multiple of
    /// the packet lattice spacing c^{-2} r. The box shrinks to a whole number
    /// of cells inside `target`. L_a is chosen nearest to the requested
    /// per-axis resolution.
    static FrequencyGrid packet_aligned(const Box& target, const std::vector<int>& target_res,
                                        double R, double c);

    int dim() const { return box.dim(); }
    std::size_t node_count() const;
    double spacing(int axis) const;
    double weight() const;  // cell volume

    void unravel(std::size_t idx, int* multi) const;
    std::size_t ravel(const int* multi) const;
    VectorXd node(std::size_t idx) const;
    double coord(int axis, int idx) const;

    /// Same spacing, `extra[a]` additional cells on each side of axis a.
    FrequencyGrid enlarged(const std::vector<int>& extra) const;
};

/// Space-time cube with a tensor evaluation grid.
struct SpaceTimeCube {
    VectorXd center;              // in R^{n+1}
    double side = 0.0;
    std::vector<int> resolution;  // evaluation nodes per axis

    int dim() const { return static_cast<int>(center.size()); }
    std::size_t point_count() const;
    VectorXd point(std::size_t idx) const;
    double cell_volume() const;
    Box bounds() const;
};

/// Frequency-side density on a grid together with its space-time field.
class FreeWave {
public:
    FreeWave() = default;
    FreeWave(FrequencyGrid grid, std::vector<complexd> amplitudes, PatchPtr patch,
             Box reference_set);

    const FrequencyGrid& grid() const { return grid_; }
    const std::vector<complexd>& amplitudes() const { return amps_; }
    const PatchPtr& patch() const { return patch_; }
    const Box& reference_set() const { return reference_; }
    int n() const { return grid_.dim(); }

    double phi_at_node(std::size_t idx) const { return phi_[idx]; }

    /// Field value sum_nodes exp(i point . Sigma(xi)) f(xi) h^n at one
    /// ambient space-time point.
    complexd extend_at(const VectorXd& point) const;

    /// Largest phase increment across one frequency cell for points of the
    /// cube; quadrature is trustworthy when this stays below pi/4.
    double max_phase_per_cell(const SpaceTimeCube& cube) const;

private:
    FrequencyGrid grid_;
    std::vector<complexd> amps_;
    PatchPtr patch_;
    Box reference_;
    std::vector<double> sigma_;  // node_count x (n+1), ambient embeddings
    std::vector<double> phi_;    // node_count phase values

    friend FreeWave evolve(const FreeWave&, double);
};

/// Evaluate the extension field at many points (parallel over points).
std::vector<complexd> extend(const FreeWave& wave, const std::vector<VectorXd>& points);

/// ||f||^2_{L^2(U)} via the grid sum; conserved by evolve.
double mass(const FreeWave& wave);

/// Distance from the numerical support {|f| > 0} to the complement of the
/// reference set; +inf for the zero wave.
double margin(const FreeWave& wave);

/// Frequency-side evolution: amplitudes times exp(i t phi(xi)).
FreeWave evolve(const FreeWave& wave, double t);

/// Riemann-sum L^p norm of |prod_i field_i| over the cube's tensor grid.
double product_lp_norm(const std::vector<const FreeWave*>& waves, const SpaceTimeCube& cube,
                       double p);

/// Same, over a general axis-aligned box in R^{n+1}.
double product_lp_norm(const std::vector<const FreeWave*>& waves, const Box& box,
                       const std::vector<int>& resolution, double p);

/// |prod_i field_i| on the tensor grid of an ambient box, one value per point.
std::vector<double> product_moduli(const std::vector<const FreeWave*>& waves, const Box& box,
                                   const std::vector<int>& resolution);

/// product_lp_norm divided by the product of mass^{1/2}.
double trilinear_ratio(const std::vector<const FreeWave*>& waves, const SpaceTimeCube& cube,
                       double p);

// Textual serialization: header (box, resolution, reference set) plus one
// amplitude per line.
void write_wave(std::ostream& out, const FreeWave& wave);
FreeWave read_wave(std::istream& in, PatchPtr patch);

}  // namespace trilab::waves
