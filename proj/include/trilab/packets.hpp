#pragma once

#include <iosfwd>

#include "trilab/waves.hpp"

namespace trilab::packets {

using geometry::Box;
using geometry::PatchPtr;
using waves::FreeWave;
using waves::FrequencyGrid;
using waves::SpaceTimeCube;
using Eigen::VectorXd;

/// One selected leaf: a representative frequency point, its projected chart
/// coordinate (the leaf identifier) and the common group velocity.
struct LeafRep {
    VectorXd xi;
    VectorXd proj;
    VectorXd velocity;
};

/// Tube/packet lattice of Lemma-style wave packet decompositions.
///
/// r = 2^{-J} R is the dyadic value nearest sqrt(R); leaf representatives
/// form a maximal r^{-1}-separated set in projected chart coordinates; the
/// spatial lattice is (c^{-2} r) Z^n intersected with a bounding box.
struct PacketLattice {
    double R = 0.0;
    int J = 0;
    double r = 0.0;
    double c = 0.0;
    double spacing = 0.0;  // c^{-2} r, also the tube radius
    int n = 0;
    std::vector<LeafRep> leaf_reps;
    std::vector<int> k_lo;       // per-axis first lattice integer
    std::vector<int> k_count;    // per-axis lattice point count
    std::vector<int> period_L;   // spatial period of the grid in lattice steps
    bool complete = false;       // lattice covers a full period on every axis
    int decay_power = 10;        // N in the tube cutoff

    std::size_t spatial_count() const;
    std::size_t tube_count() const { return leaf_reps.size() * spatial_count(); }
    VectorXd lattice_point(const std::vector<int>& k) const;
};

/// Materialized tube geometry with its smooth cutoff.
struct Tube {
    VectorXd x_T;
    VectorXd xi_T;
    VectorXd velocity;
    double radius = 0.0;
    int decay_power = 10;

    /// (1 + |x - x_T + t velocity| / radius)^{-N}
    double cutoff(const VectorXd& x, double t) const;
    double cutoff_at(const VectorXd& spacetime_point) const;
};

/// Dyadic choice of J with r = 2^{-J} R nearest to sqrt(R).
int dyadic_level(double R);

/// Grid compatibility: spacing h_a must satisfy 2 pi / (h_a Lambda) = integer.
std::vector<int> lattice_periods(const FrequencyGrid& grid, double spacing);

/// Builds leaf representatives (greedy maximal r^{-1}-separated scan of the
/// grid nodes in lexicographic order) and the spatial lattice inside
/// `spatial_box`. Empty box selects one full period per axis.
PacketLattice build_lattice(const PatchPtr& patch, double R, double c,
                            const FrequencyGrid& grid, const Box& spatial_box = Box{},
                            int decay_power = 10);

struct Packet {
    std::size_t leaf = 0;
    std::vector<int> k;  // lattice integers
    FreeWave wave;
};

class PacketDecomposition {
public:
    PacketDecomposition(PacketLattice lattice, FreeWave source_embedded,
                        std::vector<Packet> packets, std::vector<int> enlargement);

    const PacketLattice& lattice() const { return lattice_; }
    const std::vector<Packet>& packets() const { return packets_; }
    /// Source wave embedded on the enlarged grid shared by all packets.
    const FreeWave& source() const { return source_; }
    const std::vector<int>& enlargement() const { return enlargement_; }

    Tube tube(const Packet& packet) const;

    /// Node-exact sum of all packets, on the shared enlarged grid.
    FreeWave reconstruct() const;

    /// Relative L2 error of reconstruct() against the embedded source.
    double reconstruction_error() const;

    /// Max over packets and nonzero nodes of the chart distance between the
    /// node's leaf projection and the packet's leaf, in units of r^{-1}.
    double max_leaf_distance_factor() const;

private:
    PacketLattice lattice_;
    FreeWave source_;
    std::vector<Packet> packets_;
    std::vector<int> enlargement_;
};

/// Full decomposition of the wave over the lattice. Requires an identity
/// rotation, a leaf chart, positive margin, and a lattice-compatible grid.
PacketDecomposition decompose(const FreeWave& wave, const PacketLattice& lattice);

/// Builds the single packet of one tube without materializing the rest.
Packet single_packet(const FreeWave& wave, const PacketLattice& lattice, std::size_t leaf,
                     const std::vector<int>& k);

struct DecayFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0;
    std::vector<double> distances;
    std::vector<double> sup_values;
    bool below_resolution = false;  // single-frequency packet, no decay expected
};

/// Sup of |phi_T| over cubes translated to the given distances from the tube,
/// fitted log-log against distance.
DecayFit tube_decay(const PacketDecomposition& decomposition, const Packet& packet,
                    const SpaceTimeCube& cube, const std::vector<double>& distances);

struct MassCensus {
    double weighted_sum = 0.0;  // sum_T sup_q cutoff^{-N} ||phi_T||^2_{L2(q)}
    double ratio = 0.0;         // weighted_sum / (r M(phi))
    std::size_t cube_count = 0;
};

/// Local mass census over the level-J subcubes of Q (side must equal R).
MassCensus local_mass_census(const PacketDecomposition& decomposition, const SpaceTimeCube& Q,
                             int points_per_subcube_axis = 2);

struct WeightedMassCheck {
    double lhs = 0.0;   // (sum_{q0} M(sum_T m_{q0,T} phi_T))^{1/2}
    double rhs = 0.0;   // (1 + c C_cfg) M(phi)^{1/2}
    bool pass = false;
};

/// Homogeneous form of the weighted regrouping inequality. `weights` is
/// row-major tubes x groups; every row must sum to 1 within 1e-12.
WeightedMassCheck weighted_mass_check(const PacketDecomposition& decomposition,
                                      const Eigen::MatrixXd& weights, double c_config = 10.0);

// Manifest serialization (lattice parameters plus the tube list); per-tube
// wave payloads are written separately in the wave format.
void write_manifest(std::ostream& out, const PacketDecomposition& decomposition,
                    std::size_t max_tubes);

}  // namespace trilab::packets
