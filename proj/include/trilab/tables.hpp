#pragma once

#include "trilab/packets.hpp"

namespace trilab::tables {

using packets::PacketDecomposition;
using packets::PacketLattice;
using waves::FreeWave;
using waves::SpaceTimeCube;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Axis-aligned cube in space-time.
struct Cube {
    VectorXd center;
    double side = 0.0;

    int dim() const { return static_cast<int>(center.size()); }
    bool contains(const VectorXd& p, double shrink = 0.0) const;
    SpaceTimeCube sampling(int points_per_axis) const;
    SpaceTimeCube sampling(const std::vector<int>& resolution) const;
};

/// The 2^{(n+1)j} children of a cube at dyadic level j.
struct CubeFamily {
    Cube parent;
    int level = 0;

    int per_axis() const { return 1 << level; }
    std::size_t size() const;
    double child_side() const { return parent.side / per_axis(); }
    Cube child(std::size_t idx) const;
    /// Index of the child containing p; p must lie in the parent.
    std::size_t index_of(const VectorXd& p) const;
};

CubeFamily subdivide(const Cube& q, int level);

/// Union of the (1-c)-cores of the level-j children.
struct InteriorRegion {
    CubeFamily family;
    double c = 0.0;

    bool contains(const VectorXd& p) const;
    /// Exact volume fraction of the complement, 1-(1-c)^{n+1}.
    double complement_fraction() const;
};

/// |f| sampled on the tensor grid of `domain`.
struct SampledField {
    SpaceTimeCube domain;
    std::vector<double> values;
};

struct AveragingCube {
    Cube cube;          // chosen cube of side 2R
    double best_norm;   // ||f||_{L^p(Q_R cap I^{c,j}(cube))}
    double full_norm;   // ||f||_{L^p(Q_R)}
    double ratio;       // full_norm / best_norm
    double bound;       // (1 + (n+1) 2^{n+1} c)^{1/p}
    bool within_bound;
    std::size_t candidate_count;
};

/// Scans candidate centers on a uniform subgrid of Q_R and returns the cube
/// of side 2R whose (c,j)-interior captures the most L^p mass of f.
AveragingCube find_averaging_cube(const SampledField& field, const Cube& q_r, double c, int j,
                                  double p, int candidates_per_axis = 5);

/// Weight matrix m_{q0,T} = ||chi~_T phi_2||^2_{L^2(q0)}, rows indexed by the
/// tubes of a decomposition, columns by the level-C0 children of Q.
struct TubeWeightMatrix {
    MatrixXd entries;    // tubes x subcubes
    VectorXd row_sums;   // m_T
    int depth = 0;       // C0

    /// Row-stochastic coefficients; zero-mass rows get uniform weights.
    MatrixXd normalized() const;
};

TubeWeightMatrix tube_weights(const PacketDecomposition& decomposition, const FreeWave& phi2,
                              const Cube& Q, int depth, int points_per_subcube_axis);

/// Table q0 -> Phi^{(q0)} stored as per-tube coefficients.
struct WaveTable {
    MatrixXd coefficients;  // tubes x subcubes, rows sum to 1
    int depth = 0;
    Cube cube;
};

WaveTable build_table(const PacketDecomposition& decomposition, const TubeWeightMatrix& weights,
                      const Cube& Q, int depth);

/// Materialize one table component sum_T coeff(T, q0) phi_T.
FreeWave table_entry(const PacketDecomposition& decomposition, const WaveTable& table,
                     std::size_t q0);

/// Node-exact sum of all components (equals the source by construction).
FreeWave table_sum(const PacketDecomposition& decomposition, const WaveTable& table);

struct TableMassReport {
    double table_mass = 0.0;   // sum_{q0} M(Phi^{(q0)})
    double source_mass = 0.0;  // M(phi_1)
    double kappa = 0.0;        // (table_mass/source_mass - 1)/c
    double margin_table = 0.0;
    double margin_source = 0.0;
};

TableMassReport table_mass_report(const PacketDecomposition& decomposition,
                                  const WaveTable& table);

/// L^1 of |Phi^{(q_entry)} phi2 phi3| over the (1-c)-core of child q_target.
double cross_cube_l1(const PacketDecomposition& decomposition, const WaveTable& table,
                     std::size_t entry_index, const FreeWave& phi2, const FreeWave& phi3,
                     std::size_t target_index, double c, int points_per_axis);

struct LocalizedTrilinearResult {
    double l1 = 0.0;           // ||prod phi_i||_{L^1(q)}
    double denominator = 0.0;  // mu^{(n-2)/2} r^{-3/2} prod ||chi~_q phi_i||_{L^2}
    double ratio = 0.0;
};

/// Measured form of the localized trilinear quantity; phi1 is expected to be
/// slab-localized with thickness mu (builder: slab_amplitudes).
LocalizedTrilinearResult localized_trilinear_diagnostic(const Cube& q, const FreeWave& phi1,
                                                        const FreeWave& phi2,
                                                        const FreeWave& phi3, double mu,
                                                        int points_per_axis,
                                                        int cutoff_power = 10);

/// Indicator density of the mu-neighborhood of the 3-dimensional subspace
/// spanned by the leaf plane through xi_star plus the normal direction.
std::vector<complexd> slab_amplitudes(const geometry::HypersurfacePatch& patch,
                                      const waves::FrequencyGrid& grid, double mu,
                                      const VectorXd& xi_star);

struct PairCensusResult {
    std::size_t max_multiplicity = 0;
    std::vector<std::size_t> top_counts;  // largest per-tube-pair counts
    std::size_t relation_count = 0;       // counted (q, q') relations
    std::size_t tube_count_2 = 0;
    std::size_t tube_count_3 = 0;
};

/// Counts, over well-separated related cube pairs (q, q') of the level-J
/// family of Q, how often a tube pair (T2, T3) can appear with T3 meeting q
/// and T2 meeting q'. The relation follows the truncated normal cone of the
/// pivot surface; near-coincident configurations are collapsed by striding
/// the base cubes and deduplicating cone targets.
PairCensusResult pair_census(const PacketLattice& lattice2, const PacketLattice& lattice3,
                             const Cube& Q, const PacketLattice& pivot,
                             double alpha_min_factor = 0.25, int stride = 2);

}  // namespace trilab::tables
