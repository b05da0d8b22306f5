#include "trilab/tables.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "trilab/geometry.hpp"

namespace trilab::tables {

using packets::Tube;
using waves::FrequencyGrid;

bool Cube::contains(const VectorXd& p, double shrink) const {
    const double half = 0.5 * side * (1.0 - shrink);
    for (int a = 0; a < dim(); ++a)
        if (std::abs(p[a] - center[a]) > half) return false;
    return true;
}

SpaceTimeCube Cube::sampling(int points_per_axis) const {
    return sampling(std::vector<int>(dim(), points_per_axis));
}

SpaceTimeCube Cube::sampling(const std::vector<int>& resolution) const {
    SpaceTimeCube c;
    c.center = center;
    c.side = side;
    c.resolution = resolution;
    return c;
}

std::size_t CubeFamily::size() const {
    std::size_t count = 1;
    for (int a = 0; a < parent.dim(); ++a) count *= static_cast<std::size_t>(per_axis());
    return count;
}

Cube CubeFamily::child(std::size_t idx) const {
    const int d = parent.dim();
    const int m = per_axis();
    Cube c;
    c.side = child_side();
    c.center.resize(d);
    for (int a = d - 1; a >= 0; --a) {
        int i = static_cast<int>(idx % m);
        idx /= m;
        c.center[a] = parent.center[a] - 0.5 * parent.side + (i + 0.5) * c.side;
    }
    return c;
}

std::size_t CubeFamily::index_of(const VectorXd& p) const {
    const int d = parent.dim();
    const int m = per_axis();
    std::size_t idx = 0;
    for (int a = 0; a < d; ++a) {
        int i = static_cast<int>((p[a] - (parent.center[a] - 0.5 * parent.side)) / child_side());
        i = std::clamp(i, 0, m - 1);
        idx = idx * m + i;
    }
    return idx;
}

CubeFamily subdivide(const Cube& q, int level) {
    require(level >= 0, "subdivide: level must be nonnegative");
    require(q.side > 0.0, "subdivide: cube must have positive side");
    return CubeFamily{q, level};
}

bool InteriorRegion::contains(const VectorXd& p) const {
    if (!family.parent.contains(p)) return false;
    Cube child = family.child(family.index_of(p));
    return child.contains(p, c);
}

double InteriorRegion::complement_fraction() const {
    return 1.0 - std::pow(1.0 - c, family.parent.dim());
}

AveragingCube find_averaging_cube(const SampledField& field, const Cube& q_r, double c, int j,
                                  double p, int candidates_per_axis) {
    require(candidates_per_axis >= 1, "find_averaging_cube: need at least one candidate");
    require(p > 0.0, "find_averaging_cube: p must be positive");
    require(j >= 0, "find_averaging_cube: j must be nonnegative");
    require(field.values.size() == field.domain.point_count(),
            "find_averaging_cube: sample count mismatch");
    const int d = q_r.dim();
    const double cellvol = field.domain.cell_volume();
    const double R = q_r.side;

    // Samples restricted to Q_R, with their coordinates cached.
    std::vector<std::size_t> in_qr;
    for (std::size_t i = 0; i < field.values.size(); ++i)
        if (q_r.contains(field.domain.point(i))) in_qr.push_back(i);
    require(!in_qr.empty(), "find_averaging_cube: no samples inside Q_R");

    std::vector<VectorXd> pts(in_qr.size());
    std::vector<double> powed(in_qr.size());
    for (std::size_t s = 0; s < in_qr.size(); ++s) {
        pts[s] = field.domain.point(in_qr[s]);
        powed[s] = std::pow(field.values[in_qr[s]], p) * cellvol;
    }
    double full = std::pow(pairwise_sum(powed), 1.0 / p);

    AveragingCube out;
    out.full_norm = full;
    out.candidate_count =
        static_cast<std::size_t>(std::pow(candidates_per_axis, d));
    out.best_norm = -1.0;

    for (std::size_t cand = 0; cand < out.candidate_count; ++cand) {
        // Candidate center on a uniform subgrid of Q_R.
        VectorXd center(d);
        std::size_t rest = cand;
        for (int a = d - 1; a >= 0; --a) {
            int i = static_cast<int>(rest % candidates_per_axis);
            rest /= candidates_per_axis;
            center[a] = q_r.center[a] + R * (-0.5 + (i + 0.5) / candidates_per_axis);
        }
        Cube big{center, 2.0 * R};
        InteriorRegion interior{subdivide(big, j), c};
        double acc = 0.0;
        for (std::size_t s = 0; s < pts.size(); ++s)
            if (interior.contains(pts[s])) acc += powed[s];
        double norm = std::pow(acc, 1.0 / p);
        if (norm > out.best_norm) {
            out.best_norm = norm;
            out.cube = big;
        }
    }
    out.ratio = out.best_norm > 0.0 ? full / out.best_norm : kInf;
    out.bound = std::pow(1.0 + d * std::pow(2.0, d) * c, 1.0 / p);
    out.within_bound = out.ratio <= out.bound;
    return out;
}

MatrixXd TubeWeightMatrix::normalized() const {
    MatrixXd coeff = entries;
    const double uniform = 1.0 / static_cast<double>(entries.cols());
    for (Eigen::Index t = 0; t < entries.rows(); ++t) {
        if (row_sums[t] > 0.0) {
            coeff.row(t) /= row_sums[t];
        } else {
            coeff.row(t).setConstant(uniform);
        }
    }
    return coeff;
}

TubeWeightMatrix tube_weights(const PacketDecomposition& decomposition, const FreeWave& phi2,
                              const Cube& Q, int depth, int points_per_subcube_axis) {
    require(depth >= 0, "tube_weights: depth must be nonnegative");
    require(points_per_subcube_axis >= 2,
            "tube_weights: resolution too coarse (need >= 2 points per subcube axis)");
    require(std::abs(Q.side - decomposition.lattice().R) <= 1e-9 * decomposition.lattice().R,
            "tube_weights: cube side must match the lattice scale R");
    const int d = Q.dim();
    CubeFamily family = subdivide(Q, depth);
    const std::size_t sub_count = family.size();
    const int per_axis = family.per_axis();

    SpaceTimeCube sampling = Q.sampling(per_axis * points_per_subcube_axis);
    const std::size_t count = sampling.point_count();
    const double cellvol = sampling.cell_volume();

    // |phi2|^2 on the sampling grid, evaluated once.
    std::vector<double> density(count);
    parallel_map(count, density, [&](std::size_t i) {
        return std::norm(phi2.extend_at(sampling.point(i)));
    });
    std::vector<std::size_t> owner(count);
    for (std::size_t i = 0; i < count; ++i) owner[i] = family.index_of(sampling.point(i));

    const auto& pkts = decomposition.packets();
    TubeWeightMatrix matrix;
    matrix.depth = depth;
    matrix.entries = MatrixXd::Zero(static_cast<Eigen::Index>(pkts.size()),
                                    static_cast<Eigen::Index>(sub_count));
    std::vector<double> row(sub_count);
    for (std::size_t t = 0; t < pkts.size(); ++t) {
        Tube tube = decomposition.tube(pkts[t]);
        std::fill(row.begin(), row.end(), 0.0);
        for (std::size_t i = 0; i < count; ++i) {
            VectorXd pt = sampling.point(i);
            double chi = tube.cutoff(pt.head(d - 1), pt[d - 1]);
            row[owner[i]] += chi * chi * density[i] * cellvol;
        }
        for (std::size_t q = 0; q < sub_count; ++q)
            matrix.entries(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(q)) = row[q];
    }
    matrix.row_sums = matrix.entries.rowwise().sum();
    return matrix;
}

WaveTable build_table(const PacketDecomposition& decomposition, const TubeWeightMatrix& weights,
                      const Cube& Q, int depth) {
    require(depth == weights.depth, "build_table: depth mismatch with the weight matrix");
    require(static_cast<std::size_t>(weights.entries.rows()) == decomposition.packets().size(),
            "build_table: weight rows must match the tube count");
    const std::size_t expected =
        static_cast<std::size_t>(std::pow(1 << depth, Q.dim()));
    require(static_cast<std::size_t>(weights.entries.cols()) == expected,
            "build_table: weight columns must match the subcube count");
    WaveTable table;
    table.coefficients = weights.normalized();
    table.depth = depth;
    table.cube = Q;
    return table;
}

FreeWave table_entry(const PacketDecomposition& decomposition, const WaveTable& table,
                     std::size_t q0) {
    require(q0 < static_cast<std::size_t>(table.coefficients.cols()),
            "table_entry: subcube index out of range");
    const auto& pkts = decomposition.packets();
    const auto& src = decomposition.source();
    std::vector<complexd> amps(src.amplitudes().size(), complexd(0.0, 0.0));
    for (std::size_t t = 0; t < pkts.size(); ++t) {
        const double w = table.coefficients(static_cast<Eigen::Index>(t),
                                            static_cast<Eigen::Index>(q0));
        if (w == 0.0) continue;
        const auto& pa = pkts[t].wave.amplitudes();
        for (std::size_t j = 0; j < amps.size(); ++j) amps[j] += w * pa[j];
    }
    return FreeWave(src.grid(), std::move(amps), src.patch(), src.reference_set());
}

FreeWave table_sum(const PacketDecomposition& decomposition, const WaveTable& table) {
    const auto& src = decomposition.source();
    std::vector<complexd> amps(src.amplitudes().size(), complexd(0.0, 0.0));
    const std::size_t cols = static_cast<std::size_t>(table.coefficients.cols());
    for (std::size_t q0 = 0; q0 < cols; ++q0) {
        FreeWave entry = table_entry(decomposition, table, q0);
        const auto& ea = entry.amplitudes();
        for (std::size_t j = 0; j < amps.size(); ++j) amps[j] += ea[j];
    }
    return FreeWave(src.grid(), std::move(amps), src.patch(), src.reference_set());
}

TableMassReport table_mass_report(const PacketDecomposition& decomposition,
                                  const WaveTable& table) {
    TableMassReport report;
    report.source_mass = waves::mass(decomposition.source());
    report.margin_source = waves::margin(decomposition.source());
    report.margin_table = kInf;
    const std::size_t cols = static_cast<std::size_t>(table.coefficients.cols());
    std::vector<double> masses(cols);
    for (std::size_t q0 = 0; q0 < cols; ++q0) {
        FreeWave entry = table_entry(decomposition, table, q0);
        masses[q0] = waves::mass(entry);
        report.margin_table = std::min(report.margin_table, waves::margin(entry));
    }
    report.table_mass = pairwise_sum(masses);
    const double c = decomposition.lattice().c;
    report.kappa = c > 0.0 && report.source_mass > 0.0
                       ? (report.table_mass / report.source_mass - 1.0) / c
                       : 0.0;
    return report;
}

double cross_cube_l1(const PacketDecomposition& decomposition, const WaveTable& table,
                     std::size_t entry_index, const FreeWave& phi2, const FreeWave& phi3,
                     std::size_t target_index, double c, int points_per_axis) {
    require(entry_index != target_index, "cross_cube_l1: entry and target cubes must differ");
    CubeFamily family = subdivide(table.cube, table.depth);
    require(entry_index < family.size() && target_index < family.size(),
            "cross_cube_l1: subcube index out of range");
    FreeWave entry = table_entry(decomposition, table, entry_index);
    Cube target = family.child(target_index);
    Cube core{target.center, target.side * (1.0 - c)};
    SpaceTimeCube sampling = core.sampling(points_per_axis);
    const std::size_t count = sampling.point_count();
    const double cellvol = sampling.cell_volume();
    std::vector<double> vals(count);
    parallel_map(count, vals, [&](std::size_t i) {
        VectorXd pt = sampling.point(i);
        return std::abs(entry.extend_at(pt)) * std::abs(phi2.extend_at(pt)) *
               std::abs(phi3.extend_at(pt)) * cellvol;
    });
    return pairwise_sum(vals);
}

LocalizedTrilinearResult localized_trilinear_diagnostic(const Cube& q, const FreeWave& phi1,
                                                        const FreeWave& phi2,
                                                        const FreeWave& phi3, double mu,
                                                        int points_per_axis, int cutoff_power) {
    const double r = q.side;
    require(mu >= 1.0 / r, "localized_trilinear_diagnostic: mu must be at least 1/r");
    const int n = phi1.n();

    SpaceTimeCube inner = q.sampling(points_per_axis);
    const std::size_t count = inner.point_count();
    const double cellvol = inner.cell_volume();
    std::vector<double> vals(count);
    parallel_map(count, vals, [&](std::size_t i) {
        VectorXd pt = inner.point(i);
        return std::abs(phi1.extend_at(pt)) * std::abs(phi2.extend_at(pt)) *
               std::abs(phi3.extend_at(pt)) * cellvol;
    });
    LocalizedTrilinearResult result;
    result.l1 = pairwise_sum(vals);

    // chi~_q-weighted global L^2 norms, truncated where the cutoff is tiny.
    Cube extended{q.center, 4.0 * q.side};
    SpaceTimeCube outer = extended.sampling(4 * points_per_axis);
    const std::size_t ocount = outer.point_count();
    const double ovol = outer.cell_volume();
    double denom = 1.0;
    for (const FreeWave* w : {&phi1, &phi2, &phi3}) {
        std::vector<double> acc(ocount);
        parallel_map(ocount, acc, [&](std::size_t i) {
            VectorXd pt = outer.point(i);
            double chi = std::pow(1.0 + (pt - q.center).norm() / r, -cutoff_power);
            return chi * chi * std::norm(w->extend_at(pt)) * ovol;
        });
        denom *= std::sqrt(pairwise_sum(acc));
    }
    result.denominator =
        std::pow(mu, 0.5 * (n - 2)) * std::pow(r, -1.5) * denom;
    result.ratio = result.denominator > 0.0 ? result.l1 / result.denominator : 0.0;
    return result;
}

std::vector<complexd> slab_amplitudes(const geometry::HypersurfacePatch& patch,
                                      const waves::FrequencyGrid& grid, double mu,
                                      const VectorXd& xi_star) {
    require(patch.leaf_chart.has_value(), "slab_amplitudes: patch needs a leaf chart");
    // H = affine span of the leaf plane through xi_star plus the normal.
    VectorXd base = patch.embed(xi_star);
    auto leaf = geometry::leaf_tangents(patch, xi_star);
    VectorXd normal = geometry::unit_normal(patch, xi_star);
    MatrixXd span(patch.n + 1, 3);
    span.col(0) = leaf[0];
    span.col(1) = leaf[1];
    span.col(2) = normal;
    Eigen::HouseholderQR<MatrixXd> qr(span);
    MatrixXd qbasis = qr.householderQ() * MatrixXd::Identity(patch.n + 1, 3);

    std::vector<complexd> amps(grid.node_count(), complexd(0.0, 0.0));
    for (std::size_t j = 0; j < amps.size(); ++j) {
        VectorXd delta = patch.embed(grid.node(j)) - base;
        VectorXd residual = delta - qbasis * (qbasis.transpose() * delta);
        if (residual.norm() <= mu) amps[j] = complexd(1.0, 0.0);
    }
    return amps;
}

namespace {

bool tube_meets_cube(const Tube& tube, const Cube& cube) {
    const int n = static_cast<int>(tube.x_T.size());
    const double half = 0.5 * cube.side;
    const double t0 = cube.center[n] - half;
    const double t1 = cube.center[n] + half;
    VectorXd xq = cube.center.head(n);
    // minimize |xq - x_T + t v| over t in [t0, t1]
    VectorXd a = xq - tube.x_T;
    double t_star = 0.0;
    double vv = tube.velocity.squaredNorm();
    if (vv > 1e-12) t_star = std::clamp(-a.dot(tube.velocity) / vv, t0, t1);
    double dist = (a + t_star * tube.velocity).norm();
    return dist <= tube.radius + 0.5 * cube.side;
}

std::vector<Tube> enumerate_tubes(const PacketLattice& lattice) {
    std::vector<Tube> tubes;
    tubes.reserve(lattice.tube_count());
    std::vector<int> k(lattice.n);
    for (const auto& rep : lattice.leaf_reps) {
        for (int a = 0; a < lattice.n; ++a) k[a] = lattice.k_lo[a];
        for (;;) {
            Tube t;
            t.x_T = lattice.lattice_point(k);
            t.xi_T = rep.xi;
            t.velocity = rep.velocity;
            t.radius = lattice.spacing;
            t.decay_power = lattice.decay_power;
            tubes.push_back(t);
            int a = lattice.n - 1;
            while (a >= 0) {
                if (++k[a] < lattice.k_lo[a] + lattice.k_count[a]) break;
                k[a] = lattice.k_lo[a];
                --a;
            }
            if (a < 0) break;
        }
    }
    return tubes;
}

}  // namespace

PairCensusResult pair_census(const PacketLattice& lattice2, const PacketLattice& lattice3,
                             const Cube& Q, const PacketLattice& pivot,
                             double alpha_min_factor, int stride) {
    require(std::abs(lattice2.r - lattice3.r) <= 1e-9 && std::abs(lattice2.r - pivot.r) <= 1e-9,
            "pair_census: mismatched scales r between the lattices");
    require(std::abs(lattice2.c - lattice3.c) <= 1e-9 && std::abs(lattice2.c - pivot.c) <= 1e-9,
            "pair_census: mismatched smallness parameters c between the lattices");
    require(stride >= 1, "pair_census: stride must be >= 1");
    const int d = Q.dim();
    const double r = pivot.r;
    const int level = pivot.J;
    CubeFamily family = subdivide(Q, level);
    const std::size_t cube_count = family.size();
    const int per_axis = family.per_axis();
    const double R = Q.side;

    std::vector<Tube> tubes2 = enumerate_tubes(lattice2);
    std::vector<Tube> tubes3 = enumerate_tubes(lattice3);

    // Tube incidence lists per cube.
    std::vector<std::vector<int>> hits2(cube_count), hits3(cube_count);
    for (std::size_t q = 0; q < cube_count; ++q) {
        Cube cq = family.child(q);
        for (std::size_t t = 0; t < tubes2.size(); ++t)
            if (tube_meets_cube(tubes2[t], cq)) hits2[q].push_back(static_cast<int>(t));
        for (std::size_t t = 0; t < tubes3.size(); ++t)
            if (tube_meets_cube(tubes3[t], cq)) hits3[q].push_back(static_cast<int>(t));
    }

    // Strided base cubes (near-coincident configurations collapse onto one
    // representative per stride cell).
    std::vector<std::size_t> base;
    {
        std::vector<int> multi(d, 0);
        for (std::size_t q = 0; q < cube_count; ++q) {
            std::size_t rest = q;
            bool keep = true;
            for (int a = d - 1; a >= 0; --a) {
                int i = static_cast<int>(rest % per_axis);
                rest /= per_axis;
                if (i % stride != 0) keep = false;
            }
            if (keep) base.push_back(q);
        }
    }

    // Space-time normal directions of the pivot leaves.
    std::vector<VectorXd> directions;
    for (const auto& rep : pivot.leaf_reps) {
        VectorXd dir(d);
        double w = std::sqrt(1.0 + rep.velocity.squaredNorm());
        dir.head(d - 1) = -rep.velocity / w;
        dir[d - 1] = 1.0 / w;
        directions.push_back(dir);
    }

    const double alpha_min = alpha_min_factor * R;
    const double alpha_max = 2.0 * R;
    PairCensusResult result;
    result.tube_count_2 = tubes2.size();
    result.tube_count_3 = tubes3.size();

    // Quantize a cube index to its stride-cell representative, collapsing
    // near-coincident targets the same way the base cubes are strided.
    const int target_stride = std::max(1, stride / 2);
    auto stride_bin = [&](std::size_t idx) {
        std::size_t bin = 0;
        for (int a = d - 1; a >= 0; --a) {
            int i = static_cast<int>(idx % per_axis);
            idx /= per_axis;
            bin = bin * per_axis + static_cast<std::size_t>(i - i % target_stride);
        }
        return bin;
    };

    // D[q][t2] = number of related cone-target cells of q met by tube t2.
    // The truncated cone uses positive multiples of the normals only.
    std::vector<std::vector<std::uint16_t>> related(base.size());
    for (std::size_t b = 0; b < base.size(); ++b) {
        const Cube cq = family.child(base[b]);
        std::vector<std::uint16_t> d_row(tubes2.size(), 0);
        std::vector<char> seen(cube_count, 0);
        for (const auto& dir : directions) {
            for (double alpha = alpha_min; alpha <= alpha_max; alpha += 0.5 * r) {
                VectorXd p = cq.center + alpha * dir;
                if (!Q.contains(p)) continue;
                std::size_t target = family.index_of(p);
                std::size_t bin = stride_bin(target);
                if (seen[bin]) continue;
                seen[bin] = 1;
                double separation = (family.child(target).center - cq.center).norm();
                if (separation < alpha_min) continue;
                ++result.relation_count;
                for (int t2 : hits2[target])
                    if (d_row[t2] < 0xffff) ++d_row[t2];
            }
        }
        related[b] = std::move(d_row);
    }

    // Strided cube lists per T3.
    std::vector<std::vector<int>> t3_cubes(tubes3.size());
    for (std::size_t b = 0; b < base.size(); ++b)
        for (int t3 : hits3[base[b]]) t3_cubes[t3].push_back(static_cast<int>(b));

    std::vector<std::size_t> per_t3(tubes3.size(), 0);
    std::vector<std::uint32_t> acc(tubes2.size());
    for (std::size_t t3 = 0; t3 < tubes3.size(); ++t3) {
        if (t3_cubes[t3].empty()) continue;
        std::fill(acc.begin(), acc.end(), 0u);
        for (int b : t3_cubes[t3]) {
            const auto& d_row = related[b];
            for (std::size_t t2 = 0; t2 < d_row.size(); ++t2) acc[t2] += d_row[t2];
        }
        per_t3[t3] = *std::max_element(acc.begin(), acc.end());
    }
    result.max_multiplicity = per_t3.empty() ? 0 : *std::max_element(per_t3.begin(), per_t3.end());
    std::sort(per_t3.rbegin(), per_t3.rend());
    for (std::size_t i = 0; i < std::min<std::size_t>(5, per_t3.size()); ++i)
        result.top_counts.push_back(per_t3[i]);
    return result;
}

}  // namespace trilab::tables
