#include "trilab/packets.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "trilab/waves.hpp"

namespace trilab::packets {

using waves::mass;

namespace {

double bspline3(double u) {
    u = std::abs(u);
    if (u >= 2.0) return 0.0;
    if (u >= 1.0) {
        double t = 2.0 - u;
        return t * t * t / 6.0;
    }
    return 2.0 / 3.0 - u * u + 0.5 * u * u * u;
}

/// Normalized band shape: support [-1, 1], value 1 at 0, positive-definite.
double band_shape(double w) { return 1.5 * bspline3(2.0 * w); }

/// Per-axis stencil of the spatial localization kernel. Multiplying the
/// field by the lattice kernel acts on amplitudes as a (2K+1)-tap
/// convolution along the axis; the translates over one spatial period of
/// the lattice sum to the identity exactly.
struct AxisStencil {
    int K = 0;                      // taps per side
    int L = 1;                      // lattice points per period
    std::vector<double> magnitude;  // index k+K, value eta_hat(k h)/P
    std::vector<complexd> phase;    // phase class table, exp(-2 pi i cls / L)

    complexd tap(int k, int k0) const {
        int cls = static_cast<int>(((static_cast<long long>(k) * k0) % L + L) % L);
        return magnitude[k + K] * phase[cls];
    }
};

double band_width(double spacing, double r) {
    return std::min(2.0 * M_PI / spacing, 0.25 / r);
}

AxisStencil make_axis_stencil(double h, double spacing, double band) {
    AxisStencil st;
    const double period = 2.0 * M_PI / h;
    double ratio = period / spacing;
    st.L = static_cast<int>(std::llround(ratio));
    require(st.L >= 1 && std::abs(ratio - st.L) <= 1e-6 * std::max(1.0, ratio),
            "packet stencil: grid spacing is not aligned with the spatial period "
            "(build the wave on a packet-aligned grid)");
    st.K = std::max(0, static_cast<int>(std::floor(band / h - 1e-12)));
    st.K = std::min(st.K, st.L - 1);
    st.magnitude.resize(2 * st.K + 1);
    for (int k = -st.K; k <= st.K; ++k)
        st.magnitude[k + st.K] = spacing * band_shape(k * h / band) / period;
    st.phase.resize(st.L);
    for (int cls = 0; cls < st.L; ++cls) {
        double theta = -2.0 * M_PI * cls / st.L;
        st.phase[cls] = complexd(std::cos(theta), std::sin(theta));
    }
    return st;
}

struct StencilPlan {
    std::vector<AxisStencil> axes;
    std::vector<int> extra;                 // grid enlargement per axis (= K)
    std::vector<std::vector<int>> offsets;  // all tap offset combinations
};

StencilPlan make_plan(const FrequencyGrid& grid, const PacketLattice& lattice) {
    StencilPlan plan;
    const int n = grid.dim();
    const double band = band_width(lattice.spacing, lattice.r);
    for (int a = 0; a < n; ++a) {
        plan.axes.push_back(make_axis_stencil(grid.spacing(a), lattice.spacing, band));
        require(plan.axes.back().L == lattice.period_L[a],
                "decompose: wave grid has a different spatial period than the lattice");
        plan.extra.push_back(plan.axes.back().K);
    }
    std::vector<int> off(n);
    for (int a = 0; a < n; ++a) off[a] = -plan.axes[a].K;
    for (;;) {
        plan.offsets.push_back(off);
        int a = n - 1;
        while (a >= 0) {
            if (++off[a] <= plan.axes[a].K) break;
            off[a] = -plan.axes[a].K;
            --a;
        }
        if (a < 0) break;
    }
    return plan;
}

std::vector<std::size_t> assign_leaves(const FreeWave& wave, const PacketLattice& lattice) {
    const auto& patch = *wave.patch();
    const std::size_t count = wave.grid().node_count();
    std::vector<std::size_t> owner(count);
    parallel_chunks(count, 2048, [&](std::size_t b, std::size_t e) {
        for (std::size_t j = b; j < e; ++j) {
            VectorXd proj = patch.chart_projection(wave.grid().node(j));
            std::size_t best = 0;
            double best_dist = kInf;
            for (std::size_t l = 0; l < lattice.leaf_reps.size(); ++l) {
                double d = (proj - lattice.leaf_reps[l].proj).norm();
                if (d < best_dist) {  // ties keep the earliest representative
                    best_dist = d;
                    best = l;
                }
            }
            owner[j] = best;
        }
    });
    return owner;
}

FreeWave embed_on_enlarged(const FreeWave& wave, const FrequencyGrid& enlarged,
                           const std::vector<int>& extra) {
    const int n = wave.grid().dim();
    std::vector<complexd> amps(enlarged.node_count(), complexd(0.0, 0.0));
    std::vector<int> multi(n);
    for (std::size_t j = 0; j < wave.amplitudes().size(); ++j) {
        wave.grid().unravel(j, multi.data());
        for (int a = 0; a < n; ++a) multi[a] += extra[a];
        amps[enlarged.ravel(multi.data())] = wave.amplitudes()[j];
    }
    return FreeWave(enlarged, std::move(amps), wave.patch(), wave.reference_set());
}

void scatter_packet(const FreeWave& wave, const FrequencyGrid& enlarged, const StencilPlan& plan,
                    const std::vector<std::size_t>& owner, std::size_t leaf,
                    const std::vector<int>& k0, std::vector<complexd>& out) {
    const int n = wave.grid().dim();
    std::fill(out.begin(), out.end(), complexd(0.0, 0.0));
    std::vector<std::vector<complexd>> taps(n);
    for (int a = 0; a < n; ++a) {
        const auto& st = plan.axes[a];
        taps[a].resize(2 * st.K + 1);
        for (int k = -st.K; k <= st.K; ++k) taps[a][k + st.K] = st.tap(k, k0[a]);
    }
    std::vector<int> multi(n), target(n);
    const auto& amps = wave.amplitudes();
    for (std::size_t j = 0; j < amps.size(); ++j) {
        if (owner[j] != leaf) continue;
        const complexd amp = amps[j];
        if (amp.real() == 0.0 && amp.imag() == 0.0) continue;
        wave.grid().unravel(j, multi.data());
        for (const auto& off : plan.offsets) {
            complexd coeff = amp;
            for (int a = 0; a < n; ++a) {
                coeff *= taps[a][off[a] + plan.axes[a].K];
                target[a] = multi[a] + plan.extra[a] + off[a];
            }
            out[enlarged.ravel(target.data())] += coeff;
        }
    }
}

void check_decompose_inputs(const FreeWave& wave, const PacketLattice& lattice) {
    const auto& patch = *wave.patch();
    require(patch.leaf_chart.has_value(), "decompose: patch has no leaf chart");
    require(patch.has_identity_rotation(),
            "decompose: packet machinery needs patches in their own graph frame");
    require(wave.grid().dim() == lattice.n, "decompose: dimension mismatch");
    require(!lattice.leaf_reps.empty(), "decompose: lattice has no leaf representatives");
    require(waves::margin(wave) > 0.0, "decompose: wave must have positive margin");
}

}  // namespace

std::size_t PacketLattice::spatial_count() const {
    std::size_t count = 1;
    for (int c : k_count) count *= static_cast<std::size_t>(c);
    return count;
}

VectorXd PacketLattice::lattice_point(const std::vector<int>& k) const {
    VectorXd x(n);
    for (int a = 0; a < n; ++a) x[a] = spacing * k[a];
    return x;
}

double Tube::cutoff(const VectorXd& x, double t) const {
    double dist = (x - x_T + t * velocity).norm();
    return std::pow(1.0 + dist / radius, -decay_power);
}

double Tube::cutoff_at(const VectorXd& spacetime_point) const {
    const int n = static_cast<int>(x_T.size());
    return cutoff(spacetime_point.head(n), spacetime_point[n]);
}

int dyadic_level(double R) {
    require(R > 1.0, "dyadic_level: R must exceed 1");
    const double root = std::sqrt(R);
    int best = 0;
    double best_err = kInf;
    for (int j = 0; R / std::pow(2.0, j) >= 0.25; ++j) {
        double err = std::abs(R / std::pow(2.0, j) - root);
        if (err <= best_err) {
            best_err = err;
            best = j;
        }
    }
    return best;
}

std::vector<int> lattice_periods(const FrequencyGrid& grid, double spacing) {
    std::vector<int> periods;
    for (int a = 0; a < grid.dim(); ++a) {
        double ratio = 2.0 * M_PI / (grid.spacing(a) * spacing);
        int L = static_cast<int>(std::llround(ratio));
        require(L >= 1 && std::abs(ratio - L) <= 1e-6 * std::max(1.0, ratio),
                "lattice_periods: grid spacing is not an exact divisor of the spatial period");
        periods.push_back(L);
    }
    return periods;
}

PacketLattice build_lattice(const PatchPtr& patch, double R, double c,
                            const FrequencyGrid& grid, const Box& spatial_box, int decay_power) {
    require(static_cast<bool>(patch), "build_lattice: missing patch");
    require(patch->leaf_chart.has_value(), "build_lattice: patch has no leaf chart");
    require(R > 1.0, "build_lattice: R must exceed 1");
    require(c > 0.0 && c < 1.0, "build_lattice: c must lie in (0,1)");
    require(grid.dim() == patch->n, "build_lattice: grid/patch dimension mismatch");
    require(grid.node_count() > 0, "build_lattice: empty grid");

    PacketLattice lattice;
    lattice.R = R;
    lattice.J = dyadic_level(R);
    lattice.r = R / std::pow(2.0, lattice.J);
    lattice.c = c;
    lattice.spacing = lattice.r / (c * c);
    lattice.n = patch->n;
    lattice.decay_power = decay_power;
    lattice.period_L = lattice_periods(grid, lattice.spacing);

    // Greedy maximal r^{-1}-separated set of projected chart coordinates,
    // grid nodes scanned in lexicographic order.
    const double separation = 1.0 / lattice.r;
    for (std::size_t j = 0; j < grid.node_count(); ++j) {
        VectorXd xi = grid.node(j);
        VectorXd proj = patch->chart_projection(xi);
        bool fresh = true;
        for (const auto& rep : lattice.leaf_reps) {
            if ((proj - rep.proj).norm() < separation) {
                fresh = false;
                break;
            }
        }
        if (fresh) lattice.leaf_reps.push_back(LeafRep{xi, proj, patch->gradient(xi)});
    }
    ensure(!lattice.leaf_reps.empty(), "build_lattice: no leaf representatives selected");

    // Spatial lattice: (c^{-2} r) Z^n inside the bounding box, default one
    // full period per axis centered at the origin.
    lattice.k_lo.resize(lattice.n);
    lattice.k_count.resize(lattice.n);
    lattice.complete = true;
    for (int a = 0; a < lattice.n; ++a) {
        const int L = lattice.period_L[a];
        if (spatial_box.dim() == 0) {
            lattice.k_lo[a] = -(L / 2);
            lattice.k_count[a] = L;
        } else {
            require(spatial_box.dim() == lattice.n, "build_lattice: bounding box dimension");
            int lo = static_cast<int>(std::ceil(spatial_box.lo[a] / lattice.spacing - 1e-9));
            int hi = static_cast<int>(std::floor(spatial_box.hi[a] / lattice.spacing + 1e-9));
            require(hi >= lo, "build_lattice: bounding box contains no lattice points");
            // More than one period would duplicate tubes; clamp.
            if (hi - lo + 1 > L) hi = lo + L - 1;
            lattice.k_lo[a] = lo;
            lattice.k_count[a] = hi - lo + 1;
            if (lattice.k_count[a] < L) lattice.complete = false;
        }
    }
    return lattice;
}

PacketDecomposition::PacketDecomposition(PacketLattice lattice, FreeWave source_embedded,
                                         std::vector<Packet> packets,
                                         std::vector<int> enlargement)
    : lattice_(std::move(lattice)),
      source_(std::move(source_embedded)),
      packets_(std::move(packets)),
      enlargement_(std::move(enlargement)) {}

Tube PacketDecomposition::tube(const Packet& packet) const {
    const auto& rep = lattice_.leaf_reps[packet.leaf];
    Tube t;
    t.x_T = lattice_.lattice_point(packet.k);
    t.xi_T = rep.xi;
    t.velocity = rep.velocity;
    t.radius = lattice_.spacing;
    t.decay_power = lattice_.decay_power;
    return t;
}

FreeWave PacketDecomposition::reconstruct() const {
    std::vector<complexd> amps(source_.amplitudes().size(), complexd(0.0, 0.0));
    for (const auto& packet : packets_) {
        const auto& pa = packet.wave.amplitudes();
        for (std::size_t j = 0; j < amps.size(); ++j) amps[j] += pa[j];
    }
    return FreeWave(source_.grid(), std::move(amps), source_.patch(), source_.reference_set());
}

double PacketDecomposition::reconstruction_error() const {
    FreeWave rec = reconstruct();
    double num = 0.0, den = 0.0;
    const auto& ra = rec.amplitudes();
    const auto& sa = source_.amplitudes();
    for (std::size_t j = 0; j < sa.size(); ++j) {
        num += std::norm(ra[j] - sa[j]);
        den += std::norm(sa[j]);
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

double PacketDecomposition::max_leaf_distance_factor() const {
    const auto& patch = *source_.patch();
    double worst = 0.0;
    for (const auto& packet : packets_) {
        const VectorXd& leaf_proj = lattice_.leaf_reps[packet.leaf].proj;
        const auto& amps = packet.wave.amplitudes();
        for (std::size_t j = 0; j < amps.size(); ++j) {
            if (amps[j].real() == 0.0 && amps[j].imag() == 0.0) continue;
            VectorXd proj = patch.chart_projection(packet.wave.grid().node(j));
            worst = std::max(worst, (proj - leaf_proj).norm() * lattice_.r);
        }
    }
    return worst;
}

PacketDecomposition decompose(const FreeWave& wave, const PacketLattice& lattice) {
    check_decompose_inputs(wave, lattice);
    StencilPlan plan = make_plan(wave.grid(), lattice);
    FrequencyGrid enlarged = wave.grid().enlarged(plan.extra);
    std::vector<std::size_t> owner = assign_leaves(wave, lattice);
    FreeWave source = embed_on_enlarged(wave, enlarged, plan.extra);

    std::vector<Packet> packets;
    packets.reserve(lattice.tube_count());
    std::vector<complexd> buffer(enlarged.node_count());
    std::vector<int> k(lattice.n);
    for (std::size_t leaf = 0; leaf < lattice.leaf_reps.size(); ++leaf) {
        for (int a = 0; a < lattice.n; ++a) k[a] = lattice.k_lo[a];
        for (;;) {
            scatter_packet(wave, enlarged, plan, owner, leaf, k, buffer);
            packets.push_back(Packet{leaf, k,
                                     FreeWave(enlarged, buffer, wave.patch(),
                                              wave.reference_set())});
            int a = lattice.n - 1;
            while (a >= 0) {
                if (++k[a] < lattice.k_lo[a] + lattice.k_count[a]) break;
                k[a] = lattice.k_lo[a];
                --a;
            }
            if (a < 0) break;
        }
    }
    return PacketDecomposition(lattice, std::move(source), std::move(packets), plan.extra);
}

Packet single_packet(const FreeWave& wave, const PacketLattice& lattice, std::size_t leaf,
                     const std::vector<int>& k) {
    check_decompose_inputs(wave, lattice);
    require(leaf < lattice.leaf_reps.size(), "single_packet: leaf index out of range");
    require(static_cast<int>(k.size()) == lattice.n, "single_packet: lattice index size");
    StencilPlan plan = make_plan(wave.grid(), lattice);
    FrequencyGrid enlarged = wave.grid().enlarged(plan.extra);
    std::vector<std::size_t> owner = assign_leaves(wave, lattice);
    std::vector<complexd> buffer(enlarged.node_count());
    scatter_packet(wave, enlarged, plan, owner, leaf, k, buffer);
    return Packet{leaf, k, FreeWave(enlarged, std::move(buffer), wave.patch(),
                                    wave.reference_set())};
}

DecayFit tube_decay(const PacketDecomposition& decomposition, const Packet& packet,
                    const SpaceTimeCube& cube, const std::vector<double>& distances) {
    require(distances.size() >= 3, "tube_decay: too few distance samples (need >= 3)");
    const double R = decomposition.lattice().R;
    double farthest = *std::max_element(distances.begin(), distances.end());
    require(farthest >= 4.0 * R, "tube_decay: farthest sample must be at least 4R from the tube");

    Tube tube = decomposition.tube(packet);
    const int n = static_cast<int>(tube.x_T.size());
    // Offset direction: spatial, orthogonal to the tube velocity.
    VectorXd e = VectorXd::Zero(n);
    if (tube.velocity.norm() < 1e-12) {
        e[0] = 1.0;
    } else {
        VectorXd v = tube.velocity.normalized();
        int axis = 0;
        for (int a = 1; a < n; ++a)
            if (std::abs(v[a]) < std::abs(v[axis])) axis = a;
        e[axis] = 1.0;
        e -= e.dot(v) * v;
        e.normalize();
    }

    std::size_t nonzero = 0;
    for (const auto& amp : packet.wave.amplitudes())
        if (amp.real() != 0.0 || amp.imag() != 0.0) ++nonzero;

    DecayFit fit;
    fit.distances = distances;
    fit.below_resolution = nonzero <= 1;
    for (double dist : distances) {
        SpaceTimeCube shifted = cube;
        shifted.center = VectorXd::Zero(n + 1);
        shifted.center.head(n) = tube.x_T + dist * e;
        double sup = 0.0;
        const std::size_t count = shifted.point_count();
        for (std::size_t i = 0; i < count; ++i)
            sup = std::max(sup, std::abs(packet.wave.extend_at(shifted.point(i))));
        fit.sup_values.push_back(sup);
    }
    bool positive = std::all_of(fit.sup_values.begin(), fit.sup_values.end(),
                                [](double v) { return v > 0.0; });
    if (!positive) {
        fit.below_resolution = true;
        return fit;
    }
    // A single-frequency packet has constant modulus; report slope 0.
    double spread = *std::max_element(fit.sup_values.begin(), fit.sup_values.end()) /
                    *std::min_element(fit.sup_values.begin(), fit.sup_values.end());
    if (fit.below_resolution || spread < 1.0 + 1e-9) {
        fit.below_resolution = true;
        fit.slope = 0.0;
        return fit;
    }
    LineFit line = fit_loglog(fit.distances, fit.sup_values);
    fit.slope = line.slope;
    fit.intercept = line.intercept;
    fit.residual = line.residual;
    return fit;
}

MassCensus local_mass_census(const PacketDecomposition& decomposition, const SpaceTimeCube& Q,
                             int points_per_subcube_axis) {
    const auto& lattice = decomposition.lattice();
    require(std::abs(Q.side - lattice.R) <= 1e-9 * lattice.R,
            "local_mass_census: cube side must equal the lattice scale R");
    require(points_per_subcube_axis >= 1, "local_mass_census: need >= 1 point per axis");
    const int d = Q.dim();
    const int per_axis = 1 << lattice.J;  // subcubes per axis
    const double sub_side = Q.side / per_axis;

    SpaceTimeCube sampling = Q;
    sampling.resolution.assign(d, per_axis * points_per_subcube_axis);
    const std::size_t count = sampling.point_count();
    const double cellvol = sampling.cell_volume();
    const std::size_t sub_count = static_cast<std::size_t>(std::pow(per_axis, d));

    // Subcube centers.
    std::vector<VectorXd> centers(sub_count);
    for (std::size_t q = 0; q < sub_count; ++q) {
        VectorXd center(d);
        std::size_t rest = q;
        for (int a = d - 1; a >= 0; --a) {
            int i = static_cast<int>(rest % per_axis);
            rest /= per_axis;
            center[a] = Q.center[a] - 0.5 * Q.side + (i + 0.5) * sub_side;
        }
        centers[q] = center;
    }

    auto subcube_of = [&](const VectorXd& p) {
        std::size_t idx = 0;
        for (int a = 0; a < d; ++a) {
            int i = static_cast<int>((p[a] - (Q.center[a] - 0.5 * Q.side)) / sub_side);
            i = std::clamp(i, 0, per_axis - 1);
            idx = idx * per_axis + i;
        }
        return idx;
    };

    MassCensus census;
    census.cube_count = sub_count;
    std::vector<double> per_tube(decomposition.packets().size(), 0.0);
    for (std::size_t t = 0; t < decomposition.packets().size(); ++t) {
        const auto& packet = decomposition.packets()[t];
        Tube tube = decomposition.tube(packet);
        std::vector<double> sub_mass(sub_count, 0.0);
        std::vector<double> values(count);
        parallel_map(count, values, [&](std::size_t i) {
            return std::norm(packet.wave.extend_at(sampling.point(i)));
        });
        for (std::size_t i = 0; i < count; ++i)
            sub_mass[subcube_of(sampling.point(i))] += values[i] * cellvol;
        double best = 0.0;
        for (std::size_t q = 0; q < sub_count; ++q) {
            double weight = std::pow(tube.cutoff_at(centers[q]),
                                     -static_cast<double>(lattice.decay_power));
            best = std::max(best, weight * sub_mass[q]);
        }
        per_tube[t] = best;
    }
    census.weighted_sum = pairwise_sum(per_tube);
    double total = mass(decomposition.source());
    census.ratio = total > 0.0 ? census.weighted_sum / (lattice.r * total) : 0.0;
    return census;
}

WeightedMassCheck weighted_mass_check(const PacketDecomposition& decomposition,
                                      const Eigen::MatrixXd& weights, double c_config) {
    const auto& packets = decomposition.packets();
    require(static_cast<std::size_t>(weights.rows()) == packets.size(),
            "weighted_mass_check: one row per tube required");
    require(weights.cols() >= 1, "weighted_mass_check: need at least one group");
    for (Eigen::Index t = 0; t < weights.rows(); ++t) {
        require(weights.row(t).minCoeff() >= -1e-15, "weighted_mass_check: negative weight");
        require(std::abs(weights.row(t).sum() - 1.0) <= 1e-12,
                "weighted_mass_check: row sums must equal 1 within 1e-12");
    }

    const std::size_t node_count = decomposition.source().amplitudes().size();
    const double cellvol = decomposition.source().grid().weight();
    std::vector<double> group_mass(weights.cols(), 0.0);
    std::vector<complexd> combined(node_count);
    for (Eigen::Index g = 0; g < weights.cols(); ++g) {
        std::fill(combined.begin(), combined.end(), complexd(0.0, 0.0));
        for (std::size_t t = 0; t < packets.size(); ++t) {
            const double w = weights(static_cast<Eigen::Index>(t), g);
            if (w == 0.0) continue;
            const auto& pa = packets[t].wave.amplitudes();
            for (std::size_t j = 0; j < node_count; ++j) combined[j] += w * pa[j];
        }
        group_mass[g] = cellvol * indexed_sum<double>(node_count, [&](std::size_t j) {
                            return std::norm(combined[j]);
                        });
    }

    WeightedMassCheck check;
    check.lhs = std::sqrt(pairwise_sum(group_mass));
    check.rhs = (1.0 + decomposition.lattice().c * c_config) *
                std::sqrt(mass(decomposition.source()));
    check.pass = check.lhs <= check.rhs;
    return check;
}

void write_manifest(std::ostream& out, const PacketDecomposition& decomposition,
                    std::size_t max_tubes) {
    const auto& lattice = decomposition.lattice();
    out.precision(17);
    out << "trilab-packets 1\n";
    out << "n " << lattice.n << "\n";
    out << "R " << lattice.R << "\nJ " << lattice.J << "\nr " << lattice.r << "\nc "
        << lattice.c << "\nspacing " << lattice.spacing << "\ndecay_power "
        << lattice.decay_power << "\ncomplete " << (lattice.complete ? 1 : 0) << "\n";
    out << "leaves " << lattice.leaf_reps.size() << "\n";
    for (const auto& rep : lattice.leaf_reps) {
        out << "leaf";
        for (int a = 0; a < rep.xi.size(); ++a) out << " " << rep.xi[a];
        out << " ;";
        for (int a = 0; a < rep.proj.size(); ++a) out << " " << rep.proj[a];
        out << " ;";
        for (int a = 0; a < rep.velocity.size(); ++a) out << " " << rep.velocity[a];
        out << "\n";
    }
    std::size_t listed = std::min(max_tubes, decomposition.packets().size());
    out << "tubes " << listed << " of " << decomposition.packets().size() << "\n";
    for (std::size_t t = 0; t < listed; ++t) {
        const auto& packet = decomposition.packets()[t];
        out << "tube " << t << " leaf " << packet.leaf << " k";
        for (int v : packet.k) out << " " << v;
        out << " file tube_" << t << ".wave\n";
    }
}

}  // namespace trilab::packets
