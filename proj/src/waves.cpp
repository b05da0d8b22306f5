#include "trilab/waves.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace trilab::waves {

FrequencyGrid FrequencyGrid::regular(const Box& box, const std::vector<int>& resolution) {
    require(static_cast<int>(resolution.size()) == box.dim(),
            "grid: resolution/box dimension mismatch");
    for (int r : resolution) require(r >= 1, "grid: resolution must be >= 1");
    return FrequencyGrid{box, resolution};
}

FrequencyGrid FrequencyGrid::packet_aligned(const Box& target, const std::vector<int>& target_res,
                                            double R, double c) {
    require(R > 1.0, "packet_aligned: R must exceed 1");
    require(c > 0.0 && c < 1.0, "packet_aligned: c must lie in (0,1)");
    require(static_cast<int>(target_res.size()) == target.dim(),
            "packet_aligned: resolution/box dimension mismatch");
    // r = 2^{-J} R nearest to sqrt(R), ties toward larger J.
    const double root = std::sqrt(R);
    int best_j = 0;
    double best_err = kInf;
    for (int j = 0; (R / std::pow(2.0, j)) >= 0.5; ++j) {
        double err = std::abs(R / std::pow(2.0, j) - root);
        if (err <= best_err) {
            best_err = err;
            best_j = j;
        }
    }
    const double r = R / std::pow(2.0, best_j);
    const double fundamental = 2.0 * M_PI * c * c / r;  // h for L = 1

    Box box = target;
    std::vector<int> res(target.dim());
    for (int a = 0; a < target.dim(); ++a) {
        double width = target.hi[a] - target.lo[a];
        double h0 = width / target_res[a];
        int bigl = std::max(1, static_cast<int>(std::llround(fundamental / h0)));
        double h = fundamental / bigl;
        int m = static_cast<int>(std::floor(width / h + 1e-9));
        require(m >= 2, "packet_aligned: requested box cannot hold 2 aligned cells per axis");
        double center = 0.5 * (target.lo[a] + target.hi[a]);
        box.lo[a] = center - 0.5 * m * h;
        box.hi[a] = center + 0.5 * m * h;
        res[a] = m;
    }
    return FrequencyGrid{box, res};
}

std::size_t FrequencyGrid::node_count() const {
    std::size_t count = 1;
    for (int r : resolution) count *= static_cast<std::size_t>(r);
    return count;
}

double FrequencyGrid::spacing(int axis) const {
    return (box.hi[axis] - box.lo[axis]) / resolution[axis];
}

double FrequencyGrid::weight() const {
    double w = 1.0;
    for (int a = 0; a < dim(); ++a) w *= spacing(a);
    return w;
}

void FrequencyGrid::unravel(std::size_t idx, int* multi) const {
    for (int a = dim() - 1; a >= 0; --a) {
        multi[a] = static_cast<int>(idx % resolution[a]);
        idx /= resolution[a];
    }
}

std::size_t FrequencyGrid::ravel(const int* multi) const {
    std::size_t idx = 0;
    for (int a = 0; a < dim(); ++a) idx = idx * resolution[a] + multi[a];
    return idx;
}

double FrequencyGrid::coord(int axis, int idx) const {
    return box.lo[axis] + (idx + 0.5) * spacing(axis);
}

VectorXd FrequencyGrid::node(std::size_t idx) const {
    VectorXd xi(dim());
    std::vector<int> multi(dim());
    unravel(idx, multi.data());
    for (int a = 0; a < dim(); ++a) xi[a] = coord(a, multi[a]);
    return xi;
}

FrequencyGrid FrequencyGrid::enlarged(const std::vector<int>& extra) const {
    FrequencyGrid g = *this;
    for (int a = 0; a < dim(); ++a) {
        double h = spacing(a);
        g.box.lo[a] -= extra[a] * h;
        g.box.hi[a] += extra[a] * h;
        g.resolution[a] += 2 * extra[a];
    }
    return g;
}

std::size_t SpaceTimeCube::point_count() const {
    std::size_t count = 1;
    for (int r : resolution) count *= static_cast<std::size_t>(r);
    return count;
}

VectorXd SpaceTimeCube::point(std::size_t idx) const {
    const int d = dim();
    VectorXd p(d);
    for (int a = d - 1; a >= 0; --a) {
        int i = static_cast<int>(idx % resolution[a]);
        idx /= resolution[a];
        double h = side / resolution[a];
        p[a] = center[a] - 0.5 * side + (i + 0.5) * h;
    }
    return p;
}

double SpaceTimeCube::cell_volume() const {
    double v = 1.0;
    for (int r : resolution) v *= side / r;
    return v;
}

Box SpaceTimeCube::bounds() const {
    Box b;
    b.lo = center.array() - 0.5 * side;
    b.hi = center.array() + 0.5 * side;
    return b;
}

FreeWave::FreeWave(FrequencyGrid grid, std::vector<complexd> amplitudes, PatchPtr patch,
                   Box reference_set)
    : grid_(std::move(grid)),
      amps_(std::move(amplitudes)),
      patch_(std::move(patch)),
      reference_(std::move(reference_set)) {
    require(static_cast<bool>(patch_), "free wave: missing patch");
    require(grid_.dim() == patch_->n, "free wave: grid/patch dimension mismatch");
    require(amps_.size() == grid_.node_count(), "free wave: amplitude count mismatch");
    require(reference_.dim() == grid_.dim(), "free wave: reference set dimension mismatch");
    for (int a = 0; a < grid_.dim(); ++a)
        require(reference_.lo[a] <= grid_.box.lo[a] + 1e-12 &&
                    reference_.hi[a] >= grid_.box.hi[a] - 1e-12,
                "free wave: reference set must contain the grid box");
    for (auto& amp : amps_)
        if (std::abs(amp) < 1e-300) amp = complexd(0.0, 0.0);

    const int n = grid_.dim();
    const std::size_t count = grid_.node_count();
    sigma_.resize(count * static_cast<std::size_t>(n + 1));
    phi_.resize(count);
    parallel_chunks(count, 4096, [&](std::size_t b, std::size_t e) {
        for (std::size_t j = b; j < e; ++j) {
            VectorXd xi = grid_.node(j);
            VectorXd sig = patch_->embed(xi);
            phi_[j] = patch_->phase(xi);
            for (int a = 0; a <= n; ++a) sigma_[j * (n + 1) + a] = sig[a];
        }
    });
}

complexd FreeWave::extend_at(const VectorXd& point) const {
    const int d = grid_.dim() + 1;
    require(point.size() == d, "extend: point dimension mismatch");
    const std::size_t count = amps_.size();
    const double weight = grid_.weight();
    const double* p = point.data();

    constexpr std::size_t kChunk = 4096;
    const std::size_t nchunks = (count + kChunk - 1) / kChunk;
    std::vector<complexd> partial(nchunks, complexd(0.0, 0.0));
    for (std::size_t cidx = 0; cidx < nchunks; ++cidx) {
        complexd acc(0.0, 0.0);
        const std::size_t hi = std::min(count, (cidx + 1) * kChunk);
        for (std::size_t j = cidx * kChunk; j < hi; ++j) {
            const complexd amp = amps_[j];
            if (amp.real() == 0.0 && amp.imag() == 0.0) continue;
            const double* sig = &sigma_[j * d];
            double theta = 0.0;
            for (int a = 0; a < d; ++a) theta += p[a] * sig[a];
            acc += amp * complexd(std::cos(theta), std::sin(theta));
        }
        partial[cidx] = acc;
    }
    return weight * pairwise_sum(partial);
}

double FreeWave::max_phase_per_cell(const SpaceTimeCube& cube) const {
    const int n = grid_.dim();
    double xmax = 0.0;
    for (int a = 0; a < n; ++a)
        xmax = std::max(xmax, std::max(std::abs(cube.center[a]) + 0.5 * cube.side,
                                       std::abs(cube.center[a] - 0.5 * cube.side)));
    double tmax = std::abs(cube.center[n]) + 0.5 * cube.side;
    // phase change across one cell <= h * (|x|_max + |t|_max * Lip(phi))
    double worst = 0.0;
    for (int a = 0; a < n; ++a) {
        double lip = 0.0;
        // finite-difference Lipschitz estimate along axis a
        std::vector<int> multi(n);
        for (std::size_t j = 0; j < amps_.size(); ++j) {
            grid_.unravel(j, multi.data());
            if (multi[a] + 1 >= grid_.resolution[a]) continue;
            std::size_t k = j;
            ++multi[a];
            k = grid_.ravel(multi.data());
            --multi[a];
            lip = std::max(lip, std::abs(phi_[k] - phi_[j]) / grid_.spacing(a));
        }
        worst = std::max(worst, grid_.spacing(a) * (xmax + tmax * lip));
    }
    return worst;
}

std::vector<complexd> extend(const FreeWave& wave, const std::vector<VectorXd>& points) {
    std::vector<complexd> out(points.size());
    parallel_map(points.size(), out, [&](std::size_t i) { return wave.extend_at(points[i]); });
    return out;
}

double mass(const FreeWave& wave) {
    const auto& amps = wave.amplitudes();
    double grid_weight = wave.grid().weight();
    return grid_weight *
           indexed_sum<double>(amps.size(), [&](std::size_t j) { return std::norm(amps[j]); });
}

double margin(const FreeWave& wave) {
    const auto& amps = wave.amplitudes();
    const Box& ref = wave.reference_set();
    const int n = wave.grid().dim();
    double best = kInf;
    bool any = false;
    for (std::size_t j = 0; j < amps.size(); ++j) {
        if (amps[j].real() == 0.0 && amps[j].imag() == 0.0) continue;
        any = true;
        VectorXd xi = wave.grid().node(j);
        double dist = kInf;
        for (int a = 0; a < n; ++a) {
            double d = std::min(xi[a] - ref.lo[a], ref.hi[a] - xi[a]);
            dist = std::min(dist, d);
        }
        best = std::min(best, std::max(0.0, dist));
    }
    return any ? best : kInf;
}

FreeWave evolve(const FreeWave& wave, double t) {
    FreeWave out = wave;
    for (std::size_t j = 0; j < out.amps_.size(); ++j) {
        double theta = t * out.phi_[j];
        out.amps_[j] *= complexd(std::cos(theta), std::sin(theta));
    }
    return out;
}

double product_lp_norm(const std::vector<const FreeWave*>& waves, const SpaceTimeCube& cube,
                       double p) {
    require(p > 0.0, "product_lp_norm: p must be positive");
    require(!waves.empty(), "product_lp_norm: empty wave list");
    for (const auto* w : waves)
        require(w->n() + 1 == cube.dim(), "product_lp_norm: cube dimension mismatch");

    const std::size_t count = cube.point_count();
    const double cellvol = cube.cell_volume();
    constexpr std::size_t kChunk = 512;
    const std::size_t nchunks = (count + kChunk - 1) / kChunk;
    std::vector<double> partial(nchunks, 0.0);
    parallel_chunks(count, kChunk, [&](std::size_t b, std::size_t e) {
        double acc = 0.0;
        for (std::size_t i = b; i < e; ++i) {
            VectorXd pt = cube.point(i);
            double modulus = 1.0;
            for (const auto* w : waves) modulus *= std::abs(w->extend_at(pt));
            acc += std::pow(modulus, p) * cellvol;
        }
        partial[b / kChunk] = acc;
    });
    return std::pow(pairwise_sum(partial), 1.0 / p);
}

std::vector<double> product_moduli(const std::vector<const FreeWave*>& waves, const Box& box,
                                   const std::vector<int>& resolution) {
    require(!waves.empty(), "product_moduli: empty wave list");
    const int d = box.dim();
    require(static_cast<int>(resolution.size()) == d, "product_moduli: resolution size mismatch");
    for (const auto* w : waves)
        require(w->n() + 1 == d, "product_moduli: box dimension mismatch");
    std::size_t count = 1;
    for (int r : resolution) {
        require(r >= 1, "product_moduli: resolution must be >= 1");
        count *= static_cast<std::size_t>(r);
    }
    std::vector<double> out(count);
    parallel_chunks(count, 512, [&](std::size_t b, std::size_t e) {
        VectorXd pt(d);
        for (std::size_t i = b; i < e; ++i) {
            std::size_t rest = i;
            for (int a = d - 1; a >= 0; --a) {
                int idx = static_cast<int>(rest % resolution[a]);
                rest /= resolution[a];
                double h = (box.hi[a] - box.lo[a]) / resolution[a];
                pt[a] = box.lo[a] + (idx + 0.5) * h;
            }
            double modulus = 1.0;
            for (const auto* w : waves) modulus *= std::abs(w->extend_at(pt));
            out[i] = modulus;
        }
    });
    return out;
}

double product_lp_norm(const std::vector<const FreeWave*>& waves, const Box& box,
                       const std::vector<int>& resolution, double p) {
    require(p > 0.0, "product_lp_norm: p must be positive");
    std::vector<double> moduli = product_moduli(waves, box, resolution);
    double cellvol = 1.0;
    for (int a = 0; a < box.dim(); ++a)
        cellvol *= (box.hi[a] - box.lo[a]) / resolution[a];
    for (auto& m : moduli) m = std::pow(m, p) * cellvol;
    return std::pow(pairwise_sum(moduli), 1.0 / p);
}

double trilinear_ratio(const std::vector<const FreeWave*>& waves, const SpaceTimeCube& cube,
                       double p) {
    require(waves.size() == 3, "trilinear_ratio: need exactly 3 waves");
    double denom = 1.0;
    for (const auto* w : waves) {
        double m = mass(*w);
        require(m > 0.0, "trilinear_ratio: zero-mass wave");
        denom *= std::sqrt(m);
    }
    return product_lp_norm(waves, cube, p) / denom;
}

void write_wave(std::ostream& out, const FreeWave& wave) {
    const auto& grid = wave.grid();
    const int n = grid.dim();
    out << "trilab-wave 1\n";
    out << "n " << n << "\n";
    out.precision(17);
    out << "box";
    for (int a = 0; a < n; ++a) out << " " << grid.box.lo[a] << " " << grid.box.hi[a];
    out << "\nresolution";
    for (int a = 0; a < n; ++a) out << " " << grid.resolution[a];
    out << "\nreference";
    for (int a = 0; a < n; ++a)
        out << " " << wave.reference_set().lo[a] << " " << wave.reference_set().hi[a];
    out << "\namplitudes " << wave.amplitudes().size() << "\n";
    for (const auto& amp : wave.amplitudes())
        out << amp.real() << " " << amp.imag() << "\n";
}

FreeWave read_wave(std::istream& in, PatchPtr patch) {
    std::string tag;
    int version = 0;
    in >> tag >> version;
    require(tag == "trilab-wave" && version == 1, "wave file: bad header");
    std::string key;
    int n = 0;
    in >> key >> n;
    require(key == "n" && n >= 1, "wave file: bad dimension line");
    Box box;
    box.lo.resize(n);
    box.hi.resize(n);
    in >> key;
    require(key == "box", "wave file: expected box line");
    for (int a = 0; a < n; ++a) in >> box.lo[a] >> box.hi[a];
    std::vector<int> res(n);
    in >> key;
    require(key == "resolution", "wave file: expected resolution line");
    for (int a = 0; a < n; ++a) in >> res[a];
    Box ref;
    ref.lo.resize(n);
    ref.hi.resize(n);
    in >> key;
    require(key == "reference", "wave file: expected reference line");
    for (int a = 0; a < n; ++a) in >> ref.lo[a] >> ref.hi[a];
    std::size_t count = 0;
    in >> key >> count;
    require(key == "amplitudes", "wave file: expected amplitude count");
    std::vector<complexd> amps(count);
    for (std::size_t j = 0; j < count; ++j) {
        double re = 0.0, im = 0.0;
        in >> re >> im;
        amps[j] = complexd(re, im);
    }
    require(static_cast<bool>(in), "wave file: truncated amplitude list");
    return FreeWave(FrequencyGrid::regular(box, res), std::move(amps), std::move(patch), ref);
}

}  // namespace trilab::waves
