#include "trilab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace trilab::experiments {

using waves::FrequencyGrid;

std::string Rational::str() const {
    if (den == 1) return std::to_string(num);
    return std::to_string(num) + "/" + std::to_string(den);
}

Rational make_rational(long long num, long long den) {
    require(den != 0, "rational: zero denominator");
    if (den < 0) {
        num = -num;
        den = -den;
    }
    long long g = std::gcd(std::abs(num), den);
    if (g > 1) {
        num /= g;
        den /= g;
    }
    return Rational{num, den};
}

Rational threshold_exponent(int n, int k) {
    require(n >= 1, "threshold_exponent: n must be >= 1");
    require(k >= 1 && k <= n + 1,
            "threshold_exponent: k must satisfy 1 <= k <= n+1");
    return make_rational(2LL * (n + 1 + k), static_cast<long long>(k) * (n + k - 1));
}

double raw_slope_target(int n, int k, double p) {
    return static_cast<double>(k) * (n + k - 1) - static_cast<double>(n + 1 + k) / p;
}

double normalized_slope_target(int n, int k, double p) {
    return raw_slope_target(n, k, p) - 0.5 * static_cast<double>(k) * (n + k - 1);
}

LineFit scaling_fit(const ScalingSeries& series) {
    require(series.epsilons.size() == series.values.size(), "scaling_fit: size mismatch");
    require(series.epsilons.size() >= 3, "scaling_fit: need at least 3 points");
    for (double v : series.values)
        require(v > 0.0, "scaling_fit: norm values must be positive");
    return fit_loglog(series.epsilons, series.values);
}

namespace {

void validate(const SquashedCapConfig& config) {
    require(config.n >= 1, "squashed_cap: n must be >= 1");
    require(config.k >= 1 && config.k <= config.n + 1,
            "squashed_cap: k must satisfy 1 <= k <= n+1");
    require(!config.epsilons.empty(), "squashed_cap: need at least one epsilon");
    for (double eps : config.epsilons)
        require(eps > 0.0 && eps <= 0.25, "squashed_cap: epsilon must lie in (0, 1/4]");
    require(config.c_small > 0.0 && config.c_small <= 0.5,
            "squashed_cap: c_small must lie in (0, 1/2]");
    require(config.cap_resolution >= 2,
            "squashed_cap: resolution insufficient to resolve the cap cells "
            "(need >= 2 nodes per axis)");
    require(!config.p_list.empty(), "squashed_cap: need at least one exponent p");
}

/// Cap i: U_i in the hyperplane zeta_i = 0, graphed along ambient slot i.
geometry::PatchPtr make_cap(int n, int k, int cap_index, double eps) {
    VectorXd lo(n), hi(n);
    int f = 0;
    for (int j = 0; j <= n; ++j) {
        if (j == cap_index) continue;
        double half = (j < k) ? eps * eps : eps;
        lo[f] = -half;
        hi[f] = half;
        ++f;
    }
    return patches::sphere_cap(n, cap_index, patches::make_box(lo, hi));
}

Box dual_box(int n, int k, double eps, double c_small) {
    VectorXd lo(n + 1), hi(n + 1);
    for (int j = 0; j <= n; ++j) {
        double half = (j < k) ? c_small / (eps * eps) : c_small / eps;
        lo[j] = -half;
        hi[j] = half;
    }
    return Box{lo, hi};
}

}  // namespace

FreeWave unit_wave(const geometry::PatchPtr& patch, int resolution_per_axis,
                   double reference_pad) {
    FrequencyGrid grid = FrequencyGrid::regular(
        patch->domain, std::vector<int>(patch->n, resolution_per_axis));
    std::vector<complexd> amps(grid.node_count(), complexd(1.0, 0.0));
    return FreeWave(grid, std::move(amps), patch, patch->domain.inflated(reference_pad));
}

SquashedCapResult squashed_cap_run(const SquashedCapConfig& config) {
    validate(config);
    const int n = config.n;
    const int k = config.k;
    SquashedCapResult result;
    result.config = config;

    for (double eps : config.epsilons) {
        CapRunRecord record;
        record.epsilon = eps;
        record.cap_volume =
            std::pow(2.0 * eps * eps, k - 1) * std::pow(2.0 * eps, n + 1 - k);
        record.mass_closed_form = std::sqrt(record.cap_volume);

        std::vector<FreeWave> caps;
        caps.reserve(k);
        for (int i = 0; i < k; ++i) {
            auto patch = make_cap(n, k, i, eps);
            caps.push_back(unit_wave(patch, config.cap_resolution, 0.5));
        }
        record.mass_numeric = std::sqrt(waves::mass(caps[0]));
        record.extension_at_origin = std::abs(caps[0].extend_at(VectorXd::Zero(n + 1)));

        // Certified phase deviation over R_c: linear terms plus the graphed
        // coordinate's deviation from 1.
        double max_sq = (k - 1) * std::pow(eps, 4) + (n + 1 - k) * eps * eps;
        record.phase_dev_bound = (n)*config.c_small +
                                 config.c_small / (eps * eps) * (1.0 - std::sqrt(1.0 - max_sq));
        record.theta = record.phase_dev_bound < M_PI_2 ? std::cos(record.phase_dev_bound) : 0.0;

        Box rc = dual_box(n, k, eps, config.c_small);
        std::vector<int> box_res(n + 1, config.box_resolution);

        // Pointwise lower-bound check and measured phase deviation.
        record.pointwise_min_ratio = kInf;
        std::size_t pts = 1;
        for (int a = 0; a <= n; ++a) pts *= box_res[a];
        for (int i = 0; i < k; ++i) {
            const FreeWave& wave = caps[i];
            for (std::size_t idx = 0; idx < pts; ++idx) {
                VectorXd x(n + 1);
                std::size_t rest = idx;
                for (int a = n; a >= 0; --a) {
                    int ii = static_cast<int>(rest % box_res[a]);
                    rest /= box_res[a];
                    double h = (rc.hi[a] - rc.lo[a]) / box_res[a];
                    x[a] = rc.lo[a] + (ii + 0.5) * h;
                }
                double ratio = std::abs(wave.extend_at(x)) / record.cap_volume;
                record.pointwise_min_ratio = std::min(record.pointwise_min_ratio, ratio);
            }
            // measured phase deviation on the grid nodes and box corners
            for (std::size_t j = 0; j < wave.grid().node_count(); ++j) {
                VectorXd sig = wave.patch()->embed(wave.grid().node(j));
                for (int corner = 0; corner < (1 << (n + 1)); ++corner) {
                    VectorXd x(n + 1);
                    for (int a = 0; a <= n; ++a)
                        x[a] = (corner >> a) & 1 ? rc.hi[a] : rc.lo[a];
                    double dev = std::abs(x.dot(sig) - x[i]);
                    record.phase_dev_measured = std::max(record.phase_dev_measured, dev);
                }
            }
        }
        record.pointwise_certified = record.pointwise_min_ratio >= record.theta;

        // Product norms over R_c, one pass for the moduli.
        std::vector<const FreeWave*> ptrs;
        for (const auto& w : caps) ptrs.push_back(&w);
        std::vector<double> moduli = waves::product_moduli(ptrs, rc, box_res);
        double cellvol = 1.0;
        for (int a = 0; a <= n; ++a) cellvol *= (rc.hi[a] - rc.lo[a]) / box_res[a];
        double mass_product = std::pow(record.mass_closed_form, k);
        for (double p : config.p_list) {
            std::vector<double> powed(moduli.size());
            for (std::size_t i = 0; i < moduli.size(); ++i)
                powed[i] = std::pow(moduli[i], p) * cellvol;
            double norm = std::pow(pairwise_sum(powed), 1.0 / p);
            record.lp_norms.push_back(norm);
            record.normalized_norms.push_back(norm / mass_product);
        }
        result.records.push_back(std::move(record));
    }
    return result;
}

RecursionTrace recursion_iterate(const RecursionConfig& config) {
    require(config.p > 0.0, "recursion: p must be positive");
    require(config.C > 0.0 && config.C0 > 0.0 && config.eps > 0.0 && config.c_eps > 0.0,
            "recursion: constants must be positive");
    RecursionConfig cfg = config;
    if (cfg.R0 <= 0.0) cfg.R0 = 4.0 * std::pow(2.0, 2.0 * cfg.C0);

    const double n = cfg.n;
    const double shift = 1.5 * (n + 2.0) / (n + 4.0);
    const double e2 = 0.25 * (n + 4.0) * (1.0 / cfg.p - shift);
    const double gamma = e2 / cfg.C + cfg.eps / cfg.C;  // c(R) = R^gamma

    RecursionTrace trace;
    trace.config = cfg;
    trace.sign_exponent = e2 + cfg.eps;
    trace.closed_form_bounded = trace.sign_exponent < 0.0;

    const double log2_R0 = std::log2(cfg.R0);
    double log_A = 0.0;  // A_p normalized to 1 at the base scale
    constexpr int kRing = 128;
    double ring[kRing];
    std::fill(ring, ring + kRing, kInf);

    trace.steps.push_back(RecursionStep{log2_R0, log_A});
    std::string verdict;
    long long m = 0;
    for (; m < cfg.horizon; ++m) {
        const double log_R = (log2_R0 + m) * M_LN2;
        const double c = std::exp(gamma * log_R);
        const double log_factor = std::log1p(c * cfg.C);
        const double log_B = std::log(cfg.c_eps) + e2 * log_R;
        // A' = (1+cC) ((1+cC)^p A^p + B^p)^{1/p}, evaluated in log space.
        const double u = cfg.p * (log_factor + log_A);
        const double v = cfg.p * log_B;
        const double hi = std::max(u, v);
        const double lse = hi + std::log1p(std::exp(std::min(u, v) - hi));
        double next = log_factor + lse / cfg.p;
        if (next < log_A) next = log_A;  // running sup
        const double delta = next - log_A;
        log_A = next;
        if (static_cast<int>(trace.steps.size()) <= cfg.trace_steps)
            trace.steps.push_back(RecursionStep{log2_R0 + m + 1, log_A});

        if (delta < 1e-9) {
            verdict = "bounded";
            break;
        }
        const double lagged = ring[m % kRing];
        ring[m % kRing] = delta;
        if (m >= kRing && delta > lagged + 1e-12) {
            verdict = "divergent";
            break;
        }
        if (log_A > 1e15) {
            verdict = "divergent";
            break;
        }
    }
    if (verdict.empty()) {
        // Horizon exhausted; fall back to the trend of the increments.
        verdict = ring[m % kRing] < ring[(m + 1) % kRing] ? "bounded" : "divergent";
    }
    trace.classification = verdict;
    trace.settled_at = m;
    return trace;
}

TrendResult double_cone_trend(const TrendConfig& config) {
    require(config.n >= 3, "double_cone_trend: n must be >= 3");
    require(config.p > 0.0, "double_cone_trend: p must be positive");
    require(!config.R_list.empty(), "double_cone_trend: empty R list");

    auto triple = patches::standard_cone_triple(config.n);
    TrendResult result;
    result.precheck = geometry::estimate_transversality(triple, config.transversality_samples,
                                                        config.seed);
    require(result.precheck.nu_transversal > config.nu_min &&
                result.precheck.nu_curvature > config.nu_min,
            "double_cone_trend: transversality precheck failed (nu too small)");

    std::vector<FreeWave> fields;
    for (const auto& patch : triple)
        fields.push_back(unit_wave(patch, config.grid_resolution, 0.5));
    std::vector<const FreeWave*> ptrs;
    for (const auto& w : fields) ptrs.push_back(&w);

    for (double R : config.R_list) {
        require(R > 0.0, "double_cone_trend: R must be positive");
        waves::SpaceTimeCube cube;
        cube.center = VectorXd::Zero(config.n + 1);
        cube.side = R;
        cube.resolution.assign(config.n + 1, config.eval_resolution);
        result.R_list.push_back(R);
        result.ratios.push_back(waves::trilinear_ratio(ptrs, cube, config.p));
    }
    if (result.ratios.size() >= 2 &&
        std::all_of(result.ratios.begin(), result.ratios.end(),
                    [](double v) { return v > 0.0; }))
        result.fit = fit_loglog(result.R_list, result.ratios);
    return result;
}

}  // namespace trilab::experiments
