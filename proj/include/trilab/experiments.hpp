#pragma once

#include "trilab/patches.hpp"
#include "trilab/waves.hpp"

namespace trilab::experiments {

using geometry::Box;
using waves::FreeWave;
using Eigen::VectorXd;

/// Exact rational, kept reduced with a positive denominator.
struct Rational {
    long long num = 0;
    long long den = 1;

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    std::string str() const;
    bool operator==(const Rational&) const = default;
};

Rational make_rational(long long num, long long den);

/// p(k) = 2(n+1+k) / (k(n+k-1)), the conjectured optimal exponent.
Rational threshold_exponent(int n, int k);

// ---------------------------------------------------------------------------
// Squashed-cap sharpness experiment.
// ---------------------------------------------------------------------------
struct SquashedCapConfig {
    int n = 3;
    int k = 3;
    std::vector<double> epsilons;
    double c_small = 0.1;
    int cap_resolution = 4;   // frequency nodes per axis of each U_i
    int box_resolution = 6;   // sample nodes per axis of R_c
    std::vector<double> p_list;
};

struct CapRunRecord {
    double epsilon = 0.0;
    double mass_closed_form = 0.0;     // sqrt(|U_i|), identical for all caps
    double mass_numeric = 0.0;
    double extension_at_origin = 0.0;  // |E_i f_i(0)|, equals |U_i|
    double cap_volume = 0.0;           // |U_i|
    double pointwise_min_ratio = 0.0;  // min over R_c samples and caps of |E f|/|U|
    double phase_dev_bound = 0.0;      // certified bound on |x . Sigma(xi) - x_i|
    double phase_dev_measured = 0.0;   // max over sampled (x, xi)
    double theta = 0.0;                // cos(phase_dev_bound)
    bool pointwise_certified = false;  // min ratio >= theta
    std::vector<double> lp_norms;          // ||prod E_i f_i||_{L^p(R_c)} per p
    std::vector<double> normalized_norms;  // lp_norms / prod ||f_i||_2
};

struct SquashedCapResult {
    SquashedCapConfig config;
    std::vector<CapRunRecord> records;
};

SquashedCapResult squashed_cap_run(const SquashedCapConfig& config);

/// Slope targets from the exponent algebra of the construction.
double raw_slope_target(int n, int k, double p);         // k(n+k-1) - (n+1+k)/p
double normalized_slope_target(int n, int k, double p);  // raw minus k(n+k-1)/2

/// epsilon-indexed norm series.
struct ScalingSeries {
    std::vector<double> epsilons;
    std::vector<double> values;
    double p = 0.0;
};

/// Log-log least squares over the series; needs >= 3 strictly positive points.
LineFit scaling_fit(const ScalingSeries& series);

// ---------------------------------------------------------------------------
// Induction-on-scales recursion.
// ---------------------------------------------------------------------------
struct RecursionConfig {
    double p = 1.0;
    int n = 3;
    double C = 10.0;
    double C0 = 4.0;
    double eps = 0.01;
    double R0 = 0.0;     // default 4 * 2^{2 C0}
    double c_eps = 1.0;  // constant of the error term
    int trace_steps = 60;
    long long horizon = 2000000;  // internal classification horizon
};

struct RecursionStep {
    double log2_R = 0.0;
    double log_A = 0.0;
};

struct RecursionTrace {
    RecursionConfig config;
    std::vector<RecursionStep> steps;
    std::string classification;   // "bounded" or "divergent"
    double sign_exponent = 0.0;   // (n+4)/4 (1/p - 3/2 (n+2)/(n+4)) + eps
    bool closed_form_bounded = false;
    long long settled_at = 0;     // iteration where the detector fired
};

/// Iterates the inductive bound as an equality update with the scale-driven
/// choice of c, and classifies the trajectory numerically.
RecursionTrace recursion_iterate(const RecursionConfig& config);

// ---------------------------------------------------------------------------
// Trilinear ratio trend for the standard cone triple.
// ---------------------------------------------------------------------------
struct TrendConfig {
    int n = 3;
    double p = 1.0;
    std::vector<double> R_list;
    int grid_resolution = 10;  // frequency nodes per axis
    int eval_resolution = 6;   // cube sampling nodes per axis
    double nu_min = 0.01;
    std::size_t transversality_samples = 200;
    std::uint64_t seed = 1;
};

struct TrendResult {
    std::vector<double> R_list;
    std::vector<double> ratios;
    LineFit fit;  // log ratio against log R; heuristic evidence only
    geometry::ConditionReport precheck;
};

TrendResult double_cone_trend(const TrendConfig& config);

/// Unit-density wave on a regular grid over the patch domain.
FreeWave unit_wave(const geometry::PatchPtr& patch, int resolution_per_axis,
                   double reference_pad = 0.5);

}  // namespace trilab::experiments
