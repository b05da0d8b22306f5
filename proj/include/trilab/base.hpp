#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace trilab {

using complexd = std::complex<double>;

/// Raised when an input violates a documented precondition or configuration range.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when a computation detects a broken internal invariant.
class InvariantError : public std::runtime_error {
public:
    explicit InvariantError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ConfigError(msg);
}

inline void ensure(bool cond, const std::string& msg) {
    if (!cond) throw InvariantError(msg);
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Deterministic random numbers.
//
// std::mt19937_64 is seeded directly and the uniform mapping is done by hand,
// so identical seeds give identical streams on every platform. Draw order is
// part of the contract: samplers must consume a fixed number of draws per
// sample so that prefix runs agree.
// ---------------------------------------------------------------------------
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    std::uint64_t next_u64() {
        // splitmix64; small, fast, reproducible
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [a, b).
    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n; }

private:
    std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Pairwise (cascade) summation. All reductions in the project go through
// these so results do not depend on chunking or thread count.
// ---------------------------------------------------------------------------
template <typename T>
T pairwise_sum(const T* data, std::size_t n) {
    if (n == 0) return T{};
    if (n <= 8) {
        T acc = data[0];
        for (std::size_t i = 1; i < n; ++i) acc += data[i];
        return acc;
    }
    std::size_t half = n / 2;
    return pairwise_sum(data, half) + pairwise_sum(data + half, n - half);
}

template <typename T>
T pairwise_sum(const std::vector<T>& v) {
    return pairwise_sum(v.data(), v.size());
}

/// Sum f(i) for i in [0, n) with a fixed pairwise tree over index order.
template <typename T, typename F>
T indexed_sum(std::size_t n, F&& f) {
    std::vector<T> buf;
    buf.reserve(n);
    for (std::size_t i = 0; i < n; ++i) buf.push_back(f(i));
    return pairwise_sum(buf);
}

// ---------------------------------------------------------------------------
// Worker pool. Chunk boundaries are fixed by the job size, never by the
// thread count, so any reduction over chunk results is deterministic.
// ---------------------------------------------------------------------------
int thread_count();
void set_thread_count(int n);

/// Run fn(begin, end) over [0, n) split into fixed chunks, possibly in parallel.
void parallel_chunks(std::size_t n, std::size_t chunk,
                     const std::function<void(std::size_t, std::size_t)>& fn);

/// Map i -> f(i) into out[i] (out must be pre-sized), parallel over fixed chunks.
template <typename T, typename F>
void parallel_map(std::size_t n, std::vector<T>& out, F&& f) {
    parallel_chunks(n, 2048, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) out[i] = f(i);
    });
}

// ---------------------------------------------------------------------------
// Least squares line fit, used for every log-log slope in the experiments.
// ---------------------------------------------------------------------------
struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0;  // root mean square residual
    std::size_t count = 0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

/// Fit log(y) against log(x); all x and y must be strictly positive.
LineFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y);

/// FNV-1a hash of a string, used for config fingerprints in summaries.
std::uint64_t fnv1a(const std::string& text);

}  // namespace trilab
