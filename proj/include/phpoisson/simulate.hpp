#pragma once

// Monte-Carlo simulation of N(1) given T > 1 for the physical model: a Poisson
// clock of rate nu drives a chain with substochastic transition matrix P.
//
// Each sample index k owns the generator std::mt19937_64 seeded with
// splitmix64(seed + k * 0x9e3779b97f4a7c15), so output does not depend on how
// samples are split among threads.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "phpoisson/errors.hpp"
#include "phpoisson/linalg.hpp"
#include "phpoisson/ph_poisson.hpp"
#include "phpoisson/sample.hpp"

namespace phpoisson {

enum class SimMethod {
    /// Draw the event count, walk the chain, keep the path if it survives.
    rejection,
    /// Simulate the chain conditioned on survival (Doob h-transform with
    /// h_i(t) = (e^{(1-t)B} 1)_i), events generated by thinning.
    conditioned,
};

struct SimConfig {
    PhysicalRep phys;
    std::size_t n_samples = 1;
    std::uint64_t seed = 0;
    std::uint64_t max_rejections = 10000;  ///< attempts allowed per sample
    SimMethod method = SimMethod::rejection;
    unsigned n_threads = 1;                ///< 0 uses the hardware concurrency
};

struct SimResult {
    SampleData data;
    double acceptance_rate = 0.0;  ///< accepted / attempted
    std::uint64_t attempts = 0;
    double survival_probability = 0.0;  ///< alpha e^{-nu} e^B 1
    /// Row i: counts of steps from phase i to phase j (columns 0..m-1) and to
    /// absorption (column m), over every simulated step.
    Matrix transition_counts;
};

namespace detail {

inline std::string format_probability(double p) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", p);
    return buf;
}

}  // namespace detail

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::mt19937_64 sample_stream(std::uint64_t seed, std::uint64_t index) {
    return std::mt19937_64(splitmix64(seed + index * 0x9e3779b97f4a7c15ULL));
}

/// M_k(t) = e^{-nu t} B^k t^k / k! with B = nu P.
inline Matrix mmk_check(const PhysicalRep& phys, std::size_t k, double t) {
    phys.validate();
    if (!(t > 0.0)) throw ValidationError("mmk_check: t must be positive");
    const Index m = phys.order();
    const Matrix bt = phys.nu * t * phys.P;
    Matrix out = std::exp(-phys.nu * t) * Matrix::Identity(m, m);
    for (std::size_t j = 1; j <= k; ++j) out = out * bt / static_cast<double>(j);
    return out;
}

namespace detail {

inline double uniform01(std::mt19937_64& rng) { return std::generate_canonical<double, 64>(rng); }

/// Index drawn from the cumulative weights; returns cum.size() when u lands
/// beyond the last entry.
inline std::size_t draw_index(const std::vector<double>& cum, double u) {
    return static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
}

/// Poisson(nu) inverse-CDF table.
class PoissonTable {
public:
    explicit PoissonTable(double nu) {
        double p = std::exp(-nu);
        double c = 0.0;
        for (std::size_t n = 0;; ++n) {
            if (n > 0) p *= nu / static_cast<double>(n);
            c += p;
            cdf_.push_back(c);
            if (static_cast<double>(n) > nu && (p <= 1e-300 || c >= 1.0)) break;
        }
        cdf_.back() = 1.0;
    }
    std::size_t draw(double u) const {
        return static_cast<std::size_t>(std::upper_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin());
    }

private:
    std::vector<double> cdf_;
};

struct ChainTables {
    Index m = 0;
    std::vector<double> alpha_cum;             // cumulative alpha
    std::vector<std::vector<double>> row_cum;  // cumulative P rows (absorption beyond the end)
};

inline ChainTables make_chain_tables(const PhysicalRep& phys) {
    ChainTables t;
    t.m = phys.order();
    double c = 0.0;
    for (Index i = 0; i < t.m; ++i) t.alpha_cum.push_back(c += phys.alpha(i));
    t.row_cum.resize(static_cast<std::size_t>(t.m));
    for (Index i = 0; i < t.m; ++i) {
        double r = 0.0;
        for (Index j = 0; j < t.m; ++j) t.row_cum[static_cast<std::size_t>(i)].push_back(r += phys.P(i, j));
    }
    return t;
}

struct WorkerOutput {
    std::uint64_t attempts = 0;
    Matrix counts;
};

/// One accepted draw by rejection. Returns nullopt when max_rejections
/// attempts all fail.
inline std::optional<std::uint64_t> rejection_draw(const ChainTables& tab, const PoissonTable& poisson,
                                                   std::uint64_t max_rejections, std::mt19937_64& rng,
                                                   WorkerOutput& out) {
    const auto m = static_cast<std::size_t>(tab.m);
    for (std::uint64_t attempt = 0; attempt < max_rejections; ++attempt) {
        ++out.attempts;
        const std::size_t events = poisson.draw(uniform01(rng));
        std::size_t phase = draw_index(tab.alpha_cum, uniform01(rng));
        if (phase >= m) continue;  // absorbed at time 0
        bool alive = true;
        for (std::size_t e = 0; e < events; ++e) {
            const std::size_t next = draw_index(tab.row_cum[phase], uniform01(rng));
            out.counts(static_cast<Index>(phase), static_cast<Index>(std::min(next, m))) += 1.0;
            if (next >= m) {
                alive = false;
                break;
            }
            phase = next;
        }
        if (alive) return events;
    }
    return std::nullopt;
}

/// Survival weights eta(tau) = e^{tau B} 1 on a grid of the remaining time.
class SurvivalGrid {
public:
    SurvivalGrid(const Matrix& b, std::size_t cells) : b_(b), cells_(cells) {
        const Index m = b.rows();
        const double h = 1.0 / static_cast<double>(cells);
        const Matrix step = matexp(Matrix(h * b));
        eta_.push_back(Vector::Ones(m));
        for (std::size_t k = 1; k <= cells; ++k) eta_.push_back(step * eta_.back());
        for (const auto& e : eta_) beta_.push_back(b * e);
    }

    std::size_t cells() const { return cells_; }
    double width() const { return 1.0 / static_cast<double>(cells_); }
    const Vector& eta(std::size_t k) const { return eta_[k]; }
    const Vector& b_eta(std::size_t k) const { return beta_[k]; }

    /// eta at tau in [tau_k, tau_{k+1}].
    Vector eta_at(std::size_t k, double tau) const {
        const double d = tau - static_cast<double>(k) * width();
        if (d <= 0.0) return eta_[k];
        return matexp_action(Matrix(d * b_), eta_[k]);
    }

private:
    Matrix b_;
    std::size_t cells_;
    std::vector<Vector> eta_;
    std::vector<Vector> beta_;
};

/// One draw from the conditioned process. Time runs forward from 0 to 1;
/// tau = 1 - t is the remaining time.
inline std::uint64_t conditioned_draw(const PhysicalRep& phys, const SurvivalGrid& grid, std::mt19937_64& rng,
                                      WorkerOutput& out) {
    ++out.attempts;
    const Index m = phys.order();
    const Matrix b = phys.nu * phys.P;
    const std::size_t cells = grid.cells();
    const double h = grid.width();

    // Initial phase with weights alpha_i eta_i(1).
    std::vector<double> cum;
    double c = 0.0;
    const Vector& eta1 = grid.eta(cells);
    for (Index i = 0; i < m; ++i) cum.push_back(c += phys.alpha(i) * eta1(i));
    Index phase = static_cast<Index>(std::min(draw_index(cum, uniform01(rng) * c), static_cast<std::size_t>(m - 1)));

    std::uint64_t events = 0;
    double tau = 1.0;
    // Cell k covers tau in [k h, (k+1) h]; walk down from the top cell.
    std::size_t k = cells - 1;
    for (;;) {
        const double lower = static_cast<double>(k) * h;
        // Rate (B eta(tau))_i / eta_i(tau) is at most its value with the
        // numerator at the cell top and the denominator at the cell bottom.
        const double bound = grid.b_eta(k + 1)(phase) / grid.eta(k)(phase);
        bool moved_cell = false;
        while (!moved_cell) {
            if (bound <= 0.0) {
                moved_cell = true;
                break;
            }
            const double gap = -std::log1p(-uniform01(rng)) / bound;
            if (tau - gap <= lower) {
                tau = lower;
                moved_cell = true;
                break;
            }
            tau -= gap;
            const Vector eta = grid.eta_at(k, tau);
            const double rate = b.row(phase).dot(eta) / eta(phase);
            if (uniform01(rng) * bound > rate) continue;
            // Event: next phase with weights B_ij eta_j(tau).
            cum.clear();
            c = 0.0;
            for (Index j = 0; j < m; ++j) cum.push_back(c += b(phase, j) * eta(j));
            const Index next =
                static_cast<Index>(std::min(draw_index(cum, uniform01(rng) * c), static_cast<std::size_t>(m - 1)));
            out.counts(phase, next) += 1.0;
            phase = next;
            ++events;
            break;  // the bound depends on the phase
        }
        if (moved_cell) {
            if (k == 0) return events;
            --k;
        }
    }
}

}  // namespace detail

/// Samples of N(1) given T > 1.
inline SimResult draw_conditional(const SimConfig& config) {
    const PhysicalRep& phys = config.phys;
    phys.validate();
    if (config.n_samples < 1) throw ValidationError("simulate: n_samples must be at least 1");
    if (config.max_rejections < 1) throw ValidationError("simulate: max_rejections must be at least 1");

    SimResult result;
    result.survival_probability = survival_probability(phys);
    if (!(result.survival_probability > 0.0)) {
        throw AcceptanceError("simulate: P[T > 1] underflows to 0; no sample can be accepted",
                              result.survival_probability);
    }
    const Index m = phys.order();
    const std::size_t n = config.n_samples;
    result.data.observations.assign(n, 0);

    unsigned threads = config.n_threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : config.n_threads;
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));

    const auto tables = detail::make_chain_tables(phys);
    const detail::PoissonTable poisson(phys.nu);
    std::optional<detail::SurvivalGrid> grid;
    if (config.method == SimMethod::conditioned) {
        // Cells short enough that eta changes by a bounded factor in each.
        const auto cells = static_cast<std::size_t>(std::clamp(std::ceil(8.0 * phys.nu), 64.0, 4096.0));
        grid.emplace(phys.nu * phys.P, cells);
    }

    std::vector<detail::WorkerOutput> outputs(threads);
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;

    auto work = [&](unsigned w) {
        auto& out = outputs[w];
        out.counts = Matrix::Zero(m, m + 1);
        try {
            for (std::size_t k = w; k < n && !failed.load(); k += threads) {
                auto rng = sample_stream(config.seed, k);
                if (config.method == SimMethod::conditioned) {
                    result.data.observations[k] = detail::conditioned_draw(phys, *grid, rng, out);
                    continue;
                }
                const auto draw = detail::rejection_draw(tables, poisson, config.max_rejections, rng, out);
                if (!draw) {
                    throw AcceptanceError("simulate: sample " + std::to_string(k) + " exhausted " +
                                              std::to_string(config.max_rejections) +
                                              " attempts; analytic acceptance probability P[T > 1] = " +
                                              detail::format_probability(result.survival_probability),
                                          result.survival_probability);
                }
                result.data.observations[k] = *draw;
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!error) error = std::current_exception();
            failed = true;
        }
    };

    if (threads == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < threads; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);

    result.transition_counts = Matrix::Zero(m, m + 1);
    for (const auto& out : outputs) {
        result.attempts += out.attempts;
        result.transition_counts += out.counts;
    }
    result.acceptance_rate = static_cast<double>(n) / static_cast<double>(result.attempts);
    return result;
}

}  // namespace phpoisson
