#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <vector>

#include "phpoisson/errors.hpp"

namespace phpoisson {

/// Observed counts y^[1..n].
struct SampleData {
    std::vector<std::uint64_t> observations;

    std::size_t size() const { return observations.size(); }
    bool empty() const { return observations.empty(); }

    double total() const {
        double s = 0.0;
        for (auto y : observations) s += static_cast<double>(y);
        return s;
    }

    double mean() const {
        if (observations.empty()) throw ValidationError("sample: mean of an empty sample");
        return total() / static_cast<double>(observations.size());
    }

    std::uint64_t max_value() const {
        return observations.empty() ? 0 : *std::max_element(observations.begin(), observations.end());
    }

    std::map<std::uint64_t, std::size_t> histogram() const {
        std::map<std::uint64_t, std::size_t> h;
        for (auto y : observations) ++h[y];
        return h;
    }

    /// Empirical frequencies of 0..n_max.
    std::vector<double> frequencies(std::size_t n_max) const {
        std::vector<double> f(n_max + 1, 0.0);
        if (observations.empty()) return f;
        const double w = 1.0 / static_cast<double>(observations.size());
        for (auto y : observations) {
            if (y <= n_max) f[y] += w;
        }
        return f;
    }

    static SampleData from_histogram(const std::map<std::uint64_t, std::size_t>& h) {
        SampleData d;
        for (const auto& [value, count] : h) d.observations.insert(d.observations.end(), count, value);
        return d;
    }
};

}  // namespace phpoisson
