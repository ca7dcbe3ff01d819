#pragma once

#include <cstdint>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "bcsimplex/interval.hpp"
#include "bcsimplex/polynomial.hpp"

namespace bcsimplex {

// gtest printers
inline void PrintTo(const Polynomial& p, std::ostream* os) { *os << p.to_string(); }
inline void PrintTo(const Interval& i, std::ostream* os) { *os << to_string(i); }

} // namespace bcsimplex

namespace bcsimplex::testing {

/// Small seeded generator for property tests.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }
    double unit() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
    int integer(int lo, int hi) { return lo + static_cast<int>(rng_() % static_cast<std::uint64_t>(hi - lo + 1)); }

    std::vector<std::string> variables(int count)
    {
        std::vector<std::string> v;
        for (int i = 0; i < count; ++i) v.push_back("x" + std::to_string(i));
        return v;
    }

    /// Random polynomial with total degree <= max_degree. Integer coefficients
    /// keep arithmetic exact.
    Polynomial polynomial(const std::vector<std::string>& vars, unsigned max_degree, int max_terms, bool integer_coefs = false)
    {
        std::vector<Polynomial::Term> terms;
        const int n = integer(1, max_terms);
        for (int t = 0; t < n; ++t) {
            Polynomial::Exponents e(vars.size(), 0U);
            unsigned budget = static_cast<unsigned>(integer(0, static_cast<int>(max_degree)));
            while (budget > 0 && !vars.empty()) {
                e[static_cast<std::size_t>(integer(0, static_cast<int>(vars.size()) - 1))] += 1;
                --budget;
            }
            const double c = integer_coefs ? static_cast<double>(integer(-9, 9)) : uniform(-3.0, 3.0);
            terms.push_back({std::move(e), c});
        }
        return Polynomial(vars, std::move(terms));
    }

    IntervalBox box(std::size_t dims, double extent = 2.0)
    {
        std::vector<Interval> d;
        for (std::size_t i = 0; i < dims; ++i) {
            const double a = uniform(-extent, extent);
            const double b = uniform(-extent, extent);
            d.emplace_back(std::min(a, b), std::max(a, b) + 1e-3);
        }
        return IntervalBox(std::move(d));
    }

    std::vector<double> point_in(const IntervalBox& box)
    {
        std::vector<double> x;
        for (std::size_t i = 0; i < box.size(); ++i) x.push_back(uniform(box[i].lo, box[i].hi));
        return x;
    }

    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

} // namespace bcsimplex::testing
