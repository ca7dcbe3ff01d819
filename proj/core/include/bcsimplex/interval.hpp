#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace bcsimplex {

/// Closed interval [lo, hi] over doubles.
///
/// Arithmetic rounds outward: a result endpoint is moved one unit in the
/// last place away from the enclosed set whenever the floating-point
/// operation was inexact in the unsafe direction.
struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    constexpr Interval() = default;
    constexpr explicit Interval(double v) : lo(v), hi(v) {}
    constexpr Interval(double l, double h) : lo(l), hi(h) {}

    [[nodiscard]] double width() const { return hi - lo; }
    [[nodiscard]] double mid() const { return lo + 0.5 * (hi - lo); }
    [[nodiscard]] double mag() const { return std::max(std::fabs(lo), std::fabs(hi)); }
    [[nodiscard]] bool contains(double v) const { return lo <= v && v <= hi; }
    [[nodiscard]] bool contains(const Interval& o) const { return lo <= o.lo && o.hi <= hi; }
    [[nodiscard]] bool is_point() const { return lo == hi; }

    friend bool operator==(const Interval&, const Interval&) = default;
};

/// Next representable double above v (std::nextafter towards +inf, inlined).
inline double round_up(double v)
{
    if (!(v < std::numeric_limits<double>::infinity())) return v;
    if (v == 0.0) return std::numeric_limits<double>::denorm_min();
    auto bits = std::bit_cast<std::uint64_t>(v);
    bits = v > 0.0 ? bits + 1 : bits - 1;
    return std::bit_cast<double>(bits);
}
/// Next representable double below v.
inline double round_down(double v) { return -round_up(-v); }

// Directed rounding from exact error terms: TwoSum for addition, FMA for
// products. A result is nudged by one ulp only when it was actually rounded
// in the wrong direction.
inline double add_down(double a, double b)
{
    const double s = a + b;
    if (!std::isfinite(s)) return s;
    const double bb = s - a;
    const double err = (a - (s - bb)) + (b - bb);
    return err < 0.0 ? round_down(s) : s;
}

inline double add_up(double a, double b)
{
    const double s = a + b;
    if (!std::isfinite(s)) return s;
    const double bb = s - a;
    const double err = (a - (s - bb)) + (b - bb);
    return err > 0.0 ? round_up(s) : s;
}

inline double mul_down(double a, double b)
{
    const double p = a * b;
    if (!std::isfinite(p)) return p;
    return std::fma(a, b, -p) < 0.0 ? round_down(p) : p;
}

inline double mul_up(double a, double b)
{
    const double p = a * b;
    if (!std::isfinite(p)) return p;
    return std::fma(a, b, -p) > 0.0 ? round_up(p) : p;
}

inline Interval operator+(Interval a, Interval b) { return {add_down(a.lo, b.lo), add_up(a.hi, b.hi)}; }
inline Interval operator-(Interval a) { return {-a.hi, -a.lo}; }
inline Interval operator-(Interval a, Interval b) { return a + (-b); }

inline Interval operator*(Interval a, Interval b)
{
    const double lo = std::min({mul_down(a.lo, b.lo), mul_down(a.lo, b.hi), mul_down(a.hi, b.lo), mul_down(a.hi, b.hi)});
    const double hi = std::max({mul_up(a.lo, b.lo), mul_up(a.lo, b.hi), mul_up(a.hi, b.lo), mul_up(a.hi, b.hi)});
    return {lo, hi};
}

inline Interval& operator+=(Interval& a, Interval b) { return a = a + b; }
inline Interval& operator*=(Interval& a, Interval b) { return a = a * b; }

namespace detail {
// v >= 0
inline double pow_down(double v, unsigned k)
{
    double r = 1.0;
    for (unsigned i = 0; i < k; ++i) r = mul_down(r, v);
    return r;
}
inline double pow_up(double v, unsigned k)
{
    double r = 1.0;
    for (unsigned i = 0; i < k; ++i) r = mul_up(r, v);
    return r;
}
} // namespace detail

/// Integer power with the even-power rule: x^k for even k never dips below 0.
inline Interval pow(Interval a, unsigned k)
{
    using detail::pow_down;
    using detail::pow_up;
    if (k == 0) return Interval{1.0};
    if (k == 1) return a;
    if (k % 2 == 1) {
        const double lo = a.lo >= 0.0 ? pow_down(a.lo, k) : -pow_up(-a.lo, k);
        const double hi = a.hi >= 0.0 ? pow_up(a.hi, k) : -pow_down(-a.hi, k);
        return {lo, hi};
    }
    if (a.lo >= 0.0) return {pow_down(a.lo, k), pow_up(a.hi, k)};
    if (a.hi <= 0.0) return {pow_down(-a.hi, k), pow_up(-a.lo, k)};
    return {0.0, pow_up(std::max(-a.lo, a.hi), k)};
}

/// a^0 .. a^kmax, each equal to pow(a, k).
inline std::vector<Interval> powers(Interval a, unsigned kmax)
{
    std::vector<Interval> out{Interval{1.0}};
    if (kmax == 0) return out;
    out.push_back(a);
    const double l = std::fabs(a.lo);
    const double h = std::fabs(a.hi);
    double lu = l, ld = l, hu = h, hd = h;
    for (unsigned k = 2; k <= kmax; ++k) {
        lu = mul_up(lu, l);
        ld = mul_down(ld, l);
        hu = mul_up(hu, h);
        hd = mul_down(hd, h);
        if (k % 2 == 1) {
            out.push_back({a.lo >= 0.0 ? ld : -lu, a.hi >= 0.0 ? hu : -hd});
        } else if (a.lo >= 0.0) {
            out.push_back({ld, hu});
        } else if (a.hi <= 0.0) {
            out.push_back({hd, lu});
        } else {
            out.push_back({0.0, std::max(lu, hu)});
        }
    }
    return out;
}

inline Interval hull(Interval a, Interval b) { return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)}; }

/// Intersection of two enclosures of the same quantity. Both are sound, so the
/// result is too; the caller guarantees overlap.
inline Interval intersect(Interval a, Interval b) { return {std::max(a.lo, b.lo), std::min(a.hi, b.hi)}; }

/// Axis-aligned box, one closed interval per coordinate.
class IntervalBox {
public:
    IntervalBox() = default;
    explicit IntervalBox(std::vector<Interval> dims);

    [[nodiscard]] std::size_t size() const { return dims_.size(); }
    [[nodiscard]] const Interval& operator[](std::size_t i) const { return dims_[i]; }
    [[nodiscard]] Interval& operator[](std::size_t i) { return dims_[i]; }
    [[nodiscard]] std::span<const Interval> dims() const { return dims_; }

    /// Closed membership.
    [[nodiscard]] bool contains(std::span<const double> x) const;
    /// Open membership: strict inequalities on every side.
    [[nodiscard]] bool contains_open(std::span<const double> x) const;
    /// Box-in-box inclusion (closed).
    [[nodiscard]] bool contains(const IntervalBox& other) const;

    [[nodiscard]] std::size_t widest_dimension() const;
    [[nodiscard]] std::pair<IntervalBox, IntervalBox> bisect(std::size_t dim) const;

    /// Concatenate two boxes (e.g. states then inputs).
    [[nodiscard]] IntervalBox concat(const IntervalBox& other) const;

    friend bool operator==(const IntervalBox&, const IntervalBox&) = default;

private:
    std::vector<Interval> dims_;
};

std::string to_string(const Interval& iv);

} // namespace bcsimplex
