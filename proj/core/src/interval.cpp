#include "bcsimplex/interval.hpp"

#include <cstdio>

#include "bcsimplex/error.hpp"

namespace bcsimplex {

IntervalBox::IntervalBox(std::vector<Interval> dims) : dims_(std::move(dims))
{
    for (const auto& d : dims_) {
        if (!(d.lo <= d.hi)) throw ValidationError("interval box with lo > hi: " + to_string(d));
    }
}

bool IntervalBox::contains(std::span<const double> x) const
{
    if (x.size() != dims_.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(dims_[i].lo <= x[i] && x[i] <= dims_[i].hi)) return false;
    }
    return true;
}

bool IntervalBox::contains_open(std::span<const double> x) const
{
    if (x.size() != dims_.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(dims_[i].lo < x[i] && x[i] < dims_[i].hi)) return false;
    }
    return true;
}

bool IntervalBox::contains(const IntervalBox& other) const
{
    if (other.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i) {
        if (!dims_[i].contains(other[i])) return false;
    }
    return true;
}

std::size_t IntervalBox::widest_dimension() const
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < dims_.size(); ++i) {
        if (dims_[i].width() > dims_[best].width()) best = i;
    }
    return best;
}

std::pair<IntervalBox, IntervalBox> IntervalBox::bisect(std::size_t dim) const
{
    IntervalBox left = *this;
    IntervalBox right = *this;
    const double m = dims_[dim].mid();
    left.dims_[dim].hi = m;
    right.dims_[dim].lo = m;
    return {std::move(left), std::move(right)};
}

IntervalBox IntervalBox::concat(const IntervalBox& other) const
{
    std::vector<Interval> all = dims_;
    all.insert(all.end(), other.dims_.begin(), other.dims_.end());
    return IntervalBox(std::move(all));
}

std::string to_string(const Interval& iv)
{
    char buf[96];
    std::snprintf(buf, sizeof buf, "[%.17g, %.17g]", iv.lo, iv.hi);
    return buf;
}

} // namespace bcsimplex
