#pragma once

// Uniform gain grids and a per-node memo for expensive objectives.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gp.hpp"
#include "parallel.hpp"

namespace cascade_tune {

struct GridAxis {
    std::string name;
    double lower = 0.0;
    double step = 1.0;
    std::size_t count = 1;

    // Nodes step, 2 step, ..., upper: the half-open range (0, upper].
    static GridAxis spanning(std::string name, double step, double upper) {
        if (!(step > 0.0) || !(upper >= step)) throw std::invalid_argument("grid." + name + ": step must be in (0, upper]");
        const auto n = static_cast<std::size_t>(std::floor(upper / step + 1e-9));
        return {std::move(name), step, step, n};
    }

    [[nodiscard]] double value(std::size_t i) const { return lower + step * static_cast<double>(i); }
    [[nodiscard]] double upper() const { return value(count - 1); }

    void validate() const {
        if (count == 0) throw std::invalid_argument("grid." + name + ": empty axis");
        if (!(step > 0.0) || !std::isfinite(lower)) throw std::invalid_argument("grid." + name + ": invalid spacing");
    }
};

// Cartesian product of axes. Flat index order is lexicographic with the
// first axis most significant.
class GainGrid {
public:
    GainGrid() = default;
    explicit GainGrid(std::vector<GridAxis> axes) : axes_(std::move(axes)) {
        if (axes_.empty()) throw std::invalid_argument("grid: no axes");
        for (const auto& a : axes_) a.validate();
    }

    [[nodiscard]] std::size_t size() const {
        if (axes_.empty()) return 0;
        std::size_t n = 1;
        for (const auto& a : axes_) n *= a.count;
        return n;
    }
    [[nodiscard]] std::size_t dims() const { return axes_.size(); }
    [[nodiscard]] const std::vector<GridAxis>& axes() const { return axes_; }

    [[nodiscard]] std::vector<std::size_t> indices(std::size_t flat) const {
        if (flat >= size()) throw std::out_of_range("grid: node index out of range");
        std::vector<std::size_t> idx(axes_.size());
        for (std::size_t d = axes_.size(); d-- > 0;) {
            idx[d] = flat % axes_[d].count;
            flat /= axes_[d].count;
        }
        return idx;
    }

    [[nodiscard]] std::size_t flat(const std::vector<std::size_t>& idx) const {
        if (idx.size() != axes_.size()) throw std::invalid_argument("grid: index dimension mismatch");
        std::size_t f = 0;
        for (std::size_t d = 0; d < axes_.size(); ++d) {
            if (idx[d] >= axes_[d].count) throw std::out_of_range("grid: index out of range");
            f = f * axes_[d].count + idx[d];
        }
        return f;
    }

    [[nodiscard]] Point point(std::size_t flat_index) const {
        const auto idx = indices(flat_index);
        Point x(idx.size());
        for (std::size_t d = 0; d < idx.size(); ++d) x[d] = axes_[d].value(idx[d]);
        return x;
    }

    // Node nearest to x, clamped to the grid.
    [[nodiscard]] std::size_t nearest(const Point& x) const {
        if (x.size() != axes_.size()) throw std::invalid_argument("grid: point dimension mismatch");
        std::vector<std::size_t> idx(x.size());
        for (std::size_t d = 0; d < x.size(); ++d) {
            const double r = std::round((x[d] - axes_[d].lower) / axes_[d].step);
            idx[d] = static_cast<std::size_t>(std::clamp(r, 0.0, static_cast<double>(axes_[d].count - 1)));
        }
        return flat(idx);
    }

    // True when the nodes differ by at most one index along every axis.
    [[nodiscard]] bool adjacent(std::size_t a, std::size_t b) const {
        const auto ia = indices(a);
        const auto ib = indices(b);
        for (std::size_t d = 0; d < ia.size(); ++d) {
            const auto diff = ia[d] > ib[d] ? ia[d] - ib[d] : ib[d] - ia[d];
            if (diff > 1) return false;
        }
        return true;
    }

    [[nodiscard]] InputNormalization normalization() const {
        InputNormalization n;
        for (const auto& a : axes_) {
            n.lower.push_back(a.lower);
            n.upper.push_back(a.upper());
        }
        return n;
    }

private:
    std::vector<GridAxis> axes_;
};

using Objective = std::function<double(const Point&)>;

// Objective values memoized by grid node. Reusable across optimizer runs on
// the same grid and objective.
class CachedObjective {
public:
    CachedObjective(GainGrid grid, Objective f)
        : grid_(std::move(grid)), f_(std::move(f)), values_(grid_.size(), 0.0), known_(grid_.size(), 0) {}

    [[nodiscard]] const GainGrid& grid() const { return grid_; }

    double operator()(std::size_t node) {
        if (!known_.at(node)) store(node, f_(grid_.point(node)));
        return values_[node];
    }

    [[nodiscard]] bool known(std::size_t node) const { return known_.at(node) != 0; }

    // Evaluates the unknown nodes among `nodes` concurrently.
    void prefetch(const std::vector<std::size_t>& nodes) {
        std::vector<std::size_t> todo;
        for (auto n : nodes)
            if (!known_.at(n) && std::find(todo.begin(), todo.end(), n) == todo.end()) todo.push_back(n);
        std::vector<double> out(todo.size());
        parallel_for(todo.size(), [&](std::size_t i) { out[i] = f_(grid_.point(todo[i])); });
        for (std::size_t i = 0; i < todo.size(); ++i) store(todo[i], out[i]);
    }

    // Number of distinct objective calls made so far.
    [[nodiscard]] std::size_t calls() const { return calls_; }

private:
    void store(std::size_t node, double v) {
        if (std::isnan(v)) throw std::domain_error("objective returned NaN");
        values_[node] = v;
        known_[node] = 1;
        ++calls_;
    }

    GainGrid grid_;
    Objective f_;
    std::vector<double> values_;
    std::vector<char> known_;
    std::size_t calls_ = 0;
};

}  // namespace cascade_tune
