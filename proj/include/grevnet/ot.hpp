#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "grevnet/tensor.hpp"

namespace grevnet {

enum class CostKind { euclidean, squared };

inline CostKind parse_cost_kind(const std::string& s) {
    if (s == "euclidean") return CostKind::euclidean;
    if (s == "squared") return CostKind::squared;
    throw ConfigError("ot: unknown cost '" + s + "'");
}

/// Optimal pairing of two equal-size point sets: x_i is matched to y_{permutation[i]}.
struct TransportPlan {
    std::vector<std::size_t> permutation;
    double cost = 0;  // mean pair cost
};

/// C[i][j] = |x_i - y_j|_2 (or its square).
template <typename T>
Tensor<double> cost_matrix(const Tensor<T>& x, const Tensor<T>& y, CostKind kind = CostKind::euclidean) {
    if (x.rank() == 0 || y.rank() == 0 || x.dim(0) != y.dim(0))
        throw ShapeError("cost_matrix: point counts differ " + shape_string(x.shape()) + " vs " + shape_string(y.shape()));
    const std::size_t n = x.dim(0), d = x.size() / n;
    if (y.size() / n != d) throw ShapeError("cost_matrix: point dimensions differ");
    Tensor<double> c({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = double(x[i * d + k]) - double(y[j * d + k]);
                s += diff * diff;
            }
            c(i, j) = kind == CostKind::squared ? s : std::sqrt(s);
        }
    return c;
}

/// Exact linear assignment by shortest augmenting paths with potentials
/// (Hungarian method, O(n^3)).
inline TransportPlan solve_exact(const Tensor<double>& cost) {
    if (cost.rank() != 2 || cost.dim(0) != cost.dim(1)) throw ShapeError("solve_exact: square cost matrix required");
    if (!cost.all_finite()) throw NumericError("solve_exact: non-finite cost entry");
    const std::size_t n = cost.dim(0);
    const double inf = std::numeric_limits<double>::infinity();
    // 1-based rows/cols; column 0 is the virtual source
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (std::size_t i = 1; i <= n; ++i) {
        match[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = match[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    TransportPlan plan;
    plan.permutation.assign(n, 0);
    for (std::size_t j = 1; j <= n; ++j) plan.permutation[match[j] - 1] = j - 1;
    // recompute from the pairing rather than trusting the dual value
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) total += cost(i, plan.permutation[i]);
    plan.cost = total / double(n);
    return plan;
}

/// 1-D matching of order statistics: optimal for any convex cost of |x - y|.
template <typename T>
TransportPlan sorted_1d_plan(const Tensor<T>& x, const Tensor<T>& y, CostKind kind = CostKind::euclidean) {
    if (x.size() != y.size() || x.size() != x.dim(0)) throw ShapeError("sorted_1d_plan: n x 1 inputs required");
    const std::size_t n = x.size();
    std::vector<std::size_t> ix(n), iy(n);
    std::iota(ix.begin(), ix.end(), 0);
    std::iota(iy.begin(), iy.end(), 0);
    std::stable_sort(ix.begin(), ix.end(), [&](auto a, auto b) { return x[a] < x[b]; });
    std::stable_sort(iy.begin(), iy.end(), [&](auto a, auto b) { return y[a] < y[b]; });
    TransportPlan plan;
    plan.permutation.assign(n, 0);
    double total = 0;
    for (std::size_t r = 0; r < n; ++r) {
        plan.permutation[ix[r]] = iy[r];
        const double diff = double(x[ix[r]]) - double(y[iy[r]]);
        total += kind == CostKind::squared ? diff * diff : std::abs(diff);
    }
    plan.cost = total / double(n);
    return plan;
}

template <typename T>
struct OtResult {
    TransportPlan plan;
    double loss = 0;
    Tensor<T> dx;
    Tensor<T> dy;
};

/// OT loss between equal-size samples and its gradient with the optimal
/// pairing held fixed. Coincident pairs contribute zero gradient.
template <typename T>
OtResult<T> ot_loss_and_grad(const Tensor<T>& x, const Tensor<T>& y, CostKind kind = CostKind::euclidean) {
    OtResult<T> r;
    r.plan = solve_exact(cost_matrix(x, y, kind));
    r.loss = r.plan.cost;
    const std::size_t n = x.dim(0), d = x.size() / n;
    r.dx = Tensor<T>(x.shape());
    r.dy = Tensor<T>(y.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = r.plan.permutation[i];
        double dist2 = 0;
        for (std::size_t k = 0; k < d; ++k) {
            const double diff = double(x[i * d + k]) - double(y[j * d + k]);
            dist2 += diff * diff;
        }
        double coef;
        if (kind == CostKind::squared) {
            coef = 2.0 / double(n);
        } else {
            if (dist2 == 0) continue;
            coef = 1.0 / (double(n) * std::sqrt(dist2));
        }
        for (std::size_t k = 0; k < d; ++k) {
            const double g = coef * (double(x[i * d + k]) - double(y[j * d + k]));
            r.dx[i * d + k] = static_cast<T>(g);
            r.dy[j * d + k] = static_cast<T>(-g);
        }
    }
    return r;
}

} // namespace grevnet
