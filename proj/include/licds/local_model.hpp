#pragma once

#include "licds/common.hpp"
#include "licds/systems.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace licds {

/// The first k multi-indices in graded-lexicographic order (total degree
/// first, then lexicographic with the leading component largest). This
/// ordering is fixed: encoder and decoder regenerate it from (dim, k).
struct MonomialBasis {
    int dim = 0;
    std::vector<std::vector<int>> exponents;

    int size() const { return static_cast<int>(exponents.size()); }
    int max_degree() const {
        int d = 0;
        for (const auto& e : exponents) {
            int s = 0;
            for (int v : e) s += v;
            if (s > d) d = s;
        }
        return d;
    }

    static MonomialBasis graded_lex(int dim, int k) {
        if (dim < 1) throw ConfigError("basis dimension must be positive");
        if (k < 1) throw ConfigError("basis size k must be positive");
        MonomialBasis basis;
        basis.dim = dim;
        basis.exponents.reserve(static_cast<std::size_t>(k));
        for (int degree = 0; static_cast<int>(basis.exponents.size()) < k; ++degree)
            append_degree(basis.exponents, dim, degree, k);
        return basis;
    }

private:
    static void append_degree(std::vector<std::vector<int>>& out, int dim,
                              int degree, int k) {
        std::vector<int> current(static_cast<std::size_t>(dim), 0);
        emit(out, current, 0, degree, k);
    }
    static void emit(std::vector<std::vector<int>>& out, std::vector<int>& cur,
                     int slot, int remaining, int k) {
        if (static_cast<int>(out.size()) >= k) return;
        if (slot == static_cast<int>(cur.size()) - 1) {
            cur[slot] = remaining;
            out.push_back(cur);
            return;
        }
        for (int e = remaining; e >= 0; --e) {
            cur[slot] = e;
            emit(out, cur, slot + 1, remaining - e, k);
            if (static_cast<int>(out.size()) >= k) return;
        }
        cur[slot] = 0;
    }
};

/// Number of monomials with total degree <= levels-1 in `dim` variables,
/// i.e. the basis size of a full Taylor polynomial with `levels` degree
/// levels (levels = 1 is the constant model). Equals C(dim+levels-1, dim).
inline int taylor_terms(int dim, int levels) {
    long long n = 1;
    for (int i = 1; i <= dim; ++i)
        n = n * (levels - 1 + i) / i;  // exact: product of i consecutive ints is divisible by i!
    return static_cast<int>(n);
}

/// Truncated multivariate Taylor model of a dynamics function around a
/// working point. Row d of `coeffs` holds the coefficients of output
/// component d against the shared monomial basis.
struct LocalModel {
    Vector working_point;
    MonomialBasis basis;
    Matrix coeffs;  // n x k

    int dim() const { return static_cast<int>(working_point.size()); }
    int k() const { return basis.size(); }

    Vector eval(const Vector& x) const {
        const int n = dim();
        const Vector dx = x - working_point;
        Vector mono(basis.size());
        for (int i = 0; i < basis.size(); ++i) {
            double m = 1.0;
            for (int j = 0; j < n; ++j)
                for (int e = 0; e < basis.exponents[i][j]; ++e) m *= dx[j];
            mono[i] = m;
        }
        return coeffs * mono;
    }

    DynamicsFn as_dynamics() const {
        LocalModel copy = *this;
        return DynamicsFn{dim(), [copy](const Vector& x) { return copy.eval(x); }};
    }
};

inline Vector eval_local(const LocalModel& model, const Vector& x) {
    return model.eval(x);
}

namespace detail {

// Offset -> weight stencil on a unit grid. Higher orders are built by
// composing the 3-point second-difference with one first-difference:
// stencil(p) = D2^(p/2) o D1^(p%2), which reproduces the compact central
// stencils (e.g. [1,-4,6,-4,1] for p = 4).
using Stencil = std::map<int, double>;

inline Stencil compose(const Stencil& a, const Stencil& b) {
    Stencil out;
    for (const auto& [oa, wa] : a)
        for (const auto& [ob, wb] : b) out[oa + ob] += wa * wb;
    return out;
}

inline Stencil central_stencil(int order) {
    static const Stencil d1{{-1, -0.5}, {1, 0.5}};
    static const Stencil d2{{-1, 1.0}, {0, -2.0}, {1, 1.0}};
    Stencil s{{0, 1.0}};
    for (int i = 0; i < order / 2; ++i) s = compose(s, d2);
    if (order % 2) s = compose(s, d1);
    return s;
}

inline std::string index_name(const std::vector<int>& beta) {
    std::string s = "(";
    for (std::size_t j = 0; j < beta.size(); ++j) {
        if (j) s += ",";
        s += std::to_string(beta[j]);
    }
    return s + ")";
}

} // namespace detail

/// Fit the first k graded-lex Taylor coefficients of f at x_star by central
/// finite differences (per-axis step 1e-3 * max(1, |x*_j|), tensor-product
/// stencils for mixed partials). Coefficient of multi-index beta equals
/// (d^beta f)(x_star) / beta!.
inline LocalModel taylor_fit(const DynamicsFn& f, const Vector& x_star, int k) {
    const int dim = f.dim;
    if (x_star.size() != dim) throw ConfigError("working point dimension mismatch");

    LocalModel model;
    model.working_point = x_star;
    model.basis = MonomialBasis::graded_lex(dim, k);
    model.coeffs = Matrix::Zero(dim, k);

    Vector h(dim);
    for (int j = 0; j < dim; ++j) h[j] = 1e-3 * std::max(1.0, std::abs(x_star[j]));

    for (int i = 0; i < k; ++i) {
        const auto& beta = model.basis.exponents[i];
        int total = 0, axes = 0;
        for (int b : beta) {
            total += b;
            if (b > 0) ++axes;
        }
        if (axes >= 2 && total > 4)
            throw ConfigError("mixed partial of total degree " + std::to_string(total) +
                              " > 4 refused for multi-index " + detail::index_name(beta));

        // Tensor product of per-axis stencils: list of (offsets, weight).
        std::vector<std::pair<std::vector<int>, double>> points{{std::vector<int>(dim, 0), 1.0}};
        for (int j = 0; j < dim; ++j) {
            if (beta[j] == 0) continue;
            const auto axis = detail::central_stencil(beta[j]);
            std::vector<std::pair<std::vector<int>, double>> next;
            next.reserve(points.size() * axis.size());
            for (const auto& [off, w] : points)
                for (const auto& [o, ww] : axis) {
                    auto off2 = off;
                    off2[j] += o;
                    next.emplace_back(std::move(off2), w * ww);
                }
            points = std::move(next);
        }

        double scale = 1.0, factorial = 1.0;
        for (int j = 0; j < dim; ++j) {
            for (int e = 0; e < beta[j]; ++e) scale *= h[j];
            for (int q = 2; q <= beta[j]; ++q) factorial *= q;
        }

        Vector acc = Vector::Zero(dim);
        Vector xq(dim);
        for (const auto& [off, w] : points) {
            for (int j = 0; j < dim; ++j) xq[j] = x_star[j] + off[j] * h[j];
            acc += w * f(xq);
        }
        const Vector coeff = acc / (scale * factorial);
        if (!all_finite(coeff))
            throw NumericError("non-finite derivative estimate for multi-index " +
                               detail::index_name(beta));
        model.coeffs.col(i) = coeff;
    }
    return model;
}

} // namespace licds
