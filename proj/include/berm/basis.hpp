#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "berm/model.hpp"

namespace berm {

/// Regression basis on the state space: all monomials of total degree <= cap in
/// d variables (graded, lexicographic within a degree, constant first),
/// optionally followed by the payoff g(x).
class StateBasis {
public:
    StateBasis(std::size_t dim, std::size_t degree_cap = 1, bool include_payoff = true);

    std::size_t dim() const { return dim_; }
    std::size_t degree_cap() const { return cap_; }
    bool includes_payoff() const { return payoff_; }
    std::size_t size() const { return offsets_.size() - 1 + (payoff_ ? 1 : 0); }
    std::size_t monomial_count() const { return offsets_.size() - 1; }

    /// Writes psi_1(x)..psi_Q(x) into out (length size()).
    void eval(const MaxCallPayoff& payoff, std::span<const double> x, std::span<double> out) const;
    std::vector<double> eval(const MaxCallPayoff& payoff, std::span<const double> x) const;

    /// sum_q coef_q psi_q(x) without materializing the feature vector.
    double dot(std::span<const double> coef, const MaxCallPayoff& payoff, std::span<const double> x) const;

    /// Variable indices (with repetition) forming monomial q.
    std::span<const std::size_t> monomial(std::size_t q) const {
        return {factors_.data() + offsets_[q], offsets_[q + 1] - offsets_[q]};
    }

private:
    std::size_t dim_, cap_;
    bool payoff_;
    std::vector<std::size_t> factors_;
    std::vector<std::size_t> offsets_;
};

inline std::vector<double> state_basis_eval(const StateBasis& b, const MaxCallPayoff& payoff,
                                            std::span<const double> x) {
    return b.eval(payoff, x);
}

/// Number of monomials of total degree <= cap in d variables.
std::size_t monomial_count(std::size_t d, std::size_t cap);

/// Normalized probabilists' Hermite phi_n = He_n / sqrt(n!), via the three-term
/// recurrence He_{n+1}(x) = x He_n(x) - n He_{n-1}(x).
double hermite_normalized(std::size_t n, double x);

/// Unnormalized He_n.
double hermite_raw(std::size_t n, double x);

/// Fills out[0..n] with phi_0(x)..phi_n(x).
void hermite_normalized_all(double x, std::span<double> out);

/// Tensorized orthonormal Hermite system on R^m under N(0, I_m).
///
/// Functions are numbered k = 1, 2, ... by total-degree block b = 1, 2, ...;
/// within a block multi-indices appear in descending lexicographic order, so for
/// m = 2 the order is (1,0), (0,1), (2,0), (1,1), (0,2), ... Index 0 is the
/// constant and is never used as a control-variate direction.
class HermiteSystem {
public:
    HermiteSystem(std::size_t m, std::size_t max_block);

    std::size_t dim() const { return m_; }
    std::size_t max_block() const { return max_block_; }
    /// Number of enumerated functions with k >= 1.
    std::size_t size() const { return degree_.size(); }

    /// Function indices of total-degree block b (1-based k values).
    std::vector<std::size_t> block(std::size_t b) const;

    std::span<const std::size_t> multi_index(std::size_t k) const;
    std::size_t degree(std::size_t k) const;

    /// phi_k(xi); throws std::out_of_range for k outside 1..size().
    double eval(std::size_t k, std::span<const double> xi) const;

    /// Evaluates several functions at once. `table` is scratch of size
    /// m * (max_block + 1).
    void eval_many(std::span<const std::size_t> ks, std::span<const double> xi, std::span<double> table,
                   std::span<double> out) const;

private:
    std::size_t m_, max_block_;
    std::vector<std::size_t> alphas_;  // size() * m, row k-1
    std::vector<std::size_t> degree_;
    std::vector<std::size_t> block_start_;
};

inline double hermite_eval(const HermiteSystem& s, std::size_t k, std::span<const double> xi) {
    return s.eval(k, xi);
}

inline std::vector<std::size_t> hermite_block(const HermiteSystem& s, std::size_t b) { return s.block(b); }

/// Binomial coefficient (m + b - 1 choose b): number of multi-indices of total degree b in m variables.
std::size_t block_size(std::size_t m, std::size_t b);

}  // namespace berm
