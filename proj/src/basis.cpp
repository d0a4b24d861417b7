#include "berm/basis.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include "berm/errors.hpp"

namespace berm {

std::size_t block_size(std::size_t m, std::size_t b) {
    // C(m + b - 1, b), computed incrementally to stay exact for small arguments.
    std::size_t c = 1;
    for (std::size_t i = 1; i <= b; ++i) c = c * (m - 1 + i) / i;
    return c;
}

std::size_t monomial_count(std::size_t d, std::size_t cap) {
    std::size_t total = 0;
    for (std::size_t b = 0; b <= cap; ++b) total += block_size(d, b);
    return total;
}

namespace {

// All multi-indices of total degree `degree` in m variables, descending lexicographic.
void enumerate_block(std::size_t m, std::size_t degree, std::vector<std::size_t>& out) {
    std::vector<std::size_t> alpha(m, 0);
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t pos, std::size_t left) {
        if (pos + 1 == m) {
            alpha[pos] = left;
            out.insert(out.end(), alpha.begin(), alpha.end());
            return;
        }
        for (std::size_t a = left + 1; a-- > 0;) {
            alpha[pos] = a;
            rec(pos + 1, left - a);
        }
    };
    rec(0, degree);
}

}  // namespace

StateBasis::StateBasis(std::size_t dim, std::size_t degree_cap, bool include_payoff)
    : dim_(dim), cap_(degree_cap), payoff_(include_payoff) {
    if (dim == 0) throw ConfigError("StateBasis: dimension must be positive");
    offsets_.push_back(0);
    for (std::size_t b = 0; b <= cap_; ++b) {
        std::vector<std::size_t> alphas;
        enumerate_block(dim_, b, alphas);
        for (std::size_t q = 0; q < alphas.size() / dim_; ++q) {
            for (std::size_t i = 0; i < dim_; ++i) {
                for (std::size_t e = 0; e < alphas[q * dim_ + i]; ++e) factors_.push_back(i);
            }
            offsets_.push_back(factors_.size());
        }
    }
}

void StateBasis::eval(const MaxCallPayoff& payoff, std::span<const double> x, std::span<double> out) const {
    const std::size_t nm = monomial_count();
    for (std::size_t q = 0; q < nm; ++q) {
        double v = 1.0;
        for (std::size_t f = offsets_[q]; f < offsets_[q + 1]; ++f) v *= x[factors_[f]];
        out[q] = v;
    }
    if (payoff_) out[nm] = payoff(x);
}

std::vector<double> StateBasis::eval(const MaxCallPayoff& payoff, std::span<const double> x) const {
    std::vector<double> out(size());
    eval(payoff, x, out);
    return out;
}

double StateBasis::dot(std::span<const double> coef, const MaxCallPayoff& payoff,
                       std::span<const double> x) const {
    const std::size_t nm = monomial_count();
    double s = 0.0;
    for (std::size_t q = 0; q < nm; ++q) {
        double v = coef[q];
        for (std::size_t f = offsets_[q]; f < offsets_[q + 1]; ++f) v *= x[factors_[f]];
        s += v;
    }
    if (payoff_) s += coef[nm] * payoff(x);
    return s;
}

double hermite_raw(std::size_t n, double x) {
    if (n == 0) return 1.0;
    double prev = 1.0, cur = x;
    for (std::size_t k = 1; k < n; ++k) {
        const double next = x * cur - static_cast<double>(k) * prev;
        prev = cur;
        cur = next;
    }
    return cur;
}

double hermite_normalized(std::size_t n, double x) {
    double fact = 1.0;
    for (std::size_t k = 2; k <= n; ++k) fact *= static_cast<double>(k);
    return hermite_raw(n, x) / std::sqrt(fact);
}

void hermite_normalized_all(double x, std::span<double> out) {
    if (out.empty()) return;
    out[0] = 1.0;
    if (out.size() == 1) return;
    out[1] = x;
    // Normalized recurrence: phi_{n+1} = (x phi_n - sqrt(n) phi_{n-1}) / sqrt(n+1).
    for (std::size_t n = 1; n + 1 < out.size(); ++n) {
        const double dn = static_cast<double>(n);
        out[n + 1] = (x * out[n] - std::sqrt(dn) * out[n - 1]) / std::sqrt(dn + 1.0);
    }
}

HermiteSystem::HermiteSystem(std::size_t m, std::size_t max_block) : m_(m), max_block_(max_block) {
    if (m == 0) throw ConfigError("HermiteSystem: innovation dimension must be positive");
    for (std::size_t b = 1; b <= max_block_; ++b) {
        block_start_.push_back(degree_.size() + 1);
        const std::size_t before = alphas_.size();
        enumerate_block(m_, b, alphas_);
        degree_.insert(degree_.end(), (alphas_.size() - before) / m_, b);
    }
    block_start_.push_back(degree_.size() + 1);
}

std::vector<std::size_t> HermiteSystem::block(std::size_t b) const {
    if (b < 1 || b > max_block_) {
        throw std::out_of_range("HermiteSystem: block " + std::to_string(b) + " not enumerated");
    }
    std::vector<std::size_t> ks;
    for (std::size_t k = block_start_[b - 1]; k < block_start_[b]; ++k) ks.push_back(k);
    return ks;
}

std::span<const std::size_t> HermiteSystem::multi_index(std::size_t k) const {
    if (k < 1 || k > size()) {
        throw std::out_of_range("HermiteSystem: function index " + std::to_string(k) + " out of range");
    }
    return {alphas_.data() + (k - 1) * m_, m_};
}

std::size_t HermiteSystem::degree(std::size_t k) const {
    (void)multi_index(k);
    return degree_[k - 1];
}

double HermiteSystem::eval(std::size_t k, std::span<const double> xi) const {
    const auto alpha = multi_index(k);
    double v = 1.0;
    for (std::size_t i = 0; i < m_; ++i) {
        if (alpha[i] != 0) v *= hermite_normalized(alpha[i], xi[i]);
    }
    return v;
}

void HermiteSystem::eval_many(std::span<const std::size_t> ks, std::span<const double> xi,
                              std::span<double> table, std::span<double> out) const {
    const std::size_t w = max_block_ + 1;
    for (std::size_t i = 0; i < m_; ++i) hermite_normalized_all(xi[i], table.subspan(i * w, w));
    for (std::size_t j = 0; j < ks.size(); ++j) {
        const std::size_t* alpha = alphas_.data() + (ks[j] - 1) * m_;
        double v = 1.0;
        for (std::size_t i = 0; i < m_; ++i) {
            if (alpha[i] != 0) v *= table[i * w + alpha[i]];
        }
        out[j] = v;
    }
}

}  // namespace berm
