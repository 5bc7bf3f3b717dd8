#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace spatmix {

// Free parameters: K(J-1) category probabilities plus K-1 intercepts, plus K-1
// interaction strengths for the spatial family.
inline std::size_t free_params(std::size_t K, std::size_t J, bool spatial) {
    if (K < 1) throw std::invalid_argument("K must be at least 1");
    if (J < 2) throw std::invalid_argument("J must be at least 2");
    return (spatial ? 2 : 1) * (K - 1) + K * (J - 1);
}

// Larger is better.
inline double bic(double loglik, std::size_t d, std::size_t n) {
    if (n < 1) throw std::invalid_argument("BIC needs n >= 1");
    return 2.0 * loglik - static_cast<double>(d) * std::log(static_cast<double>(n));
}

} // namespace spatmix
