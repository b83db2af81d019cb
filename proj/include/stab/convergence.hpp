#pragma once

#include <cmath>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "stab/errors.hpp"

namespace stab {

using Order = std::optional<double>;

/// α_{i+1} = log(e_{i+1}/e_i) / log(h_{i+1}/h_i); the first entry is blank.
/// A zero (or non-finite) error on either side gives a blank entry.
inline std::vector<Order> compute_order(const std::vector<double>& errors, const std::vector<double>& hs,
                                        std::ostream* warn = &std::cerr) {
    if (errors.size() != hs.size() || errors.empty())
        throw InvalidInput("compute_order: errors and hs must have equal nonzero length");
    std::vector<Order> out(errors.size());
    for (std::size_t i = 1; i < errors.size(); ++i) {
        const double e0 = errors[i - 1], e1 = errors[i];
        const double h0 = hs[i - 1], h1 = hs[i];
        if (!(e0 > 0.0) || !(e1 > 0.0) || !std::isfinite(e0) || !std::isfinite(e1)) {
            if (warn) *warn << "warning: zero error at entry " << i << ", order left blank\n";
            continue;
        }
        if (!(h0 > 0.0) || !(h1 > 0.0) || h0 == h1) continue;
        out[i] = std::log(e1 / e0) / std::log(h1 / h0);
    }
    return out;
}

}  // namespace stab
