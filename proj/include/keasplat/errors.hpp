// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace keasplat {

/// Bad input: shapes, ranges, malformed files, unknown config keys.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A computation produced or consumed a non-finite value.
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, std::ptrdiff_t index = -1)
        : std::runtime_error(what), index_(index) {}

    /// Offending element (Gaussian, iteration, frame) or -1.
    std::ptrdiff_t index() const noexcept { return index_; }

private:
    std::ptrdiff_t index_;
};

} // namespace keasplat
