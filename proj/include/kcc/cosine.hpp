#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "kcc/error.hpp"

namespace kcc {

template <typename T>
double squared_norm(std::span<const T> a) {
    double s = 0.0;
    for (T v : a) s += static_cast<double>(v) * static_cast<double>(v);
    return s;
}

/// 1 - cos(a, b), in [0, 2]. Zero-norm inputs are rejected.
template <typename T>
double cosine_distance(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size()) throw ValidationError("cosine distance of vectors with different lengths");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
        na += static_cast<double>(a[i]) * static_cast<double>(a[i]);
        nb += static_cast<double>(b[i]) * static_cast<double>(b[i]);
    }
    if (!(na > 0.0) || !(nb > 0.0)) throw ValidationError("cosine distance of a zero-norm vector");
    const double cos = dot / (std::sqrt(na) * std::sqrt(nb));
    return 1.0 - std::clamp(cos, -1.0, 1.0);
}

inline double cosine_distance(const std::vector<float>& a, const std::vector<float>& b) {
    return cosine_distance(std::span<const float>(a), std::span<const float>(b));
}

inline double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
    return cosine_distance(std::span<const double>(a), std::span<const double>(b));
}

template <typename T>
double cosine_similarity(std::span<const T> a, std::span<const T> b) {
    return 1.0 - cosine_distance(a, b);
}

/// Unit-normalized copy in double precision.
template <typename T>
std::vector<double> normalized(std::span<const T> a) {
    const double n = std::sqrt(squared_norm(a));
    if (!(n > 0.0)) throw ValidationError("cannot normalize a zero-norm vector");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = static_cast<double>(a[i]) / n;
    return out;
}

}  // namespace kcc
