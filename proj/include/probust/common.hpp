#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace probust {

using Vec = std::vector<double>;

// Error taxonomy, mapped to CLI exit codes: ConfigError -> 1,
// NumericFault -> 2, EventTooRare -> 3.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericFault : public std::runtime_error {
public:
    explicit NumericFault(const std::string& msg) : std::runtime_error(msg) {}
};

class EventTooRare : public std::runtime_error {
public:
    explicit EventTooRare(const std::string& msg) : std::runtime_error(msg) {}
};

enum class Norm { Linf, L2 };

inline std::string to_string(Norm n) { return n == Norm::Linf ? "linf" : "l2"; }

inline Norm norm_from_string(const std::string& s) {
    if (s == "linf") return Norm::Linf;
    if (s == "l2") return Norm::L2;
    throw ConfigError("unknown norm: " + s);
}

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm_linf(const Vec& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline double norm_l2(const Vec& v) { return std::sqrt(dot(v, v)); }

inline double norm_of(const Vec& v, Norm n) {
    return n == Norm::Linf ? norm_linf(v) : norm_l2(v);
}

inline Vec sub(const Vec& a, const Vec& b) {
    Vec d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return d;
}

inline double distance(const Vec& a, const Vec& b, Norm n) {
    return norm_of(sub(a, b), n);
}

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace probust
