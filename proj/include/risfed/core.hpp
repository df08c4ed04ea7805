#pragma once

#include <cassert>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace risfed {

using cplx = std::complex<double>;

constexpr double kPi = 3.141592653589793238462643383279502884;

// Error taxonomy used across modules. ConfigError names the violated
// invariant or the offending key; IntegrityError signals inconsistent
// in-memory state (dimension mismatch, missing table entry); FormatError
// signals a malformed or truncated file.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IntegrityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 unit() const {
        double n = norm();
        return n > 0.0 ? Vec3{x / n, y / n, z / n} : Vec3{0.0, 0.0, 0.0};
    }
};

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

inline double distance_xy(const Vec3& a, const Vec3& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

// dBm values convert to linear milliwatts.
inline double dbm_to_mw(double dbm) { return db_to_linear(dbm); }

inline bool finite(double v) { return std::isfinite(v); }
inline bool finite(const cplx& v) {
    return std::isfinite(v.real()) && std::isfinite(v.imag());
}

#ifndef NDEBUG
template <class Seq>
inline void debug_check_finite(const Seq& values, const char* what) {
    for (const auto& v : values)
        if (!finite(v)) throw IntegrityError(std::string("non-finite value in ") + what);
}
#else
template <class Seq>
inline void debug_check_finite(const Seq&, const char*) {}
#endif

}  // namespace risfed
