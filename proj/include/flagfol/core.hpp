#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

namespace flagfol {

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;
using Mat42 = Eigen::Matrix<double, 4, 2>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Chart coordinate slots.
inline constexpr int kAlpha = 0;
inline constexpr int kBeta = 1;
inline constexpr int kPhi = 2;
inline constexpr int kPsi = 3;

// Christoffel symbols indexed as gamma[k](i, j) = Gamma^k_{ij}.
using Christoffel = std::array<Mat4, 4>;

// Fully covariant curvature R_{ijkl} and the (1,3) form R(d_i, d_j) d_k = Rup^l d_l.
struct Riemann {
    double c[4][4][4][4];
};

enum class ErrorCode {
    Config = 2,
    PositivityLost = 3,
    SingularMetric = 3,
    StepSizeTooCoarse = 3,
    DegenerateLeaf = 3,
    MultipleGeodesics = 3,
    ZeroSpeed = 3,
    BoundaryZero = 3,
    SupportOverflow = 3,
    ZeroLost = 3,
    StallDetected = 4,
};

class Error : public std::runtime_error {
  public:
    Error(std::string kind, ErrorCode code, const std::string& what)
        : std::runtime_error(kind + ": " + what), kind_(std::move(kind)), code_(code) {}
    const std::string& kind() const { return kind_; }
    int exit_code() const { return static_cast<int>(code_); }

  private:
    std::string kind_;
    ErrorCode code_;
};

#define FLAGFOL_ERROR(Name, Code)                                                  \
    class Name : public Error {                                                    \
      public:                                                                      \
        explicit Name(const std::string& what) : Error(#Name, Code, what) {}       \
    };

FLAGFOL_ERROR(ConfigError, ErrorCode::Config)
FLAGFOL_ERROR(PositivityLost, ErrorCode::PositivityLost)
FLAGFOL_ERROR(SingularMetric, ErrorCode::SingularMetric)
FLAGFOL_ERROR(StepSizeTooCoarse, ErrorCode::StepSizeTooCoarse)
FLAGFOL_ERROR(DegenerateLeaf, ErrorCode::DegenerateLeaf)
FLAGFOL_ERROR(MultipleGeodesics, ErrorCode::MultipleGeodesics)
FLAGFOL_ERROR(ZeroSpeed, ErrorCode::ZeroSpeed)
FLAGFOL_ERROR(BoundaryZero, ErrorCode::BoundaryZero)
FLAGFOL_ERROR(SupportOverflow, ErrorCode::SupportOverflow)
FLAGFOL_ERROR(ZeroLost, ErrorCode::ZeroLost)
FLAGFOL_ERROR(StallDetected, ErrorCode::StallDetected)

#undef FLAGFOL_ERROR

// Maps an angle to [0, 2pi).
inline double wrap_two_pi(double a) {
    double r = std::fmod(a, kTwoPi);
    if (r < 0.0) r += kTwoPi;
    if (r >= kTwoPi) r -= kTwoPi;
    return r;
}

// Maps an angle to (-pi, pi].
inline double wrap_pi(double a) {
    double r = std::remainder(a, kTwoPi);
    if (r <= -kPi) r += kTwoPi;
    return r;
}

// Representative of `a` mod 2pi closest to `ref`.
inline double unwrap_near(double a, double ref) { return ref + wrap_pi(a - ref); }

// Significant-digit rendering for messages and labels; 17 digits round-trip.
inline std::string show(double v, int digits = 6) {
    std::ostringstream os;
    os.precision(digits);
    os << v;
    return os.str();
}

}  // namespace flagfol
