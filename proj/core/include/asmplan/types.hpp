#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace asmplan {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec7 = Eigen::Matrix<double, 7, 1>;
using Vec8 = Eigen::Matrix<double, 8, 1>;
using Vec13 = Eigen::Matrix<double, 13, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat7 = Eigen::Matrix<double, 7, 7>;
using Mat76 = Eigen::Matrix<double, 7, 6>;
using Mat87 = Eigen::Matrix<double, 8, 7>;
using Mat43 = Eigen::Matrix<double, 4, 3>;

/// Scalar-first unit quaternion (w, x, y, z).
using Quat = Eigen::Vector4d;

/// Base class of all errors raised for invalid inputs.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidQuaternion : public Error {
 public:
  using Error::Error;
};

class DegeneratePose : public Error {
 public:
  using Error::Error;
};

class PolytopeError : public Error {
 public:
  enum class Kind { kDegenerateFace, kOriginNotInterior, kUnbounded, kShape };

  PolytopeError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Singular or non-finite linear algebra inside a solver.
class NumericFailure : public Error {
 public:
  using Error::Error;
};

/// Collision LP not solvable even after rescaling retries.
class CollisionFailure : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace asmplan
