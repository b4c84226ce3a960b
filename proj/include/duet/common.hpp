#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace duet {

using Scalar = double;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using ArrayX = Eigen::ArrayXd;
using VecX = Eigen::VectorXd;
// Row-major throughout: tensor storage is C-ordered.
using MatX = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<MatX>;
using ConstMatMap = Eigen::Map<const MatX>;

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void str_impl(std::ostringstream&) {}
template <typename T, typename... Rest>
void str_impl(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  str_impl(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string str(const Args&... args) {
  std::ostringstream os;
  detail::str_impl(os, args...);
  return os.str();
}

template <typename... Args>
[[noreturn]] void fail(const Args&... args) {
  throw Error(str(args...));
}

#define DUET_CHECK(cond, ...)                                  \
  do {                                                         \
    if (!(cond)) ::duet::fail("check failed: ", __VA_ARGS__);  \
  } while (0)

inline bool all_finite(const ArrayX& a) { return a.isFinite().all(); }

constexpr int kNumJoints = 24;
constexpr int kPoseDim = 144;   // 24 joints x 6D rotation
constexpr int kShapeDim = 10;
constexpr int kTransDim = 3;
constexpr int kPersonDim = kPoseDim + kShapeDim + kTransDim;  // 157
constexpr int kNumKeypoints = 17;  // detector skeleton

}  // namespace duet
