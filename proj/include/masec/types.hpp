#pragma once

#include <Eigen/Dense>

namespace masec {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

}  // namespace masec
