#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace credsurr {

using Scalar = double;
using Index = Eigen::Index;

template <typename T = Scalar>
using VectorT = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T = Scalar>
using MatrixT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = VectorT<Scalar>;
using Matrix = MatrixT<Scalar>;
using VectorI = VectorT<int>;

template <typename Derived>
using ConstRef = const Eigen::Ref<const Derived>;

// All randomness flows through explicitly passed engines of this type.
using Rng = std::mt19937_64;

// Densities and survivals below exp(-700) are clamped here in log space.
inline constexpr Scalar kLogFloor = -700.0;

}  // namespace credsurr
