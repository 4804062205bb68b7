#pragma once
#include <Eigen/Core>

namespace radiant {

template <class Scalar, int Rows = Eigen::Dynamic>
using vec_type = Eigen::Matrix<Scalar, Rows, 1>;

template <class Scalar, int Rows = Eigen::Dynamic, int Cols = Eigen::Dynamic>
using mat_type = Eigen::Matrix<Scalar, Rows, Cols>;

template <class Scalar, int Rows = Eigen::Dynamic, int Cols = Eigen::Dynamic>
using rowmat_type = Eigen::Matrix<Scalar, Rows, Cols, Eigen::RowMajor>;

using Vector = vec_type<double>;
using Matrix = mat_type<double>;

} // namespace radiant
