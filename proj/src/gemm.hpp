#pragma once

#include <Eigen/Core>

namespace ddseg::detail {

// C[m, n] (+)= op(A) op(B) for row-major buffers. op(A) is [m, k]; A is
// stored as [k, m] when trans_a is set (likewise B as [n, k]).
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using ConstMap = Eigen::Map<const Mat>;
    Eigen::Map<Mat> cm(c, m, n);
    if (!accumulate) cm.setZero();
    if (m == 0 || n == 0 || k == 0) return;
    if (!trans_a && !trans_b) {
        cm.noalias() += ConstMap(a, m, k) * ConstMap(b, k, n);
    } else if (trans_a && !trans_b) {
        cm.noalias() += ConstMap(a, k, m).transpose() * ConstMap(b, k, n);
    } else if (!trans_a && trans_b) {
        cm.noalias() += ConstMap(a, m, k) * ConstMap(b, n, k).transpose();
    } else {
        cm.noalias() += ConstMap(a, k, m).transpose() * ConstMap(b, n, k).transpose();
    }
}

}  // namespace ddseg::detail
