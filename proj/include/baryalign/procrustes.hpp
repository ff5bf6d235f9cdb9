#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <string>

#include "baryalign/errors.hpp"
#include "baryalign/types.hpp"

namespace baryalign {

struct ProcrustesSolution {
    Matrix rotation;   // d x d orthogonal, reflections allowed
    double objective;  // ||X R - M||_F^2 at the solution
};

/// ||X R - M||_F^2 for conforming shapes.
inline double procrustes_objective(const Matrix& source, const Matrix& rotation,
                                   const Matrix& target) {
    if (source.cols() != rotation.rows() || rotation.rows() != rotation.cols())
        fail(Errc::shape_mismatch, "rotation must be " + std::to_string(source.cols()) + "x" +
                                       std::to_string(source.cols()));
    if (target.rows() != source.rows() || target.cols() != rotation.cols())
        fail(Errc::shape_mismatch, "target shape does not match source * rotation");
    return (source * rotation - target).squaredNorm();
}

/// Minimize ||X R - M||_F^2 over the full orthogonal group O(d).
///
/// With A = X^T M and SVD A = U S V^T, the minimizer is R = U V^T. No
/// determinant correction is applied: reflections are admissible, which
/// is what makes the minimum over O(d) exact rather than restricted to
/// SO(d).
inline ProcrustesSolution solve_orthogonal_procrustes(const Matrix& source,
                                                      const Matrix& target) {
    if (source.rows() == 0 || source.cols() == 0)
        fail(Errc::shape_mismatch, "source matrix is empty");
    if (source.rows() != target.rows() || source.cols() != target.cols())
        fail(Errc::shape_mismatch,
             "source is " + std::to_string(source.rows()) + "x" + std::to_string(source.cols()) +
                 " but target is " + std::to_string(target.rows()) + "x" +
                 std::to_string(target.cols()));
    if (!source.allFinite() || !target.allFinite())
        fail(Errc::non_finite_input, "source or target contains NaN or Inf");

    Matrix cross = source.transpose() * target;
    Eigen::BDCSVD<Matrix> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.info() != Eigen::Success) fail(Errc::svd_failure, "SVD did not converge");

    ProcrustesSolution out;
    out.rotation = svd.matrixU() * svd.matrixV().transpose();
    out.objective = procrustes_objective(source, out.rotation, target);
    return out;
}

}  // namespace baryalign
