#include <algorithm>
#include <cmath>
#include <limits>

#include "npvdeepc/errors.hpp"
#include "npvdeepc/optim.hpp"

namespace npvdeepc::optim {

double default_rank_tolerance(const MatrixXd& a, double sigma_max) {
    return static_cast<double>(std::max(a.rows(), a.cols())) * std::numeric_limits<double>::epsilon() *
           sigma_max;
}

MatrixXd pinv(const MatrixXd& a, double rcond) {
    if (a.size() == 0) return MatrixXd::Zero(a.cols(), a.rows());
    Eigen::BDCSVD<MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const VectorXd& s = svd.singularValues();
    const double smax = s.size() > 0 ? s(0) : 0.0;
    const double cutoff = rcond < 0.0 ? default_rank_tolerance(a, smax) : rcond * smax;
    VectorXd s_inv = VectorXd::Zero(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > cutoff) s_inv(i) = 1.0 / s(i);
    }
    return svd.matrixV() * s_inv.asDiagonal() * svd.matrixU().transpose();
}

int numerical_rank(const MatrixXd& a, double tol) {
    if (a.size() == 0) return 0;
    Eigen::BDCSVD<MatrixXd> svd(a);
    const VectorXd& s = svd.singularValues();
    const double smax = s(0);
    if (smax == 0.0) return 0;
    const double cutoff = tol < 0.0 ? default_rank_tolerance(a, smax) : tol * smax;
    int rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > cutoff) ++rank;
    }
    return rank;
}

MatrixXd null_space(const MatrixXd& a, double tol) {
    const Eigen::Index n = a.cols();
    if (a.rows() == 0) return MatrixXd::Identity(n, n);
    Eigen::BDCSVD<MatrixXd> svd(a, Eigen::ComputeFullV);
    const VectorXd& s = svd.singularValues();
    const double smax = s.size() > 0 ? s(0) : 0.0;
    const double cutoff = tol < 0.0 ? default_rank_tolerance(a, smax) : tol * smax;
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > cutoff) ++rank;
    }
    return svd.matrixV().rightCols(n - rank);
}

double jacobian_fd_error(const std::function<VectorXd(const VectorXd&)>& fn,
                         const std::function<MatrixXd(const VectorXd&)>& jac, const VectorXd& x,
                         double step) {
    const MatrixXd analytic = jac(x);
    MatrixXd numeric(analytic.rows(), analytic.cols());
    VectorXd xp = x;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = step * std::max(1.0, std::abs(x(j)));
        xp(j) = x(j) + h;
        const VectorXd fp = fn(xp);
        xp(j) = x(j) - h;
        const VectorXd fm = fn(xp);
        xp(j) = x(j);
        if (fp.size() != analytic.rows()) throw DimensionError("jacobian_fd_error: row count mismatch");
        numeric.col(j) = (fp - fm) / (2.0 * h);
    }
    const double scale = std::max(1.0, numeric.cwiseAbs().maxCoeff());
    return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

}  // namespace npvdeepc::optim
