#pragma once

#include <Eigen/Dense>

namespace npvdeepc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Time-ordered (u, y, p) samples. Column k of each matrix is sample k.
struct Trajectory {
    MatrixXd u;  ///< n_u x L
    MatrixXd y;  ///< n_y x L
    MatrixXd p;  ///< n_p x L
    double dt = 0.5;

    [[nodiscard]] int length() const { return static_cast<int>(u.cols()); }
    [[nodiscard]] int n_u() const { return static_cast<int>(u.rows()); }
    [[nodiscard]] int n_y() const { return static_cast<int>(y.rows()); }
    [[nodiscard]] int n_p() const { return static_cast<int>(p.rows()); }

    /// Throws DimensionError/DataError when the invariants do not hold.
    void validate() const;

    /// Samples [first, first + count).
    [[nodiscard]] Trajectory slice(int first, int count) const;
};

/// Past/future partition of the depth-(T_ini + N) Hankel matrices.
/// Pp carries the parameter history aligned with each column.
struct HankelSet {
    MatrixXd Up;  ///< n_u*T_ini x L_c
    MatrixXd Yp;  ///< n_y*T_ini x L_c
    MatrixXd Uf;  ///< n_u*N x L_c
    MatrixXd Yf;  ///< n_y*N x L_c
    MatrixXd Pp;  ///< n_p*T_ini x L_c
    int t_ini = 0;
    int horizon = 0;

    [[nodiscard]] int cols() const { return static_cast<int>(Up.cols()); }
    /// col(Up, Yp, Uf), the block that the projection regulariser and the
    /// neural transformation act on.
    [[nodiscard]] MatrixXd past_and_future_inputs() const;
    /// col(Up, Yp, Uf, Yf).
    [[nodiscard]] MatrixXd stacked() const;
};

/// One (past, future) slice of a trajectory in the stacked layout used by the
/// Hankel blocks.
struct Window {
    VectorXd u_ini;   ///< n_u*T_ini
    VectorXd y_ini;   ///< n_y*T_ini
    VectorXd u_f;     ///< n_u*N
    VectorXd y_f;     ///< n_y*N
    VectorXd p_hist;  ///< n_p*T_ini

    [[nodiscard]] VectorXd stacked() const;  ///< col(u_ini, y_ini, u_f, y_f)
};

/// Block Hankel matrix of depth `depth` for the columns of `seq` (n_z x L).
/// Result is (n_z*depth) x (L - depth + 1).
MatrixXd build_hankel(const MatrixXd& seq, int depth);

struct PeCheck {
    bool is_pe = false;
    int rank = 0;
};

/// Persistency of excitation of order `depth`. Throws DataError when the
/// sequence is shorter than the (n_z + 1) * depth - 1 lower bound.
PeCheck check_pe(const MatrixXd& seq, int depth, double tol = -1.0);

/// Splits the Hankel matrices of `traj` at T_ini. Uses the first `cols`
/// columns (cols < 0: as many as the trajectory allows).
HankelSet partition(const Trajectory& traj, int t_ini, int horizon, int cols = -1);

/// Window whose past part starts at sample `start`.
Window window_at(const Trajectory& traj, int start, int t_ini, int horizon);

/// Window formed by column `col` of a Hankel set.
Window column_window(const HankelSet& hs, int col);

struct Membership {
    bool member = false;
    double residual = 0.0;
};

/// Least-squares distance of the stacked window from the column span of the
/// stacked Hankel matrix (minimum-norm SVD solve).
Membership willems_membership(const HankelSet& hs, const Window& w, double tol);

}  // namespace npvdeepc
