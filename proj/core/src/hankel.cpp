#include "npvdeepc/hankel.hpp"

#include <string>

#include "npvdeepc/errors.hpp"
#include "npvdeepc/optim.hpp"

namespace npvdeepc {

void Trajectory::validate() const {
    if (u.cols() < 1) throw DimensionError("trajectory: length must be >= 1");
    if (y.cols() != u.cols() || p.cols() != u.cols())
        throw DimensionError("trajectory: u, y, p must have the same number of samples");
    if (!(dt > 0.0)) throw DataError("trajectory: dt must be positive");
    if (!u.allFinite() || !y.allFinite() || !p.allFinite()) throw DataError("trajectory: non-finite sample");
}

Trajectory Trajectory::slice(int first, int count) const {
    if (first < 0 || count < 0 || first + count > length())
        throw DimensionError("trajectory: slice [" + std::to_string(first) + ", " +
                             std::to_string(first + count) + ") out of range");
    Trajectory out;
    out.u = u.middleCols(first, count);
    out.y = y.middleCols(first, count);
    out.p = p.middleCols(first, count);
    out.dt = dt;
    return out;
}

MatrixXd HankelSet::past_and_future_inputs() const {
    MatrixXd m(Up.rows() + Yp.rows() + Uf.rows(), cols());
    m << Up, Yp, Uf;
    return m;
}

MatrixXd HankelSet::stacked() const {
    MatrixXd m(Up.rows() + Yp.rows() + Uf.rows() + Yf.rows(), cols());
    m << Up, Yp, Uf, Yf;
    return m;
}

VectorXd Window::stacked() const {
    VectorXd v(u_ini.size() + y_ini.size() + u_f.size() + y_f.size());
    v << u_ini, y_ini, u_f, y_f;
    return v;
}

MatrixXd build_hankel(const MatrixXd& seq, int depth) {
    const auto nz = seq.rows();
    const auto len = static_cast<int>(seq.cols());
    if (depth < 1) throw DimensionError("build_hankel: depth must be >= 1");
    if (depth > len)
        throw DimensionError("build_hankel: depth " + std::to_string(depth) + " exceeds sequence length " +
                             std::to_string(len));
    const int cols = len - depth + 1;
    MatrixXd h(nz * depth, cols);
    for (int i = 0; i < depth; ++i) h.middleRows(i * nz, nz) = seq.middleCols(i, cols);
    return h;
}

PeCheck check_pe(const MatrixXd& seq, int depth, double tol) {
    const auto nz = static_cast<int>(seq.rows());
    const auto len = static_cast<int>(seq.cols());
    const int bound = (nz + 1) * depth - 1;
    if (len < bound)
        throw DataError("check_pe: insufficient length " + std::to_string(len) +
                        " for order " + std::to_string(depth) + " (requires L >= (n_z + 1) D - 1 = " +
                        std::to_string(bound) + ")");
    const MatrixXd h = build_hankel(seq, depth);
    PeCheck out;
    out.rank = optim::numerical_rank(h, tol);
    out.is_pe = out.rank == nz * depth;
    return out;
}

HankelSet partition(const Trajectory& traj, int t_ini, int horizon, int cols) {
    traj.validate();
    if (t_ini < 1 || horizon < 1) throw DimensionError("partition: T_ini and N must be >= 1");
    const int depth = t_ini + horizon;
    const int available = traj.length() - depth + 1;
    if (available < 1)
        throw DimensionError("partition: trajectory of length " + std::to_string(traj.length()) +
                             " is shorter than depth " + std::to_string(depth));
    if (cols < 0) cols = available;
    if (cols < 1 || cols > available)
        throw DimensionError("partition: requested " + std::to_string(cols) + " columns, only " +
                             std::to_string(available) + " available");
    const int used = cols + depth - 1;
    const MatrixXd hu = build_hankel(traj.u.leftCols(used), depth);
    const MatrixXd hy = build_hankel(traj.y.leftCols(used), depth);
    const MatrixXd hp = build_hankel(traj.p.leftCols(used), depth);
    const int nu = traj.n_u();
    const int ny = traj.n_y();
    const int np = traj.n_p();

    HankelSet hs;
    hs.t_ini = t_ini;
    hs.horizon = horizon;
    hs.Up = hu.topRows(nu * t_ini);
    hs.Uf = hu.bottomRows(nu * horizon);
    hs.Yp = hy.topRows(ny * t_ini);
    hs.Yf = hy.bottomRows(ny * horizon);
    hs.Pp = hp.topRows(np * t_ini);
    return hs;
}

Window window_at(const Trajectory& traj, int start, int t_ini, int horizon) {
    if (start < 0 || start + t_ini + horizon > traj.length())
        throw DimensionError("window_at: window exceeds trajectory");
    auto stack = [](const MatrixXd& m, int first, int count) {
        const MatrixXd block = m.middleCols(first, count);
        return VectorXd(Eigen::Map<const VectorXd>(block.data(), block.size()));
    };
    Window w;
    w.u_ini = stack(traj.u, start, t_ini);
    w.y_ini = stack(traj.y, start, t_ini);
    w.u_f = stack(traj.u, start + t_ini, horizon);
    w.y_f = stack(traj.y, start + t_ini, horizon);
    w.p_hist = stack(traj.p, start, t_ini);
    return w;
}

Window column_window(const HankelSet& hs, int col) {
    if (col < 0 || col >= hs.cols()) throw DimensionError("column_window: column out of range");
    Window w;
    w.u_ini = hs.Up.col(col);
    w.y_ini = hs.Yp.col(col);
    w.u_f = hs.Uf.col(col);
    w.y_f = hs.Yf.col(col);
    w.p_hist = hs.Pp.size() > 0 ? VectorXd(hs.Pp.col(col)) : VectorXd();
    return w;
}

Membership willems_membership(const HankelSet& hs, const Window& w, double tol) {
    const MatrixXd s = hs.stacked();
    if (s.size() == 0) throw DimensionError("willems_membership: empty Hankel set");
    const VectorXd target = w.stacked();
    if (target.size() != s.rows())
        throw DimensionError("willems_membership: window length " + std::to_string(target.size()) +
                             " does not match Hankel rows " + std::to_string(s.rows()));
    Eigen::BDCSVD<MatrixXd> svd(s, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const VectorXd& sv = svd.singularValues();
    const double cutoff = optim::default_rank_tolerance(s, sv.size() > 0 ? sv(0) : 0.0);
    VectorXd coeff = svd.matrixU().transpose() * target;
    for (Eigen::Index i = 0; i < sv.size(); ++i) coeff(i) = sv(i) > cutoff ? coeff(i) / sv(i) : 0.0;
    const VectorXd g = svd.matrixV() * coeff;
    Membership out;
    out.residual = (s * g - target).norm();
    out.member = out.residual <= tol;
    return out;
}

}  // namespace npvdeepc
