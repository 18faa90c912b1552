#pragma once

#include "npvdeepc/controller.hpp"
#include "npvdeepc/hankel.hpp"

namespace npvdeepc::deepc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Regularizer {
    projection,  ///< lambda_g |(I - Pi) g|^2
    two_norm,    ///< lambda_g |g|^2
    one_norm,    ///< lambda_g |g|_1 through g = g+ - g-
};

Regularizer regularizer_from_string(const std::string& name);
std::string to_string(Regularizer r);

/// Pi = pinv(M) M for M = col(Up, Yp, Uf): orthogonal projector onto the row space of M.
MatrixXd build_projector(const HankelSet& hs);

/// DeePC with slack on the initial output constraint. The QP keeps the
/// horizon (u, y) as variables so that the box on both stays a simple bound:
///
///   min  J(u, y) + lambda_g l_g(g) + lambda_sigma |sigma|^2
///   s.t. Up g = u_ini,  Yp g = y_ini + sigma,  Uf g = u,  Yf g = y,  u in U,  y in Y.
///
/// For the quadratic regularisers with M = col(Up, Yp, Uf) of full row rank,
/// g = pinv(M) b + n with b = col(u_ini, y_ini + sigma, u) and n in null(M).
/// Only Yf n reaches the outputs, so n is replaced by the coordinates z of its
/// output-relevant part (|n| = |z|) and the QP shrinks to (u, y, sigma, z).
/// Both forms have the same minimiser; the reduced one is used when it applies.
class DeepcController final : public control::Controller {
public:
    DeepcController(HankelSet hs, control::ControllerConfig cfg, Regularizer reg = Regularizer::projection);

    control::StepResult step(const control::PastData& past, const VectorXd& r, const VectorXd& u_prev) override;
    [[nodiscard]] std::string name() const override { return "deepc"; }

    [[nodiscard]] const MatrixXd& projector() const { return projector_; }
    [[nodiscard]] const HankelSet& hankel() const { return hs_; }
    /// True when steps solve the reduced QP.
    [[nodiscard]] bool reduced() const { return reduced_; }
    /// Forces the full QP in g (for cross-checks).
    void set_reduced(bool on) { reduced_ = on && reducible_; }

private:
    control::StepResult step_full(const control::PastData& past, const VectorXd& r, const VectorXd& u_prev);
    control::StepResult step_reduced(const control::PastData& past, const VectorXd& r, const VectorXd& u_prev);

    HankelSet hs_;
    control::ControllerConfig cfg_;
    Regularizer reg_;
    MatrixXd projector_;
    MatrixXd A_eq_;    // constant part of the equality constraints
    MatrixXd H_reg_;   // regulariser and slack curvature
    VectorXd g_reg_;

    bool reducible_ = false;
    bool reduced_ = false;
    MatrixXd m_pinv_;  // pinv(M), Lc x rows(M)
    MatrixXd b_out_;   // Yf pinv(M)
    MatrixXd n_out_;   // Yf restricted to null(M) in its singular basis: y += n_out_ z
    MatrixXd n_basis_; // n = n_basis_ z, orthonormal columns
};

}  // namespace npvdeepc::deepc
