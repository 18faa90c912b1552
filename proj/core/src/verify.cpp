#include "npvdeepc/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

#include "npvdeepc/deepc.hpp"
#include "npvdeepc/errors.hpp"
#include "npvdeepc/io.hpp"
#include "npvdeepc/optim.hpp"

namespace npvdeepc::verify {

namespace {

MatrixXd gaussian(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = n(rng);
    return m;
}

Check make(std::string name, double value, double threshold, bool passed, std::string detail) {
    return {std::move(name), passed, value, threshold, std::move(detail)};
}

control::PastData past_of(const Window& w) { return {w.u_ini, w.y_ini, w.p_hist}; }

}  // namespace

bool Report::all_passed() const {
    for (const auto& c : checks)
        if (!c.passed) return false;
    return true;
}

std::string Report::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : checks)
        arr.push_back({{"name", c.name},
                       {"passed", c.passed},
                       {"value", c.value},
                       {"threshold", c.threshold},
                       {"detail", c.detail}});
    return nlohmann::json{{"passed", all_passed()}, {"checks", arr}}.dump(2);
}

Check willems_lti(std::uint64_t seed) {
    constexpr int kTini = 5;
    constexpr int kHorizon = 10;
    constexpr int kWindows = 100;
    constexpr double kAccept = 1e-8;
    constexpr double kReject = 1e-2;
    std::mt19937_64 rng(seed);
    plant::LtiPlant sys;
    sys.A = (MatrixXd(2, 2) << 0.8, 1.0, 0.0, 0.5).finished();  // eigenvalues 0.8, 0.5
    sys.B = (MatrixXd(2, 1) << 0.0, 1.0).finished();
    sys.C = (MatrixXd(1, 2) << 1.0, 0.0).finished();
    sys.D = MatrixXd::Zero(1, 1);
    sys.x = VectorXd::Zero(2);

    const Trajectory data = plant::simulate_lti(sys, gaussian(1, 200, rng));
    const HankelSet hs = partition(data, kTini, kHorizon);
    // A second run from a random state: every window is a system trajectory.
    sys.x = gaussian(2, 1, rng);
    const Trajectory fresh = plant::simulate_lti(sys, gaussian(1, kWindows + kTini + kHorizon - 1, rng));
    std::uniform_int_distribution<int> pick(0, kTini + kHorizon - 1);
    double worst_member = 0.0;
    double best_outsider = std::numeric_limits<double>::infinity();
    for (int s = 0; s < kWindows; ++s) {
        Window w = window_at(fresh, s, kTini, kHorizon);
        worst_member = std::max(worst_member, willems_membership(hs, w, kAccept).residual);
        const int i = pick(rng);
        if (i < kTini) w.y_ini(i) += 1.0;
        else w.y_f(i - kTini) += 1.0;
        best_outsider = std::min(best_outsider, willems_membership(hs, w, kAccept).residual);
    }
    const bool ok = worst_member < kAccept && best_outsider > kReject;
    return make("willems_lti", worst_member, kAccept, ok,
                "max residual of 100 fresh windows; min residual of 100 perturbed windows " +
                    io::format_double(best_outsider) + " (must exceed 1e-2)");
}

Check input_pe(const Trajectory& data, int t_ini, int horizon) {
    const int depth = t_ini + horizon;
    const PeCheck pe = check_pe(data.u, depth);
    const int full = data.n_u() * depth;
    return make("input_pe", pe.rank, full, pe.rank == full,
                "rank of the depth-" + std::to_string(depth) + " input Hankel");
}

Check neural_rank(const hypernet::HyperDnnModel& model, const HankelSet& hs) {
    const int full = model.feature_size() + 1;
    try {
        const npv::NeuralHankel nh = npv::transform_hankel(model, hs);
        return make("neural_rank", nh.lifted_rank, full, nh.lifted_rank == full, "rank of col(Phi_HL, 1')");
    } catch (const DataError& e) {
        return make("neural_rank", 0, full, false, e.what());
    }
}

Check projector(const HankelSet& hs, std::uint64_t seed) {
    constexpr double kTol = 1e-10;
    const MatrixXd pi = deepc::build_projector(hs);
    const double idem = (pi * pi - pi).cwiseAbs().maxCoeff();
    const double sym = (pi - pi.transpose()).cwiseAbs().maxCoeff();
    std::mt19937_64 rng(seed);
    double pyth = 0.0;
    for (int i = 0; i < 100; ++i) {
        const VectorXd v = gaussian(static_cast<int>(pi.rows()), 1, rng);
        const VectorXd a = pi * v;
        const VectorXd b = v - a;
        pyth = std::max(pyth, std::abs(v.squaredNorm() - a.squaredNorm() - b.squaredNorm()) / v.squaredNorm());
    }
    const double worst = std::max({idem, sym, pyth});
    return make("projector", worst, kTol, worst <= kTol,
                "max |Pi^2 - Pi| " + io::format_double(idem) + ", max |Pi - Pi'| " + io::format_double(sym) +
                    ", Pythagoras on 100 vectors " + io::format_double(pyth));
}

Check zero_residual_equivalence(const std::shared_ptr<const hypernet::HyperDnnModel>& model, const HankelSet& hs,
                       const control::ControllerConfig& cfg, std::uint64_t seed) {
    constexpr double kTol = 1e-8;
    constexpr int kWindows = 50;
    std::mt19937_64 rng(seed);
    const MatrixXd phi = hypernet::phi_hl_columns(*model, hs);
    MatrixXd lifted(phi.rows() + 1, phi.cols());
    lifted << phi, MatrixXd::Ones(1, phi.cols());
    HankelSet syn = hs;
    syn.Yf = gaussian(static_cast<int>(hs.Yf.rows()), static_cast<int>(lifted.rows()), rng) * lifted;

    const npv::NeuralHankel nh = npv::transform_hankel(*model, syn);
    const npv::ResidualReport l2 = npv::affine_residual(nh);
    const double e_max = l2.E.cwiseAbs().maxCoeff();

    control::ControllerConfig cc = cfg;
    cc.output_constraints = false;
    npv::NpvController ctrl(model, nh, cc, npv::Mode::npv, false);
    ctrl.set_warm_start(false);
    const hypernet::HyperDnnModel refit = hypernet::with_output_layer(*model, hypernet::refit_output_ls(*model, syn));
    const int nu = ctrl.nu_total();
    const int ny = ctrl.ny_total();
    std::uniform_int_distribution<int> pick(0, syn.cols() - 1);
    double gap = 0.0;
    int failures = 0;
    for (int i = 0; i < kWindows; ++i) {
        const Window w = column_window(syn, pick(rng));
        const control::PastData past = past_of(w);
        const VectorXd u_prev = w.u_ini.tail(cc.n_u());
        optim::NlpProblem problem = ctrl.build_problem(past, VectorXd::Zero(cc.n_y()), u_prev);
        problem.lower.head(nu) = w.u_f;
        problem.upper.head(nu) = w.u_f;
        VectorXd x0 = ctrl.initial_point(past, u_prev);
        x0.head(nu) = w.u_f;
        const optim::SqpResult res = optim::solve_sqp(problem, x0, cc.sqp);
        failures += res.diag.status == optim::SolveStatus::optimal ? 0 : 1;
        const VectorXd y_nls = hypernet::predict_nls(refit, w);
        gap = std::max(gap, (res.x.segment(nu, ny) - y_nls).lpNorm<Eigen::Infinity>());
    }
    const bool ok = failures == 0 && gap < kTol && e_max < kTol;
    return make("zero_residual_equivalence", gap, kTol, ok,
                "max |y_npv - y_nls| over 50 windows; max |E| " + io::format_double(e_max) + ", non-optimal solves " +
                    std::to_string(failures));
}

Check phi_jacobian(const hypernet::HyperDnnModel& model, const HankelSet& hs, std::uint64_t seed) {
    constexpr double kTol = 1e-6;
    constexpr int kModels = 10;
    constexpr int kInputsPerModel = 10;
    std::mt19937_64 rng(seed);
    hypernet::NetworkSpec spec;
    spec.dims = model.dims;
    spec.hidden_sizes.clear();
    spec.modulated.clear();
    for (const auto& layer : model.layers) {
        spec.hidden_sizes.push_back(layer.out);
        spec.modulated.push_back(layer.modulated);
    }
    const MatrixXd inputs = hs.past_and_future_inputs();
    std::uniform_int_distribution<int> pick(0, hs.cols() - 1);
    const int off = model.dims.future_offset();
    const int nf = model.dims.n_u * model.dims.horizon;
    double worst = 0.0;
    for (int m = 0; m < kModels; ++m) {
        const hypernet::HyperDnnModel net = m == 0 ? model : hypernet::initialize(spec, model.scalers, seed + m);
        for (int i = 0; i < kInputsPerModel; ++i) {
            const int c = pick(rng);
            hypernet::NnInput in{inputs.col(c), hs.Pp.col(c)};
            in.u_nn.segment(off, nf) += gaussian(nf, 1, rng, 0.5);
            const hypernet::FrozenNetwork frozen(net, in.p_vec);
            auto fn = [&](const VectorXd& u) {
                VectorXd z = in.u_nn;
                z.segment(off, nf) = u;
                return frozen.features(z);
            };
            auto jac = [&](const VectorXd&) { return hypernet::jacobian_phi_hl_wrt_future_u(net, in); };
            worst = std::max(worst, optim::jacobian_fd_error(fn, jac, in.u_nn.segment(off, nf)));
        }
    }
    return make("phi_jacobian", worst, kTol, worst < kTol,
                "max relative error of d phi_HL / d u over 100 (model, input) pairs");
}

Check nlp_derivatives(const npv::NpvController& ctrl, const control::PastData& past, std::uint64_t seed) {
    constexpr double kTol = 1e-6;
    std::mt19937_64 rng(seed);
    const VectorXd u_prev = past.u_ini.tail(ctrl.config().n_u());
    const optim::NlpProblem p = ctrl.build_problem(past, Eigen::Vector2d(36.0, 0.0), u_prev);
    const VectorXd x = ctrl.initial_point(past, u_prev) + gaussian(p.num_variables, 1, rng, 0.05);
    const double jac = optim::jacobian_fd_error(p.constraints, p.constraint_jacobian, x);
    const double grad = optim::jacobian_fd_error(
        [&](const VectorXd& z) { return VectorXd::Constant(1, p.objective(z)); },
        [&](const VectorXd& z) { return MatrixXd(p.gradient(z).transpose()); }, x);
    const double worst = std::max(jac, grad);
    return make("nlp_derivatives", worst, kTol, worst <= kTol,
                "constraint Jacobian " + io::format_double(jac) + ", objective gradient " + io::format_double(grad));
}

Check problem_size(const npv::NpvController& ctrl, int n_u, int n_y, int horizon, int features) {
    const npv::ProblemSize s = ctrl.problem_size();
    const int slack = ctrl.ns_total() > 0 ? features + 1 : 0;
    const int vars = n_u * horizon + 2 * n_y * horizon + slack;
    const int eqs = n_y * horizon + features + 1;  // output model rows plus kernel rows
    const int bounds = 2 * n_u * horizon + (ctrl.config().output_constraints ? 2 * n_y * horizon : 0);
    const bool ok = s.variables == vars && s.equalities == eqs && s.inequalities == bounds;
    return make("problem_size", s.variables, vars, ok,
                "variables " + std::to_string(s.variables) + "/" + std::to_string(vars) + ", equalities " +
                    std::to_string(s.equalities) + "/" + std::to_string(eqs) + ", finite bounds " +
                    std::to_string(s.inequalities) + "/" + std::to_string(bounds));
}

Report run_all(const experiment::Setup& setup) {
    const auto& cfg = setup.cfg;
    const int t_ini = cfg.control.t_ini;
    const int horizon = cfg.control.horizon;
    const HankelSet hs_deepc = partition(setup.data.slice(0, cfg.hankel.deepc_points), t_ini, horizon);
    const HankelSet hs_neural = partition(setup.data.slice(0, cfg.hankel.neural_points), t_ini, horizon);
    const control::ControllerConfig cc = cfg.controller(cfg.npv_deepc.lambda_g, cfg.npv_deepc.lambda_sigma);

    Report rep;
    rep.checks.push_back(willems_lti(cfg.seed));
    rep.checks.push_back(input_pe(setup.data, t_ini, horizon));
    rep.checks.push_back(neural_rank(*setup.model, hs_neural));
    const bool rank_ok = rep.checks.back().passed;
    rep.checks.push_back(projector(hs_deepc, cfg.seed));
    if (!rank_ok) return rep;  // the remaining checks need the neural Hankel
    rep.checks.push_back(zero_residual_equivalence(setup.model, hs_neural, cc, cfg.seed));
    rep.checks.push_back(phi_jacobian(*setup.model, hs_neural, cfg.seed));

    const npv::NpvController ctrl(setup.model, npv::transform_hankel(*setup.model, hs_neural), cc, npv::Mode::npv,
                                  cfg.npv_deepc.kernel_slack);
    const Window w = column_window(hs_neural, hs_neural.cols() / 3);
    rep.checks.push_back(nlp_derivatives(ctrl, past_of(w), cfg.seed));
    rep.checks.push_back(problem_size(ctrl, cc.n_u(), cc.n_y(), horizon, setup.model->feature_size()));
    return rep;
}

}  // namespace npvdeepc::verify
