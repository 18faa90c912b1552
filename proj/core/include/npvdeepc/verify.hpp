#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "npvdeepc/experiment.hpp"

namespace npvdeepc::verify {

/// One structural check: `passed` is `value` compared against `threshold`.
struct Check {
    std::string name;
    bool passed = false;
    double value = 0.0;
    double threshold = 0.0;
    std::string detail;
};

struct Report {
    std::vector<Check> checks;

    [[nodiscard]] bool all_passed() const;
    [[nodiscard]] std::string to_json() const;
};

/// 100 windows of a fresh run of an order-2 SISO LTI plant lie in the range of
/// a Hankel set built from an earlier run (residual below 1e-8); the same
/// windows with +1 on one output sample do not (residual above 1e-2).
Check willems_lti(std::uint64_t seed);

/// The depth-(T_ini + N) input Hankel matrix has full row rank.
Check input_pe(const Trajectory& data, int t_ini, int horizon);

/// col(Phi_HL, 1') has full row rank nu_L + 1.
Check neural_rank(const hypernet::HyperDnnModel& model, const HankelSet& hs);

/// The DeePC projector is symmetric and idempotent, and splits random vectors
/// into orthogonal parts, all within 1e-10.
Check projector(const HankelSet& hs, std::uint64_t seed);

/// On data whose outputs are exactly affine in the features, the residual E
/// vanishes and the slack-free controller with fixed inputs predicts the same
/// outputs as the refitted network (within 1e-8 over 50 windows).
Check zero_residual_equivalence(const std::shared_ptr<const hypernet::HyperDnnModel>& model, const HankelSet& hs,
                       const control::ControllerConfig& cfg, std::uint64_t seed);

/// Analytic d phi_HL / d u against central differences over 10 models x 10
/// inputs (the trained model and nine random initialisations).
Check phi_jacobian(const hypernet::HyperDnnModel& model, const HankelSet& hs, std::uint64_t seed);

/// Analytic constraint Jacobian and objective gradient of the controller NLP
/// agree with central differences.
Check nlp_derivatives(const npv::NpvController& ctrl, const control::PastData& past, std::uint64_t seed);

/// Variable, equality and finite-bound counts of the controller NLP.
Check problem_size(const npv::NpvController& ctrl, int n_u, int n_y, int horizon, int features);

/// Every check on the tracking model and data of `setup`.
Report run_all(const experiment::Setup& setup);

}  // namespace npvdeepc::verify
