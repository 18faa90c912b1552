#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace npvdeepc::metrics {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Series are channels x samples. Sums run over k = t_ini, ..., n_sim
/// inclusive, so n_sim must be a valid column index.
double rmse(const MatrixXd& y, const MatrixXd& r, int t_ini, int n_sim);
double ise(const MatrixXd& y, const MatrixXd& r, int t_ini, int n_sim);
double control_energy(const MatrixXd& u, int t_ini, int n_sim);

/// Best fit rate in percent, averaged over windows: max(1 - |y - yhat| / |y - ybar|, 0) * 100
/// with ybar the per-channel mean of all true data (entry i of a window is channel i % n_channels).
double bfr(const std::vector<VectorXd>& y_true, const std::vector<VectorXd>& y_pred, int n_channels);

double mean_cpu(const std::vector<double>& step_times);

struct RunMetrics {
    std::string controller;
    bool noisy = false;
    double rmse = 0.0;
    double ise = 0.0;
    double ju = 0.0;
    double mean_cpu_s = 0.0;
};

/// Comparison table, one row per (controller, noise) pair.
std::string comparison_csv(const std::vector<RunMetrics>& rows, bool with_timing);

}  // namespace npvdeepc::metrics
