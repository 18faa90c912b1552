#include "npvdeepc/metrics.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "npvdeepc/errors.hpp"
#include "npvdeepc/io.hpp"

namespace npvdeepc::metrics {

namespace {

void check_range(const MatrixXd& a, int t_ini, int n_sim) {
    if (t_ini < 0 || n_sim < t_ini || n_sim >= a.cols())
        throw DimensionError("metrics: summation range [" + std::to_string(t_ini) + ", " + std::to_string(n_sim) +
                             "] outside the series of length " + std::to_string(a.cols()));
}

}  // namespace

double ise(const MatrixXd& y, const MatrixXd& r, int t_ini, int n_sim) {
    if (y.rows() != r.rows() || y.cols() != r.cols()) throw DimensionError("metrics: y and r lengths differ");
    check_range(y, t_ini, n_sim);
    return (y - r).middleCols(t_ini, n_sim - t_ini + 1).squaredNorm();
}

double rmse(const MatrixXd& y, const MatrixXd& r, int t_ini, int n_sim) {
    return std::sqrt(ise(y, r, t_ini, n_sim) / static_cast<double>(n_sim - t_ini + 1));
}

double control_energy(const MatrixXd& u, int t_ini, int n_sim) {
    check_range(u, t_ini, n_sim);
    return u.middleCols(t_ini, n_sim - t_ini + 1).squaredNorm();
}

double bfr(const std::vector<VectorXd>& y_true, const std::vector<VectorXd>& y_pred, int n_channels) {
    if (y_true.empty()) throw DataError("bfr: no windows");
    if (y_true.size() != y_pred.size()) throw DimensionError("bfr: window counts differ");
    if (n_channels < 1) throw DimensionError("bfr: channel count must be >= 1");
    VectorXd sum = VectorXd::Zero(n_channels);
    Eigen::VectorXi count = Eigen::VectorXi::Zero(n_channels);
    for (std::size_t w = 0; w < y_true.size(); ++w) {
        if (y_true[w].size() != y_pred[w].size() || y_true[w].size() % n_channels != 0)
            throw DimensionError("bfr: window lengths differ");
        for (Eigen::Index i = 0; i < y_true[w].size(); ++i) {
            sum(i % n_channels) += y_true[w](i);
            ++count(i % n_channels);
        }
    }
    const VectorXd mean = sum.array() / count.cast<double>().array();
    double acc = 0.0;
    for (std::size_t w = 0; w < y_true.size(); ++w) {
        VectorXd dev = y_true[w];
        for (Eigen::Index i = 0; i < dev.size(); ++i) dev(i) -= mean(i % n_channels);
        const double den = dev.norm();
        if (den == 0.0) throw DataError("bfr: degenerate reference (true data equal to its mean)");
        acc += std::max(1.0 - (y_true[w] - y_pred[w]).norm() / den, 0.0);
    }
    return 100.0 * acc / static_cast<double>(y_true.size());
}

double mean_cpu(const std::vector<double>& step_times) {
    if (step_times.empty()) throw DataError("mean_cpu: no steps");
    return std::accumulate(step_times.begin(), step_times.end(), 0.0) / static_cast<double>(step_times.size());
}

std::string comparison_csv(const std::vector<RunMetrics>& rows, bool with_timing) {
    std::ostringstream os;
    os << "controller,noise,rmse,ise,ju";
    if (with_timing) os << ",mean_cpu_s";
    os << '\n';
    for (const auto& r : rows) {
        os << r.controller << ',' << (r.noisy ? "noisy" : "noise_free") << ',' << io::format_double(r.rmse) << ','
           << io::format_double(r.ise) << ',' << io::format_double(r.ju);
        if (with_timing) os << ',' << io::format_double(r.mean_cpu_s);
        os << '\n';
    }
    return os.str();
}

}  // namespace npvdeepc::metrics
