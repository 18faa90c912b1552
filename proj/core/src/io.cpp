#include "npvdeepc/io.hpp"

#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "npvdeepc/errors.hpp"

namespace npvdeepc::io {

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string trajectory_to_csv(const Trajectory& traj) {
    traj.validate();
    if (traj.n_u() != 2 || traj.n_y() != 2 || traj.n_p() != 1)
        throw DimensionError("trajectory CSV needs 2 inputs, 2 outputs and 1 parameter");
    std::ostringstream os;
    os << "k,P,q,Ts,Tg,d\n";
    for (int k = 0; k < traj.length(); ++k) {
        os << k << ',' << format_double(traj.u(0, k)) << ',' << format_double(traj.u(1, k)) << ','
           << format_double(traj.y(0, k)) << ',' << format_double(traj.y(1, k)) << ',' << format_double(traj.p(0, k))
           << '\n';
    }
    return os.str();
}

Trajectory trajectory_from_csv(const std::string& text, double dt) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != "k,P,q,Ts,Tg,d")
        throw DataError("trajectory CSV: expected header 'k,P,q,Ts,Tg,d'");
    std::vector<std::array<double, 5>> rows;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::array<double, 6> v{};
        const char* p = line.data();
        const char* end = line.data() + line.size();
        for (int i = 0; i < 6; ++i) {
            const auto res = std::from_chars(p, end, v[static_cast<std::size_t>(i)]);
            if (res.ec != std::errc() || (i < 5 && (res.ptr == end || *res.ptr != ',')) || (i == 5 && res.ptr != end))
                throw DataError("trajectory CSV: malformed line " + std::to_string(lineno));
            p = res.ptr + 1;
        }
        if (static_cast<std::size_t>(v[0]) != rows.size())
            throw DataError("trajectory CSV: non-consecutive sample index at line " + std::to_string(lineno));
        rows.push_back({v[1], v[2], v[3], v[4], v[5]});
    }
    if (rows.empty()) throw DataError("trajectory CSV: no samples");
    Trajectory t;
    const auto n = static_cast<Eigen::Index>(rows.size());
    t.u.resize(2, n);
    t.y.resize(2, n);
    t.p.resize(1, n);
    t.dt = dt;
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto& r = rows[static_cast<std::size_t>(k)];
        t.u.col(k) << r[0], r[1];
        t.y.col(k) << r[2], r[3];
        t.p(0, k) = r[4];
    }
    t.validate();
    return t;
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) { write_text(path, trajectory_to_csv(traj)); }

Trajectory read_trajectory_csv(const std::string& path, double dt) { return trajectory_from_csv(read_text(path), dt); }

std::string read_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write '" + path + "'");
    f << text;
    if (!f) throw DataError("write failed for '" + path + "'");
}

void ensure_directory(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory '" + dir + "': " + ec.message());
}

std::string join_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

}  // namespace npvdeepc::io
