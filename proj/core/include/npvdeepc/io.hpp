#pragma once

#include <string>

#include "npvdeepc/hankel.hpp"

namespace npvdeepc::io {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Trajectory CSV with header `k,P,q,Ts,Tg,d` (two inputs, two outputs, one parameter).
std::string trajectory_to_csv(const Trajectory& traj);
Trajectory trajectory_from_csv(const std::string& text, double dt);
void write_trajectory_csv(const Trajectory& traj, const std::string& path);
Trajectory read_trajectory_csv(const std::string& path, double dt);

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);
/// Creates `dir` and its parents if needed.
void ensure_directory(const std::string& dir);
std::string join_path(const std::string& dir, const std::string& name);

}  // namespace npvdeepc::io
