#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dqpinn/errors.hpp"
#include "dqpinn/optim/bfgs.hpp"
#include "dqpinn/reference.hpp"

namespace dqpinn::io {

inline constexpr const char* kTrajectoryHeader = "t,trace_re,trace_im,n_up,I_L,I_R";
inline constexpr const char* kHistoryHeader = "iteration,loss,L_R,L_I,L_tr,grad_norm,step";

// Shortest round-trip decimal with 17 significant digits.
inline std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Writes to a sibling temporary file, then renames over the target.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string trajectory_csv(const reference::Trajectory& tr) {
  std::string s = std::string(kTrajectoryHeader) + "\n";
  for (std::size_t i = 0; i < tr.rows.size(); ++i) {
    const auto& r = tr.rows[i];
    if (i > 0 && !(r.t > tr.rows[i - 1].t)) throw IoError("trajectory rows are not strictly time-ascending");
    s += fmt17(r.t) + "," + fmt17(r.trace.real()) + "," + fmt17(r.trace.imag()) + "," + fmt17(r.n_up) + "," +
         fmt17(r.current_l) + "," + fmt17(r.current_r) + "\n";
  }
  return s;
}

inline void write_trajectory(const reference::Trajectory& tr, const std::filesystem::path& path) {
  write_atomic(path, trajectory_csv(tr));
}

inline reference::Trajectory parse_trajectory(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kTrajectoryHeader) throw IoError("trajectory CSV: unexpected header");
  reference::Trajectory tr;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      std::size_t used = 0;
      double x = 0.0;
      try {
        x = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw IoError("trajectory CSV: malformed number '" + cell + "'");
      }
      if (used != cell.size()) throw IoError("trajectory CSV: malformed number '" + cell + "'");
      v.push_back(x);
    }
    if (v.size() != 6) throw IoError("trajectory CSV: expected 6 columns");
    reference::TrajectoryRecord r;
    r.t = v[0];
    r.trace = {v[1], v[2]};
    r.n_up = v[3];
    r.current_l = v[4];
    r.current_r = v[5];
    if (!tr.rows.empty() && !(r.t > tr.rows.back().t)) throw IoError("trajectory CSV: times not strictly ascending");
    tr.rows.push_back(r);
  }
  return tr;
}

inline reference::Trajectory read_trajectory(const std::filesystem::path& path) {
  return parse_trajectory(read_file(path));
}

inline std::string history_csv(const std::vector<optim::HistoryRow>& rows) {
  std::string s = std::string(kHistoryHeader) + "\n";
  for (const auto& r : rows)
    s += std::to_string(r.iteration) + "," + fmt17(r.loss) + "," + fmt17(r.parts[0]) + "," + fmt17(r.parts[1]) + "," +
         fmt17(r.parts[2]) + "," + fmt17(r.grad_norm) + "," + fmt17(r.step) + "\n";
  return s;
}

}  // namespace dqpinn::io
