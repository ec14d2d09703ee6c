#include "incdyn/finetune.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace incdyn {

void validate(const ErrorSystem& sys) {
  const auto n = sys.L_bar.rows();
  const auto m = sys.L_bar.cols();
  require(n >= 1 && m >= 1, "L_bar must be non-empty");
  require(sys.Q.rows() == n && sys.Q.cols() == n, "Q must be n x n");
  require(sys.R.rows() == m && sys.R.cols() == m, "R must be m x m");
  require(sys.L_bar.allFinite() && sys.Q.allFinite() && sys.R.allFinite(),
          "error system has non-finite entries");
  require((sys.Q - sys.Q.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + sys.Q.norm()),
          "Q must be symmetric");
  require((sys.R - sys.R.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + sys.R.norm()),
          "R must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> q_eig(sys.Q, Eigen::EigenvaluesOnly);
  require(q_eig.eigenvalues().minCoeff() >= -1e-12 * (1.0 + sys.Q.norm()),
          "Q must be positive semidefinite");
  Eigen::LLT<Mat> r_chol(sys.R);
  require(r_chol.info() == Eigen::Success, "R must be positive definite");
}

ErrorSystem make_error_system(Mat L_bar) {
  const auto n = L_bar.rows();
  const auto m = L_bar.cols();
  return {std::move(L_bar), Mat::Identity(n, n), 0.1 * Mat::Identity(m, m)};
}

ErrorSystem freeze_error_system(const IncrementalModel& model, const Vec& s, const Vec& a_prev,
                                const Vec& a) {
  return make_error_system(eval_L(model, s, a_prev, a));
}

Vec error_step(const ErrorSystem& sys, const Vec& e, const Vec& da_e) {
  require(e.size() == sys.L_bar.rows() && da_e.size() == sys.L_bar.cols(),
          "error_step dimension mismatch");
  return e + sys.L_bar * da_e;
}

namespace {

Mat riccati_map(const ErrorSystem& sys, const Mat& P) {
  const Mat& B = sys.L_bar;
  const Mat PB = P * B;
  const Mat S = sys.R + B.transpose() * PB;
  return sys.Q + P - PB * S.ldlt().solve(PB.transpose());
}

Mat gain(const ErrorSystem& sys, const Mat& P) {
  const Mat& B = sys.L_bar;
  const Mat S = sys.R + B.transpose() * P * B;
  return S.ldlt().solve(B.transpose() * P);
}

}  // namespace

double riccati_residual(const ErrorSystem& sys, const Mat& P) {
  return (P - riccati_map(sys, P)).cwiseAbs().maxCoeff();
}

LqrSolution solve_lqr(const ErrorSystem& sys, double tol, int max_iter) {
  validate(sys);
  require(tol > 0.0 && max_iter >= 1, "tol must be positive and max_iter >= 1");
  Mat P = sys.Q;
  for (int it = 1; it <= max_iter; ++it) {
    Mat next = riccati_map(sys, P);
    next = 0.5 * (next + next.transpose());
    if (!next.allFinite() || next.cwiseAbs().maxCoeff() > 1e15) {
      throw Error(Errc::non_stabilizable, "Riccati iteration diverged");
    }
    const double change = (next - P).cwiseAbs().maxCoeff();
    P = std::move(next);
    if (change <= tol) {
      return {gain(sys, P), P, it, change};
    }
  }
  throw Error(Errc::non_stabilizable,
              "Riccati iteration did not converge within " + std::to_string(max_iter) +
                  " iterations");
}

Vec residual_policy(const LqrSolution& sol, const Vec& e) {
  require(e.size() == sol.K.cols(), "residual_policy dimension mismatch");
  return -sol.K * e;
}

double closed_loop_spectral_radius(const ErrorSystem& sys, const LqrSolution& sol) {
  const auto n = sys.L_bar.rows();
  const Mat closed = Mat::Identity(n, n) - sys.L_bar * sol.K;
  Eigen::EigenSolver<Mat> eig(closed, false);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

TrackingResult track_reference(const LqrSolution& sol, const EnvSpec& env,
                               const std::vector<ReferencePoint>& reference, int steps,
                               const EnvState& initial) {
  require(steps >= 0 && static_cast<int>(reference.size()) >= steps,
          "reference shorter than the requested number of steps");
  require(sol.K.rows() == env.action_dim && sol.K.cols() == env.state_dim,
          "LQR gain does not match the environment");
  TrackingResult result;
  EnvState state = initial;
  Vec action = initial.prev_action;
  for (int k = 0; k < steps; ++k) {
    if (state.done) {
      result.truncated = true;
      break;
    }
    const ReferencePoint& ref = reference[static_cast<std::size_t>(k)];
    const Vec e = state.s - ref.s_d;
    result.errors.push_back(e);
    result.error_norms.push_back(e.norm());
    const Vec increment = ref.da_d + residual_policy(sol, e);
    const Vec commanded = action + increment;
    StepResult res = step(env, state, commanded);
    if (res.clipped) result.clip_events += 1;
    action = res.applied_action;
    state = std::move(res.next);
  }
  return result;
}

std::vector<ReferencePoint> read_reference(const std::filesystem::path& path, int n, int m) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::missing_file, "cannot open reference file " + path.string());
  std::vector<ReferencePoint> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream row(line);
    std::vector<double> values;
    double v = 0.0;
    while (row >> v) values.push_back(v);
    if (!row.eof() || static_cast<int>(values.size()) != n + m) {
      throw Error(Errc::malformed_line, path.string() + ":" + std::to_string(line_no) +
                                            ": expected " + std::to_string(n + m) + " numbers");
    }
    ReferencePoint point{Vec(n), Vec(m)};
    for (int i = 0; i < n; ++i) point.s_d(i) = values[static_cast<std::size_t>(i)];
    for (int j = 0; j < m; ++j) point.da_d(j) = values[static_cast<std::size_t>(n + j)];
    out.push_back(std::move(point));
  }
  return out;
}

void write_reference(const std::filesystem::path& path, const std::vector<ReferencePoint>& ref) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  out << std::setprecision(17);
  for (const auto& point : ref) {
    const char* sep = "";
    for (double v : point.s_d) { out << sep << v; sep = " "; }
    for (double v : point.da_d) { out << sep << v; sep = " "; }
    out << '\n';
  }
}

}  // namespace incdyn
