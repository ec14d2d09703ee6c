#pragma once

#include <filesystem>
#include <vector>

#include "incdyn/envs.hpp"
#include "incdyn/incmodel.hpp"
#include "incdyn/mathcore.hpp"

namespace incdyn {

// Online fine-tuning around a pretrained incremental policy. The tracking
// error e_k = s_k - s_d,k evolves as e_{k+1} = e_k + L_bar * da_e,k, with
// L_bar the learned L frozen at an operating point. A discrete-time LQR on
// (A = I, B = L_bar) gives the residual increment da_e = -K e.

struct ErrorSystem {
  Mat L_bar;  // n x m
  Mat Q;      // n x n, symmetric PSD
  Mat R;      // m x m, symmetric PD
};

/// Throws Errc::contract_violation when shapes or definiteness are wrong.
void validate(const ErrorSystem& sys);

/// Freezes L at (s, a_prev, a). Q and R default to I and 0.1 I.
ErrorSystem freeze_error_system(const IncrementalModel& model, const Vec& s, const Vec& a_prev,
                                const Vec& a);
ErrorSystem make_error_system(Mat L_bar);

Vec error_step(const ErrorSystem& sys, const Vec& e, const Vec& da_e);

struct LqrSolution {
  Mat K;  // m x n
  Mat P;  // n x n
  int iterations = 0;
  double residual = 0.0;  // infinity norm of the last Riccati update
};

/// Fixed-point iteration of P <- Q + P - P B (R + B'PB)^-1 B'P from P = Q,
/// symmetrized each iterate. Throws Errc::non_stabilizable if the iteration
/// diverges or does not settle within max_iter.
LqrSolution solve_lqr(const ErrorSystem& sys, double tol = 1e-9, int max_iter = 10000);

/// Infinity norm of P - riccati_map(P).
double riccati_residual(const ErrorSystem& sys, const Mat& P);

Vec residual_policy(const LqrSolution& sol, const Vec& e);

/// Spectral radius of I - L_bar K.
double closed_loop_spectral_radius(const ErrorSystem& sys, const LqrSolution& sol);

struct ReferencePoint {
  Vec s_d;
  Vec da_d;
};

struct TrackingResult {
  std::vector<double> error_norms;  // ||e_k|| for each executed step k
  std::vector<Vec> errors;
  bool truncated = false;  // episode ended before `steps`
  int clip_events = 0;
};

/// Tracks the reference on the real environment from `initial`. The applied
/// action is the previous applied action plus da_d + da_e, clipped to the
/// action box.
TrackingResult track_reference(const LqrSolution& sol, const EnvSpec& env,
                               const std::vector<ReferencePoint>& reference, int steps,
                               const EnvState& initial);

/// Whitespace-separated rows of s_d (n values) followed by da_d (m values).
/// Blank lines and lines starting with '#' are skipped.
std::vector<ReferencePoint> read_reference(const std::filesystem::path& path, int n, int m);
void write_reference(const std::filesystem::path& path, const std::vector<ReferencePoint>& ref);

}  // namespace incdyn
