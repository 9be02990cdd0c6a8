#pragma once

#include "dathermo/pressure.hpp"

#include <vector>

namespace dathermo {

struct LyapunovSpectrum {
  std::vector<double> exponents;  // ascending
  int n_used = 0;
  double lambda_plus = 0;
  Vecd seed;
  /// |sum of exponents - (1/n) sum log|det Dg||.
  double volume_defect = 0;
  nlohmann::json to_json() const;
};

/// QR frame cocycle: a transient burn-in aligns the frame, then log |R_ii|
/// is accumulated over n steps.
LyapunovSpectrum lyapunov_spectrum(const DAMap& g, const Vecd& seed, int n, int n_transient = 100);

struct PressureRoot {
  double root = 0;
  double tolerance = 0.02;
  double bracket_lo = 0;
  double bracket_hi = 0;
  int evaluations = 0;
};

/// Root of t -> P(t phi^u): sign change on the sampled grid, then bisection
/// on re-evaluated pressures.
PressureRoot pressure_root(const PressureCurve& curve);

struct SrbOptions {
  int bins = 32;
  int stride = 5;        // iterates between recorded samples
  int batches = 2;       // seeds are split round-robin into this many histograms
  int phi_u_points = 2000;
  std::uint64_t seed = 2024;
  int workers = 1;
};

struct SrbEstimate {
  int dim = 0;
  int bins = 0;
  std::vector<double> histogram;                     // merged, counts
  std::vector<std::vector<double>> batch_histograms;
  std::size_t samples = 0;
  double lambda_plus = 0;          // mean top exponent over seeds
  std::vector<double> seed_lambda;
  double integral_phi_u = 0;       // pointwise phi^u averaged over sampled points
  double cocycle_integral_phi_u = 0;  // same orbits, forward cocycle
  double entropy_defect = 0;       // |-integral_phi_u - lambda_plus|
  bool converged = true;
  nlohmann::json to_json() const;
};

SrbEstimate srb_estimate(const DAMap& g, int n_transient, int n_sample, int n_seeds, const SrbOptions& opts = {});

/// Total variation distance between two histograms after normalization.
double tv_distance(const std::vector<double>& a, const std::vector<double>& b);

/// Quantile of the TV distance between two multinomial samples of sizes
/// n_a, n_b drawn from the pooled distribution.
double tv_bootstrap_quantile(const std::vector<double>& a, const std::vector<double>& b, double quantile,
                             int replicates = 200, std::uint64_t seed = 99);

struct ChiSquare {
  double statistic = 0;
  int dof = 0;
  double p_value = 0;
};
ChiSquare chi_square_uniform(const std::vector<double>& counts);

struct MultifractalSpectrum {
  std::vector<double> chi_grid;
  std::vector<double> entropy_values;
  std::vector<double> achieving_t;
  std::vector<bool> degenerate;
  double chi_0 = 0;
  double chi_1 = 0;
  nlohmann::json to_json() const;
};

/// Per chi, min over the curve's t samples of P(t) + t chi. chi outside
/// [chi_1, chi_0] (up to 1e-9 relative) is clipped and flagged degenerate.
/// The t grid must contain 0 and 1.
MultifractalSpectrum legendre_spectrum(const PressureCurve& curve, const std::vector<double>& chi_grid);

struct LdpPoint {
  int n = 0;
  std::size_t deviating = 0;
  double log_fraction = 0;  // log of the fraction, or -log N when none deviate
  double rate = 0;          // log_fraction / n
  bool zero_count = false;
};

struct LdpOptions {
  int n_transient = 0;
  std::uint64_t seed = 31;
  int workers = 1;
  bool has_mean = false;
  double mean = 0;          // used when has_mean; else pooled sample mean
};

struct LdpResult {
  double mean = 0;
  std::vector<LdpPoint> points;
  double rate_evidence = 0;  // minus the slope of log_fraction against n
  nlohmann::json to_json() const;
};

LdpResult ldp_rate(const DAMap& g, std::size_t measure_samples, const Potential& psi, double epsilon,
                   std::vector<int> n_grid, const LdpOptions& opts = {});

}  // namespace dathermo
