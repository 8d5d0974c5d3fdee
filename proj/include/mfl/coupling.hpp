#pragma once

// Couplings of two L_t-diffusions by parallel displacement or reflection.
//
// The second marginal is driven by the first one's increments mapped through
// P (parallel transport along the minimal geodesic) or M (transport followed
// by reflection in the geodesic direction). Near the cut locus the map is
// replaced by independent noise.

#include "mfl/gradient.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mfl {

enum class CouplingMode { Parallel, Mirror };

const char* coupling_mode_name(CouplingMode mode) noexcept;

/// Extra drift U(t, x, y) acting on the second marginal, tangent at y.
struct ExtraDrift {
  std::function<Vec(const MetricFlow& flow, double t, const Vec& x, const Vec& y, const Geodesic& geo)> fn;
  std::string descriptor;
  double strength = 0.0;

  /// U = -c grad_y rho_t(x, .), so that <U, grad rho> = -c.
  static ExtraDrift contract(double c);
};

struct CoupledPair {
  double t = 0.0;
  FramePoint a;
  FramePoint b;
  bool coupled = false;
};

struct CouplingOptions {
  CouplingMode mode = CouplingMode::Mirror;
  std::optional<ExtraDrift> U;
  double delta_couple = 1e-8;      ///< couple when rho drops to this level
  double eps_cut_factor = 0.1;     ///< band width relative to sqrt(c) on sphere and torus
  bool bridge = true;              ///< mirror mode: Brownian-bridge test for hits between nodes
  std::size_t record_paths = 50;   ///< full rho records kept for this many paths
};

struct StepRecord {
  double rho = 0.0;
  bool regularized = false;
};

/// Moves both marginals by one step of size h. dB and dB_prime are the
/// sqrt(h)-scaled increments, uniform drives the bridge test.
CoupledPair couple_step(const MetricFlow& flow, const CoupledPair& pair, const Vec& dB, const Vec& dB_prime,
                        double uniform, double h, const CouplingOptions& opts, StepRecord* rec = nullptr);

struct CouplingPath {
  std::vector<double> rho;            ///< per node; empty when not recorded
  std::vector<char> regularized;      ///< per step; empty when not recorded
  std::optional<double> T0;
  Vec end_a;
  Vec end_b;
  double rho_end = 0.0;
  std::size_t regularized_steps = 0;
};

struct CouplingEnsemble {
  PathGrid grid;
  CouplingMode mode = CouplingMode::Mirror;
  std::vector<CouplingPath> paths;
  double regularized_fraction = 0.0;

  /// Indicator samples of T0 <= t.
  Estimate coupled_by(double t) const;
  /// Samples of rho at the terminal time.
  std::vector<double> terminal_rho() const;
};

CouplingEnsemble simulate_coupling(const MetricFlow& flow, const Vec& x, const Vec& y, double s, double t,
                                   const McConfig& mc, const CouplingOptions& opts);

/// Index form I_Z(t, x, y) from the constant-curvature Jacobi profile.
double index_form(const MetricFlow& flow, double t, const Vec& x, const Vec& y, int n_quad = 128);
/// Same quantity from an RK4 shooting solution of the Jacobi boundary problem.
double index_form_numeric(const MetricFlow& flow, double t, const Vec& x, const Vec& y, int n_quad = 128);

/// (1/2) int_gamma partial_t g(gamma', gamma') + I_Z + <U, grad rho>.
double rho_drift_bound(const MetricFlow& flow, double t, const Vec& x, const Vec& y,
                       const std::optional<ExtraDrift>& U = std::nullopt);

/// Mean of (rho_{k0+w} - rho_{k0}) / (w h) over recorded paths not coupled by node k0 + w.
Estimate empirical_rho_drift(const CouplingEnsemble& ens, int window_steps, int start_node = 0);

/// (E rho_t^p)^{1/p} from a coupled ensemble.
Estimate wasserstein_upper(const MetricFlow& flow, const Vec& x, const Vec& y, double s, double t, double p,
                           const McConfig& mc, const CouplingOptions& opts);
/// Same bound from an existing ensemble.
Estimate wasserstein_upper(const CouplingEnsemble& ens, double p);

/// Coordinates used for two-sample tests: angle pairs (cos, sin) on the torus, ambient otherwise.
Vec test_embedding(const MetricFlow& flow, const Vec& x);

struct TwoSampleTest {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Energy-distance permutation test.
TwoSampleTest energy_distance_test(const std::vector<Vec>& a, const std::vector<Vec>& b, int n_perm,
                                   std::uint64_t seed);

}  // namespace mfl
