#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "restriction/hull.hpp"
#include "restriction/loewner.hpp"
#include "restriction/path.hpp"

namespace restriction {

struct VerifyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --- exponent tables --------------------------------------------------------
//
// Pure formula evaluators.  The two-sided restriction exponent alpha(kappa)
// exists as a sampler only for kappa <= 8/3 (alpha >= 5/8); exponents() still
// evaluates the formula everywhere but nothing in this module fabricates a
// two-sided sampler below 5/8 (nonexistence is a documented refusal, not a
// numerical claim).

struct Exponents {
    double alpha = 0.0;
    double lambda = 0.0;
};
Exponents exponents(double kappa);                    // kappa > 0
double onesided_alpha(double rho);                    // rho > -2
double rho_of_alpha(double alpha);                    // alpha > 0, branch > -2
std::pair<double, double> coefficients_bc(double rho);  // (b, c)
double rho0_of_kappa(double kappa);                   // -2 + kappa/2

// --- Monte Carlo reports ----------------------------------------------------

struct EstimateConfig {
    std::size_t n_samples = 10000;
    std::uint64_t seed = 1;
    double dt = 1e-4;
    double escape_factor = 8.0;   // path samplers: R_esc = factor x hull scale
    double delta_stop = 1e-3;     // Loewner avoid rule constant
    double t_budget = 200.0;      // Loewner capacity budget per run
    double allowance = 0.005;     // discretization allowance in the pass rule
    int workers = 1;              // sample-level threads; reduction is
                                  // fixed-order, so results do not depend on it
};

struct EstimateReport {
    std::string property;
    std::string params;
    std::size_t n_samples = 0;
    std::uint64_t seed = 0;
    double estimate = 0.0;
    double std_error = 0.0;
    double target = 0.0;
    std::string target_provenance;  // closed-form | paper-value | oracle
    double z_score = 0.0;
    double discretization_allowance = 0.0;
    bool pass = false;
    double unresolved_fraction = 0.0;
    double runtime_seconds = 0.0;

    std::string to_json() const;
};

// Avoidance probability estimate with analytic target Phi_A'(0)^alpha.
// sampler spec strings:
//   "excursion"                  two-sided, hull in Q*
//   "rbe:theta=<v>"              one-sided, hull in Q+
//   "sle:kappa=<v>"              Loewner sampler, hull in Q*
//   "slekr:kappa=<v>,rho=<v>"    Loewner sampler, hull in Q+
//   "empty"                      trivial sampler, weight 1, alpha 0
// Path samplers use the exact-tail estimator with crossing-corrected hit
// detection; Loewner samplers evolve 64 boundary probes plus the two base
// points and stop by the delta_stop capacity/distance rule.  Runs that reach
// t_budget undecided are counted as unresolved; > 1% unresolved fails.
EstimateReport estimate_avoidance(const std::string& sampler, const Hull& hull,
                                  const EstimateConfig& cfg);

// Joint avoidance of independent samplers: the estimate is the mean product
// of per-sampler weights and the target is the product of the individual
// targets (exponent additivity for fillings of unions).
EstimateReport union_product_check(const std::vector<std::string>& samplers,
                                   const Hull& hull, const EstimateConfig& cfg);

// --- martingale flatness ----------------------------------------------------

enum class Functional { Y0, Ylambda, Mrho, Wtilde };

struct MartingaleReport {
    std::string property;
    std::vector<double> times;
    std::vector<double> means;     // E[functional] at each time (hit runs = 0)
    std::vector<double> ses;
    double reference = 0.0;        // Phi_A'(0)^alpha, the t=0 value
    bool flat = false;             // every mean within 3 SE + allowance of it
    double value_min = 0.0;        // range of the functional across all probes
    double value_max = 0.0;
    double drift_meas = 0.0;       // mean of (Y_end - Y_0), Y0 only
    double drift_meas_se = 0.0;
    double drift_pred = 0.0;       // mean integrated drift from eq. coefficients
    double qv_slope = 0.0;         // Wtilde only: sum(dW~^2)/elapsed image time
    double drift_z = 0.0;          // Wtilde only: z-score of the mean increment
    std::size_t n_samples = 0;
    std::uint64_t seed = 0;
    double runtime_seconds = 0.0;
};

// Flatness probe for the restriction martingales along simulated drivers:
//   Y0      h_t'(W_t)^alpha for SLE_kappa (rho ignored)
//   Ylambda h_t'(W_t)^alpha exp(lambda int_0^t S h_s(W_s)/6 ds)
//   Mrho    h_t'(W_t)^{5/8} h_t'(O_t)^b ((h_t(W_t)-h_t(O_t))/(W_t-O_t))^c
//           for SLE(kappa, rho); the equal-point limit h'(W)^{5/8+b+c} is
//           used when |W - O| underflows
//   Wtilde  image driving process of the chain under the hull: quadratic
//           variation slope and drift of h(W) in image-capacity/2 time
// Runs that hit the hull contribute 0 from the hit time on (their h'(W)
// collapses); this is the optional-stopping account of the conditioning.
MartingaleReport martingale_probe(double kappa, double rho, Functional f,
                                  const Hull& hull,
                                  const std::vector<double>& times,
                                  const EstimateConfig& cfg);

// Pathwise inequality chain h'(W) <= (h(W)-h(O))/(W-O) <= h'(O) <= 1 along
// SLE(8/3, rho) runs; any violation beyond tol is a map bug, not noise.
struct InequalityReport {
    std::size_t n_runs = 0;
    std::size_t n_checks = 0;
    std::size_t violations = 0;
    double max_violation = 0.0;
    bool pass = false;
};
InequalityReport inequality_probe(double rho, const Hull& hull,
                                  const std::vector<double>& times,
                                  const EstimateConfig& cfg, double tol = 1e-6);

// --- distributional comparisons ---------------------------------------------

struct KsReport {
    double statistic = 0.0;
    double p_value = 0.0;
    std::size_t n_a = 0;
    std::size_t n_b = 0;
    bool two_sample = true;
};
KsReport ks_two_sample(std::vector<double> a, std::vector<double> b);
KsReport ks_one_sample(std::vector<double> a,
                       const std::function<double(double)>& cdf);

// First-hit angle of the unit semicircle for a chordal SLE_kappa hull grown
// from 0: boundary probes of the arc (rotated by a per-seed jitter so the
// probe grid does not quantize the law) are evolved along a driver generated
// on the fly; the angle of the first swallowed probe is returned.
double sle_arc_hit_angle(double kappa, double dt, std::uint64_t seed,
                         int n_probes = 256);

// Exit angle of full-plane SLE_kappa from a disk containing 0, plus the
// closed-form harmonic-measure CDF transform: u = psi(theta) in [0,1) is
// uniform when theta has the harmonic-measure law from 0.
double fullplane_exit_angle(double kappa, const DiskSpec& domain, double dt,
                            std::uint64_t seed, int n_boundary = 128);
double harmonic_measure_u(const DiskSpec& domain, double theta);

// --- filling ----------------------------------------------------------------

// Raster filling of a path rooted on the real axis: complement cells not
// reachable from the enlarged box sides or top are filled.  Returns the outer
// boundary of (path union filled pockets) as a polyline from its leftmost
// real base point to its rightmost, suitable for encode_polyline.
std::vector<Complex> fill_outline(const std::vector<Complex>& path, int grid_n);
// Fill-based hit flag: does the filling of the path meet A?
bool fill_intersects(const std::vector<Complex>& path, const Hull& A,
                     int grid_n);
// Path-based hit flag on the same raster metric (segment distance to A).
bool path_intersects(const std::vector<Complex>& path, const Hull& A,
                     double tol);

// --- reflected-BM emulation of SLE6 ----------------------------------------

// Iterated construction: independent oblique-reflected BM segments run to
// physical radius epsilon in the uniformized half-plane, filled, encoded and
// composed; the boundary probes of the stop arc are pushed through each
// segment map and a hit is declared when one of them is swallowed.
struct EmulationResult {
    PathSample path;                 // concatenated mapped-plane segments
    std::vector<double> capacities;  // cumulative half-plane capacity
    Complex hit_point{};             // probe of the stop arc that was hit
    bool hit = false;
    int failure_index = -1;          // segment whose encoding failed, or -1
    std::size_t segments_done = 0;
};
EmulationResult emulate_sle6_reflection(double epsilon, std::size_t n_segments,
                                        double dt, std::uint64_t seed,
                                        const Hull& stop);

// --- boundary-touch statistic -----------------------------------------------

// Fraction of RBE(theta) runs with at least one uncovered push on the
// negative axis: a push whose mapped position lies left of -x_min and is a
// strict future minimum among all later pushes (pushes in the final stretch
// of the run are ignored, their future is truncated).
double rbe_touch_fraction(double theta, double dt, std::uint64_t master_seed,
                          std::size_t n_runs, double horizon_R, double x_min);

// Fixed-order pairwise summation; worker-count independent reduction.
double pairwise_sum(const std::vector<double>& xs);

}  // namespace restriction
