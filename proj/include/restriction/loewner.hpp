#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "restriction/hull.hpp"
#include "restriction/path.hpp"

namespace restriction {

struct DriverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Piecewise-constant driving data for a Loewner chain.  The chain is driven
// at level w[k] over [t[k], t[k+1]); o carries the second coordinate of
// one-sided processes when present; xi carries the unit-circle driving of the
// full-plane equation (then w is ignored).
struct Driver {
    std::vector<double> t;   // strictly increasing grid
    std::vector<double> w;   // same length as t
    std::vector<double> o;   // empty, or same length; o[k] <= w[k]
    std::vector<Complex> xi; // empty, or same length; |xi[k]| = 1
    std::string meta;        // generator tag + parameters + seed

    std::size_t size() const { return t.size(); }
};

// Throws DriverError unless the grid is strictly increasing, sizes agree and
// the one-sided ordering o <= w holds where present.
void validate_driver(const Driver& driver);

// Uniform-grid builder: t[k] = t0 + k*dt, n+1 points.
Driver uniform_grid(double t0, double dt, std::size_t n);

struct ProbeState {
    Complex z0{};                     // seed point
    Complex current{};                // g_t(z0) while alive
    std::optional<double> swallowed_at{};
    bool alive = true;
};

inline constexpr double kSwallowEps = 1e-6;

// Evolve probes from t[0] to t_end through the exact per-interval slit maps.
std::vector<ProbeState> evolve_probes(const Driver& driver,
                                      const std::vector<Complex>& probes,
                                      double t_end);

// One exact piecewise-constant interval applied to a single point: the image
// and the multiplicative derivative factor, or the swallow flag with the
// refined swallow time measured from the start of the interval.  This is the
// primitive that evolve_probes iterates; exposed for callers that generate
// the driving process on the fly.
struct StepResult {
    Complex value{};
    Complex d1_factor{1.0, 0.0};
    bool swallowed = false;
    double tau_offset = 0.0;
};
StepResult advance_probe(Complex z, double dt, double w);

// Single-point flow carrying the first derivative of g_t along the chain.
struct ProbeFlow {
    Complex value{};
    Complex d1{1.0, 0.0};
    bool swallowed = false;
    double swallowed_at = 0.0;
};
ProbeFlow flow_point(const Driver& driver, Complex z, double t_end);

// Trace extraction: gamma(t) as the backward flow of W_t + i*delta0 through
// the inverse step maps; O(n^2) in the number of sample times.
PathSample trace(const Driver& driver, const std::vector<double>& sample_times,
                 double delta0 = 1e-3);

// Image driving process under a hull A in Q*: at each coarse time the images
// of boundary probes of A are re-encoded to obtain h_t = g_{A_t}; the output
// driver carries W-tilde = h_t(W_t) - g_A(0) on the a(t)/2 time scale.
// a_quad integrates 2 h_t'(W_t)^2 dt as an independent capacity route.
struct ImageDriverResult {
    Driver image;               // grid = a(t)/2, w = h_t(W_t) - g_A(0)
    std::vector<double> a;      // capacity of the image of K_t: 2t + a(A_t) - a(A)
    std::vector<double> a_quad; // trapezoid of 2 h'(W)^2 over coarse times
    bool hit = false;           // driver ran into the hull
    double hit_time = 0.0;      // capacity time of the detected hit
};
ImageDriverResult image_driver(const Driver& driver, const Hull& hull,
                               const std::vector<double>& coarse_times,
                               int n_probes = 64, double resolution = 2e-4);

// --- full-plane evolution ---------------------------------------------------

struct DiskSpec {
    Complex center{};
    double radius = 1.0;  // must contain 0: |center| < radius
};

struct FullPlaneResult {
    Complex exit_point{};                // first probe of the domain boundary hit
    double exit_time = 0.0;              // log-capacity time of the exit
    double log_capacity = 0.0;           // log|z g_t(z)| from the far probe
    bool timed_out = false;
    std::vector<Complex> hull_polyline;  // filled only when requested
};

// Grow the full-plane hull from capacity e^{t_start} until it first touches
// the domain boundary.  The driver must carry xi; its grid spans
// [t_start, t_max].  n_boundary probes sample the domain circle.
FullPlaneResult fullplane_evolve(const Driver& driver, double t_start,
                                 const DiskSpec& domain, int n_boundary = 512,
                                 bool want_hull = false);

// Full-plane SLE_kappa driver: xi(t) = b0 exp(i sqrt(kappa) beta(t)) on a
// uniform grid over [t_start, t_max]; b0 uniform on the circle from the seed.
Driver fullplane_sle_driver(double kappa, double t_start, double t_max,
                            double dt, std::uint64_t seed);

// --- CSV interfaces ---------------------------------------------------------

void write_driver_csv(const Driver& driver, const std::string& path);
Driver read_driver_csv(const std::string& path);
void write_path_csv(const PathSample& path, const std::string& out_path);
PathSample read_path_csv(const std::string& in_path);

}  // namespace restriction
