#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "restriction/hull.hpp"
#include "restriction/loewner.hpp"
#include "restriction/path.hpp"
#include "restriction/rng.hpp"

namespace restriction {

struct SamplerError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// d(kappa, rho) = 1 + 2(rho+2)/kappa; the Bessel dimension of W - O.
double bessel_dimension(double kappa, double rho);

// --- basic processes --------------------------------------------------------

// Bessel(d) path on the uniform grid [0, t_end] via the squared-Bessel Euler
// scheme with full truncation at 0 and dt/100 substeps near the origin.
// Requires d >= 1.
std::vector<double> sample_bessel(double d, double y0, double dt,
                                  std::uint64_t seed, double t_end);

// One grid increment of the same scheme, for callers that drive the process
// step by step (the verify module's on-the-fly SLE(kappa,rho) runs).  The
// second form also accumulates int ds / Y over the substeps, the quantity
// the SLE(kappa,rho) construction integrates for O_t; resolving it at
// substep level removes a sqrt(dt)-scale drift bias from the driver.
double bessel_grid_step(double y, double d, double dt, Rng& rng);
double bessel_grid_step(double y, double d, double dt, Rng& rng,
                        double& inv_time);

// Half-plane Brownian excursion: real part Brownian, imaginary part an
// independent Bessel(3); run until Im reaches horizon_R.  Started at 0 by
// default (first vertical step drawn exactly); an interior start point is
// accepted for restarting a path at a height crossing.
PathSample sample_excursion(double dt, std::uint64_t seed, double horizon_R,
                            Complex start = Complex(0.0, 0.0));

// Wedge reflected excursion: X_t = X~_t + sup_s (c Y_s - X~_s)^+ with
// c = -cot(theta), mapped to H by b(z) = z^{pi/(pi-theta)}.  The raw wedge
// path and the Skorokhod local time are exposed for the construction tests.
struct WedgeSample {
    PathSample mapped;                 // b(Z_t) in H-bar
    std::vector<Complex> wedge_points; // Z_t = X_t + i Y_t
    std::vector<double> ell;           // accumulated Skorokhod push
};
WedgeSample sample_wedge_rbe(double theta, double dt, std::uint64_t seed,
                             double horizon_R);

// Oblique reflected Brownian motion in H from 0 (reflection angles pi/3 on
// the positive axis, 2pi/3 on the negative axis), run to the first hit of the
// stop hull.
struct RbmSample {
    PathSample path;
    Complex hit_point{};
    double ell_plus = 0.0;
    double ell_minus = 0.0;
    bool timed_out = false;
};
RbmSample sample_rbm_oblique(double dt, std::uint64_t seed, const Hull& stop,
                             std::size_t max_steps = 80000000);

// --- SLE drivers ------------------------------------------------------------

Driver sample_sle_driver(double kappa, double dt, std::uint64_t seed,
                         double t_max);
// SLE(kappa, rho): Z = W - O generated as sqrt(kappa) x Bessel(d), then
// O = -2 int ds/Z by quadrature and W = Z + O.  Requires rho > -2.
Driver sample_slekr_driver(double kappa, double rho, double dt,
                           std::uint64_t seed, double t_max);

// --- avoidance primitives ---------------------------------------------------

// One exact-tail avoidance sample: run the path until it either hits A
// (crossing-corrected against the locally tangent line) or reaches the escape
// height R_esc, then weight the survivor by Im Phi_A(z) / Im(z).  Far from
// the hull the step size grows quadratically with distance (the estimate is
// bias-controlled by the bridge correction; see module notes).
struct AvoidanceSample {
    bool hit = false;
    double weight = 0.0;  // 0 when hit
    std::size_t steps = 0;
};
AvoidanceSample excursion_avoidance(const Hull& A, double dt,
                                    std::uint64_t seed, double R_esc);
AvoidanceSample rbe_avoidance(double theta, const Hull& A, double dt,
                              std::uint64_t seed, double R_esc);

// Crossing-corrected hit test for one step of a path sampler against a
// primitive hull: d1, d2 are boundary distances at the endpoints, var the
// one-dimensional variance of the step.  Returns true when the bridge is
// deemed to have crossed (decided by the sampler's own rng draw u).
bool bridge_crossed(double d1, double d2, double var, double u);

}  // namespace restriction
