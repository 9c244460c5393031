#include "restriction/paths.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "restriction/rng.hpp"

namespace restriction {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Exact one-step Bessel(3) transition from 0: modulus of a 3-dimensional
// Gaussian of variance dt.
double bessel3_from_zero(double dt, Rng& rng) {
    const double g1 = rng.normal();
    const double g2 = rng.normal();
    const double g3 = rng.normal();
    return std::sqrt(dt * (g1 * g1 + g2 * g2 + g3 * g3));
}

std::string fmt_horizon(const char* tag, double value) {
    std::ostringstream os;
    os << tag << ":" << value;
    return os.str();
}

}  // namespace

// One grid step of a Bessel(d) process via the squared-Bessel Euler scheme
// with full truncation at 0; substeps of dt/100 whenever Y < 10 sqrt(dt).
double bessel_grid_step(double y, double d, double dt, Rng& rng) {
    double unused = 0.0;
    return bessel_grid_step(y, d, dt, rng, unused);
}

double bessel_grid_step(double y, double d, double dt, Rng& rng,
                        double& inv_time) {
    double v = y * y;
    double remaining = dt;
    const double near = 10.0 * std::sqrt(dt);
    inv_time = 0.0;
    while (remaining > 0.0) {
        double h = (std::sqrt(v) < near) ? dt / 100.0 : remaining;
        if (h > remaining) h = remaining;
        const double y0 = std::sqrt(v);
        v += d * h + 2.0 * std::sqrt(v * h) * rng.normal();
        if (v < 0.0) v = 0.0;
        const double y1 = std::sqrt(v);
        // int ds / Y over the substep: 2h/(y0+y1) is the trapezoid of the
        // square-root profile and is exact for a start at 0 (y ~ sqrt(d s));
        // the floor caps the 0-0 corner at that same exact value
        inv_time += 2.0 * h / std::max(y0 + y1, std::sqrt(d * h));
        remaining -= h;
    }
    return std::sqrt(v);
}

double bessel_dimension(double kappa, double rho) {
    return 1.0 + 2.0 * (rho + 2.0) / kappa;
}

bool bridge_crossed(double d1, double d2, double var, double u) {
    if (d1 <= 0.0 || d2 <= 0.0) return true;
    const double expo = 2.0 * d1 * d2 / var;
    if (expo > 30.0) return false;
    return u < std::exp(-expo);
}

std::vector<double> sample_bessel(double d, double y0, double dt,
                                  std::uint64_t seed, double t_end) {
    if (d < 1.0) throw SamplerError("sample_bessel requires d >= 1");
    if (y0 < 0.0) throw SamplerError("sample_bessel requires y0 >= 0");
    if (dt <= 0.0 || t_end < 0.0)
        throw SamplerError("sample_bessel requires dt > 0 and t_end >= 0");
    Rng rng(seed);
    const auto n = static_cast<std::size_t>(std::llround(t_end / dt));
    std::vector<double> path;
    path.reserve(n + 1);
    path.push_back(y0);
    double y = y0;
    for (std::size_t k = 0; k < n; ++k) {
        y = bessel_grid_step(y, d, dt, rng);
        path.push_back(y);
    }
    return path;
}

PathSample sample_excursion(double dt, std::uint64_t seed, double horizon_R,
                            Complex start) {
    if (dt <= 0.0 || horizon_R <= 0.0)
        throw SamplerError("sample_excursion requires dt > 0 and R > 0");
    if (start.imag() < 0.0 || start.imag() >= horizon_R)
        throw SamplerError("sample_excursion start must satisfy 0 <= Im < R");
    Rng rng(seed);
    PathSample out;
    out.scheme = "exact-gaussian-step";
    out.dt = dt;
    out.seed = seed;
    out.horizon = fmt_horizon("height", horizon_R);
    double x = start.real();
    double y = start.imag();
    double t = 0.0;
    out.times.push_back(t);
    out.points.emplace_back(x, y);
    if (y == 0.0) {
        x += std::sqrt(dt) * rng.normal();
        y = bessel3_from_zero(dt, rng);
        t += dt;
        out.times.push_back(t);
        out.points.emplace_back(x, y);
    }
    while (y < horizon_R) {
        x += std::sqrt(dt) * rng.normal();
        y = bessel_grid_step(y, 3.0, dt, rng);
        t += dt;
        out.times.push_back(t);
        out.points.emplace_back(x, y);
    }
    return out;
}

WedgeSample sample_wedge_rbe(double theta, double dt, std::uint64_t seed,
                             double horizon_R) {
    if (!(theta > 0.0 && theta < kPi))
        throw SamplerError("sample_wedge_rbe requires theta in (0, pi)");
    if (dt <= 0.0 || horizon_R <= 0.0)
        throw SamplerError("sample_wedge_rbe requires dt > 0 and R > 0");
    Rng rng(seed);
    const double c = -std::cos(theta) / std::sin(theta);
    const double p = kPi / (kPi - theta);
    WedgeSample out;
    out.mapped.scheme = "exact-gaussian-step";
    out.mapped.dt = dt;
    out.mapped.seed = seed;
    out.mapped.horizon = fmt_horizon("height", horizon_R);
    double xt = 0.0;  // free path X~
    double m = 0.0;   // Skorokhod push sup (cY - X~)^+
    double y = 0.0;
    double t = 0.0;
    out.mapped.times.push_back(0.0);
    out.mapped.points.emplace_back(0.0, 0.0);
    out.wedge_points.emplace_back(0.0, 0.0);
    out.ell.push_back(0.0);
    // exact first vertical step from the corner
    xt = std::sqrt(dt) * rng.normal();
    y = bessel3_from_zero(dt, rng);
    m = std::max(0.0, c * y - xt);
    for (;;) {
        const Complex z(xt + m, y);
        const Complex zeta = std::pow(z, p);
        t += dt;
        out.mapped.times.push_back(t);
        out.mapped.points.push_back(zeta);
        out.wedge_points.push_back(z);
        out.ell.push_back(m);
        if (zeta.imag() >= horizon_R) break;
        xt += std::sqrt(dt) * rng.normal();
        y = bessel_grid_step(y, 3.0, dt, rng);
        m = std::max(m, c * y - xt);
    }
    return out;
}

RbmSample sample_rbm_oblique(double dt, std::uint64_t seed, const Hull& stop,
                             std::size_t max_steps) {
    if (dt <= 0.0) throw SamplerError("sample_rbm_oblique requires dt > 0");
    if (stop.kind() != Hull::Kind::CircularArc)
        throw SamplerError(
            "sample_rbm_oblique supports circular-arc stop hulls only");
    const double theta_stop = stop.theta();
    Rng rng(seed);
    RbmSample out;
    out.path.scheme = "euler";
    out.path.dt = dt;
    out.path.seed = seed;
    out.path.horizon = "hit:arc";
    const double sq = std::sqrt(dt);
    const double sin60 = std::sqrt(3.0) / 2.0;
    const Complex dir_plus = std::polar(1.0, kPi / 3.0);
    const Complex dir_minus = std::polar(1.0, 2.0 * kPi / 3.0);
    Complex z(0.0, 0.0);
    std::size_t stride = 1;
    out.path.times.push_back(0.0);
    out.path.points.push_back(z);
    bool hit = false;
    for (std::size_t k = 0; k < max_steps && !hit; ++k) {
        const Complex z_prev = z;
        z += Complex(sq * rng.normal(), sq * rng.normal());
        if (z.imag() < 0.0) {
            const double a = -z.imag() / sin60;
            if (z.real() >= 0.0) {
                z += a * dir_plus;
                out.ell_plus += a;
            } else {
                z += a * dir_minus;
                out.ell_minus += a;
            }
            if (z.imag() < 0.0) z = Complex(z.real(), 0.0);
        }
        const double r_prev = std::abs(z_prev);
        const double r_cur = std::abs(z);
        Complex candidate{};
        bool crossed = false;
        if (r_cur >= 1.0) {
            const double s =
                (r_cur > r_prev) ? (1.0 - r_prev) / (r_cur - r_prev) : 1.0;
            candidate = z_prev + s * (z - z_prev);
            crossed = true;
        } else {
            const double expo = 2.0 * (1.0 - r_prev) * (1.0 - r_cur) / dt;
            if (expo <= 30.0 && rng.uniform() < std::exp(-expo)) {
                candidate = 0.5 * (z_prev + z);
                crossed = true;
            }
        }
        if (crossed) {
            if (candidate.imag() < 0.0)
                candidate = Complex(candidate.real(), 0.0);
            const double mag = std::abs(candidate);
            if (mag > 0.0) candidate /= mag;
            if (std::arg(candidate) <= theta_stop + 1e-12) {
                out.hit_point = candidate;
                hit = true;
                z = candidate;
            }
        }
        if ((k + 1) % stride == 0 || hit) {
            out.path.times.push_back(static_cast<double>(k + 1) * dt);
            out.path.points.push_back(z);
            if (out.path.points.size() >= (1u << 19)) {
                // thin the stored trajectory to bound memory on long runs
                std::vector<double> ts;
                std::vector<Complex> ps;
                for (std::size_t j = 0; j < out.path.points.size(); j += 2) {
                    ts.push_back(out.path.times[j]);
                    ps.push_back(out.path.points[j]);
                }
                out.path.times = std::move(ts);
                out.path.points = std::move(ps);
                stride *= 2;
            }
        }
    }
    out.timed_out = !hit;
    return out;
}

Driver sample_sle_driver(double kappa, double dt, std::uint64_t seed,
                         double t_max) {
    if (kappa <= 0.0) throw SamplerError("sample_sle_driver requires kappa > 0");
    if (dt <= 0.0 || t_max <= 0.0)
        throw SamplerError("sample_sle_driver requires dt > 0 and t_max > 0");
    Rng rng(seed);
    const auto n = static_cast<std::size_t>(std::llround(t_max / dt));
    Driver drv = uniform_grid(0.0, dt, n);
    drv.w.assign(n + 1, 0.0);
    const double s = std::sqrt(kappa * dt);
    for (std::size_t k = 1; k <= n; ++k)
        drv.w[k] = drv.w[k - 1] + s * rng.normal();
    std::ostringstream os;
    os << "sle:kappa=" << kappa << ",dt=" << dt << ",seed=" << seed;
    drv.meta = os.str();
    return drv;
}

Driver sample_slekr_driver(double kappa, double rho, double dt,
                           std::uint64_t seed, double t_max) {
    if (kappa <= 0.0)
        throw SamplerError("sample_slekr_driver requires kappa > 0");
    if (rho <= -2.0)
        throw SamplerError("sample_slekr_driver requires rho > -2");
    if (dt <= 0.0 || t_max <= 0.0)
        throw SamplerError("sample_slekr_driver requires dt > 0 and t_max > 0");
    const double d = bessel_dimension(kappa, rho);
    Rng rng(seed);
    const auto n = static_cast<std::size_t>(std::llround(t_max / dt));
    Driver drv = uniform_grid(0.0, dt, n);
    drv.w.assign(n + 1, 0.0);
    drv.o.assign(n + 1, 0.0);
    // Z = W - O is sqrt(kappa) times a Bessel(d) run in the same time: then
    // dZ = sqrt(kappa) dB + (rho+2) dt / Z with rho + 2 = kappa (d-1)/2.
    double y = 0.0;  // Bessel coordinate, Z = sqrt(kappa) * y
    double o = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
        // O = -2 int ds / Z resolved at the substeps of the Bessel scheme:
        // a grid-level endpoint quadrature leaves a sqrt(dt)-scale right
        // drift in W (the near-zero stretch of 1/Z is under-integrated)
        double inv = 0.0;
        y = bessel_grid_step(y, d, dt, rng, inv);
        const double z = std::sqrt(kappa) * y;
        o += -2.0 * inv / std::sqrt(kappa);
        drv.o[k] = o;
        drv.w[k] = z + o;
    }
    std::ostringstream os;
    os << "slekr:kappa=" << kappa << ",rho=" << rho << ",dt=" << dt
       << ",seed=" << seed;
    drv.meta = os.str();
    return drv;
}

namespace {

double tail_weight(const Hull& A, Complex z) {
    const Complex phi = map_eval(A, z, 0, EvalMode::Phi).value;
    return phi.imag() / z.imag();
}

// Local step size: base dt near the hull, growing quadratically with the
// distance, capped so that a single step cannot plausibly jump the hull
// (d^2/16) or destabilize the vertical Bessel update (y^2/16).
double local_dt(double dt, double d, double y, double scale) {
    const double grow = dt * std::max(1.0, (d / scale) * (d / scale));
    return std::max(dt, std::min({grow, d * d / 16.0, y * y / 16.0, 1.0}));
}

}  // namespace

AvoidanceSample excursion_avoidance(const Hull& A, double dt,
                                    std::uint64_t seed, double R_esc) {
    if (dt <= 0.0 || R_esc <= 0.0)
        throw SamplerError("excursion_avoidance requires dt > 0 and R > 0");
    Rng rng(seed);
    AvoidanceSample out;
    const double scale = std::max(hull_height(A), 0.5);
    double x = std::sqrt(dt) * rng.normal();
    double y = bessel3_from_zero(dt, rng);
    double d_prev = distance(A, Complex(x, y));
    out.steps = 1;
    for (;;) {
        if (y >= R_esc) {
            out.weight = tail_weight(A, Complex(x, y));
            return out;
        }
        const double h = local_dt(dt, d_prev, y, scale);
        x += std::sqrt(h) * rng.normal();
        y = bessel_grid_step(y, 3.0, h, rng);
        ++out.steps;
        const Complex z(x, y);
        const double d_cur = distance(A, z);
        if (d_cur <= 1e-12 || contains(A, z)) {
            out.hit = true;
            return out;
        }
        const double expo = 2.0 * d_prev * d_cur / h;
        if (expo <= 30.0 && rng.uniform() < std::exp(-expo)) {
            out.hit = true;
            return out;
        }
        d_prev = d_cur;
    }
}

AvoidanceSample rbe_avoidance(double theta, const Hull& A, double dt,
                              std::uint64_t seed, double R_esc) {
    if (!(theta > 0.0 && theta < kPi))
        throw SamplerError("rbe_avoidance requires theta in (0, pi)");
    if (dt <= 0.0 || R_esc <= 0.0)
        throw SamplerError("rbe_avoidance requires dt > 0 and R > 0");
    Rng rng(seed);
    AvoidanceSample out;
    const double c = -std::cos(theta) / std::sin(theta);
    const double p = kPi / (kPi - theta);
    const double scale = std::max(hull_height(A), 0.5);
    double xt = std::sqrt(dt) * rng.normal();
    double y = bessel3_from_zero(dt, rng);
    double m = std::max(0.0, c * y - xt);
    Complex z(xt + m, y);
    Complex zeta = std::pow(z, p);
    double d_prev = distance(A, zeta);
    out.steps = 1;
    for (;;) {
        if (zeta.imag() >= R_esc) {
            out.weight = tail_weight(A, zeta);
            return out;
        }
        // mapped-plane step control: |b'|^2 converts wedge time to mapped
        // variance, so the distance caps divide by it
        const double az = std::abs(z);
        const double bp2 =
            (az > 0.0) ? p * p * std::pow(az, 2.0 * (p - 1.0)) : dt;
        const double grow =
            dt * std::max(1.0, d_prev * d_prev / (scale * scale * bp2));
        const double h = std::max(
            dt, std::min({grow, d_prev * d_prev / (16.0 * bp2),
                          y * y / 16.0, 1.0}));
        xt += std::sqrt(h) * rng.normal();
        y = bessel_grid_step(y, 3.0, h, rng);
        m = std::max(m, c * y - xt);
        ++out.steps;
        const Complex z_new(xt + m, y);
        const Complex zeta_new = std::pow(z_new, p);
        const double d_cur = distance(A, zeta_new);
        if (d_cur <= 1e-12 || contains(A, zeta_new)) {
            out.hit = true;
            return out;
        }
        // effective mapped variance of this step from the realized Jacobian
        const double dz2 = std::norm(z_new - z);
        const double var_map =
            (dz2 > 0.0) ? h * std::norm(zeta_new - zeta) / dz2 : h * bp2;
        const double expo = 2.0 * d_prev * d_cur / std::max(var_map, 1e-300);
        if (expo <= 30.0 && rng.uniform() < std::exp(-expo)) {
            out.hit = true;
            return out;
        }
        z = z_new;
        zeta = zeta_new;
        d_prev = d_cur;
    }
}

}  // namespace restriction
