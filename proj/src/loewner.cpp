#include "restriction/loewner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "restriction/rng.hpp"

namespace restriction {

namespace {

constexpr double kPi = 3.14159265358979323846;

int sgn(double x) { return (x > 0.0) - (x < 0.0); }

// One piecewise-constant interval [t0, t0+dt) at driving level w, expressed
// as an increment z -> z + inc so that callers can accumulate with
// compensation.  Real points flow exactly on the real axis with the exact
// radicand swallow condition (swallow time refined to the moment the slit
// reaches the point).  Complex points use the stable rearrangement of the
// slit step; swallowing across a finite step is detected by the
// sqrt(dt)-scaled landing window (the spec-level eps threshold alone cannot
// catch a point that jumps the singularity within one step).
struct StepOutcome {
    Complex inc{};
    Complex d1_factor{1.0, 0.0};
    bool swallowed = false;
    double tau = 0.0;
};

StepOutcome step_increment(Complex z, double dt, double w, double t0) {
    StepOutcome out;
    if (std::abs(z.imag()) <= 1e-12) {
        const double u = z.real() - w;
        if (u * u <= 4.0 * dt) {
            out.swallowed = true;
            out.tau = t0 + u * u / 4.0;
            return out;
        }
        const double push = sgn(u) * 4.0 * dt /
                            (std::sqrt(u * u + 4.0 * dt) + std::abs(u));
        out.inc = Complex(push, -z.imag());
        out.d1_factor = Complex(u / (u + push), 0.0);
        return out;
    }
    const Complex u = z - w;
    // r = 1 + 4 dt / u^2, expanded by hand: the std::complex operators go
    // through the NaN-safe libgcc helpers and dominate the probe-loop cost
    const double ur = u.real(), ui = u.imag();
    const double nu = ur * ur + ui * ui;
    const double inv = 4.0 * dt / (nu * nu);
    const double rr = 1.0 + inv * (ur * ur - ui * ui);
    const double ri = -inv * (2.0 * ur * ui);
    Complex t;
    if (rr <= 0.0 && std::abs(ri) <= 1e-13 * std::abs(rr)) {
        // on or directly above the growing slit
        t = u * (std::sqrt(Complex(rr, ri)) - 1.0);
    } else {
        // s = sqrt(r) with Re s >= 0
        const double m = std::hypot(rr, ri);
        double sx, sy;
        if (rr >= 0.0) {
            sx = std::sqrt(0.5 * (m + rr));
            sy = sx == 0.0 ? 0.0 : ri / (2.0 * sx);
        } else {
            sy = std::copysign(std::sqrt(0.5 * (m - rr)), ri);
            sx = ri / (2.0 * sy);
        }
        // t = (4 dt / u) / (1 + s) with 4 dt / u = 4 dt conj(u) / |u|^2
        const double ar = 4.0 * dt * ur / nu, ai = -4.0 * dt * ui / nu;
        const double dr = 1.0 + sx, di = sy;
        const double nd = dr * dr + di * di;
        t = Complex((ar * dr + ai * di) / nd, (ai * dr - ar * di) / nd);
    }
    const Complex v = u + t;  // image relative to the driving level
    const double sq = std::sqrt(dt);
    if (v.imag() <= 1e-12 || (v.imag() < sq && std::abs(v) <= 3.0 * sq)) {
        out.swallowed = true;
        out.tau = t0 + dt;
        return out;
    }
    out.inc = t;
    const double nv = v.real() * v.real() + v.imag() * v.imag();
    out.d1_factor = Complex((ur * v.real() + ui * v.imag()) / nv,
                            (ui * v.real() - ur * v.imag()) / nv);
    return out;
}

std::size_t grid_index(const Driver& d, double t_end) {
    // largest k with t[k] <= t_end (+ slack for roundoff)
    const auto it = std::upper_bound(d.t.begin(), d.t.end(), t_end + 1e-12);
    if (it == d.t.begin()) throw DriverError("t_end precedes the driver grid");
    return static_cast<std::size_t>(it - d.t.begin()) - 1;
}

}  // namespace

StepResult advance_probe(Complex z, double dt, double w) {
    const StepOutcome o = step_increment(z, dt, w, 0.0);
    StepResult r;
    if (o.swallowed) {
        r.swallowed = true;
        r.tau_offset = o.tau;
        return r;
    }
    r.value = z + o.inc;
    r.d1_factor = o.d1_factor;
    return r;
}

void validate_driver(const Driver& driver) {
    const std::size_t n = driver.t.size();
    if (n == 0) throw DriverError("empty driver grid");
    if (driver.w.size() != n && driver.xi.empty())
        throw DriverError("driver w length mismatch");
    for (std::size_t k = 1; k < n; ++k)
        if (!(driver.t[k] > driver.t[k - 1]))
            throw DriverError("driver grid not strictly increasing");
    if (!driver.o.empty()) {
        if (driver.o.size() != n) throw DriverError("driver o length mismatch");
        for (std::size_t k = 0; k < n; ++k)
            if (driver.o[k] > driver.w[k] + 1e-12)
                throw DriverError("one-sided ordering O <= W violated");
    }
    if (!driver.xi.empty()) {
        if (driver.xi.size() != n) throw DriverError("driver xi length mismatch");
        for (const Complex& x : driver.xi)
            if (std::abs(std::abs(x) - 1.0) > 1e-9)
                throw DriverError("xi not on the unit circle");
    }
}

Driver uniform_grid(double t0, double dt, std::size_t n) {
    Driver d;
    d.t.resize(n + 1);
    for (std::size_t k = 0; k <= n; ++k) d.t[k] = t0 + dt * static_cast<double>(k);
    d.w.assign(n + 1, 0.0);
    return d;
}

std::vector<ProbeState> evolve_probes(const Driver& driver,
                                      const std::vector<Complex>& probes,
                                      double t_end) {
    validate_driver(driver);
    if (t_end < driver.t.front() - 1e-12 || t_end > driver.t.back() + 1e-12)
        throw DriverError("t_end outside driver grid");
    for (const Complex& z : probes)
        if (z.imag() < -1e-12) throw DriverError("probe below the closed half-plane");

    std::vector<ProbeState> states(probes.size());
    for (std::size_t j = 0; j < probes.size(); ++j) {
        states[j].z0 = probes[j];
        states[j].current = probes[j];
    }
    const std::size_t kend = grid_index(driver, t_end);
    for (std::size_t k = 0; k < kend; ++k) {
        const double dt = std::min(driver.t[k + 1], t_end) - driver.t[k];
        if (dt <= 0.0) break;
        const double w = driver.w[k];
        const double wnext = driver.w[std::min(k + 1, driver.w.size() - 1)];
        for (ProbeState& st : states) {
            if (!st.alive) continue;
            const StepOutcome o = step_increment(st.current, dt, w, driver.t[k]);
            if (o.swallowed) {
                st.alive = false;
                st.swallowed_at = o.tau;
                continue;
            }
            st.current += o.inc;
            // mid-chain instability contract: resolve by swallowing
            if (std::abs(st.current.imag()) < kSwallowEps &&
                std::abs(st.current.real() - wnext) < kSwallowEps) {
                st.alive = false;
                st.swallowed_at = driver.t[k + 1];
            }
        }
    }
    return states;
}

ProbeFlow flow_point(const Driver& driver, Complex z, double t_end) {
    validate_driver(driver);
    ProbeFlow f;
    const std::size_t kend = grid_index(driver, t_end);
    // Kahan-compensated accumulation: the tiny per-step increments of far
    // probes would otherwise drown in the roundoff of the running value
    Complex acc = z, c{};  // c carries the roundoff lost by the last addition
    for (std::size_t k = 0; k < kend; ++k) {
        const double dt = std::min(driver.t[k + 1], t_end) - driver.t[k];
        if (dt <= 0.0) break;
        const StepOutcome o = step_increment(acc - c, dt, driver.w[k], driver.t[k]);
        if (o.swallowed) {
            f.value = acc - c;
            f.swallowed = true;
            f.swallowed_at = o.tau;
            return f;
        }
        f.d1 *= o.d1_factor;
        const Complex y = o.inc - c;
        const Complex s = acc + y;
        c = (s - acc) - y;
        acc = s;
    }
    f.value = acc - c;
    return f;
}

PathSample trace(const Driver& driver, const std::vector<double>& sample_times,
                 double delta0) {
    validate_driver(driver);
    PathSample path;
    path.scheme = "euler";
    path.dt = driver.t.size() > 1 ? driver.t[1] - driver.t[0] : 0.0;
    path.horizon = "capacity:" + std::to_string(driver.t.back());
    for (const double ts : sample_times) {
        const std::size_t k = grid_index(driver, ts);
        Complex z(driver.w[k], delta0);
        for (std::size_t j = k; j-- > 0;) {
            const double dt = driver.t[j + 1] - driver.t[j];
            z = slit_step_inverse(z, dt, driver.w[j]);
        }
        path.times.push_back(ts);
        path.points.push_back(z);
    }
    return path;
}

ImageDriverResult image_driver(const Driver& driver, const Hull& hull,
                               const std::vector<double>& coarse_times,
                               int n_probes, double resolution) {
    validate_driver(driver);
    if (!in_Qstar(hull)) throw InvalidHullError("image_driver needs a hull in Q*");
    ImageDriverResult res;
    res.image.meta = "image:" + driver.meta;

    std::vector<Complex> imgs = boundary_polyline(hull, n_probes);
    const double g0 = g_at_zero(hull);
    std::size_t k = 0;  // fine-grid cursor
    double prev_ct = driver.t.front();
    double prev_hp2 = 0.0;
    try {
        const double hp0 =
            map_eval(hull, Complex(driver.w.front(), 0.0), 1).d1.real();
        prev_hp2 = 2.0 * hp0 * hp0;
    } catch (const DomainError&) {
        // the driver starts on the hull base: immediate hit
        res.hit = true;
        res.hit_time = driver.t.front();
        return res;
    }

    for (const double ct : coarse_times) {
        // advance all probes to ct
        bool swallowed_probe = false;
        const std::size_t kt = grid_index(driver, ct);
        for (; k < kt; ++k) {
            const double dt = driver.t[k + 1] - driver.t[k];
            const double w = driver.w[k];
            for (Complex& z : imgs) {
                const StepOutcome o = step_increment(z, dt, w, driver.t[k]);
                if (o.swallowed)
                    swallowed_probe = true;
                else
                    z += o.inc;
            }
            if (swallowed_probe) break;
        }
        if (swallowed_probe) {
            res.hit = true;
            res.hit_time = driver.t[k + 1];
            break;
        }
        const double wt = driver.w[kt];
        double a_now = 0.0, wt_img = 0.0, hprime = 0.0;
        try {
            if (ct <= driver.t.front() + 1e-15) {
                // the image hull at t=0 is A itself
                const MapEval me = map_eval(hull, Complex(wt, 0.0), 1);
                wt_img = me.value.real() - g0;
                hprime = me.d1.real();
            } else {
                const Hull enc = encode_polyline(imgs, resolution);
                const MapEval me = map_eval(enc, Complex(wt, 0.0), 1);
                // capacity additivity along the commuting square
                // g_{K-tilde} o g_A = g_{A_t} o g_{K_t}:
                // a-tilde(t) = 2t + a(A_t) - a(A)
                a_now = 2.0 * ct + capacity(enc) - capacity(hull);
                wt_img = me.value.real() - g0;
                hprime = me.d1.real();
            }
        } catch (const DomainError&) {
            res.hit = true;
            res.hit_time = ct;
            break;
        } catch (const EncodingError&) {
            res.hit = true;
            res.hit_time = ct;
            break;
        }
        // a(t) route 2: a(0) = a(A) plus the trapezoid of 2 h_t'(W_t)^2 dt
        const double hp2 = 2.0 * hprime * hprime;
        const double base = res.a_quad.empty() ? 0.0 : res.a_quad.back();
        res.a_quad.push_back(base + 0.5 * (ct - prev_ct) * (hp2 + prev_hp2));
        prev_ct = ct;
        prev_hp2 = hp2;
        res.image.t.push_back(a_now / 2.0);
        res.image.w.push_back(wt_img);
        res.a.push_back(a_now);
    }
    return res;
}

// --- full-plane -------------------------------------------------------------

namespace {

Complex radial_rhs(Complex q, Complex xi) {
    const Complex den = q - xi;
    if (std::norm(den) < 1e-20) return Complex(0.0, 0.0);
    return -q * (q + xi) / den;
}

struct RadialProbe {
    Complex seed{};
    Complex q{};
    bool alive = true;
};

void radial_rk4(RadialProbe& p, Complex xi, double dt) {
    const Complex k1 = radial_rhs(p.q, xi);
    const Complex k2 = radial_rhs(p.q + 0.5 * dt * k1, xi);
    const Complex k3 = radial_rhs(p.q + 0.5 * dt * k2, xi);
    const Complex k4 = radial_rhs(p.q + dt * k3, xi);
    p.q += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

bool radial_swallowed(const RadialProbe& p, Complex xi) {
    return std::abs(p.q) > 1.0 - 1e-4 || std::abs(p.q - xi) < 1e-2;
}

}  // namespace

FullPlaneResult fullplane_evolve(const Driver& driver, double t_start,
                                 const DiskSpec& domain, int n_boundary,
                                 bool want_hull) {
    validate_driver(driver);
    if (driver.xi.empty()) throw DriverError("full-plane evolution needs xi");
    if (std::abs(domain.center) >= domain.radius)
        throw DriverError("domain disk must contain 0");
    if (t_start < driver.t.front() - 1e-12)
        throw DriverError("t_start precedes the driver grid");

    const double r0 = std::exp(t_start);
    FullPlaneResult res;

    std::vector<RadialProbe> probes(static_cast<std::size_t>(n_boundary));
    for (int j = 0; j < n_boundary; ++j) {
        const Complex zb =
            domain.center + std::polar(domain.radius, 2.0 * kPi * j / n_boundary);
        probes[j].seed = zb;
        probes[j].q = r0 / zb;
    }
    RadialProbe far;
    far.seed = Complex(1e8, 0.0);
    far.q = r0 / far.seed;

    std::vector<RadialProbe> grid_probes;
    const int n_rays = 64, n_rad = 48;
    if (want_hull) {
        const double inr = domain.radius - std::abs(domain.center);
        for (int i = 0; i < n_rays; ++i) {
            for (int j = 0; j < n_rad; ++j) {
                const double rr =
                    r0 * std::pow(0.999 * inr / r0,
                                  (j + 1.0) / static_cast<double>(n_rad));
                RadialProbe p;
                p.seed = std::polar(rr, 2.0 * kPi * i / n_rays);
                p.q = r0 / p.seed;
                grid_probes.push_back(p);
            }
        }
    }

    const std::size_t k0 = grid_index(driver, t_start);
    res.timed_out = true;
    for (std::size_t k = k0; k + 1 < driver.t.size(); ++k) {
        const double dt = driver.t[k + 1] - driver.t[k];
        const Complex xi = driver.xi[k];
        for (RadialProbe& p : probes) {
            if (!p.alive) continue;
            radial_rk4(p, xi, dt);
            if (radial_swallowed(p, xi)) p.alive = false;
        }
        for (RadialProbe& p : grid_probes) {
            if (!p.alive) continue;
            radial_rk4(p, xi, dt);
            if (radial_swallowed(p, xi)) p.alive = false;
        }
        radial_rk4(far, xi, dt);
        for (const RadialProbe& p : probes) {
            if (!p.alive) {
                res.exit_point = p.seed;
                res.exit_time = driver.t[k + 1];
                res.timed_out = false;
                break;
            }
        }
        if (!res.timed_out) break;
    }
    res.log_capacity = std::log(std::abs(far.seed * far.q));
    if (want_hull) {
        for (int i = 0; i < n_rays; ++i) {
            double rmax = 0.0;
            for (int j = 0; j < n_rad; ++j) {
                const RadialProbe& p = grid_probes[i * n_rad + j];
                if (!p.alive) rmax = std::max(rmax, std::abs(p.seed));
            }
            if (rmax > 0.0)
                res.hull_polyline.push_back(std::polar(rmax, 2.0 * kPi * i / n_rays));
        }
    }
    return res;
}

Driver fullplane_sle_driver(double kappa, double t_start, double t_max,
                            double dt, std::uint64_t seed) {
    if (kappa <= 0.0) throw DriverError("kappa must be positive");
    if (t_max <= t_start) throw DriverError("empty time range");
    Rng rng(seed);
    const double theta0 = rng.uniform(0.0, 2.0 * kPi);
    const std::size_t n =
        static_cast<std::size_t>(std::ceil((t_max - t_start) / dt));
    Driver d;
    d.meta = "fullplane-sle:kappa=" + std::to_string(kappa) +
             ",seed=" + std::to_string(seed);
    d.t.reserve(n + 1);
    d.w.assign(n + 1, 0.0);
    d.xi.reserve(n + 1);
    double beta = 0.0;
    for (std::size_t k = 0; k <= n; ++k) {
        d.t.push_back(t_start + dt * static_cast<double>(k));
        d.xi.push_back(std::polar(1.0, theta0 + std::sqrt(kappa) * beta));
        beta += std::sqrt(dt) * rng.normal();
    }
    return d;
}

// --- CSV --------------------------------------------------------------------

void write_driver_csv(const Driver& driver, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DriverError("cannot open " + path);
    const bool has_o = !driver.o.empty();
    out << (has_o ? "t,w,o\n" : "t,w\n");
    char buf[128];
    for (std::size_t k = 0; k < driver.t.size(); ++k) {
        if (has_o)
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", driver.t[k],
                          driver.w[k], driver.o[k]);
        else
            std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", driver.t[k], driver.w[k]);
        out << buf;
    }
}

Driver read_driver_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DriverError("cannot open " + path);
    Driver d;
    std::string line;
    bool header = true;
    bool has_o = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (header) {
            has_o = line.find(",o") != std::string::npos;
            header = false;
            continue;
        }
        std::istringstream row(line);
        double t = 0, w = 0, o = 0;
        char comma = 0;
        row >> t >> comma >> w;
        d.t.push_back(t);
        d.w.push_back(w);
        if (has_o) {
            row >> comma >> o;
            d.o.push_back(o);
        }
    }
    validate_driver(d);
    return d;
}

void write_path_csv(const PathSample& path, const std::string& out_path) {
    std::ofstream out(out_path);
    if (!out) throw DriverError("cannot open " + out_path);
    out << "t,re,im\n";
    char buf[160];
    for (std::size_t k = 0; k < path.times.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", path.times[k],
                      path.points[k].real(), path.points[k].imag());
        out << buf;
    }
}

PathSample read_path_csv(const std::string& in_path) {
    std::ifstream in(in_path);
    if (!in) throw DriverError("cannot open " + in_path);
    PathSample p;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        std::istringstream row(line);
        double t = 0, re = 0, im = 0;
        char comma = 0;
        row >> t >> comma >> re >> comma >> im;
        p.times.push_back(t);
        p.points.emplace_back(re, im);
    }
    return p;
}

}  // namespace restriction
