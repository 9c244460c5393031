#include "restriction/hull.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace restriction {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Jet {
    Complex f{};
    Complex f1{1.0, 0.0};
    Complex f2{};
    Complex f3{};
};

// third-order chain rule for outer(inner(z)); outer jets taken at inner.f
Jet chain(const Jet& outer, const Jet& inner) {
    Jet j;
    j.f = outer.f;
    j.f1 = outer.f1 * inner.f1;
    j.f2 = outer.f2 * inner.f1 * inner.f1 + outer.f1 * inner.f2;
    j.f3 = outer.f3 * inner.f1 * inner.f1 * inner.f1 +
           3.0 * outer.f2 * inner.f1 * inner.f2 + outer.f1 * inner.f3;
    return j;
}

struct Flow {
    Jet jet;
    bool swallowed = false;
    bool near_boundary = false;
    double progress = 1.0;  // fraction of steps applied before swallowing
};

int sgn(double x) { return (x > 0) - (x < 0); }

// one slit step applied to a strictly complex point
Jet step_jet(Complex z, double dt, double w, int dmax, bool& on_slit, bool& near) {
    const Complex u = z - w;
    Jet j;
    if (std::norm(u) < 1e-300) {
        on_slit = true;
        j.f = Complex(w, 0.0);
        return j;
    }
    const Complex r = 1.0 + 4.0 * dt / (u * u);
    if (r.real() <= 0.0 && std::abs(r.imag()) <= 1e-12 * (1.0 + std::abs(r.real())))
        on_slit = true;
    // S = u sqrt(1 + 4dt/u^2), written so that S - u does not cancel at large |u|
    const Complex S = u + (4.0 * dt / u) / (1.0 + std::sqrt(r));
    j.f = w + S;
    const double halfwidth = 2.0 * std::sqrt(dt);
    if (std::abs(S.imag()) < kBoundaryEps && std::abs(S.real()) <= halfwidth + kBoundaryEps)
        near = true;
    if (dmax >= 1) j.f1 = u / S;
    if (dmax >= 2) j.f2 = 4.0 * dt / (S * S * S);
    if (dmax >= 3) j.f3 = -12.0 * dt * u / (S * S * S * S * S);
    return j;
}

Flow flow_encoded(const std::vector<DrivingStep>& steps, Complex z, int dmax) {
    Flow fl;
    const std::size_t n = steps.size();
    if (z.imag() == 0.0) {
        // real points stay real under every step; a point is swallowed when
        // the driving level jumps across its image
        double x = z.real();
        double d1 = 1.0, d2 = 0.0, d3 = 0.0;
        int prev = 0;
        for (std::size_t k = 0; k < n; ++k) {
            const double dt = steps[k].dt, w = steps[k].w;
            const double u = x - w;
            const int s = sgn(u);
            if (s == 0 || (prev != 0 && s != prev)) {
                fl.swallowed = true;
                fl.progress = static_cast<double>(k) / static_cast<double>(n);
                return fl;
            }
            if (std::abs(u) < kBoundaryEps) fl.near_boundary = true;
            const double S = s * std::sqrt(u * u + 4.0 * dt);
            if (dmax >= 1) {
                const double g1 = u / S;
                const double g2 = 4.0 * dt / (S * S * S);
                const double g3 = -12.0 * dt * u / (S * S * S * S * S);
                d3 = g3 * d1 * d1 * d1 + 3.0 * g2 * d1 * d2 + g1 * d3;
                d2 = g2 * d1 * d1 + g1 * d2;
                d1 = g1 * d1;
            }
            x = w + S;
            prev = s;
        }
        fl.jet.f = Complex(x, 0.0);
        fl.jet.f1 = Complex(d1, 0.0);
        fl.jet.f2 = Complex(d2, 0.0);
        fl.jet.f3 = Complex(d3, 0.0);
        return fl;
    }
    Jet cur{z, {1.0, 0.0}, {}, {}};
    for (std::size_t k = 0; k < n; ++k) {
        const double dt = steps[k].dt, w = steps[k].w;
        const Complex u = cur.f - w;
        const double half = std::sqrt(dt);
        // tolerant swallow window around the slit grown by this step;
        // membership of Encoded hulls is resolution-limited
        if (u.imag() >= -1e-12 && u.imag() <= 3.0 * half &&
            std::abs(u.real()) <= 0.5 * half) {
            fl.swallowed = true;
            fl.progress = static_cast<double>(k) / static_cast<double>(n);
            fl.jet = cur;
            return fl;
        }
        bool on_slit = false;
        Jet sj = step_jet(cur.f, dt, w, dmax, on_slit, fl.near_boundary);
        if (on_slit) {
            fl.swallowed = true;
            fl.progress = static_cast<double>(k) / static_cast<double>(n);
            fl.jet = cur;
            return fl;
        }
        cur = chain(sj, cur);
        if (cur.f.imag() < 0.0) cur.f.imag(0.0);
    }
    fl.jet = cur;
    return fl;
}

double encoded_capacity(const std::vector<DrivingStep>& steps) {
    double a = 0.0;
    for (const auto& s : steps) a += 2.0 * s.dt;
    return a;
}

}  // namespace

// ---------------------------------------------------------------------------

struct Hull::Node {
    Kind kind = Kind::Empty;
    double p1 = 0.0;  // x0 (slit/halfdisk), theta (arc)
    double p2 = 0.0;  // h (slit), r (halfdisk), resolution (arc)
    Hull a, b;        // composite children; `a` also holds mirror inner
    std::vector<DrivingStep> steps;  // encoded driving (also for arc)
    double g0 = 0.0;                 // cached g_A(0) (NaN if 0 is swallowed)
    double height = 0.0;             // upper bound on sup Im over the hull
};

struct HullAccess {
    static const Hull::Node* node(const Hull& h) { return h.node_.get(); }
    static Hull make(std::shared_ptr<const Hull::Node> n) { return Hull(std::move(n)); }
};

namespace {
const Hull::Node* node_of(const Hull& h) { return HullAccess::node(h); }

Hull make_encoded_with_height(std::vector<DrivingStep> steps, double height_bound) {
    auto n = std::make_shared<Hull::Node>();
    n->kind = Hull::Kind::Encoded;
    n->steps = std::move(steps);
    for (const auto& s : n->steps)
        if (!(s.dt >= 0.0) || !std::isfinite(s.w))
            throw InvalidHullError("encoded hull: invalid driving step");
    Flow f0 = flow_encoded(n->steps, Complex(0.0, 0.0), 0);
    n->g0 = f0.swallowed ? std::numeric_limits<double>::quiet_NaN() : f0.jet.f.real();
    n->height = height_bound;
    return HullAccess::make(std::move(n));
}
}  // namespace

Hull::Hull() = default;
Hull Hull::empty() { return Hull(); }

Hull Hull::vertical_slit(double x0, double h) {
    if (!(h > 0.0) || !std::isfinite(x0) || !std::isfinite(h))
        throw InvalidHullError("vertical slit requires finite x0 and h > 0");
    auto n = std::make_shared<Node>();
    n->kind = Kind::VerticalSlit;
    n->p1 = x0;
    n->p2 = h;
    return HullAccess::make(std::move(n));
}

Hull Hull::half_disk(double x0, double r) {
    if (!(r > 0.0) || !std::isfinite(x0) || !std::isfinite(r))
        throw InvalidHullError("half disk requires finite x0 and r > 0");
    auto n = std::make_shared<Node>();
    n->kind = Kind::HalfDisk;
    n->p1 = x0;
    n->p2 = r;
    return HullAccess::make(std::move(n));
}

Hull Hull::circular_arc(double theta, double resolution) {
    if (!(theta > 0.0) || !(theta <= kPi))
        throw InvalidHullError("circular arc requires theta in (0, pi]");
    if (!(resolution > 0.0)) throw InvalidHullError("arc resolution must be positive");
    const int nv = std::max(64, static_cast<int>(std::ceil(theta / 0.005)));
    std::vector<Complex> pts(nv + 1);
    for (int j = 0; j <= nv; ++j)
        pts[j] = std::polar(1.0, theta * j / nv);
    pts[0] = Complex(1.0, 0.0);
    Hull enc = encode_polyline(pts, resolution);
    auto n = std::make_shared<Node>();
    n->kind = Kind::CircularArc;
    n->p1 = theta;
    n->p2 = resolution;
    n->steps = node_of(enc)->steps;
    n->g0 = node_of(enc)->g0;
    n->height = theta >= kPi / 2 ? 1.0 : std::sin(theta);
    return HullAccess::make(std::move(n));
}

Hull Hull::composite(const Hull& a, const Hull& b) {
    if (a.kind() == Kind::Empty) return b;
    if (b.kind() == Kind::Empty) return a;
    if (!in_Qstar(a) || !in_Qstar(b))
        throw InvalidHullError("compose requires both hulls in Q*");
    auto n = std::make_shared<Node>();
    n->kind = Kind::Composite;
    n->a = a;
    n->b = b;
    return HullAccess::make(std::move(n));
}

Hull Hull::mirror(const Hull& a) {
    if (a.kind() == Kind::Empty) return a;
    auto n = std::make_shared<Node>();
    n->kind = Kind::Mirror;
    n->a = a;
    return HullAccess::make(std::move(n));
}

Hull Hull::encoded(std::vector<DrivingStep> steps) {
    if (steps.empty()) return Hull();
    const double a = encoded_capacity(steps);
    return make_encoded_with_height(std::move(steps), 2.0 * std::sqrt(2.0 * a));
}

Hull::Kind Hull::kind() const { return node_ ? node_->kind : Kind::Empty; }

namespace {
[[noreturn]] void wrong_kind() { throw InvalidHullError("hull accessor used on wrong kind"); }
}

double Hull::x0() const {
    if (kind() != Kind::VerticalSlit && kind() != Kind::HalfDisk) wrong_kind();
    return node_->p1;
}
double Hull::h() const {
    if (kind() != Kind::VerticalSlit) wrong_kind();
    return node_->p2;
}
double Hull::r() const {
    if (kind() != Kind::HalfDisk) wrong_kind();
    return node_->p2;
}
double Hull::theta() const {
    if (kind() != Kind::CircularArc) wrong_kind();
    return node_->p1;
}
const Hull& Hull::left() const {
    if (kind() != Kind::Composite) wrong_kind();
    return node_->a;
}
const Hull& Hull::right() const {
    if (kind() != Kind::Composite) wrong_kind();
    return node_->b;
}
const Hull& Hull::inner() const {
    if (kind() != Kind::Mirror) wrong_kind();
    return node_->a;
}
const std::vector<DrivingStep>& Hull::steps() const {
    if (kind() != Kind::Encoded && kind() != Kind::CircularArc) wrong_kind();
    return node_->steps;
}

// ---------------------------------------------------------------------------

double capacity(const Hull& hull) {
    switch (hull.kind()) {
        case Hull::Kind::Empty: return 0.0;
        case Hull::Kind::VerticalSlit: return hull.h() * hull.h() / 2.0;
        case Hull::Kind::HalfDisk: return hull.r() * hull.r();
        case Hull::Kind::CircularArc:
        case Hull::Kind::Encoded: return encoded_capacity(hull.steps());
        case Hull::Kind::Composite: return capacity(hull.left()) + capacity(hull.right());
        case Hull::Kind::Mirror: return capacity(hull.inner());
    }
    throw InvalidHullError("unreachable hull kind");
}

namespace {

Flow eval_g_flow(const Hull& hull, Complex z, int dmax) {
    switch (hull.kind()) {
        case Hull::Kind::Empty: {
            Flow f;
            f.jet.f = z;
            return f;
        }
        case Hull::Kind::VerticalSlit: {
            std::vector<DrivingStep> s{{hull.h() * hull.h() / 4.0, hull.x0()}};
            return flow_encoded(s, z, dmax);
        }
        case Hull::Kind::HalfDisk: {
            Flow f;
            const double x0 = hull.x0(), r = hull.r();
            const Complex u = z - x0;
            const double au = std::abs(u);
            if (au < r - 1e-15 * r) {
                f.swallowed = true;
                return f;
            }
            if (std::abs(au - r) < kBoundaryEps) f.near_boundary = true;
            const double r2 = r * r;
            f.jet.f = z + r2 / u;
            if (dmax >= 1) f.jet.f1 = 1.0 - r2 / (u * u);
            if (dmax >= 2) f.jet.f2 = 2.0 * r2 / (u * u * u);
            if (dmax >= 3) f.jet.f3 = -6.0 * r2 / (u * u * u * u);
            return f;
        }
        case Hull::Kind::CircularArc:
        case Hull::Kind::Encoded:
            return flow_encoded(hull.steps(), z, dmax);
        case Hull::Kind::Mirror: {
            Flow e = eval_g_flow(hull.inner(), -std::conj(z), dmax);
            Flow f = e;
            f.jet.f = -std::conj(e.jet.f);
            f.jet.f1 = std::conj(e.jet.f1);
            f.jet.f2 = -std::conj(e.jet.f2);
            f.jet.f3 = std::conj(e.jet.f3);
            return f;
        }
        case Hull::Kind::Composite: {
            const Hull& a = hull.left();
            const Hull& b = hull.right();
            Flow fb = eval_g_flow(b, z, dmax);
            if (fb.swallowed) return fb;
            const double g0b = g_at_zero(b);
            Flow fa = eval_g_flow(a, fb.jet.f - g0b, dmax);
            Flow f;
            f.swallowed = fa.swallowed;
            f.near_boundary = fa.near_boundary || fb.near_boundary;
            if (!f.swallowed) {
                f.jet = chain(fa.jet, fb.jet);
                f.jet.f += g0b;
            }
            return f;
        }
    }
    throw InvalidHullError("unreachable hull kind");
}

}  // namespace

double g_at_zero(const Hull& hull) {
    switch (hull.kind()) {
        case Hull::Kind::Empty: return 0.0;
        case Hull::Kind::VerticalSlit: {
            const double x0 = hull.x0(), h = hull.h();
            if (x0 == 0.0) throw InvalidHullError("g_A(0) undefined: 0 in hull base");
            return x0 - sgn(x0) * std::sqrt(x0 * x0 + h * h);
        }
        case Hull::Kind::HalfDisk: {
            const double x0 = hull.x0(), r = hull.r();
            if (std::abs(x0) <= r) throw InvalidHullError("g_A(0) undefined: 0 in hull");
            return -r * r / x0;
        }
        case Hull::Kind::CircularArc:
        case Hull::Kind::Encoded: {
            const double g0 = node_of(hull)->g0;
            if (std::isnan(g0)) throw InvalidHullError("g_A(0) undefined: 0 in hull");
            return g0;
        }
        case Hull::Kind::Mirror: return -g_at_zero(hull.inner());
        case Hull::Kind::Composite:
            return g_at_zero(hull.left()) + g_at_zero(hull.right());
    }
    throw InvalidHullError("unreachable hull kind");
}

MapEval map_eval(const Hull& hull, Complex z, int derivatives_up_to, EvalMode mode) {
    Flow f = eval_g_flow(hull, z, derivatives_up_to);
    if (f.swallowed) throw DomainError("map_eval: point inside hull");
    MapEval m;
    m.value = f.jet.f;
    m.d1 = f.jet.f1;
    m.d2 = f.jet.f2;
    m.d3 = f.jet.f3;
    m.ill_conditioned = f.near_boundary;
    if (mode == EvalMode::Phi) m.value -= g_at_zero(hull);
    return m;
}

double phi_prime_zero(const Hull& hull) {
    if (!in_Qstar(hull)) throw InvalidHullError("phi_prime_zero requires hull in Q*");
    Flow f = eval_g_flow(hull, Complex(0.0, 0.0), 1);
    if (f.swallowed) throw InvalidHullError("phi_prime_zero: 0 inside hull");
    return f.jet.f1.real();
}

Hull compose(const Hull& a, const Hull& b) { return Hull::composite(a, b); }

// ---------------------------------------------------------------------------

namespace {

// filled base interval [L, R] of a connected encoded hull, by bisection on
// the real swallow test; the first driving level lies in the closed base
std::pair<double, double> encoded_base_interval(const std::vector<DrivingStep>& steps) {
    if (steps.empty()) return {0.0, 0.0};
    double wmin = steps.front().w, wmax = steps.front().w;
    for (const auto& s : steps) {
        wmin = std::min(wmin, s.w);
        wmax = std::max(wmax, s.w);
    }
    const double a = encoded_capacity(steps);
    const double margin = 8.0 * std::sqrt(a) + 1e-9;
    auto swallowed = [&](double x) {
        return flow_encoded(steps, Complex(x, 0.0), 0).swallowed;
    };
    const double inside = steps.front().w;
    double lo = wmin - margin, hi = inside;
    for (int i = 0; i < 60; ++i) {
        const double m = 0.5 * (lo + hi);
        (swallowed(m) ? hi : lo) = m;
    }
    const double L = 0.5 * (lo + hi);
    lo = inside;
    hi = wmax + margin;
    for (int i = 0; i < 60; ++i) {
        const double m = 0.5 * (lo + hi);
        (swallowed(m) ? lo : hi) = m;
    }
    const double R = 0.5 * (lo + hi);
    return {L, R};
}

}  // namespace

bool in_Qstar(const Hull& hull) {
    switch (hull.kind()) {
        case Hull::Kind::Empty: return true;
        case Hull::Kind::VerticalSlit: return hull.x0() != 0.0;
        case Hull::Kind::HalfDisk: return std::abs(hull.x0()) > hull.r();
        case Hull::Kind::CircularArc: return hull.theta() < kPi;
        case Hull::Kind::Mirror: return in_Qstar(hull.inner());
        case Hull::Kind::Composite:
            return in_Qstar(hull.left()) && in_Qstar(hull.right());
        case Hull::Kind::Encoded: {
            auto [L, R] = encoded_base_interval(hull.steps());
            return L > 0.0 || R < 0.0;
        }
    }
    throw InvalidHullError("unreachable hull kind");
}

bool in_Qplus(const Hull& hull) {
    switch (hull.kind()) {
        case Hull::Kind::Empty: return true;
        case Hull::Kind::VerticalSlit: return hull.x0() > 0.0;
        case Hull::Kind::HalfDisk: return hull.x0() > hull.r();
        case Hull::Kind::CircularArc: return hull.theta() < kPi;
        case Hull::Kind::Mirror: return in_Qminus(hull.inner());
        case Hull::Kind::Composite:
            return in_Qplus(hull.left()) && in_Qplus(hull.right());
        case Hull::Kind::Encoded:
            return encoded_base_interval(hull.steps()).first > 0.0;
    }
    throw InvalidHullError("unreachable hull kind");
}

bool in_Qminus(const Hull& hull) {
    switch (hull.kind()) {
        case Hull::Kind::Empty: return true;
        case Hull::Kind::VerticalSlit: return hull.x0() < 0.0;
        case Hull::Kind::HalfDisk: return hull.x0() < -hull.r();
        case Hull::Kind::CircularArc: return false;
        case Hull::Kind::Mirror: return in_Qplus(hull.inner());
        case Hull::Kind::Composite:
            return in_Qminus(hull.left()) && in_Qminus(hull.right());
        case Hull::Kind::Encoded:
            return encoded_base_interval(hull.steps()).second < 0.0;
    }
    throw InvalidHullError("unreachable hull kind");
}

bool contains(const Hull& hull, Complex z) {
    if (z.imag() < -1e-12) return false;
    switch (hull.kind()) {
        case Hull::Kind::Empty: return false;
        case Hull::Kind::VerticalSlit:
        case Hull::Kind::CircularArc:
            return distance(hull, z) <= 1e-12;
        case Hull::Kind::HalfDisk:
            return std::abs(z - Complex(hull.x0(), 0.0)) <= hull.r();
        case Hull::Kind::Mirror: return contains(hull.inner(), -std::conj(z));
        case Hull::Kind::Composite: {
            const Hull& b = hull.right();
            Flow fb = eval_g_flow(b, z, 0);
            if (fb.swallowed) return true;
            return contains(hull.left(), fb.jet.f - g_at_zero(b));
        }
        case Hull::Kind::Encoded:
            return eval_g_flow(hull, z, 0).swallowed;
    }
    throw InvalidHullError("unreachable hull kind");
}

// ---------------------------------------------------------------------------

double hull_height(const Hull& hull) {
    switch (hull.kind()) {
        case Hull::Kind::Empty: return 0.0;
        case Hull::Kind::VerticalSlit: return hull.h();
        case Hull::Kind::HalfDisk: return hull.r();
        case Hull::Kind::CircularArc:
        case Hull::Kind::Encoded: return node_of(hull)->height;
        case Hull::Kind::Mirror: return hull_height(hull.inner());
        case Hull::Kind::Composite:
            // crude upper bound; exact heights are only needed for primitives
            return hull_height(hull.right()) + 2.0 * std::sqrt(2.0 * capacity(hull.left()));
    }
    throw InvalidHullError("unreachable hull kind");
}

namespace {
double dist_segment(Complex z, Complex a, Complex b) {
    const Complex d = b - a;
    const double L2 = std::norm(d);
    if (L2 == 0.0) return std::abs(z - a);
    double t = ((z.real() - a.real()) * d.real() + (z.imag() - a.imag()) * d.imag()) / L2;
    t = std::clamp(t, 0.0, 1.0);
    return std::abs(z - (a + t * d));
}
}  // namespace

double distance(const Hull& hull, Complex z) {
    switch (hull.kind()) {
        case Hull::Kind::Empty:
            throw InvalidHullError("distance undefined for the empty hull");
        case Hull::Kind::VerticalSlit:
            return dist_segment(z, Complex(hull.x0(), 0.0), Complex(hull.x0(), hull.h()));
        case Hull::Kind::HalfDisk:
            return std::abs(z - Complex(hull.x0(), 0.0)) - hull.r();
        case Hull::Kind::CircularArc: {
            const double th = hull.theta();
            double ang = std::arg(z);
            if (ang >= 0.0 && ang <= th) return std::abs(std::abs(z) - 1.0);
            return std::min(std::abs(z - Complex(1.0, 0.0)),
                            std::abs(z - std::polar(1.0, th)));
        }
        case Hull::Kind::Mirror: return distance(hull.inner(), -std::conj(z));
        default:
            throw InvalidHullError("distance supported for primitive hulls only");
    }
}

std::vector<double> base_points(const Hull& hull) {
    switch (hull.kind()) {
        case Hull::Kind::Empty: return {};
        case Hull::Kind::VerticalSlit: return {hull.x0()};
        case Hull::Kind::HalfDisk:
            return {hull.x0() - hull.r(), hull.x0() + hull.r()};
        case Hull::Kind::CircularArc:
            if (hull.theta() < kPi) return {1.0};
            return {-1.0, 1.0};
        case Hull::Kind::Mirror: {
            auto pts = base_points(hull.inner());
            for (auto& p : pts) p = -p;
            std::sort(pts.begin(), pts.end());
            return pts;
        }
        case Hull::Kind::Encoded: {
            auto [L, R] = encoded_base_interval(hull.steps());
            return {L, R};
        }
        default:
            throw InvalidHullError("base_points unsupported for composite hulls");
    }
}

std::vector<Complex> boundary_polyline(const Hull& hull, int n) {
    if (n < 2) throw InvalidHullError("boundary_polyline needs n >= 2");
    std::vector<Complex> pts;
    switch (hull.kind()) {
        case Hull::Kind::Empty: return pts;
        case Hull::Kind::VerticalSlit: {
            const double x0 = hull.x0(), h = hull.h();
            for (int j = 0; j <= n; ++j) pts.emplace_back(x0, h * j / n);
            for (int j = n - 1; j >= 0; --j) pts.emplace_back(x0, h * j / n);
            return pts;
        }
        case Hull::Kind::HalfDisk: {
            const double x0 = hull.x0(), r = hull.r();
            for (int j = 0; j <= n; ++j)
                pts.push_back(Complex(x0, 0.0) + std::polar(r, kPi - kPi * j / n));
            return pts;
        }
        case Hull::Kind::CircularArc: {
            const double th = hull.theta();
            for (int j = 0; j <= n; ++j) pts.push_back(std::polar(1.0, th * j / n));
            for (int j = n - 1; j >= 0; --j) pts.push_back(std::polar(1.0, th * j / n));
            return pts;
        }
        case Hull::Kind::Mirror: {
            auto inner_pts = boundary_polyline(hull.inner(), n);
            std::reverse(inner_pts.begin(), inner_pts.end());
            for (auto& p : inner_pts) p = -std::conj(p);
            return inner_pts;
        }
        default:
            throw InvalidHullError("boundary_polyline supported for primitive hulls only");
    }
}

// ---------------------------------------------------------------------------

Complex slit_step(Complex z, double dt, double w, bool* hit) {
    bool on_slit = false, near = false;
    Jet j = step_jet(z, dt, w, 0, on_slit, near);
    if (hit) *hit = on_slit;
    return j.f;
}

Complex slit_step_inverse(Complex z, double dt, double w) {
    const Complex u = z - w;
    if (std::norm(u) < 1e-300) return Complex(w, 2.0 * std::sqrt(dt));
    Complex q = std::sqrt(u * u - 4.0 * dt);
    // branch: image stays in the closed upper half-plane, with the real-axis
    // orientation matching hydrodynamic normalization
    if (q.imag() < 0.0 || (q.imag() == 0.0 && sgn(q.real()) != sgn(u.real()))) q = -q;
    return w + q;
}

// ---------------------------------------------------------------------------

namespace {

// Flow one preimage point through the accumulated driving.  A point landing
// exactly on a grown slit (filled-boundary retrace) continues as a real
// boundary point; a driving jump across a real image means the path ran into
// an already-swallowed region.
struct EncodeFlow {
    Complex image{};
    bool real_mode = false;
    bool swallowed = false;
};

EncodeFlow encode_flow(const std::vector<DrivingStep>& steps, Complex z) {
    EncodeFlow r;
    r.image = z;
    r.real_mode = std::abs(z.imag()) <= 1e-14;
    int prev = 0;
    for (const auto& st : steps) {
        if (r.real_mode) {
            double x = r.image.real();
            const double u = x - st.w;
            const int s = sgn(u);
            if (prev != 0 && s != 0 && s != prev) {
                r.swallowed = true;
                return r;
            }
            if (s == 0) {
                prev = 0;
                continue;  // sits at the driving point; stays there
            }
            r.image = Complex(st.w + s * std::sqrt(u * u + 4.0 * st.dt), 0.0);
            prev = s;
        } else {
            bool on_slit = false;
            r.image = slit_step(r.image, st.dt, st.w, &on_slit);
            if (on_slit || r.image.imag() <= 1e-14) {
                r.real_mode = true;
                r.image = Complex(r.image.real(), 0.0);
                prev = sgn(r.image.real() - st.w);
            }
        }
    }
    return r;
}

}  // namespace

Hull encode_polyline(const std::vector<Complex>& points, double resolution) {
    if (!(resolution > 0.0)) throw InvalidHullError("encoding resolution must be positive");
    if (points.empty()) return Hull();
    if (std::abs(points.front().imag()) > 1e-9)
        throw InvalidHullError("polyline must start on the real axis");
    double height = 0.0;
    for (const auto& p : points) {
        if (p.imag() < -1e-9)
            throw InvalidHullError("polyline leaves the closed upper half-plane");
        height = std::max(height, p.imag());
    }
    if (points.size() == 1) return Hull();

    const std::size_t m = points.size() - 1;
    std::vector<DrivingStep> steps;
    steps.reserve(256);
    double w = points.front().real();
    std::size_t cur = 0;
    const double hlimit = 4.0 * std::sqrt(resolution);
    const std::size_t max_steps = 10'000'000;

    auto progress = [&] { return static_cast<double>(cur) / static_cast<double>(m); };

    // absorb the preimage segment [pa, pb], subdividing in preimage space so
    // that every driving step ends exactly on the input polyline
    auto absorb = [&](auto&& self, Complex pa, Complex pb, int depth) -> void {
        if (steps.size() > max_steps)
            throw EncodingError("encoding step budget exceeded", progress());
        EncodeFlow f = encode_flow(steps, pb);
        if (f.swallowed) throw EncodingError("polyline self-intersects", progress());
        const double eta = std::max(0.0, f.image.imag());
        const double dt = eta * eta / 4.0;
        if (dt <= resolution && std::abs(f.image.real() - w) <= hlimit) {
            if (dt > 0.0) steps.push_back({dt, f.image.real()});
            w = f.image.real();
            return;
        }
        if (depth > 60) throw EncodingError("encoding subdivision failed", progress());
        const Complex mid = 0.5 * (pa + pb);
        self(self, pa, mid, depth + 1);
        self(self, mid, pb, depth + 1);
    };

    for (cur = 1; cur <= m; ++cur) absorb(absorb, points[cur - 1], points[cur], 0);
    if (steps.empty()) return Hull();
    return make_encoded_with_height(std::move(steps), height);
}

// ---------------------------------------------------------------------------

namespace {

// Tilted-slit removal zipper: absorbs each polyline chord with the
// hydrodynamically normalized two-point power map
//   f(v) = (v + b s)^(1-b) (v - (1-b) s)^b,  b = chord angle / pi,
// whose slit capacity is s^2 b (1-b) / 2.  Removal inverts f by Newton.
// Returns vertical-step driving data (exact in total capacity) plus the
// accumulated capacity.
struct ZipperResult {
    std::vector<DrivingStep> steps;
    double cap = 0.0;
};

ZipperResult zipper_encode(std::vector<Complex> pts) {
    ZipperResult zr;
    if (pts.size() < 2) return zr;
    double w = pts[0].real();
    for (std::size_t i = 1; i < pts.size(); ++i) {
        const Complex A = pts[i] - w;
        const double R = std::abs(A);
        const double b = std::arg(A) / kPi;
        if (b <= 1e-12 || b >= 1.0 - 1e-12) {
            w += A.real();
            continue;
        }
        const double s = R / (std::pow(1.0 - b, 1.0 - b) * std::pow(b, b));
        const double dcap = s * s * b * (1.0 - b) / 2.0;
        zr.cap += dcap;
        zr.steps.push_back({dcap / 2.0, pts[i].real()});
        const double p = (1.0 - b) * s, q = b * s;
        for (std::size_t j = i + 1; j < pts.size(); ++j) {
            const Complex u = pts[j] - w;
            Complex v = u + dcap / u;
            bool ok = false;
            for (int it = 0; it < 60; ++it) {
                const Complex fv = std::pow(v + q, 1.0 - b) * std::pow(v - p, b);
                const Complex dfv = fv * ((1.0 - b) / (v + q) + b / (v - p));
                const Complex step = (fv - u) / dfv;
                v -= step;
                if (std::abs(step) < 1e-14 * (1.0 + std::abs(v))) {
                    ok = true;
                    break;
                }
            }
            if (!ok || v.imag() < -1e-12)
                throw EncodingError("zipper removal failed to converge",
                                    static_cast<double>(i) / static_cast<double>(pts.size()));
            pts[j] = w + v;
        }
        w += s * (1.0 - 2.0 * b);
    }
    return zr;
}

// Encode a smooth curve given by an exact parametrization, with the capacity
// Richardson-extrapolated across an (n, 2n) vertex pair; the zipper error is
// an empirically clean C n^(-3/2) power law.
template <typename CurveFn>
Hull encode_curve_extrapolated(CurveFn&& curve) {
    const int n1 = 256, n2 = 512;
    auto sample = [&](int n) {
        std::vector<Complex> pts(n + 1);
        for (int j = 0; j <= n; ++j) pts[j] = curve(static_cast<double>(j) / n);
        return pts;
    };
    const std::vector<Complex> fine = sample(n2);
    double height = 0.0;
    for (const auto& p : fine) height = std::max(height, p.imag());
    const ZipperResult z1 = zipper_encode(sample(n1));
    ZipperResult z2 = zipper_encode(fine);
    const double a_ext = z2.cap + (z2.cap - z1.cap) / (std::pow(2.0, 1.5) - 1.0);
    Hull e = make_encoded_with_height(std::move(z2.steps), height);
    return scale(e, std::sqrt(a_ext / z2.cap));
}

}  // namespace

namespace {
// remember what an encoded inversion image came from, so that inverting it
// again returns the original hull exactly (involution by construction)
Hull attach_inverse_provenance(const Hull& encoded, const Hull& original) {
    const Hull::Node* src = node_of(encoded);
    auto n = std::make_shared<Hull::Node>(*src);
    n->b = original;
    return HullAccess::make(std::move(n));
}
}  // namespace

Hull invert(const Hull& hull) {
    if (!in_Qstar(hull)) throw InvalidHullError("invert requires hull in Q*");
    switch (hull.kind()) {
        case Hull::Kind::Empty: return hull;
        case Hull::Kind::HalfDisk: {
            // Mobius image of the circle |z - x0| = r is again a circle
            // centered on the real axis, through -1/(x0-r) and -1/(x0+r)
            const double x0 = hull.x0(), r = hull.r();
            const double e1 = -1.0 / (x0 - r), e2 = -1.0 / (x0 + r);
            return Hull::half_disk(0.5 * (e1 + e2), 0.5 * std::abs(e1 - e2));
        }
        case Hull::Kind::VerticalSlit: {
            const double x0 = hull.x0(), h = hull.h();
            Hull e = encode_curve_extrapolated(
                [=](double t) { return -1.0 / Complex(x0, h * t); });
            return attach_inverse_provenance(e, hull);
        }
        case Hull::Kind::CircularArc: {
            const double th = hull.theta();
            Hull e = encode_curve_extrapolated([=](double t) {
                return t == 0.0 ? Complex(-1.0, 0.0) : -std::polar(1.0, -th * t);
            });
            return attach_inverse_provenance(e, hull);
        }
        case Hull::Kind::Encoded: {
            const Hull& orig = node_of(hull)->b;
            if (orig.kind() != Hull::Kind::Empty) return orig;
            throw InvalidHullError("invert unsupported for general encoded hulls");
        }
        case Hull::Kind::Mirror: return Hull::mirror(invert(hull.inner()));
        default:
            throw InvalidHullError("invert unsupported for composite hulls");
    }
}

double schwarzian_at_zero(const Hull& hull) {
    if (hull.kind() == Hull::Kind::Empty) return 0.0;
    if (!in_Qstar(hull)) throw InvalidHullError("schwarzian_at_zero requires hull in Q*");
    Flow f = eval_g_flow(hull, Complex(0.0, 0.0), 3);
    if (f.swallowed) throw InvalidHullError("schwarzian_at_zero: 0 inside hull");
    const double d1 = f.jet.f1.real(), d2 = f.jet.f2.real(), d3 = f.jet.f3.real();
    return d3 / d1 - 1.5 * (d2 / d1) * (d2 / d1);
}

Hull scale(const Hull& hull, double lambda) {
    if (!(lambda > 0.0)) throw InvalidHullError("scale factor must be positive");
    switch (hull.kind()) {
        case Hull::Kind::Empty: return hull;
        case Hull::Kind::VerticalSlit:
            return Hull::vertical_slit(lambda * hull.x0(), lambda * hull.h());
        case Hull::Kind::HalfDisk:
            return Hull::half_disk(lambda * hull.x0(), lambda * hull.r());
        case Hull::Kind::Mirror: return Hull::mirror(scale(hull.inner(), lambda));
        case Hull::Kind::Composite:
            return Hull::composite(scale(hull.left(), lambda), scale(hull.right(), lambda));
        case Hull::Kind::CircularArc:
        case Hull::Kind::Encoded: {
            // Loewner scaling: driving (dt, w) -> (lambda^2 dt, lambda w)
            std::vector<DrivingStep> s = hull.steps();
            for (auto& st : s) {
                st.dt *= lambda * lambda;
                st.w *= lambda;
            }
            return make_encoded_with_height(std::move(s), lambda * hull_height(hull));
        }
    }
    throw InvalidHullError("unreachable hull kind");
}

// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_kv(const std::string& body, const std::string& key) {
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) continue;
        if (trim(item.substr(0, eq)) == key) return std::stod(trim(item.substr(eq + 1)));
    }
    throw InvalidHullError("hull spec missing parameter '" + key + "'");
}

std::vector<Complex> read_point_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidHullError("cannot open polyline file: " + path);
    std::vector<Complex> pts;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(trim(f));
        if (fields.size() < 2) continue;
        try {
            // accept `re,im` rows and `t,re,im` trace rows
            const std::size_t off = fields.size() >= 3 ? 1 : 0;
            pts.emplace_back(std::stod(fields[off]), std::stod(fields[off + 1]));
        } catch (const std::exception&) {
            continue;  // header row
        }
    }
    return pts;
}

}  // namespace

Hull parse_hull(const std::string& spec_in) {
    const std::string spec = trim(spec_in);
    if (spec == "empty") return Hull();
    auto starts = [&](const char* p) { return spec.rfind(p, 0) == 0; };
    if (starts("slit:")) {
        const std::string body = spec.substr(5);
        return Hull::vertical_slit(parse_kv(body, "x0"), parse_kv(body, "h"));
    }
    if (starts("halfdisk:")) {
        const std::string body = spec.substr(9);
        return Hull::half_disk(parse_kv(body, "x0"), parse_kv(body, "r"));
    }
    if (starts("arc:")) {
        return Hull::circular_arc(parse_kv(spec.substr(4), "theta"));
    }
    if (starts("mirror:")) {
        return Hull::mirror(parse_hull(spec.substr(7)));
    }
    if (starts("compose:")) {
        const std::string body = spec.substr(8);
        std::size_t pos = 0;
        while ((pos = body.find(';', pos)) != std::string::npos) {
            try {
                Hull l = parse_hull(body.substr(0, pos));
                Hull r = parse_hull(body.substr(pos + 1));
                return Hull::composite(l, r);
            } catch (const InvalidHullError&) {
                ++pos;  // the ';' belonged to a nested compose; try the next one
            }
        }
        throw InvalidHullError("compose spec needs two ';'-separated hulls: " + spec);
    }
    if (starts("polyline:")) {
        return encode_polyline(read_point_csv(spec.substr(9)), 1e-4);
    }
    throw InvalidHullError("unknown hull spec: " + spec);
}

std::string format_hull(const Hull& hull) {
    std::ostringstream os;
    os.precision(17);
    switch (hull.kind()) {
        case Hull::Kind::Empty: return "empty";
        case Hull::Kind::VerticalSlit:
            os << "slit:x0=" << hull.x0() << ",h=" << hull.h();
            return os.str();
        case Hull::Kind::HalfDisk:
            os << "halfdisk:x0=" << hull.x0() << ",r=" << hull.r();
            return os.str();
        case Hull::Kind::CircularArc:
            os << "arc:theta=" << hull.theta();
            return os.str();
        case Hull::Kind::Mirror: return "mirror:" + format_hull(hull.inner());
        case Hull::Kind::Composite:
            return "compose:" + format_hull(hull.left()) + ";" + format_hull(hull.right());
        case Hull::Kind::Encoded:
            os << "encoded:steps=" << hull.steps().size() << ",a=" << capacity(hull);
            return os.str();
    }
    throw InvalidHullError("unreachable hull kind");
}

}  // namespace restriction
