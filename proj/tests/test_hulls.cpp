#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "restriction/hull.hpp"
#include "restriction/rng.hpp"

using namespace restriction;

namespace {
constexpr double kPi = 3.14159265358979323846;

// numeric capacity oracle: a(A) = lim y*Im(iy - g(iy)).  At y ~ 1e6 a single
// evaluation carries rounding noise of order y*ulp(y) ~ 1e-4, so average over a
// band of y values; the truncation error of the limit itself is O(y^-2).
double capacity_limit_oracle(const Hull& hull, double y = 1e6) {
    double sum = 0.0;
    const int n = 4096;
    for (int j = 0; j < n; ++j) {
        const double yj = y * (1.0 + static_cast<double>(j) / n);
        const Complex iy(0.0, yj);
        const Complex g = map_eval(hull, iy).value;
        sum += yj * (iy - g).imag();
    }
    return sum / n;
}
}  // namespace

TEST_CASE("capacity closed forms against numeric limit oracle") {
    // g(z) = z + 1/z for the unit half-disk; oracle freezes the y Im(iy - g(iy)) limit
    CHECK(capacity(Hull::half_disk(0.0, 1.0)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(capacity_limit_oracle(Hull::half_disk(0.0, 1.0)) ==
          doctest::Approx(1.0).epsilon(1e-5));
    // g(z) = sqrt(z^2+1) = z + 1/(2z) + O(z^-3) for the unit slit at 0
    CHECK(capacity(Hull::vertical_slit(0.0, 1.0)) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(capacity_limit_oracle(Hull::vertical_slit(0.0, 1.0)) ==
          doctest::Approx(0.5).epsilon(1e-5));
    CHECK(capacity(Hull::half_disk(0.0, 2.0)) == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("capacity scaling a(lambda A) = lambda^2 a(A)") {
    const std::vector<Hull> hulls = {Hull::vertical_slit(1.0, 1.0),
                                     Hull::half_disk(2.0, 1.0),
                                     Hull::circular_arc(kPi / 3)};
    for (const auto& A : hulls) {
        const double a = capacity(A);
        for (double lam : {0.5, 2.0, 3.0}) {
            CHECK(std::abs(capacity(scale(A, lam)) - lam * lam * a) <= 1e-9);
        }
    }
}

TEST_CASE("map_eval closed-form values") {
    // half-disk: g(z) = z + 1/z
    const Complex g1 = map_eval(Hull::half_disk(0.0, 1.0), Complex(0.0, 2.0)).value;
    CHECK(g1.real() == doctest::Approx(0.0));
    CHECK(g1.imag() == doctest::Approx(1.5).epsilon(1e-14));
    // slit: g(2) = sqrt(5)
    const Complex g2 = map_eval(Hull::vertical_slit(0.0, 1.0), Complex(2.0, 0.0)).value;
    CHECK(g2.real() == doctest::Approx(std::sqrt(5.0)).epsilon(1e-14));
    CHECK(g2.imag() == 0.0);
    // empty hull: identity with derivatives (1, 0, 0)
    const MapEval e = map_eval(Hull::empty(), Complex(0.3, 0.7), 3);
    CHECK(e.value == Complex(0.3, 0.7));
    CHECK(e.d1 == Complex(1.0, 0.0));
    CHECK(e.d2 == Complex(0.0, 0.0));
    CHECK(e.d3 == Complex(0.0, 0.0));
}

TEST_CASE("map_eval errors and flags") {
    CHECK_THROWS_AS(map_eval(Hull::half_disk(0.0, 1.0), Complex(0.1, 0.2)), DomainError);
    CHECK(map_eval(Hull::half_disk(0.0, 1.0), Complex(0.0, 1.0 + 1e-10)).ill_conditioned);
    CHECK_FALSE(map_eval(Hull::half_disk(0.0, 1.0), Complex(0.0, 1.5)).ill_conditioned);
    CHECK_THROWS_AS(Hull::vertical_slit(0.0, -1.0), InvalidHullError);
    CHECK_THROWS_AS(Hull::half_disk(0.0, 0.0), InvalidHullError);
}

TEST_CASE("real arguments give real results") {
    const Hull A = compose(Hull::vertical_slit(1.0, 1.0), Hull::half_disk(-3.0, 1.0));
    for (double x : {-6.0, -0.5, 0.3, 3.0, 10.0}) {
        const MapEval m = map_eval(A, Complex(x, 0.0), 3);
        CHECK(std::abs(m.value.imag()) <= 1e-12);
        CHECK(std::abs(m.d1.imag()) <= 1e-12);
        CHECK(std::abs(m.d2.imag()) <= 1e-12);
        CHECK(std::abs(m.d3.imag()) <= 1e-12);
    }
}

TEST_CASE("phi_prime_zero closed forms") {
    // g'(0) = 1 - r^2/x0^2
    CHECK(phi_prime_zero(Hull::half_disk(2.0, 1.0)) == doctest::Approx(0.75).epsilon(1e-12));
    // g'(x) = |x-x0| / sqrt((x-x0)^2 + h^2)
    CHECK(phi_prime_zero(Hull::vertical_slit(1.0, 1.0)) ==
          doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK_THROWS_AS(phi_prime_zero(Hull::half_disk(0.5, 1.0)), InvalidHullError);
}

TEST_CASE("quarter-circle arc phi_prime_zero = 1/4") {
    CHECK(phi_prime_zero(Hull::circular_arc(kPi / 2)) == doctest::Approx(0.25).epsilon(4e-3));
}

TEST_CASE("derivative bound 0 < g'(x) <= 1 at random real points") {
    const std::vector<Hull> hulls = {Hull::vertical_slit(1.0, 1.0),
                                     Hull::half_disk(2.5, 1.0),
                                     Hull::circular_arc(kPi / 2),
                                     compose(Hull::vertical_slit(2.0, 1.0),
                                             Hull::half_disk(-4.0, 1.5))};
    Rng rng(20260823u);
    for (const auto& A : hulls) {
        int checked = 0;
        while (checked < 100) {
            const double x = rng.uniform(-50.0, 50.0);
            try {
                const MapEval m = map_eval(A, Complex(x, 0.0), 1);
                CHECK(m.d1.real() > 0.0);
                CHECK(m.d1.real() <= 1.0 + 1e-12);
                ++checked;
            } catch (const DomainError&) {
                // point landed in the hull base; draw again
            }
        }
    }
}

TEST_CASE("composition: capacity additive, phi_prime_zero multiplicative") {
    const Hull A = Hull::half_disk(5.0, 1.0);
    const Hull B = Hull::vertical_slit(3.0, 1.0);
    const Hull AB = compose(A, B);
    CHECK(std::abs(capacity(AB) - capacity(A) - capacity(B)) <= 1e-9);
    CHECK(std::abs(capacity_limit_oracle(AB) - capacity(AB)) <= 1e-5);
    const Hull S1 = Hull::vertical_slit(1.0, 1.0);
    const Hull S2 = Hull::vertical_slit(2.0, 1.0);
    CHECK(std::abs(phi_prime_zero(compose(S1, S2)) -
                   phi_prime_zero(S1) * phi_prime_zero(S2)) <= 1e-9);

    // compose(Empty, A) acts as A
    const Hull EA = compose(Hull::empty(), A);
    const Complex z(0.7, 1.3);
    const Complex pa = map_eval(A, z, 0, EvalMode::Phi).value;
    const Complex pe = map_eval(EA, z, 0, EvalMode::Phi).value;
    CHECK(std::abs(pa - pe) <= 1e-12);
}

TEST_CASE("composite map equals chained closed forms") {
    const Hull A = Hull::vertical_slit(1.0, 1.0);
    const Hull B = Hull::half_disk(-3.0, 1.0);
    const Hull AB = compose(A, B);
    const Complex z(0.4, 0.9);
    const Complex phiB = map_eval(B, z, 0, EvalMode::Phi).value;
    const Complex phiAB = map_eval(A, phiB, 0, EvalMode::Phi).value;
    CHECK(std::abs(map_eval(AB, z, 0, EvalMode::Phi).value - phiAB) <= 1e-12);
}

TEST_CASE("invert closed forms and involution") {
    const Hull I = invert(Hull::half_disk(2.0, 1.0));
    REQUIRE(I.kind() == Hull::Kind::HalfDisk);
    CHECK(I.x0() == doctest::Approx(-2.0 / 3.0).epsilon(1e-12));
    CHECK(I.r() == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(capacity(I) == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
    const Hull A = Hull::half_disk(-3.0, 1.5);
    CHECK(std::abs(phi_prime_zero(invert(invert(A))) - phi_prime_zero(A)) <= 1e-9);
}

TEST_CASE("schwarzian at zero: closed form and capacity identity") {
    // g(z) = z + 1/(z-2): g'(0) = 3/4, g''(0) = -1/4, g'''(0) = -3/8
    CHECK(schwarzian_at_zero(Hull::half_disk(2.0, 1.0)) ==
          doctest::Approx(-2.0 / 3.0).epsilon(1e-12));
    CHECK(schwarzian_at_zero(Hull::empty()) == 0.0);
    CHECK(std::abs(-schwarzian_at_zero(Hull::half_disk(2.0, 1.0)) / 6.0 - 1.0 / 9.0) <=
          1e-9);

    Rng rng(77001u);
    for (int i = 0; i < 20; ++i) {
        Hull A;
        if (i % 2 == 0) {
            const double r = rng.uniform(0.3, 1.2);
            const double x0 = (rng.uniform() < 0.5 ? -1.0 : 1.0) * (r + rng.uniform(0.5, 3.0));
            A = Hull::half_disk(x0, r);
        } else {
            const double x0 = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.5, 4.0);
            A = Hull::vertical_slit(x0, rng.uniform(0.3, 2.0));
        }
        const double s = schwarzian_at_zero(A);
        CHECK(s <= 0.0);
        CHECK(std::abs(s + 6.0 * capacity(invert(A))) <= 1e-6);
    }
}

TEST_CASE("finite differences confirm analytic derivatives of encoded maps") {
    const Hull arc = Hull::circular_arc(kPi / 3);
    const Complex z(0.4, 1.1);
    const MapEval m = map_eval(arc, z, 3);
    // each analytic order is checked against a central difference of the
    // order below it, so truncation and roundoff stay small
    const double h = 1e-5;
    auto at = [&](Complex w) { return map_eval(arc, w, 2); };
    const Complex fd1 = (at(z + h).value - at(z - h).value) / (2.0 * h);
    const Complex fd2 = (at(z + h).d1 - at(z - h).d1) / (2.0 * h);
    const Complex fd3 = (at(z + h).d2 - at(z - h).d2) / (2.0 * h);
    CHECK(std::abs(m.d1 - fd1) <= 1e-7);
    CHECK(std::abs(m.d2 - fd2) <= 1e-7);
    CHECK(std::abs(m.d3 - fd3) <= 1e-6);
}

TEST_CASE("membership predicates") {
    CHECK(in_Qstar(Hull::vertical_slit(1.0, 1.0)));
    CHECK_FALSE(in_Qstar(Hull::vertical_slit(0.0, 1.0)));
    CHECK(in_Qplus(Hull::vertical_slit(1.0, 1.0)));
    CHECK(in_Qminus(Hull::vertical_slit(-1.0, 1.0)));
    CHECK(in_Qstar(Hull::half_disk(2.0, 1.0)));
    CHECK_FALSE(in_Qstar(Hull::half_disk(0.5, 1.0)));
    CHECK(in_Qstar(Hull::circular_arc(kPi / 2)));
    CHECK(in_Qplus(Hull::circular_arc(kPi / 2)));
    CHECK(in_Qminus(Hull::mirror(Hull::half_disk(2.0, 1.0))));
    CHECK_FALSE(in_Qplus(Hull::mirror(Hull::half_disk(2.0, 1.0))));
}

TEST_CASE("contains for primitive and mirrored hulls") {
    CHECK(contains(Hull::half_disk(0.0, 1.0), Complex(0.2, 0.3)));
    CHECK_FALSE(contains(Hull::half_disk(0.0, 1.0), Complex(1.2, 0.3)));
    CHECK(contains(Hull::vertical_slit(1.0, 1.0), Complex(1.0, 0.5)));
    CHECK_FALSE(contains(Hull::vertical_slit(1.0, 1.0), Complex(1.01, 0.5)));
    CHECK(contains(Hull::mirror(Hull::half_disk(2.0, 1.0)), Complex(-2.0, 0.5)));
}

TEST_CASE("mirror map is the sigma-conjugated map") {
    const Hull A = Hull::half_disk(2.0, 1.0);
    const Hull M = Hull::mirror(A);
    const Complex z(-0.6, 1.2);
    const Complex expected = -std::conj(map_eval(A, -std::conj(z)).value);
    CHECK(std::abs(map_eval(M, z).value - expected) <= 1e-14);
    CHECK(capacity(M) == capacity(A));
    CHECK(phi_prime_zero(M) == doctest::Approx(phi_prime_zero(A)).epsilon(1e-12));
}

TEST_CASE("exact-tail excursion identity: quadrature equals pi * capacity") {
    // y * integral of (1 - Im g(x+iy)/y) dx = pi a(A); the |x| > L tail is
    // integrated analytically from the a/z pole of g(z) - z
    const Hull A = Hull::half_disk(0.0, 1.0);
    const double a = capacity(A);
    const double L = 1e3;
    for (double y : {2.0, 5.0}) {
        const int n = 200000;
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x = -L + (2.0 * L) * (i + 0.5) / n;
            const Complex g = map_eval(A, Complex(x, y)).value;
            sum += (1.0 - g.imag() / y);
        }
        double integral = y * sum * (2.0 * L / n);
        integral += a * (kPi - 2.0 * std::atan(L / y));
        CHECK(std::abs(integral - kPi * a) <= 1e-6);
    }
}

TEST_CASE("encode_polyline: slit reproduction and convergence") {
    auto slit_points = [](double x0, double h, int n) {
        std::vector<Complex> pts(n + 1);
        for (int j = 0; j <= n; ++j) pts[j] = Complex(x0, h * j / n);
        return pts;
    };
    const Hull enc = encode_polyline(slit_points(1.0, 1.0, 200), 1e-3);
    CHECK(std::abs(phi_prime_zero(enc) - 1.0 / std::sqrt(2.0)) <= 1e-4);
    CHECK(std::abs(capacity(enc) - 0.5) <= 1e-3);

    CHECK(encode_polyline({}, 1e-3).kind() == Hull::Kind::Empty);
    CHECK(encode_polyline({Complex(2.0, 0.0)}, 1e-3).kind() == Hull::Kind::Empty);

    // halving the resolution at least halves the phi'(0) error
    double prev_err = -1.0;
    for (double res : {4e-3, 1e-3, 2.5e-4}) {
        const Hull e = encode_polyline(slit_points(1.0, 1.0, 400), res);
        const double err = std::abs(phi_prime_zero(e) - 1.0 / std::sqrt(2.0));
        if (prev_err >= 0.0) CHECK(err <= prev_err / 2.0 + 1e-12);
        prev_err = err;
    }
}

TEST_CASE("encode_polyline: quarter circle and error cases") {
    const int n = 400;
    std::vector<Complex> pts(n + 1);
    for (int j = 0; j <= n; ++j) pts[j] = std::polar(1.0, (kPi / 2) * j / n);
    pts[0] = Complex(1.0, 0.0);
    const Hull e = encode_polyline(pts, 1e-3);
    CHECK(std::abs(phi_prime_zero(e) - 0.25) <= 1e-3);

    CHECK_THROWS_AS(encode_polyline({Complex(0.0, 1.0), Complex(1.0, 1.0)}, 1e-3),
                    InvalidHullError);
    CHECK_THROWS_AS(encode_polyline({Complex(0.0, 0.0), Complex(1.0, -0.5)}, 1e-3),
                    InvalidHullError);
    // a path that closes off a region and then crosses back over it
    std::vector<Complex> bad = {Complex(0.0, 0.0), Complex(0.0, 1.0),
                                Complex(-0.2, 0.0), Complex(0.3, 0.0)};
    CHECK_THROWS_AS(encode_polyline(bad, 1e-3), EncodingError);

    // retracing the far side of an already-grown slit is a legal
    // filled-boundary input
    std::vector<Complex> retrace = {Complex(0.0, 0.0), Complex(0.0, 1.0),
                                    Complex(0.0, 0.0)};
    CHECK(capacity(encode_polyline(retrace, 1e-3)) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("slit step maps invert each other") {
    const double dt = 0.02, w = 0.3;
    for (const Complex z : {Complex(1.0, 0.5), Complex(-2.0, 0.1), Complex(0.31, 1.5),
                            Complex(0.29, 0.01)}) {
        const Complex fwd = slit_step(z, dt, w);
        CHECK(std::abs(slit_step_inverse(fwd, dt, w) - z) <= 1e-12);
        CHECK(fwd.imag() >= 0.0);
        const Complex bwd = slit_step_inverse(z, dt, w);
        CHECK(bwd.imag() >= 0.0);
        CHECK(std::abs(slit_step(bwd, dt, w) - z) <= 1e-12);
    }
}

TEST_CASE("hull grammar round trip") {
    const Hull A = parse_hull("compose:slit:x0=1,h=1;mirror:halfdisk:x0=2,r=0.5");
    REQUIRE(A.kind() == Hull::Kind::Composite);
    CHECK(A.left().kind() == Hull::Kind::VerticalSlit);
    CHECK(A.right().kind() == Hull::Kind::Mirror);
    const Hull B = parse_hull(format_hull(A));
    CHECK(std::abs(phi_prime_zero(A) - phi_prime_zero(B)) <= 1e-12);
    CHECK(parse_hull("empty").kind() == Hull::Kind::Empty);
    CHECK(parse_hull("arc:theta=0.5").kind() == Hull::Kind::CircularArc);
    CHECK_THROWS_AS(parse_hull("wedge:alpha=1"), InvalidHullError);
    CHECK_THROWS_AS(parse_hull("slit:x0=1"), InvalidHullError);
}
