#pragma once

#include <complex>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace restriction {

using Complex = std::complex<double>;

struct InvalidHullError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EncodingError : std::runtime_error {
    EncodingError(const std::string& msg, double progress_fraction)
        : std::runtime_error(msg), progress(progress_fraction) {}
    double progress;  // fraction of the polyline encoded before failure
};

// One interval of piecewise-constant Loewner driving: the chain is driven at
// level w for capacity-time dt (capacity contribution 2*dt).
struct DrivingStep {
    double dt;
    double w;
};

// Map evaluation bundle.  Derivatives are populated up to the requested
// order; at real arguments off the hull base all imaginary parts vanish.
struct MapEval {
    Complex value{};
    Complex d1{1.0, 0.0};
    Complex d2{};
    Complex d3{};
    bool ill_conditioned = false;
};

enum class EvalMode { G, Phi };  // hydrodynamic g_A vs Phi_A = g_A - g_A(0)

class Hull {
public:
    enum class Kind { Empty, VerticalSlit, HalfDisk, CircularArc, Composite, Mirror, Encoded };

    Hull();  // Empty
    static Hull empty();
    static Hull vertical_slit(double x0, double h);
    static Hull half_disk(double x0, double r);
    static Hull circular_arc(double theta, double resolution = 1e-4);
    static Hull composite(const Hull& a, const Hull& b);
    static Hull mirror(const Hull& a);
    static Hull encoded(std::vector<DrivingStep> steps);

    Kind kind() const;
    // primitive parameters (throws unless the kind matches)
    double x0() const;
    double h() const;
    double r() const;
    double theta() const;
    const Hull& left() const;
    const Hull& right() const;
    const Hull& inner() const;
    const std::vector<DrivingStep>& steps() const;

    bool operator==(const Hull&) const = default;

    struct Node;  // implementation detail, defined in hull.cpp

private:
    explicit Hull(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
    std::shared_ptr<const Node> node_;
    friend struct HullAccess;
};

// --- hull algebra -----------------------------------------------------------

double capacity(const Hull& hull);
MapEval map_eval(const Hull& hull, Complex z, int derivatives_up_to = 0,
                 EvalMode mode = EvalMode::G);
double g_at_zero(const Hull& hull);   // g_A(0)
double phi_prime_zero(const Hull& hull);
Hull compose(const Hull& a, const Hull& b);
Hull invert(const Hull& hull);        // image under z -> -1/z
double schwarzian_at_zero(const Hull& hull);
Hull scale(const Hull& hull, double lambda);

// predicates
bool in_Qstar(const Hull& hull);
bool in_Qplus(const Hull& hull);
bool in_Qminus(const Hull& hull);
bool contains(const Hull& hull, Complex z);

// geometry helpers for samplers and probes
double hull_height(const Hull& hull);
// signed distance from z to the hull boundary for primitive hulls
// (positive outside); throws for Composite/Encoded.
double distance(const Hull& hull, Complex z);
// real attachment points of the hull base
std::vector<double> base_points(const Hull& hull);
// polyline tracing the boundary of A in H-bar from its left base end to its
// right base end; n interior samples.  Primitive hulls only.
std::vector<Complex> boundary_polyline(const Hull& hull, int n);

// Exact vertical-slit step map z -> w + sqrt((z-w)^2 + 4 dt) with the branch
// fixed by hydrodynamic normalization, and its inverse.  `hit` is set when z
// lies on the slit being grown (radicand on the negative real axis).
Complex slit_step(Complex z, double dt, double w, bool* hit = nullptr);
Complex slit_step_inverse(Complex z, double dt, double w);

// --- polyline encoding ------------------------------------------------------

// Encode a polyline attached to R as piecewise-constant Loewner driving.
// `resolution` bounds the capacity-time per driving step.
Hull encode_polyline(const std::vector<Complex>& points, double resolution);

// --- CLI mini-grammar -------------------------------------------------------
// empty | slit:x0=<f>,h=<f> | halfdisk:x0=<f>,r=<f> | arc:theta=<f>
// | mirror:<spec> | compose:<spec>;<spec> | polyline:<csv-path>
Hull parse_hull(const std::string& spec);
std::string format_hull(const Hull& hull);

inline constexpr double kBoundaryEps = 1e-8;  // ill-conditioning distance

}  // namespace restriction
