#pragma once
#include <cstdio>
#include <cstdlib>

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace uavopt::convex {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline double softplus(double u) {
    // ln(1 + e^u), overflow-safe.
    if (u > 30.0) return u + std::exp(-u);
    if (u < -30.0) return std::exp(u);
    return std::log1p(std::exp(u));
}
inline double sigmoid(double u) {
    if (u >= 0.0) {
        const double e = std::exp(-u);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(u);
    return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Smooth scalar terms over a small subset of the decision vector. A term is a
// constraint row (g(x) <= 0) or an objective summand. Gradients and Hessians
// are with respect to the local variables.
// ---------------------------------------------------------------------------
class Term {
public:
    Term(std::string name, std::vector<int> idx) : name_(std::move(name)), idx_(std::move(idx)) {}
    virtual ~Term() = default;

    const std::vector<int>& vars() const { return idx_; }
    int nloc() const { return static_cast<int>(idx_.size()); }
    const std::string& name() const { return name_; }

    // Returns g(x_loc); fills grad (nloc) and hess (nloc x nloc, col-major)
    // when non-null. Returns +inf when x_loc is outside the term's domain.
    virtual double eval(const double* x, double* grad, double* hess) const = 0;

protected:
    std::string name_;
    std::vector<int> idx_;
};

using TermPtr = std::shared_ptr<Term>;

// a^T x + c
class AffineTerm : public Term {
public:
    AffineTerm(std::string name, std::vector<int> idx, Vec coeff, double cst)
        : Term(std::move(name), std::move(idx)), a_(std::move(coeff)), c_(cst) {}

    double eval(const double* x, double* grad, double* hess) const override {
        double v = c_;
        const int n = nloc();
        for (int i = 0; i < n; ++i) v += a_[i] * x[i];
        if (grad)
            for (int i = 0; i < n; ++i) grad[i] = a_[i];
        if (hess) std::fill(hess, hess + n * n, 0.0);
        return v;
    }
    const Vec& coeffs() const { return a_; }
    double constant() const { return c_; }

private:
    Vec a_;
    double c_;
};

// a^T x + c + cube_coef * x_j^3 with x_j >= 0 (kept convex by the box bound).
class AffineCubeTerm : public Term {
public:
    AffineCubeTerm(std::string name, std::vector<int> idx, Vec coeff, double cst, int cube_local,
                   double cube_coef)
        : Term(std::move(name), std::move(idx)),
          a_(std::move(coeff)),
          c_(cst),
          j_(cube_local),
          cc_(cube_coef) {}

    double eval(const double* x, double* grad, double* hess) const override {
        const int n = nloc();
        double v = c_;
        for (int i = 0; i < n; ++i) v += a_[i] * x[i];
        const double u = x[j_];
        v += cc_ * u * u * u;
        if (grad) {
            for (int i = 0; i < n; ++i) grad[i] = a_[i];
            grad[j_] += 3.0 * cc_ * u * u;
        }
        if (hess) {
            std::fill(hess, hess + n * n, 0.0);
            hess[j_ * n + j_] = 6.0 * cc_ * std::max(u, 0.0);
        }
        return v;
    }

private:
    Vec a_;
    double c_;
    int j_;
    double cc_;
};

// a^T x + c + w * softplus(s0 + s1 * x_j)
class AffineSoftplusTerm : public Term {
public:
    AffineSoftplusTerm(std::string name, std::vector<int> idx, Vec coeff, double cst, int sp_local,
                       double s0, double s1, double w = 1.0)
        : Term(std::move(name), std::move(idx)),
          a_(std::move(coeff)),
          c_(cst),
          j_(sp_local),
          s0_(s0),
          s1_(s1),
          w_(w) {}

    double eval(const double* x, double* grad, double* hess) const override {
        const int n = nloc();
        double v = c_;
        for (int i = 0; i < n; ++i) v += a_[i] * x[i];
        const double u = s0_ + s1_ * x[j_];
        v += w_ * softplus(u);
        if (grad) {
            for (int i = 0; i < n; ++i) grad[i] = a_[i];
            grad[j_] += w_ * s1_ * sigmoid(u);
        }
        if (hess) {
            std::fill(hess, hess + n * n, 0.0);
            const double s = sigmoid(u);
            hess[j_ * n + j_] = w_ * s1_ * s1_ * s * (1.0 - s);
        }
        return v;
    }

private:
    Vec a_;
    double c_;
    int j_;
    double s0_, s1_, w_;
};

// sqrt(sum_c (x_{p_c} - x_{m_c} + off_c)^2 + eps^2) - cap, cap a constant or
// a local variable. Components with m_c == -1 use x_{p_c} + off_c alone.
class SmoothNormTerm : public Term {
public:
    struct Component {
        int pos;           // local index
        int neg = -1;      // local index or -1
        double off = 0.0;  // constant shift
    };
    SmoothNormTerm(std::string name, std::vector<int> idx, std::vector<Component> comps,
                   double eps, double cap_const, int cap_local = -1)
        : Term(std::move(name), std::move(idx)),
          comps_(std::move(comps)),
          eps2_(eps * eps),
          cap_(cap_const),
          capj_(cap_local) {}

    double eval(const double* x, double* grad, double* hess) const override {
        const int n = nloc();
        const int m = static_cast<int>(comps_.size());
        std::array<double, 8> d{};
        double s = eps2_;
        for (int c = 0; c < m; ++c) {
            double v = x[comps_[c].pos] + comps_[c].off;
            if (comps_[c].neg >= 0) v -= x[comps_[c].neg];
            d[c] = v;
            s += v * v;
        }
        const double r = std::sqrt(s);
        double val = r - cap_;
        if (capj_ >= 0) val -= x[capj_];
        if (grad) {
            std::fill(grad, grad + n, 0.0);
            for (int c = 0; c < m; ++c) {
                const double gc = d[c] / r;
                grad[comps_[c].pos] += gc;
                if (comps_[c].neg >= 0) grad[comps_[c].neg] -= gc;
            }
            if (capj_ >= 0) grad[capj_] -= 1.0;
        }
        if (hess) {
            std::fill(hess, hess + n * n, 0.0);
            // d(d_c/r)/d d_e = delta_ce / r - d_c d_e / r^3
            for (int c = 0; c < m; ++c) {
                for (int e = 0; e < m; ++e) {
                    const double h = (c == e ? 1.0 / r : 0.0) - d[c] * d[e] / (r * s);
                    add(hess, n, comps_[c], comps_[e], h);
                }
            }
        }
        return val;
    }

private:
    static void add(double* hess, int n, const Component& a, const Component& b, double h) {
        hess[a.pos * n + b.pos] += h;
        if (a.neg >= 0) hess[a.neg * n + b.pos] -= h;
        if (b.neg >= 0) hess[a.pos * n + b.neg] -= h;
        if (a.neg >= 0 && b.neg >= 0) hess[a.neg * n + b.neg] += h;
    }
    std::vector<Component> comps_;
    double eps2_, cap_;
    int capj_;
};

// sum_c (x_c - o_c)^2 - x_sub + c0   (squared distance minus a bound variable)
class QuadMinusVarTerm : public Term {
public:
    QuadMinusVarTerm(std::string name, std::vector<int> idx, Vec offsets, int sub_local,
                     double cst = 0.0)
        : Term(std::move(name), std::move(idx)), o_(std::move(offsets)), j_(sub_local), c_(cst) {}

    double eval(const double* x, double* grad, double* hess) const override {
        const int n = nloc();
        const int m = static_cast<int>(o_.size());
        double v = c_ - x[j_];
        for (int i = 0; i < m; ++i) {
            const double d = x[i] - o_[i];
            v += d * d;
        }
        if (grad) {
            std::fill(grad, grad + n, 0.0);
            for (int i = 0; i < m; ++i) grad[i] = 2.0 * (x[i] - o_[i]);
            grad[j_] -= 1.0;
        }
        if (hess) {
            std::fill(hess, hess + n * n, 0.0);
            for (int i = 0; i < m; ++i) hess[i * n + i] = 2.0;
        }
        return v;
    }

private:
    Vec o_;
    int j_;
    double c_;
};

// 1/x_0 - x_1, domain x_0 > 0.
class RecipTerm : public Term {
public:
    RecipTerm(std::string name, std::vector<int> idx) : Term(std::move(name), std::move(idx)) {}

    double eval(const double* x, double* grad, double* hess) const override {
        if (x[0] <= 0.0) return std::numeric_limits<double>::infinity();
        const double inv = 1.0 / x[0];
        if (grad) {
            grad[0] = -inv * inv;
            grad[1] = -1.0;
        }
        if (hess) {
            std::fill(hess, hess + 4, 0.0);
            hess[0] = 2.0 * inv * inv * inv;
        }
        return inv - x[1];
    }
};

// x_0^2 - x_1 - sqrt(x_2 + eps^2), domain x_2 >= 0 kept by box.
class SquareMinusSqrtTerm : public Term {
public:
    SquareMinusSqrtTerm(std::string name, std::vector<int> idx, double eps)
        : Term(std::move(name), std::move(idx)), eps2_(eps * eps) {}

    double eval(const double* x, double* grad, double* hess) const override {
        const double s = x[2] + eps2_;
        if (s <= 0.0) return std::numeric_limits<double>::infinity();
        const double r = std::sqrt(s);
        if (grad) {
            grad[0] = 2.0 * x[0];
            grad[1] = -1.0;
            grad[2] = -0.5 / r;
        }
        if (hess) {
            std::fill(hess, hess + 9, 0.0);
            hess[0] = 2.0;
            hess[8] = 0.25 / (r * s);
        }
        return x[0] * x[0] - x[1] - r;
    }

private:
    double eps2_;
};

// a^T x + c + sum_i w_i ln(b_i^T x + d_i); convex when all w_i <= 0.
// Domain requires every log argument positive.
class LogSumTerm : public Term {
public:
    struct LogPiece {
        double w;
        Vec b;
        double d;
    };
    LogSumTerm(std::string name, std::vector<int> idx, Vec coeff, double cst,
               std::vector<LogPiece> pieces)
        : Term(std::move(name), std::move(idx)),
          a_(std::move(coeff)),
          c_(cst),
          pieces_(std::move(pieces)) {}

    double eval(const double* x, double* grad, double* hess) const override {
        const int n = nloc();
        double v = c_;
        for (int i = 0; i < n; ++i) v += a_[i] * x[i];
        if (grad)
            for (int i = 0; i < n; ++i) grad[i] = a_[i];
        if (hess) std::fill(hess, hess + n * n, 0.0);
        for (const auto& p : pieces_) {
            double den = p.d;
            for (int i = 0; i < n; ++i) den += p.b[i] * x[i];
            if (den <= 0.0) return std::numeric_limits<double>::infinity();
            v += p.w * std::log(den);
            if (grad)
                for (int i = 0; i < n; ++i) grad[i] += p.w * p.b[i] / den;
            if (hess) {
                const double f = -p.w / (den * den);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j) hess[j * n + i] += f * p.b[i] * p.b[j];
            }
        }
        return v;
    }

private:
    Vec a_;
    double c_;
    std::vector<LogPiece> pieces_;
};

// Wraps a term as g(x) - x_slack for the phase-I lift.
class SlackedTerm : public Term {
public:
    SlackedTerm(TermPtr inner, int slack_global)
        : Term(inner->name(), extend(inner->vars(), slack_global)), inner_(std::move(inner)) {}

    double eval(const double* x, double* grad, double* hess) const override {
        const int n = nloc();
        const int m = n - 1;
        if (hess && scratch_.size() < static_cast<std::size_t>(m) * m)
            scratch_.resize(static_cast<std::size_t>(m) * m);
        const double v = inner_->eval(x, grad, hess ? scratch_.data() : nullptr);
        if (std::isinf(v)) return v;
        if (grad) grad[m] = -1.0;
        if (hess) {
            for (int j = 0; j < m; ++j)
                for (int i = 0; i < m; ++i) hess[j * n + i] = scratch_[j * m + i];
            for (int i = 0; i < n; ++i) {
                hess[m * n + i] = 0.0;
                hess[i * n + m] = 0.0;
            }
        }
        return v - x[m];
    }

private:
    static std::vector<int> extend(std::vector<int> v, int s) {
        v.push_back(s);
        return v;
    }
    TermPtr inner_;
    mutable std::vector<double> scratch_ = std::vector<double>(64);
};

// ---------------------------------------------------------------------------
// Program: smooth convex problem
//   min  obj_lin^T x + obj_const + sum(obj_terms)
//   s.t. g_j(x) <= 0, lo <= x <= hi, A x = b
// ---------------------------------------------------------------------------
struct Program {
    int n = 0;
    Vec lo, hi;      // box (entries may be +-inf)
    Vec x_init;      // suggested start
    Vec scale;       // per-variable preconditioning (default 1)
    std::vector<TermPtr> ineq;
    std::vector<TermPtr> obj_terms;
    Vec obj_lin;
    double obj_const = 0.0;
    Mat A;           // may have 0 rows
    Vec b;

    void init(int nvars) {
        n = nvars;
        lo = Vec::Constant(n, -std::numeric_limits<double>::infinity());
        hi = Vec::Constant(n, std::numeric_limits<double>::infinity());
        x_init = Vec::Zero(n);
        scale = Vec::Ones(n);
        obj_lin = Vec::Zero(n);
        A.resize(0, n);
        b.resize(0);
    }

    double objective(const Vec& x) const {
        double v = obj_const + obj_lin.dot(x);
        std::vector<double> xb(16);
        for (const auto& t : obj_terms) {
            xb.resize(t->vars().size());
            for (std::size_t i = 0; i < t->vars().size(); ++i) xb[i] = x[t->vars()[i]];
            v += t->eval(xb.data(), nullptr, nullptr);
        }
        return v;
    }

    // Max inequality value and worst row; boxes included.
    std::pair<double, std::string> max_violation(const Vec& x) const {
        double worst = -std::numeric_limits<double>::infinity();
        std::string which = "none";
        std::vector<double> xb(16);
        for (const auto& t : ineq) {
            xb.resize(t->vars().size());
            for (std::size_t i = 0; i < t->vars().size(); ++i) xb[i] = x[t->vars()[i]];
            const double v = t->eval(xb.data(), nullptr, nullptr);
            if (v > worst) {
                worst = v;
                which = t->name();
            }
        }
        for (int i = 0; i < n; ++i) {
            if (std::isfinite(lo[i]) && lo[i] - x[i] > worst) {
                worst = lo[i] - x[i];
                which = "box_lo";
            }
            if (std::isfinite(hi[i]) && x[i] - hi[i] > worst) {
                worst = x[i] - hi[i];
                which = "box_hi";
            }
        }
        return {worst, which};
    }
};

enum class SolveStatus { Optimal, Feasible, Infeasible, IterLimit, NumericalFailure };

struct SolveResult {
    SolveStatus status = SolveStatus::NumericalFailure;
    Vec x;
    double value = 0.0;
    double max_violation = 0.0;
    std::string worst_constraint;
    int newton_steps = 0;
};

struct SolveOptions {
    double tol = 1e-7;         // outer gap m/t
    double inner_tol = 1e-8;   // Newton decrement^2 / 2
    double t0 = 1.0;
    double t_mult = 10.0;
    int max_newton = 120;
    int max_outer = 40;
    double strict_margin = 1e-9;  // early phase-I exit when max g < -margin
};

namespace detail {

// Orthonormal handling of the (scaled) equality system A~ y = b. Row norms of
// A~ span many orders of magnitude, so normal-equation projections lose
// digits; a pivoted QR basis keeps both the step projection and the manifold
// restore exact to machine precision.
class EqProjector {
public:
    void init(const Mat& As) {
        p_ = static_cast<int>(As.rows());
        if (p_ == 0) return;
        Eigen::ColPivHouseholderQR<Mat> qr(As.transpose());
        rank_ = static_cast<int>(qr.rank());
        Mat thinQ = qr.householderQ() * Mat::Identity(As.cols(), rank_);
        Q_ = thinQ;
        M_ = As * Q_;  // p x r, well conditioned
        Mqr_.compute(M_);
    }
    bool active() const { return p_ > 0 && rank_ > 0; }
    void project_step(Vec& dy) const {
        if (active()) dy -= Q_ * (Q_.transpose() * dy);
    }
    void restore(const Mat& As, const Vec& b, Vec& y) const {
        if (!active()) return;
        Vec resid = b - As * y;
        if (resid.lpNorm<Eigen::Infinity>() == 0.0) return;
        y += Q_ * Mqr_.solve(resid);
    }

private:
    int p_ = 0, rank_ = 0;
    Mat Q_;   // n x r orthonormal basis of range(As^T)
    Mat M_;   // As * Q
    Eigen::ColPivHouseholderQR<Mat> Mqr_;
};

// Assembled barrier state in scaled coordinates y (x = S y).
class BarrierEval {
public:
    BarrierEval(const Program& p) : p_(p), S_(p.scale) {}

    int n() const { return p_.n; }
    int barrier_count() const {
        int m = static_cast<int>(p_.ineq.size());
        for (int i = 0; i < p_.n; ++i) {
            if (std::isfinite(p_.lo[i])) ++m;
            if (std::isfinite(p_.hi[i])) ++m;
        }
        return m;
    }

    Vec to_x(const Vec& y) const { return S_.cwiseProduct(y); }
    Vec to_y(const Vec& x) const { return x.cwiseQuotient(S_); }

    // phi_t(y) = t f(x) - sum ln(-g_j(x)) - box logs; +inf outside the domain.
    double value(const Vec& y, double t) const {
        const Vec x = to_x(y);
        double phi = t * p_.objective(x);
        if (!std::isfinite(phi)) return std::numeric_limits<double>::infinity();
        std::vector<double> xb(16);
        for (const auto& term : p_.ineq) {
            xb.resize(term->vars().size());
            for (std::size_t i = 0; i < term->vars().size(); ++i) xb[i] = x[term->vars()[i]];
            const double g = term->eval(xb.data(), nullptr, nullptr);
            if (!(g < 0.0)) return std::numeric_limits<double>::infinity();
            phi -= std::log(-g);
        }
        for (int i = 0; i < p_.n; ++i) {
            if (std::isfinite(p_.lo[i])) {
                const double m = x[i] - p_.lo[i];
                if (!(m > 0.0)) return std::numeric_limits<double>::infinity();
                phi -= std::log(m);
            }
            if (std::isfinite(p_.hi[i])) {
                const double m = p_.hi[i] - x[i];
                if (!(m > 0.0)) return std::numeric_limits<double>::infinity();
                phi -= std::log(m);
            }
        }
        return phi;
    }

    // Gradient and Hessian of phi_t at y; returns false when out of domain.
    bool derivatives(const Vec& y, double t, Vec& grad, Mat& hess) const {
        const Vec x = to_x(y);
        grad = Vec::Zero(p_.n);
        hess = Mat::Zero(p_.n, p_.n);

        std::vector<double> xb(32), gb(32), hb(1024);
        // objective terms
        for (const auto& term : p_.obj_terms) {
            const auto& vars = term->vars();
            const int m = static_cast<int>(vars.size());
            xb.resize(m);
            gb.assign(m, 0.0);
            hb.assign(static_cast<std::size_t>(m) * m, 0.0);
            for (int i = 0; i < m; ++i) xb[i] = x[vars[i]];
            const double v = term->eval(xb.data(), gb.data(), hb.data());
            if (!std::isfinite(v)) return false;
            for (int i = 0; i < m; ++i) grad[vars[i]] += t * gb[i] * S_[vars[i]];
            for (int j = 0; j < m; ++j)
                for (int i = 0; i < m; ++i)
                    hess(vars[i], vars[j]) += t * hb[j * m + i] * S_[vars[i]] * S_[vars[j]];
        }
        for (int i = 0; i < p_.n; ++i) grad[i] += t * p_.obj_lin[i] * S_[i];

        // inequality barriers
        for (const auto& term : p_.ineq) {
            const auto& vars = term->vars();
            const int m = static_cast<int>(vars.size());
            xb.resize(m);
            gb.assign(m, 0.0);
            hb.assign(static_cast<std::size_t>(m) * m, 0.0);
            for (int i = 0; i < m; ++i) xb[i] = x[vars[i]];
            const double g = term->eval(xb.data(), gb.data(), hb.data());
            if (!(g < 0.0)) return false;
            const double inv = 1.0 / (-g);
            for (int i = 0; i < m; ++i) {
                const double gi = gb[i] * S_[vars[i]];
                grad[vars[i]] += gi * inv;
            }
            for (int j = 0; j < m; ++j) {
                for (int i = 0; i < m; ++i) {
                    const double gi = gb[i] * S_[vars[i]];
                    const double gj = gb[j] * S_[vars[j]];
                    hess(vars[i], vars[j]) +=
                        gi * gj * inv * inv + hb[j * m + i] * S_[vars[i]] * S_[vars[j]] * inv;
                }
            }
        }

        // box barriers
        for (int i = 0; i < p_.n; ++i) {
            if (std::isfinite(p_.lo[i])) {
                const double m = x[i] - p_.lo[i];
                if (!(m > 0.0)) return false;
                grad[i] -= S_[i] / m;
                hess(i, i) += S_[i] * S_[i] / (m * m);
            }
            if (std::isfinite(p_.hi[i])) {
                const double m = p_.hi[i] - x[i];
                if (!(m > 0.0)) return false;
                grad[i] += S_[i] / m;
                hess(i, i) += S_[i] * S_[i] / (m * m);
            }
        }
        return true;
    }

private:
    const Program& p_;
    Vec S_;
};

// Equality-constrained damped Newton step: [H A~^T; A~ 0][dy; w] = [-g; 0],
// A~ = A * S. Returns false on factorization failure.
inline bool kkt_step(const Mat& H, const Mat& As, const Vec& grad, Vec& dy) {
    const int n = static_cast<int>(H.rows());
    const int p = static_cast<int>(As.rows());
    double damp = 0.0;
    const double base = std::max(1e-300, H.diagonal().cwiseAbs().maxCoeff());
    for (int attempt = 0; attempt < 14; ++attempt) {
        Mat Hd = H;
        if (damp > 0.0) Hd.diagonal().array() += damp;
        Eigen::LLT<Mat> llt(Hd);
        if (llt.info() == Eigen::Success) {
            if (p == 0) {
                dy = llt.solve(-grad);
                return true;
            }
            Mat HiAt = llt.solve(As.transpose());
            Vec Hig = llt.solve(grad);
            Mat Ssys = As * HiAt;
            const double smag = Ssys.diagonal().cwiseAbs().maxCoeff();
            if (smag > 0.0) Ssys.diagonal().array() += 1e-14 * smag;
            Eigen::LDLT<Mat> sol(Ssys);
            if (sol.info() == Eigen::Success) {
                Vec w = sol.solve(-As * Hig);
                dy = -(Hig + HiAt * w);
                return true;
            }
        }
        damp = (damp == 0.0) ? 1e-11 * base : damp * 30.0;
    }
    return false;
}

// Minimizes the program by the log-barrier method from a strictly feasible,
// equality-consistent start y0. Returns the final scaled point.
inline SolveStatus barrier_minimize(const Program& p, const SolveOptions& opts, Vec& y,
                                    int& newton_steps,
                                    const std::function<bool(const Vec&)>& early_stop = nullptr) {
    BarrierEval ev(p);
    const int m = ev.barrier_count();
    Mat As = p.A;
    for (int c = 0; c < As.cols(); ++c) As.col(c) *= p.scale[c];

    const bool trace = std::getenv("UAVOPT_TRACE_BARRIER") != nullptr;
    // The Schur path alone leaves O(eps * cond H) nullspace drift per step;
    // every step is re-projected through an orthonormal basis.
    EqProjector proj;
    proj.init(As);
    double t = opts.t0;
    Vec grad;
    Mat hess;
    for (int outer = 0; outer < opts.max_outer; ++outer) {
        int inner_used = 0;
        double prev_dec2 = std::numeric_limits<double>::infinity();
        int plateau = 0;
        for (int it = 0; it < opts.max_newton; ++it) {
            inner_used = it;
            if (!ev.derivatives(y, t, grad, hess)) {
                if (trace) std::fprintf(stderr, "[barrier] t=%.3g it=%d: out of domain\n", t, it);
                return SolveStatus::NumericalFailure;
            }
            Vec dy;
            if (!kkt_step(hess, As, grad, dy)) {
                if (trace) std::fprintf(stderr, "[barrier] t=%.3g it=%d: kkt failure\n", t, it);
                return SolveStatus::NumericalFailure;
            }
            proj.project_step(dy);
            ++newton_steps;
            const double dec2 = -grad.dot(dy);
            // Decrement in objective units: phi = t f + barrier, so the
            // centering gap scales with t.
            if (dec2 * 0.5 <= opts.inner_tol * std::max(1.0, t)) break;
            // Conditioning plateau: decrement refuses to contract.
            plateau = (dec2 > 0.9 * prev_dec2) ? plateau + 1 : 0;
            prev_dec2 = dec2;
            if (plateau >= 10) break;
            // backtracking line search on phi_t
            const double phi0 = ev.value(y, t);
            double alpha = 1.0;
            bool moved = false;
            double phi_new = phi0;
            for (int ls = 0; ls < 60; ++ls) {
                const Vec cand = y + alpha * dy;
                const double phi = ev.value(cand, t);
                if (std::isfinite(phi) && phi <= phi0 - 0.25 * alpha * dec2) {
                    y = cand;
                    moved = true;
                    phi_new = phi;
                    break;
                }
                alpha *= 0.5;
            }
            if (!moved) break;  // stalled; accept current iterate for this t
            // Evaluation noise floor: no measurable progress.
            if (phi0 - phi_new <= 3e-14 * (1.0 + std::abs(phi0))) break;
        }
        proj.restore(As, p.b, y);
        if (trace) {
            const Vec x = p.scale.cwiseProduct(y);
            auto [w, nm] = p.max_violation(x);
            std::fprintf(stderr, "[barrier] t=%.3g inner=%d obj=%.6g maxviol=%.3g (%s)\n", t,
                         inner_used, p.objective(x), w, nm.c_str());
        }
        if (early_stop && early_stop(y)) return SolveStatus::Optimal;
        if (static_cast<double>(m) / t <= opts.tol) return SolveStatus::Optimal;
        t *= opts.t_mult;
    }
    return SolveStatus::IterLimit;
}

// Projects y onto {A S y = b} in scaled coordinates (least-norm shift).
inline void project_equalities(const Program& p, Vec& y) {
    if (p.A.rows() == 0) return;
    Mat As = p.A;
    for (int c = 0; c < As.cols(); ++c) As.col(c) *= p.scale[c];
    EqProjector proj;
    proj.init(As);
    proj.restore(As, p.b, y);
}

}  // namespace detail

// Strict-interior check used to validate warm starts.
inline bool strictly_feasible(const Program& p, const Vec& x, double margin = 1e-10) {
    auto [worst, name] = p.max_violation(x);
    (void)name;
    if (!(worst < -margin)) return false;
    if (p.A.rows() > 0) {
        const double r = (p.A * x - p.b).lpNorm<Eigen::Infinity>();
        const double s = 1.0 + p.b.lpNorm<Eigen::Infinity>();
        if (r > 1e-7 * s) return false;
    }
    return true;
}

// Phase-I: minimize the shared slack s with every inequality and finite box
// bound relaxed by s. Feasible iff the optimal slack is <= tol.
inline SolveResult solve_feasibility(const Program& p, double tol, const Vec* warm = nullptr,
                                     SolveOptions opts = SolveOptions{}) {
    SolveResult res;
    // Trivial acceptance: a warm point that is already comfortably interior.
    if (warm && warm->size() == p.n && strictly_feasible(p, *warm, 1e-8)) {
        res.status = SolveStatus::Feasible;
        res.x = *warm;
        auto [v, w] = p.max_violation(*warm);
        res.max_violation = v;
        res.worst_constraint = w;
        res.value = v;
        return res;
    }

    // Boxes stay native (the builders seed box-interior points); only the
    // smooth rows get the shared slack. Slacking the boxes as rows couples
    // every variable to s and lets the early centering balloon the iterate.
    Program lift;
    lift.init(p.n + 1);
    const int sidx = p.n;
    lift.lo.head(p.n) = p.lo;
    lift.hi.head(p.n) = p.hi;
    lift.scale.head(p.n) = p.scale;
    lift.scale[sidx] = 1.0;
    lift.obj_lin[sidx] = 1.0;
    for (const auto& t : p.ineq) lift.ineq.push_back(std::make_shared<SlackedTerm>(t, sidx));
    if (p.A.rows() > 0) {
        lift.A = Mat::Zero(p.A.rows(), p.n + 1);
        lift.A.leftCols(p.n) = p.A;
        lift.b = p.b;
    }

    // Start: warm point or suggested start clamped into the box interior,
    // projected onto the equalities; slack sits above the worst row.
    Vec x0 = (warm && warm->size() == p.n) ? *warm : p.x_init;
    auto clamp_interior = [&](double frac) {
        for (int i = 0; i < p.n; ++i) {
            if (std::isfinite(p.lo[i]) && std::isfinite(p.hi[i]))
                x0[i] = std::clamp(x0[i], p.lo[i] + frac * (p.hi[i] - p.lo[i]),
                                   p.hi[i] - frac * (p.hi[i] - p.lo[i]));
            else if (std::isfinite(p.lo[i]))
                x0[i] = std::max(x0[i], p.lo[i] + 1.0);
            else if (std::isfinite(p.hi[i]))
                x0[i] = std::min(x0[i], p.hi[i] - 1.0);
        }
    };
    clamp_interior(0.02);
    Vec ylift(p.n + 1);
    ylift.head(p.n) = x0.cwiseQuotient(p.scale);
    ylift[sidx] = 0.0;
    // Builder seeds satisfy the equalities exactly; re-project and nudge a
    // couple of times in case a warm start or the clamp drifted.
    for (int round = 0; round < 3; ++round) {
        detail::project_equalities(lift, ylift);
        x0 = p.scale.cwiseProduct(ylift.head(p.n));
        bool inside = true;
        for (int i = 0; i < p.n && inside; ++i) {
            if (std::isfinite(p.lo[i]) && x0[i] <= p.lo[i]) inside = false;
            if (std::isfinite(p.hi[i]) && x0[i] >= p.hi[i]) inside = false;
        }
        if (inside) break;
        clamp_interior(0.01 / (round + 1.0));
        ylift.head(p.n) = x0.cwiseQuotient(p.scale);
    }
    {
        auto [worst, name] = p.max_violation(x0);
        (void)name;
        // Box interiority is handled natively; cover only row violations.
        ylift[sidx] = std::max(worst, 0.0) + 1.0;
    }
    lift.lo[sidx] = -2.0 - std::abs(tol);
    lift.hi[sidx] = ylift[sidx] + 10.0;
    // Bail to a reported failure if the start is outside a box even after
    // nudging (the caller treats it as not-proven-feasible).
    for (int i = 0; i < p.n; ++i) {
        if ((std::isfinite(p.lo[i]) && x0[i] <= p.lo[i]) ||
            (std::isfinite(p.hi[i]) && x0[i] >= p.hi[i])) {
            res.status = SolveStatus::NumericalFailure;
            res.x = x0;
            auto [w, nm] = p.max_violation(x0);
            res.max_violation = w;
            res.worst_constraint = nm;
            return res;
        }
    }

    const double margin = std::max(opts.strict_margin, 0.0);
    auto early = [&](const Vec& yl) {
        const Vec x = lift.scale.cwiseProduct(yl);
        auto [worst, name] = p.max_violation(x.head(p.n));
        (void)name;
        return worst < -std::max(margin, 1e-7);
    };
    SolveOptions phase = opts;
    phase.tol = std::min(1e-8, 0.1 * std::max(tol, 1e-12) + 1e-12);
    // Let the slack objective dominate from the start; a mild-t first stage
    // balloons every narrow constraint's margin up to the slack level and
    // then has to claw it back.
    {
        int m_b = static_cast<int>(lift.ineq.size());
        for (int i = 0; i < lift.n; ++i) {
            if (std::isfinite(lift.lo[i])) ++m_b;
            if (std::isfinite(lift.hi[i])) ++m_b;
        }
        phase.t0 = std::max(opts.t0, m_b / std::max(0.25, std::abs(ylift[sidx])));
    }
    const SolveStatus st = detail::barrier_minimize(lift, phase, ylift, res.newton_steps, early);

    Vec xfin = lift.scale.cwiseProduct(ylift);
    res.x = xfin.head(p.n);
    Vec yfin = res.x.cwiseQuotient(p.scale);
    detail::project_equalities(p, yfin);
    res.x = p.scale.cwiseProduct(yfin);
    auto [worst, name] = p.max_violation(res.x);
    res.max_violation = worst;
    res.worst_constraint = name;
    res.value = worst;
    if (st == SolveStatus::NumericalFailure) {
        res.status = SolveStatus::NumericalFailure;
    } else if (worst <= tol) {
        res.status = SolveStatus::Feasible;
    } else if (st == SolveStatus::IterLimit) {
        res.status = SolveStatus::IterLimit;  // exhausted, not proven infeasible
    } else {
        res.status = SolveStatus::Infeasible;
    }
    return res;
}

// Phase-II barrier minimization. Needs a strictly feasible start (phase-I is
// run when the warm start is absent or invalid).
inline SolveResult solve_min(const Program& p, double tol, const Vec* warm = nullptr,
                             SolveOptions opts = SolveOptions{}) {
    SolveResult res;
    Vec x;
    if (warm && warm->size() == p.n && strictly_feasible(p, *warm)) {
        x = *warm;
    } else {
        SolveOptions fopts = opts;
        // Any strictly interior point will do; the first centering stage
        // re-centers hairline margins immediately.
        auto feas = solve_feasibility(p, -1e-13, warm, fopts);
        if (feas.status != SolveStatus::Feasible) {
            res.status = feas.status == SolveStatus::NumericalFailure
                             ? SolveStatus::NumericalFailure
                             : SolveStatus::Infeasible;
            res.x = feas.x;
            res.max_violation = feas.max_violation;
            res.worst_constraint = feas.worst_constraint;
            res.newton_steps = feas.newton_steps;
            return res;
        }
        res.newton_steps = feas.newton_steps;
        x = feas.x;
    }
    Vec y = x.cwiseQuotient(p.scale);
    detail::project_equalities(p, y);
    SolveOptions mopts = opts;
    mopts.tol = tol;
    const SolveStatus st = detail::barrier_minimize(p, mopts, y, res.newton_steps);
    res.x = p.scale.cwiseProduct(y);
    res.value = p.objective(res.x);
    auto [worst, name] = p.max_violation(res.x);
    res.max_violation = worst;
    res.worst_constraint = name;
    res.status = (st == SolveStatus::Optimal) ? SolveStatus::Optimal : st;
    return res;
}

// Central-difference gradient validation of a term at a local point.
inline double fd_gradient_error(const Term& term, const std::vector<double>& x_loc) {
    const int m = term.nloc();
    std::vector<double> g(m, 0.0), xp(x_loc), xm(x_loc);
    term.eval(x_loc.data(), g.data(), nullptr);
    double worst = 0.0;
    for (int i = 0; i < m; ++i) {
        const double h = 1e-6 * std::max(1.0, std::abs(x_loc[i]));
        xp = x_loc;
        xm = x_loc;
        xp[i] += h;
        xm[i] -= h;
        const double fp = term.eval(xp.data(), nullptr, nullptr);
        const double fm = term.eval(xm.data(), nullptr, nullptr);
        if (!std::isfinite(fp) || !std::isfinite(fm)) continue;
        const double fd = (fp - fm) / (2.0 * h);
        const double err = std::abs(fd - g[i]) / std::max({1.0, std::abs(fd), std::abs(g[i])});
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace uavopt::convex
