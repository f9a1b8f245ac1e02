#include "quasilin/conductivity.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>

namespace quasilin {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Phi node grid: t_k = 2^(k/4) for k in [kNodeMin, kNodeMax].
constexpr int kNodeMin = -120;
constexpr int kNodeMax = 160;

std::atomic<std::uint64_t> g_next_id{1};

std::string fmt(const char* pattern, double a, double b = 0.0) {
    char buf[128];
    std::snprintf(buf, sizeof buf, pattern, a, b);
    return buf;
}

double rel_excess(double lhs, double rhs) {
    if (!(lhs > rhs)) return 0.0;
    double scale = std::max({std::abs(lhs), std::abs(rhs), 1e-300});
    return (lhs - rhs) / scale;
}

double node_t(int k) { return std::exp2(k / 4.0); }

double simpson_step(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
                    double whole, double tol, int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m);
    double rm = 0.5 * (m + b);
    if (!(a < m && m < b)) throw NumericalError("adaptive quadrature: interval underflow");
    double flm = f(lm);
    double frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    double delta = left + right - whole;
    if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    if (depth <= 0) throw NumericalError("adaptive quadrature did not converge");
    return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double inf_on(const Conductivity& psi, double lo, double hi) {
    double best = std::min(psi(lo), psi(hi));
    constexpr int n = 32;
    for (int i = 1; i < n; ++i) best = std::min(best, psi(lo + (hi - lo) * i / n));
    for (double k : psi.kinks())
        if (k > lo && k < hi) best = std::min(best, psi(k));
    return best;
}

bool near_kink(std::span<const double> kinks, double t) {
    for (double k : kinks)
        if (std::abs(t - k) <= 1e-9 * std::max(1.0, k)) return true;
    return false;
}

}  // namespace

struct Conductivity::Impl {
    PsiKind kind = PsiKind::custom;
    std::string name;
    PsiMeta meta;
    std::vector<double> kinks;
    std::uint64_t id = 0;
    std::function<double(double)> eval;
    std::function<double(double)> deriv;
    std::function<double(double)> phi;  // empty: quadrature over eval
    bool closed = true;
    bool tail_const = false;  // Psi constant for large t (some truncation in the chain)

    mutable std::mutex mu;
    mutable std::vector<double> nodes;  // Phi(t_k), k = kNodeMin + i

    double quadrature_phi(double t) const;
};

namespace {

using ImplPtr = std::shared_ptr<Conductivity::Impl>;

ImplPtr new_impl(PsiKind kind, std::string name) {
    auto impl = std::make_shared<Conductivity::Impl>();
    impl->kind = kind;
    impl->name = std::move(name);
    impl->id = g_next_id.fetch_add(1);
    return impl;
}

double integrand_sPsi(const Conductivity::Impl& impl, double s) { return s > 0.0 ? s * impl.eval(s) : 0.0; }

// int_0^a s Psi(s) ds through s = a x^2, which tames the s^(1+lambda) behaviour at 0.
double head_integral(const Conductivity::Impl& impl, double a) {
    auto f = [&](double x) {
        double s = a * x * x;
        return 2.0 * a * x * integrand_sPsi(impl, s);
    };
    return adaptive_simpson(f, 0.0, 1.0, 1e-13);
}

double segment_integral(const Conductivity::Impl& impl, double a, double b) {
    auto f = [&](double s) { return integrand_sPsi(impl, s); };
    double rough = 0.5 * (b - a) * (f(a) + f(b));
    return adaptive_simpson(f, a, b, std::max(1e-13, 1e-15 * std::abs(rough)));
}

struct Hull {
    double lo = kInf;
    double hi = -kInf;
};

Hull sampled_ratio(const Conductivity::Impl& impl, int points = 2000) {
    Hull h;
    for (double t : log_grid(1e-4, 1e4, points)) {
        if (near_kink(impl.kinks, t)) continue;
        double r = t * impl.deriv(t) / impl.eval(t);
        h.lo = std::min(h.lo, r);
        h.hi = std::max(h.hi, r);
    }
    return h;
}

// nu such that Psi(t)/nu <= t^(p-2) <= nu Psi(t) for sampled t >= 1.
double sampled_nu(const Conductivity::Impl& impl, double p, double hi = 1e4) {
    double nu = 1.0;
    auto grid = log_grid(1.0, std::max(hi, 2.0), 400);
    for (double k : impl.kinks)
        if (k >= 1.0) grid.push_back(k);
    for (double t : grid) {
        double ratio = impl.eval(t) / std::pow(t, p - 2.0);
        nu = std::max({nu, ratio, 1.0 / ratio});
    }
    return nu * (1.0 + 1e-12);
}

std::optional<double> sampled_c(const Conductivity::Impl& impl, double hi) {
    double lo_v = impl.eval(0.0);
    double hi_v = lo_v;
    if (!std::isfinite(lo_v)) return std::nullopt;
    for (double t : log_grid(1e-8, std::max(hi, 1.0) * 10.0, 400)) {
        double v = impl.eval(t);
        lo_v = std::min(lo_v, v);
        hi_v = std::max(hi_v, v);
    }
    for (double k : impl.kinks) {
        double v = impl.eval(k);
        lo_v = std::min(lo_v, v);
        hi_v = std::max(hi_v, v);
    }
    if (!(lo_v > 0.0) || !std::isfinite(hi_v)) return std::nullopt;
    return std::min({1.0, lo_v, 1.0 / hi_v});
}

void require_elliptic(const Conductivity::Impl& impl) {
    if (impl.meta.lambda <= -1.0 + 1e-6)
        throw InvalidArgument(impl.name + ": sampled ellipticity lower bound " + fmt("%.17g", impl.meta.lambda) +
                              " is not > -1");
}

Conductivity finish(ImplPtr impl) { return Conductivity(std::move(impl)); }

}  // namespace

double Conductivity::Impl::quadrature_phi(double t) const {
    if (!(t > 0.0)) return 0.0;
    double t0 = node_t(kNodeMin);
    if (t <= t0) return head_integral(*this, t);
    int k = static_cast<int>(std::floor(4.0 * std::log2(t)));
    k = std::clamp(k, kNodeMin, kNodeMax);
    while (k > kNodeMin && node_t(k) > t) --k;
    double base;
    {
        std::lock_guard<std::mutex> lock(mu);
        std::size_t need = static_cast<std::size_t>(k - kNodeMin) + 1;
        if (nodes.empty()) nodes.push_back(head_integral(*this, t0));
        while (nodes.size() < need) {
            int j = kNodeMin + static_cast<int>(nodes.size());
            nodes.push_back(nodes.back() + segment_integral(*this, node_t(j - 1), node_t(j)));
        }
        base = nodes[need - 1];
    }
    double tk = node_t(k);
    return t > tk ? base + segment_integral(*this, tk, t) : base;
}

std::string to_string(PsiKind kind) {
    switch (kind) {
    case PsiKind::p_power: return "p_power";
    case PsiKind::p_delta: return "p_delta";
    case PsiKind::minimal_surface: return "minimal_surface";
    case PsiKind::truncated: return "truncated";
    case PsiKind::regularized: return "regularized";
    case PsiKind::min_composite: return "min_composite";
    case PsiKind::max_composite: return "max_composite";
    case PsiKind::custom: return "custom";
    }
    return "custom";
}

double Conductivity::operator()(double t) const { return impl_->eval(t); }
double Conductivity::derivative(double t) const { return impl_->deriv(t); }

double Conductivity::phi(double t) const {
    if (!(t > 0.0)) return 0.0;
    return impl_->phi ? impl_->phi(t) : impl_->quadrature_phi(t);
}

bool Conductivity::phi_closed_form() const { return impl_->closed; }
const PsiMeta& Conductivity::meta() const { return impl_->meta; }
PsiKind Conductivity::kind() const { return impl_->kind; }
const std::string& Conductivity::name() const { return impl_->name; }
std::span<const double> Conductivity::kinks() const { return impl_->kinks; }
std::uint64_t Conductivity::id() const { return impl_->id; }
bool Conductivity::singular_at_zero() const { return !std::isfinite(impl_->eval(0.0)); }

// ---------------------------------------------------------------------------
// Builtins

Conductivity p_power(double p) {
    if (!(p > 1.0) || !std::isfinite(p)) throw InvalidArgument("p_power: p must be > 1, got " + fmt("%g", p));
    auto impl = new_impl(PsiKind::p_power, fmt("p_power(p=%g)", p));
    impl->eval = [p](double t) { return p == 2.0 ? 1.0 : std::pow(t, p - 2.0); };
    impl->deriv = [p](double t) { return p == 2.0 ? 0.0 : (p - 2.0) * std::pow(t, p - 3.0); };
    impl->phi = [p](double t) { return std::pow(t, p) / p; };
    impl->meta.lambda = p - 2.0;
    impl->meta.Lambda = p - 2.0;
    impl->meta.p = p;
    impl->meta.nu = 1.0;
    if (p == 2.0) {
        impl->meta.c = 1.0;
        impl->tail_const = true;
    }
    return finish(impl);
}

Conductivity p_delta(double p, double delta) {
    if (!(p > 1.0) || !std::isfinite(p)) throw InvalidArgument("p_delta: p must be > 1, got " + fmt("%g", p));
    if (!(delta > 0.0)) throw InvalidArgument("p_delta: delta must be > 0, got " + fmt("%g", delta));
    auto impl = new_impl(PsiKind::p_delta, fmt("p_delta(p=%g,delta=%g)", p, delta));
    double e = 0.5 * (p - 2.0);
    impl->eval = [e, delta](double t) { return std::pow(t * t + delta, e); };
    impl->deriv = [e, delta](double t) { return 2.0 * e * t * std::pow(t * t + delta, e - 1.0); };
    impl->phi = [p, delta](double t) { return (std::pow(t * t + delta, 0.5 * p) - std::pow(delta, 0.5 * p)) / p; };
    // t Psi'/Psi = (p-2) t^2/(t^2+delta) sweeps the whole segment between 0 and p-2
    impl->meta.lambda = std::min(p - 2.0, 0.0);
    impl->meta.Lambda = std::max(p - 2.0, 0.0);
    impl->meta.p = p;
    impl->meta.nu = std::pow(1.0 + delta, std::abs(e));
    if (p == 2.0) {
        impl->meta.c = 1.0;
        impl->tail_const = true;
    }
    return finish(impl);
}

Conductivity minimal_surface() {
    auto impl = new_impl(PsiKind::minimal_surface, "minimal_surface");
    impl->eval = [](double t) { return 1.0 / std::sqrt(t * t + 1.0); };
    impl->deriv = [](double t) { return -t * std::pow(t * t + 1.0, -1.5); };
    impl->phi = [](double t) { return t * t / (std::sqrt(t * t + 1.0) + 1.0); };  // sqrt(t^2+1) - 1 without cancellation
    impl->meta.Lambda = 0.0;
    impl->meta.lambda = sampled_ratio(*impl).lo;
    impl->meta.lambda_sampled = true;
    impl->meta.p = 1.0;
    impl->meta.nu = std::sqrt(2.0);
    return finish(impl);
}

namespace {

std::vector<double> crossings(const Conductivity& a, const Conductivity& b) {
    std::vector<double> out;
    auto diff = [&](double t) { return a(t) - b(t); };
    auto grid = log_grid(1e-8, 1e8, 801);
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        double d0 = diff(grid[i]);
        double d1 = diff(grid[i + 1]);
        if (d0 == 0.0) {
            if (out.empty() || out.back() != grid[i]) out.push_back(grid[i]);
            continue;
        }
        if ((d0 < 0.0) == (d1 < 0.0) || d1 == 0.0) continue;
        double lo = std::log(grid[i]);
        double hi = std::log(grid[i + 1]);
        for (int it = 0; it < 80; ++it) {
            double mid = 0.5 * (lo + hi);
            if ((diff(std::exp(mid)) < 0.0) == (d0 < 0.0))
                lo = mid;
            else
                hi = mid;
        }
        out.push_back(std::exp(0.5 * (lo + hi)));
    }
    return out;
}

Conductivity composite(const Conductivity& a, const Conductivity& b, bool take_min) {
    PsiKind kind = take_min ? PsiKind::min_composite : PsiKind::max_composite;
    auto impl = new_impl(kind, std::string(take_min ? "min(" : "max(") + a.name() + "," + b.name() + ")");
    auto pick_a = [a, b, take_min](double t) {
        double va = a(t);
        double vb = b(t);
        return take_min ? va <= vb : va >= vb;
    };
    impl->eval = [a, b, pick_a](double t) { return pick_a(t) ? a(t) : b(t); };
    impl->deriv = [a, b, pick_a](double t) { return pick_a(t) ? a.derivative(t) : b.derivative(t); };

    std::vector<double> cuts = crossings(a, b);
    impl->kinks = cuts;
    for (double k : a.kinks()) impl->kinks.push_back(k);
    for (double k : b.kinks()) impl->kinks.push_back(k);
    std::sort(impl->kinks.begin(), impl->kinks.end());
    impl->kinks.erase(std::unique(impl->kinks.begin(), impl->kinks.end()), impl->kinks.end());

    // Between consecutive crossings one component is active, so Phi is a sum of
    // component Phi increments.
    impl->closed = a.phi_closed_form() && b.phi_closed_form();
    impl->phi = [a, b, pick_a, cuts](double t) {
        double total = 0.0;
        double left = 0.0;
        for (std::size_t i = 0; i <= cuts.size() && left < t; ++i) {
            double right = i < cuts.size() ? std::min(cuts[i], t) : t;
            if (right > left) {
                double mid = left > 0.0 ? std::sqrt(left * right) : 0.5 * right;
                const Conductivity& c = pick_a(mid) ? a : b;
                total += c.phi(right) - c.phi(left);
            }
            left = right;
        }
        return total;
    };

    const PsiMeta& ma = a.meta();
    const PsiMeta& mb = b.meta();
    impl->meta.lambda = std::min(ma.lambda, mb.lambda);
    impl->meta.Lambda = std::max(ma.Lambda, mb.Lambda);
    impl->meta.lambda_sampled = ma.lambda_sampled || mb.lambda_sampled;
    // for t >= 1 the minimum follows the slower-growing component
    impl->meta.p = take_min ? std::min(ma.p, mb.p) : std::max(ma.p, mb.p);
    impl->meta.nu = std::max(ma.nu, mb.nu);
    if (ma.c && mb.c) impl->meta.c = std::min(*ma.c, *mb.c);
    impl->tail_const = false;
    return finish(impl);
}

}  // namespace

Conductivity min_of(const Conductivity& a, const Conductivity& b) { return composite(a, b, true); }
Conductivity max_of(const Conductivity& a, const Conductivity& b) { return composite(a, b, false); }

Conductivity custom(std::string name, std::function<double(double)> psi, std::vector<double> kinks,
                    std::optional<double> p) {
    if (!psi) throw InvalidArgument("custom conductivity: empty function");
    auto impl = new_impl(PsiKind::custom, std::move(name));
    impl->eval = psi;
    impl->deriv = [psi](double t) {
        double h = std::max(1e-7, 1e-7 * t);
        if (t - h <= 0.0) return (psi(t + h) - psi(t)) / h;
        return (psi(t + h) - psi(t - h)) / (2.0 * h);
    };
    std::sort(kinks.begin(), kinks.end());
    impl->kinks = std::move(kinks);
    impl->closed = false;
    for (double t : log_grid(1e-4, 1e4, 200)) {
        double v = psi(t);
        if (!(v > 0.0) || !std::isfinite(v))
            throw InvalidArgument(impl->name + ": Psi must be positive and finite, fails at t=" + fmt("%g", t));
    }
    Hull h = sampled_ratio(*impl);
    impl->meta.lambda = h.lo;
    impl->meta.Lambda = h.hi;
    impl->meta.lambda_sampled = true;
    impl->meta.p = p ? *p : 2.0 + std::log(psi(1e4) / psi(1e3)) / std::log(10.0);
    if (!(impl->meta.p > 1.0)) throw InvalidArgument(impl->name + ": growth exponent must be > 1");
    impl->meta.nu = sampled_nu(*impl, impl->meta.p);
    require_elliptic(*impl);
    return finish(impl);
}

namespace {

struct MonotoneCubic {
    std::vector<double> t, y, m;

    MonotoneCubic(std::vector<double> tt, std::vector<double> yy) : t(std::move(tt)), y(std::move(yy)) {
        std::size_t n = t.size();
        m.assign(n, 0.0);
        std::vector<double> d(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i) d[i] = (y[i + 1] - y[i]) / (t[i + 1] - t[i]);
        m[0] = d[0];
        m[n - 1] = d[n - 2];
        for (std::size_t i = 1; i + 1 < n; ++i) m[i] = d[i - 1] * d[i] <= 0.0 ? 0.0 : 0.5 * (d[i - 1] + d[i]);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            if (d[i] == 0.0) {
                m[i] = m[i + 1] = 0.0;
                continue;
            }
            double a = m[i] / d[i];
            double b = m[i + 1] / d[i];
            double s = a * a + b * b;
            if (s > 9.0) {
                double tau = 3.0 / std::sqrt(s);
                m[i] = tau * a * d[i];
                m[i + 1] = tau * b * d[i];
            }
        }
    }

    std::size_t segment(double x) const {
        auto it = std::upper_bound(t.begin(), t.end(), x);
        std::size_t i = static_cast<std::size_t>(it - t.begin());
        return std::clamp<std::size_t>(i, 1, t.size() - 1) - 1;
    }

    double value(double x) const {
        if (x <= t.front()) return y.front();
        if (x >= t.back()) return y.back();
        std::size_t i = segment(x);
        double h = t[i + 1] - t[i];
        double s = (x - t[i]) / h;
        double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
        double h10 = s * (1 - s) * (1 - s);
        double h01 = s * s * (3 - 2 * s);
        double h11 = s * s * (s - 1);
        return h00 * y[i] + h10 * h * m[i] + h01 * y[i + 1] + h11 * h * m[i + 1];
    }

    double slope(double x) const {
        if (x <= t.front() || x >= t.back()) return 0.0;
        std::size_t i = segment(x);
        double h = t[i + 1] - t[i];
        double s = (x - t[i]) / h;
        double d00 = 6 * s * s - 6 * s;
        double d10 = 3 * s * s - 4 * s + 1;
        double d01 = -d00;
        double d11 = 3 * s * s - 2 * s;
        return (d00 * y[i] + d01 * y[i + 1]) / h + d10 * m[i] + d11 * m[i + 1];
    }
};

}  // namespace

Conductivity tabulated(std::vector<double> t, std::vector<double> psi, std::optional<double> p) {
    if (t.size() != psi.size() || t.size() < 2) throw InvalidArgument("tabulated conductivity: need >= 2 (t, Psi) pairs");
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!(psi[i] > 0.0) || !std::isfinite(psi[i])) throw InvalidArgument("tabulated conductivity: Psi must be positive");
        if (i > 0 && !(t[i] > t[i - 1])) throw InvalidArgument("tabulated conductivity: t must be strictly increasing");
    }
    if (t.front() < 0.0) throw InvalidArgument("tabulated conductivity: t must be >= 0");
    auto spline = std::make_shared<MonotoneCubic>(t, psi);
    auto impl = new_impl(PsiKind::custom, fmt("tabulated(%g points)", static_cast<double>(t.size())));
    impl->eval = [spline](double x) { return spline->value(x); };
    impl->deriv = [spline](double x) { return spline->slope(x); };
    impl->kinks = {t.front(), t.back()};
    impl->closed = false;
    impl->tail_const = true;
    Hull h = sampled_ratio(*impl);
    impl->meta.lambda = std::min(h.lo, 0.0);
    impl->meta.Lambda = std::max(h.hi, 0.0);
    impl->meta.lambda_sampled = true;
    impl->meta.p = p.value_or(2.0);
    impl->meta.nu = sampled_nu(*impl, impl->meta.p, std::max(1e4, t.back()));
    impl->meta.c = sampled_c(*impl, t.back());
    require_elliptic(*impl);
    return finish(impl);
}

Conductivity read_tabulated_csv(const std::string& path, std::optional<double> p) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open conductivity table '" + path + "'");
    std::vector<double> t, v;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        double a, b;
        if (!(ss >> a)) continue;  // blank line or header
        if (!(ss >> b)) throw InvalidArgument(path + ":" + std::to_string(lineno) + ": expected 't, Psi'");
        t.push_back(a);
        v.push_back(b);
    }
    return tabulated(std::move(t), std::move(v), p);
}

// ---------------------------------------------------------------------------
// Transforms

Conductivity truncate_M(const Conductivity& psi, double M) {
    if (!(M > 0.0)) throw InvalidArgument("truncate_M: M must be > 0, got " + fmt("%g", M));
    auto impl = new_impl(PsiKind::truncated, fmt("truncate(M=%g,", M) + psi.name() + ")");
    impl->eval = [psi, M](double t) { return psi(std::min(t, M)); };
    impl->deriv = [psi, M](double t) { return t < M ? psi.derivative(t) : 0.0; };
    impl->phi = [psi, M](double t) {
        if (t <= M) return psi.phi(t);
        return psi.phi(M) + 0.5 * psi(M) * (t - M) * (t + M);
    };
    impl->closed = psi.phi_closed_form();
    impl->tail_const = true;
    impl->kinks.push_back(M);
    for (double k : psi.kinks())
        if (k < M) impl->kinks.push_back(k);
    std::sort(impl->kinks.begin(), impl->kinks.end());

    const PsiMeta& base = psi.meta();
    if (psi.kind() == PsiKind::minimal_surface) {
        impl->meta.lambda = -M * M / (M * M + 1.0);
        impl->meta.Lambda = 0.0;
    } else if (base.lambda <= 0.0) {
        impl->meta.lambda = base.lambda;
        impl->meta.Lambda = std::max(base.Lambda, 0.0);
        impl->meta.lambda_sampled = base.lambda_sampled;
    } else {
        Hull h = sampled_ratio(*impl);
        impl->meta.lambda = h.lo;
        impl->meta.Lambda = h.hi;
        impl->meta.lambda_sampled = true;
        require_elliptic(*impl);
    }
    impl->meta.p = 2.0;
    impl->meta.nu = sampled_nu(*impl, 2.0, std::max(M, 1.0));
    impl->meta.c = sampled_c(*impl, M);
    return finish(impl);
}

Conductivity regularize_delta(const Conductivity& psi, double delta) {
    if (!(delta > 0.0)) throw InvalidArgument("regularize_delta: delta must be > 0, got " + fmt("%g", delta));
    auto impl = new_impl(PsiKind::regularized, fmt("regularize(delta=%g,", delta) + psi.name() + ")");
    impl->eval = [psi, delta](double t) { return psi(std::sqrt(t * t + delta)); };
    impl->deriv = [psi, delta](double t) {
        double r = std::sqrt(t * t + delta);
        return psi.derivative(r) * t / r;
    };
    // substitute r = sqrt(s^2 + delta): int_0^t s Psi(sqrt(s^2+delta)) ds = Phi(sqrt(t^2+delta)) - Phi(sqrt(delta))
    double r0 = std::sqrt(delta);
    double phi0 = psi.phi(r0);
    impl->phi = [psi, delta, phi0](double t) { return psi.phi(std::sqrt(t * t + delta)) - phi0; };
    impl->closed = psi.phi_closed_form();
    impl->tail_const = false;
    for (double k : psi.kinks())
        if (k * k > delta) impl->kinks.push_back(std::sqrt(k * k - delta));

    const PsiMeta& base = psi.meta();
    impl->meta.lambda = std::min(base.lambda, 0.0);
    impl->meta.Lambda = std::max(base.Lambda, 0.0);
    impl->meta.lambda_sampled = base.lambda_sampled;
    impl->meta.p = base.p;
    impl->meta.nu = base.nu * std::pow(1.0 + delta, 0.5 * std::abs(base.p - 2.0));
    if (base.c) {
        impl->meta.c = base.c;
    } else if (base.lambda >= 0.0 && psi(r0) > 0.0) {
        impl->meta.c = psi(r0);  // nondecreasing base: the infimum sits at t = 0
    } else if (psi.kind() == PsiKind::truncated || psi.kind() == PsiKind::regularized) {
        double hi = 1.0;
        for (double k : impl->kinks) hi = std::max(hi, k);
        impl->meta.c = sampled_c(*impl, hi);
    }
    return finish(impl);
}

PhiPotential phi_of(const Conductivity& psi) { return PhiPotential(psi); }

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol) {
    if (a == b) return 0.0;
    double fa = f(a);
    double fb = f(b);
    double fm = f(0.5 * (a + b));
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_step(f, a, b, fa, fm, fb, whole, tol, 50);
}

std::vector<double> log_grid(double lo, double hi, int points) {
    if (!(lo > 0.0) || !(hi > lo) || points < 2) throw InvalidArgument("log_grid: need 0 < lo < hi and >= 2 points");
    std::vector<double> out(static_cast<std::size_t>(points));
    double a = std::log(lo);
    double b = std::log(hi);
    for (int i = 0; i < points; ++i) out[static_cast<std::size_t>(i)] = std::exp(a + (b - a) * i / (points - 1));
    out.front() = lo;
    out.back() = hi;
    return out;
}

// ---------------------------------------------------------------------------
// Checkers

InvariantReport check_invariants(const Conductivity& psi, std::span<const double> grid) {
    InvariantReport r;
    const PsiMeta& m = psi.meta();
    for (double t : grid) {
        double v = psi(t);
        if (!(v > 0.0) || !std::isfinite(v)) {
            r.positivity += 1.0;
            continue;
        }
        if (!near_kink(psi.kinks(), t)) {
            double ratio = t * psi.derivative(t) / v;
            r.ellipticity = std::max({r.ellipticity, m.lambda - ratio, ratio - m.Lambda});
        }
        if (t >= 1.0) {
            double tp = std::pow(t, m.p - 2.0);
            r.growth = std::max({r.growth, rel_excess(tp / m.nu, v), rel_excess(v, m.nu * tp)});
        }
    }
    return r;
}

double PsiBasicReport::max_violation() const { return std::max({item_i, item_ii, item_iii}); }

PsiBasicReport check_psi_basic(const Conductivity& psi, std::span<const double> grid) {
    PsiBasicReport r;
    const double lam = psi.meta().lambda;
    const double Lam = psi.meta().Lambda;
    const double psi1 = psi(1.0);
    for (double t : grid) {
        double v = psi(t);
        double a = std::pow(t, Lam);
        double b = std::pow(t, lam);
        r.item_i = std::max({r.item_i, rel_excess(psi1 * std::min(a, b), v), rel_excess(v, psi1 * std::max(a, b))});
        for (double s : grid) {
            if (s > t) continue;
            r.item_ii = std::max(r.item_ii, rel_excess(v, std::pow(t / s, Lam) * psi(s)));
        }
        double q = std::sqrt(t * t + 1.0);
        r.item_iii = std::max(r.item_iii, rel_excess(q * psi(q), std::pow(2.0, Lam + 1.0) * (t * v + psi1)));
    }
    return r;
}

double phi_M(const Conductivity& psi, double M, double t) {
    if (!(t > 0.0)) return 0.0;
    if (t <= M) return psi.phi(t);
    return psi.phi(M) + 0.5 * psi(M) * (t - M) * (t + M);
}

double small_phi_M(const Conductivity& psi, double M, double t) {
    if (!(t > 0.0)) return 0.0;
    if (t <= M) return psi.phi(t);
    return psi.phi(M) + M * psi(M) * (t - M);
}

bool PhiMReport::passed(double tol) const {
    return convexity <= tol && coercive <= tol && upper <= tol && ordering <= tol && super_coercive <= tol &&
           limit <= tol && std::isfinite(admissible_C) && coercive_c > 0.0 && std::isfinite(upper_C);
}

namespace {

// Max relative violation of "f is nondecreasing and convex" over sorted samples.
double convexity_violation(std::span<const double> t, const std::vector<double>& v) {
    double worst = 0.0;
    double prev_slope = -kInf;
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
        worst = std::max(worst, rel_excess(v[i], v[i + 1]));
        double slope = (v[i + 1] - v[i]) / (t[i + 1] - t[i]);
        if (std::isfinite(prev_slope)) worst = std::max(worst, rel_excess(prev_slope, slope));
        prev_slope = slope;
    }
    return worst;
}

}  // namespace

PhiMReport check_phiM_properties(const Conductivity& psi, double M, std::span<const double> grid) {
    if (!(M >= 1.0)) throw InvalidArgument("check_phiM_properties: M must be >= 1");
    std::vector<double> t(grid.begin(), grid.end());
    std::sort(t.begin(), t.end());
    const PsiMeta& meta = psi.meta();
    const double p = meta.p;
    const double q_lo = std::min(2.0, p);
    const double q_hi = std::max(2.0, p);
    const double Lam_M = std::max(meta.Lambda, 0.0);

    PhiMReport r;
    r.M = M;
    std::vector<double> big(t.size()), small(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        big[i] = phi_M(psi, M, t[i]);
        small[i] = small_phi_M(psi, M, t[i]);
    }
    r.convexity = std::max(convexity_violation(t, big), convexity_violation(t, small));

    r.coercive_c = kInf;
    const double phi1 = psi.phi(1.0);
    for (std::size_t i = 0; i < t.size(); ++i) {
        double x = t[i];
        double F = big[i];
        r.admissible_C = std::max(r.admissible_C, F / (x * x + 1.0));
        double lower = std::pow(x, q_lo) - 1.0;
        r.coercive = std::max(r.coercive, rel_excess(lower / (2.0 * meta.nu), F));
        if (x > 1.0) r.coercive_c = std::min(r.coercive_c, F / lower);
        r.upper = std::max(r.upper, rel_excess(F, phi1 + meta.nu * std::pow(x, q_hi)));
        r.upper_C = std::max(r.upper_C, F / (std::pow(x, p) + x * x + 1.0));
        r.super_coercive =
            std::max(r.super_coercive, rel_excess(std::pow(2.0, -Lam_M) * 0.25 * x * x * psi(std::min(x, M)), F));
        r.ordering = std::max(r.ordering, rel_excess(small[i], F));
    }

    std::vector<double> chain;
    for (double m = 1.0; m < M; m *= 2.0) chain.push_back(m);
    chain.push_back(M);
    for (std::size_t i = 0; i < t.size(); ++i)
        for (std::size_t j = 0; j + 1 < chain.size(); ++j)
            r.ordering = std::max(r.ordering,
                                  rel_excess(small_phi_M(psi, chain[j], t[i]), small_phi_M(psi, chain[j + 1], t[i])));

    const double tmax = t.empty() ? 1.0 : t.back();
    for (double x : t) {
        double prev = 0.0;
        double full = psi.phi(x);
        for (double m = 1.0; m <= 2.0 * tmax; m *= 2.0) {
            double v = small_phi_M(psi, m, x);
            r.limit = std::max(r.limit, rel_excess(prev, v));
            r.limit = std::max(r.limit, rel_excess(v, full));
            if (m >= x) r.limit = std::max(r.limit, rel_excess(full, v));
            prev = v;
        }
    }
    return r;
}

namespace {

void require_nonpositive_lambda(const Conductivity& psi, const char* what) {
    if (psi.meta().lambda > 0.0)
        throw InvalidArgument(std::string(what) + ": requires lambda <= 0, " + psi.name() + " has lambda = " +
                              fmt("%g", psi.meta().lambda));
}

double t_psi(const Conductivity& psi, double t) { return t > 0.0 ? t * psi(t) : 0.0; }

}  // namespace

double convexity_gap(const Conductivity& psi, double s, double t) {
    require_nonpositive_lambda(psi, "convexity_gap");
    if (s == t) return 0.0;
    double lhs = (t_psi(psi, t) - t_psi(psi, s)) * (t - s);
    double rhs = 0.25 * (1.0 + psi.meta().lambda) * (t - s) * (t - s) * psi(0.5 * std::max(s, t));
    return lhs - rhs;
}

double bregman_gap(const Conductivity& psi, double S, double T) {
    require_nonpositive_lambda(psi, "bregman_gap");
    if (S == T) return 0.0;
    double top = std::max(S, T);
    double lhs = psi.phi(T) - psi.phi(S) - t_psi(psi, S) * (T - S);
    double rhs = (1.0 + psi.meta().lambda) / 9.0 * (S - T) * (S - T) * inf_on(psi, top / 3.0, top);
    return lhs - rhs;
}

double monotonicity_gap(const Conductivity& psi, const Eigen::VectorXd& v, const Eigen::VectorXd& w) {
    require_nonpositive_lambda(psi, "monotonicity_gap");
    if (v.size() != w.size()) throw InvalidArgument("monotonicity_gap: dimension mismatch");
    double nv = v.norm();
    double nw = w.norm();
    Eigen::VectorXd d = v - w;
    if (d.squaredNorm() == 0.0) return 0.0;
    Eigen::VectorXd fv = nv > 0.0 ? Eigen::VectorXd(psi(nv) * v) : Eigen::VectorXd::Zero(v.size());
    Eigen::VectorXd fw = nw > 0.0 ? Eigen::VectorXd(psi(nw) * w) : Eigen::VectorXd::Zero(w.size());
    double lhs = (fv - fw).dot(d);
    double rhs = 0.25 * (1.0 + psi.meta().lambda) * d.squaredNorm() * psi(0.5 * std::max(nv, nw));
    return lhs - rhs;
}

double vector_bregman_gap(const Conductivity& psi, const Eigen::VectorXd& v, const Eigen::VectorXd& w) {
    require_nonpositive_lambda(psi, "vector_bregman_gap");
    if (v.size() != w.size()) throw InvalidArgument("vector_bregman_gap: dimension mismatch");
    double nv = v.norm();
    double nw = w.norm();
    Eigen::VectorXd d = v - w;
    if (d.squaredNorm() == 0.0) return 0.0;
    double top = std::max(nv, nw);
    double lhs = psi.phi(nv) - psi.phi(nw) - (nw > 0.0 ? psi(nw) * w.dot(d) : 0.0);
    double rhs = (1.0 + psi.meta().lambda) / 36.0 * d.squaredNorm() * inf_on(psi, top / 3.0, top);
    return lhs - rhs;
}

double GapSuiteReport::worst() const { return std::min({convexity, bregman, monotonicity, vector_bregman}); }

GapSuiteReport gap_suite(const Conductivity& psi, std::size_t samples, std::uint64_t seed, double lo, double hi) {
    require_nonpositive_lambda(psi, "gap_suite");
    if (!(lo > 0.0 && hi > lo)) throw InvalidArgument("gap_suite: need 0 < lo < hi");
    std::mt19937_64 rng(seed);
    auto unit = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    const double llo = std::log(lo), lhi = std::log(hi);
    auto radius = [&] { return std::exp(llo + (lhi - llo) * unit()); };
    auto planar = [&] {
        const double r = radius(), a = 6.283185307179586 * unit();
        Eigen::VectorXd v(2);
        v << r * std::cos(a), r * std::sin(a);
        return v;
    };
    auto record = [](double& worst, double gap, double scale) {
        if (gap < 0.0) worst = std::min(worst, gap / std::max(scale, 1e-300));
    };
    GapSuiteReport rep;
    rep.samples = samples;
    for (std::size_t i = 0; i < samples; ++i) {
        const double s = radius(), t = radius();
        record(rep.convexity, convexity_gap(psi, s, t), (t_psi(psi, t) + t_psi(psi, s)) * std::abs(t - s));
        record(rep.bregman, bregman_gap(psi, s, t), psi.phi(t) + psi.phi(s) + t_psi(psi, s) * std::abs(t - s));
        const Eigen::VectorXd v = planar(), w = planar();
        const double d = (v - w).norm();
        record(rep.monotonicity, monotonicity_gap(psi, v, w), (t_psi(psi, v.norm()) + t_psi(psi, w.norm())) * d);
        record(rep.vector_bregman, vector_bregman_gap(psi, v, w),
               psi.phi(v.norm()) + psi.phi(w.norm()) + t_psi(psi, w.norm()) * d);
    }
    return rep;
}

PsiMEtaResult psi_M_eta(const Conductivity& psi, double M, const VertexFunction& eta, const VertexFunction& gradmod,
                        double substitute_delta) {
    if (!(M > 0.0)) throw InvalidArgument("psi_M_eta: M must be > 0");
    if (eta.size() != gradmod.size()) throw InvalidArgument("psi_M_eta: size mismatch");
    PsiMEtaResult out;
    out.values.resize(eta.size());
    for (Index x = 0; x < eta.size(); ++x) {
        if (!(eta[x] >= 0.0 && eta[x] <= 1.0)) throw InvalidArgument("psi_M_eta: eta must lie in [0, 1]");
        double arg = std::min(gradmod[x], M) * eta[x] * eta[x];
        double v = psi(arg);
        if (!std::isfinite(v)) {
            v = psi(std::min(std::sqrt(arg * arg + substitute_delta), M));
            out.substituted.push_back(x);
        }
        out.values[x] = v;
    }
    return out;
}

}  // namespace quasilin
