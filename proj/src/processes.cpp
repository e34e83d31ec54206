#include "robstop/processes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <set>

#include "robstop/errors.hpp"

namespace robstop {

namespace {

const std::set<std::string> kLeaf{"const", "time", "coord", "norm", "running_max",
                                  "running_min", "sup_dist", "dist_arc"};
const std::set<std::string> kNary{"add", "sub", "mul", "min", "max"};
const std::set<std::string> kUnary{"scale", "neg", "abs"};

constexpr double kInf = std::numeric_limits<double>::infinity();

double arc_distance(const Eigen::VectorXd& p, const nlohmann::json& prm) {
    const double r = prm.value("radius", 1.0);
    const double a0 = prm.value("theta0", 0.0);
    const double a1 = prm.value("theta1", 1.5 * std::numbers::pi);
    std::vector<double> c = prm.value("center", std::vector<double>{0.0, 0.0});
    Eigen::Vector2d q(p[0] - c[0], p[1] - c[1]);
    double rad = q.norm();
    if (rad == 0) return r;
    double phi = std::atan2(q[1], q[0]);
    while (phi < a0) phi += 2 * std::numbers::pi;
    while (phi >= a0 + 2 * std::numbers::pi) phi -= 2 * std::numbers::pi;
    if (phi <= a1) return std::abs(rad - r);
    Eigen::Vector2d e0(r * std::cos(a0), r * std::sin(a0)), e1(r * std::cos(a1), r * std::sin(a1));
    return std::min((q - e0).norm(), (q - e1).norm());
}

}  // namespace

Expr Expr::from_json(const nlohmann::json& j) {
    Expr e;
    e.kind_ = j.at("kind").get<std::string>();
    e.params_ = j.value("params", nlohmann::json::object());
    if (kNary.count(e.kind_)) {
        for (const auto& a : e.params_.at("args")) e.args_.push_back(from_json(a));
        if (e.args_.empty()) throw ConfigError(e.kind_ + " needs arguments");
        e.params_.erase("args");
    } else if (kUnary.count(e.kind_)) {
        e.args_.push_back(from_json(e.params_.at("arg")));
        e.params_.erase("arg");
    } else if (!kLeaf.count(e.kind_)) {
        throw ConfigError("unknown expression kind '" + e.kind_ + "'");
    }
    return e;
}

nlohmann::json Expr::to_json() const {
    nlohmann::json p = params_;
    if (kNary.count(kind_)) {
        p["args"] = nlohmann::json::array();
        for (const auto& a : args_) p["args"].push_back(a.to_json());
    } else if (kUnary.count(kind_)) {
        p["arg"] = args_[0].to_json();
    }
    return {{"kind", kind_}, {"params", p}};
}

Expr Expr::constant(double v) {
    Expr e;
    e.params_ = {{"value", v}};
    return e;
}

Expr Expr::coord(int i) {
    Expr e;
    e.kind_ = "coord";
    e.params_ = {{"i", i}};
    return e;
}

Expr Expr::op(const std::string& kind, std::vector<Expr> args) {
    Expr e;
    e.kind_ = kind;
    e.args_ = std::move(args);
    return e;
}

Expr Expr::scaled(double f, Expr a) {
    Expr e;
    e.kind_ = "scale";
    e.params_ = {{"factor", f}};
    e.args_.push_back(std::move(a));
    return e;
}

double Expr::eval(const Eigen::MatrixXd& path, const TimeGrid& grid) const {
    const int i = static_cast<int>(path.cols()) - 1;
    const auto& k = kind_;
    if (k == "const") return params_.value("value", 0.0);
    if (k == "time") return grid.time(i);
    if (k == "coord") return path(params_.value("i", 0), i);
    if (k == "norm") return path.col(i).norm();
    if (k == "running_max") return path.row(params_.value("i", 0)).maxCoeff();
    if (k == "running_min") return path.row(params_.value("i", 0)).minCoeff();
    if (k == "sup_dist") {
        const auto& ref = params_.at("ref");
        double m = 0;
        for (int s = 0; s <= i; ++s) {
            const auto& pt = ref.at(std::min<std::size_t>(s, ref.size() - 1));
            Eigen::VectorXd r(path.rows());
            for (int q = 0; q < path.rows(); ++q) r[q] = pt.is_array() ? pt.at(q).get<double>() : pt.get<double>();
            m = std::max(m, (path.col(s) - r).norm());
        }
        return m;
    }
    if (k == "dist_arc") return arc_distance(path.col(i), params_);
    if (k == "scale") return params_.value("factor", 1.0) * args_[0].eval(path, grid);
    if (k == "neg") return -args_[0].eval(path, grid);
    if (k == "abs") return std::abs(args_[0].eval(path, grid));
    double acc = args_[0].eval(path, grid);
    for (std::size_t a = 1; a < args_.size(); ++a) {
        double v = args_[a].eval(path, grid);
        if (k == "add") acc += v;
        else if (k == "sub") acc -= v;
        else if (k == "mul") acc *= v;
        else if (k == "min") acc = std::min(acc, v);
        else acc = std::max(acc, v);
    }
    return acc;
}

double Expr::lipschitz() const {
    const auto& k = kind_;
    if (k == "const") return 0;
    if (kLeaf.count(k)) return 1;
    if (k == "scale") return std::abs(params_.value("factor", 1.0)) * args_[0].lipschitz();
    if (k == "neg" || k == "abs") return args_[0].lipschitz();
    double L = 0;
    if (k == "add" || k == "sub") {
        for (const auto& a : args_) L += a.lipschitz();
        return L;
    }
    if (k == "min" || k == "max") {
        for (const auto& a : args_) L = std::max(L, a.lipschitz());
        return L;
    }
    // products: only when all but one factor are constants
    double factor = 1;
    int varying = 0;
    for (const auto& a : args_) {
        if (a.kind_ == "const") factor *= std::abs(a.params_.value("value", 0.0));
        else ++varying, L = a.lipschitz();
    }
    if (varying == 0) return 0;
    return varying == 1 ? factor * L : kInf;
}

Field evaluate(const TreeModel& tree, const Expr& e) {
    Field f(tree.size());
    for (NodeId n = 0; n < tree.size(); ++n) f[n] = e.eval(tree.path(n), tree.grid());
    return f;
}

void PayoffSpec::validate(const TreeModel& tree) const {
    auto f = evaluate(tree, *this);
    for (NodeId n = 0; n < tree.size(); ++n) {
        std::string at = " at node " + std::to_string(n);
        if (std::abs(f.L[n]) > M0 + 1e-12 || std::abs(f.U[n]) > M0 + 1e-12)
            throw ConfigError("payoff exceeds M0" + at);
        if (!tree.terminal(n) && f.L[n] > f.U[n]) throw ConfigError("L > U" + at);
        if (tree.terminal(n) && f.L[n] != f.U[n]) throw ConfigError("L_T != U_T" + at);
    }
}

nlohmann::json PayoffSpec::to_json() const {
    return {{"L", L.to_json()},     {"U", U.to_json()}, {"M0", M0},
            {"modulus", rho0.to_json()}, {"terminal_from_U", terminal_from_U}};
}

PayoffSpec PayoffSpec::from_json(const nlohmann::json& j) {
    PayoffSpec p;
    p.L = Expr::from_json(j.at("L"));
    p.U = j.contains("U") ? Expr::from_json(j.at("U")) : p.L;
    p.M0 = j.at("M0").get<double>();
    if (j.contains("modulus")) {
        p.rho0 = Modulus::from_json(j.at("modulus"));
    } else {
        double lip = std::max(p.L.lipschitz(), p.U.lipschitz());
        if (!std::isfinite(lip)) throw ConfigError("payoff modulus not derivable; give 'modulus'");
        p.rho0 = Modulus{std::max(lip, 1e-12), 1, 1};
    }
    p.terminal_from_U = j.value("terminal_from_U", false);
    if (!(p.M0 > 0)) throw ConfigError("M0 must be positive");
    return p;
}

nlohmann::json IndexSpec::to_json() const { return {{"X", X.to_json()}, {"modulus", rho_x.to_json()}}; }

IndexSpec IndexSpec::from_json(const nlohmann::json& j) {
    if (j.contains("builtin")) {
        auto b = j.at("builtin").get<std::string>();
        if (b == "eg_rm_wedge") return eg_rm_wedge();
        if (b == "eg_rm_arc") return eg_rm_arc();
        throw ConfigError("unknown builtin index '" + b + "'");
    }
    IndexSpec s;
    s.X = Expr::from_json(j.at("X"));
    if (j.contains("modulus")) {
        s.rho_x = Modulus::from_json(j.at("modulus"));
    } else {
        double lip = s.X.lipschitz();
        if (!std::isfinite(lip)) throw ConfigError("index modulus not derivable; give 'modulus'");
        s.rho_x = Modulus{std::max(lip, 1e-12), 1, 1};
    }
    return s;
}

IndexSpec eg_rm_wedge() {
    IndexSpec s;
    s.X = Expr::op("add", {Expr::constant(1), Expr::coord(1), Expr::op("abs", {Expr::coord(0)})});
    s.rho_x = Modulus{2, 1, 1};
    return s;
}

IndexSpec eg_rm_arc() {
    Expr arc;
    arc = Expr::from_json({{"kind", "dist_arc"},
                           {"params",
                            {{"radius", 1.0},
                             {"theta0", 0.0},
                             {"theta1", 1.5 * std::numbers::pi},
                             {"center", {0.0, -1.0}}}}});
    IndexSpec s;
    s.X = Expr::op("sub", {Expr::constant(0.5), arc});
    s.rho_x = Modulus{1, 1, 1};
    return s;
}

PayoffFields evaluate(const TreeModel& tree, const PayoffSpec& p) {
    PayoffFields f{evaluate(tree, p.L), evaluate(tree, p.U)};
    if (p.terminal_from_U)
        for (NodeId n = tree.level_begin(tree.steps()); n < tree.size(); ++n) f.L[n] = f.U[n];
    return f;
}

double metric_dinf(const TimeGrid& grid, int t1, const Eigen::MatrixXd& w1, int t2,
                   const Eigen::MatrixXd& w2) {
    double m = 0;
    for (int r = 0; r <= std::max(t1, t2); ++r)
        m = std::max(m, (w1.col(std::min(r, t1)) - w2.col(std::min(r, t2))).norm());
    return std::abs(t1 - t2) * grid.dt() + m;
}

double path_modulus(const TimeGrid& grid, const Eigen::MatrixXd& w, int t, double x) {
    const int g = window_steps(grid, x);
    double m = 0;
    for (int r = 0; r <= t; ++r)
        for (int q = r + 1; q <= std::min(t, r + g); ++q) m = std::max(m, (w.col(q) - w.col(r)).norm());
    return m;
}

StoppingTime tau0(const TreeModel& tree, const Field& X) { return StoppingTime::hitting(tree, X, 0.0); }

double tau_n_level(double X0, int n) { return 1.0 / (ceil_log2(n + 2) + std::floor(1 / X0) - 1); }

StoppingTime tau_n(const TreeModel& tree, const Field& X, int n) {
    return StoppingTime::hitting(tree, X, tau_n_level(X[0], n));
}

double at_floor(const TreeModel& tree, const Field& F, NodeId n, double s) {
    int i = tree.step(n);
    int q = std::min(i, static_cast<int>(std::floor(s + 1e-9)));
    return F[tree.ancestor(n, q)];
}

Field script_Y(const TreeModel& tree, const Field& L, const Field& U, const StoppingTime& t0) {
    Field y(tree.size());
    for (NodeId n = 0; n < tree.size(); ++n) y[n] = t0.reached(n) ? U[n] : L[n];
    return y;
}

Field script_Y_stopped(const TreeModel& tree, const Field& L, const Field& U, const StoppingTime& t0) {
    Field y(tree.size());
    for (NodeId n = 0; n < tree.size(); ++n) y[n] = t0.reached(n) ? U[t0.stop_node(n)] : L[n];
    return y;
}

double blend_weight(double dt, int since, int k) {
    return std::clamp(std::ldexp(since * dt, k) - 1, 0.0, 1.0);
}

namespace {

double blend(double l, double u, double w) {
    if (w <= 0) return l;
    if (w >= 1) return u;
    return l + w * (u - l);
}

}  // namespace

Field Y_nk(const TreeModel& tree, const Field& L, const Field& U, const StoppingTime& wp, int k) {
    const double dt = tree.grid().dt();
    Field y(tree.size());
    for (NodeId n = 0; n < tree.size(); ++n)
        y[n] = wp.reached(n) ? blend(L[n], U[n], blend_weight(dt, tree.step(n) - wp.time_at(n), k)) : L[n];
    return y;
}

Field hat_Y_nk(const TreeModel& tree, const Field& L, const Field& U, const StoppingTime& wp, int k) {
    const double dt = tree.grid().dt();
    const double window = std::ldexp(1.0, 1 - k) / dt;  // 2^{1-k} in steps
    Field y = Y_nk(tree, L, U, wp, k);
    for (NodeId n = 0; n < tree.size(); ++n) {
        if (!wp.reached(n)) continue;
        const int p = wp.time_at(n);
        if (std::ldexp((tree.step(n) - p) * dt, k) > 2) y[n] = at_floor(tree, U, n, p + window);
    }
    return y;
}

Field script_Y_n(const TreeModel& tree, const Field& L, const Field& U, const StoppingTime& wp) {
    Field y(tree.size());
    for (NodeId n = 0; n < tree.size(); ++n)
        y[n] = wp.reached(n) && wp.time_at(n) < tree.step(n) ? U[wp.stop_node(n)] : L[n];
    return y;
}

nlohmann::json ContinuityReport::to_json() const {
    return {{"max_violation", max_violation}, {"worst_pair", {worst_a, worst_b}},
            {"pairs", pairs}, {"exhaustive", exhaustive}, {"pass", pass()}};
}

namespace {

template <class F>
void for_node_pairs(const TreeModel& tree, long long budget, unsigned long long seed, bool& exhaustive,
                    F&& f) {
    const long long S = tree.size();
    exhaustive = S * (S - 1) / 2 <= budget;
    if (exhaustive) {
        for (NodeId a = 0; a < S; ++a)
            for (NodeId b = a + 1; b < S; ++b) f(a, b);
        return;
    }
    std::mt19937_64 rng(seed);
    for (long long s = 0; s < budget; ++s) {
        NodeId a = static_cast<NodeId>(rng() % S), b = static_cast<NodeId>(rng() % S);
        if (a != b) f(a, b);
    }
}

}  // namespace

ContinuityReport verify_uniform_continuity(const TreeModel& tree, const Field& X, const Modulus& rho,
                                           long long budget, unsigned long long seed) {
    ContinuityReport r;
    std::vector<Eigen::MatrixXd> paths;
    paths.reserve(tree.size());
    for (NodeId n = 0; n < tree.size(); ++n) paths.push_back(tree.path(n));
    for_node_pairs(tree, budget, seed, r.exhaustive, [&](NodeId a, NodeId b) {
        ++r.pairs;
        double d = metric_dinf(tree.grid(), tree.step(a), paths[a], tree.step(b), paths[b]);
        double v = std::abs(X[a] - X[b]) - rho(d);
        if (v > r.max_violation) r.max_violation = v, r.worst_a = a, r.worst_b = b;
    });
    return r;
}

double fit_modulus_constant(const TreeModel& tree, const std::vector<Field>& fields, double p1, double p2) {
    std::vector<Eigen::MatrixXd> paths;
    for (NodeId n = 0; n < tree.size(); ++n) paths.push_back(tree.path(n));
    double c = 0;
    bool exhaustive = true;
    for_node_pairs(tree, std::numeric_limits<long long>::max(), 0, exhaustive, [&](NodeId a, NodeId b) {
        double d = metric_dinf(tree.grid(), tree.step(a), paths[a], tree.step(b), paths[b]);
        double shape = std::max(std::pow(d, p1), std::pow(d, p2));
        for (const auto& f : fields) {
            double diff = std::abs(f[a] - f[b]);
            if (diff > 0) c = std::max(c, shape > 0 ? diff / shape : kInf);
        }
    });
    // one ulp of headroom so the fitted modulus passes its own check
    return c * (1 + 1e-12);
}

}  // namespace robstop
