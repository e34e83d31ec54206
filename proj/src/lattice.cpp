#include "robstop/lattice.hpp"

#include <algorithm>
#include <cmath>

#include "robstop/errors.hpp"
#include "robstop/parallel.hpp"

namespace robstop {

void TimeGrid::validate() const {
    if (!(T > 0) || !std::isfinite(T)) throw BadGrid("horizon T must be positive");
    if (N < 1) throw BadGrid("need at least one step");
}

void ControlSet::validate() const {
    if (d < 1) throw BadControl("dimension must be positive");
    if (controls.empty()) throw BadControl("empty control set");
    if (!(ell > 0)) throw BadControl("ell must be positive");
    for (std::size_t c = 0; c < controls.size(); ++c) {
        const auto& u = controls[c];
        std::string tag = "control " + std::to_string(c);
        if (u.b.size() != d || u.sigma.size() != d) throw BadControl(tag + ": wrong dimension");
        if ((u.b.array().abs() > ell).any()) throw BadControl(tag + ": |b_j| exceeds ell");
        if ((u.sigma.array() <= 0).any()) throw BadControl(tag + ": sigma must be positive");
        if (u.sigma.squaredNorm() > 2 * ell * (1 + 1e-12))
            throw BadControl(tag + ": trace of sigma^2 exceeds 2 ell");
    }
}

TreeModel::TreeModel(TimeGrid grid, ControlSet controls, Eigen::MatrixXd increments,
                     std::vector<std::pair<int, int>> branches)
    : grid_(grid), controls_(std::move(controls)), inc_(std::move(increments)),
      branches_(std::move(branches)), K_(static_cast<int>(inc_.cols())) {
    const int N = grid_.N;
    powK_.assign(N + 1, 1);
    for (int i = 1; i <= N; ++i) powK_[i] = powK_[i - 1] * K_;
    begin_.assign(N + 2, 0);
    for (int i = 0; i <= N; ++i) begin_[i + 1] = begin_[i] + static_cast<NodeId>(powK_[i]);

    step_.resize(begin_[N + 1]);
    pos_.setZero(controls_.d, begin_[N + 1]);
    for (int i = 0; i <= N; ++i)
        std::fill(step_.begin() + begin_[i], step_.begin() + begin_[i + 1], i);
    for (int i = 1; i <= N; ++i)
        for (NodeId n = begin_[i]; n < begin_[i + 1]; ++n) {
            NodeId local = n - begin_[i];
            pos_.col(n) = pos_.col(begin_[i - 1] + local / K_) + inc_.col(local % K_);
        }
}

NodeId TreeModel::parent(NodeId n) const {
    int i = step_[n];
    return i == 0 ? -1 : begin_[i - 1] + (n - begin_[i]) / K_;
}

NodeId TreeModel::child(NodeId n, int j) const {
    int i = step_[n];
    return begin_[i + 1] + (n - begin_[i]) * K_ + j;
}

NodeId TreeModel::ancestor(NodeId n, int s) const {
    int i = step_[n];
    return begin_[s] + static_cast<NodeId>((n - begin_[i]) / powK_[i - s]);
}

bool TreeModel::is_ancestor(NodeId a, NodeId n) const {
    return step_[a] <= step_[n] && ancestor(n, step_[a]) == a;
}

Eigen::MatrixXd TreeModel::path(NodeId n) const {
    int i = step_[n];
    Eigen::MatrixXd p(controls_.d, i + 1);
    for (int s = i; s >= 0; --s) {
        p.col(s) = pos_.col(n);
        if (s > 0) n = parent(n);
    }
    return p;
}

std::pair<int, int> TreeModel::leaf_range(NodeId n) const {
    int i = step_[n];
    long long span = powK_[grid_.N - i];
    long long first = (n - begin_[i]) * span;
    return {static_cast<int>(first), static_cast<int>(first + span)};
}

nlohmann::json TreeModel::stats() const {
    return {{"nodes", size()}, {"depth", grid_.N}, {"controls", controls_.size()},
            {"branching", K_}, {"leaves", leaves()}};
}

TreeModel build_tree(const TimeGrid& grid, const ControlSet& controls, std::size_t max_nodes) {
    grid.validate();
    controls.validate();
    const double dt = grid.dt(), sq = std::sqrt(dt);
    Eigen::MatrixXd inc(controls.d, 0);
    std::vector<std::pair<int, int>> branches;

    auto intern = [&](const Eigen::VectorXd& v) {
        for (int j = 0; j < inc.cols(); ++j)
            if ((inc.col(j) - v).cwiseAbs().maxCoeff() <= kDedupTol) return j;
        inc.conservativeResize(Eigen::NoChange, inc.cols() + 1);
        inc.col(inc.cols() - 1) = v;
        return static_cast<int>(inc.cols() - 1);
    };
    for (const auto& u : controls.controls) {
        int a = intern(u.b * dt + u.sigma * sq);
        int b = intern(u.b * dt - u.sigma * sq);
        branches.emplace_back(a, b);
    }

    // projected size before allocating anything
    const double K = static_cast<double>(inc.cols());
    double total = 0, layer = 1;
    for (int i = 0; i <= grid.N; ++i, layer *= K) total += layer;
    if (total > static_cast<double>(max_nodes))
        throw CapExceeded("tree would have " + std::to_string(static_cast<long long>(total)) +
                          " nodes, cap is " + std::to_string(max_nodes));
    return TreeModel(grid, controls, std::move(inc), std::move(branches));
}

std::pair<double, int> one_step_argmax(const TreeModel& tree, NodeId node, const Field& v) {
    double best = -std::numeric_limits<double>::infinity();
    int arg = 0;
    for (int c = 0; c < tree.controls().size(); ++c) {
        double m = 0.5 * (v[tree.up(node, c)] + v[tree.down(node, c)]);
        if (m > best) best = m, arg = c;
    }
    return {best, arg};
}

double one_step_sup(const TreeModel& tree, NodeId node, const Field& v) {
    return one_step_argmax(tree, node, v).first;
}

Field expectation_field(const TreeModel& tree, const Field& terminal, int workers) {
    Field v = terminal;
    for (int i = tree.steps() - 1; i >= 0; --i)
        parallel_for(tree.level_begin(i), tree.level_end(i), workers,
                     [&](long n) { v[n] = one_step_sup(tree, static_cast<NodeId>(n), v); });
    return v;
}

double nonlinear_expectation(const TreeModel& tree, const Field& terminal, NodeId from_node) {
    // only the subtree below from_node matters; the full sweep is cheap at desk scale
    return expectation_field(tree, terminal)[from_node];
}

double Modulus::operator()(double x) const {
    if (x <= 0) return 0;
    return c * std::max(std::pow(x, p1), std::pow(x, p2));
}

void Modulus::validate() const {
    if (!(c >= 0) || !(p1 > 0) || !(p2 >= p1))
        throw ConfigError("modulus needs c >= 0 and 0 < p1 <= p2");
}

nlohmann::json Modulus::to_json() const { return {{"c", c}, {"p1", p1}, {"p2", p2}}; }

Modulus Modulus::from_json(const nlohmann::json& j) {
    Modulus m;
    m.c = j.at("c").get<double>();
    m.p1 = j.value("p1", 1.0);
    m.p2 = j.value("p2", m.p1);
    m.validate();
    return m;
}

int window_steps(const TimeGrid& grid, double delta) {
    return static_cast<int>(std::floor(delta / grid.dt() + 1e-9));
}

namespace {

// E|sup martingale part|^p <= K_p (2 ell delta)^{p/2}:
// Doob L2 + Jensen for p <= 2, Doob Lp + Burkholder square function above.
double moment_constant(double p, int d) {
    if (p <= 2) return std::pow(4.0, p / 2);
    return std::pow(static_cast<double>(d), p - 1) * std::pow(p, p);
}

double hat_shape(const Modulus& rho, double delta) {
    return std::max(std::pow(delta, rho.p1 / 2), std::pow(delta, rho.p2));
}

}  // namespace

double rho_hat_constant(const Modulus& rho, double ell, int d) {
    std::vector<double> ps{rho.p1};
    if (rho.p2 != rho.p1) ps.push_back(rho.p2);
    const double drift = 1 + std::sqrt(static_cast<double>(d)) * ell;
    double sum = 0;
    for (double p : ps)
        sum += std::max(1.0, std::pow(2.0, p - 1)) *
               (std::pow(drift, p) + moment_constant(p, d) * std::pow(2 * ell, p / 2));
    return rho.c * sum;
}

double rho_hat_analytic(const Modulus& rho, double ell, int d, double delta) {
    if (!(delta > 0)) throw BadDelta("delta must be positive");
    return rho_hat_constant(rho, ell, d) * hat_shape(rho, delta);
}

double modulus_supremum(const TreeModel& tree, const Modulus& rho, double delta) {
    // Increments are node independent, so the window value after stopping at
    // step i only depends on the window length min(w, N - i); longer windows
    // dominate, hence the sup over stopping rules is attained at zeta = 0.
    const int w = std::min(window_steps(tree.grid(), delta), tree.steps());
    Field v = Field::Zero(tree.level_end(w));
    for (NodeId n = tree.level_begin(w); n < tree.level_end(w); ++n) {
        double range = 0;
        for (NodeId a = n; a >= 0; a = tree.parent(a)) range = std::max(range, tree.value(a).norm());
        v[n] = rho(delta + range);
    }
    for (int i = w - 1; i >= 0; --i)
        for (NodeId n = tree.level_begin(i); n < tree.level_end(i); ++n) v[n] = one_step_sup(tree, n, v);
    return v[0];
}

nlohmann::json ModulusReport::to_json() const {
    return {{"delta", delta}, {"lhs", lhs}, {"bound", bound}, {"pass", pass}};
}

ModulusReport verify_modulus_bound(const TreeModel& tree, const Modulus& rho, double delta,
                                   double rho_hat_value) {
    ModulusReport r;
    r.delta = delta;
    r.lhs = modulus_supremum(tree, rho, delta);
    r.bound = rho_hat_value;
    r.pass = r.lhs <= rho_hat_value + 1e-12;
    return r;
}

ModulusHat ModulusHat::analytic(const Modulus& rho, double ell, int d) {
    ModulusHat h;
    h.mode_ = Mode::Analytic;
    h.rho_ = rho;
    h.chat_ = rho_hat_constant(rho, ell, d);
    return h;
}

ModulusHat ModulusHat::exhaustive(const TreeModel& tree, const Modulus& rho) {
    ModulusHat h;
    h.mode_ = Mode::Exhaustive;
    h.rho_ = rho;
    h.tree_ = &tree;
    return h;
}

ModulusHat ModulusHat::calibrated(const TreeModel& tree, const Modulus& rho,
                                  const std::vector<double>& deltas) {
    ModulusHat h;
    h.mode_ = Mode::Calibrated;
    h.rho_ = rho;
    for (double d : deltas)
        if (d > 0) h.chat_ = std::max(h.chat_, modulus_supremum(tree, rho, d) / hat_shape(rho, d));
    return h;
}

double ModulusHat::operator()(double delta) const {
    if (delta <= 0) return 0;
    if (mode_ != Mode::Exhaustive) return chat_ * hat_shape(rho_, delta);
    auto it = cache_.find(delta);
    if (it != cache_.end()) return it->second;
    double v = modulus_supremum(*tree_, rho_, delta);
    cache_.emplace(delta, v);
    return v;
}

std::string ModulusHat::mode_name() const {
    switch (mode_) {
        case Mode::Analytic: return "analytic";
        case Mode::Exhaustive: return "exhaustive";
        default: return "calibrated";
    }
}

std::vector<double> default_delta_grid(const TimeGrid& grid) {
    std::vector<double> out;
    for (int j = 1; j <= 2 * grid.N; ++j) out.push_back(grid.T * j / (2.0 * grid.N));
    return out;
}

}  // namespace robstop
