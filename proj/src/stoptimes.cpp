#include "robstop/stoptimes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "robstop/errors.hpp"

namespace robstop {

StoppingTime StoppingTime::from_path_times(const TreeModel& tree, std::vector<int> times) {
    const int N = tree.steps();
    if (static_cast<int>(times.size()) != tree.leaves())
        throw NotAdapted("need one time per path");
    for (int t : times)
        if (t < 0 || t > N) throw NotAdapted("time outside [0, N]");

    StoppingTime s;
    s.tree_ = &tree;
    s.times_ = std::move(times);
    s.lo_.assign(tree.size(), 0);
    std::vector<int> hi(tree.size(), 0);
    for (int j = 0; j < tree.leaves(); ++j) s.lo_[tree.leaf(j)] = hi[tree.leaf(j)] = s.times_[j];
    const int K = tree.branching();
    for (int i = N - 1; i >= 0; --i)
        for (NodeId n = tree.level_begin(i); n < tree.level_end(i); ++n) {
            int lo = std::numeric_limits<int>::max(), h = 0;
            for (int c = 0; c < K; ++c) {
                NodeId ch = tree.child(n, c);
                lo = std::min(lo, s.lo_[ch]);
                h = std::max(h, hi[ch]);
            }
            s.lo_[n] = lo;
            hi[n] = h;
            if (lo <= i && lo != h)
                throw NotAdapted("paths through node " + std::to_string(n) +
                                 " disagree on an already-reached time");
        }
    return s;
}

StoppingTime StoppingTime::from_decisions(const TreeModel& tree, const std::vector<unsigned char>& stop) {
    std::vector<int> times(tree.leaves());
    for (int j = 0; j < tree.leaves(); ++j) {
        NodeId leaf = tree.leaf(j);
        int t = tree.steps();
        for (int s = 0; s < tree.steps(); ++s)
            if (stop[tree.ancestor(leaf, s)]) {
                t = s;
                break;
            }
        times[j] = t;
    }
    return from_path_times(tree, std::move(times));
}

StoppingTime StoppingTime::constant(const TreeModel& tree, int s) {
    return from_path_times(tree, std::vector<int>(tree.leaves(), s));
}

StoppingTime StoppingTime::hitting(const TreeModel& tree, const Field& f, double level) {
    std::vector<unsigned char> stop(tree.size());
    for (NodeId n = 0; n < tree.size(); ++n) stop[n] = f[n] <= level;
    return from_decisions(tree, stop);
}

std::vector<unsigned char> StoppingTime::decisions() const {
    std::vector<unsigned char> d(tree_->size());
    for (NodeId n = 0; n < tree_->size(); ++n) d[n] = stops_at(n);
    return d;
}

nlohmann::json StoppingTime::to_json() const {
    std::vector<NodeId> nodes;
    for (NodeId n = 0; n < tree_->size(); ++n)
        if (stops_at(n)) nodes.push_back(n);
    return {{"steps", tree_->steps()}, {"path_times", times_}, {"stop_nodes", nodes}};
}

StoppingTime stop_compose(const StoppingTime& a, const StoppingTime& b, ComposeOp op) {
    std::vector<int> t(a.path_times().size());
    for (std::size_t j = 0; j < t.size(); ++j)
        t[j] = op == ComposeOp::Min ? std::min(a.at_leaf(j), b.at_leaf(j))
                                    : std::max(a.at_leaf(j), b.at_leaf(j));
    return StoppingTime::from_path_times(a.tree(), std::move(t));
}

StoppingTime approach_time(const TreeModel& tree, const Field& A, const Field& B, double gap) {
    return StoppingTime::hitting(tree, A - B, gap);
}

std::vector<Eigen::MatrixXd> leaf_paths(const TreeModel& tree) {
    std::vector<Eigen::MatrixXd> out;
    out.reserve(tree.leaves());
    for (int j = 0; j < tree.leaves(); ++j) out.push_back(tree.path(tree.leaf(j)));
    return out;
}

Eigen::VectorXd running_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::VectorXd r(a.cols());
    double m = 0;
    for (int t = 0; t < a.cols(); ++t) {
        m = std::max(m, (a.col(t) - b.col(t)).norm());
        r[t] = m;
    }
    return r;
}

namespace {

void check_window(int eps, int T0, double R1, double R2, int N) {
    if (eps < 0 || eps >= T0 || T0 > N) throw BadWindow("need 0 <= eps < T0 <= T");
    if (!(R1 > 0) || !(R1 < R2)) throw BadWindow("need 0 < R1 < R2");
}

// f at step i; exact R2 at eps and R1 at T0
double tube_radius(int i, int eps, int T0, double R1, double R2) {
    if (i == T0) return R1;
    return R2 - (R2 - R1) * static_cast<double>(i - eps) / (T0 - eps);
}

int window_time_running(const Eigen::VectorXd& dist, int eps, int T0, double R1, double R2) {
    for (int i = 0; i < T0; ++i)
        if (dist[i] >= tube_radius(i, eps, T0, R1, R2)) return i;
    return T0;
}

}  // namespace

int window_time_on_path(const TimeGrid& grid, const Eigen::MatrixXd& w0, const Eigen::MatrixXd& w,
                        int eps, int T0, double R1, double R2) {
    check_window(eps, T0, R1, R2, grid.N);
    return window_time_running(running_distance(w, w0), eps, T0, R1, R2);
}

WindowTime lipschitz_window_time(const TreeModel& tree, const Eigen::MatrixXd& w0, int eps, int T0,
                                 double R1, double R2) {
    check_window(eps, T0, R1, R2, tree.steps());
    std::vector<int> t(tree.leaves());
    for (int j = 0; j < tree.leaves(); ++j)
        t[j] = window_time_running(running_distance(tree.path(tree.leaf(j)), w0), eps, T0, R1, R2);
    double kappa = (T0 - eps) * tree.grid().dt() / (R2 - R1);
    return {StoppingTime::from_path_times(tree, std::move(t)), kappa};
}

std::string PremiseWitness::describe() const {
    return "premise " + std::to_string(i) + " fails for paths " + std::to_string(path) + " and " +
           std::to_string(other);
}

std::optional<PremiseWitness> check_sandwich_premise(const TreeModel& tree, const StoppingTime& t1,
                                                     const StoppingTime& t2, const StoppingTime& t3,
                                                     double delta) {
    auto paths = leaf_paths(tree);
    const int P = tree.leaves();
    for (int a = 0; a < P; ++a)
        for (int b = 0; b < P; ++b) {
            Eigen::VectorXd dist = running_distance(paths[a], paths[b]);
            if (dist[t2.at_leaf(a)] <= delta && t1.at_leaf(b) > t2.at_leaf(a)) return PremiseWitness{1, a, b};
            if (dist[t3.at_leaf(a)] <= delta && t2.at_leaf(b) > t3.at_leaf(a)) return PremiseWitness{2, a, b};
        }
    return std::nullopt;
}

StoppingTime sandwich_stopping_time(const TreeModel& tree, const StoppingTime& t1,
                                    const StoppingTime& t2, const StoppingTime& t3, double delta,
                                    double kappa) {
    const double T = tree.grid().T;
    if (!(delta > 0) || !(kappa > T / delta)) throw HypothesisFailed("need kappa > T / delta");
    const int P = tree.leaves();
    int min2 = tree.steps();
    for (int j = 0; j < P; ++j) min2 = std::min(min2, t2.at_leaf(j));
    if (min2 < 1) throw HypothesisFailed("middle time must be positive on every path");
    if (auto w = check_sandwich_premise(tree, t1, t2, t3, delta)) throw HypothesisFailed(w->describe());

    const double delta0 = delta - T / kappa;
    const int lower = min2 / 2;  // floor of half the smallest middle time
    auto paths = leaf_paths(tree);
    std::vector<int> out(P, 0);
    for (int j = 0; j < P; ++j) {
        const int T0 = t2.at_leaf(j);
        for (int a = 0; a < P; ++a) {
            Eigen::VectorXd dist = running_distance(paths[a], paths[j]);
            out[a] = std::max(out[a], window_time_running(dist, lower, T0, delta0, delta));
        }
    }
    return StoppingTime::from_path_times(tree, std::move(out));
}

int ceil_log2(long long x) {
    int l = 0;
    while ((1LL << l) < x) ++l;
    return l;
}

double invert_modulus(const Modulus& rho, double b) {
    double r = b / rho.c;
    return r <= 1 ? std::pow(r, 1 / rho.p1) : std::pow(r, 1 / rho.p2);
}

nlohmann::json WpSequence::to_json() const {
    nlohmann::json j;
    j["n0"] = n0;
    j["levels"] = levels;
    j["delta"] = delta;
    j["kappa"] = kappa;
    for (const auto& s : wp) j["wp"].push_back(s.path_times());
    return j;
}

WpSequence build_wp_sequence(const TreeModel& tree, const Field& X, const Modulus& rho_x, int n_max) {
    if (n_max < 1) throw ConfigError("n_max must be >= 1");
    const double X0 = X[0];
    if (!(X0 > 0)) throw ConfigError("index must start positive");
    const int N = tree.steps();
    const double T = tree.grid().T;

    WpSequence s;
    s.n0 = 1 + static_cast<int>(std::floor(1 / X0));
    const int l_max = ceil_log2(n_max + 2);
    for (int k = 0; k <= l_max + 1; ++k) {
        s.levels.push_back(1.0 / (k + s.n0));
        s.tau_hat.push_back(StoppingTime::hitting(tree, X, s.levels.back()));
    }
    s.delta.assign(l_max + 1, 0.0);
    for (int k = 1; k <= l_max; ++k) {
        double a = k + s.n0;
        // tiny shrink so float rounding cannot push rho(delta_k) over the target
        s.delta[k] = invert_modulus(rho_x, 1 / (a * (a + 1))) * (1 - 1e-9);
        s.w_hat.push_back(sandwich_stopping_time(tree, s.tau_hat[k - 1], s.tau_hat[k], s.tau_hat[k + 1],
                                                 s.delta[k], 2 * T / s.delta[k]));
        s.theta.push_back(k == 1 ? s.w_hat.back()
                                 : stop_compose(s.theta.back(), s.w_hat.back(), ComposeOp::Max));
    }
    for (int n = 1; n <= n_max; ++n) {
        const int l = ceil_log2(n + 2);
        const long long j = n + 2 - (1LL << (l - 1));
        const int shift = static_cast<int>(j * N / (1LL << (l - 1)));  // floor to grid
        const auto& lo = s.theta[l - 2];
        const auto& hi = s.theta[l - 1];
        std::vector<int> t(tree.leaves());
        for (int p = 0; p < tree.leaves(); ++p) t[p] = std::min(lo.at_leaf(p) + shift, hi.at_leaf(p));
        s.wp.push_back(StoppingTime::from_path_times(tree, std::move(t)));
        s.kappa.push_back(2 * T / s.delta[l]);
    }
    return s;
}

nlohmann::json WpReport::to_json() const {
    return {{"lower", lower},           {"upper", upper},
            {"monotone", monotone},     {"increments", increments},
            {"strict", strict},         {"strict_checked", strict_checked},
            {"grid_unresolvable", unresolvable}, {"unresolved_equal", unresolved_equal},
            {"worst_increment_ratio", worst_increment_ratio},
            {"pass", pass()},           {"detail", detail}};
}

WpReport verify_wp_sequence(const TreeModel& tree, const WpSequence& seq, const Field& X,
                            const StoppingTime& tau0) {
    WpReport r;
    const int N = tree.steps();
    const double X0 = X[0];
    const int n_max = static_cast<int>(seq.wp.size());
    for (int n = 1; n <= n_max; ++n) {
        const int l = ceil_log2(n + 2);
        double level = 1.0 / (l + std::floor(1 / X0) - 1);
        StoppingTime tn = StoppingTime::hitting(tree, X, level);
        const auto& w = seq.at(n);
        for (int p = 0; p < tree.leaves(); ++p) {
            if (tn.at_leaf(p) > w.at_leaf(p)) r.lower = false, r.detail = "tau_n > wp_n";
            if (w.at_leaf(p) > tau0.at_leaf(p)) r.upper = false, r.detail = "wp_n > tau0";
            if (n < n_max) {
                int inc = seq.at(n + 1).at_leaf(p) - w.at_leaf(p);
                double bound = 2.0 * N / (n + 3) + 1;  // in steps
                if (inc < 0) r.monotone = false, r.detail = "wp_n decreasing";
                if (inc > bound + 1e-9) r.increments = false, r.detail = "increment too large";
                r.worst_increment_ratio = std::max(r.worst_increment_ratio, inc / bound);
            }
            if (tau0.at_leaf(p) < N || X[tree.leaf(p)] <= 0) {
                // a sub-step gap cannot be represented once the next level is hit with tau0
                if (seq.tau_hat[l + 1].at_leaf(p) < tau0.at_leaf(p)) {
                    ++r.strict_checked;
                    if (w.at_leaf(p) >= tau0.at_leaf(p)) r.strict = false, r.detail = "wp_n not < tau0";
                } else {
                    ++r.unresolvable;
                    r.unresolved_equal += w.at_leaf(p) >= tau0.at_leaf(p);
                }
            }
        }
    }
    return r;
}

std::string LipschitzReport::summary() const {
    if (global_pass && conditional_pass) return "pass";
    if (conditional_pass) return "conditional pass / global fail";
    if (global_pass) return "global pass / conditional fail";
    return "fail";
}

nlohmann::json LipschitzReport::to_json() const {
    return {{"global_pass", global_pass}, {"conditional_pass", conditional_pass},
            {"worst_excess", worst_excess}, {"worst_pair", {worst_a, worst_b}},
            {"summary", summary()}};
}

LipschitzReport verify_lipschitz(const TreeModel& tree, const StoppingTime& tau, double kappa,
                                 LipschitzCert::Scope mode) {
    LipschitzReport r;
    const double dt = tree.grid().dt();
    const int N = tree.steps();
    auto paths = leaf_paths(tree);
    const int P = tree.leaves();
    for (int a = 0; a < P; ++a)
        for (int b = a + 1; b < P; ++b) {
            Eigen::VectorXd dist = running_distance(paths[a], paths[b]);
            double gap = std::abs(tau.at_leaf(a) - tau.at_leaf(b)) * dt;
            double excess = gap - kappa * dist[N] - dt;
            if (excess > r.worst_excess) r.worst_excess = excess, r.worst_a = a, r.worst_b = b;
            if (excess > 1e-12) r.global_pass = false;
            if (mode != LipschitzCert::Scope::Conditional) continue;
            const int lo = std::min(tau.at_leaf(a), tau.at_leaf(b));
            for (int t0 = lo; t0 < N; ++t0) {
                if (t0 * dt < lo * dt + kappa * dist[t0] - 1e-12) continue;
                if (gap > kappa * dist[t0] + dt + 1e-12) r.conditional_pass = false;
            }
        }
    return r;
}

}  // namespace robstop
