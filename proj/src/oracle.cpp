#include "robstop/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "robstop/errors.hpp"

namespace robstop {

namespace {

// joint strategies on a subtree of height h: stop, or one of C controls with
// both children enumerated independently
double reachable_strategies(int h, int C) {
    double v = 1;
    for (int i = 1; i <= h; ++i) v = 1 + C * v * v;
    return v;
}

double window_policies(int h, int C) {
    double v = 1;
    for (int i = 1; i <= h; ++i) v = C * v * v;
    return v;
}

class StopSearch {
public:
    StopSearch(const TreeModel& tree, const Field& reward, const ControlPolicy* fixed)
        : tree_(tree), reward_(reward), fixed_(fixed), act_(tree.size(), -2) {}

    BruteForceResult run() {
        frontier_.push_back(0);
        walk(0.0);
        return out_;
    }

private:
    void walk(double acc) {
        if (frontier_.empty()) {
            if (out_.strategies++ == 0 || acc > out_.value) out_.value = acc, out_.best.action = act_;
            return;
        }
        NodeId v = frontier_.back();
        frontier_.pop_back();
        const double w = std::ldexp(1.0, -tree_.step(v));

        act_[v] = -1;
        walk(acc + w * reward_[v]);
        if (!tree_.terminal(v)) {
            int lo = 0, hi = tree_.controls().size();
            if (fixed_) lo = fixed_->choice[v], hi = lo + 1;
            for (int c = lo; c < hi; ++c) {
                act_[v] = c;
                frontier_.push_back(tree_.up(v, c));
                frontier_.push_back(tree_.down(v, c));
                walk(acc);
                frontier_.pop_back();
                frontier_.pop_back();
            }
        }
        act_[v] = -2;
        frontier_.push_back(v);
    }

    const TreeModel& tree_;
    const Field& reward_;
    const ControlPolicy* fixed_;
    std::vector<int> act_;
    std::vector<NodeId> frontier_;
    BruteForceResult out_;
};

// Best window value after stopping at v, by enumerating every window policy.
class WindowSearch {
public:
    WindowSearch(const TreeModel& tree, const Modulus& rho, double delta, NodeId v, int depth)
        : tree_(tree), rho_(rho), delta_(delta), v_(v), end_(tree.step(v) + depth) {}

    double run() {
        frontier_.push_back(v_);
        walk(0.0);
        return best_;
    }

private:
    void walk(double acc) {
        if (frontier_.empty()) {
            if (!seen_ || acc > best_) best_ = acc, seen_ = true;
            return;
        }
        NodeId u = frontier_.back();
        frontier_.pop_back();
        const double w = std::ldexp(1.0, tree_.step(v_) - tree_.step(u));
        if (tree_.step(u) == end_) {
            double range = 0;
            for (NodeId a = u; a != v_; a = tree_.parent(a))
                range = std::max(range, (tree_.value(a) - tree_.value(v_)).norm());
            walk(acc + w * rho_(delta_ + range));
        } else {
            for (int c = 0; c < tree_.controls().size(); ++c) {
                frontier_.push_back(tree_.up(u, c));
                frontier_.push_back(tree_.down(u, c));
                walk(acc);
                frontier_.pop_back();
                frontier_.pop_back();
            }
        }
        frontier_.push_back(u);
    }

    const TreeModel& tree_;
    const Modulus& rho_;
    double delta_;
    NodeId v_;
    int end_;
    std::vector<NodeId> frontier_;
    double best_ = 0;
    bool seen_ = false;
};

}  // namespace

PolicyEnumeration PolicyEnumeration::of(const TreeModel& tree) {
    PolicyEnumeration e;
    e.internal = tree.level_begin(tree.steps());
    e.stop_count = std::pow(2.0, static_cast<double>(e.internal));
    e.control_count = std::pow(static_cast<double>(tree.controls().size()), static_cast<double>(e.internal));
    e.reachable_count = reachable_strategies(tree.steps(), tree.controls().size());
    return e;
}

nlohmann::json PolicyEnumeration::to_json() const {
    return {{"internal", internal}, {"stop_count", stop_count}, {"control_count", control_count},
            {"reachable_count", reachable_count}};
}

BruteForceResult brute_force_value(const TreeModel& tree, const Field& Yhat, double cap,
                                   const ControlPolicy* fixed) {
    const int C = fixed ? 1 : tree.controls().size();
    double count = reachable_strategies(tree.steps(), C);
    if (count > cap)
        throw CapExceeded("oracle would enumerate " + std::to_string(count) + " strategies");
    return StopSearch(tree, Yhat, fixed).run();
}

double evaluate_strategy(const TreeModel& tree, const Field& Yhat, const Strategy& s) {
    std::vector<double> prob(tree.size(), 0.0);
    prob[0] = 1;
    double sum = 0;
    for (NodeId v = 0; v < tree.size(); ++v) {
        int a = s.action[v];
        if (prob[v] == 0 || a == -2) continue;
        if (a == -1) {
            sum += prob[v] * Yhat[v];
        } else {
            prob[tree.up(v, a)] += prob[v] / 2;
            prob[tree.down(v, a)] += prob[v] / 2;
        }
    }
    return sum;
}

double brute_force_rho_hat(const TreeModel& tree, const Modulus& rho, double delta, double cap) {
    const int C = tree.controls().size();
    const int w = window_steps(tree.grid(), delta);
    double count = reachable_strategies(tree.steps(), C);
    for (int i = 0; i <= tree.steps(); ++i)
        count += static_cast<double>(tree.level_end(i) - tree.level_begin(i)) *
                 window_policies(std::min(w, tree.steps() - i), C);
    if (count > cap) throw CapExceeded("oracle would enumerate " + std::to_string(count) + " strategies");

    Field reward(tree.size());
    for (NodeId v = 0; v < tree.size(); ++v)
        reward[v] = WindowSearch(tree, rho, delta, v, std::min(w, tree.steps() - tree.step(v))).run();
    return StopSearch(tree, reward, nullptr).run().value;
}

}  // namespace robstop
