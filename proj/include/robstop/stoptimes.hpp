#pragma once

#include <optional>
#include <string>
#include <vector>

#include "robstop/lattice.hpp"

namespace robstop {

// Adapted stopping rule on the tree, stored as one step per path (leaf) plus
// the min/max over the leaves below each node; adaptedness means that once the
// earliest possible time below a node is <= its step, all paths agree.
class StoppingTime {
public:
    static StoppingTime from_path_times(const TreeModel& tree, std::vector<int> times);
    // stop[n] != 0 means stop at n if not stopped earlier; terminals always stop.
    static StoppingTime from_decisions(const TreeModel& tree, const std::vector<unsigned char>& stop);
    static StoppingTime constant(const TreeModel& tree, int s);
    // First node with f <= level, else N.
    static StoppingTime hitting(const TreeModel& tree, const Field& f, double level);

    const TreeModel& tree() const { return *tree_; }
    int at_leaf(int j) const { return times_[j]; }
    const std::vector<int>& path_times() const { return times_; }

    bool reached(NodeId n) const { return lo_[n] <= tree_->step(n); }  // tau <= step(n)
    bool stops_at(NodeId n) const { return lo_[n] == tree_->step(n); }
    int time_at(NodeId n) const { return lo_[n]; }  // exact once reached
    int earliest(NodeId n) const { return lo_[n]; }
    NodeId stop_node(NodeId n) const { return tree_->ancestor(n, lo_[n]); }  // requires reached(n)

    std::vector<unsigned char> decisions() const;
    bool operator==(const StoppingTime& o) const { return times_ == o.times_; }
    nlohmann::json to_json() const;

private:
    const TreeModel* tree_ = nullptr;
    std::vector<int> times_;
    std::vector<int> lo_;
};

enum class ComposeOp { Min, Max };
StoppingTime stop_compose(const StoppingTime& a, const StoppingTime& b, ComposeOp op);

// First node where A - B <= gap, else N.
StoppingTime approach_time(const TreeModel& tree, const Field& A, const Field& B, double gap);

// Leaf paths as d x (N+1) matrices, in leaf order.
std::vector<Eigen::MatrixXd> leaf_paths(const TreeModel& tree);
// running[t] = ||a - b||_{0,t}
Eigen::VectorXd running_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct LipschitzCert {
    enum class Scope { GlobalT, Conditional };
    double kappa = 0;
    Scope scope = Scope::GlobalT;
};

struct WindowTime {
    StoppingTime zeta;
    double kappa;
};

// zeta = first grid t in [0, T0] with ||w - w0||_{0,t} >= f(t), else T0, where
// f(t) = R2 - (t - eps)/kappa and kappa = (T0 - eps)/(R2 - R1). eps, T0 in steps.
WindowTime lipschitz_window_time(const TreeModel& tree, const Eigen::MatrixXd& w0, int eps,
                                 int T0, double R1, double R2);

// Same rule evaluated on a single path (no tree needed).
int window_time_on_path(const TimeGrid& grid, const Eigen::MatrixXd& w0, const Eigen::MatrixXd& w,
                        int eps, int T0, double R1, double R2);

struct PremiseWitness {
    int i;       // which pair of the premise failed (1 or 2)
    int path;    // omega
    int other;   // omega'
    std::string describe() const;
};
// Checks: theta_i(w') <= theta_{i+1}(w) whenever ||w' - w||_{0,theta_{i+1}(w)} <= delta.
std::optional<PremiseWitness> check_sandwich_premise(const TreeModel& tree, const StoppingTime& t1,
                                                     const StoppingTime& t2, const StoppingTime& t3,
                                                     double delta);

StoppingTime sandwich_stopping_time(const TreeModel& tree, const StoppingTime& t1,
                                    const StoppingTime& t2, const StoppingTime& t3, double delta,
                                    double kappa);

struct WpSequence {
    int n0 = 0;                        // 1 + floor(1 / X0)
    std::vector<double> levels;        // level of tau-hat_k, k = 0..
    std::vector<StoppingTime> tau_hat; // k = 0..
    std::vector<double> delta;         // delta_k (index k; entry 0 unused)
    std::vector<StoppingTime> w_hat;   // k = 1.. (index k-1)
    std::vector<StoppingTime> theta;   // vartheta_l, l = 1.. (index l-1)
    std::vector<StoppingTime> wp;      // wp_n, n = 1.. (index n-1)
    std::vector<double> kappa;         // kappa_n (index n-1)

    const StoppingTime& at(int n) const { return wp.at(n - 1); }
    nlohmann::json to_json() const;
};

int ceil_log2(long long x);
// Closed-form inverse of rho(x) = c (x^p1 v x^p2) at level b.
double invert_modulus(const Modulus& rho, double b);

WpSequence build_wp_sequence(const TreeModel& tree, const Field& X, const Modulus& rho_x, int n_max);

struct WpReport {
    bool lower = true;      // tau_n <= wp_n
    bool upper = true;      // wp_n <= tau0
    bool monotone = true;
    bool increments = true; // wp_{n+1} - wp_n <= 2T/(n+3) + dt
    bool strict = true;     // wp_n < tau0 where the grid can resolve it
    int strict_checked = 0;
    int unresolvable = 0;   // hitting paths where tau-hat_{l+1} = tau0
    int unresolved_equal = 0;  // ... of which wp_n = tau0 (strictness lost to the grid)
    double worst_increment_ratio = 0;
    std::string detail;
    bool pass() const { return lower && upper && monotone && increments && strict; }
    nlohmann::json to_json() const;
};
WpReport verify_wp_sequence(const TreeModel& tree, const WpSequence& seq, const Field& X,
                            const StoppingTime& tau0);

struct LipschitzReport {
    bool global_pass = true;
    bool conditional_pass = true;
    double worst_excess = 0;   // global-T mode
    int worst_a = -1, worst_b = -1;
    std::string summary() const;
    nlohmann::json to_json() const;
};
// global-T: |tau(w1) - tau(w2)| <= kappa ||w1 - w2||_{0,T} + dt over all pairs.
// conditional: same with ||.||_{0,t0} for every t0 in
// { t >= a + kappa ||w1 - w2||_{0,t} } U {T}, a = tau(w1) ^ tau(w2).
LipschitzReport verify_lipschitz(const TreeModel& tree, const StoppingTime& tau, double kappa,
                                 LipschitzCert::Scope mode);

}  // namespace robstop
