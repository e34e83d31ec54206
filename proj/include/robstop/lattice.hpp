#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace robstop {

using NodeId = int;
using Field = Eigen::VectorXd;  // one value per tree node

struct TimeGrid {
    double T = 1.0;
    int N = 1;

    double dt() const { return T / N; }
    double time(int i) const { return T * i / N; }
    void validate() const;
};

struct Control {
    Eigen::VectorXd b;
    Eigen::VectorXd sigma;  // diagonal volatility
};

struct ControlSet {
    int d = 1;
    std::vector<Control> controls;
    double ell = 1.0;

    int size() const { return static_cast<int>(controls.size()); }
    void validate() const;  // throws BadControl
};

// Non-recombining tree. Increments do not depend on the node, so level i is a
// full K-ary layer: node = level_begin(i) + local, children of local are
// local*K + j.
class TreeModel {
public:
    TreeModel(TimeGrid grid, ControlSet controls, Eigen::MatrixXd increments,
              std::vector<std::pair<int, int>> branches);

    const TimeGrid& grid() const { return grid_; }
    const ControlSet& controls() const { return controls_; }
    int dim() const { return controls_.d; }
    int steps() const { return grid_.N; }
    int branching() const { return K_; }
    NodeId size() const { return static_cast<NodeId>(step_.size()); }

    int step(NodeId n) const { return step_[n]; }
    NodeId level_begin(int i) const { return begin_[i]; }
    NodeId level_end(int i) const { return begin_[i + 1]; }
    bool terminal(NodeId n) const { return step_[n] == grid_.N; }

    NodeId parent(NodeId n) const;
    NodeId child(NodeId n, int j) const;
    NodeId ancestor(NodeId n, int s) const;  // s <= step(n)
    NodeId up(NodeId n, int c) const { return child(n, branches_[c].first); }
    NodeId down(NodeId n, int c) const { return child(n, branches_[c].second); }
    bool is_ancestor(NodeId a, NodeId n) const;

    auto value(NodeId n) const { return pos_.col(n); }
    Eigen::MatrixXd path(NodeId n) const;  // d x (step+1)

    int leaves() const { return static_cast<int>(level_end(grid_.N) - level_begin(grid_.N)); }
    NodeId leaf(int j) const { return level_begin(grid_.N) + j; }
    // Index range [first, last) of leaves under node n.
    std::pair<int, int> leaf_range(NodeId n) const;

    const Eigen::MatrixXd& increments() const { return inc_; }
    const std::vector<std::pair<int, int>>& branches() const { return branches_; }
    nlohmann::json stats() const;

private:
    TimeGrid grid_;
    ControlSet controls_;
    Eigen::MatrixXd inc_;
    std::vector<std::pair<int, int>> branches_;
    int K_ = 0;
    std::vector<NodeId> begin_;
    std::vector<long long> powK_;
    std::vector<int> step_;
    Eigen::MatrixXd pos_;
};

constexpr std::size_t kDefaultNodeCap = 4'000'000;
constexpr double kDedupTol = 1e-12;

TreeModel build_tree(const TimeGrid& grid, const ControlSet& controls,
                     std::size_t max_nodes = kDefaultNodeCap);

double one_step_sup(const TreeModel& tree, NodeId node, const Field& v);
// Same, plus the maximising control (lowest index wins ties).
std::pair<double, int> one_step_argmax(const TreeModel& tree, NodeId node, const Field& v);

// E-bar_node[xi] for every node, xi read off the terminal layer of `terminal`.
Field expectation_field(const TreeModel& tree, const Field& terminal, int workers = 1);
double nonlinear_expectation(const TreeModel& tree, const Field& terminal, NodeId from_node);

// rho(x) = C (x^p1 v x^p2)
struct Modulus {
    double c = 1.0;
    double p1 = 1.0;
    double p2 = 1.0;

    double operator()(double x) const;
    void validate() const;
    nlohmann::json to_json() const;
    static Modulus from_json(const nlohmann::json& j);
};

// Window length in steps for a real window delta (grid-tolerant floor).
int window_steps(const TimeGrid& grid, double delta);

// Explicit constant of rho-hat(delta) = C_hat (delta^{p1/2} v delta^{p2}).
double rho_hat_constant(const Modulus& rho, double ell, int d);
double rho_hat_analytic(const Modulus& rho, double ell, int d, double delta);

// Exact left side of (P2) on the tree:
// sup over node-stopping rules and control policies of E[rho(delta + window range)].
double modulus_supremum(const TreeModel& tree, const Modulus& rho, double delta);

struct ModulusReport {
    double delta = 0, lhs = 0, bound = 0;
    bool pass = false;
    nlohmann::json to_json() const;
};
ModulusReport verify_modulus_bound(const TreeModel& tree, const Modulus& rho, double delta,
                                   double rho_hat_value);

class ModulusHat {
public:
    enum class Mode { Analytic, Exhaustive, Calibrated };

    static ModulusHat analytic(const Modulus& rho, double ell, int d);
    static ModulusHat exhaustive(const TreeModel& tree, const Modulus& rho);
    // Smallest C_hat for which the closed form dominates the exhaustive
    // supremum at every delta in `deltas`.
    static ModulusHat calibrated(const TreeModel& tree, const Modulus& rho,
                                 const std::vector<double>& deltas);

    double operator()(double delta) const;
    Mode mode() const { return mode_; }
    std::string mode_name() const;
    const Modulus& rho() const { return rho_; }
    double c_hat() const { return chat_; }  // unused in exhaustive mode
    double p_hat1() const { return rho_.p1 / 2; }
    double p_hat2() const { return rho_.p2; }

private:
    Mode mode_ = Mode::Analytic;
    Modulus rho_;
    double chat_ = 0;
    const TreeModel* tree_ = nullptr;
    mutable std::map<double, double> cache_;
};

std::vector<double> default_delta_grid(const TimeGrid& grid);

}  // namespace robstop
