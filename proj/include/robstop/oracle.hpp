#pragma once

#include <cstdint>
#include <vector>

#include "robstop/lattice.hpp"
#include "robstop/snell.hpp"

namespace robstop {

// Size of the raw search spaces over all internal nodes, and of the reduced
// space the oracle actually walks (decisions only at reachable nodes).
struct PolicyEnumeration {
    long long internal = 0;
    double stop_count = 0;      // 2^internal
    double control_count = 0;   // |C|^internal
    double reachable_count = 0; // joint (stop, control) strategies on reachable nodes

    static PolicyEnumeration of(const TreeModel& tree);
    nlohmann::json to_json() const;
};

constexpr double kDefaultStrategyCap = 5e7;

// action per node: -2 unreached, -1 stop, c >= 0 continue with control c
struct Strategy {
    std::vector<int> action;
};

struct BruteForceResult {
    double value = 0;
    Strategy best;
    std::uint64_t strategies = 0;
};

// Exact sup over (stopping rule, control policy) of sum_paths measure * Yhat(stop node).
// With `fixed`, controls are taken from the given policy instead of enumerated.
BruteForceResult brute_force_value(const TreeModel& tree, const Field& Yhat,
                                   double cap = kDefaultStrategyCap, const ControlPolicy* fixed = nullptr);

// Explicit path sum of one strategy.
double evaluate_strategy(const TreeModel& tree, const Field& Yhat, const Strategy& s);

// Exact (P2) supremum by enumerating stopping rules and the controls used
// both before and inside the window after the stop.
double brute_force_rho_hat(const TreeModel& tree, const Modulus& rho, double delta,
                           double cap = kDefaultStrategyCap);

}  // namespace robstop
