#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ibgrpo {

// A point in objective space; every objective is maximized.
using Objectives = std::vector<double>;

// Additive epsilon indicator: the smallest uniform shift that lets r_j weakly
// dominate r_i, i.e. max_m (r_i[m] - r_j[m]).
double eps_indicator(std::span<const double> r_j, std::span<const double> r_i);

// IBEA-style fitness R_i = sum_{j != i} -exp(-I(r_j, r_i) / kappa).
std::vector<double> pareto_fitness(const std::vector<Objectives>& group, double kappa);

// (R_i - mean) / (population std + eps).
std::vector<double> group_advantages(std::span<const double> fitness, double eps = 1e-8);

bool dominates(std::span<const double> a, std::span<const double> b);

struct ParetoFront {
  std::vector<std::size_t> indices;
  std::vector<Objectives> members;
};

ParetoFront pareto_front(const std::vector<Objectives>& points);

// Exact dominated hypervolume above `ref` (coordinates below the reference
// are clipped to it). Recursive slicing over the last objective.
double hypervolume(const std::vector<Objectives>& points, std::span<const double> ref);

// Component-wise group minimum minus `margin`.
Objectives default_reference_point(const std::vector<Objectives>& group, double margin = 0.1);

// HV(group) - HV(group without i) for each member.
std::vector<double> hv_contribution_fitness(const std::vector<Objectives>& group,
                                            std::span<const double> ref);
std::vector<double> hv_contribution_fitness(const std::vector<Objectives>& group);

std::vector<double> weighted_sum_fitness(const std::vector<Objectives>& group,
                                         std::span<const double> weights);

}  // namespace ibgrpo
