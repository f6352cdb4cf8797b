#include "ibgrpo/indicator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace ibgrpo {

namespace {

void check_dims(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("objective dimension mismatch");
  if (a.empty()) throw std::invalid_argument("empty objective vector");
}

void check_group(const std::vector<Objectives>& group) {
  if (group.empty()) throw std::invalid_argument("empty group");
  for (const Objectives& r : group) check_dims(r, group.front());
}

// Hypervolume of points already clipped to ref, using the first `dim`
// coordinates.
double hv_recursive(std::vector<const double*> pts, std::span<const double> ref, std::size_t dim) {
  if (pts.empty()) return 0.0;
  if (dim == 1) {
    double best = ref[0];
    for (const double* p : pts) best = std::max(best, p[0]);
    return best - ref[0];
  }
  const std::size_t last = dim - 1;
  std::sort(pts.begin(), pts.end(),
            [last](const double* a, const double* b) { return a[last] > b[last]; });
  double volume = 0.0;
  std::vector<const double*> active;
  std::size_t i = 0;
  while (i < pts.size()) {
    const double level = pts[i][last];
    while (i < pts.size() && pts[i][last] == level) active.push_back(pts[i++]);
    const double next = i < pts.size() ? pts[i][last] : ref[last];
    if (level > next) volume += hv_recursive(active, ref, dim - 1) * (level - next);
  }
  return volume;
}

}  // namespace

double eps_indicator(std::span<const double> r_j, std::span<const double> r_i) {
  check_dims(r_j, r_i);
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < r_i.size(); ++m) worst = std::max(worst, r_i[m] - r_j[m]);
  return worst;
}

std::vector<double> pareto_fitness(const std::vector<Objectives>& group, double kappa) {
  if (!(kappa > 0.0)) throw std::invalid_argument("pareto_fitness: kappa must be > 0");
  check_group(group);
  const std::size_t k = group.size();
  std::vector<double> fitness(k, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (j != i) fitness[i] -= std::exp(-eps_indicator(group[j], group[i]) / kappa);
  return fitness;
}

std::vector<double> group_advantages(std::span<const double> fitness, double eps) {
  if (fitness.empty()) return {};
  const double n = static_cast<double>(fitness.size());
  const double mean = std::accumulate(fitness.begin(), fitness.end(), 0.0) / n;
  double var = 0.0;
  for (double f : fitness) var += (f - mean) * (f - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> adv;
  adv.reserve(fitness.size());
  for (double f : fitness) adv.push_back((f - mean) / (sd + eps));
  return adv;
}

bool dominates(std::span<const double> a, std::span<const double> b) {
  check_dims(a, b);
  bool strict = false;
  for (std::size_t m = 0; m < a.size(); ++m) {
    if (a[m] < b[m]) return false;
    if (a[m] > b[m]) strict = true;
  }
  return strict;
}

ParetoFront pareto_front(const std::vector<Objectives>& points) {
  check_group(points);
  ParetoFront front;
  for (std::size_t i = 0; i < points.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < points.size() && !dominated; ++j)
      dominated = j != i && dominates(points[j], points[i]);
    if (!dominated) {
      front.indices.push_back(i);
      front.members.push_back(points[i]);
    }
  }
  return front;
}

double hypervolume(const std::vector<Objectives>& points, std::span<const double> ref) {
  if (points.empty()) return 0.0;
  check_group(points);
  check_dims(points.front(), ref);
  std::vector<Objectives> clipped = points;
  for (Objectives& p : clipped)
    for (std::size_t m = 0; m < p.size(); ++m) p[m] = std::max(p[m], ref[m]);
  std::vector<const double*> ptrs;
  for (const Objectives& p : clipped) ptrs.push_back(p.data());
  return hv_recursive(std::move(ptrs), ref, ref.size());
}

Objectives default_reference_point(const std::vector<Objectives>& group, double margin) {
  check_group(group);
  Objectives ref = group.front();
  for (const Objectives& r : group)
    for (std::size_t m = 0; m < r.size(); ++m) ref[m] = std::min(ref[m], r[m]);
  for (double& v : ref) v -= margin;
  return ref;
}

std::vector<double> hv_contribution_fitness(const std::vector<Objectives>& group,
                                            std::span<const double> ref) {
  check_group(group);
  const double total = hypervolume(group, ref);
  std::vector<double> out;
  out.reserve(group.size());
  for (std::size_t i = 0; i < group.size(); ++i) {
    std::vector<Objectives> rest;
    rest.reserve(group.size() - 1);
    for (std::size_t j = 0; j < group.size(); ++j)
      if (j != i) rest.push_back(group[j]);
    out.push_back(total - hypervolume(rest, ref));
  }
  return out;
}

std::vector<double> hv_contribution_fitness(const std::vector<Objectives>& group) {
  const Objectives ref = default_reference_point(group);
  return hv_contribution_fitness(group, ref);
}

std::vector<double> weighted_sum_fitness(const std::vector<Objectives>& group,
                                         std::span<const double> weights) {
  check_group(group);
  check_dims(group.front(), weights);
  for (double w : weights)
    if (w < 0.0) throw std::invalid_argument("weighted_sum_fitness: negative weight");
  std::vector<double> out;
  out.reserve(group.size());
  for (const Objectives& r : group)
    out.push_back(std::inner_product(r.begin(), r.end(), weights.begin(), 0.0));
  return out;
}

}  // namespace ibgrpo
