#pragma once

#include "cnnma/objectives.hpp"
#include "cnnma/tensor.hpp"

#include <cstdint>
#include <iosfwd>
#include <random>
#include <vector>

namespace cnnma {

struct AnnealConfig {
  int neighborhood_size = 10;       // candidate draws per equilibrium loop
  int max_iterations = 10;          // outer loops
  double initial_kinetic = 100.0;   // demon budget E_k at the start
  double cooling_factor = 0.5;      // c in T <- c*T, applied after each loop
  double delta_scale = 0.001;       // max |dx| per coordinate
  bool strict_microcanonical = false;  // true: never rescale E_k (conservation holds)
  std::uint64_t seed = 0;
  double termination_epsilon = 1e-3;  // stop once best energy drops below this
  bool symmetric_delta = true;  // false: dx drawn from [0, delta_scale] only

  void validate() const;
};

struct DemonState {
  Vector x;
  double energy = 0.0;       // E_p(x)
  double kinetic = 0.0;      // E_k, never negative
  double temperature = 0.0;  // traced alongside; proxy for the kinetic budget
  Vector best_x;
  double best_energy = 0.0;
};

struct TraceRow {
  int iteration = 0;
  double energy = 0.0;
  double kinetic = 0.0;
  double temperature = 0.0;
  int accepts = 0;
  int rejects = 0;
};

struct AnnealTrace {
  std::vector<TraceRow> rows;
  void write_csv(std::ostream& out) const;
};

// Creutz demon acceptance: with dE = candidate - current, accept iff
// dE <= E_k, then E_k <- E_k - dE (downhill feeds the demon, uphill is paid
// from it); otherwise the state is untouched. E_p + E_k is invariant across
// accepted moves.
bool demon_step(DemonState& state, double candidate_energy);

// x' = x + dx with each component delta_scale * u; u is uniform on [-1, 1]
// (symmetric) or [0, 1].
void perturb(const Eigen::Ref<const Vector>& x, double delta_scale, bool symmetric,
             std::mt19937_64& rng, Vector& out);

struct AnnealResult {
  Vector best_x;
  double best_energy = 0.0;
  AnnealTrace trace;
  int iterations = 0;                     // equilibrium loops actually executed
  std::int64_t candidate_evaluations = 0; // objective calls on candidates
};

// Microcanonical annealing: equilibrium loops of neighborhood_size demon
// steps; after each loop T <- c*T and, unless strict, E_k <- c*E_k. Stops at
// max_iterations or when best energy < termination_epsilon.
AnnealResult anneal_run(Objective& objective, const Vector& x0, const AnnealConfig& config);

// Metropolis baseline under the same schedule, budget and termination:
// accept if dE <= 0, else with probability exp(-dE/T). The perturbation
// stream is drawn from its own generator so it matches anneal_run's for a
// given seed; acceptance noise comes from a second generator.
AnnealResult sa_run(Objective& objective, const Vector& x0, const AnnealConfig& config);

}  // namespace cnnma
