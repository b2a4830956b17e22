#include "cnnma/annealer.hpp"

#include "cnnma/seeding.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace cnnma {

void AnnealConfig::validate() const {
  if (neighborhood_size < 1)
    throw std::invalid_argument("AnnealConfig: neighborhood_size must be >= 1");
  if (max_iterations < 0)
    throw std::invalid_argument("AnnealConfig: max_iterations must be >= 0");
  if (initial_kinetic < 0)
    throw std::invalid_argument("AnnealConfig: initial_kinetic must be >= 0");
  if (!(cooling_factor > 0.0) || cooling_factor > 1.0)
    throw std::invalid_argument("AnnealConfig: cooling_factor must be in (0, 1]");
  if (!(delta_scale > 0.0))
    throw std::invalid_argument("AnnealConfig: delta_scale must be > 0");
  if (termination_epsilon < 0)
    throw std::invalid_argument("AnnealConfig: termination_epsilon must be >= 0");
}

bool demon_step(DemonState& state, double candidate_energy) {
  const double delta_e = candidate_energy - state.energy;
  if (delta_e > state.kinetic) return false;
  state.energy = candidate_energy;
  state.kinetic -= delta_e;  // conserves E_p + E_k; stays >= 0 by the guard
  return true;
}

void perturb(const Eigen::Ref<const Vector>& x, double delta_scale, bool symmetric,
             std::mt19937_64& rng, Vector& out) {
  if (delta_scale < 0) throw std::invalid_argument("perturb: negative delta_scale");
  out.resize(x.size());
  std::uniform_real_distribution<double> dis(symmetric ? -delta_scale : 0.0, delta_scale);
  for (Index i = 0; i < x.size(); ++i) out[i] = x[i] + dis(rng);
}

void AnnealTrace::write_csv(std::ostream& out) const {
  out << "iteration,energy,kinetic,temperature,accepts,rejects\n";
  const auto old_precision = out.precision(17);
  for (const auto& row : rows)
    out << row.iteration << ',' << row.energy << ',' << row.kinetic << ',' << row.temperature
        << ',' << row.accepts << ',' << row.rejects << '\n';
  out.precision(old_precision);
}

namespace {

enum class AcceptRule { Demon, Metropolis };

AnnealResult run_impl(Objective& objective, const Vector& x0, const AnnealConfig& config,
                      AcceptRule rule) {
  config.validate();
  if (x0.size() != objective.dimension())
    throw std::invalid_argument("anneal: x0 has dimension " + std::to_string(x0.size()) +
                                ", objective expects " + std::to_string(objective.dimension()));

  DemonState state;
  state.x = x0;
  state.energy = objective.evaluate(state.x);
  if (!std::isfinite(state.energy))
    throw std::runtime_error("anneal: non-finite objective at the initial solution");
  state.kinetic = rule == AcceptRule::Demon ? config.initial_kinetic : 0.0;
  state.temperature = config.initial_kinetic;  // E_k doubles as the SA temperature
  state.best_x = state.x;
  state.best_energy = state.energy;

  std::mt19937_64 perturb_rng(config.seed);
  // Separate stream so MA and SA draw identical candidate sequences per seed.
  std::mt19937_64 accept_rng(derive_seed(config.seed, 0x6163636570ull));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  AnnealResult result;
  result.trace.rows.reserve(size_t(config.max_iterations));
  Vector candidate(x0.size());

  for (int iter = 0; iter < config.max_iterations; ++iter) {
    if (state.best_energy < config.termination_epsilon) break;
    if (iter > 0 && objective.advance_phase()) {
      // New landscape: re-price the current solution so dE stays coherent.
      state.energy = objective.evaluate(state.x);
      if (!std::isfinite(state.energy))
        throw std::runtime_error("anneal: non-finite objective after phase advance");
    }

    int accepts = 0, rejects = 0;
    for (int n = 0; n < config.neighborhood_size; ++n) {
      perturb(state.x, config.delta_scale, config.symmetric_delta, perturb_rng, candidate);
      const double candidate_energy = objective.evaluate(candidate);
      if (!std::isfinite(candidate_energy))
        throw std::runtime_error("anneal: non-finite objective value");
      ++result.candidate_evaluations;

      bool accepted = false;
      if (rule == AcceptRule::Demon) {
        accepted = demon_step(state, candidate_energy);
      } else {
        const double delta_e = candidate_energy - state.energy;
        accepted = delta_e <= 0.0 ||
                   (state.temperature > 0.0 &&
                    unit(accept_rng) < std::exp(-delta_e / state.temperature));
        if (accepted) state.energy = candidate_energy;
      }
      if (accepted) {
        state.x.swap(candidate);
        ++accepts;
        if (state.energy < state.best_energy) {
          state.best_energy = state.energy;
          state.best_x = state.x;
        }
      } else {
        ++rejects;
      }
    }

    ++result.iterations;
    state.temperature *= config.cooling_factor;
    if (rule == AcceptRule::Demon && !config.strict_microcanonical)
      state.kinetic *= config.cooling_factor;
    result.trace.rows.push_back({result.iterations, state.energy, state.kinetic,
                                 state.temperature, accepts, rejects});
  }

  result.best_x = std::move(state.best_x);
  result.best_energy = state.best_energy;
  return result;
}

}  // namespace

AnnealResult anneal_run(Objective& objective, const Vector& x0, const AnnealConfig& config) {
  return run_impl(objective, x0, config, AcceptRule::Demon);
}

AnnealResult sa_run(Objective& objective, const Vector& x0, const AnnealConfig& config) {
  return run_impl(objective, x0, config, AcceptRule::Metropolis);
}

}  // namespace cnnma
