#pragma once

#include "cnnma/dataset.hpp"
#include "cnnma/network.hpp"
#include "cnnma/tensor.hpp"

#include <memory>
#include <string>

namespace cnnma {

// Potential energy E_p over a flat parameter vector. Evaluation must be
// deterministic for a fixed vector; stochastic objectives hold their batch
// fixed until advance_phase() is called between equilibrium loops.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual Index dimension() const = 0;
  virtual double evaluate(const Eigen::Ref<const Vector>& x) = 0;
  // Returns true when the energy landscape changed (e.g. a new batch).
  virtual bool advance_phase() { return false; }
};

// sphere, rastrigin or rosenbrock; global minimum 0 at the usual optimum.
std::unique_ptr<Objective> benchmark_objective(const std::string& name, Index dim);

// E_p(v) = batch loss of the network rebuilt from v, on the current batch.
// advance_phase() cycles to the next batch.
class CnnObjective : public Objective {
 public:
  CnnObjective(const Network& net, const std::vector<MiniBatch>& batches);

  Index dimension() const override { return dim_; }
  double evaluate(const Eigen::Ref<const Vector>& x) override;
  bool advance_phase() override;

  size_t current_batch() const { return batch_index_; }

 private:
  Network net_;  // workspace clone; mutated by every evaluation
  const std::vector<MiniBatch>* batches_;
  size_t batch_index_ = 0;
  Index dim_ = 0;
  ForwardCache cache_;
};

}  // namespace cnnma
