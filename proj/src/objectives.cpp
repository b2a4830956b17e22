#include "cnnma/objectives.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cnnma {

namespace {

class SphereObjective : public Objective {
 public:
  explicit SphereObjective(Index dim) : dim_(dim) {}
  Index dimension() const override { return dim_; }
  double evaluate(const Eigen::Ref<const Vector>& x) override { return x.squaredNorm(); }

 private:
  Index dim_;
};

class RastriginObjective : public Objective {
 public:
  explicit RastriginObjective(Index dim) : dim_(dim) {}
  Index dimension() const override { return dim_; }
  double evaluate(const Eigen::Ref<const Vector>& x) override {
    double value = 10.0 * double(x.size());
    for (Index i = 0; i < x.size(); ++i)
      value += x[i] * x[i] - 10.0 * std::cos(2.0 * std::numbers::pi * x[i]);
    return value;
  }

 private:
  Index dim_;
};

class RosenbrockObjective : public Objective {
 public:
  explicit RosenbrockObjective(Index dim) : dim_(dim) {}
  Index dimension() const override { return dim_; }
  double evaluate(const Eigen::Ref<const Vector>& x) override {
    double value = 0.0;
    for (Index i = 0; i + 1 < x.size(); ++i) {
      const double a = x[i + 1] - x[i] * x[i];
      const double b = 1.0 - x[i];
      value += 100.0 * a * a + b * b;
    }
    return value;
  }

 private:
  Index dim_;
};

}  // namespace

std::unique_ptr<Objective> benchmark_objective(const std::string& name, Index dim) {
  if (dim < 1) throw std::invalid_argument("benchmark_objective: dim must be >= 1");
  if (name == "sphere") return std::make_unique<SphereObjective>(dim);
  if (name == "rastrigin") return std::make_unique<RastriginObjective>(dim);
  if (name == "rosenbrock") return std::make_unique<RosenbrockObjective>(dim);
  throw std::invalid_argument("benchmark_objective: unknown objective '" + name + "'");
}

CnnObjective::CnnObjective(const Network& net, const std::vector<MiniBatch>& batches)
    : net_(net), batches_(&batches) {
  if (batches.empty()) throw std::invalid_argument("CnnObjective: no batches");
  dim_ = param_layout(net_).total;
}

double CnnObjective::evaluate(const Eigen::Ref<const Vector>& x) {
  unflatten_params(net_, x);
  const Tensor& probs = network_forward(net_, (*batches_)[batch_index_].inputs, cache_);
  return loss(probs, (*batches_)[batch_index_].targets);
}

bool CnnObjective::advance_phase() {
  batch_index_ = (batch_index_ + 1) % batches_->size();
  return batches_->size() > 1;
}

}  // namespace cnnma
