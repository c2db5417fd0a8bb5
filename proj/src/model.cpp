#include "vblab/model.hpp"

#include "vblab/expfam.hpp"

namespace vblab {

Matrix Model::hess_psi(const Vector& theta) const {
  return hessian_fd(*this, theta);
}

Tensor3 Model::psi_d3(const Vector& theta) const {
  return fd_tensor3([this](const Vector& t) { return psi(t); }, theta);
}

Tensor4 Model::psi_d4(const Vector& theta) const {
  return fd_tensor4([this](const Vector& t) { return psi(t); }, theta);
}

void validate_params(const Model& model, const Vector& theta) {
  if (theta.size() != model.dim())
    throw std::invalid_argument("parameter vector has dimension " +
                                std::to_string(theta.size()) + ", expected " +
                                std::to_string(model.dim()));
  if (!theta.allFinite())
    throw std::invalid_argument("parameter vector has non-finite entries");
  if (!model.in_domain(theta))
    throw DomainEscape("parameter lies outside the model domain");
}

void validate_hyperparams(const Model& model, const Hyperparams& hp) {
  if (!(hp.alpha > 0.0))
    throw std::invalid_argument("hyperparameter alpha must be positive");
  if (hp.beta.size() != model.dim())
    throw std::invalid_argument("hyperparameter beta has dimension " +
                                std::to_string(hp.beta.size()) +
                                ", expected " + std::to_string(model.dim()));
  if (!hp.beta.allFinite())
    throw std::invalid_argument("hyperparameter beta has non-finite entries");
  if (!model.hyperparams_integrable(hp))
    throw DivergentIntegral("hyperparameters (" + std::to_string(hp.alpha) +
                            ", ...) do not yield an integrable density for " +
                            model.name());
}

}  // namespace vblab
