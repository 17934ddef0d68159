#include "vads/param_store.hpp"

#include <cmath>

#include "vads/error.hpp"

namespace vads {

void ParamStore::add(const std::string& name, Tensor init) {
  if (entries_.count(name)) {
    throw ValidationError("param store: duplicate parameter '" + name + "'");
  }
  init.check_finite("parameter '" + name + "'");
  Entry e;
  e.m = Tensor::zeros(init.shape);
  e.v = Tensor::zeros(init.shape);
  e.shadow = init;
  e.value = std::move(init);
  entries_.emplace(name, std::move(e));
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ValidationError("param store: unknown parameter '" + name + "'");
  return it->second;
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ValidationError("param store: unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParamStore::value(const std::string& name) { return entry(name).value; }
const Tensor& ParamStore::value(const std::string& name) const { return entry(name).value; }

const Tensor& ParamStore::weights(const std::string& name, WeightSource src) const {
  const Entry& e = entry(name);
  return src == WeightSource::Ema ? e.shadow : e.value;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::size_t ParamStore::total_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) n += e.value.numel();
  return n;
}

void adam_step(ParamStore& store, const std::map<std::string, Tensor>& grads,
               const AdamConfig& cfg,
               const std::function<double(const std::string&)>& lr_for) {
  const std::uint64_t t = store.adam_step_count() + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (const auto& [name, grad] : grads) {
    ParamStore::Entry& e = store.entry(name);
    if (!grad.same_shape(e.value)) {
      throw ValidationError("adam_step: gradient shape " + shape_str(grad.shape) +
                            " does not match parameter '" + name + "' " +
                            shape_str(e.value.shape));
    }
    const double lr = lr_for(name);
    for (std::size_t i = 0; i < grad.numel(); ++i) {
      const double g = grad.values[i];
      e.m.values[i] = cfg.beta1 * e.m.values[i] + (1.0 - cfg.beta1) * g;
      e.v.values[i] = cfg.beta2 * e.v.values[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = e.m.values[i] / bc1;
      const double vhat = e.v.values[i] / bc2;
      e.value.values[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
  store.set_adam_step_count(t);
}

void adam_step(ParamStore& store, const std::map<std::string, Tensor>& grads,
               const AdamConfig& cfg) {
  adam_step(store, grads, cfg, [&](const std::string&) { return cfg.lr; });
}

void ema_update(ParamStore& store, double decay) {
  for (auto& [name, e] : store.entries()) {
    for (std::size_t i = 0; i < e.value.numel(); ++i) {
      e.shadow.values[i] = decay * e.shadow.values[i] + (1.0 - decay) * e.value.values[i];
    }
  }
}

}  // namespace vads
