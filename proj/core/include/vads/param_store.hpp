#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "vads/tensor.hpp"

namespace vads {

/// Which copy of the weights to read at inference time.
enum class WeightSource { Ema, Raw };

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Named parameter tensors plus per-parameter Adam moments and an EMA shadow.
/// The shadow is initialised to the parameter value when the parameter is
/// added and must always keep the parameter's shape.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    Tensor m;       // Adam first moment
    Tensor v;       // Adam second moment
    Tensor shadow;  // EMA copy
  };

  void add(const std::string& name, Tensor init);
  bool has(const std::string& name) const { return entries_.count(name) != 0; }

  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const;
  const Tensor& weights(const std::string& name, WeightSource src) const;
  Entry& entry(const std::string& name);
  const Entry& entry(const std::string& name) const;

  std::uint64_t adam_step_count() const { return adam_steps_; }
  void set_adam_step_count(std::uint64_t n) { adam_steps_ = n; }

  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }
  std::size_t total_scalars() const;

  std::map<std::string, Entry>& entries() { return entries_; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

 private:
  std::map<std::string, Entry> entries_;
  std::uint64_t adam_steps_ = 0;
};

/// One Adam update with bias correction over the parameters named in `grads`
/// (a subset of the store is fine). Increments the step count once.
/// `lr_for` selects the learning rate per parameter name.
void adam_step(ParamStore& store, const std::map<std::string, Tensor>& grads,
               const AdamConfig& cfg,
               const std::function<double(const std::string&)>& lr_for);

void adam_step(ParamStore& store, const std::map<std::string, Tensor>& grads,
               const AdamConfig& cfg);

/// shadow <- decay * shadow + (1 - decay) * param, for every parameter.
void ema_update(ParamStore& store, double decay = 0.9);

}  // namespace vads
