#pragma once

#include <deque>
#include <string>
#include <vector>

#include "uhgr/tensor.hpp"

namespace uhgr {

// Owns every Parameter of a model. Addresses stay stable for the lifetime of
// the store, so layers may hold raw pointers into it.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Parameter& add(std::string name, Matrix value, bool trainable = true);

  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::vector<Parameter*> all();
  std::vector<Parameter*> trainable();
  std::size_t size() const { return params_.size(); }

  void zero_grad();

  // Values of every parameter in registration order.
  std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);

  std::deque<Parameter>::const_iterator begin() const { return params_.begin(); }
  std::deque<Parameter>::const_iterator end() const { return params_.end(); }

 private:
  std::deque<Parameter> params_;
};

}  // namespace uhgr
