#include "uhgr/params.hpp"

namespace uhgr {

Parameter& ParameterStore::add(std::string name, Matrix value, bool trainable) {
  if (find(name) != nullptr) throw ConfigError("duplicate parameter name '" + name + "'");
  params_.emplace_back(std::move(name), std::move(value), trainable);
  return params_.back();
}

Parameter* ParameterStore::find(const std::string& name) {
  for (Parameter& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  for (const Parameter& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (Parameter& p : params_) out.push_back(&p);
  return out;
}

std::vector<Parameter*> ParameterStore::trainable() {
  std::vector<Parameter*> out;
  for (Parameter& p : params_) {
    if (p.trainable) out.push_back(&p);
  }
  return out;
}

void ParameterStore::zero_grad() {
  for (Parameter& p : params_) p.zero_grad();
}

std::vector<Matrix> ParameterStore::snapshot() const {
  std::vector<Matrix> out;
  out.reserve(params_.size());
  for (const Parameter& p : params_) out.push_back(p.value);
  return out;
}

void ParameterStore::restore(const std::vector<Matrix>& values) {
  if (values.size() != params_.size()) throw ShapeError("snapshot size does not match model");
  for (std::size_t i = 0; i < values.size(); ++i) {
    Parameter& p = params_[i];
    if (values[i].rows() != p.value.rows() || values[i].cols() != p.value.cols()) {
      throw ShapeError("snapshot shape mismatch for " + p.name);
    }
    p.value = values[i];
  }
}

}  // namespace uhgr
