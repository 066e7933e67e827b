#include "ditto/params.hpp"

#include "ditto/errors.hpp"

namespace ditto {

Parameter& ParamStore::add(const std::string& name, Tensor value) {
  if (params_.contains(name)) throw ParamError("duplicate parameter name: " + name);
  Parameter p;
  p.name = name;
  p.grad = Tensor::zeros_like(value);
  p.m = Tensor::zeros_like(value);
  p.v = Tensor::zeros_like(value);
  p.value = std::move(value);
  return params_.emplace(name, std::move(p)).first->second;
}

bool ParamStore::contains(std::string_view name) const { return params_.find(name) != params_.end(); }

Parameter& ParamStore::at(std::string_view name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw LookupError("unknown parameter: " + std::string(name));
  return it->second;
}

const Parameter& ParamStore::at(std::string_view name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw LookupError("unknown parameter: " + std::string(name));
  return it->second;
}

ParamGroup ParamStore::select(std::string_view prefix) {
  ParamGroup out;
  for (auto& [name, p] : params_) {
    if (name.starts_with(prefix)) out.push_back(&p);
  }
  return out;
}

ParamGroup ParamStore::all() { return select(""); }

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p.zero_grad();
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.value.size();
  return n;
}

bool ParamStore::same_values(const ParamStore& other) const { return same_values(other, ""); }

bool ParamStore::same_values(const ParamStore& other, std::string_view prefix) const {
  auto count = [&](const ParamStore& s) {
    std::size_t n = 0;
    for (const auto& [name, _] : s.params_) n += name.starts_with(prefix) ? 1 : 0;
    return n;
  };
  if (count(*this) != count(other)) return false;
  for (const auto& [name, p] : params_) {
    if (!name.starts_with(prefix)) continue;
    auto it = other.params_.find(name);
    if (it == other.params_.end() || !(it->second.value == p.value)) return false;
  }
  return true;
}

void zero_grad(const ParamGroup& group) {
  for (Parameter* p : group) p->zero_grad();
}

}  // namespace ditto
