#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ditto/tensor.hpp"

namespace ditto {

// A trainable tensor with its gradient slot and AdamW moments.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;  // first moment
  Tensor v;  // second moment
  std::int64_t step = 0;

  void zero_grad() { grad.fill(0.0); }
};

using ParamGroup = std::vector<Parameter*>;

// Named parameters, iterated in lexicographic name order. Element addresses are
// stable for the lifetime of the store (node-based map).
class ParamStore {
 public:
  Parameter& add(const std::string& name, Tensor value);

  bool contains(std::string_view name) const;
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;

  // Parameters whose name starts with `prefix`, in name order.
  ParamGroup select(std::string_view prefix);
  ParamGroup all();

  void zero_grad();
  std::size_t size() const noexcept { return params_.size(); }
  std::size_t num_scalars() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  // True when every parameter value is bitwise equal (optimizer state ignored).
  bool same_values(const ParamStore& other) const;
  bool same_values(const ParamStore& other, std::string_view prefix) const;

 private:
  std::map<std::string, Parameter, std::less<>> params_;
};

void zero_grad(const ParamGroup& group);

}  // namespace ditto
