#include "mvqa/params.hpp"

#include "mvqa/errors.hpp"

namespace mvqa {

std::size_t ParamLayout::add(std::string name, std::vector<int> shape) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter '" + name + "'");
  std::size_t size = 1;
  for (int d : shape) {
    if (d < 1) throw ConfigError("parameter '" + name + "' has a non-positive dimension");
    size *= static_cast<std::size_t>(d);
  }
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(shape), total_, size});
  total_ += size;
  return entries_.size() - 1;
}

const TensorInfo& ParamLayout::at(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return entries_[it->second];
}

}  // namespace mvqa
