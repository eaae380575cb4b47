#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace mvqa {

struct TensorInfo {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Ordered table of named tensors packed into one flat buffer. The same
/// layout addresses parameter values, gradients and optimizer moments.
class ParamLayout {
 public:
  std::size_t add(std::string name, std::vector<int> shape);

  const std::vector<TensorInfo>& entries() const noexcept { return entries_; }
  std::size_t total() const noexcept { return total_; }
  bool contains(const std::string& name) const { return index_.contains(name); }
  const TensorInfo& at(const std::string& name) const;

  template <typename T>
  std::span<T> view(std::span<T> flat, const std::string& name) const {
    const auto& info = at(name);
    return flat.subspan(info.offset, info.size);
  }

 private:
  std::vector<TensorInfo> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t total_ = 0;
};

}  // namespace mvqa
