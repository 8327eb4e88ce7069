#pragma once

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace podnet::nn {

// Dense row-major tensor of 64-bit floats. Only rank 1 and 2 are used.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  static Tensor zeros(std::vector<std::size_t> shape) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    Tensor t;
    t.shape = std::move(shape);
    t.data.assign(n, 0.0);
    return t;
  }

  std::size_t size() const { return data.size(); }

  std::size_t rows() const {
    if (shape.size() != 2) throw std::logic_error("Tensor::rows: tensor is not 2-D");
    return shape[0];
  }

  std::size_t cols() const {
    if (shape.size() != 2) throw std::logic_error("Tensor::cols: tensor is not 2-D");
    return shape[1];
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

// Named parameter tensors. Names are unique and shapes are fixed once added;
// iteration order is the sorted name order, which keeps every loop over the
// store deterministic.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor tensor) {
    auto [it, inserted] = tensors_.emplace(name, std::move(tensor));
    if (!inserted) throw std::invalid_argument("ParamStore::add: duplicate tensor name '" + name + "'");
    return it->second;
  }

  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

  const Tensor& at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw std::invalid_argument("ParamStore::at: no tensor named '" + name + "'");
    return it->second;
  }

  Tensor& at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw std::invalid_argument("ParamStore::at: no tensor named '" + name + "'");
    return it->second;
  }

  // Same names and shapes, all-zero data.
  ParamStore zeros_like() const {
    ParamStore out;
    for (const auto& [name, tensor] : tensors_) out.add(name, Tensor::zeros(tensor.shape));
    return out;
  }

  void require_same_layout(const ParamStore& other, const char* context) const {
    if (tensors_.size() != other.tensors_.size())
      throw std::invalid_argument(std::string(context) + ": parameter stores differ in tensor count");
    auto it = tensors_.begin();
    auto jt = other.tensors_.begin();
    for (; it != tensors_.end(); ++it, ++jt) {
      if (it->first != jt->first || !it->second.same_shape(jt->second))
        throw std::invalid_argument(std::string(context) + ": mismatched tensor '" + it->first + "'");
    }
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, tensor] : tensors_) n += tensor.size();
    return n;
  }

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }
  std::size_t size() const { return tensors_.size(); }
  bool empty() const { return tensors_.empty(); }

 private:
  std::map<std::string, Tensor> tensors_;
};

}  // namespace podnet::nn
