#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "asc/error.hpp"

namespace asc {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

template <typename T>
class Tape;

// Dense row-major n-dimensional array. `data` is shared so tape closures can
// keep saved values alive without copying. A tensor is "frozen" (no gradient
// participation) when `tape` is null.
template <typename T>
struct Tensor {
  Shape shape;
  std::shared_ptr<std::vector<T>> data;
  Tape<T>* tape = nullptr;
  int node = -1;

  Tensor() : data(std::make_shared<std::vector<T>>()) {}

  static Tensor zeros(Shape s) {
    Tensor t;
    t.shape = std::move(s);
    t.data = std::make_shared<std::vector<T>>(shape_numel(t.shape), T(0));
    return t;
  }

  static Tensor full(Shape s, T v) {
    Tensor t = zeros(std::move(s));
    for (auto& x : *t.data) x = v;
    return t;
  }

  static Tensor from(Shape s, std::vector<T> values) {
    if (shape_numel(s) != values.size()) {
      throw ShapeError("tensor init: " + shape_str(s) + " does not hold " +
                       std::to_string(values.size()) + " values");
    }
    Tensor t;
    t.shape = std::move(s);
    t.data = std::make_shared<std::vector<T>>(std::move(values));
    return t;
  }

  static Tensor scalar(T v) { return from({}, {v}); }

  std::size_t size() const { return data->size(); }
  std::size_t rank() const { return shape.size(); }

  std::size_t dim(std::size_t i) const {
    if (i >= shape.size()) throw ShapeError("dim index out of range for " + shape_str(shape));
    return shape[i];
  }

  T* ptr() { return data->data(); }
  const T* ptr() const { return data->data(); }

  T& operator[](std::size_t i) { return (*data)[i]; }
  const T& operator[](std::size_t i) const { return (*data)[i]; }

  bool on_tape() const { return tape != nullptr && node >= 0; }

  // Value copy with no tape attachment.
  Tensor detached() const {
    Tensor t;
    t.shape = shape;
    t.data = std::make_shared<std::vector<T>>(*data);
    return t;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> t;
    t.shape = shape;
    t.data = std::make_shared<std::vector<U>>(data->size());
    for (std::size_t i = 0; i < data->size(); ++i) (*t.data)[i] = static_cast<U>((*data)[i]);
    return t;
  }
};

// Reverse-mode gradient tape. Nodes are appended in forward execution order;
// backward() replays them in strict reverse creation order. One tensor value
// corresponds to one node; leaves are registered via watch().
template <typename T>
class Tape {
 public:
  // Receives the tape and the node's output gradient.
  using BackwardFn = std::function<void(Tape<T>&, const std::vector<T>&)>;

  int watch(Tensor<T>& t) {
    if (t.tape == this && t.node >= 0) return t.node;
    if (t.tape != nullptr && t.tape != this) {
      throw UsageError("watch: tensor already belongs to a different tape");
    }
    t.tape = this;
    t.node = alloc_node(t.size(), nullptr);
    return t.node;
  }

  // Registers `out` as the product of an op. `input_nodes` may contain -1 for
  // frozen inputs; real ids must have been created earlier than the new node.
  int record(Tensor<T>& out, const std::vector<int>& input_nodes, BackwardFn back) {
    int id = static_cast<int>(nodes_.size());
    for (int in : input_nodes) {
      if (in >= id) throw UsageError("tape: op input created after its output");
    }
    out.tape = this;
    out.node = alloc_node(out.size(), std::move(back));
    return out.node;
  }

  std::size_t node_count() const { return nodes_.size(); }

  // Gradient buffer of a node, for accumulation during backward.
  std::vector<T>& grad(int id) {
    check_id(id);
    touched_[static_cast<std::size_t>(id)] = true;
    return grads_[static_cast<std::size_t>(id)];
  }

  const std::vector<T>& grad_view(int id) const {
    const_cast<Tape*>(this)->check_id(id);
    return grads_[static_cast<std::size_t>(id)];
  }

  // Seeds dLoss/dLoss = 1 and replays every node in reverse creation order.
  // Nodes whose output gradient never received a contribution are skipped;
  // every backward map is linear in the upstream gradient, so their input
  // contributions are identically zero.
  void backward(const Tensor<T>& loss) {
    if (loss.tape != this || loss.node < 0) {
      throw UsageError("backward: loss is not on this tape");
    }
    if (loss.size() != 1) {
      throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape));
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      std::fill(grads_[i].begin(), grads_[i].end(), T(0));
      touched_[i] = false;
    }
    grads_[static_cast<std::size_t>(loss.node)][0] = T(1);
    touched_[static_cast<std::size_t>(loss.node)] = true;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      if (!touched_[i] || !nodes_[i].back) continue;
      nodes_[i].back(*this, grads_[i]);
    }
  }

 private:
  struct Node {
    BackwardFn back;  // empty for leaves
  };

  int alloc_node(std::size_t value_size, BackwardFn back) {
    nodes_.push_back(Node{std::move(back)});
    grads_.emplace_back(value_size, T(0));
    touched_.push_back(false);
    return static_cast<int>(nodes_.size()) - 1;
  }

  void check_id(int id) {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
      throw UsageError("tape: invalid node id " + std::to_string(id));
    }
  }

  std::vector<Node> nodes_;
  std::vector<std::vector<T>> grads_;
  std::vector<char> touched_;
};

// The tape shared by a set of op inputs, or null when all are frozen.
template <typename T>
Tape<T>* joint_tape(std::initializer_list<const Tensor<T>*> inputs) {
  Tape<T>* tape = nullptr;
  for (const Tensor<T>* t : inputs) {
    if (t->tape == nullptr) continue;
    if (tape != nullptr && tape != t->tape) {
      throw UsageError("op inputs belong to different tapes");
    }
    tape = t->tape;
  }
  return tape;
}

template <typename T>
void ensure_all_finite(const Tensor<T>& t, const char* op) {
  for (const T& v : *t.data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": non-finite value in output");
    }
  }
}

}  // namespace asc
