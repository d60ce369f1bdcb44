#pragma once

#include <atomic>
#include <functional>
#include <unordered_map>
#include <utility>

#include "lrnmt/tensor.hpp"

namespace lrnmt {

// Records one step's computation for reverse-mode differentiation. Nodes are
// appended in execution order, so node ids are already a topological order
// and the backward sweep is a single reverse pass that touches each node at
// most once. A tape lives for one training step and is then discarded.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const std::vector<T>&)>;

  Tape() : id_(next_id()) {}

  static Tape no_grad() {
    Tape t;
    t.recording_ = false;
    return t;
  }

  std::uint64_t id() const { return id_; }
  bool recording() const { return recording_; }
  std::size_t node_count() const { return nodes_.size(); }

  // Registers a leaf parameter. Attaches a gradient buffer to the tensor;
  // existing gradient contents are preserved so that successive backward
  // calls accumulate (gradient accumulation across mini-batches).
  int watch(Tensor<T>& t) {
    if (!recording_) return -1;
    if (t.tape_id() == id_ && t.node() >= 0) return t.node();
    int id = add_node({}, nullptr, t.size());
    t.bind_node(id_, id);
    t.ensure_grad();
    watched_.push_back(t);
    return id;
  }

  // Node id of `t` on this tape, or -1 when `t` is a constant here.
  int node_of(const Tensor<T>& t) const {
    return t.tape_id() == id_ ? t.node() : -1;
  }

  bool tracked(const Tensor<T>& t) const { return node_of(t) >= 0; }

  // Records an operation producing `out`. Returns the new node id.
  int record(Tensor<T>& out, std::vector<int> inputs, BackwardFn fn) {
    int id = add_node(std::move(inputs), std::move(fn), out.size());
    out.bind_node(id_, id);
    return id;
  }

  // Gradient buffer for a node, allocated as zeros on first touch.
  std::vector<T>& grad_buf(int node) {
    auto& g = grads_[static_cast<std::size_t>(node)];
    if (g.empty()) g.assign(static_cast<std::size_t>(nodes_[static_cast<std::size_t>(node)].size), T(0));
    return g;
  }

  // Reverse sweep from a scalar loss. Gradients of watched parameters are
  // accumulated into their tensors' grad buffers; parameters that do not
  // reach the loss receive nothing (their buffers stay as they were, i.e.
  // exactly zero after a zero_grad).
  void backward(const Tensor<T>& loss) {
    if (loss.size() != 1)
      throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    int root = node_of(loss);
    if (root < 0)
      throw ContractError("backward: loss was not produced by this tape");

    grads_.assign(nodes_.size(), {});
    std::vector<char> reachable(nodes_.size(), 0);
    std::vector<int> stack{root};
    reachable[static_cast<std::size_t>(root)] = 1;
    while (!stack.empty()) {
      int n = stack.back();
      stack.pop_back();
      for (int in : nodes_[static_cast<std::size_t>(n)].inputs) {
        if (in >= 0 && !reachable[static_cast<std::size_t>(in)]) {
          reachable[static_cast<std::size_t>(in)] = 1;
          stack.push_back(in);
        }
      }
    }

    grad_buf(root).assign(1, T(1));
    for (int n = root; n >= 0; --n) {
      auto& node = nodes_[static_cast<std::size_t>(n)];
      if (!reachable[static_cast<std::size_t>(n)] || !node.backward) continue;
      auto& g = grads_[static_cast<std::size_t>(n)];
      if (g.empty()) continue;
      node.backward(*this, g);
    }

    for (auto& t : watched_) {
      int n = node_of(t);
      if (n < 0) continue;
      auto& g = grads_[static_cast<std::size_t>(n)];
      if (g.empty()) continue;
      auto& acc = t.grad();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
    }
  }

  // Gradient of a tensor after backward(), as a tensor of the same shape.
  // Zero for tensors off the loss path.
  Tensor<T> grad(const Tensor<T>& t) {
    Tensor<T> g(t.shape());
    int n = node_of(t);
    if (n >= 0 && static_cast<std::size_t>(n) < grads_.size() && !grads_[static_cast<std::size_t>(n)].empty()) {
      std::copy(grads_[static_cast<std::size_t>(n)].begin(), grads_[static_cast<std::size_t>(n)].end(), g.data());
    }
    return g;
  }

 private:
  struct Node {
    std::vector<int> inputs;
    BackwardFn backward;
    std::int64_t size = 0;
  };

  static std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
  }

  int add_node(std::vector<int> inputs, BackwardFn fn, std::int64_t out_size) {
    nodes_.push_back(Node{std::move(inputs), std::move(fn), out_size});
    return static_cast<int>(nodes_.size() - 1);
  }

  std::uint64_t id_;
  bool recording_ = true;
  std::vector<Node> nodes_;
  std::vector<std::vector<T>> grads_;
  std::vector<Tensor<T>> watched_;
};

}  // namespace lrnmt
