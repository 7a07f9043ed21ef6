#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "idcgan/tensor.hpp"

namespace idcgan {

// Reverse-mode gradient tape. Operations are recorded in execution order,
// which is a topological order of the forward graph; backward() walks the
// entries once in reverse and accumulates cotangents into input nodes.
//
// A tensor participates in differentiation only on the tape that watched or
// recorded it (matched by tape id); any other tape treats it as a constant.
// One forward/backward pass per tape; single-threaded by contract.
template <typename Scalar>
class Tape {
 public:
  using Array = typename Tensor<Scalar>::Array;
  using BackFn = std::function<void(Tape&, const Array&)>;

  Tape() : id_(next_id()) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::uint64_t id() const { return id_; }

  // Registers a leaf whose gradient should be retained after backward().
  int watch(Tensor<Scalar>& t) {
    t.tape_id = id_;
    t.node = record("leaf", {}, nullptr, t.size());
    return t.node;
  }

  bool owns(const Tensor<Scalar>& t) const {
    return t.node >= 0 && t.tape_id == id_;
  }

  int record(const char* kind, std::vector<int> inputs, BackFn back, std::int64_t out_size) {
    nodes_.push_back(Node{kind, std::move(inputs), std::move(back), out_size});
    grads_.emplace_back();
    return static_cast<int>(nodes_.size()) - 1;
  }

  // Seeds d(loss)/d(loss) = 1 and propagates through every node reachable
  // from the loss, exactly once per node. Gradients of interior nodes are
  // released as soon as they are consumed; leaf gradients are retained.
  void backward(const Tensor<Scalar>& loss) {
    expect(owns(loss), "backward: loss tensor is detached from this tape");
    expect(loss.size() == 1,
           "backward: loss must be scalar, got " + to_string(loss.shape));
    expect(!consumed_, "backward: tape already consumed");
    consumed_ = true;
    grads_[static_cast<std::size_t>(loss.node)] = Array::Ones(1);
    for (int i = loss.node; i >= 0; --i) {
      auto& g = grads_[static_cast<std::size_t>(i)];
      if (g.size() == 0) continue;  // not reachable from the loss
      if (nodes_[static_cast<std::size_t>(i)].back) {
        nodes_[static_cast<std::size_t>(i)].back(*this, g);
        g.resize(0);  // interior gradient no longer needed
      }
    }
  }

  bool has_grad(const Tensor<Scalar>& t) const {
    return owns(t) && grads_[static_cast<std::size_t>(t.node)].size() > 0;
  }

  // Gradient of the loss w.r.t. a watched leaf (zeros if unreached).
  Tensor<Scalar> grad(const Tensor<Scalar>& t) const {
    expect(owns(t), "grad: tensor is not on this tape");
    expect(!nodes_[static_cast<std::size_t>(t.node)].back || !consumed_,
           "grad: interior gradients are released during backward; watch the tensor instead");
    Tensor<Scalar> g;
    g.shape = t.shape;
    const Array& stored = grads_[static_cast<std::size_t>(t.node)];
    g.data = stored.size() > 0 ? stored : Array::Zero(t.size());
    return g;
  }

  template <typename Expr>
  void accum(int node, const Expr& e) {
    Array& g = grads_[static_cast<std::size_t>(node)];
    if (g.size() == 0) {
      g = e;
    } else {
      g += e;
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    const char* kind;
    std::vector<int> inputs;
    BackFn back;
    std::int64_t size;
  };

  static std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
  }

  std::vector<Node> nodes_;
  std::vector<Array> grads_;
  std::uint64_t id_;
  bool consumed_ = false;
};

}  // namespace idcgan
