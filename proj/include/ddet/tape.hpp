#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ddet/error.hpp"
#include "ddet/tensor.hpp"

namespace ddet {

// Reverse-mode gradient tape. Forward operations append a node holding the
// op's output tensor and a backward closure over the tensors it touched;
// backward() replays the nodes in reverse, accumulating (+=) into the grad
// buffers of the inputs.
//
// Interior grads are scratch: every node output's grad is cleared before a
// replay, so only leaves (tensors that are never an op output) accumulate
// across calls. Running backward twice therefore accumulates exactly twice
// the single-pass gradient into the leaves.
//
// The tape is single-threaded by contract: one tape per training thread.
template <typename T>
class GradTape {
 public:
  struct Node {
    const char* op;
    Tensor<T> out;
    std::function<void()> backward;
  };

  void record(const char* op, Tensor<T> out, std::function<void()> backward) {
    nodes_.push_back(Node{op, std::move(out), std::move(backward)});
  }

  // Clears interior grads, seeds d(loss)/d(loss) = 1, and replays in reverse.
  void backward(Tensor<T>& loss) {
    if (loss.numel() != 1) {
      throw ShapeError("backward: loss must be a single element, got " + loss.shape().str());
    }
    for (auto& node : nodes_) node.out.zero_grad();
    loss.ensure_grad()[0] = T{1};
    replay();
  }

  // Raw reverse replay with whatever upstream grads are already in place.
  // Nodes whose output never received a gradient are no-ops by construction
  // of the closures.
  void replay() {
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      it->backward();
    }
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
};

}  // namespace ddet
