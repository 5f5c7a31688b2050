#include "cabin/tensor.hpp"

#include <cmath>

namespace cabin::num {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape* tape) : previous_(g_active_tape) {
  g_active_tape = tape;
}

TapeScope::~TapeScope() { g_active_tape = previous_; }

void Tape::backward(Tensor& loss) {
  if (loss.size() != 1)
    throw DimensionError("backward expects a scalar loss, got " +
                         std::to_string(loss.rows()) + "x" +
                         std::to_string(loss.cols()));
  if (!loss.requires_grad())
    throw InternalError("backward on a loss that was never recorded");
  if (!std::isfinite(loss.item()))
    throw NumericError("backward on non-finite loss");
  loss.grad_at(0, 0) = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) it->backward();
}

}  // namespace cabin::num
