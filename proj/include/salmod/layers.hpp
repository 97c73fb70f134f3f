#pragma once

#include <cstddef>

#include "salmod/tape.hpp"

namespace salmod {

/// Geometry of a 2-D convolution. Kernel size and channel counts come from the
/// weight tensor [out, in, kh, kw].
struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Output extent of a sliding window; throws ShapeError when it would be < 1.
std::size_t conv_output_size(std::size_t input, std::size_t kernel, std::size_t stride,
                             std::size_t padding);

/// Cross-correlation with bias. input [C,H,W], weight [C',C,kh,kw], bias [C'].
/// Each output accumulates bias first, then w*x over (c, ky, kx) in row-major
/// order with zero padding.
Var conv2d(Var input, Var weight, Var bias, ConvGeometry geometry);

/// Per-window maximum over [C,H,W]; the gradient goes to the first maximal
/// element in row-major window order.
Var maxpool2d(Var input, std::size_t window, std::size_t stride);

Var relu(Var x);
Var sigmoid(Var x);

/// y = W x + b with x flattened. weight [out, in], bias [out].
Var fully_connected(Var x, Var weight, Var bias);

/// Softmax cross-entropy of a logits vector against one label, shape [1].
Var softmax_cross_entropy(Var logits, std::size_t label);

/// Saliency modulation of features [C,H,W] by a single map [1,H,W]:
///   skip == false: out = features * mod
///   skip == true:  out = features * (mod + 1)
/// The backward pass scales the upstream gradient by the same factor, and the
/// gradient of mod is the channel sum of upstream * features.
Var modulate(Var features, Var modulation, bool skip);

}  // namespace salmod
