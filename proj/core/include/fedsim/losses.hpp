#pragma once

#include <cstddef>

#include "fedsim/tensor.hpp"

namespace fedsim::nn {

struct ContrastiveResult {
  double loss = 0.0;
  Tensor grad_a;
  Tensor grad_b;
};

/// L = y * d^2 + (1-y) * max(0, margin - d)^2 with d the Euclidean distance
/// between the two embeddings. y = 1 for a matching pair.
ContrastiveResult contrastive_loss(const Tensor& emb_a, const Tensor& emb_b, int y, double margin);

struct XentResult {
  double loss = 0.0;
  Tensor grad;  // softmax(logits) - onehot(label)
};

/// Cross-entropy of softmax(logits) against a class index, stabilized by
/// max-subtraction.
XentResult softmax_xent(const Tensor& logits, std::size_t label);

}  // namespace fedsim::nn
