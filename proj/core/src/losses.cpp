#include "fedsim/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fedsim::nn {

ContrastiveResult contrastive_loss(const Tensor& emb_a, const Tensor& emb_b, int y, double margin) {
  if (!emb_a.same_shape(emb_b)) {
    throw std::invalid_argument("contrastive_loss: embedding shapes differ " + emb_a.shape_str() +
                                " vs " + emb_b.shape_str());
  }
  if (margin <= 0.0) throw std::invalid_argument("contrastive_loss: margin must be positive");
  if (y != 0 && y != 1) throw std::invalid_argument("contrastive_loss: label must be 0 or 1");

  const std::size_t n = emb_a.size();
  double d2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = emb_a.data[i] - emb_b.data[i];
    d2 += diff * diff;
  }
  const double d = std::sqrt(d2);

  ContrastiveResult res;
  res.grad_a = Tensor(emb_a.shape);
  res.grad_b = Tensor(emb_b.shape);
  if (y == 1) {
    res.loss = d2;
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = emb_a.data[i] - emb_b.data[i];
      res.grad_a.data[i] = 2.0 * diff;
      res.grad_b.data[i] = -2.0 * diff;
    }
  } else {
    const double hinge = margin - d;
    if (hinge > 0.0) {
      res.loss = hinge * hinge;
      if (d > 0.0) {
        const double scale = -2.0 * hinge / d;
        for (std::size_t i = 0; i < n; ++i) {
          const double diff = emb_a.data[i] - emb_b.data[i];
          res.grad_a.data[i] = scale * diff;
          res.grad_b.data[i] = -scale * diff;
        }
      }
      // d == 0: the hinge is non-differentiable, gradients stay zero
    }
  }
  return res;
}

XentResult softmax_xent(const Tensor& logits, std::size_t label) {
  const std::size_t k = logits.size();
  if (k == 0) throw std::invalid_argument("softmax_xent: empty logits");
  if (label >= k) {
    throw std::invalid_argument("softmax_xent: label " + std::to_string(label) +
                                " out of range for " + std::to_string(k) + " classes");
  }
  ensure_finite(logits, "softmax_xent");

  const double mx = *std::max_element(logits.data.begin(), logits.data.end());
  double denom = 0.0;
  for (double v : logits.data) denom += std::exp(v - mx);

  XentResult res;
  res.grad = Tensor(logits.shape);
  for (std::size_t i = 0; i < k; ++i) {
    res.grad.data[i] = std::exp(logits.data[i] - mx) / denom;
  }
  res.loss = -(logits.data[label] - mx - std::log(denom));
  res.grad.data[label] -= 1.0;
  return res;
}

}  // namespace fedsim::nn
