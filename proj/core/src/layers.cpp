#include "fedsim/layers.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace fedsim::nn {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  require(input.rank() == 3, "conv2d: input must be C x H x W, got " + input.shape_str());
  require(kernels.rank() == 4, "conv2d: kernels must be F x C x K x K, got " + kernels.shape_str());
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t f = kernels.dim(0), kc = kernels.dim(1), k = kernels.dim(2);
  require(kernels.dim(3) == k, "conv2d: kernels must be square");
  require(kc == c, "conv2d: kernel channels " + std::to_string(kc) + " != input channels " + std::to_string(c));
  require(k <= h && k <= w, "conv2d: kernel larger than input " + input.shape_str());
  require(bias.rank() == 1 && bias.dim(0) == f, "conv2d: bias must have one entry per filter");

  const std::size_t oh = h - k + 1, ow = w - k + 1;
  Tensor out({f, oh, ow});
  for (std::size_t fi = 0; fi < f; ++fi) {
    const double b = bias.data[fi];
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = b;
        for (std::size_t ci = 0; ci < c; ++ci) {
          const double* ip = &input.data[(ci * h + oy) * w + ox];
          const double* kp = &kernels.data[((fi * c + ci) * k) * k];
          for (std::size_t ky = 0; ky < k; ++ky) {
            const double* row = ip + ky * w;
            const double* krow = kp + ky * k;
            for (std::size_t kx = 0; kx < k; ++kx) acc += row[kx] * krow[kx];
          }
        }
        out.data[(fi * oh + oy) * ow + ox] = acc;
      }
    }
  }
  return out;
}

void conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& grad_out,
                     Tensor& grad_input, Tensor& grad_kernels, Tensor& grad_bias) {
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t f = kernels.dim(0), k = kernels.dim(2);
  const std::size_t oh = h - k + 1, ow = w - k + 1;
  require(grad_out.rank() == 3 && grad_out.dim(0) == f && grad_out.dim(1) == oh && grad_out.dim(2) == ow,
          "conv2d_backward: grad_out shape mismatch " + grad_out.shape_str());

  grad_input = Tensor(input.shape);
  grad_kernels = Tensor(kernels.shape);
  grad_bias = Tensor({f});

  for (std::size_t fi = 0; fi < f; ++fi) {
    double bsum = 0.0;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double g = grad_out.data[(fi * oh + oy) * ow + ox];
        if (g == 0.0) continue;
        bsum += g;
        for (std::size_t ci = 0; ci < c; ++ci) {
          const double* ip = &input.data[(ci * h + oy) * w + ox];
          double* gip = &grad_input.data[(ci * h + oy) * w + ox];
          const double* kp = &kernels.data[((fi * c + ci) * k) * k];
          double* gkp = &grad_kernels.data[((fi * c + ci) * k) * k];
          for (std::size_t ky = 0; ky < k; ++ky) {
            const double* irow = ip + ky * w;
            double* girow = gip + ky * w;
            const double* krow = kp + ky * k;
            double* gkrow = gkp + ky * k;
            for (std::size_t kx = 0; kx < k; ++kx) {
              gkrow[kx] += g * irow[kx];
              girow[kx] += g * krow[kx];
            }
          }
        }
      }
    }
    grad_bias.data[fi] = bsum;
  }
}

PoolResult maxpool2d(const Tensor& input) {
  require(input.rank() == 3, "maxpool2d: input must be C x H x W, got " + input.shape_str());
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t oh = h / 2, ow = w / 2;
  require(oh > 0 && ow > 0, "maxpool2d: input too small " + input.shape_str());

  PoolResult res;
  res.output = Tensor({c, oh, ow});
  res.argmax.assign(c * oh * ow, 0);
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t base = (ci * h + 2 * oy) * w + 2 * ox;
        // first row-major maximum wins ties
        std::size_t best = base;
        double bv = input.data[base];
        const std::size_t cands[3] = {base + 1, base + w, base + w + 1};
        for (std::size_t idx : cands) {
          if (input.data[idx] > bv) {
            bv = input.data[idx];
            best = idx;
          }
        }
        res.output.data[(ci * oh + oy) * ow + ox] = bv;
        res.argmax[(ci * oh + oy) * ow + ox] = best;
      }
    }
  }
  return res;
}

Tensor maxpool2d_backward(const Tensor& input, const PoolResult& fwd, const Tensor& grad_out) {
  require(grad_out.data.size() == fwd.output.data.size(), "maxpool2d_backward: grad shape mismatch");
  Tensor grad_input(input.shape);
  for (std::size_t i = 0; i < fwd.argmax.size(); ++i) {
    grad_input.data[fwd.argmax[i]] += grad_out.data[i];
  }
  return grad_input;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  const std::size_t n = input.size();
  require(weights.rank() == 2 && weights.dim(1) == n,
          "dense: weights " + weights.shape_str() + " incompatible with input of length " + std::to_string(n));
  const std::size_t units = weights.dim(0);
  require(bias.size() == units, "dense: bias length mismatch");
  Tensor out({units});
  for (std::size_t u = 0; u < units; ++u) {
    const double* wrow = &weights.data[u * n];
    double acc = bias.data[u];
    for (std::size_t i = 0; i < n; ++i) acc += wrow[i] * input.data[i];
    out.data[u] = acc;
  }
  return out;
}

void dense_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out,
                    Tensor& grad_input, Tensor& grad_weights, Tensor& grad_bias) {
  const std::size_t n = input.size();
  const std::size_t units = weights.dim(0);
  require(grad_out.size() == units, "dense_backward: grad shape mismatch");

  grad_input = Tensor({n});
  grad_weights = Tensor(weights.shape);
  grad_bias = Tensor({units});
  for (std::size_t u = 0; u < units; ++u) {
    const double g = grad_out.data[u];
    grad_bias.data[u] = g;
    const double* wrow = &weights.data[u * n];
    double* gwrow = &grad_weights.data[u * n];
    if (g == 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) {
      gwrow[i] = g * input.data[i];
      grad_input.data[i] += g * wrow[i];
    }
  }
  return;
}

Tensor relu(const Tensor& input) {
  Tensor out(input.shape);
  for (std::size_t i = 0; i < input.size(); ++i) out.data[i] = std::max(0.0, input.data[i]);
  return out;
}

Tensor relu_backward(const Tensor& output, const Tensor& grad_out) {
  Tensor grad(output.shape);
  for (std::size_t i = 0; i < output.size(); ++i) {
    grad.data[i] = output.data[i] > 0.0 ? grad_out.data[i] : 0.0;
  }
  return grad;
}

Tensor dropout_apply(const Tensor& input, const std::vector<double>& mask) {
  require(mask.size() == input.size(), "dropout: mask length mismatch");
  Tensor out(input.shape);
  for (std::size_t i = 0; i < input.size(); ++i) out.data[i] = input.data[i] * mask[i];
  return out;
}

Dims infer_output_dims(const LayerSpec& spec, const Dims& in) {
  switch (spec.kind) {
    case LayerKind::Conv2D: {
      require(spec.filters > 0, "Conv2D: filters must be positive");
      require(in.h >= spec.kernel && in.w >= spec.kernel,
              "Conv2D: kernel larger than input " + std::to_string(in.h) + "x" + std::to_string(in.w));
      return {spec.filters, in.h - spec.kernel + 1, in.w - spec.kernel + 1};
    }
    case LayerKind::MaxPool2D: {
      require(in.h / 2 > 0 && in.w / 2 > 0, "MaxPool2D: input too small");
      return {in.c, in.h / 2, in.w / 2};
    }
    case LayerKind::Dense:
      require(spec.units > 0, "Dense: units must be positive");
      return {spec.units, 1, 1};
    case LayerKind::Dropout:
      require(spec.dropout_p >= 0.0 && spec.dropout_p < 1.0, "Dropout: p must be in [0, 1)");
      return in;
    case LayerKind::ReLU:
      return in;
    case LayerKind::Flatten:
      return {in.flat(), 1, 1};
  }
  throw std::invalid_argument("unknown layer kind");
}

}  // namespace fedsim::nn
