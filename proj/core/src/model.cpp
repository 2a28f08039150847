#include "fedsim/model.hpp"

#include <cmath>
#include <stdexcept>

#include "fedsim/losses.hpp"

namespace fedsim::nn {

namespace {

Tensor block_view(const ParamVector& params, const ParamBlock& block) {
  Tensor t;
  t.shape = block.shape;
  t.data.assign(params.values.begin() + static_cast<std::ptrdiff_t>(block.offset),
                params.values.begin() + static_cast<std::ptrdiff_t>(block.offset + block.size));
  return t;
}

void block_accumulate(ParamVector& params, const ParamBlock& block, const Tensor& values) {
  for (std::size_t i = 0; i < block.size; ++i) params.values[block.offset + i] += values.data[i];
}

}  // namespace

std::shared_ptr<const ParamLayout> ParamLayout::flat(std::size_t n) {
  auto layout = std::make_shared<ParamLayout>();
  layout->blocks.push_back({"values", {n}, 0, n, kNoSlot});
  layout->total = n;
  return layout;
}

bool combinable(const ParamVector& a, const ParamVector& b) {
  if (!a.layout || !b.layout) return false;
  if (a.layout == b.layout) return true;
  return *a.layout == *b.layout;
}

void require_combinable(const ParamVector& a, const ParamVector& b, const char* what) {
  if (!combinable(a, b)) {
    throw std::invalid_argument(std::string(what) + ": parameter layouts differ");
  }
}

ParamVector zeros_like(const ParamVector& p) {
  ParamVector z;
  z.layout = p.layout;
  z.values.assign(p.values.size(), 0.0);
  return z;
}

void add_scaled(ParamVector& dst, const ParamVector& src, double c) {
  require_combinable(dst, src, "add_scaled");
  for (std::size_t i = 0; i < dst.values.size(); ++i) dst.values[i] += c * src.values[i];
}

ParamVector subtract(const ParamVector& a, const ParamVector& b) {
  require_combinable(a, b, "subtract");
  ParamVector out = a;
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] -= b.values[i];
  return out;
}

double dot(const ParamVector& a, const ParamVector& b) {
  require_combinable(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) s += a.values[i] * b.values[i];
  return s;
}

double norm2(const ParamVector& p) { return std::sqrt(dot(p, p)); }

void scale(ParamVector& p, double c) {
  for (double& v : p.values) v *= c;
}

std::vector<LayerSpec> SiameseModel::default_trunk() {
  return {
      LayerSpec::conv2d(32, 3), LayerSpec::relu(),      LayerSpec::maxpool2d(),
      LayerSpec::conv2d(64, 3), LayerSpec::relu(),      LayerSpec::maxpool2d(),
      LayerSpec::flatten(),     LayerSpec::dense(128),  LayerSpec::relu(),
      LayerSpec::dropout(0.5),
  };
}

SiameseModel SiameseModel::make_default(std::size_t input_size, HeadKind head, double margin,
                                        std::size_t num_classes) {
  return SiameseModel(default_trunk(), Dims{1, input_size, input_size}, head, margin, num_classes);
}

SiameseModel::SiameseModel(std::vector<LayerSpec> trunk, Dims input, HeadKind head, double margin,
                           std::size_t num_classes)
    : trunk_(std::move(trunk)), input_(input), head_(head), margin_(margin), num_classes_(num_classes) {
  if (trunk_.empty()) throw std::invalid_argument("SiameseModel: empty trunk");
  if (margin_ <= 0.0) throw std::invalid_argument("SiameseModel: margin must be positive");
  if (head_ == HeadKind::SoftmaxClassifier && num_classes_ < 2) {
    throw std::invalid_argument("SiameseModel: classifier needs at least 2 classes");
  }

  auto layout = std::make_shared<ParamLayout>();
  dims_.push_back(input_);
  pool_slot_.assign(trunk_.size(), kNoSlot);
  dropout_slot_.assign(trunk_.size(), kNoSlot);
  layer_blocks_.assign(trunk_.size(), {kNoSlot, kNoSlot});

  std::size_t conv_count = 0, dense_count = 0;
  for (std::size_t i = 0; i < trunk_.size(); ++i) {
    const LayerSpec& spec = trunk_[i];
    const Dims in = dims_.back();
    dims_.push_back(infer_output_dims(spec, in));
    switch (spec.kind) {
      case LayerKind::Conv2D: {
        ++conv_count;
        const std::string base = "conv" + std::to_string(conv_count);
        ParamBlock w{base + ".weight", {spec.filters, in.c, spec.kernel, spec.kernel}, layout->total, 0, i};
        w.size = shape_product(w.shape);
        layout->total += w.size;
        ParamBlock b{base + ".bias", {spec.filters}, layout->total, spec.filters, i};
        layout->total += b.size;
        layer_blocks_[i] = {layout->blocks.size(), layout->blocks.size() + 1};
        layout->blocks.push_back(std::move(w));
        layout->blocks.push_back(std::move(b));
        break;
      }
      case LayerKind::Dense: {
        ++dense_count;
        const std::string base = "dense" + std::to_string(dense_count);
        ParamBlock w{base + ".weight", {spec.units, in.flat()}, layout->total, 0, i};
        w.size = shape_product(w.shape);
        layout->total += w.size;
        ParamBlock b{base + ".bias", {spec.units}, layout->total, spec.units, i};
        layout->total += b.size;
        layer_blocks_[i] = {layout->blocks.size(), layout->blocks.size() + 1};
        layout->blocks.push_back(std::move(w));
        layout->blocks.push_back(std::move(b));
        break;
      }
      case LayerKind::MaxPool2D:
        pool_slot_[i] = num_pool_++;
        break;
      case LayerKind::Dropout:
        dropout_slot_[i] = num_dropout_++;
        break;
      default:
        break;
    }
  }

  if (head_ == HeadKind::SoftmaxClassifier) {
    const std::size_t emb = dims_.back().flat();
    ParamBlock w{"classifier.weight", {num_classes_, emb}, layout->total, num_classes_ * emb, kNoSlot};
    layout->total += w.size;
    ParamBlock b{"classifier.bias", {num_classes_}, layout->total, num_classes_, kNoSlot};
    layout->total += b.size;
    head_weight_block_ = layout->blocks.size();
    head_bias_block_ = layout->blocks.size() + 1;
    layout->blocks.push_back(std::move(w));
    layout->blocks.push_back(std::move(b));
  }

  layout_ = std::move(layout);
}

ParamVector SiameseModel::init_params(std::uint64_t seed) const {
  ParamVector p;
  p.layout = layout_;
  p.values.assign(layout_->total, 0.0);
  Rng rng(derive_seed(seed, {0x1717}));
  for (const ParamBlock& block : layout_->blocks) {
    if (block.name.ends_with(".bias")) continue;
    // He-uniform: limit = sqrt(6 / fan_in)
    std::size_t fan_in = 1;
    for (std::size_t i = 1; i < block.shape.size(); ++i) fan_in *= block.shape[i];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < block.size; ++i) {
      p.values[block.offset + i] = rng.uniform(-limit, limit);
    }
  }
  return p;
}

void SiameseModel::validate_params(const ParamVector& params, const char* what) const {
  if (!params.layout || !(params.layout == layout_ || *params.layout == *layout_)) {
    throw std::invalid_argument(std::string(what) + ": params do not match this model's layout");
  }
}

void SiameseModel::validate_image(const Tensor& image, const char* what) const {
  const bool ok2 = image.rank() == 2 && input_.c == 1 && image.dim(0) == input_.h && image.dim(1) == input_.w;
  const bool ok3 = image.rank() == 3 && image.dim(0) == input_.c && image.dim(1) == input_.h &&
                   image.dim(2) == input_.w;
  if (!ok2 && !ok3) {
    throw std::invalid_argument(std::string(what) + ": image shape " + image.shape_str() +
                                " does not match model input " + std::to_string(input_.c) + "x" +
                                std::to_string(input_.h) + "x" + std::to_string(input_.w));
  }
}

ForwardTrace SiameseModel::forward_trace(const ParamVector& params, const Tensor& image, RunMode mode,
                                         Rng* rng) const {
  validate_params(params, "forward");
  validate_image(image, "forward");
  if (mode == RunMode::Train && num_dropout_ > 0 && rng == nullptr) {
    throw std::invalid_argument("forward: train mode requires an rng for dropout");
  }

  ForwardTrace trace;
  trace.acts.reserve(trunk_.size() + 1);
  trace.pool_argmax.resize(num_pool_);
  trace.dropout_masks.resize(num_dropout_);

  Tensor x = image;
  if (x.rank() == 2) x.shape = {1, x.dim(0), x.dim(1)};
  trace.acts.push_back(std::move(x));

  for (std::size_t i = 0; i < trunk_.size(); ++i) {
    const Tensor& in = trace.acts.back();
    const LayerSpec& spec = trunk_[i];
    Tensor out;
    switch (spec.kind) {
      case LayerKind::Conv2D: {
        const auto [wb, bb] = layer_blocks_[i];
        out = conv2d(in, block_view(params, layout_->blocks[wb]), block_view(params, layout_->blocks[bb]));
        break;
      }
      case LayerKind::MaxPool2D: {
        PoolResult res = maxpool2d(in);
        trace.pool_argmax[pool_slot_[i]] = std::move(res.argmax);
        out = std::move(res.output);
        break;
      }
      case LayerKind::Dense: {
        const auto [wb, bb] = layer_blocks_[i];
        out = dense(in, block_view(params, layout_->blocks[wb]), block_view(params, layout_->blocks[bb]));
        out.shape = {spec.units};
        break;
      }
      case LayerKind::ReLU:
        out = relu(in);
        break;
      case LayerKind::Dropout: {
        std::vector<double>& mask = trace.dropout_masks[dropout_slot_[i]];
        mask.assign(in.size(), 1.0);
        if (mode == RunMode::Train && spec.dropout_p > 0.0) {
          const double keep = 1.0 - spec.dropout_p;
          for (double& m : mask) m = (rng->uniform() < spec.dropout_p) ? 0.0 : 1.0 / keep;
        }
        out = dropout_apply(in, mask);
        break;
      }
      case LayerKind::Flatten:
        out = in;
        out.shape = {in.size()};
        break;
    }
    trace.acts.push_back(std::move(out));
  }
  return trace;
}

Tensor SiameseModel::forward(const ParamVector& params, const Tensor& image, RunMode mode, Rng* rng) const {
  return forward_trace(params, image, mode, rng).acts.back();
}

Tensor SiameseModel::embedding_from(const ParamVector& params, const ForwardTrace& trace,
                                    std::size_t from_layer) const {
  if (from_layer > trunk_.size()) throw std::invalid_argument("embedding_from: layer out of range");
  Tensor x = trace.acts[from_layer];
  for (std::size_t i = from_layer; i < trunk_.size(); ++i) {
    const LayerSpec& spec = trunk_[i];
    switch (spec.kind) {
      case LayerKind::Conv2D: {
        const auto [wb, bb] = layer_blocks_[i];
        x = conv2d(x, block_view(params, layout_->blocks[wb]), block_view(params, layout_->blocks[bb]));
        break;
      }
      case LayerKind::MaxPool2D:
        x = maxpool2d(x).output;
        break;
      case LayerKind::Dense: {
        const auto [wb, bb] = layer_blocks_[i];
        x = dense(x, block_view(params, layout_->blocks[wb]), block_view(params, layout_->blocks[bb]));
        x.shape = {spec.units};
        break;
      }
      case LayerKind::ReLU:
        x = relu(x);
        break;
      case LayerKind::Dropout:
        x = dropout_apply(x, trace.dropout_masks[dropout_slot_[i]]);
        break;
      case LayerKind::Flatten:
        x.shape = {x.size()};
        break;
    }
  }
  return x;
}

Tensor SiameseModel::head_logits(const ParamVector& params, const Tensor& embedding) const {
  if (head_ != HeadKind::SoftmaxClassifier) {
    throw std::invalid_argument("head_logits: model has no classifier head");
  }
  Tensor logits = dense(embedding, block_view(params, layout_->blocks[head_weight_block_]),
                        block_view(params, layout_->blocks[head_bias_block_]));
  logits.shape = {num_classes_};
  return logits;
}

void SiameseModel::backprop_branch(const ParamVector& params, const ForwardTrace& trace,
                                   const Tensor& grad_embedding, ParamVector& grad) const {
  Tensor g = grad_embedding;
  for (std::size_t ii = trunk_.size(); ii-- > 0;) {
    const LayerSpec& spec = trunk_[ii];
    const Tensor& in = trace.acts[ii];
    const Tensor& out = trace.acts[ii + 1];
    switch (spec.kind) {
      case LayerKind::Conv2D: {
        const auto [wb, bb] = layer_blocks_[ii];
        g.shape = out.shape;
        Tensor gin, gw, gb;
        conv2d_backward(in, block_view(params, layout_->blocks[wb]), g, gin, gw, gb);
        block_accumulate(grad, grad.layout->blocks[wb], gw);
        block_accumulate(grad, grad.layout->blocks[bb], gb);
        g = std::move(gin);
        break;
      }
      case LayerKind::MaxPool2D: {
        PoolResult res;  // only argmax is needed by the backward pass
        res.output = out;
        res.argmax = trace.pool_argmax[pool_slot_[ii]];
        g.shape = out.shape;
        g = maxpool2d_backward(in, res, g);
        break;
      }
      case LayerKind::Dense: {
        const auto [wb, bb] = layer_blocks_[ii];
        Tensor gin, gw, gb;
        dense_backward(in, block_view(params, layout_->blocks[wb]), g, gin, gw, gb);
        block_accumulate(grad, grad.layout->blocks[wb], gw);
        block_accumulate(grad, grad.layout->blocks[bb], gb);
        g = std::move(gin);
        g.shape = in.shape;
        break;
      }
      case LayerKind::ReLU:
        g = relu_backward(out, g);
        break;
      case LayerKind::Dropout:
        g = dropout_apply(g, trace.dropout_masks[dropout_slot_[ii]]);
        break;
      case LayerKind::Flatten:
        g.shape = in.shape;
        break;
    }
  }
}

BatchResult SiameseModel::backward(const ParamVector& params, std::span<const PairSample> batch,
                                   RunMode mode, Rng* rng) const {
  if (head_ != HeadKind::Contrastive) {
    throw std::invalid_argument("backward: pair batches require the contrastive head");
  }
  if (batch.empty()) throw std::invalid_argument("backward: empty batch");

  BatchResult res;
  res.grad.layout = layout_;
  res.grad.values.assign(layout_->total, 0.0);
  for (const PairSample& pair : batch) {
    ForwardTrace ta = forward_trace(params, *pair.a, mode, rng);
    ForwardTrace tb = forward_trace(params, *pair.b, mode, rng);
    ContrastiveResult cr = contrastive_loss(ta.acts.back(), tb.acts.back(), pair.y, margin_);
    res.loss += cr.loss;
    backprop_branch(params, ta, cr.grad_a, res.grad);
    backprop_branch(params, tb, cr.grad_b, res.grad);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  res.loss *= inv;
  scale(res.grad, inv);
  return res;
}

BatchResult SiameseModel::backward(const ParamVector& params, std::span<const LabeledSample> batch,
                                   RunMode mode, Rng* rng) const {
  if (head_ != HeadKind::SoftmaxClassifier) {
    throw std::invalid_argument("backward: labeled batches require the classifier head");
  }
  if (batch.empty()) throw std::invalid_argument("backward: empty batch");

  BatchResult res;
  res.grad.layout = layout_;
  res.grad.values.assign(layout_->total, 0.0);
  for (const LabeledSample& item : batch) {
    ForwardTrace trace = forward_trace(params, *item.image, mode, rng);
    const Tensor& emb = trace.acts.back();
    Tensor logits = head_logits(params, emb);
    XentResult xr = softmax_xent(logits, item.label);
    res.loss += xr.loss;

    Tensor g_emb, gw, gb;
    dense_backward(emb, block_view(params, layout_->blocks[head_weight_block_]), xr.grad, g_emb, gw, gb);
    block_accumulate(res.grad, res.grad.layout->blocks[head_weight_block_], gw);
    block_accumulate(res.grad, res.grad.layout->blocks[head_bias_block_], gb);
    g_emb.shape = emb.shape;
    backprop_branch(params, trace, g_emb, res.grad);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  res.loss *= inv;
  scale(res.grad, inv);
  return res;
}

double SiameseModel::loss(const ParamVector& params, std::span<const PairSample> batch, RunMode mode,
                          Rng* rng) const {
  if (head_ != HeadKind::Contrastive) {
    throw std::invalid_argument("loss: pair batches require the contrastive head");
  }
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  double total = 0.0;
  for (const PairSample& pair : batch) {
    Tensor ea = forward(params, *pair.a, mode, rng);
    Tensor eb = forward(params, *pair.b, mode, rng);
    total += contrastive_loss(ea, eb, pair.y, margin_).loss;
  }
  return total / static_cast<double>(batch.size());
}

double SiameseModel::loss(const ParamVector& params, std::span<const LabeledSample> batch, RunMode mode,
                          Rng* rng) const {
  if (head_ != HeadKind::SoftmaxClassifier) {
    throw std::invalid_argument("loss: labeled batches require the classifier head");
  }
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  double total = 0.0;
  for (const LabeledSample& item : batch) {
    Tensor emb = forward(params, *item.image, mode, rng);
    total += softmax_xent(head_logits(params, emb), item.label).loss;
  }
  return total / static_cast<double>(batch.size());
}

}  // namespace fedsim::nn
