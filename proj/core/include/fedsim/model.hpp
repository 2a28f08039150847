#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fedsim/layers.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/tensor.hpp"

namespace fedsim::nn {

inline constexpr std::size_t kNoSlot = std::numeric_limits<std::size_t>::max();

/// One named contiguous slice of the flattened parameter vector.
struct ParamBlock {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
  std::size_t layer = kNoSlot;  // trunk layer index, kNoSlot for head blocks

  bool operator==(const ParamBlock& o) const {
    return name == o.name && shape == o.shape && offset == o.offset && size == o.size;
  }
};

struct ParamLayout {
  std::vector<ParamBlock> blocks;
  std::size_t total = 0;

  bool operator==(const ParamLayout& o) const { return blocks == o.blocks && total == o.total; }

  /// Single anonymous block of length n; used by tests and plain-vector math.
  static std::shared_ptr<const ParamLayout> flat(std::size_t n);
};

/// Flattened trainable parameters. Two ParamVectors are combinable only when
/// their layouts are identical.
struct ParamVector {
  std::shared_ptr<const ParamLayout> layout;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
};

bool combinable(const ParamVector& a, const ParamVector& b);
void require_combinable(const ParamVector& a, const ParamVector& b, const char* what);

ParamVector zeros_like(const ParamVector& p);
/// dst += c * src
void add_scaled(ParamVector& dst, const ParamVector& src, double c);
ParamVector subtract(const ParamVector& a, const ParamVector& b);
double dot(const ParamVector& a, const ParamVector& b);
double norm2(const ParamVector& p);
void scale(ParamVector& p, double c);

enum class HeadKind { Contrastive, SoftmaxClassifier };
enum class RunMode { Train, Eval };

/// A pair of images with match label (1 = same subject). Tensors are borrowed.
struct PairSample {
  const Tensor* a;
  const Tensor* b;
  int y;
};

struct LabeledSample {
  const Tensor* image;
  std::size_t label;
};

/// Per-image record of everything the backward pass (or a re-run from a given
/// layer) needs: layer inputs, pool argmaxes and dropout masks.
struct ForwardTrace {
  std::vector<Tensor> acts;  // acts[i] = input of layer i; acts.back() = embedding
  std::vector<std::vector<std::size_t>> pool_argmax;
  std::vector<std::vector<double>> dropout_masks;
};

struct BatchResult {
  double loss = 0.0;
  ParamVector grad;
};

/// Twin-branch convolutional network with shared weights. The trunk maps a
/// grayscale image to an embedding; the head is either a contrastive pair
/// objective on embeddings or a softmax classifier stacked on the embedding.
class SiameseModel {
 public:
  SiameseModel(std::vector<LayerSpec> trunk, Dims input, HeadKind head, double margin = 1.0,
               std::size_t num_classes = 10);

  /// Default client-side stack: Conv 32@3x3 + ReLU, MaxPool 2x2, Conv 64@3x3 +
  /// ReLU, MaxPool 2x2, Dense 128 + ReLU, Dropout 0.5, plus the chosen head.
  static std::vector<LayerSpec> default_trunk();
  static SiameseModel make_default(std::size_t input_size, HeadKind head = HeadKind::Contrastive,
                                   double margin = 1.0, std::size_t num_classes = 10);

  const std::vector<LayerSpec>& trunk() const { return trunk_; }
  HeadKind head() const { return head_; }
  double margin() const { return margin_; }
  std::size_t num_classes() const { return num_classes_; }
  Dims input_dims() const { return input_; }
  std::size_t embedding_size() const { return dims_.back().flat(); }
  const std::shared_ptr<const ParamLayout>& layout() const { return layout_; }
  /// Input dims of trunk layer i (dims(num_layers) = embedding dims).
  Dims dims(std::size_t layer) const { return dims_[layer]; }
  std::size_t num_layers() const { return trunk_.size(); }

  /// He-uniform weights, zero biases.
  ParamVector init_params(std::uint64_t seed) const;

  /// Embedding of one image. Train mode draws dropout masks from rng (must be
  /// non-null when the trunk has dropout); eval mode is deterministic.
  Tensor forward(const ParamVector& params, const Tensor& image, RunMode mode, Rng* rng = nullptr) const;

  ForwardTrace forward_trace(const ParamVector& params, const Tensor& image, RunMode mode,
                             Rng* rng = nullptr) const;

  /// Recomputes the embedding starting at `from_layer`, reusing the trace's
  /// stored input for that layer and its frozen dropout masks. from_layer ==
  /// num_layers() returns the stored embedding unchanged.
  Tensor embedding_from(const ParamVector& params, const ForwardTrace& trace,
                        std::size_t from_layer) const;

  /// Classifier logits for an embedding (SoftmaxClassifier head only).
  Tensor head_logits(const ParamVector& params, const Tensor& embedding) const;

  /// Mean contrastive loss and gradient over a pair batch. Gradients of the
  /// two shared-weight branches are summed into one ParamVector.
  BatchResult backward(const ParamVector& params, std::span<const PairSample> batch, RunMode mode,
                       Rng* rng = nullptr) const;
  /// Mean cross-entropy loss and gradient over a labeled batch.
  BatchResult backward(const ParamVector& params, std::span<const LabeledSample> batch, RunMode mode,
                       Rng* rng = nullptr) const;

  double loss(const ParamVector& params, std::span<const PairSample> batch, RunMode mode,
              Rng* rng = nullptr) const;
  double loss(const ParamVector& params, std::span<const LabeledSample> batch, RunMode mode,
              Rng* rng = nullptr) const;

  /// Accumulates dL/dparams of one branch into grad, given dL/dembedding.
  void backprop_branch(const ParamVector& params, const ForwardTrace& trace,
                       const Tensor& grad_embedding, ParamVector& grad) const;

 private:
  void validate_params(const ParamVector& params, const char* what) const;
  void validate_image(const Tensor& image, const char* what) const;

  std::vector<LayerSpec> trunk_;
  Dims input_;
  HeadKind head_;
  double margin_;
  std::size_t num_classes_;
  std::vector<Dims> dims_;                // dims_[i] = input of layer i, size num_layers+1
  std::vector<std::size_t> pool_slot_;    // per layer: index into trace.pool_argmax or kNoSlot
  std::vector<std::size_t> dropout_slot_; // per layer: index into trace.dropout_masks or kNoSlot
  std::size_t num_pool_ = 0, num_dropout_ = 0;
  std::shared_ptr<const ParamLayout> layout_;
  std::vector<std::pair<std::size_t, std::size_t>> layer_blocks_;  // (weight, bias) block index per layer
  std::size_t head_weight_block_ = kNoSlot, head_bias_block_ = kNoSlot;
};

}  // namespace fedsim::nn
