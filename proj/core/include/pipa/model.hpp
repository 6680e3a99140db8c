#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pipa/rng.hpp"
#include "pipa/tensor.hpp"
#include "pipa/types.hpp"

namespace pipa {

struct ModelConfig {
  int in_channels = 3;
  int classes = 5;
  int feature_dim = 64;  // D
  int embed_dim = 32;    // E
  static constexpr int stride = 4;
};

enum class HeadKind { pixel, patch, temp };

/// Encoder-decoder segmentation network with a per-pixel classification head
/// and three projection heads. The projection heads exist only for training;
/// the inference path never reads them.
class SegModel {
 public:
  SegModel(const ModelConfig& cfg, Rng& init_rng);

  /// B x 3 x H x W -> B x D x H/4 x W/4. H and W must be multiples of 4.
  Tensor forward_features(const Tensor& x) const;

  /// Per-pixel class logits, bilinearly upsampled to out_h x out_w.
  Tensor forward_cls(const Tensor& features, int out_h, int out_w) const;

  /// Projection head output, one unit-norm embedding per feature location:
  /// B x E x h x w.
  Tensor forward_head(const Tensor& features, HeadKind head) const;

  const ModelConfig& config() const { return cfg_; }

  /// All named parameters in a fixed order. Projection-head parameter names
  /// start with "head_".
  std::vector<std::pair<std::string, Tensor>>& params() { return params_; }
  const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }
  Tensor param(const std::string& name) const;

  static bool is_head_param(const std::string& name);

  /// Detached copy with requires_grad off everywhere (the teacher form).
  SegModel clone_detached() const;

 private:
  SegModel() = default;
  Tensor mlp2(const Tensor& rows, const std::string& prefix) const;

  ModelConfig cfg_;
  std::vector<std::pair<std::string, Tensor>> params_;
};

/// theta_bar <- m * theta_bar + (1 - m) * theta, parameter by parameter.
/// The teacher is only ever written through this function.
void ema_update(SegModel& teacher, const SegModel& student, double momentum);

struct PseudoLabels {
  std::vector<LabelMap> labels;                    // one per batch item
  std::vector<std::vector<std::uint8_t>> keep;     // max prob > threshold
};

/// Teacher argmax predictions with a confidence mask. Runs without recording
/// a graph; no gradient ever flows through the teacher.
PseudoLabels pseudo_label(const SegModel& teacher, const Tensor& x, double threshold);

}  // namespace pipa
