#pragma once

// Full network: frozen encoder feeding three heads (relative slice position,
// boundary detection, segmentation) and the weighted objective
//   L_total = L_seg + lambda_srpp L_srpp + lambda_bd L_bd.

#include <cstdint>
#include <optional>
#include <vector>

#include "volseg/bd.hpp"
#include "volseg/encoder.hpp"
#include "volseg/seg.hpp"
#include "volseg/srpp.hpp"

namespace volseg {

enum class SegLossKind { bce, dice };

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t classes = 1;
  std::uint64_t param_seed = 0;
  bool use_srpp = true;
  bool use_bd = true;
  bool use_fusion = true;  // only meaningful with use_bd
  seg::LossWeights weights;
  SegLossKind seg_loss = SegLossKind::bce;
};

struct ForwardResult {
  ad::Tensor seg_prob;   // K x DHW
  ad::Tensor bd_prob;    // K x DHW, undefined without the boundary branch
  ad::Tensor pos_pred;   // D x D, undefined without SRPP or when D < 2
  ad::Tensor l_seg;
  ad::Tensor l_srpp;     // 0 when SRPP is off
  ad::Tensor l_bd;       // 0 when the boundary branch is off
  ad::Tensor total;
  std::vector<std::size_t> degenerate_classes;
};

class Model {
 public:
  explicit Model(ModelConfig cfg);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return cfg_; }
  const Encoder& encoder() const { return encoder_; }

  srpp::SrppParams& srpp() { return srpp_; }
  bd::BdParams& bd() { return bd_; }
  seg::SegParams& seg() { return seg_; }

  /// Parameters the optimizer updates under the current flags.
  std::vector<ad::Parameter*> trainable_parameters();
  /// Every parameter, frozen encoder included, whether active or not.
  std::vector<ad::Parameter*> all_parameters();
  std::vector<ad::Parameter*> srpp_parameters() { return srpp_.parameters(); }
  std::vector<ad::Parameter*> bd_parameters() { return bd_.parameters(); }
  std::vector<ad::Parameter*> fusion_parameters() { return seg_.fusion_parameters(); }
  std::vector<ad::Parameter*> seg_parameters() { return seg_.parameters(); }

  /// Loss weights with disabled branches forced to 0.
  seg::LossWeights effective_weights() const;
  bool fusion_active() const { return cfg_.use_bd && cfg_.use_fusion; }

  /// Builds the graph for one slab and its labels. The boundary mask should be
  /// derived on the whole volume and then cut to the same slab.
  ForwardResult forward(const Volume& slab, const LabelMask& label,
                        const BoundaryMask& boundary) const;

  /// Segmentation probabilities only (K x DHW).
  ad::Tensor predict(const Volume& slab) const;

 private:
  FeatureTensor fused_features(const FeatureTensor& z,
                               std::optional<bd::BoundaryFeatures>* boundary_out) const;

  ModelConfig cfg_;
  Encoder encoder_;
  srpp::SrppParams srpp_;
  bd::BdParams bd_;
  seg::SegParams seg_;
};

}  // namespace volseg
