#include "volseg/model.hpp"

namespace volseg {

Model::Model(ModelConfig cfg)
    : cfg_(cfg),
      encoder_(cfg.encoder),
      srpp_(srpp::SrppParams::init(cfg.encoder.channels, cfg.param_seed)),
      bd_(bd::BdParams::init(cfg.encoder.channels, cfg.classes, cfg.param_seed)),
      seg_(seg::SegParams::init(cfg.encoder.channels, cfg.classes, cfg.param_seed)) {
  seg::validate(cfg_.weights);
}

std::vector<ad::Parameter*> Model::trainable_parameters() {
  std::vector<ad::Parameter*> out = seg_.parameters();
  if (cfg_.use_srpp) {
    auto p = srpp_.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  if (cfg_.use_bd) {
    auto p = bd_.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  if (fusion_active()) {
    auto p = seg_.fusion_parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<ad::Parameter*> Model::all_parameters() {
  std::vector<ad::Parameter*> out{const_cast<ad::Parameter*>(&encoder_.projection())};
  for (auto p : srpp_.parameters()) out.push_back(p);
  for (auto p : bd_.parameters()) out.push_back(p);
  for (auto p : seg_.parameters()) out.push_back(p);
  for (auto p : seg_.fusion_parameters()) out.push_back(p);
  return out;
}

seg::LossWeights Model::effective_weights() const {
  return {cfg_.use_srpp ? cfg_.weights.srpp : 0.0, cfg_.use_bd ? cfg_.weights.bd : 0.0};
}

FeatureTensor Model::fused_features(const FeatureTensor& z,
                                    std::optional<bd::BoundaryFeatures>* boundary_out) const {
  if (!cfg_.use_bd) return z;
  auto z_bd = bd::memory_attend_boundary(z, bd_);
  auto refined = bd::cross_attend(z_bd, z, bd_);
  auto out = bd::refine_boundary_features(refined, bd_);
  if (boundary_out) *boundary_out = out;
  return fusion_active() ? seg::fuse_boundary_features(z, out, seg_) : z;
}

ForwardResult Model::forward(const Volume& slab, const LabelMask& label,
                             const BoundaryMask& boundary) const {
  const FeatureTensor z = encoder_.encode(slab);
  const std::size_t patch = cfg_.encoder.patch;
  ForwardResult r;

  std::optional<bd::BoundaryFeatures> z_out;
  const FeatureTensor fused = fused_features(z, &z_out);

  r.seg_prob = seg::segment(fused, seg_, patch);
  r.l_seg = cfg_.seg_loss == SegLossKind::bce ? seg::seg_loss(r.seg_prob, label)
                                              : seg::soft_dice_loss(r.seg_prob, label);

  r.l_bd = ad::Tensor::scalar(0.0);
  if (z_out) {
    r.bd_prob = bd::boundary_head(*z_out, bd_, patch);
    auto loss = bd::boundary_loss(r.bd_prob, boundary);
    r.l_bd = loss.value;
    r.degenerate_classes = std::move(loss.degenerate_classes);
  }

  r.l_srpp = ad::Tensor::scalar(0.0);
  if (cfg_.use_srpp && z.slices >= 2) {
    r.pos_pred = srpp::predict_relative_positions(z, srpp_);
    r.l_srpp = srpp::srpp_loss(r.pos_pred, srpp::make_gt_pos(z.slices));
  }

  r.total = seg::total_loss(r.l_seg, r.l_srpp, r.l_bd, effective_weights());
  return r;
}

ad::Tensor Model::predict(const Volume& slab) const {
  const FeatureTensor z = encoder_.encode(slab);
  const FeatureTensor fused = fusion_active() ? fused_features(z, nullptr) : z;
  return seg::segment(fused, seg_, cfg_.encoder.patch);
}

}  // namespace volseg
