#include "volseg/checks.hpp"

#include <random>

#include "volseg/errors.hpp"
#include "volseg/model.hpp"
#include "volseg/phantom.hpp"
#include "volseg/rng.hpp"

namespace volseg {

std::vector<LossGradCheck> model_gradchecks(const std::string& module, std::uint64_t seed,
                                            std::size_t channels) {
  if (module != "all" && module != "srpp" && module != "bd" && module != "seg" &&
      module != "total") {
    throw ValidationError("unknown gradcheck module " + module);
  }
  PhantomSpec spec;
  spec.seed = seed;
  spec.shape = {2, 8, 8};
  spec.blobs.push_back(Blob{0, 3.5, 3.0, 2.2, 2.6, 0.0, 1.0, 0.0});
  spec.noise = 0.05;
  const Phantom ph = generate_phantom(spec);
  const BoundaryMask boundary = derive_boundary(ph.label);

  ModelConfig cfg;
  cfg.encoder = {4, channels, seed};
  cfg.param_seed = seed;
  Model model(cfg);
  // The fusion weight starts at zero, which would hide its path; give it a
  // random value so the check exercises every edge.
  auto rng = make_rng(seed, "gradcheck-fusion");
  std::normal_distribution<double> n(0.0, 0.3);
  for (double& v : model.seg().fusion_weight.tensor.mutable_values()) v = n(rng);

  auto run = [&](const std::string& name, auto pick, std::vector<ad::Parameter*> params) {
    auto f = [&] { return pick(model.forward(ph.volume, ph.label, boundary)); };
    return LossGradCheck{name, ad::grad_check(f, params)};
  };
  auto join = [](std::vector<ad::Parameter*> a, const std::vector<ad::Parameter*>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };

  std::vector<LossGradCheck> out;
  const bool all = module == "all";
  if (all || module == "srpp") {
    out.push_back(run("srpp", [](const ForwardResult& r) { return r.l_srpp; },
                      model.srpp_parameters()));
  }
  if (all || module == "bd") {
    out.push_back(run("bd", [](const ForwardResult& r) { return r.l_bd; }, model.bd_parameters()));
  }
  if (all || module == "seg") {
    out.push_back(run("seg", [](const ForwardResult& r) { return r.l_seg; },
                      join(join(model.seg_parameters(), model.fusion_parameters()),
                           model.bd_parameters())));
  }
  if (all || module == "total") {
    out.push_back(run("total", [](const ForwardResult& r) { return r.total; },
                      model.trainable_parameters()));
  }
  return out;
}

}  // namespace volseg
