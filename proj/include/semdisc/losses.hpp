#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "semdisc/autodiff.hpp"
#include "semdisc/datagen.hpp"
#include "semdisc/models.hpp"

namespace semdisc {

enum class AdvForm { kBce, kHinge };
enum class AdvRole { kDiscReal, kDiscFake, kGenFake };
enum class Phase { kWarmup, kFull };

std::string_view to_string(AdvForm form);
AdvForm parse_adv_form(std::string_view name);

struct LossWeights {
  double lambda_s = 1.0;
  double lambda_r = 1.0;
  double lambda_fm = 10.0;
  double lambda_perc = 10.0;

  void validate() const;  // throws ValidationError on negative weights
};

// Per-element raw adversarial loss for the given role and form.
ad::Var adv_elementwise(ad::Var d, AdvRole role, AdvForm form);

struct MaskedLoss {
  ad::Var value;
  bool void_mask = false;  // mask had zero mass; value is a constant 0
};

// sum(l * M) / sum(M) over every element of the batch. d_map and mask are
// [N,1,h,w]; mask values must lie in [0, 1].
MaskedLoss branch_adv_loss(ad::Var d_map, const Tensor& mask, AdvRole role, AdvForm form);

struct AdvLoss {
  ad::Var value;
  std::size_t void_branches = 0;
};

// adv and masks are [N,K+1,h,w]: L_0 + (1/K) sum_k L_k, or L_0 when K = 0.
AdvLoss coarse_to_fine_adv(ad::Var adv, const Tensor& masks, AdvRole role, AdvForm form);

// Mean of coarse_to_fine_adv over scales; masks[i] must match outputs[i].adv.
AdvLoss multiscale_adv(const std::vector<DiscOutputs>& outputs, const std::vector<Tensor>& masks, AdvRole role,
                       AdvForm form);

// logits [N,K,h,w] are nearest-upsampled to s [N,K,H,W]. Scene mode:
// mean softmax cross-entropy against argmax(s); keypoint mode: mean
// sigmoid BCE against s.
ad::Var semantic_matching_loss(ad::Var logits, const Tensor& s, SemanticMode mode);

// mean |up(rec) - y|.
ad::Var reconstruction_loss(ad::Var rec, ad::Var y);

// Mean over layers of the per-layer mean |fake - real|; real features are
// treated as constants.
ad::Var feature_matching_loss(const std::vector<ad::Var>& fake, const std::vector<ad::Var>& real);

ad::Var perceptual_loss(FeatNet& net, ad::Var fake, ad::Var real);

// Terms that are absent, disabled, or have zero weight are not added at all.
struct GenTerms {
  ad::Var adv;
  std::optional<ad::Var> sem;
  std::optional<ad::Var> rec;
  std::optional<ad::Var> fm;
  std::optional<ad::Var> perc;
};

ad::Var generator_total(const GenTerms& terms, const LossWeights& w, Phase phase);
ad::Var discriminator_total(ad::Var adv, std::optional<ad::Var> sem_real, std::optional<ad::Var> rec_real,
                            const LossWeights& w);

// Stacks per-example mask sets into [N,K+1,h,w]; `channels` keeps only the
// first maps (1 for a single-map discriminator).
Tensor stack_masks(const std::vector<MaskSet>& masks, std::size_t channels);

}  // namespace semdisc
