#pragma once

// Seeded generator of domain-incremental bag suites. Every instance is a draw
// around a shared background mean; positive bags additionally contain a
// fixed fraction of witness instances around background + class signal.
// Domain t applies its own rotation and mean shift to all instances, so a
// decision rule learned on one domain degrades on the others; the conflict
// term makes later domains actively contradict the first one.

#include <vector>

#include "aglr/core.hpp"

namespace aglr {

struct DomainShift {
  // Rotation angle (radians) applied in every plane of a fixed random basis.
  double rotation = 0.0;
  // Length of the domain's additive mean shift.
  double shift = 0.0;
  double noise = 1.0;
  // Multiple of the domain-1 signal vector added to every instance, so that
  // ordinary instances of this domain resemble earlier witnesses.
  double conflict = 0.0;
};

struct SyntheticDomainSpec {
  int dim = 32;
  int domains = 3;
  int bags_per_class = 50;  // per domain, before the train/test split
  double test_fraction = 0.2;
  int min_bag = 50;
  int max_bag = 200;
  double witness_rate = 0.2;
  double signal_strength = 3.0;
  double background_scale = 1.0;
  double noise_scale = 1.0;
  double rotation_step = 0.7853981633974483;  // pi/4 per domain
  double shift_scale = 1.0;
  double conflict = 1.0;
  // Explicit per-domain shifts; when empty, domain t uses
  // rotation = (t-1) * rotation_step, shift = shift_scale and
  // conflict = conflict (both 0 for t = 1), noise = noise_scale.
  std::vector<DomainShift> per_domain;

  void validate() const;
  DomainShift shift_of(int domain_id) const;
};

std::vector<EpisodeDataset> generate_suite(const SyntheticDomainSpec& spec, const RngStream& rng);

}  // namespace aglr
