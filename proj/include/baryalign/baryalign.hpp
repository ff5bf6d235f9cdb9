#pragma once

#include "baryalign/barycenter.hpp"
#include "baryalign/errors.hpp"
#include "baryalign/metrics.hpp"
#include "baryalign/parallel.hpp"
#include "baryalign/procrustes.hpp"
#include "baryalign/rng.hpp"
#include "baryalign/scoring.hpp"
#include "baryalign/storage.hpp"
#include "baryalign/synth.hpp"
#include "baryalign/types.hpp"

namespace baryalign {

inline constexpr std::string_view kVersion = "0.1.0";

}  // namespace baryalign
