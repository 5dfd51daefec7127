#pragma once

#include <cstddef>

#include "brtr/tensor.hpp"
#include "brtr/tr_model.hpp"

namespace brtr {

/// ||est - truth||_F / ||truth||_F. Throws std::invalid_argument on a shape
/// mismatch or a zero truth.
double rse(const DenseTensor& est, const DenseTensor& truth);

/// Peak signal-to-noise ratio in dB with the peak taken as max |truth|.
/// Returns +infinity when est == truth.
double psnr(const DenseTensor& est, const DenseTensor& truth);

/// Mean absolute error over ring positions 1..N.
double ree(const TRRank& est, const TRRank& truth);

/// Missing fraction of the mask.
double mr_of(const IndexMask& mask);

/// Corrupted fraction of the observed entries. Throws when nothing is observed.
double sr_of(std::size_t corrupted_observed, const IndexMask& mask);

} // namespace brtr
