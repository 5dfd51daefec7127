#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "brtr/tensor.hpp"
#include "brtr/tr_model.hpp"

namespace brtr {

struct SynthSpec {
    Shape dims;
    TRRank true_rank;
    /// Missing ratio in [0, 1).
    double mr = 0.0;
    /// Outlier ratio in [0, 1].
    double sr = 0.0;
    /// Noise level in dB; none means noise-free.
    std::optional<double> snr_db;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SynthProblem {
    DenseTensor y;
    IndexMask mask;
    DenseTensor truth_low;
    DenseTensor truth_sparse;
    TRRank truth_rank;
    SynthSpec spec;
};

/// Standard-normal TR cores give the low-rank part. round(mr * total) entries
/// are dropped. round(sr * count) outliers drawn from U(-H, H), H = max |L|, are
/// placed among the observed entries and, separately, among the missing ones.
/// y holds L + S + noise on the observed support and zero elsewhere.
SynthProblem gen_problem(const SynthSpec& spec);

/// Number of nonzero entries of the sparse truth on the observed support.
std::size_t corrupted_observed(const SynthProblem& p);

/// Directory layout: y.brt, mask.brm, truth_low.brt, truth_sparse.brt, spec.json.
void save_problem(const std::filesystem::path& dir, const SynthProblem& p);
SynthProblem load_problem(const std::filesystem::path& dir);

std::string spec_to_json(const SynthSpec& spec);
SynthSpec spec_from_json(const std::string& text);

} // namespace brtr
