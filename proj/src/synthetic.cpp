#include "brtr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "brtr/io.hpp"
#include "brtr/random.hpp"

namespace brtr {

namespace {

// The count entries of candidates with the smallest keys under the stream.
std::vector<std::size_t> pick(const std::vector<std::size_t>& candidates, std::size_t count,
                              const CounterRng& rng) {
    std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
    keyed.reserve(candidates.size());
    for (auto c : candidates) keyed.emplace_back(rng.bits_at(c), c);
    std::sort(keyed.begin(), keyed.end());
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(keyed[i].second);
    std::sort(out.begin(), out.end());
    return out;
}

std::size_t fraction_count(double ratio, std::size_t n) {
    return static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
}

std::vector<std::size_t> inner_ranks(const TRRank& r) {
    std::vector<std::size_t> out;
    for (std::size_t n = 1; n <= r.order(); ++n) out.push_back(r[n]);
    return out;
}

} // namespace

void SynthSpec::validate() const {
    if (true_rank.order() != dims.order()) {
        throw std::invalid_argument("true rank must have one entry per mode");
    }
    if (!(mr >= 0.0 && mr < 1.0)) throw std::invalid_argument("mr must lie in [0, 1)");
    if (!(sr >= 0.0 && sr <= 1.0)) throw std::invalid_argument("sr must lie in [0, 1]");
    if (snr_db && !std::isfinite(*snr_db)) throw std::invalid_argument("snr must be finite");
    if (fraction_count(mr, dims.numel()) >= dims.numel()) {
        throw std::invalid_argument("mr leaves no observed entries");
    }
}

SynthProblem gen_problem(const SynthSpec& spec) {
    spec.validate();
    const Shape& shape = spec.dims;
    const std::size_t total = shape.numel();

    CounterRng core_rng(spec.seed, streams::kCores);
    std::vector<DenseTensor> cores;
    for (std::size_t n = 0; n < shape.order(); ++n) {
        DenseTensor c(Shape{spec.true_rank[n], shape[n], spec.true_rank[n + 1]});
        for (auto& v : c.data()) v = core_rng.normal();
        cores.push_back(std::move(c));
    }
    DenseTensor low = tr_full(TRCores(std::move(cores)));

    std::vector<std::size_t> all(total);
    std::iota(all.begin(), all.end(), std::size_t{0});
    IndexMask mask(shape, true);
    for (auto o : pick(all, fraction_count(spec.mr, total), CounterRng(spec.seed, streams::kMask))) {
        mask.set(o, false);
    }

    std::vector<std::size_t> observed, missing;
    for (std::size_t o = 0; o < total; ++o) (mask[o] ? observed : missing).push_back(o);

    double peak = 0.0;
    for (std::size_t o = 0; o < total; ++o) peak = std::max(peak, std::abs(low[o]));
    const CounterRng support_rng(spec.seed, streams::kOutlierSupport);
    const CounterRng value_rng(spec.seed, streams::kOutlierValue);
    DenseTensor sparse(shape);
    for (const auto* group : {&observed, &missing}) {
        for (auto o : pick(*group, fraction_count(spec.sr, group->size()), support_rng)) {
            sparse[o] = peak * (2.0 * value_rng.uniform_at(o) - 1.0);
        }
    }

    double noise_sd = 0.0;
    if (spec.snr_db) {
        double mean = 0.0;
        for (std::size_t o = 0; o < total; ++o) mean += low[o];
        mean /= static_cast<double>(total);
        double var = 0.0;
        for (std::size_t o = 0; o < total; ++o) var += (low[o] - mean) * (low[o] - mean);
        var /= static_cast<double>(total);
        noise_sd = std::sqrt(var / std::pow(10.0, *spec.snr_db / 10.0));
    }
    const CounterRng noise_rng(spec.seed, streams::kNoise);
    DenseTensor y(shape);
    for (auto o : observed) {
        y[o] = low[o] + sparse[o];
        if (noise_sd > 0.0) y[o] += noise_sd * noise_rng.normal_at(o);
    }
    return SynthProblem{std::move(y), std::move(mask), std::move(low), std::move(sparse),
                        spec.true_rank, spec};
}

std::size_t corrupted_observed(const SynthProblem& p) {
    std::size_t count = 0;
    for (std::size_t o = 0; o < p.mask.size(); ++o) count += (p.mask[o] && p.truth_sparse[o] != 0.0);
    return count;
}

std::string spec_to_json(const SynthSpec& spec) {
    nlohmann::ordered_json j;
    j["dims"] = spec.dims.dims();
    j["rank"] = inner_ranks(spec.true_rank);
    j["mr"] = spec.mr;
    j["sr"] = spec.sr;
    j["snr_db"] = spec.snr_db ? nlohmann::ordered_json(*spec.snr_db) : nlohmann::ordered_json(nullptr);
    j["seed"] = spec.seed;
    return j.dump(2) + "\n";
}

SynthSpec spec_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    SynthSpec spec;
    spec.dims = Shape(j.at("dims").get<std::vector<std::size_t>>());
    spec.true_rank = TRRank::from_inner(j.at("rank").get<std::vector<std::size_t>>());
    spec.mr = j.at("mr").get<double>();
    spec.sr = j.at("sr").get<double>();
    if (j.contains("snr_db") && !j["snr_db"].is_null()) spec.snr_db = j["snr_db"].get<double>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.validate();
    return spec;
}

void save_problem(const std::filesystem::path& dir, const SynthProblem& p) {
    std::filesystem::create_directories(dir);
    io::save_tensor(dir / "y.brt", p.y);
    io::save_mask(dir / "mask.brm", p.mask);
    io::save_tensor(dir / "truth_low.brt", p.truth_low);
    io::save_tensor(dir / "truth_sparse.brt", p.truth_sparse);
    std::ofstream out(dir / "spec.json", std::ios::binary);
    out << spec_to_json(p.spec);
    if (!out) throw io::IoError((dir / "spec.json").string() + ": write failed");
}

SynthProblem load_problem(const std::filesystem::path& dir) {
    const auto spec_path = dir / "spec.json";
    std::ifstream in(spec_path, std::ios::binary);
    if (!in) throw io::IoError(spec_path.string() + ": cannot open");
    std::stringstream text;
    text << in.rdbuf();
    SynthSpec spec;
    try {
        spec = spec_from_json(text.str());
    } catch (const std::exception& e) {
        throw io::IoError(spec_path.string() + ": " + e.what());
    }
    return SynthProblem{io::load_tensor(dir / "y.brt"), io::load_mask(dir / "mask.brm"),
                        io::load_tensor(dir / "truth_low.brt"),
                        io::load_tensor(dir / "truth_sparse.brt"), spec.true_rank, spec};
}

} // namespace brtr
