#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "brtr/image.hpp"
#include "brtr/inference.hpp"
#include "brtr/io.hpp"
#include "brtr/metrics.hpp"
#include "brtr/report.hpp"
#include "brtr/synthetic.hpp"

namespace brtr::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kConfigVersion = 1;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::vector<std::size_t> parse_list(const std::string& text, const char* what) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t pos = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(item, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == 0 || pos != item.size() || item.front() == '-' || v == 0) {
            throw UsageError(std::string("--") + what + ": expected positive integers, got '" +
                             text + "'");
        }
        out.push_back(static_cast<std::size_t>(v));
    }
    if (out.empty()) throw UsageError(std::string("--") + what + ": empty list");
    return out;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io::IoError(path.string() + ": cannot open");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw io::IoError(path.string() + ": write failed");
}

/// Accepts one value (uniform), N inner ranks, or the full ring R_0..R_N.
TRRank rank_for_order(const std::vector<std::size_t>& values, std::size_t order) {
    if (values.size() == 1) return TRRank::uniform(order, values[0]);
    if (values.size() == order) return TRRank::from_inner(values);
    if (values.size() == order + 1) {
        if (values.front() != values.back()) throw UsageError("--max-rank: R_0 must equal R_N");
        return TRRank(values);
    }
    throw UsageError("--max-rank: expected 1, " + std::to_string(order) + " or " +
                     std::to_string(order + 1) + " values");
}

std::vector<std::size_t> inner(const TRRank& r) {
    std::vector<std::size_t> out;
    for (std::size_t n = 1; n <= r.order(); ++n) out.push_back(r[n]);
    return out;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string dims, rank, out;
    double mr = 0.0, sr = 0.0;
    std::optional<double> snr;
    std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    SynthSpec spec;
    spec.dims = Shape(parse_list(a.dims, "dims"));
    spec.true_rank = rank_for_order(parse_list(a.rank, "rank"), spec.dims.order());
    spec.mr = a.mr;
    spec.sr = a.sr;
    spec.snr_db = a.snr;
    spec.seed = a.seed;
    try {
        spec.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const auto problem = gen_problem(spec);
    save_problem(a.out, problem);
    out << spec_to_json(spec);
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct CompleteArgs {
    std::string config;
    std::optional<std::string> input, mask, truth, problem, out;
    std::optional<std::string> max_rank, reshape, moment_mode, init_mode;
    std::optional<std::size_t> max_iters;
    std::optional<double> tol, prune_threshold;
    std::optional<std::uint64_t> seed;
};

struct CompleteSettings {
    std::optional<std::string> input, mask, truth, problem;
    std::optional<json> synth;
    std::optional<std::vector<std::size_t>> max_rank, reshape;
    std::size_t max_iters = 100;
    double tol = 1e-6;
    double prune_threshold = 1e-4;
    std::string moment_mode = "exact";
    std::string init_mode = "random";
    std::uint64_t seed = 0;
    std::string out;
};

std::vector<std::size_t> json_list(const json& j, const char* key) {
    if (j.is_string()) return parse_list(j.get<std::string>(), key);
    auto v = j.get<std::vector<std::size_t>>();
    if (v.empty()) throw UsageError(std::string(key) + ": empty list");
    return v;
}

void apply_config(CompleteSettings& s, const fs::path& path) {
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw UsageError(path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw UsageError(path.string() + ": config must be a JSON object");
    if (!j.contains("version") || j["version"] != kConfigVersion) {
        throw UsageError(path.string() + ": unsupported config version (expected " +
                         std::to_string(kConfigVersion) + ")");
    }
    static const std::vector<std::string> known = {
        "version", "input", "mask", "truth", "problem", "synth", "max_rank", "reshape",
        "max_iters", "tol", "prune_threshold", "moment_mode", "init_mode", "seed", "out"};
    for (const auto& [key, value] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw UsageError(path.string() + ": unknown config key '" + key + "'");
        }
    }
    try {
        const fs::path base = path.parent_path();
        auto path_of = [&](const char* key) { return (base / j[key].get<std::string>()).string(); };
        if (j.contains("input")) s.input = path_of("input");
        if (j.contains("mask")) s.mask = path_of("mask");
        if (j.contains("truth")) s.truth = path_of("truth");
        if (j.contains("problem")) s.problem = path_of("problem");
        if (j.contains("out")) s.out = path_of("out");
        if (j.contains("synth")) s.synth = j["synth"];
        if (j.contains("max_rank")) s.max_rank = json_list(j["max_rank"], "max_rank");
        if (j.contains("reshape")) s.reshape = json_list(j["reshape"], "reshape");
        if (j.contains("max_iters")) s.max_iters = j["max_iters"].get<std::size_t>();
        if (j.contains("tol")) s.tol = j["tol"].get<double>();
        if (j.contains("prune_threshold")) s.prune_threshold = j["prune_threshold"].get<double>();
        if (j.contains("moment_mode")) s.moment_mode = j["moment_mode"].get<std::string>();
        if (j.contains("init_mode")) s.init_mode = j["init_mode"].get<std::string>();
        if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw UsageError(path.string() + ": " + e.what());
    }
}

CompleteSettings settle(const CompleteArgs& a) {
    CompleteSettings s;
    if (!a.config.empty()) apply_config(s, a.config);
    if (a.input) s.input = *a.input;
    if (a.mask) s.mask = *a.mask;
    if (a.truth) s.truth = *a.truth;
    if (a.problem) s.problem = *a.problem;
    if (a.out) s.out = *a.out;
    if (a.max_rank) s.max_rank = parse_list(*a.max_rank, "max-rank");
    if (a.reshape) s.reshape = parse_list(*a.reshape, "reshape");
    if (a.max_iters) s.max_iters = *a.max_iters;
    if (a.tol) s.tol = *a.tol;
    if (a.prune_threshold) s.prune_threshold = *a.prune_threshold;
    if (a.moment_mode) s.moment_mode = *a.moment_mode;
    if (a.init_mode) s.init_mode = *a.init_mode;
    if (a.seed) s.seed = *a.seed;

    const int sources = int(s.input.has_value()) + int(s.problem.has_value()) + int(s.synth.has_value());
    if (sources != 1) {
        throw UsageError("complete: give exactly one of --input, --problem or a synth spec");
    }
    if (s.out.empty()) throw UsageError("complete: --out is required");
    return s;
}

struct Loaded {
    DenseTensor y;
    IndexMask mask;
    std::optional<DenseTensor> truth_low, truth_sparse;
    std::optional<TRRank> truth_rank;
};

Loaded load_inputs(const CompleteSettings& s) {
    Loaded l;
    if (s.synth) {
        SynthSpec spec;
        try {
            spec = spec_from_json(s.synth->dump());
        } catch (const std::exception& e) {
            throw UsageError(std::string("synth spec: ") + e.what());
        }
        auto p = gen_problem(spec);
        return Loaded{std::move(p.y), std::move(p.mask), std::move(p.truth_low),
                      std::move(p.truth_sparse), p.truth_rank};
    }
    std::optional<std::string> truth = s.truth;
    if (s.problem) {
        const fs::path dir = *s.problem;
        l.y = io::load_tensor(dir / "y.brt");
        l.mask = io::load_mask(dir / "mask.brm");
        if (!truth) truth = dir.string();
    } else {
        l.y = io::load_tensor(*s.input);
        l.mask = s.mask ? io::load_mask(*s.mask) : IndexMask(l.y.shape(), true);
    }
    if (s.problem && s.mask) l.mask = io::load_mask(*s.mask);
    if (!(l.mask.shape() == l.y.shape())) throw UsageError("mask shape does not match the input tensor");
    if (truth) {
        const fs::path dir = *truth;
        l.truth_low = io::load_tensor(dir / "truth_low.brt");
        if (fs::exists(dir / "truth_sparse.brt")) l.truth_sparse = io::load_tensor(dir / "truth_sparse.brt");
        if (fs::exists(dir / "spec.json")) {
            try {
                l.truth_rank = spec_from_json(read_text(dir / "spec.json")).true_rank;
            } catch (const std::exception& e) {
                throw io::IoError((dir / "spec.json").string() + ": " + e.what());
            }
        }
        if (!(l.truth_low->shape() == l.y.shape()) ||
            (l.truth_sparse && !(l.truth_sparse->shape() == l.y.shape()))) {
            throw UsageError("ground truth shape does not match the input tensor");
        }
    }
    return l;
}

int cmd_complete(const CompleteArgs& a, std::ostream& out) {
    const CompleteSettings s = settle(a);
    Loaded l = load_inputs(s);
    const Shape original = l.y.shape();

    DenseTensor y = l.y;
    IndexMask mask = l.mask;
    if (s.reshape) {
        const Shape target(*s.reshape);
        if (target.numel() != original.numel()) {
            throw UsageError("--reshape: element count " + std::to_string(target.numel()) +
                             " differs from input " + std::to_string(original.numel()));
        }
        y = reshape(y, target);
        mask = reshape(mask, target);
    }
    const std::size_t order = y.order();
    if (order < 2) throw UsageError("complete: input must have order >= 2");

    InferenceConfig cfg = InferenceConfig::defaults(order);
    if (s.max_rank) cfg.max_rank = rank_for_order(*s.max_rank, order);
    cfg.max_iters = s.max_iters;
    cfg.elbo_rel_tol = s.tol;
    cfg.prune_threshold = s.prune_threshold;
    cfg.seed = s.seed;
    try {
        cfg.moment_mode = parse_moment_mode(s.moment_mode);
        cfg.init_mode = parse_init_mode(s.init_mode);
        cfg.validate(order);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (mask.observed_count() == 0) throw UsageError("complete: mask has no observed entries");

    const FitResult result = fit(y, mask, cfg);
    Prediction pred = predict(result.state, mask);
    pred.low_rank = reshape(pred.low_rank, original);
    pred.sparse = reshape(pred.sparse, original);

    std::optional<ReportMetrics> metrics;
    if (l.truth_low) {
        ReportMetrics m;
        if (frobenius_norm(*l.truth_low) > 0.0) m.rse_low = rse(pred.low_rank, *l.truth_low);
        m.psnr = psnr(pred.low_rank, *l.truth_low);
        if (l.truth_sparse && frobenius_norm(*l.truth_sparse) > 0.0) {
            m.rse_sparse = rse(pred.sparse, *l.truth_sparse);
        }
        if (l.truth_rank && l.truth_rank->order() == order) {
            m.ree = ree(result.state.ranks, *l.truth_rank);
        }
        metrics = m;
    }

    const fs::path dir = s.out;
    fs::create_directories(dir);
    io::save_tensor(dir / "low_rank.brt", pred.low_rank);
    io::save_tensor(dir / "sparse.brt", pred.sparse);
    write_text(dir / "report.json", report_to_json(result.report, metrics));

    out << "iterations " << result.report.iterations << ", final ranks";
    for (auto r : result.report.final_ranks) out << ' ' << r;
    out << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct MetricsArgs {
    std::string est, truth;
    std::optional<std::string> est_rank, true_rank, est_report, true_spec;
};

int cmd_metrics(const MetricsArgs& a, std::ostream& out) {
    const DenseTensor est = io::load_tensor(a.est);
    const DenseTensor truth = io::load_tensor(a.truth);
    if (!(est.shape() == truth.shape())) throw UsageError("metrics: shape mismatch between estimate and truth");

    std::optional<std::vector<std::size_t>> er, tr;
    if (a.est_rank) er = parse_list(*a.est_rank, "est-rank");
    if (a.true_rank) tr = parse_list(*a.true_rank, "true-rank");
    try {
        if (a.est_report) er = json::parse(read_text(*a.est_report)).at("final_ranks").get<std::vector<std::size_t>>();
        if (a.true_spec) tr = json::parse(read_text(*a.true_spec)).at("rank").get<std::vector<std::size_t>>();
    } catch (const json::exception& e) {
        throw UsageError(std::string("metrics: ") + e.what());
    }
    if (er.has_value() != tr.has_value()) throw UsageError("metrics: ree needs both an estimated and a true rank");

    nlohmann::ordered_json j;
    j["rse"] = rse(est, truth);
    const double p = psnr(est, truth);
    if (std::isinf(p)) {
        j["psnr"] = "inf";
    } else {
        j["psnr"] = p;
    }
    if (er) {
        if (er->size() != tr->size()) throw UsageError("metrics: rank lengths differ");
        j["ree"] = ree(TRRank::from_inner(*er), TRRank::from_inner(*tr));
    }
    out << j.dump(2) << '\n';
    return kExitOk;
}

int cmd_img2ten(const std::string& in, const std::string& out_path) {
    io::save_tensor(out_path, io::load_pnm(in));
    return kExitOk;
}

int cmd_ten2img(const std::string& in, const std::string& out_path) {
    io::save_pnm(out_path, io::load_tensor(in));
    return kExitOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Bayesian robust tensor ring completion"};
    app.name("brtr");
    app.require_subcommand(1);

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic problem directory");
    synth->add_option("--dims", sa.dims, "Mode sizes, e.g. 10,10,10,10")->required();
    synth->add_option("--rank", sa.rank, "True TR rank (N inner values or R_0..R_N)")->required();
    synth->add_option("--mr", sa.mr, "Missing ratio in [0, 1)");
    synth->add_option("--sr", sa.sr, "Outlier ratio in [0, 1]");
    synth->add_option("--snr", sa.snr, "Noise level in dB (omit for noise-free)");
    synth->add_option("--seed", sa.seed, "Random seed");
    synth->add_option("--out", sa.out, "Output directory")->required();

    CompleteArgs ca;
    auto* complete = app.add_subcommand("complete", "Fit a robust TR model and write the recovery");
    complete->add_option("--config", ca.config, "JSON config file (flags override it)");
    complete->add_option("--input", ca.input, "Observed tensor (.brt)");
    complete->add_option("--mask", ca.mask, "Observation mask (.brm); default all observed");
    complete->add_option("--truth", ca.truth, "Directory with truth_low.brt [truth_sparse.brt spec.json]");
    complete->add_option("--problem", ca.problem, "Synthetic problem directory (input, mask and truth)");
    complete->add_option("--max-rank", ca.max_rank, "Max TR rank: one value, N values or R_0..R_N");
    complete->add_option("--max-iters", ca.max_iters, "Iteration cap");
    complete->add_option("--tol", ca.tol, "Relative ELBO change for convergence");
    complete->add_option("--prune-threshold", ca.prune_threshold, "Relative power threshold; 0 disables pruning");
    complete->add_option("--moment-mode", ca.moment_mode, "exact | plugin");
    complete->add_option("--init-mode", ca.init_mode, "tr-approx | random");
    complete->add_option("--reshape", ca.reshape, "Fit on this shape, e.g. 4,4,4,4,4,4,4,4,3");
    complete->add_option("--seed", ca.seed, "Random seed");
    complete->add_option("--out", ca.out, "Output directory");

    MetricsArgs ma;
    auto* metrics = app.add_subcommand("metrics", "Compare an estimate with the truth");
    metrics->add_option("--est", ma.est, "Estimated tensor (.brt)")->required();
    metrics->add_option("--truth", ma.truth, "True tensor (.brt)")->required();
    metrics->add_option("--est-rank", ma.est_rank, "Estimated TR rank R_1..R_N");
    metrics->add_option("--true-rank", ma.true_rank, "True TR rank R_1..R_N");
    metrics->add_option("--est-report", ma.est_report, "report.json holding final_ranks");
    metrics->add_option("--true-spec", ma.true_spec, "spec.json holding the true rank");

    std::string img_in, img_out;
    auto* img2ten = app.add_subcommand("img2ten", "Convert a binary PPM/PGM image to .brt");
    img2ten->add_option("input", img_in, "Image file")->required();
    img2ten->add_option("output", img_out, "Tensor file")->required();
    auto* ten2img = app.add_subcommand("ten2img", "Convert an order-2/3 .brt tensor to PGM/PPM");
    ten2img->add_option("input", img_in, "Tensor file")->required();
    ten2img->add_option("output", img_out, "Image file")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (*synth) return cmd_synth(sa, out);
        if (*complete) return cmd_complete(ca, out);
        if (*metrics) return cmd_metrics(ma, out);
        if (*img2ten) return cmd_img2ten(img_in, img_out);
        if (*ten2img) return cmd_ten2img(img_in, img_out);
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}

} // namespace brtr::cli
