// prunekit command-line front end: generate toy models, prune them for a
// target speed-up, evaluate, and compare channel-selection strategies.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "prunekit/baselines.hpp"
#include "prunekit/batchnorm.hpp"
#include "prunekit/flops.hpp"
#include "prunekit/forward.hpp"
#include "prunekit/io.hpp"
#include "prunekit/linalg.hpp"
#include "prunekit/multibranch.hpp"
#include "prunekit/presets.hpp"
#include "prunekit/pruner.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace prunekit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInfeasible = 2; // also shape/structure/parse problems
constexpr int kExitNumeric = 3;

constexpr u64 kDefaultSeed = 42;

i64 resolve_threads(i64 flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("PRUNEKIT_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<i64>(v);
    }
    return 1;
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p);
    if (!f) throw IoError("cannot open: " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

PruneConfig config_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    PruneConfig cfg;
    try {
        const std::string mode = doc.value("mode", "fast");
        if (mode == "fast") {
            cfg.mode = PruneConfig::Mode::Fast;
        } else if (mode == "alternate") {
            cfg.mode = PruneConfig::Mode::Alternate;
        } else {
            throw ParseError("config: mode must be fast or alternate");
        }
        if (doc.contains("overall_speedup")) {
            cfg.overall_speedup = doc.at("overall_speedup").get<double>();
        }
        if (doc.contains("per_layer_keep")) {
            cfg.per_layer_keep =
                doc.at("per_layer_keep").get<std::map<std::string, i64>>();
        }
        cfg.shallow_deep_ratio = doc.value("shallow_deep_ratio", 1.5);
        if (doc.contains("branch_ratios")) {
            cfg.branch_ratios = doc.at("branch_ratios").get<std::vector<double>>();
        }
        if (doc.contains("frozen_layers")) {
            for (const auto& v : doc.at("frozen_layers")) {
                cfg.frozen_layers.insert(v.get<std::string>());
            }
        }
        if (doc.contains("plan")) {
            const auto& p = doc.at("plan");
            cfg.plan.images = p.value("images", cfg.plan.images);
            cfg.plan.samples_per_image =
                p.value("samples_per_image", cfg.plan.samples_per_image);
            cfg.plan.seed = p.value("seed", cfg.plan.seed);
        }
        if (doc.contains("lasso")) {
            const auto& l = doc.at("lasso");
            cfg.schedule.factor = l.value("factor", cfg.schedule.factor);
            cfg.schedule.max_steps = l.value("max_steps", cfg.schedule.max_steps);
            cfg.schedule.bisect_steps = l.value("bisect_steps", cfg.schedule.bisect_steps);
            cfg.lasso_tol = l.value("tol", cfg.lasso_tol);
        }
        cfg.ridge = doc.value("ridge", cfg.ridge);
        const std::string tm = doc.value("target_mode", "original");
        if (tm == "original") {
            cfg.target_mode = TargetMode::OriginalModel;
        } else if (tm == "same") {
            cfg.target_mode = TargetMode::SameLayer;
        } else {
            throw ParseError("config: target_mode must be original or same");
        }
        cfg.residual_compensation = doc.value("residual_compensation", true);
        cfg.skip_reconstruction = doc.value("skip_reconstruction", false);
        cfg.seed = doc.value("seed", cfg.seed);
        cfg.holdout = doc.value("holdout", cfg.holdout);
    } catch (const json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    if (cfg.plan.seed == 0) cfg.plan.seed = cfg.seed;
    return cfg;
}

int run_gen(const fs::path& spec, const std::string& preset, u64 seed, const fs::path& out,
            const fs::path& data_out, i64 data_count, u64 data_seed) {
    ModelGraph g;
    if (!preset.empty()) {
        json doc = {{"preset", preset}, {"seed", seed}};
        g = model_from_genspec(doc.dump());
    } else if (!spec.empty()) {
        g = model_from_genspec(read_file(spec));
    } else {
        std::cerr << "gen: provide --preset or --spec\n";
        return kExitUsage;
    }
    save_model(g, out);
    const FlopsReport fl = count_flops(g);
    std::cout << "model written to " << (out / "model.json").string() << " ("
              << fl.total << " MACs/image)\n";
    if (!data_out.empty()) {
        const Tensor4 batch = random_batch(data_count, g.input_shape, data_seed);
        if (data_out.has_parent_path()) fs::create_directories(data_out.parent_path());
        save_tensor(data_out, batch);
        std::cout << "calibration batch (" << data_count << " images) written to "
                  << data_out.string() << "\n";
    }
    return kExitOk;
}

int run_prune(const fs::path& model_path, const fs::path& config_path,
              const fs::path& data_path, const fs::path& out, i64 threads) {
    ModelGraph model = load_model(model_path);
    PruneConfig cfg = config_from_json(read_file(config_path));
    cfg.threads = resolve_threads(threads);
    const Tensor4 calib = load_tensor(data_path);
    auto [pruned, report] = prune_model(model, cfg, calib);
    save_model(pruned, out);
    std::ofstream rf(out / "report.json");
    rf << report_to_json(report);
    std::cout << "achieved speedup: " << report.achieved_speedup << " ("
              << report.flops_before << " -> " << report.flops_after << " MACs)\n"
              << "final output relative MSE: " << report.final_output_rel_mse << "\n"
              << "pruned model written to " << (out / "model.json").string() << "\n";
    return kExitOk;
}

int run_eval(const fs::path& model_path, const fs::path& data_path,
             const fs::path& reference_path, const fs::path& out) {
    const ModelGraph model = load_model(model_path);
    const Tensor4 data = load_tensor(data_path);
    const Tensor4 y = forward(model, data);
    json doc;
    doc["flops"] = count_flops(model).total;
    json shapes = json::array();
    ShapeCHW s = model.input_shape;
    for (const Node& n : model.nodes) {
        s = node_output_shape(n, s);
        if (n.kind == NodeKind::Conv) {
            shapes.push_back({{"name", n.name},
                              {"filters", n.out_channels()},
                              {"channels", n.in_channels()},
                              {"output", {s.c, s.h, s.w}}});
        }
    }
    doc["layers"] = std::move(shapes);
    if (!reference_path.empty()) {
        const ModelGraph ref_model = load_model(reference_path);
        const Tensor4 ref = forward(ref_model, data);
        if (!ref.same_dims(y)) {
            throw ShapeError("eval: model and reference output shapes differ");
        }
        double err = 0.0;
        for (size_t i = 0; i < y.data.size(); ++i) {
            const double d = static_cast<double>(y.data[i]) - static_cast<double>(ref.data[i]);
            err += d * d;
        }
        const double refsq = frob_sq(ref.data);
        doc["relative_mse"] = refsq > 0.0 ? err / refsq : 0.0;
    }
    const std::string text = doc.dump(2) + "\n";
    if (!out.empty()) {
        std::ofstream f(out);
        f << text;
    }
    std::cout << text;
    return kExitOk;
}

int run_compare(const fs::path& model_path, const std::string& layer,
                const fs::path& data_path, const std::vector<double>& ratios, u64 seed,
                const fs::path& out, const std::string& format, i64 images,
                i64 samples_per_image) {
    ModelGraph model = load_model(model_path);
    const bool has_bn = std::any_of(model.nodes.begin(), model.nodes.end(), [](const Node& n) {
        return n.kind == NodeKind::BatchNorm;
    });
    if (has_bn) model = merge_batchnorm(model);
    const Tensor4 data = load_tensor(data_path);
    const i64 conv_idx = model.find(layer);
    const Node& conv = model.nodes[conv_idx];
    if (conv.kind != NodeKind::Conv) throw StructureError(layer + " is not a conv node");

    SamplePlan plan{images, samples_per_image, seed};
    const SampleSet samples =
        sample_layer(model, model, layer, data, plan, TargetMode::SameLayer);

    std::vector<i64> c_primes;
    for (double r : ratios) {
        if (!(r > 0.0) || r > 1.0) throw ArgumentError("compare: ratios must be in (0, 1]");
        c_primes.push_back(std::clamp<i64>(
            static_cast<i64>(std::llround(r * static_cast<double>(samples.c))), 1, samples.c));
    }
    bool all_brute = true;
    for (i64 cp : c_primes) all_brute = all_brute && brute_force_feasible(samples.c, cp);
    if (!all_brute) {
        std::cerr << "note: brute-force rows skipped (subset count over the guard)\n";
    }
    const auto rows = compare_strategies(samples, conv.weights, c_primes, 0.0, all_brute);

    std::ostringstream ss;
    if (format == "csv") {
        write_strategy_csv(ss, rows);
    } else {
        json arr = json::array();
        for (const auto& r : rows) {
            arr.push_back({{"strategy", strategy_name(r.strategy)},
                           {"c", r.c},
                           {"c_prime", r.c_prime},
                           {"relative_mse", r.relative_mse},
                           {"wall_ms", r.wall_ms}});
        }
        ss << arr.dump(2) << "\n";
    }
    if (!out.empty()) {
        std::ofstream f(out);
        f << ss.str();
    }
    std::cout << ss.str();
    return kExitOk;
}

int run_report(const fs::path& report_path) {
    json doc;
    try {
        doc = json::parse(read_file(report_path));
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("report: ") + e.what());
    }
    std::cout << "layer            c -> c'   lambda        mse(sel)      mse(recon)\n";
    for (const auto& l : doc.at("layers")) {
        std::printf("%-14s %4lld -> %-4lld %-13.4g %-13.4g %-13.4g\n",
                    l.at("name").get<std::string>().c_str(),
                    static_cast<long long>(l.at("c").get<i64>()),
                    static_cast<long long>(l.at("c_prime").get<i64>()),
                    l.at("lambda_final").get<double>(), l.at("mse_selected").get<double>(),
                    l.at("mse_reconstructed").get<double>());
    }
    std::printf("flops: %lld -> %lld (speedup %.3f), final output rel. MSE %.4g\n",
                static_cast<long long>(doc.at("flops_before").get<i64>()),
                static_cast<long long>(doc.at("flops_after").get<i64>()),
                doc.at("achieved_speedup").get<double>(),
                doc.at("final_output_rel_mse").get<double>());
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"prunekit: LASSO channel selection + least-squares reconstruction "
                 "for conv nets"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a toy model (and calibration data)");
    std::string gen_spec, gen_preset, gen_out, gen_data_out;
    u64 gen_seed = kDefaultSeed, gen_data_seed = kDefaultSeed + 1;
    i64 gen_data_count = 64;
    gen->add_option("--spec", gen_spec, "generator spec JSON file");
    gen->add_option("--preset", gen_preset, "toy-vgg or toy-resnet");
    gen->add_option("--seed", gen_seed, "init seed");
    gen->add_option("--out", gen_out, "output model directory")->required();
    gen->add_option("--data-out", gen_data_out, "also write a calibration batch here");
    gen->add_option("--data-count", gen_data_count, "calibration images to generate");
    gen->add_option("--data-seed", gen_data_seed, "calibration data seed");

    // prune
    auto* prune = app.add_subcommand("prune", "prune a model for a target speed-up");
    std::string pr_model, pr_config, pr_data, pr_out;
    i64 pr_threads = 0;
    prune->add_option("--model", pr_model, "model JSON")->required()->check(CLI::ExistingFile);
    prune->add_option("--config", pr_config, "prune config JSON")->required()->check(CLI::ExistingFile);
    prune->add_option("--data", pr_data, "calibration tensor (PKT1)")->required()->check(CLI::ExistingFile);
    prune->add_option("--out", pr_out, "output directory")->required();
    prune->add_option("--threads", pr_threads, "worker cap (PRUNEKIT_THREADS fallback)");

    // eval
    auto* eval = app.add_subcommand("eval", "run a model and report metrics");
    std::string ev_model, ev_data, ev_ref, ev_out;
    eval->add_option("--model", ev_model, "model JSON")->required()->check(CLI::ExistingFile);
    eval->add_option("--data", ev_data, "input tensor (PKT1)")->required()->check(CLI::ExistingFile);
    eval->add_option("--reference", ev_ref, "reference model JSON")->check(CLI::ExistingFile);
    eval->add_option("--out", ev_out, "write metrics JSON here");

    // compare
    auto* compare = app.add_subcommand("compare", "selection-strategy comparison for one layer");
    std::string cp_model, cp_layer, cp_data, cp_out, cp_format = "csv";
    std::vector<double> cp_ratios{0.25, 0.5, 0.75};
    u64 cp_seed = kDefaultSeed;
    i64 cp_images = 64, cp_samples = 10;
    compare->add_option("--model", cp_model, "model JSON")->required()->check(CLI::ExistingFile);
    compare->add_option("--layer", cp_layer, "conv layer name")->required();
    compare->add_option("--data", cp_data, "input tensor (PKT1)")->required()->check(CLI::ExistingFile);
    compare->add_option("--ratios", cp_ratios, "keep ratios in (0,1]");
    compare->add_option("--seed", cp_seed, "sampling seed");
    compare->add_option("--images", cp_images, "calibration images to use");
    compare->add_option("--samples-per-image", cp_samples, "positions per image");
    compare->add_option("--out", cp_out, "output file");
    compare->add_option("--format", cp_format, "json or csv")
        ->check(CLI::IsMember({"json", "csv"}));

    // report
    auto* report = app.add_subcommand("report", "pretty-print a prune report");
    std::string rp_path;
    report->add_option("report", rp_path, "report.json path")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            return run_gen(gen_spec, gen_preset, gen_seed, gen_out, gen_data_out,
                           gen_data_count, gen_data_seed);
        }
        if (prune->parsed()) {
            return run_prune(pr_model, pr_config, pr_data, pr_out, pr_threads);
        }
        if (eval->parsed()) return run_eval(ev_model, ev_data, ev_ref, ev_out);
        if (compare->parsed()) {
            return run_compare(cp_model, cp_layer, cp_data, cp_ratios, cp_seed, cp_out,
                               cp_format, cp_images, cp_samples);
        }
        if (report->parsed()) return run_report(rp_path);
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const ArgumentError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const InfeasibleError& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return kExitUsage;
}
