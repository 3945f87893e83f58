#include "rfnet/commands.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "rfnet/datagen.hpp"
#include "rfnet/gradsuite.hpp"
#include "rfnet/metrics.hpp"
#include "rfnet/network.hpp"
#include "rfnet/training.hpp"

namespace rfnet {

namespace fs = std::filesystem;

namespace {

std::string require_dir(const KeyValueConfig& cfg, const std::string& key) {
    const std::string dir = cfg.get_string(key, "");
    if (dir.empty()) throw ConfigError("missing required config key '" + key + "'");
    return dir;
}

void write_run_record(const std::string& out_dir, const std::string& subcommand, const KeyValueConfig& cfg) {
    fs::create_directories(out_dir);
    nlohmann::json record;
    record["subcommand"] = subcommand;
    record["code_version"] = kCodeVersion;
    record["config"] = cfg.values();  // std::map keeps key order stable
    std::ofstream os(fs::path(out_dir) / "run.json");
    if (!os) throw IoError("cannot write run.json under " + out_dir);
    os << record.dump(2) << "\n";
}

SceneSpec scene_from_config(const KeyValueConfig& cfg) {
    SceneSpec spec;
    spec.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));
    spec.size = static_cast<int>(cfg.get_int("size", 64));
    spec.min_objects = static_cast<int>(cfg.get_int("min_objects", 1));
    spec.max_objects = static_cast<int>(cfg.get_int("max_objects", 3));
    spec.texture_noise = static_cast<float>(cfg.get_double("texture_noise", 0.05));
    return spec;
}

QualityMix mix_from_config(const KeyValueConfig& cfg) {
    QualityMix mix;
    mix.degraded_fraction = static_cast<float>(cfg.get_double("degraded_fraction", 0.0));
    mix.degradation.noise_sigma = static_cast<float>(cfg.get_double("noise_sigma", 0.0));
    mix.degradation.hole_rate = static_cast<float>(cfg.get_double("hole_rate", 0.0));
    mix.degradation.quant_levels = static_cast<int>(cfg.get_int("quant_levels", 0));
    mix.degradation.shift_dx = static_cast<int>(cfg.get_int("shift_dx", 0));
    mix.degradation.shift_dy = static_cast<int>(cfg.get_int("shift_dy", 0));
    return mix;
}

TrainConfig train_from_config(const KeyValueConfig& cfg) {
    TrainConfig tc;
    tc.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));
    tc.epochs = static_cast<int>(cfg.get_int("epochs", 20));
    tc.lr = cfg.get_double("lr", 1e-4);
    tc.lr_decay_every = static_cast<int>(cfg.get_int("lr_decay_every", 15));
    tc.batch = static_cast<int>(cfg.get_int("batch", 4));
    tc.resolution = static_cast<int>(cfg.get_int("resolution", 64));
    tc.channel_plan = cfg.get_int_list("channel_plan", {16, 32, 64, 128, 256});
    tc.reduction = static_cast<int>(cfg.get_int("reduction", 4));
    tc.variant = parse_variant(cfg.get_string("variant", "full"));
    tc.augment = cfg.get_bool("augment", true);
    return tc;
}

std::string map_name(int id) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", id);
    return std::string(buf) + ".pgm";
}

std::vector<SampleMetrics> evaluate_model(RFNetModel<float>& model, const std::vector<SamplePair>& samples,
                                          const std::string& maps_dir) {
    if (!maps_dir.empty()) fs::create_directories(maps_dir);
    std::vector<SampleMetrics> rows;
    rows.reserve(samples.size());
    for (const auto& s : samples) {
        auto map = predict_map(model, s);
        if (!maps_dir.empty()) save_map(map, (fs::path(maps_dir) / map_name(s.id)).string());
        rows.push_back(compute_sample_metrics(s.id, map, s.gt));
    }
    return rows;
}

}  // namespace

int cmd_gen_data(const KeyValueConfig& cfg, std::ostream& out) {
    cfg.restrict_keys({"out_dir", "seed", "n", "size", "degraded_fraction", "noise_sigma", "hole_rate",
                       "quant_levels", "shift_dx", "shift_dy", "texture_noise", "min_objects", "max_objects"});
    const std::string out_dir = require_dir(cfg, "out_dir");
    const int n = static_cast<int>(cfg.get_int("n", 100));
    if (n <= 0) throw ConfigError("gen-data: n must be positive");
    auto samples = make_dataset(n, scene_from_config(cfg), mix_from_config(cfg));
    fs::create_directories(out_dir);
    save_dataset(out_dir, samples);
    write_run_record(out_dir, "gen-data", cfg);
    int degraded = 0;
    for (const auto& s : samples) degraded += s.degradation.any() ? 1 : 0;
    out << "wrote " << samples.size() << " samples (" << degraded << " degraded) to " << out_dir << "\n";
    return kExitOk;
}

int cmd_train(const KeyValueConfig& cfg, std::ostream& out) {
    cfg.restrict_keys({"out_dir", "data_dir", "seed", "epochs", "lr", "lr_decay_every", "batch", "resolution",
                       "channel_plan", "reduction", "variant", "augment"});
    const std::string out_dir = require_dir(cfg, "out_dir");
    const std::string data_dir = require_dir(cfg, "data_dir");
    const TrainConfig tc = train_from_config(cfg);
    auto data = load_dataset(data_dir);
    std::vector<EpochStats> log;
    RFNetModel<float> model = train(data, tc, log);
    fs::create_directories(out_dir);
    save_model((fs::path(out_dir) / "checkpoint.rfnt").string(), model);
    write_epoch_csv((fs::path(out_dir) / "epochs.csv").string(), log);
    write_run_record(out_dir, "train", cfg);
    out << "trained " << variant_name(tc.variant) << " for " << tc.epochs << " epochs on " << data.size()
        << " samples; final loss " << (log.empty() ? 0.0 : log.back().loss_bce + log.back().loss_iou) << "\n";
    return kExitOk;
}

int cmd_eval(const KeyValueConfig& cfg, std::ostream& out) {
    cfg.restrict_keys({"out_dir", "checkpoint", "data_dir", "seed"});
    const std::string out_dir = require_dir(cfg, "out_dir");
    const std::string checkpoint = require_dir(cfg, "checkpoint");
    const std::string data_dir = require_dir(cfg, "data_dir");
    RFNetModel<float> model = load_model<float>(checkpoint);
    auto samples = load_dataset(data_dir);
    if (samples.empty()) throw ConfigError("eval: dataset is empty");
    fs::create_directories(out_dir);
    auto rows = evaluate_model(model, samples, (fs::path(out_dir) / "maps").string());
    write_metrics_csv((fs::path(out_dir) / "metrics.csv").string(), rows);
    write_run_record(out_dir, "eval", cfg);
    const MetricsReport agg = aggregate(rows);
    char line[160];
    std::snprintf(line, sizeof(line), "n=%d mae=%.4f f=%.4f s=%.4f e=%.4f\n", agg.count, agg.mae, agg.f_measure,
                  agg.s_measure, agg.e_measure);
    out << line;
    return kExitOk;
}

int cmd_grad_check(const KeyValueConfig& cfg, std::ostream& out) {
    cfg.restrict_keys({"out_dir", "scope", "seed", "seeds_per_check"});
    const std::string out_dir = require_dir(cfg, "out_dir");
    const GradScope scope = parse_grad_scope(cfg.get_string("scope", "all"));
    const auto seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));
    const int per_check = static_cast<int>(cfg.get_int("seeds_per_check", 10));
    auto reports = run_grad_suite(scope, seed, per_check);

    fs::create_directories(out_dir);
    std::ofstream csv(fs::path(out_dir) / "grad_report.csv");
    if (!csv) throw IoError("cannot write grad_report.csv under " + out_dir);
    csv << "check,max_rel_err,tolerance,elements,pass\n";
    char line[200];
    for (const auto& r : reports) {
        std::snprintf(line, sizeof(line), "%-28s max_rel_err=%.3e tol=%.0e %s\n", r.name.c_str(), r.max_rel_err,
                      r.tolerance, r.pass ? "PASS" : "FAIL");
        out << line;
        std::snprintf(line, sizeof(line), "%s,%.9e,%.0e,%d,%d\n", r.name.c_str(), r.max_rel_err, r.tolerance,
                      r.elements, r.pass ? 1 : 0);
        csv << line;
    }
    write_run_record(out_dir, "grad-check", cfg);
    const bool ok = all_pass(reports);
    out << (ok ? "grad-check: all checks passed\n" : "grad-check: FAILURES above\n");
    return ok ? kExitOk : kExitVerification;
}

int cmd_ablate(const KeyValueConfig& cfg, std::ostream& out) {
    cfg.restrict_keys({"out_dir", "data_dir", "test_dir", "seed", "epochs", "lr", "lr_decay_every", "batch",
                       "resolution", "channel_plan", "reduction", "augment"});
    const std::string out_dir = require_dir(cfg, "out_dir");
    const std::string data_dir = require_dir(cfg, "data_dir");
    const std::string test_dir = require_dir(cfg, "test_dir");
    auto data = load_dataset(data_dir);
    auto test = load_dataset(test_dir);
    if (test.empty()) throw ConfigError("ablate: test dataset is empty");

    const FusionVariant variants[] = {FusionVariant::AddOnly,       FusionVariant::Ca,  FusionVariant::CaTsa,
                                      FusionVariant::CaSa,          FusionVariant::CaTsaAdaptive,
                                      FusionVariant::Full};
    fs::create_directories(out_dir);
    std::ofstream csv(fs::path(out_dir) / "ablation.csv");
    if (!csv) throw IoError("cannot write ablation.csv under " + out_dir);
    csv << "variant,mae,f,s,e\n";
    char line[160];
    for (FusionVariant v : variants) {
        TrainConfig tc = train_from_config(cfg);
        tc.variant = v;
        std::vector<EpochStats> log;
        RFNetModel<float> model = train(data, tc, log);
        auto rows = evaluate_model(model, test, "");
        const MetricsReport agg = aggregate(rows);
        std::snprintf(line, sizeof(line), "%s,%.6f,%.6f,%.6f,%.6f\n", variant_name(v).c_str(), agg.mae, agg.f_measure,
                      agg.s_measure, agg.e_measure);
        csv << line;
        out << variant_name(v) << ": mae=" << agg.mae << "\n";
    }
    write_run_record(out_dir, "ablate", cfg);
    return kExitOk;
}

int cmd_lambda_report(const KeyValueConfig& cfg, std::ostream& out) {
    cfg.restrict_keys({"out_dir", "checkpoint", "data_dir", "seed"});
    const std::string out_dir = require_dir(cfg, "out_dir");
    const std::string checkpoint = require_dir(cfg, "checkpoint");
    const std::string data_dir = require_dir(cfg, "data_dir");
    RFNetModel<float> model = load_model<float>(checkpoint);
    auto samples = load_dataset(data_dir);
    if (samples.empty()) throw ConfigError("lambda-report: dataset is empty");

    fs::create_directories(out_dir);
    std::ofstream csv(fs::path(out_dir) / "lambda_report.csv");
    if (!csv) throw IoError("cannot write lambda_report.csv under " + out_dir);
    csv << "sample_id,group";
    for (int k = 1; k <= 5; ++k) csv << ",lambda" << k;
    for (int k = 1; k <= 5; ++k) csv << ",alpha" << k;
    for (int k = 1; k <= 5; ++k) csv << ",beta" << k;
    csv << ",noise_sigma,hole_rate,shift_dx,shift_dy,quant_levels\n";

    std::array<double, 5> sum_clean{}, sum_degraded{};
    int n_clean = 0, n_degraded = 0;
    char buf[64];
    for (const auto& s : samples) {
        auto fw = model.forward(s.rgb, s.depth);
        const bool degraded = s.degradation.any();
        (degraded ? n_degraded : n_clean)++;
        csv << s.id << "," << (degraded ? "degraded" : "clean");
        for (int k = 0; k < 5; ++k) {
            const double v = fw.lambda.data()[static_cast<std::size_t>(k)];
            (degraded ? sum_degraded : sum_clean)[static_cast<std::size_t>(k)] += v;
            std::snprintf(buf, sizeof(buf), ",%.8f", v);
            csv << buf;
        }
        for (double v : fw.alphas) {
            std::snprintf(buf, sizeof(buf), ",%.8f", v);
            csv << buf;
        }
        for (double v : fw.betas) {
            std::snprintf(buf, sizeof(buf), ",%.8f", v);
            csv << buf;
        }
        std::snprintf(buf, sizeof(buf), ",%.6g,%.6g,%d,%d,%d\n", s.degradation.noise_sigma, s.degradation.hole_rate,
                      s.degradation.shift_dx, s.degradation.shift_dy, s.degradation.quant_levels);
        csv << buf;
    }
    const auto write_group = [&](const char* name, const std::array<double, 5>& sums, int count) {
        if (count == 0) return;
        csv << "mean_" << name << "," << name;
        for (double v : sums) {
            std::snprintf(buf, sizeof(buf), ",%.8f", v / count);
            csv << buf;
        }
        for (int k = 0; k < 10; ++k) csv << ",";
        csv << ",0,0,0,0,0\n";
    };
    write_group("clean", sum_clean, n_clean);
    write_group("degraded", sum_degraded, n_degraded);
    write_run_record(out_dir, "lambda-report", cfg);
    out << "lambda report over " << samples.size() << " samples (" << n_clean << " clean, " << n_degraded
        << " degraded)\n";
    return kExitOk;
}

int run_command(const std::string& name, const KeyValueConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        if (name == "gen-data") return cmd_gen_data(cfg, out);
        if (name == "train") return cmd_train(cfg, out);
        if (name == "eval") return cmd_eval(cfg, out);
        if (name == "grad-check") return cmd_grad_check(cfg, out);
        if (name == "ablate") return cmd_ablate(cfg, out);
        if (name == "lambda-report") return cmd_lambda_report(cfg, out);
        err << "error: unknown subcommand '" << name << "'\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}

}  // namespace rfnet
