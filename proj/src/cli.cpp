#include "dncc/cli.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "dncc/checkpoint.hpp"
#include "dncc/data.hpp"
#include "dncc/diversity.hpp"
#include "dncc/error.hpp"
#include "dncc/text.hpp"
#include "dncc/trainer.hpp"
#include "dncc/verify.hpp"

#ifndef DNCC_VERSION
#define DNCC_VERSION "dev"
#endif

namespace dncc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

// Raised for flag combinations CLI11 cannot reject on its own.
struct UsageError : Error {
    using Error::Error;
};

// ---- run configuration -----------------------------------------------------

struct DataOptions {
    std::string source = "blobs";
    std::string images;
    std::string labels;
    std::string csv;
    std::string label_column = "label";
    std::size_t classes = 4;
    std::size_t per_class = 500;
    std::size_t dim = 16;
    double spread = 0.75;
    std::uint64_t seed = 0;
};

struct RunOptions {
    DataOptions data;
    BackboneSpec spec;
    EnsembleConfig ensemble;
    TrainConfig train;
    std::uint64_t split_seed = 0;
};

// Flags as typed on the command line, before resolution.
struct RunFlags {
    DataOptions data;
    std::string hidden = "64,64";
    std::size_t heads = 8;
    std::string feature_mode = "split";
    std::size_t branch_depth = 0;
    std::string lambda = "ramp:1e-2";
    bool detach = false;
    int epochs = 30;
    std::size_t batch = 128;
    double lr = 0.1;
    double lr_decay = 0.1;
    std::string milestones;
    double momentum = 0.9;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
};

template <class T>
std::vector<T> parse_list(const std::string& text, const char* what) {
    std::vector<T> out;
    if (trim(text).empty()) return out;
    for (auto cell : split(text, ',')) {
        cell = trim(cell);
        try {
            if constexpr (std::is_floating_point_v<T>) {
                out.push_back(parse_double(cell, 0));
            } else {
                const long long v = parse_int(cell, 0);
                if (v < 0) throw UsageError(std::string(what) + " entries must be non-negative");
                out.push_back(static_cast<T>(v));
            }
        } catch (const FormatError&) {
            throw UsageError(std::string("invalid ") + what + " entry '" + std::string(cell) + "'");
        }
    }
    return out;
}

void add_run_flags(CLI::App* app, RunFlags& f) {
    app->add_option("--data", f.data.source, "Dataset source")->check(CLI::IsMember({"blobs", "idx", "csv"}));
    app->add_option("--images", f.data.images, "IDX images file (--data idx)");
    app->add_option("--labels", f.data.labels, "IDX labels file (--data idx)");
    app->add_option("--csv", f.data.csv, "CSV file (--data csv)");
    app->add_option("--label-column", f.data.label_column, "CSV label column name");
    app->add_option("--classes", f.data.classes, "Blob classes K");
    app->add_option("--per-class", f.data.per_class, "Blob samples per class");
    app->add_option("--dim", f.data.dim, "Blob dimension D");
    app->add_option("--spread", f.data.spread, "Blob standard deviation");
    app->add_option("--data-seed", f.data.seed, "Blob generation seed");
    app->add_option("--hidden", f.hidden, "Hidden layer widths, comma separated");
    app->add_option("--heads", f.heads, "Ensemble size M");
    app->add_option("--feature-mode", f.feature_mode, "split or expand_split")
        ->check(CLI::IsMember({"split", "expand_split", "expand-split"}));
    app->add_option("--branch-depth", f.branch_depth, "Trailing hidden layers replicated per head");
    app->add_option("--lambda", f.lambda, "const:<v> or ramp:<base>");
    app->add_flag("--detach", f.detach, "Treat the ensemble mean as a constant in the penalty");
    app->add_option("--epochs", f.epochs, "Training epochs");
    app->add_option("--batch", f.batch, "Batch size");
    app->add_option("--lr", f.lr, "Initial learning rate");
    app->add_option("--lr-decay", f.lr_decay, "Learning-rate decay factor at each milestone");
    app->add_option("--milestones", f.milestones, "Epochs (0-based) at which the learning rate decays");
    app->add_option("--momentum", f.momentum, "SGD momentum");
    app->add_option("--weight-decay", f.weight_decay, "L2 weight decay");
    app->add_option("--seed", f.seed, "Seed for initialization, batching and the train/val split");
}

RunOptions resolve(const RunFlags& f) {
    RunOptions r;
    r.data = f.data;
    if (r.data.source == "idx" && (r.data.images.empty() || r.data.labels.empty())) {
        throw UsageError("--data idx requires --images and --labels");
    }
    if (r.data.source == "csv" && r.data.csv.empty()) throw UsageError("--data csv requires --csv");
    r.spec.hidden_widths = parse_list<std::size_t>(f.hidden, "--hidden");
    r.spec.branch_depth = f.branch_depth;
    r.ensemble.num_heads = f.heads;
    r.ensemble.feature_mode = feature_mode_from_string(f.feature_mode);
    r.ensemble.seed = f.seed;
    r.train.epochs = f.epochs;
    r.train.batch_size = f.batch;
    r.train.initial_lr = f.lr;
    r.train.lr_decay_factor = f.lr_decay;
    for (std::size_t m : parse_list<std::size_t>(f.milestones, "--milestones")) {
        r.train.lr_milestones.push_back(static_cast<int>(m));
    }
    r.train.momentum = f.momentum;
    r.train.weight_decay = f.weight_decay;
    r.train.dncc.lambda_schedule = LambdaSchedule::parse(f.lambda);
    r.train.dncc.detach_ensemble_mean = f.detach;
    r.train.seed = f.seed;
    r.split_seed = f.seed;
    r.train.validate();
    if (r.ensemble.num_heads == 0) throw ConfigError("--heads must be at least 1");
    return r;
}

json to_json(const DataOptions& d) {
    return {{"source", d.source},       {"images", d.images},       {"labels", d.labels},
            {"csv", d.csv},             {"label_column", d.label_column}, {"classes", d.classes},
            {"per_class", d.per_class}, {"dim", d.dim},             {"spread", d.spread},
            {"seed", d.seed}};
}

DataOptions data_from_json(const json& j) {
    DataOptions d;
    d.source = j.at("source").get<std::string>();
    d.images = j.at("images").get<std::string>();
    d.labels = j.at("labels").get<std::string>();
    d.csv = j.at("csv").get<std::string>();
    d.label_column = j.at("label_column").get<std::string>();
    d.classes = j.at("classes").get<std::size_t>();
    d.per_class = j.at("per_class").get<std::size_t>();
    d.dim = j.at("dim").get<std::size_t>();
    d.spread = j.at("spread").get<double>();
    d.seed = j.at("seed").get<std::uint64_t>();
    return d;
}

json to_json(const RunOptions& r) {
    return {{"data", to_json(r.data)},
            {"spec", dncc::to_json(r.spec)},
            {"ensemble", dncc::to_json(r.ensemble)},
            {"train", dncc::to_json(r.train)},
            {"split", {{"train_parts", 4}, {"val_parts", 1}, {"seed", r.split_seed}}}};
}

RunOptions run_from_json(const json& j) {
    RunOptions r;
    r.data = data_from_json(j.at("data"));
    r.spec = backbone_from_json(j.at("spec"));
    r.ensemble = ensemble_config_from_json(j.at("ensemble"));
    r.train = train_config_from_json(j.at("train"));
    r.split_seed = j.at("split").at("seed").get<std::uint64_t>();
    return r;
}

Dataset load_dataset(const DataOptions& d) {
    Dataset ds;
    if (d.source == "blobs") {
        ds = synth_blobs(d.seed, d.classes, d.per_class, d.dim, d.spread);
    } else if (d.source == "idx") {
        ds = load_idx(d.images, d.labels);
    } else if (d.source == "csv") {
        ds = load_csv(d.csv, d.label_column);
    } else {
        throw UsageError("unknown data source '" + d.source + "'");
    }
    ds.num_classes = std::max<std::size_t>(ds.num_classes, 2);
    ds.validate();
    return ds;
}

struct PreparedRun {
    RunOptions options;
    Dataset full;
    Split split;
};

// Loads the data and fills the dataset-dependent parts of the model config.
PreparedRun prepare(RunOptions options) {
    PreparedRun p;
    p.full = load_dataset(options.data);
    options.spec.input_dim = p.full.dim;
    options.ensemble.num_classes = p.full.num_classes;
    validate(options.spec, options.ensemble);
    p.split = train_val_split(p.full, 4, 1, options.split_seed);
    p.options = std::move(options);
    return p;
}

fs::path resolve_out(const std::string& out) {
    fs::path p(out);
    if (p.is_relative()) {
        if (const char* root = std::getenv("DNCC_OUTPUT_ROOT"); root && *root) p = fs::path(root) / p;
    }
    return p;
}

std::string hex(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << v;
    return os.str();
}

void write_metrics(const fs::path& dir, const MetricsLog& log) {
    write_file((dir / "metrics.jsonl").string(), metrics_jsonl(log));
    write_file((dir / "metrics.csv").string(), metrics_csv(log));
    write_file((dir / "timing.csv").string(), timing_csv(log));
}

json manifest(const std::string& command, const PreparedRun& run, const fs::path& out, const json& extra) {
    json m;
    m["tool"] = "dncc";
    m["version"] = DNCC_VERSION;
    m["command"] = command;
    m["config"] = to_json(run.options);
    m["dataset_fingerprint"] = hex(run.full.fingerprint());
    m["dataset"] = {{"size", run.full.size()},
                    {"dim", run.full.dim},
                    {"num_classes", run.full.num_classes},
                    {"train_size", run.split.train.size()},
                    {"val_size", run.split.val.size()},
                    {"stratified", run.split.stratified}};
    m["artifacts"] = {{"checkpoint", (out / "checkpoint.bin").string()},
                      {"metrics_jsonl", (out / "metrics.jsonl").string()},
                      {"metrics_csv", (out / "metrics.csv").string()},
                      {"timing_csv", (out / "timing.csv").string()}};
    for (const auto& [k, v] : extra.items()) m[k] = v;
    return m;
}

// ---- train -------------------------------------------------------------------

struct TrainCommand {
    RunFlags flags;
    std::string out = "runs/train";
    std::string resume;
    std::string from_manifest;
    int stop_after = -1;
};

int cmd_train(const TrainCommand& c, std::ostream& out, std::ostream& err) {
    std::optional<Checkpoint> resumed;
    RunOptions options;
    if (!c.resume.empty()) {
        resumed = load_checkpoint(c.resume);
        if (!resumed->extra.contains("run")) throw UsageError("checkpoint has no run configuration to resume");
        if (!resumed->state) throw UsageError("checkpoint has no training state to resume");
        options = run_from_json(resumed->extra.at("run"));
    } else if (!c.from_manifest.empty()) {
        options = run_from_json(json::parse(read_file(c.from_manifest)).at("config"));
    } else {
        options = resolve(c.flags);
    }
    PreparedRun run = prepare(std::move(options));

    const fs::path dir = resolve_out(c.out);
    fs::create_directories(dir);
    json extra = {{"stop_after", c.stop_after >= 0 ? json(c.stop_after) : json(nullptr)},
                  {"resumed_from", c.resume.empty() ? json(nullptr) : json(c.resume)}};
    write_file((dir / "manifest.json").string(), manifest("train", run, dir, extra).dump(2) + "\n");

    EnsembleModel model = resumed ? std::move(resumed->model) : EnsembleModel::init(run.options.spec, run.options.ensemble);
    Trainer trainer(model, run.options.train);
    if (resumed) trainer.restore(*resumed->state);

    const json run_json = to_json(run.options);
    const fs::path ckpt = dir / "checkpoint.bin";
    trainer.on_epoch_end([&](const Trainer& t, const EpochRecord& r) {
        save_checkpoint(ckpt, t.model(), &t.config(), &t.state(), {{"run", run_json}});
        write_metrics(dir, t.log());
        out << "epoch " << r.epoch << " lambda " << format_double(r.lambda) << " train_L " << r.train_ensemble_loss
            << " val_acc " << r.val_ensemble_accuracy << "\n";
    });
    try {
        trainer.fit(run.split.train, run.split.val, c.stop_after >= 0 ? std::optional<int>(c.stop_after) : std::nullopt);
    } catch (const TrainingError& e) {
        err << "error: " << e.what() << "\n";
        if (fs::exists(ckpt)) err << "last good checkpoint: " << ckpt.string() << "\n";
        return kExitFailure;
    }
    write_metrics(dir, trainer.log());
    if (!trainer.log().records.empty()) {
        const auto& last = trainer.log().records.back();
        out << "done: " << trainer.log().records.size() << " epochs, val ensemble accuracy "
            << last.val_ensemble_accuracy << ", artifacts in " << dir.string() << "\n";
    }
    return kExitOk;
}

// ---- evaluate --------------------------------------------------------------------

struct EvaluateCommand {
    std::string checkpoint;
    std::string split = "val";
};

json to_json(const EvalResult& e) {
    return {{"ensemble_accuracy", e.ensemble_accuracy},
            {"head_accuracy", e.head_accuracy},
            {"ensemble_loss", e.ensemble_loss},
            {"mean_individual_loss", e.mean_individual_loss},
            {"bregman_information", e.bregman_information}};
}

PreparedRun run_of_checkpoint(const Checkpoint& ck) {
    if (!ck.extra.contains("run")) throw UsageError("checkpoint carries no run configuration");
    return prepare(run_from_json(ck.extra.at("run")));
}

int cmd_evaluate(const EvaluateCommand& c, std::ostream& out) {
    const Checkpoint ck = load_checkpoint(c.checkpoint);
    const PreparedRun run = run_of_checkpoint(ck);
    const Dataset& ds = c.split == "train" ? run.split.train : run.split.val;
    out << to_json(evaluate(ck.model, ds)).dump(2) << "\n";
    return kExitOk;
}

// ---- verify ----------------------------------------------------------------------

struct VerifyCommand {
    int trials = 1000;
    std::uint64_t seed = 0;
    std::string out;
    bool inject_sign_flip = false;
};

int cmd_verify(const VerifyCommand& c, std::ostream& out, std::ostream& err) {
    if (c.trials < 1) throw UsageError("--trials must be at least 1");
    const VerifyReport report = run_verify({c.trials, c.seed, c.inject_sign_flip});
    json failures = json::array();
    for (const auto& check : report.checks) {
        out << (check.pass ? "PASS " : "FAIL ") << check.name << " trials=" << check.trials
            << " max_deviation=" << format_double(check.max_deviation)
            << " tolerance=" << format_double(check.tolerance) << "\n";
        if (!check.failing_case.is_null()) failures.push_back(check.failing_case);
    }
    if (report.pass()) return kExitOk;
    if (!c.out.empty()) {
        const fs::path dir = resolve_out(c.out);
        fs::create_directories(dir);
        write_file((dir / "verify_failure.json").string(), failures.dump(2) + "\n");
        err << "failing cases written to " << (dir / "verify_failure.json").string() << "\n";
    } else {
        err << failures.dump() << "\n";
    }
    return kExitFailure;
}

// ---- diversity -------------------------------------------------------------------

struct DiversityCommand {
    std::string dncc;
    std::string baseline;
    std::string out = "runs/diversity";
};

int cmd_diversity(const DiversityCommand& c, std::ostream& out, std::ostream& err) {
    const Checkpoint a = load_checkpoint(c.dncc);
    const Checkpoint b = load_checkpoint(c.baseline);
    if (a.model.num_heads() != b.model.num_heads()) {
        err << "error: ensemble sizes differ (" << a.model.num_heads() << " vs " << b.model.num_heads() << ")\n";
        return kExitUsage;
    }
    if (a.model.spec().input_dim != b.model.spec().input_dim || a.model.num_classes() != b.model.num_classes()) {
        err << "error: checkpoints were trained on differently shaped data\n";
        return kExitUsage;
    }
    // Both ensembles are scored on the first checkpoint's validation split.
    const PreparedRun run = run_of_checkpoint(a);
    const DiversityReport ra = pairwise_report(a.model, run.split.val);
    const DiversityReport rb = pairwise_report(b.model, run.split.val);
    const auto deltas = compare_reports(ra, rb);

    const fs::path dir = resolve_out(c.out);
    fs::create_directories(dir);
    write_file((dir / "dncc_pairs.csv").string(), report_csv(ra));
    write_file((dir / "baseline_pairs.csv").string(), report_csv(rb));
    write_file((dir / "deltas.csv").string(), deltas_csv(deltas));
    double acc = 0.0, div = 0.0;
    for (const auto& d : deltas) {
        acc += d.accuracy_delta;
        div += d.diversity_delta;
    }
    const double count = deltas.empty() ? 1.0 : static_cast<double>(deltas.size());
    json summary = {{"dncc", json::parse(report_summary_json(ra))},
                    {"baseline", json::parse(report_summary_json(rb))},
                    {"num_pairs", deltas.size()},
                    {"mean_accuracy_delta", acc / count},
                    {"mean_diversity_delta", div / count}};
    write_file((dir / "summary.json").string(), summary.dump(2) + "\n");
    out << deltas.size() << " pairs, mean diversity delta " << format_double(div / count)
        << ", mean accuracy delta " << format_double(acc / count) << "\n";
    return kExitOk;
}

// ---- ablate ----------------------------------------------------------------------

struct AblateCommand {
    RunFlags flags;
    std::string kind;
    std::string m_list;
    std::string lambda_list;
    std::string depth_list;
    std::string seeds = "0";
    std::string out = "runs/ablate";
    int jobs = 1;
};

struct SubRun {
    std::string setting;
    std::uint64_t seed = 0;
    RunOptions options;
};

struct SubResult {
    bool ok = false;
    std::string error;
    double ensemble_accuracy = 0.0;
    double mean_head_accuracy = 0.0;
    double mean_diversity = 0.0;
    double shared_fraction = 0.0;
};

std::vector<std::size_t> parse_depths(const std::string& text, std::size_t max_depth) {
    std::vector<std::size_t> out;
    for (auto cell : split(text, ',')) {
        cell = trim(cell);
        auto value = [&](std::string_view s) -> std::size_t {
            s = trim(s);
            if (s == "max") return max_depth;
            try {
                const long long v = parse_int(s, 0);
                if (v < 0) throw UsageError("--depth-list entries must be non-negative");
                return static_cast<std::size_t>(v);
            } catch (const FormatError&) {
                throw UsageError("invalid --depth-list entry '" + std::string(s) + "'");
            }
        };
        if (const auto dots = cell.find(".."); dots != std::string_view::npos) {
            const std::size_t lo = value(cell.substr(0, dots));
            const std::size_t hi = value(cell.substr(dots + 2));
            for (std::size_t d = lo; d <= hi; ++d) out.push_back(d);
        } else if (!cell.empty()) {
            out.push_back(value(cell));
        }
    }
    return out;
}

SubResult execute(const SubRun& sub, const fs::path& dir) {
    SubResult res;
    try {
        PreparedRun run = prepare(sub.options);
        EnsembleModel model = EnsembleModel::init(run.options.spec, run.options.ensemble);
        Trainer trainer(model, run.options.train);
        trainer.fit(run.split.train, run.split.val);
        const DiversityReport report = pairwise_report(model, run.split.val);
        fs::create_directories(dir);
        write_metrics(dir, trainer.log());
        write_file((dir / "pairs.csv").string(), report_csv(report));
        write_file((dir / "manifest.json").string(), manifest("ablate", run, dir, json::object()).dump(2) + "\n");
        res.ensemble_accuracy = report.ensemble_accuracy;
        double s = 0.0;
        for (double a : report.per_head_accuracy) s += a;
        res.mean_head_accuracy = s / static_cast<double>(report.per_head_accuracy.size());
        res.mean_diversity = report.mean_diversity();
        res.shared_fraction = shared_param_fraction(model);
        res.ok = true;
    } catch (const std::exception& e) {
        res.error = e.what();
    }
    return res;
}

int cmd_ablate(const AblateCommand& c, std::ostream& out, std::ostream& err) {
    const RunOptions base = resolve(c.flags);
    const auto seeds = parse_list<std::uint64_t>(c.seeds, "--seeds");
    if (seeds.empty()) throw UsageError("--seeds must not be empty");

    std::vector<std::pair<std::string, RunOptions>> settings;
    if (c.kind == "size") {
        const auto ms = parse_list<std::size_t>(c.m_list, "--m-list");
        if (ms.empty()) throw UsageError("ablate size requires --m-list");
        for (std::size_t m : ms) {
            RunOptions o = base;
            o.ensemble.num_heads = m;
            settings.emplace_back(std::to_string(m), o);
        }
    } else if (c.kind == "lambda") {
        const auto lambdas = parse_list<double>(c.lambda_list, "--lambda-list");
        if (lambdas.empty()) throw UsageError("ablate lambda requires --lambda-list");
        for (double l : lambdas) {
            RunOptions o = base;
            o.train.dncc.lambda_schedule = LambdaSchedule::constant(l);
            settings.emplace_back(format_double(l), o);
        }
    } else {
        const auto depths = parse_depths(c.depth_list, base.spec.hidden_widths.size());
        if (depths.empty()) throw UsageError("ablate split requires --depth-list");
        for (std::size_t d : depths) {
            RunOptions o = base;
            o.spec.branch_depth = d;
            settings.emplace_back(std::to_string(d), o);
        }
    }

    std::vector<SubRun> subs;
    for (const auto& [setting, opts] : settings) {
        for (std::uint64_t s : seeds) {
            RunOptions o = opts;
            o.ensemble.seed = s;
            o.train.seed = s;
            o.split_seed = s;
            subs.push_back({setting, s, o});
        }
    }

    const fs::path dir = resolve_out(c.out);
    fs::create_directories(dir);
    std::vector<SubResult> results(subs.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&]() {
        for (std::size_t i = next++; i < subs.size(); i = next++) {
            const fs::path sub_dir =
                dir / "runs" / (c.kind + "-" + subs[i].setting + "-seed" + std::to_string(subs[i].seed));
            results[i] = execute(subs[i], sub_dir);
            std::lock_guard lock(log_mutex);
            out << c.kind << "=" << subs[i].setting << " seed=" << subs[i].seed << " "
                << (results[i].ok ? "ok" : "FAILED: " + results[i].error) << "\n";
        }
    };
    const int jobs = std::max(1, c.jobs);
    std::vector<std::thread> pool;
    for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::ostringstream csv;
    csv << "setting,seed,ensemble_accuracy,mean_head_accuracy,mean_diversity,shared_param_fraction\n";
    std::ostringstream failures;
    failures << "setting,seed,error\n";
    bool any_failed = false;
    for (std::size_t i = 0; i < subs.size(); ++i) {
        const auto& r = results[i];
        if (!r.ok) {
            any_failed = true;
            failures << subs[i].setting << ',' << subs[i].seed << ",\"" << r.error << "\"\n";
            continue;
        }
        csv << subs[i].setting << ',' << subs[i].seed << ',' << format_double(r.ensemble_accuracy) << ','
            << format_double(r.mean_head_accuracy) << ',' << format_double(r.mean_diversity) << ','
            << format_double(r.shared_fraction) << '\n';
    }
    write_file((dir / "ablation.csv").string(), csv.str());
    if (any_failed) {
        write_file((dir / "failures.csv").string(), failures.str());
        err << "some sub-runs failed; see " << (dir / "failures.csv").string() << "\n";
        return kExitFailure;
    }
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Shared-backbone ensemble training with negative-correlation regularization"};
    app.require_subcommand(1);
    // A repeated flag overrides the earlier value.
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.set_version_flag("--version", DNCC_VERSION);

    TrainCommand train;
    auto* train_cmd = app.add_subcommand("train", "Train one ensemble");
    add_run_flags(train_cmd, train.flags);
    train_cmd->add_option("--out", train.out, "Output directory");
    train_cmd->add_option("--resume", train.resume, "Continue from a checkpoint written by train");
    train_cmd->add_option("--from-manifest", train.from_manifest, "Re-run the configuration of a manifest.json");
    train_cmd->add_option("--stop-after", train.stop_after, "Stop (and checkpoint) after this many epochs");

    EvaluateCommand evaluate_c;
    auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint on its data split");
    eval_cmd->add_option("--checkpoint", evaluate_c.checkpoint, "Checkpoint file")->required();
    eval_cmd->add_option("--split", evaluate_c.split, "train or val")->check(CLI::IsMember({"train", "val"}));

    VerifyCommand verify;
    auto* verify_cmd = app.add_subcommand("verify", "Run identity sweeps and gradient checks");
    verify_cmd->add_option("--trials", verify.trials, "Random cases per sweep");
    verify_cmd->add_option("--seed", verify.seed, "Base seed");
    verify_cmd->add_option("--out", verify.out, "Directory for failing-case records");
    // Mutation canary: the suite must fail when this is set.
    verify_cmd->add_flag("--inject-sign-flip", verify.inject_sign_flip)->group("");

    DiversityCommand diversity;
    auto* div_cmd = app.add_subcommand("diversity", "Compare per-pair diversity of two checkpoints");
    div_cmd->add_option("--dncc", diversity.dncc, "Regularized ensemble checkpoint")->required();
    div_cmd->add_option("--baseline", diversity.baseline, "Baseline ensemble checkpoint")->required();
    div_cmd->add_option("--out", diversity.out, "Output directory");

    AblateCommand ablate;
    auto* ablate_cmd = app.add_subcommand("ablate", "Sweep ensemble size, lambda or split depth");
    ablate_cmd->add_option("kind", ablate.kind, "size, lambda or split")
        ->required()
        ->check(CLI::IsMember({"size", "lambda", "split"}));
    add_run_flags(ablate_cmd, ablate.flags);
    ablate_cmd->add_option("--m-list", ablate.m_list, "Ensemble sizes");
    ablate_cmd->add_option("--lambda-list", ablate.lambda_list, "Constant lambda values");
    ablate_cmd->add_option("--depth-list", ablate.depth_list, "Branch depths, e.g. 0,1,2 or 0..max");
    ablate_cmd->add_option("--seeds", ablate.seeds, "Seeds, comma separated");
    ablate_cmd->add_option("--out", ablate.out, "Output directory");
    ablate_cmd->add_option("--jobs", ablate.jobs, "Parallel sub-runs");

    std::vector<std::string> argv_storage;
    argv_storage.reserve(args.size() + 1);
    argv_storage.push_back("dncc");
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_storage) argv.push_back(a.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << DNCC_VERSION << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (*train_cmd) return cmd_train(train, out, err);
        if (*eval_cmd) return cmd_evaluate(evaluate_c, out);
        if (*verify_cmd) return cmd_verify(verify, out, err);
        if (*div_cmd) return cmd_diversity(diversity, out, err);
        if (*ablate_cmd) return cmd_ablate(ablate, out, err);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace dncc::cli
