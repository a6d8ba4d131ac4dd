// Command-line surface for the training / pruning pipeline:
//   rrelu train | select-gamma | prune | report | analyze
// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rrelu/accounting.hpp"
#include "rrelu/checkpoint.hpp"
#include "rrelu/data.hpp"
#include "rrelu/error.hpp"
#include "rrelu/init.hpp"
#include "rrelu/model.hpp"
#include "rrelu/pruning.hpp"
#include "rrelu/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rrelu;

namespace {

struct Opts {
    std::string config_path;
    std::string model = "fcnn-784-500-10";
    std::string dataset = "mnist";
    std::string activation = "rrelu";
    std::string data_dir;
    std::string out_dir;
    std::string init = "type1";
    std::string pretrained;
    std::string optimizer = "adam";
    std::string scheduler = "constant";
    std::string checkpoint;
    std::string pruned;
    std::string gamma_file;
    int epochs = 10;
    int batch_size = 128;
    int num_classes = 10;
    double lr = 1e-3;
    double momentum = 0.9;
    double weight_decay = 0.0;
    double decay = 0.1;
    double lr_min = 0.0;
    std::vector<int> milestones;
    std::uint64_t seed = 0;
    bool slopes_only = false;
    bool augment = false;
    bool filter_path = false;
    int hist_bins = 0;
    double tolerance_pp = 0.2;
    double gamma = -1.0;
    std::size_t limit_train = 0;
    std::size_t limit_test = 0;
    std::size_t blobs_n = 4096;
    double blobs_sep = 2.0;
    std::uint64_t blobs_seed = 7;
};

// Keys accepted in a JSON config file; everything else is rejected.
const std::map<std::string, std::function<void(Opts&, const json&)>>& config_keys() {
    static const std::map<std::string, std::function<void(Opts&, const json&)>> keys = {
        {"model", [](Opts& o, const json& v) { o.model = v.get<std::string>(); }},
        {"dataset", [](Opts& o, const json& v) { o.dataset = v.get<std::string>(); }},
        {"activation", [](Opts& o, const json& v) { o.activation = v.get<std::string>(); }},
        {"data_dir", [](Opts& o, const json& v) { o.data_dir = v.get<std::string>(); }},
        {"out", [](Opts& o, const json& v) { o.out_dir = v.get<std::string>(); }},
        {"init", [](Opts& o, const json& v) { o.init = v.get<std::string>(); }},
        {"pretrained", [](Opts& o, const json& v) { o.pretrained = v.get<std::string>(); }},
        {"optimizer", [](Opts& o, const json& v) { o.optimizer = v.get<std::string>(); }},
        {"scheduler", [](Opts& o, const json& v) { o.scheduler = v.get<std::string>(); }},
        {"checkpoint", [](Opts& o, const json& v) { o.checkpoint = v.get<std::string>(); }},
        {"epochs", [](Opts& o, const json& v) { o.epochs = v.get<int>(); }},
        {"batch_size", [](Opts& o, const json& v) { o.batch_size = v.get<int>(); }},
        {"num_classes", [](Opts& o, const json& v) { o.num_classes = v.get<int>(); }},
        {"lr", [](Opts& o, const json& v) { o.lr = v.get<double>(); }},
        {"momentum", [](Opts& o, const json& v) { o.momentum = v.get<double>(); }},
        {"weight_decay", [](Opts& o, const json& v) { o.weight_decay = v.get<double>(); }},
        {"decay", [](Opts& o, const json& v) { o.decay = v.get<double>(); }},
        {"lr_min", [](Opts& o, const json& v) { o.lr_min = v.get<double>(); }},
        {"milestones", [](Opts& o, const json& v) { o.milestones = v.get<std::vector<int>>(); }},
        {"seed", [](Opts& o, const json& v) { o.seed = v.get<std::uint64_t>(); }},
        {"slopes_only", [](Opts& o, const json& v) { o.slopes_only = v.get<bool>(); }},
        {"augment", [](Opts& o, const json& v) { o.augment = v.get<bool>(); }},
        {"tolerance_pp", [](Opts& o, const json& v) { o.tolerance_pp = v.get<double>(); }},
        {"gamma", [](Opts& o, const json& v) { o.gamma = v.get<double>(); }},
        {"limit_train", [](Opts& o, const json& v) { o.limit_train = v.get<std::size_t>(); }},
        {"limit_test", [](Opts& o, const json& v) { o.limit_test = v.get<std::size_t>(); }},
        {"blobs_n", [](Opts& o, const json& v) { o.blobs_n = v.get<std::size_t>(); }},
        {"blobs_sep", [](Opts& o, const json& v) { o.blobs_sep = v.get<double>(); }},
        {"blobs_seed", [](Opts& o, const json& v) { o.blobs_seed = v.get<std::uint64_t>(); }},
    };
    return keys;
}

void apply_config_file(Opts& o) {
    if (o.config_path.empty()) return;
    std::ifstream f(o.config_path);
    if (!f) throw InputError("config: cannot open " + o.config_path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw InputError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw InputError("config: top level must be an object");
    const auto& keys = config_keys();
    for (const auto& [key, value] : j.items()) {
        auto it = keys.find(key);
        if (it == keys.end()) throw InputError("config: unknown key '" + key + "'");
        try {
            it->second(o, value);
        } catch (const json::exception& e) {
            throw InputError("config: bad value for '" + key + "': " + e.what());
        }
    }
}

json resolved_config(const Opts& o) {
    return json{{"model", o.model},
                {"dataset", o.dataset},
                {"activation", o.activation},
                {"data_dir", o.data_dir},
                {"out", o.out_dir},
                {"init", o.init},
                {"pretrained", o.pretrained},
                {"optimizer", o.optimizer},
                {"scheduler", o.scheduler},
                {"checkpoint", o.checkpoint},
                {"epochs", o.epochs},
                {"batch_size", o.batch_size},
                {"num_classes", o.num_classes},
                {"lr", o.lr},
                {"momentum", o.momentum},
                {"weight_decay", o.weight_decay},
                {"decay", o.decay},
                {"lr_min", o.lr_min},
                {"milestones", o.milestones},
                {"seed", o.seed},
                {"slopes_only", o.slopes_only},
                {"augment", o.augment},
                {"tolerance_pp", o.tolerance_pp},
                {"gamma", o.gamma},
                {"limit_train", o.limit_train},
                {"limit_test", o.limit_test},
                {"blobs_n", o.blobs_n},
                {"blobs_sep", o.blobs_sep},
                {"blobs_seed", o.blobs_seed}};
}

// Sentinel lock so two commands cannot clobber one output directory.
class OutDirLock {
  public:
    explicit OutDirLock(const std::string& dir) : path_(fs::path(dir) / ".lock") {
        fs::create_directories(dir);
        if (fs::exists(path_))
            throw InputError("output directory " + dir +
                             " is locked by another run (stale? remove " + path_.string() + ")");
        std::ofstream(path_) << "locked\n";
    }
    ~OutDirLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }

  private:
    fs::path path_;
};

std::string resolve_data_dir(const Opts& o) {
    if (!o.data_dir.empty()) return o.data_dir;
    if (const char* env = std::getenv("RRELU_DATA_DIR")) return env;
    throw InputError("no dataset directory: pass --data-dir or set RRELU_DATA_DIR");
}

struct Splits {
    Dataset train, test;
};

Splits load_splits(const Opts& o, const ModelSpec& spec) {
    Splits s;
    if (o.dataset == "mnist") {
        const std::string dir = resolve_data_dir(o);
        s.train = load_mnist(dir, true);
        s.test = load_mnist(dir, false);
    } else if (o.dataset == "cifar10") {
        const std::string dir = resolve_data_dir(o);
        s.train = load_cifar10(dir, true);
        s.test = load_cifar10(dir, false);
    } else if (o.dataset == "cifar100") {
        const std::string dir = resolve_data_dir(o);
        s.train = load_cifar100(dir, true);
        s.test = load_cifar100(dir, false);
    } else if (o.dataset == "blobs") {
        std::size_t c = 1, h = 1, w = 1;
        if (spec.input_shape.size() == 3) {
            c = spec.input_shape[0];
            h = spec.input_shape[1];
            w = spec.input_shape[2];
        } else {
            h = spec.input_shape[0];
        }
        const std::size_t n_test = std::max<std::size_t>(o.blobs_n / 4, 1);
        Dataset all = synthetic_blobs(o.blobs_n + n_test, c, h, w, o.num_classes,
                                      static_cast<float>(o.blobs_sep), o.blobs_seed);
        std::vector<std::size_t> tr(o.blobs_n), te(n_test);
        for (std::size_t i = 0; i < o.blobs_n; ++i) tr[i] = i;
        for (std::size_t i = 0; i < n_test; ++i) te[i] = o.blobs_n + i;
        auto [ti, tl] = gather(all, tr);
        auto [vi, vl] = gather(all, te);
        s.train = Dataset{std::move(ti), std::move(tl), all.num_classes};
        s.test = Dataset{std::move(vi), std::move(vl), all.num_classes};
    } else {
        throw InputError("unknown dataset '" + o.dataset + "'");
    }
    if (o.limit_train) s.train = take(s.train, o.limit_train);
    if (o.limit_test) s.test = take(s.test, o.limit_test);
    const Standardizer std_ = Standardizer::fit(s.train);
    std_.apply(s.train);
    std_.apply(s.test);
    return s;
}

TrainConfig train_config(const Opts& o) {
    TrainConfig cfg;
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch_size;
    cfg.seed = o.seed;
    cfg.augment = o.augment;
    cfg.freeze_weights = o.slopes_only;
    if (o.optimizer == "adam") {
        cfg.opt.kind = OptimizerCfg::Kind::Adam;
    } else if (o.optimizer == "sgd") {
        cfg.opt.kind = OptimizerCfg::Kind::SgdMomentum;
    } else {
        throw InputError("unknown optimizer '" + o.optimizer + "'");
    }
    cfg.opt.lr = static_cast<float>(o.lr);
    cfg.opt.momentum = static_cast<float>(o.momentum);
    cfg.opt.weight_decay = static_cast<float>(o.weight_decay);
    if (o.scheduler == "constant") {
        cfg.sched.kind = SchedulerCfg::Kind::Constant;
    } else if (o.scheduler == "multistep") {
        cfg.sched.kind = SchedulerCfg::Kind::Multistep;
    } else if (o.scheduler == "cosine") {
        cfg.sched.kind = SchedulerCfg::Kind::Cosine;
    } else {
        throw InputError("unknown scheduler '" + o.scheduler + "'");
    }
    cfg.sched.milestones = o.milestones;
    cfg.sched.decay = static_cast<float>(o.decay);
    cfg.sched.lr_min = static_cast<float>(o.lr_min);
    return cfg;
}

void echo_config(const Opts& o) {
    std::ofstream f(fs::path(o.out_dir) / "config.json", std::ios::trunc);
    f << resolved_config(o).dump(2) << "\n";
}

int cmd_train(Opts& o) {
    if (o.out_dir.empty()) throw InputError("train: --out is required");
    if (o.init == "type2" && o.pretrained.empty())
        throw InputError("train: --init type2 requires --pretrained");
    if (o.init != "type1" && o.init != "type2")
        throw InputError("train: --init must be type1 or type2");

    OutDirLock lock(o.out_dir);
    ModelSpec spec = build_named_model(o.model, o.num_classes, o.activation);
    Splits data = load_splits(o, spec);
    Network net = Network::build(spec);
    if (o.init == "type1") {
        init_type1(net, o.seed);
    } else {
        const Network donor = load_checkpoint(o.pretrained);
        init_type2(net, donor);
    }
    const TrainConfig cfg = train_config(o);
    const RunLog log = o.slopes_only ? train_slopes_only(net, data.train, &data.test, cfg)
                                     : train(net, data.train, &data.test, cfg);
    save_checkpoint(net, (fs::path(o.out_dir) / "checkpoint").string());
    log.write_csv((fs::path(o.out_dir) / "runlog.csv").string());
    echo_config(o);
    const float acc = evaluate_accuracy(net, data.test);
    std::cout << "final test accuracy: " << acc << "\n";
    std::cout << "checkpoint: " << (fs::path(o.out_dir) / "checkpoint").string() << "\n";
    return 0;
}

int cmd_select_gamma(Opts& o) {
    if (o.checkpoint.empty() || o.out_dir.empty())
        throw InputError("select-gamma: --checkpoint and --out are required");
    OutDirLock lock(o.out_dir);
    Network net = load_checkpoint(o.checkpoint);
    Splits data = load_splits(o, net.spec);
    // Deterministic halves: select on even test indices, report on odd ones.
    auto [half_a, half_b] = split_even_odd(data.test);
    const GammaSearchResult res = select_gamma(net, half_a, o.tolerance_pp);
    const PruneMask mask = derive_mask(net, res.gamma);
    const Network zeroed = apply_mask_zero(net, mask);
    const double report_base = evaluate_accuracy(net, half_b);
    const double report_acc = evaluate_accuracy(zeroed, half_b);

    json out = json::parse(res.to_json());
    out["report_baseline_accuracy"] = report_base;
    out["report_accuracy"] = report_acc;
    out["pruned_slopes"] = mask.pruned_count();
    out["total_slopes"] = mask.total_count();
    std::ofstream f(fs::path(o.out_dir) / "gamma.json", std::ios::trunc);
    f << out.dump(2) << "\n";
    echo_config(o);
    std::cout << "gamma: " << res.gamma << " (selection acc " << res.chosen_accuracy
              << ", baseline " << res.baseline_accuracy << ")\n";
    std::cout << "report half: " << report_acc << " vs baseline " << report_base << "\n";
    std::cout << "pruned slopes: " << mask.pruned_count() << " / " << mask.total_count() << "\n";
    return 0;
}

int cmd_prune(Opts& o) {
    if (o.checkpoint.empty() || o.out_dir.empty())
        throw InputError("prune: --checkpoint and --out are required");
    double gamma = o.gamma;
    if (!o.gamma_file.empty()) {
        std::ifstream f(o.gamma_file);
        if (!f) throw InputError("prune: cannot open " + o.gamma_file);
        json j;
        try {
            f >> j;
            gamma = j.at("gamma").get<double>();
        } catch (const json::exception& e) {
            throw InputError(std::string("prune: bad gamma file: ") + e.what());
        }
    }
    if (gamma < 0) throw InputError("prune: pass --gamma or --gamma-file");

    OutDirLock lock(o.out_dir);
    Network net = load_checkpoint(o.checkpoint);
    const PruneMask mask = derive_mask(net, static_cast<float>(gamma));
    const Network zeroed = apply_mask_zero(net, mask);
    const Network compacted = compact(net, mask);
    const EquivalenceReport eq = verify_equivalence(zeroed, compacted, 100, 1e-5, o.seed + 1);
    if (!eq.pass) {
        std::cerr << "equivalence check FAILED: max |diff| " << eq.max_abs_diff << " over "
                  << eq.n_inputs << " inputs (tol " << eq.tol << "); no checkpoint emitted\n";
        return 1;
    }
    save_checkpoint(compacted, (fs::path(o.out_dir) / "checkpoint").string());
    std::ofstream mf(fs::path(o.out_dir) / "mask.json", std::ios::trunc);
    mf << mask.to_json() << "\n";
    const SavingsReport rep = savings_report(net.spec, compacted.spec, mask.total_count(),
                                             mask.pruned_count(), static_cast<float>(gamma));
    std::ofstream tf(fs::path(o.out_dir) / "savings.txt", std::ios::trunc);
    tf << rep.to_text();
    std::ofstream cf(fs::path(o.out_dir) / "savings.csv", std::ios::trunc);
    cf << rep.to_csv();
    echo_config(o);
    std::cout << rep.to_text();
    std::cout << "equivalence: max |diff| " << eq.max_abs_diff << " over " << eq.n_inputs
              << " random inputs (tol " << eq.tol << ")\n";
    return 0;
}

int cmd_report(Opts& o) {
    if (o.checkpoint.empty()) throw InputError("report: --checkpoint is required");
    const Network before = load_checkpoint(o.checkpoint);
    const Network after = o.pruned.empty() ? before : load_checkpoint(o.pruned);
    std::size_t slopes_before = 0, slopes_after = 0;
    for (const auto& name : before.rrelu_layer_names())
        slopes_before += before.params.at(name + ".slopes").size();
    for (const auto& name : after.rrelu_layer_names())
        slopes_after += after.params.at(name + ".slopes").size();
    const SavingsReport rep = savings_report(before.spec, after.spec, slopes_before,
                                             slopes_before - slopes_after, 0.0f);
    std::cout << rep.to_text();
    std::cout << rep.to_csv();
    if (!o.out_dir.empty()) {
        OutDirLock lock(o.out_dir);
        std::ofstream tf(fs::path(o.out_dir) / "savings.txt", std::ios::trunc);
        tf << rep.to_text();
        std::ofstream cf(fs::path(o.out_dir) / "savings.csv", std::ios::trunc);
        cf << rep.to_csv();
        echo_config(o);
    }
    return 0;
}

int cmd_analyze(Opts& o) {
    if (o.checkpoint.empty()) throw InputError("analyze: --checkpoint is required");
    if (!o.filter_path && o.hist_bins <= 0)
        throw InputError("analyze: pass --filter-path and/or --hist BINS");
    const Network net = load_checkpoint(o.checkpoint);
    if (!o.out_dir.empty()) fs::create_directories(o.out_dir);
    if (o.filter_path) {
        const auto counts = per_unit_filter_counts(net.spec);
        const FilterPathDistribution dist = filter_path_distribution(counts);
        std::cout << dist.to_json() << "\n";
        if (!o.out_dir.empty()) {
            std::ofstream f(fs::path(o.out_dir) / "filter_path.json", std::ios::trunc);
            f << dist.to_json() << "\n";
        }
    }
    if (o.hist_bins > 0) {
        const auto slopes = collect_slopes(net);
        float lo = 0.0f, hi = 0.0f;
        for (const auto& [name, v] : slopes)
            for (float x : v) {
                lo = std::min(lo, x);
                hi = std::max(hi, x);
            }
        if (hi <= lo) hi = lo + 1.0f;
        const float width = (hi - lo) / static_cast<float>(o.hist_bins);
        std::ostringstream os;
        os << "layer,bin_lo,bin_hi,count\n";
        for (const auto& [name, v] : slopes) {
            std::vector<std::size_t> bins(static_cast<std::size_t>(o.hist_bins), 0);
            for (float x : v) {
                auto b = static_cast<std::size_t>((x - lo) / width);
                if (b >= bins.size()) b = bins.size() - 1;
                ++bins[b];
            }
            for (std::size_t b = 0; b < bins.size(); ++b)
                os << name << "," << lo + width * static_cast<float>(b) << ","
                   << lo + width * static_cast<float>(b + 1) << "," << bins[b] << "\n";
        }
        std::cout << os.str();
        if (!o.out_dir.empty()) {
            std::ofstream f(fs::path(o.out_dir) / "hist.csv", std::ios::trunc);
            f << os.str();
            write_slope_csv(net, (fs::path(o.out_dir) / "slopes.csv").string());
        }
    }
    return 0;
}

void add_common(CLI::App* cmd, Opts& o) {
    cmd->add_option("--config", o.config_path, "JSON config file (flags override it)");
    cmd->add_option("--data-dir", o.data_dir, "dataset root (or env RRELU_DATA_DIR)");
    cmd->add_option("--dataset", o.dataset, "mnist | cifar10 | cifar100 | blobs");
    cmd->add_option("--out", o.out_dir, "output directory");
    cmd->add_option("--seed", o.seed, "RNG seed");
    cmd->add_option("--num-classes", o.num_classes, "class count (blobs / residual nets)");
    cmd->add_option("--limit-train", o.limit_train, "cap training samples");
    cmd->add_option("--limit-test", o.limit_test, "cap test samples");
    cmd->add_option("--blobs-n", o.blobs_n, "synthetic training samples");
    cmd->add_option("--blobs-sep", o.blobs_sep, "synthetic class separation");
    cmd->add_option("--blobs-seed", o.blobs_seed, "synthetic data seed");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rotated-ReLU training and structured-pruning toolkit"};
    app.require_subcommand(1);
    Opts o;

    CLI::App* tr = app.add_subcommand("train", "train a model and write a checkpoint");
    add_common(tr, o);
    tr->add_option("--model", o.model, "fcnn-<dims>, resnet<depth>, wrn-<depth>-<widen>");
    tr->add_option("--activation", o.activation, "relu | rrelu");
    tr->add_option("--init", o.init, "type1 | type2");
    tr->add_option("--pretrained", o.pretrained, "donor checkpoint for type2");
    tr->add_flag("--slopes-only", o.slopes_only, "freeze weights, train slopes");
    tr->add_option("--epochs", o.epochs);
    tr->add_option("--batch-size", o.batch_size);
    tr->add_option("--optimizer", o.optimizer, "adam | sgd");
    tr->add_option("--lr", o.lr);
    tr->add_option("--momentum", o.momentum);
    tr->add_option("--weight-decay", o.weight_decay);
    tr->add_option("--scheduler", o.scheduler, "constant | multistep | cosine");
    tr->add_option("--milestones", o.milestones);
    tr->add_option("--decay", o.decay);
    tr->add_option("--lr-min", o.lr_min);
    tr->add_flag("--augment", o.augment, "pad-4 crop + horizontal flip");

    CLI::App* sg = app.add_subcommand("select-gamma", "pick a pruning threshold on held-out data");
    add_common(sg, o);
    sg->add_option("--checkpoint", o.checkpoint)->required();
    sg->add_option("--tolerance-pp", o.tolerance_pp, "allowed accuracy drop, percentage points");

    CLI::App* pr = app.add_subcommand("prune", "compact a checkpoint at a threshold");
    add_common(pr, o);
    pr->add_option("--checkpoint", o.checkpoint)->required();
    pr->add_option("--gamma", o.gamma, "threshold");
    pr->add_option("--gamma-file", o.gamma_file, "gamma.json from select-gamma");

    CLI::App* re = app.add_subcommand("report", "parameter / FLOP savings tables");
    add_common(re, o);
    re->add_option("--checkpoint", o.checkpoint)->required();
    re->add_option("--pruned", o.pruned, "pruned checkpoint to compare against");

    CLI::App* an = app.add_subcommand("analyze", "filter-path distribution and slope histograms");
    add_common(an, o);
    an->add_option("--checkpoint", o.checkpoint)->required();
    an->add_flag("--filter-path", o.filter_path, "emit the filter-path length distribution");
    an->add_option("--hist", o.hist_bins, "slope histogram with this many bins");

    // Config file values act as defaults; explicit flags override them.  The
    // file is applied before the regular parse, so it is located up front.
    try {
        for (int i = 1; i + 1 < argc; ++i)
            if (std::string(argv[i]) == "--config") {
                o.config_path = argv[i + 1];
                apply_config_file(o);
                break;
            }
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (tr->parsed()) return cmd_train(o);
        if (sg->parsed()) return cmd_select_gamma(o);
        if (pr->parsed()) return cmd_prune(o);
        if (re->parsed()) return cmd_report(o);
        if (an->parsed()) return cmd_analyze(o);
        return 2;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
