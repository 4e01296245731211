// dwp: synthetic-data Bayesian transfer-learning pipeline for volumetric
// segmentation. Subcommands cover the full flow: generate data, train source
// networks, build a kernel prior, run target protocols, and report results.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "dwp/data.hpp"
#include "dwp/errors.hpp"
#include "dwp/experiments.hpp"
#include "dwp/kernel_bank.hpp"
#include "dwp/objective.hpp"
#include "dwp/serialize.hpp"
#include "dwp/unet.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace dwp;

namespace {

bool verbose() {
    const char* v = std::getenv("DWP_VERBOSE");
    return v == nullptr || std::string(v) != "0";
}

TrainLog make_log(std::ofstream* file) {
    return [file](const std::string& line) {
        if (verbose()) std::cout << line << "\n";
        if (file && *file) *file << line << "\n";
    };
}

std::array<int64_t, 3> parse_triple(const std::string& s, const char* what) {
    std::array<int64_t, 3> out{};
    char c1 = 0, c2 = 0;
    std::istringstream is(s);
    if (!(is >> out[0] >> c1 >> out[1] >> c2 >> out[2]) || c1 != ',' || c2 != ',')
        throw ConfigError(std::string(what) + ": expected D,H,W, got '" + s + "'");
    return out;
}

std::array<int, 3> parse_widths(const std::string& s) {
    auto t = parse_triple(s, "--widths");
    return {static_cast<int>(t[0]), static_cast<int>(t[1]), static_cast<int>(t[2])};
}

void write_manifest(const fs::path& dir, const DomainPreset& preset, int n, uint64_t seed,
                    const std::vector<std::string>& files) {
    json j;
    j["version"] = 1;
    j["preset"] = preset.name;
    j["n"] = n;
    j["seed"] = seed;
    j["shape"] = {preset.shape[0], preset.shape[1], preset.shape[2]};
    j["volumes"] = files;
    std::ofstream out(dir / "manifest.json");
    out << j.dump(2) << "\n";
}

std::vector<Volume> load_dataset(const std::string& dir) {
    const fs::path manifest = fs::path(dir) / "manifest.json";
    if (!fs::exists(manifest)) throw ConfigError("no manifest.json under '" + dir + "'");
    json j;
    std::ifstream in(manifest);
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw IoError("manifest '" + manifest.string() + "': " + e.what());
    }
    std::vector<Volume> vols;
    for (const auto& name : j.at("volumes"))
        vols.push_back(load_volume((fs::path(dir) / name.get<std::string>()).string()));
    if (vols.empty()) throw ConfigError("dataset '" + dir + "' is empty");
    return vols;
}

// ---- generate ----------------------------------------------------------

struct GenerateArgs {
    std::string preset = "tumor-like";
    int n = 20;
    uint64_t seed = 0;
    std::string out;
    std::string shape;
    bool force = false;
};

int cmd_generate(const GenerateArgs& a) {
    DomainPreset preset = DomainPreset::by_name(a.preset);
    if (!a.shape.empty()) preset.shape = parse_triple(a.shape, "--shape");

    fs::path dir(a.out);
    if (fs::exists(dir) && !fs::is_empty(dir) && !a.force)
        throw ConfigError("output directory '" + a.out + "' is not empty (use --force)");
    fs::create_directories(dir);

    auto vols = generate(preset, a.n, a.seed);
    std::vector<std::string> files;
    char name[32];
    for (size_t i = 0; i < vols.size(); ++i) {
        std::snprintf(name, sizeof(name), "vol_%04zu.dwpv", i);
        save_volume(vols[i], (dir / name).string());
        files.emplace_back(name);
    }
    write_manifest(dir, preset, a.n, a.seed, files);
    json cfg{{"preset", a.preset}, {"n", a.n}, {"shape", a.shape}};
    write_repro_record(dir.string(), cfg.dump(), a.seed);
    if (verbose()) std::cout << "wrote " << vols.size() << " volumes to " << a.out << "\n";
    return 0;
}

// ---- train-source ------------------------------------------------------

struct TrainSourceArgs {
    std::string data;
    std::string out;
    int n_nets = 4;
    int cycles = 1;
    uint64_t seed = 0;
    std::string widths = "4,8,16";
    int max_epochs = 500;
    int batch_size = 2;
};

int cmd_train_source(const TrainSourceArgs& a) {
    auto dataset = load_dataset(a.data);
    fs::path dir(a.out);
    fs::create_directories(dir);
    std::ofstream logfile(dir / "train_log.txt");
    auto log = make_log(&logfile);

    TrainHyperparams hp;
    hp.max_epochs = a.max_epochs;
    hp.batch_size = a.batch_size;

    NetworkSpec spec;
    spec.base_widths = parse_widths(a.widths);

    // held-out 10% of the source data for validation
    const size_t n_val = std::max<size_t>(1, dataset.size() / 10);
    std::vector<Volume> val(dataset.end() - static_cast<long>(n_val), dataset.end());
    std::vector<Volume> train(dataset.begin(), dataset.end() - static_cast<long>(n_val));

    for (int i = 0; i < a.n_nets; ++i) {
        UNet net(spec);
        Rng init(derive_seed(a.seed, "source-init", i));
        he_init(net, init);
        Rng rng(derive_seed(a.seed, "source-train", i));
        auto snaps = train_with_restarts(net, train, val, hp, a.cycles, rng, log);
        for (size_t c = 0; c < snaps.size(); ++c) {
            UNet snap(spec);
            size_t k = 0;
            for (auto& L : snap.layers()) L.w = snaps[c].weights[k++];
            char name[48];
            std::snprintf(name, sizeof(name), "src_%02d_c%zu.dwpc", i, c);
            save_checkpoint(snap, (dir / name).string());
            char line[128];
            std::snprintf(line, sizeof(line), "# checkpoint %s val_dsc=%.4f", name,
                          snaps[c].val_dsc);
            log(line);
        }
    }
    json cfg{{"n_nets", a.n_nets},
             {"cycles", a.cycles},
             {"widths", a.widths},
             {"max_epochs", a.max_epochs}};
    write_repro_record(dir.string(), cfg.dump(), a.seed);
    return 0;
}

// ---- build-prior -------------------------------------------------------

struct BuildPriorArgs {
    std::vector<std::string> checkpoints;
    std::string out;
    uint64_t seed = 0;
    int latent_dim = 6;
    int max_epochs = 500;
    int batch_size = 20;
    int64_t kernels_per_group = 0;
};

int cmd_build_prior(const BuildPriorArgs& a) {
    if (a.checkpoints.empty()) throw ConfigError("build-prior: need at least one checkpoint");
    auto gm = resolution_group_map();
    std::vector<KernelBank> banks;
    for (const auto& path : a.checkpoints) {
        UNet net = load_checkpoint(path);
        banks.push_back(collect(net, gm, fs::path(path).filename().string()));
    }
    KernelBank bank = normalize(merge(banks));

    VaeHyperparams hp;
    hp.latent_dim = a.latent_dim;
    hp.max_epochs = a.max_epochs;
    hp.batch_size = a.batch_size;
    std::vector<std::string> lines;
    PriorBundle bundle = build_prior_bundle(bank, hp, a.seed, a.kernels_per_group, &lines);
    if (verbose())
        for (const auto& l : lines) std::cout << "# " << l << "\n";
    save_bundle(bundle, a.out);
    json cfg{{"checkpoints", a.checkpoints},
             {"latent_dim", a.latent_dim},
             {"max_epochs", a.max_epochs},
             {"kernels_per_group", a.kernels_per_group}};
    write_repro_record(a.out, cfg.dump(), a.seed);
    if (verbose())
        std::cout << "wrote prior bundle with " << bundle.vaes.size() << " VAEs to " << a.out
                  << "\n";
    return 0;
}

// ---- run ---------------------------------------------------------------

struct RunArgs {
    std::string method = "ri";
    std::string data;
    std::string out;
    std::string train_sizes = "5,10,15,20";
    int splits = 3;
    uint64_t seed = 0;
    int test_size = 50;
    std::string source_ckpt;
    std::string prior;
    std::string widths = "4,8,16";
    int max_epochs = 500;
    int batch_size = 2;
    real threshold = 0.5;
    std::string config;
};

void apply_config_file(const RunArgs& a, ExperimentConfig& cfg) {
    std::ifstream in(a.config);
    if (!in) throw ConfigError("cannot open config '" + a.config + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + a.config + "': " + e.what());
    }
    const std::set<std::string> top{"method",    "train_sizes",       "test_size",
                                    "n_splits",  "seed",              "source_checkpoint",
                                    "prior_bundle", "threshold",      "eval_mc_samples",
                                    "widths",    "train"};
    const std::set<std::string> train_keys{"batch_size",     "lr0",
                                           "plateau_patience", "plateau_factor",
                                           "plateau_min_delta", "stop_lr",
                                           "max_epochs"};
    for (const auto& [key, val] : j.items()) {
        if (!top.count(key)) throw ConfigError("config: unknown key '" + key + "'");
        if (key == "train")
            for (const auto& [tk, tv] : val.items())
                if (!train_keys.count(tk))
                    throw ConfigError("config: unknown key 'train." + tk + "'");
    }
    if (j.contains("method")) cfg.method = method_from_name(j["method"].get<std::string>());
    if (j.contains("train_sizes")) cfg.train_sizes = j["train_sizes"].get<std::vector<int>>();
    if (j.contains("test_size")) cfg.test_size = j["test_size"].get<int>();
    if (j.contains("n_splits")) cfg.n_splits = j["n_splits"].get<int>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
    if (j.contains("source_checkpoint")) cfg.source_checkpoint = j["source_checkpoint"];
    if (j.contains("prior_bundle")) cfg.prior_bundle = j["prior_bundle"];
    if (j.contains("threshold")) cfg.threshold = j["threshold"].get<real>();
    if (j.contains("eval_mc_samples")) cfg.eval_mc_samples = j["eval_mc_samples"].get<int>();
    if (j.contains("widths")) {
        auto w = j["widths"].get<std::vector<int>>();
        if (w.size() != 3) throw ConfigError("config: widths must have 3 entries");
        cfg.net_spec.base_widths = {w[0], w[1], w[2]};
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        if (t.contains("batch_size")) cfg.hp.batch_size = t["batch_size"].get<int>();
        if (t.contains("lr0")) cfg.hp.lr0 = t["lr0"].get<real>();
        if (t.contains("plateau_patience"))
            cfg.hp.plateau_patience = t["plateau_patience"].get<int>();
        if (t.contains("plateau_factor")) cfg.hp.plateau_factor = t["plateau_factor"].get<real>();
        if (t.contains("plateau_min_delta"))
            cfg.hp.plateau_min_delta = t["plateau_min_delta"].get<real>();
        if (t.contains("stop_lr")) cfg.hp.stop_lr = t["stop_lr"].get<real>();
        if (t.contains("max_epochs")) cfg.hp.max_epochs = t["max_epochs"].get<int>();
    }
}

int cmd_run(const RunArgs& a, const CLI::App* sub) {
    ExperimentConfig cfg;
    if (!a.config.empty()) apply_config_file(a, cfg);

    auto overridden = [&](const char* flag) { return sub->count(flag) > 0; };
    if (a.config.empty() || overridden("--method")) cfg.method = method_from_name(a.method);
    if (a.config.empty() || overridden("--train-sizes")) {
        cfg.train_sizes.clear();
        std::istringstream is(a.train_sizes);
        std::string tok;
        while (std::getline(is, tok, ',')) cfg.train_sizes.push_back(std::stoi(tok));
        if (cfg.train_sizes.empty()) throw ConfigError("--train-sizes: empty");
    }
    if (a.config.empty() || overridden("--splits")) cfg.n_splits = a.splits;
    if (a.config.empty() || overridden("--seed")) cfg.seed = a.seed;
    if (a.config.empty() || overridden("--test-size")) cfg.test_size = a.test_size;
    if (a.config.empty() || overridden("--source-ckpt")) cfg.source_checkpoint = a.source_ckpt;
    if (a.config.empty() || overridden("--prior")) cfg.prior_bundle = a.prior;
    if (a.config.empty() || overridden("--widths"))
        cfg.net_spec.base_widths = parse_widths(a.widths);
    if (a.config.empty() || overridden("--max-epochs")) cfg.hp.max_epochs = a.max_epochs;
    if (a.config.empty() || overridden("--batch-size")) cfg.hp.batch_size = a.batch_size;
    if (a.config.empty() || overridden("--threshold")) cfg.threshold = a.threshold;

    // validate prerequisites before any long-running work
    if (cfg.method == Method::PR || cfg.method == Method::PRf) {
        if (cfg.source_checkpoint.empty())
            throw ConfigError(method_name(cfg.method) + " requires --source-ckpt");
        if (!fs::exists(cfg.source_checkpoint))
            throw ConfigError("source checkpoint '" + cfg.source_checkpoint + "' does not exist");
    }
    if (cfg.method == Method::DWP) {
        if (cfg.prior_bundle.empty()) throw ConfigError("dwp requires --prior");
        if (!fs::exists(cfg.prior_bundle))
            throw ConfigError("prior bundle '" + cfg.prior_bundle + "' does not exist");
    }

    auto dataset = load_dataset(a.data);
    fs::path dir(a.out);
    fs::create_directories(dir);
    std::ofstream logfile(dir / "train_log.txt");
    RunResult result = run_protocol(cfg, dataset, make_log(&logfile));

    {
        std::ofstream out(dir / "results.json");
        out << run_result_to_json(result);
    }
    {
        std::ofstream out(dir / "table.txt");
        out << format_table({result});
    }
    {
        // flat per-split metric records
        std::ofstream out(dir / "metrics.csv");
        out << "method,train_size,split,dsc_mean,dsc_std,iou_mean,iou_std\n";
        out.precision(9);
        for (const auto& rec : result.records)
            out << rec.method << "," << rec.train_size << "," << rec.split << ","
                << rec.report.dsc_mean << "," << rec.report.dsc_std << ","
                << rec.report.iou_mean << "," << rec.report.iou_std << "\n";
    }
    json jc{{"method", method_name(cfg.method)},
            {"train_sizes", cfg.train_sizes},
            {"test_size", cfg.test_size},
            {"n_splits", cfg.n_splits},
            {"max_epochs", cfg.hp.max_epochs}};
    write_repro_record(dir.string(), jc.dump(), cfg.seed);
    if (verbose()) std::cout << format_table({result});
    return 0;
}

// ---- report ------------------------------------------------------------

struct ReportArgs {
    std::vector<std::string> results;
    std::string plot;
    std::string out;
};

void write_svg_plot(const std::string& path, const std::vector<RunResult>& results) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"};
    std::vector<std::string> methods;
    std::vector<int> sizes;
    for (const auto& r : results)
        for (const auto& a : r.aggregates) {
            if (std::find(methods.begin(), methods.end(), a.method) == methods.end())
                methods.push_back(a.method);
            if (std::find(sizes.begin(), sizes.end(), a.train_size) == sizes.end())
                sizes.push_back(a.train_size);
        }
    std::sort(sizes.begin(), sizes.end());
    if (sizes.empty()) throw ConfigError("report: no aggregates to plot");

    const real W = 640, H = 420, L = 60, R = 20, T = 30, B = 50;
    auto sx = [&](real s) {
        if (sizes.size() == 1) return L + (W - L - R) / 2;
        const real lo = static_cast<real>(sizes.front()), hi = static_cast<real>(sizes.back());
        return L + (W - L - R) * (s - lo) / (hi - lo);
    };
    auto sy = [&](real d) { return T + (H - T - B) * (1.0 - d); };

    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<line x1='" << L << "' y1='" << sy(0) << "' x2='" << W - R << "' y2='" << sy(0)
       << "' stroke='black'/>\n";
    os << "<line x1='" << L << "' y1='" << sy(0) << "' x2='" << L << "' y2='" << T
       << "' stroke='black'/>\n";
    for (real d = 0.0; d <= 1.001; d += 0.2) {
        os << "<text x='" << L - 8 << "' y='" << sy(d) + 4 << "' font-size='11' text-anchor='end'>"
           << std::fixed << std::setprecision(1) << d << "</text>\n";
        os << "<line x1='" << L - 4 << "' y1='" << sy(d) << "' x2='" << L << "' y2='" << sy(d)
           << "' stroke='black'/>\n";
    }
    for (int s : sizes)
        os << "<text x='" << sx(s) << "' y='" << H - B + 18
           << "' font-size='11' text-anchor='middle'>" << s << "</text>\n";
    os << "<text x='" << (L + W - R) / 2 << "' y='" << H - 10
       << "' font-size='12' text-anchor='middle'>train size</text>\n";
    os << "<text x='16' y='" << (T + H - B) / 2
       << "' font-size='12' text-anchor='middle' transform='rotate(-90 16 " << (T + H - B) / 2
       << ")'>DSC</text>\n";

    size_t ci = 0;
    for (const auto& m : methods) {
        const std::string color = colors[ci % 5];
        std::ostringstream pts;
        for (int s : sizes)
            for (const auto& r : results)
                for (const auto& a : r.aggregates)
                    if (a.method == m && a.train_size == s)
                        pts << sx(s) << "," << sy(a.dsc_mean) << " ";
        os << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='"
           << pts.str() << "'/>\n";
        for (const auto& r : results)
            for (const auto& rec : r.records)
                if (rec.method == m)
                    os << "<circle cx='" << sx(rec.train_size) << "' cy='"
                       << sy(rec.report.dsc_mean) << "' r='3' fill='" << color
                       << "' fill-opacity='0.5'/>\n";
        os << "<text x='" << W - R - 120 << "' y='" << T + 16 * (ci + 1) << "' font-size='12' fill='"
           << color << "'>unet-" << m << "</text>\n";
        ++ci;
    }
    os << "</svg>\n";
    std::ofstream out(path);
    if (!out) throw IoError("cannot write plot '" + path + "'");
    out << os.str();
}

int cmd_report(const ReportArgs& a) {
    if (a.results.empty()) throw ConfigError("report: need at least one results file");
    std::vector<RunResult> results;
    for (const auto& path : a.results) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open results '" + path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        results.push_back(run_result_from_json(ss.str()));
    }
    const std::string table = format_table(results);
    std::cout << table;
    if (!a.out.empty()) {
        std::ofstream out(a.out);
        out << table;
    }
    if (!a.plot.empty()) write_svg_plot(a.plot, results);
    return 0;
}

// ---- sample-prior ------------------------------------------------------

struct SamplePriorArgs {
    std::string bundle;
    int group = 1;
    int n = 5;
    uint64_t seed = 0;
    std::string out;
    bool denormalize = false;
};

int cmd_sample_prior(const SamplePriorArgs& a) {
    PriorBundle bundle = load_bundle(a.bundle);
    auto it = bundle.vaes.find(a.group);
    if (it == bundle.vaes.end())
        throw ConfigError("bundle has no VAE for group " + std::to_string(a.group));
    Rng rng(a.seed);
    Tensor z({a.n, it->second.latent_dim()});
    rng.fill_normal(z);
    auto recon = it->second.decode(z);
    const auto [shift, scale] = bundle.norm.at(a.group);

    json j;
    j["group"] = a.group;
    j["normalized"] = !a.denormalize;
    j["kernels"] = json::array();
    for (int i = 0; i < a.n; ++i) {
        json k = json::array();
        for (int64_t e = 0; e < 27; ++e) {
            real v = recon.mu[i * 27 + e];
            if (a.denormalize) v = v / scale + shift;
            k.push_back(v);
        }
        j["kernels"].push_back(k);
    }
    if (a.out.empty())
        std::cout << j.dump(2) << "\n";
    else {
        std::ofstream out(a.out);
        out << j.dump(2) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian transfer learning for volumetric segmentation"};
    app.require_subcommand(1);

    GenerateArgs ga;
    auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset");
    gen->add_option("--preset", ga.preset, "ms-like or tumor-like");
    gen->add_option("--n", ga.n, "number of volumes")->check(CLI::PositiveNumber);
    gen->add_option("--seed", ga.seed, "rng seed");
    gen->add_option("--out", ga.out, "output directory")->required();
    gen->add_option("--shape", ga.shape, "volume shape D,H,W");
    gen->add_flag("--force", ga.force, "overwrite a non-empty output directory");

    TrainSourceArgs ta;
    auto* ts = app.add_subcommand("train-source", "Train source-domain networks");
    ts->add_option("--data", ta.data, "source dataset directory")->required();
    ts->add_option("--out", ta.out, "checkpoint output directory")->required();
    ts->add_option("--n-nets", ta.n_nets)->check(CLI::PositiveNumber);
    ts->add_option("--cycles", ta.cycles, "cyclical lr restarts per network")
        ->check(CLI::NonNegativeNumber);
    ts->add_option("--seed", ta.seed);
    ts->add_option("--widths", ta.widths, "base widths w1,w2,w3");
    ts->add_option("--max-epochs", ta.max_epochs);
    ts->add_option("--batch-size", ta.batch_size);

    BuildPriorArgs ba;
    auto* bp = app.add_subcommand("build-prior", "Train the kernel prior from checkpoints");
    bp->add_option("--checkpoints", ba.checkpoints, "source checkpoint files")->required();
    bp->add_option("--out", ba.out, "bundle output file")->required();
    bp->add_option("--seed", ba.seed);
    bp->add_option("--latent-dim", ba.latent_dim);
    bp->add_option("--max-epochs", ba.max_epochs);
    bp->add_option("--batch-size", ba.batch_size);
    bp->add_option("--kernels-per-group", ba.kernels_per_group,
                   "cap kernels per group (0 = use all)");

    RunArgs ra;
    auto* run = app.add_subcommand("run", "Run a target-domain training protocol");
    run->add_option("--method", ra.method, "ri, pr, prf or dwp");
    run->add_option("--data", ra.data, "target dataset directory")->required();
    run->add_option("--out", ra.out, "output directory")->required();
    run->add_option("--train-sizes", ra.train_sizes);
    run->add_option("--splits", ra.splits);
    run->add_option("--seed", ra.seed);
    run->add_option("--test-size", ra.test_size);
    run->add_option("--source-ckpt", ra.source_ckpt);
    run->add_option("--prior", ra.prior);
    run->add_option("--widths", ra.widths);
    run->add_option("--max-epochs", ra.max_epochs);
    run->add_option("--batch-size", ra.batch_size);
    run->add_option("--threshold", ra.threshold);
    run->add_option("--config", ra.config, "json config file (flags override)");

    ReportArgs rep;
    auto* rp = app.add_subcommand("report", "Merge results and emit table / plot");
    rp->add_option("--results", rep.results, "results.json files")->required();
    rp->add_option("--plot", rep.plot, "svg output path");
    rp->add_option("--out", rep.out, "table output path");

    SamplePriorArgs sa;
    auto* sp = app.add_subcommand("sample-prior", "Sample kernels from a prior bundle");
    sp->add_option("--bundle", sa.bundle)->required();
    sp->add_option("--group", sa.group);
    sp->add_option("--n", sa.n);
    sp->add_option("--seed", sa.seed);
    sp->add_option("--out", sa.out);
    sp->add_flag("--denormalize", sa.denormalize, "map kernels back to network scale");

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_generate(ga);
        if (ts->parsed()) return cmd_train_source(ta);
        if (bp->parsed()) return cmd_build_prior(ba);
        if (run->parsed()) return cmd_run(ra, run);
        if (rp->parsed()) return cmd_report(rep);
        if (sp->parsed()) return cmd_sample_prior(sa);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
