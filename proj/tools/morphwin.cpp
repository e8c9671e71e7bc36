#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "morphwin/config.hpp"
#include "morphwin/dataset.hpp"
#include "morphwin/gradcheck.hpp"
#include "morphwin/metrics.hpp"
#include "morphwin/params.hpp"
#include "morphwin/tensor.hpp"

namespace fs = std::filesystem;
using namespace morphwin;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

// Flags are recorded as (key, value) while parsing and applied after the
// config file, so the file never overrides the command line.
struct Overrides {
    std::string config_file;
    std::vector<std::pair<std::string, std::string>> settings;

    void bind(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        app->add_option_function<std::string>(
            flag, [this, key](const std::string& v) { settings.emplace_back(key, v); }, help + " [" + key + "]");
    }

    void common(CLI::App* app) {
        app->add_option("--config", config_file, "key = value config file");
        app->add_option_function<std::vector<std::string>>(
               "--set",
               [this](const std::vector<std::string>& items) {
                   for (const auto& item : items) {
                       const auto eq = item.find('=');
                       if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + item + "'");
                       settings.emplace_back(item.substr(0, eq), item.substr(eq + 1));
                   }
               },
               "override any config key")
            ->type_name("KEY=VALUE");
        bind(app, "--seed", "seed", "seed");
    }

    RunConfig resolve() const {
        RunConfig cfg;
        if (!config_file.empty()) load_config_file(cfg, config_file);
        for (const auto& [k, v] : settings) apply_setting(cfg, k, v);
        return cfg;
    }
};

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create '" + dir.string() + "': " + ec.message());
}

std::ofstream open_text(const fs::path& path, const RunConfig& cfg) {
    if (path.has_parent_path()) ensure_dir(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << config_text(cfg, "# ");
    return out;
}

// Binary artifacts get the resolved config in a sidecar file.
void write_sidecar(const fs::path& artifact, const RunConfig& cfg) {
    auto out = open_text(artifact.string() + ".config", cfg);
}

std::string fixed6(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(6) << v;
    return os.str();
}

// ---- synth ---------------------------------------------------------------

int synth(const RunConfig& cfg) {
    check_registrable(cfg.phantom, cfg.arch.window);
    const auto ds = write_dataset(cfg, cfg.data_dir);
    double mean = 0;
    for (const auto& e : ds.entries) {
        mean += e.pre_dice;
        if (!e.warnings.empty()) std::cerr << "warning: pair " << e.index << ": " << e.warnings << "\n";
    }
    mean /= static_cast<double>(ds.entries.size());
    std::cout << "wrote " << ds.entries.size() << " pairs (" << format_dims(cfg.phantom.dims) << ") to " << cfg.data_dir
              << ", mean pre-registration Dice " << fixed6(mean) << "\n";
    return kOk;
}

// ---- gradcheck -----------------------------------------------------------

int gradcheck(const RunConfig& cfg, const std::string& corrupt, bool end_to_end) {
    if (!corrupt.empty()) debug::corrupt_adjoint(corrupt);
    GradcheckOptions o;
    o.seed = cfg.seed;
    o.end_to_end = end_to_end;
    const auto report = run_gradcheck(o);
    std::cout << report.text();
    return report.pass() ? kOk : kValidation;
}

// ---- train ---------------------------------------------------------------

int train(const RunConfig& cfg, std::size_t print_every) {
    const auto ds = read_dataset(cfg.data_dir);
    const auto arch = effective_arch(cfg, ds.dims());
    plan_architecture(arch);
    const auto pairs = ds.image_pairs();
    const fs::path report(cfg.report);
    auto log = open_text(report / "train_log.csv", cfg);
    log << "iter,sim,reg,total\n" << std::setprecision(9);

    const auto options = train_options(cfg);
    auto hook = [&](const LossRecord& r) {
        log << r.iter << "," << r.sim << "," << r.reg << "," << r.total << "\n";
        if (print_every > 0 && (r.iter % print_every == 0 || r.iter == 1)) {
            std::cerr << "iter " << r.iter << "  sim " << r.sim << "  reg " << r.reg << "  total " << r.total << "\n";
        }
    };
    if (fs::path(cfg.checkpoint).has_parent_path()) ensure_dir(fs::path(cfg.checkpoint).parent_path());
    try {
        const auto result = train_model(arch, pairs, options, hook);
        write_sidecar(cfg.checkpoint, cfg);
        std::cout << "trained " << result.log.size() << " iterations; checkpoint " << cfg.checkpoint << "; log "
                  << (report / "train_log.csv").string() << "\n";
    } catch (const NonFiniteLoss& e) {
        const auto dump = report / "nan_dump";
        ensure_dir(dump);
        const auto k = e.pair;
        save_labeled((dump / "moving.mwvol").string(), ds.moving(k));
        save_labeled((dump / "fixed.mwvol").string(), ds.fixed(k));
        save_field((dump / "field.mwvol").string(), e.field);
        auto info = open_text(dump / "diagnostic.txt", cfg);
        info << "iteration = " << e.iteration << "\npair = " << k << "\nsim = " << e.record.sim
             << "\nreg = " << e.record.reg << "\ntotal = " << e.record.total << "\n";
        std::cerr << "error: " << e.what() << "; diagnostics in " << dump.string() << "\n";
        return kRuntime;
    }
    return kOk;
}

// ---- register ------------------------------------------------------------

ParamSet<float> load_model(const std::string& path, const ArchConfig& arch) {
    auto params = load_checkpoint(path);
    check_compatible(init_params(arch, 0), params);
    return params;
}

int register_cmd(const RunConfig& cfg, const std::string& moving_path, const std::string& fixed_path,
                 const std::string& out_dir) {
    const auto moving = load_labeled(moving_path);
    const auto fixed = load_labeled(fixed_path);
    if (moving.dims() != fixed.dims()) {
        throw ValidationError("moving " + format_dims(moving.dims()) + " and fixed " + format_dims(fixed.dims()) +
                              " differ");
    }
    const auto arch = effective_arch(cfg, fixed.dims());
    const auto params = load_model(cfg.checkpoint, arch);
    const auto r = register_pair(params, arch, moving, fixed, cfg.border, cfg.double_precision);

    const fs::path out(out_dir);
    ensure_dir(out);
    save_field((out / "field.mwvol").string(), r.field, fixed.spacing);
    save_labeled((out / "warped.mwvol").string(), LabeledVolume{r.warped, r.warped_labels, moving.spacing});
    write_sidecar(out / "field.mwvol", cfg);
    write_sidecar(out / "warped.mwvol", cfg);
    std::cout << "wrote " << (out / "field.mwvol").string() << " and " << (out / "warped.mwvol").string() << "\n";
    return kOk;
}

// ---- evaluate ------------------------------------------------------------

void write_report(const fs::path& dir, const std::string& stem, const EvalReport& r, const RunConfig& cfg) {
    open_text(dir / (stem + ".txt"), cfg) << report_text(r);
    open_text(dir / (stem + ".csv"), cfg) << report_csv(r);
}

int evaluate_single(const RunConfig& cfg, const std::string& warped_path, const std::string& fixed_path,
                    const std::string& field_path, const std::string& out_dir) {
    const auto warped = load_labeled(warped_path);
    const auto fixed = load_labeled(fixed_path);
    const auto d = fixed.dims();
    const auto phi = field_path.empty() ? Tensor<float>::zeros({d[0], d[1], d[2], 3}) : load_field(field_path);
    const auto report = evaluate(warped.labels, fixed.labels, phi, fixed.spacing);
    std::cout << report_text(report);
    write_report(out_dir, "eval", report, cfg);
    return kOk;
}

int evaluate_dataset(const RunConfig& cfg, const std::string& out_dir) {
    const auto ds = read_dataset(cfg.data_dir);
    const auto arch = effective_arch(cfg, ds.dims());
    const auto params = load_model(cfg.checkpoint, arch);
    const auto scores = score_pairs(params, arch, ds.pairs(), thread_count_from_env(), cfg.border, cfg.double_precision);

    const fs::path out(out_dir);
    auto table = open_text(out / "pairs.csv", cfg);
    table << "pair,pre_dice,dice,hd95_mm,folding_percent\n";
    double pre = 0, post = 0, folding = 0;
    for (const auto& s : scores) {
        const auto hd = s.report.mean_hd95();
        table << s.pair << "," << fixed6(s.pre_dice) << "," << fixed6(s.report.mean_dice()) << ","
              << (hd ? fixed6(*hd) : "") << "," << fixed6(s.report.folding_percent) << "\n";
        write_report(out, "pair_" + std::to_string(s.pair), s.report, cfg);
        pre += s.pre_dice;
        post += s.report.mean_dice();
        folding += s.report.folding_percent;
    }
    const auto n = static_cast<double>(scores.size());
    std::cout << scores.size() << " pairs: mean Dice " << fixed6(pre / n) << " -> " << fixed6(post / n)
              << ", mean folding " << fixed6(folding / n) << "%\n";
    for (const auto& s : scores) {
        for (const auto& l : s.report.labels) {
            if (!l.warning.empty()) std::cerr << "warning: pair " << s.pair << ": " << l.warning << "\n";
        }
    }
    return kOk;
}

std::vector<double> read_column(const std::string& run, const std::string& column) {
    fs::path path(run);
    if (fs::is_directory(path)) path /= "pairs.csv";
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read '" + path.string() + "'");
    std::string line;
    std::optional<std::size_t> col;
    std::vector<double> values;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
        if (!col) {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (cells[i] == column) col = i;
            }
            if (!col) throw ValidationError(path.string() + " has no column '" + column + "'");
            continue;
        }
        if (*col >= cells.size() || cells[*col].empty()) {
            throw ValidationError(path.string() + ": missing " + column + " value");
        }
        values.push_back(std::stod(cells[*col]));
    }
    return values;
}

int compare(const std::string& a, const std::string& b, const std::string& column) {
    const auto x = read_column(a, column);
    const auto y = read_column(b, column);
    const auto t = paired_t_test(x, y);
    std::cout << "paired t-test on " << column << " (" << x.size() << " pairs)\n";
    if (!t) {
        std::cout << "undefined: zero variance of differences\n";
        return kOk;
    }
    std::cout << "t = " << t->t << "\ndof = " << t->dof << "\np = " << std::setprecision(6) << t->p << "\n";
    return kOk;
}

// ---- ablate --------------------------------------------------------------

int ablate(const RunConfig& cfg, bool run) {
    struct Variant {
        std::string name;
        bool drop_rb, drop_wwa;
    };
    const std::vector<Variant> variants{
        {"full", false, false}, {"no_recovery", true, false}, {"no_wwa", false, true}, {"no_recovery_no_wwa", true, true}};

    std::optional<Dataset> ds;
    if (run) ds = read_dataset(cfg.data_dir);
    const Dims3 dims = ds ? ds->dims() : (cfg.input_dims_set ? cfg.arch.input_dims : cfg.phantom.dims);

    auto table = open_text(fs::path(cfg.report) / "ablation.csv", cfg);
    table << "variant,parameters" << (run ? ",final_loss,pre_dice,dice,folding_percent" : "") << "\n";
    std::cout << std::left << std::setw(18) << "variant" << std::right << std::setw(12) << "parameters"
              << (run ? "   final_loss   pre_dice       dice  folding%" : "") << "\n";
    for (const auto& v : variants) {
        auto c = cfg;
        c.drop_rb = v.drop_rb;
        c.drop_wwa = v.drop_wwa;
        const auto arch = effective_arch(c, dims);
        const auto count = init_params(arch, c.seed).scalar_count();
        table << v.name << "," << count;
        std::cout << std::left << std::setw(18) << v.name << std::right << std::setw(12) << count;
        if (run) {
            auto options = train_options(c);
            options.checkpoint_path.clear();
            const auto result = train_model(arch, ds->image_pairs(), options);
            double tail = 0;
            const auto k = std::min<std::size_t>(10, result.log.size());
            for (std::size_t i = result.log.size() - k; i < result.log.size(); ++i) tail += result.log[i].total;
            tail /= static_cast<double>(k);
            const auto scores = score_pairs(result.params, arch, ds->pairs(), thread_count_from_env(), c.border);
            double pre = 0, post = 0, fold = 0;
            for (const auto& s : scores) {
                pre += s.pre_dice;
                post += s.report.mean_dice();
                fold += s.report.folding_percent;
            }
            const auto n = static_cast<double>(scores.size());
            table << "," << tail << "," << pre / n << "," << post / n << "," << fold / n;
            std::cout << std::setw(13) << std::setprecision(5) << tail << std::setw(11) << fixed6(pre / n)
                      << std::setw(11) << fixed6(post / n) << std::setw(10) << fixed6(fold / n);
        }
        table << "\n";
        std::cout << "\n";
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deformable registration with weighted window attention"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "morphwin 1.0");

    Overrides synth_o, grad_o, train_o, reg_o, eval_o, abl_o;

    auto* synth_cmd = app.add_subcommand("synth", "generate synthetic phantom pairs and a manifest");
    synth_o.common(synth_cmd);
    synth_o.bind(synth_cmd, "--out", "paths.data", "output directory");
    synth_o.bind(synth_cmd, "--dims", "synth.dims", "volume dims DxHxW");
    synth_o.bind(synth_cmd, "--pairs", "synth.pairs", "number of pairs");
    synth_o.bind(synth_cmd, "--amplitude", "synth.amplitude", "max displacement (voxels)");
    synth_o.bind(synth_cmd, "--organs", "synth.organs", "organs per phantom");
    synth_o.bind(synth_cmd, "--spacing", "synth.spacing", "voxel spacing a,b,c (mm)");

    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    grad_o.common(grad_cmd);
    std::string corrupt;
    bool skip_e2e = false;
    grad_cmd->add_option("--corrupt-adjoint", corrupt, "scale one primitive's adjoint by 1.5 (negative control)");
    grad_cmd->add_flag("--no-end-to-end", skip_e2e, "skip the whole-network check");

    auto* train_cmd = app.add_subcommand("train", "train on a synthetic dataset");
    train_o.common(train_cmd);
    train_o.bind(train_cmd, "--data", "paths.data", "dataset directory");
    train_o.bind(train_cmd, "--checkpoint", "paths.checkpoint", "checkpoint path");
    train_o.bind(train_cmd, "--report", "paths.report", "directory for the loss log");
    train_o.bind(train_cmd, "--iterations", "train.iterations", "iterations");
    train_o.bind(train_cmd, "--lr", "train.lr", "Adam learning rate");
    train_o.bind(train_cmd, "--lambda", "train.lambda", "regularization weight");
    train_o.bind(train_cmd, "--checkpoint-every", "train.checkpoint_every", "checkpoint interval");
    train_o.bind(train_cmd, "--channels", "arch.channels", "base channels");
    train_o.bind(train_cmd, "--heads", "arch.heads", "heads per stage a,b,c,d");
    train_o.bind(train_cmd, "--window", "arch.window", "window dims dxhxw");
    train_o.bind(train_cmd, "--precision", "precision", "single|double");
    std::size_t print_every = 10;
    train_cmd->add_option("--print-every", print_every, "progress interval on stderr (0: quiet)");

    auto* reg_cmd = app.add_subcommand("register", "predict a field and warp the moving volume");
    reg_o.common(reg_cmd);
    std::string moving_path, fixed_path, out_dir = ".";
    reg_cmd->add_option("--moving", moving_path, "moving volume (MWVOL1)")->required();
    reg_cmd->add_option("--fixed", fixed_path, "fixed volume (MWVOL1)")->required();
    reg_cmd->add_option("--out", out_dir, "output directory");
    reg_o.bind(reg_cmd, "--checkpoint", "paths.checkpoint", "checkpoint path");
    reg_o.bind(reg_cmd, "--channels", "arch.channels", "base channels");
    reg_o.bind(reg_cmd, "--heads", "arch.heads", "heads per stage a,b,c,d");
    reg_o.bind(reg_cmd, "--window", "arch.window", "window dims dxhxw");

    auto* eval_cmd = app.add_subcommand("evaluate", "Dice, HD95, folding and paired t-tests");
    eval_o.common(eval_cmd);
    std::string warped_path, eval_fixed, field_path, eval_out;
    std::vector<std::string> runs;
    std::string metric = "dice";
    eval_cmd->add_option("--warped", warped_path, "warped labelled volume");
    eval_cmd->add_option("--fixed", eval_fixed, "fixed labelled volume");
    eval_cmd->add_option("--field", field_path, "deformation field for the folding ratio");
    eval_cmd->add_option("--out", eval_out, "report directory (default: paths.report)");
    eval_cmd->add_option("--compare", runs, "two runs (pairs.csv or its directory) for a paired t-test")->expected(2);
    eval_cmd->add_option("--metric", metric, "column compared by --compare");
    eval_o.bind(eval_cmd, "--data", "paths.data", "dataset directory (batch mode)");
    eval_o.bind(eval_cmd, "--checkpoint", "paths.checkpoint", "checkpoint path (batch mode)");
    eval_o.bind(eval_cmd, "--channels", "arch.channels", "base channels");
    eval_o.bind(eval_cmd, "--heads", "arch.heads", "heads per stage a,b,c,d");
    eval_o.bind(eval_cmd, "--window", "arch.window", "window dims dxhxw");

    auto* abl_cmd = app.add_subcommand("ablate", "parameter counts (and optionally training) per ablation");
    abl_o.common(abl_cmd);
    bool abl_train = false;
    abl_cmd->add_flag("--train", abl_train, "train and score every variant on paths.data");
    abl_o.bind(abl_cmd, "--data", "paths.data", "dataset directory");
    abl_o.bind(abl_cmd, "--report", "paths.report", "directory for ablation.csv");
    abl_o.bind(abl_cmd, "--dims", "arch.input_dims", "input dims when not training");
    abl_o.bind(abl_cmd, "--channels", "arch.channels", "base channels");
    abl_o.bind(abl_cmd, "--heads", "arch.heads", "heads per stage a,b,c,d");
    abl_o.bind(abl_cmd, "--iterations", "train.iterations", "iterations");

    try {
        app.parse(argc, argv);
        if (*synth_cmd) return synth(synth_o.resolve());
        if (*grad_cmd) return gradcheck(grad_o.resolve(), corrupt, !skip_e2e);
        if (*train_cmd) return train(train_o.resolve(), print_every);
        if (*reg_cmd) return register_cmd(reg_o.resolve(), moving_path, fixed_path, out_dir);
        if (*eval_cmd) {
            const auto cfg = eval_o.resolve();
            if (!runs.empty()) return compare(runs[0], runs[1], metric);
            const auto out = eval_out.empty() ? cfg.report : eval_out;
            if (!warped_path.empty() || !eval_fixed.empty()) {
                if (warped_path.empty() || eval_fixed.empty()) throw ValidationError("--warped and --fixed go together");
                return evaluate_single(cfg, warped_path, eval_fixed, field_path, out);
            }
            return evaluate_dataset(cfg, out);
        }
        if (*abl_cmd) return ablate(abl_o.resolve(), abl_train);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidation;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kOk;
}
