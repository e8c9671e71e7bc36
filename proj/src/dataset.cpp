#include "morphwin/dataset.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "morphwin/rng.hpp"

namespace morphwin {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifest = "manifest.csv";
constexpr const char* kHeader = "index,seed,moving,fixed,field,pre_dice,warnings";

std::string pair_name(std::size_t i, const char* what) {
    std::ostringstream os;
    os << "pair_" << std::setw(3) << std::setfill('0') << i << "_" << what << ".mwvol";
    return os.str();
}

std::vector<std::string> split_csv(const std::string& line, std::size_t fields) {
    std::vector<std::string> out;
    std::size_t start = 0;
    // The last field may contain commas.
    while (out.size() + 1 < fields) {
        const auto comma = line.find(',', start);
        if (comma == std::string::npos) break;
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    out.push_back(line.substr(start));
    return out;
}

}  // namespace

std::uint64_t pair_seed(std::uint64_t base, std::size_t index) {
    std::uint64_t x = base;
    std::uint64_t s = Rng::splitmix64(x);
    for (std::size_t i = 0; i < index; ++i) s = Rng::splitmix64(x);
    return s;
}

double mean_organ_dice(const LabelMap& warped, const LabelMap& fixed) {
    const auto labels = fixed.foreground_labels();
    if (labels.empty()) return 1.0;
    double sum = 0;
    for (auto l : labels) sum += dice(warped, fixed, l);
    return sum / static_cast<double>(labels.size());
}

std::vector<RegistrationPair> synthesize_pairs(const RunConfig& cfg) {
    std::vector<RegistrationPair> pairs;
    for (std::size_t i = 0; i < cfg.pairs; ++i) {
        auto spec = cfg.phantom;
        spec.seed = pair_seed(cfg.seed, i);
        pairs.push_back(make_pair(spec));
    }
    return pairs;
}

Dataset write_dataset(const RunConfig& cfg, const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create '" + dir + "': " + ec.message());

    Dataset ds;
    ds.dir = dir;
    const auto pairs = synthesize_pairs(cfg);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        ManifestEntry e;
        e.index = i;
        e.seed = pair_seed(cfg.seed, i);
        e.moving = pair_name(i, "moving");
        e.fixed = pair_name(i, "fixed");
        e.field = pair_name(i, "field");
        e.pre_dice = mean_organ_dice(p.moving.labels, p.fixed.labels);
        for (const auto& w : p.warnings) e.warnings += (e.warnings.empty() ? "" : "; ") + w;
        save_labeled((fs::path(dir) / e.moving).string(), p.moving);
        save_labeled((fs::path(dir) / e.fixed).string(), p.fixed);
        save_field((fs::path(dir) / e.field).string(), p.ground_truth, cfg.phantom.spacing);
        ds.entries.push_back(std::move(e));
    }

    const auto path = fs::path(dir) / kManifest;
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << config_text(cfg, "# ") << kHeader << "\n";
    for (const auto& e : ds.entries) {
        out << e.index << "," << e.seed << "," << e.moving << "," << e.fixed << "," << e.field << ","
            << std::setprecision(17) << e.pre_dice << "," << e.warnings << "\n";
    }
    if (!out) throw Error("cannot write '" + path.string() + "'");
    return ds;
}

Dataset read_dataset(const std::string& dir) {
    const auto path = fs::path(dir) / kManifest;
    std::ifstream in(path);
    if (!in) throw ValidationError("no manifest at '" + path.string() + "'");
    Dataset ds;
    ds.dir = dir;
    std::string line;
    bool header = false;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            if (line != kHeader) throw ValidationError(path.string() + ":" + std::to_string(n) + ": unexpected header");
            header = true;
            continue;
        }
        const auto f = split_csv(line, 7);
        if (f.size() != 7) throw ValidationError(path.string() + ":" + std::to_string(n) + ": expected 7 fields");
        try {
            ManifestEntry e;
            e.index = std::stoul(f[0]);
            e.seed = std::stoull(f[1]);
            e.moving = f[2];
            e.fixed = f[3];
            e.field = f[4];
            e.pre_dice = std::stod(f[5]);
            e.warnings = f[6];
            ds.entries.push_back(std::move(e));
        } catch (const std::logic_error&) {
            throw ValidationError(path.string() + ":" + std::to_string(n) + ": malformed number");
        }
    }
    if (!header) throw ValidationError(path.string() + ": missing header");
    if (ds.entries.empty()) throw ValidationError(path.string() + ": no pairs");
    return ds;
}

LabeledVolume Dataset::moving(std::size_t i) const { return load_labeled((fs::path(dir) / entries.at(i).moving).string()); }
LabeledVolume Dataset::fixed(std::size_t i) const { return load_labeled((fs::path(dir) / entries.at(i).fixed).string()); }
Tensor<float> Dataset::ground_truth(std::size_t i) const {
    return load_field((fs::path(dir) / entries.at(i).field).string());
}

Dims3 Dataset::dims() const { return fixed(0).dims(); }

std::vector<ImagePair> Dataset::image_pairs() const {
    std::vector<ImagePair> out;
    const auto d = dims();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto m = moving(i);
        auto f = fixed(i);
        if (m.dims() != d || f.dims() != d) {
            throw ValidationError("pair " + std::to_string(i) + " dims " + format_dims(f.dims()) + " differ from " +
                                  format_dims(d));
        }
        out.push_back({std::move(m.intensity), std::move(f.intensity)});
    }
    return out;
}

std::vector<RegistrationPair> Dataset::pairs() const {
    std::vector<RegistrationPair> out;
    for (std::size_t i = 0; i < entries.size(); ++i) out.push_back({moving(i), fixed(i), ground_truth(i), {}});
    return out;
}

std::vector<ImagePair> image_pairs(const std::vector<RegistrationPair>& pairs) {
    std::vector<ImagePair> out;
    for (const auto& p : pairs) out.push_back({p.moving.intensity, p.fixed.intensity});
    return out;
}

Registration register_pair(const ParamSet<float>& params, const ArchConfig& arch, const LabeledVolume& moving,
                           const LabeledVolume& fixed, Border border, bool double_precision) {
    Registration r;
    r.field = predict_field(params, arch, moving.intensity, fixed.intensity, double_precision);
    r.warped = warp_trilinear(moving.intensity, r.field, border);
    r.warped_labels = warp_nearest(moving.labels, r.field);
    return r;
}

std::vector<PairScore> score_pairs(const ParamSet<float>& params, const ArchConfig& arch,
                                   const std::vector<RegistrationPair>& pairs, std::size_t threads, Border border,
                                   bool double_precision) {
    std::vector<PairScore> scores(pairs.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < pairs.size(); i = next++) {
            try {
                const auto& p = pairs[i];
                const auto r = register_pair(params, arch, p.moving, p.fixed, border, double_precision);
                scores[i].pair = i;
                scores[i].pre_dice = mean_organ_dice(p.moving.labels, p.fixed.labels);
                scores[i].report = evaluate(r.warped_labels, p.fixed.labels, r.field, p.fixed.spacing);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const auto n = std::max<std::size_t>(1, std::min(threads, pairs.size()));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return scores;
}

std::size_t thread_count_from_env() {
    if (const char* env = std::getenv("MORPHWIN_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace morphwin
