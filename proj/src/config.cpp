#include "morphwin/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace morphwin {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, sep)) parts.push_back(trim(item));
    return parts;
}

[[noreturn]] void bad(const std::string& what, const std::string& text) {
    throw ValidationError("invalid " + what + " '" + text + "'");
}

double parse_double(const std::string& text) {
    const auto t = trim(text);
    double v = 0;
    const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || end != t.data() + t.size() || t.empty()) bad("number", text);
    return v;
}

std::uint64_t parse_u64(const std::string& text) {
    const auto t = trim(text);
    std::uint64_t v = 0;
    const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || end != t.data() + t.size() || t.empty()) bad("non-negative integer", text);
    return v;
}

bool parse_bool(const std::string& text) {
    const auto t = trim(text);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    bad("boolean", text);
}

std::string fmt(double v) {
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

template <class C>
std::string join(const C& values) {
    std::string out;
    for (const auto& v : values) {
        if (!out.empty()) out += ",";
        out += fmt(static_cast<std::uint64_t>(v));
    }
    return out;
}

struct Key {
    std::string name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <class M>
Key number(std::string name, M member) {
    return {std::move(name), [member](RunConfig& c, const std::string& v) { member(c) = parse_double(v); },
            [member](const RunConfig& c) { return fmt(member(c)); }};
}

template <class M>
Key count(std::string name, M member) {
    return {std::move(name), [member](RunConfig& c, const std::string& v) { member(c) = parse_u64(v); },
            [member](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(member(c))); }};
}

template <class M>
Key flag(std::string name, M member) {
    return {std::move(name), [member](RunConfig& c, const std::string& v) { member(c) = parse_bool(v); },
            [member](const RunConfig& c) { return fmt(static_cast<bool>(member(c))); }};
}

template <class M>
Key text(std::string name, M member) {
    return {std::move(name), [member](RunConfig& c, const std::string& v) { member(c) = trim(v); },
            [member](const RunConfig& c) { return member(c); }};
}

template <class M>
Key dims(std::string name, M member) {
    return {std::move(name), [member](RunConfig& c, const std::string& v) { member(c) = parse_dims(v); },
            [member](const RunConfig& c) { return format_dims(member(c)); }};
}

template <class M>
Key spacing(std::string name, M member) {
    return {std::move(name),
            [member](RunConfig& c, const std::string& v) {
                const auto parts = split(v, ',');
                if (parts.size() != 3) bad("spacing (expected a,b,c)", v);
                for (int i = 0; i < 3; ++i) {
                    const double s = parse_double(parts[i]);
                    if (!(s > 0)) bad("spacing", v);
                    member(c)[i] = s;
                }
            },
            [member](const RunConfig& c) {
                const auto& s = member(c);
                return fmt(s[0]) + "," + fmt(s[1]) + "," + fmt(s[2]);
            }};
}

#define FIELD(expr) [](auto& c) -> auto& { return expr; }

const std::vector<Key>& keys() {
    static const std::vector<Key> table = {
        count("arch.channels", FIELD(c.arch.channels)),
        dims("arch.window", FIELD(c.arch.window)),
        {"arch.heads",
         [](RunConfig& c, const std::string& v) {
             const auto h = parse_list(v);
             if (h.size() != 4) bad("arch.heads (expected 4 values)", v);
             for (int i = 0; i < 4; ++i) c.arch.heads[i] = h[i];
         },
         [](const RunConfig& c) { return join(c.arch.heads); }},
        count("arch.blocks_per_stage", FIELD(c.arch.blocks_per_stage)),
        {"arch.decoder_widths",
         [](RunConfig& c, const std::string& v) {
             c.arch.decoder_widths = trim(v) == "auto" ? std::vector<std::size_t>{} : parse_list(v);
         },
         [](const RunConfig& c) {
             return c.arch.decoder_widths.empty() ? std::string("auto") : join(c.arch.decoder_widths);
         }},
        {"arch.input_dims",
         [](RunConfig& c, const std::string& v) {
             if (trim(v) == "auto") {
                 c.input_dims_set = false;
             } else {
                 c.arch.input_dims = parse_dims(v);
                 c.input_dims_set = true;
             }
         },
         [](const RunConfig& c) { return c.input_dims_set ? format_dims(c.arch.input_dims) : std::string("auto"); }},
        flag("wwa.window_gate_on_original", FIELD(c.arch.wwa_window_gate_on_original)),
        flag("ablation.drop_rb", FIELD(c.drop_rb)),
        flag("ablation.drop_wwa", FIELD(c.drop_wwa)),
        number("train.lambda", FIELD(c.lambda)),
        number("train.lr", FIELD(c.adam.lr)),
        number("train.beta1", FIELD(c.adam.beta1)),
        number("train.beta2", FIELD(c.adam.beta2)),
        number("train.eps", FIELD(c.adam.eps)),
        count("train.iterations", FIELD(c.iterations)),
        count("train.checkpoint_every", FIELD(c.checkpoint_every)),
        count("seed", FIELD(c.seed)),
        {"precision",
         [](RunConfig& c, const std::string& v) {
             const auto t = trim(v);
             if (t != "single" && t != "double") bad("precision (single|double)", v);
             c.double_precision = t == "double";
         },
         [](const RunConfig& c) { return std::string(c.double_precision ? "double" : "single"); }},
        {"warp.border",
         [](RunConfig& c, const std::string& v) {
             const auto t = trim(v);
             if (t != "clamp" && t != "zero") bad("warp.border (clamp|zero)", v);
             c.border = t == "zero" ? Border::Zero : Border::Clamp;
         },
         [](const RunConfig& c) { return std::string(c.border == Border::Zero ? "zero" : "clamp"); }},
        text("paths.data", FIELD(c.data_dir)),
        text("paths.checkpoint", FIELD(c.checkpoint)),
        text("paths.report", FIELD(c.report)),
        count("synth.pairs", FIELD(c.pairs)),
        dims("synth.dims", FIELD(c.phantom.dims)),
        spacing("synth.spacing", FIELD(c.phantom.spacing)),
        count("synth.organs", FIELD(c.phantom.organs)),
        number("synth.radius_min", FIELD(c.phantom.radius_min)),
        number("synth.radius_max", FIELD(c.phantom.radius_max)),
        number("synth.edge_softness", FIELD(c.phantom.edge_softness)),
        number("synth.intensity_min", FIELD(c.phantom.intensity_min)),
        number("synth.intensity_max", FIELD(c.phantom.intensity_max)),
        number("synth.background", FIELD(c.phantom.background)),
        number("synth.texture", FIELD(c.phantom.texture)),
        count("synth.texture_spacing", FIELD(c.phantom.texture_spacing)),
        number("synth.amplitude", FIELD(c.phantom.amplitude)),
        count("synth.control_spacing", FIELD(c.phantom.control_spacing)),
        number("synth.coherence", FIELD(c.phantom.coherence)),
    };
    return table;
}

#undef FIELD

const Key& find(const std::string& name) {
    for (const auto& k : keys()) {
        if (k.name == name) return k;
    }
    throw ValidationError("unknown config key '" + name + "'");
}

}  // namespace

Dims3 parse_dims(const std::string& text) {
    const auto parts = split(text, 'x');
    if (parts.size() != 3) bad("dims (expected DxHxW)", text);
    Dims3 d{};
    for (int i = 0; i < 3; ++i) {
        d[i] = parse_u64(parts[i]);
        if (d[i] == 0) bad("dims (zero extent)", text);
    }
    return d;
}

std::string format_dims(const Dims3& d) {
    return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]);
}

std::vector<std::size_t> parse_list(const std::string& text) {
    std::vector<std::size_t> out;
    for (const auto& p : split(text, ',')) out.push_back(parse_u64(p));
    if (out.empty()) bad("list", text);
    return out;
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& k : keys()) n.push_back(k.name);
        return n;
    }();
    return names;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
    find(trim(key)).set(cfg, value);
}

std::string config_value(const RunConfig& cfg, const std::string& key) { return find(key).get(cfg); }

void parse_config(RunConfig& cfg, const std::string& text, const std::string& source) {
    std::istringstream is(text);
    std::string line;
    for (std::size_t n = 1; std::getline(is, line); ++n) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        try {
            if (eq == std::string::npos) throw ValidationError("expected 'key = value'");
            apply_setting(cfg, line.substr(0, eq), line.substr(eq + 1));
        } catch (const ValidationError& e) {
            throw ValidationError(source + ":" + std::to_string(n) + ": " + e.what());
        }
    }
}

void load_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    parse_config(cfg, ss.str(), path);
}

std::string config_text(const RunConfig& cfg, const std::string& prefix) {
    std::string out;
    for (const auto& k : keys()) out += prefix + k.name + " = " + k.get(cfg) + "\n";
    return out;
}

ArchConfig effective_arch(const RunConfig& cfg, const Dims3& input_dims) {
    if (cfg.input_dims_set && cfg.arch.input_dims != input_dims) {
        throw ValidationError("data dims " + format_dims(input_dims) + " differ from arch.input_dims " +
                              format_dims(cfg.arch.input_dims));
    }
    auto arch = ablation_config(cfg.arch, cfg.drop_rb, cfg.drop_wwa);
    arch.input_dims = input_dims;
    return arch;
}

TrainOptions train_options(const RunConfig& cfg) {
    TrainOptions o;
    o.lambda = cfg.lambda;
    o.adam = cfg.adam;
    o.iterations = cfg.iterations;
    o.seed = cfg.seed;
    o.checkpoint_every = cfg.checkpoint_every;
    o.checkpoint_path = cfg.checkpoint;
    o.border = cfg.border;
    o.double_precision = cfg.double_precision;
    return o;
}

}  // namespace morphwin
