#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "morphwin/data_io.hpp"
#include "morphwin/rfrnet.hpp"
#include "morphwin/train.hpp"

namespace morphwin {

/// Everything a command needs, resolved from defaults, an optional config
/// file and command-line overrides (in that order).
struct RunConfig {
    ArchConfig arch;  // input_dims is taken from the data unless set
    bool input_dims_set = false;
    bool drop_rb = false;
    bool drop_wwa = false;

    double lambda = 0.04;
    AdamOptions adam;
    std::size_t iterations = 200;
    std::uint64_t seed = 0;
    std::size_t checkpoint_every = 0;
    bool double_precision = false;
    Border border = Border::Clamp;

    std::string data_dir = "data";
    std::string checkpoint = "model.mwck";
    std::string report = "report";

    PhantomSpec phantom;
    std::size_t pairs = 20;
};

/// Keys accepted by apply_setting, in echo order.
const std::vector<std::string>& config_keys();

/// Sets one key from its textual value. Throws ValidationError for unknown
/// keys and malformed values.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// Current value of a key, in the syntax apply_setting accepts.
std::string config_value(const RunConfig& cfg, const std::string& key);

/// Reads `key = value` lines; `#` starts a comment, blank lines are
/// ignored. Errors carry the line number.
void load_config_file(RunConfig& cfg, const std::string& path);
void parse_config(RunConfig& cfg, const std::string& text, const std::string& source = "config");

/// Every key as `key = value`, one per line, prefixed with `prefix`.
std::string config_text(const RunConfig& cfg, const std::string& prefix = "");

/// Architecture after ablation flags, with the given input dims.
ArchConfig effective_arch(const RunConfig& cfg, const Dims3& input_dims);

TrainOptions train_options(const RunConfig& cfg);

// Value syntax shared with the CLI.
Dims3 parse_dims(const std::string& text);  // "48x32x16"
std::string format_dims(const Dims3& d);
std::vector<std::size_t> parse_list(const std::string& text);  // "2,2,4,4"

}  // namespace morphwin
