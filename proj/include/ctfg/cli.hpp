#pragma once

#include <map>
#include <stdexcept>
#include <string>

#include "ctfg/evalharness.hpp"

namespace ctfg {

// A configuration or usage problem: reported on stderr with exit code 2,
// distinct from runtime failures (exit code 1).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using ConfigMap = std::map<std::string, std::string>;

// One fully resolved run description. Every key has a default; parse_config
// rejects unknown keys and unparseable values with ConfigError.
struct RunConfig {
    std::string command = "train";      // informational, echoed in manifests
    std::string dataset = "synthetic";  // "synthetic" or a CSV path
    std::string schema;                 // descriptor path for file datasets
    std::string name = "synthetic";     // dataset tag used in artifact names
    std::string heldout;                // empty = split plan default
    Optimizer optimizer = Optimizer::grpo;
    std::uint64_t seed = 1;
    std::string out;                 // output dir; empty = $CTFG_OUT or "runs"
    int jobs = 0;                    // worker thread cap; 0 = library default
    double data_overlap = 0.5;       // window overlap for file datasets
    long checkpoint_interval = 0;    // epochs between snapshots; 0 = final only
    std::uint64_t synth_seed = 99;   // generator stream for synthetic data
    std::string eval_checkpoint;     // checkpoint consumed by cmd_eval

    TransferConfig transfer;
    SyntheticTaskSpec synth;

    std::vector<int> sweep_grid = {5, 10, 15, 20};
    std::vector<Optimizer> sweep_optimizers = {Optimizer::grpo, Optimizer::ppo};
    std::vector<std::uint64_t> sweep_seeds;     // empty = {seed}
    std::vector<std::string> sweep_heldouts;    // empty = {resolved heldout}
    std::vector<std::uint64_t> compare_seeds;   // empty = {seed}
    std::vector<std::string> compare_heldouts;  // empty = {resolved heldout}
};

// key=value lines, '#' starts a comment; a missing file raises ConfigError
// naming the path.
ConfigMap read_config_file(const std::string& path);

// Applies the overrides to the defaults and validates the result.
RunConfig parse_config(const ConfigMap& kv);

// The full resolved key set: parse_config(config_to_map(c)) reproduces c.
ConfigMap config_to_map(const RunConfig& c);

int cmd_train(const RunConfig& cfg);
int cmd_sweep(const RunConfig& cfg);
int cmd_compare(const RunConfig& cfg);
int cmd_synth(const RunConfig& cfg);
int cmd_eval(const RunConfig& cfg);

// argv entry point used by the binary; maps errors to exit codes instead of
// throwing (0 ok, 1 runtime, 2 usage/config).
int cli_main(int argc, const char* const* argv);

}  // namespace ctfg
