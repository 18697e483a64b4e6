#include "ctfg/cli.hpp"

#include <climits>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>

#include "ctfg/checkpoint.hpp"

namespace fs = std::filesystem;

namespace ctfg {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    if (trim(s).empty()) return out;
    std::string cur;
    for (char ch : s) {
        if (ch == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(trim(cur));
    return out;
}

std::string fmtd(double v) {
    char b[40];
    std::snprintf(b, sizeof b, "%.17g", v);
    return b;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& v, const char* want) {
    throw ConfigError("config key '" + key + "': cannot parse '" + v + "' as " + want);
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (...) {
    }
    bad_value(key, v, "a number");
}

long to_long(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        long r = std::stol(v, &used);
        if (used == v.size()) return r;
    } catch (...) {
    }
    bad_value(key, v, "an integer");
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        unsigned long long r = std::stoull(v, &used);
        if (used == v.size() && v[0] != '-') return r;
    } catch (...) {
    }
    bad_value(key, v, "an unsigned integer");
}

int to_int(const std::string& key, const std::string& v) {
    long r = to_long(key, v);
    if (r < INT_MIN || r > INT_MAX) bad_value(key, v, "an int");
    return int(r);
}

Optimizer to_opt(const std::string& key, const std::string& v) {
    if (v == "grpo") return Optimizer::grpo;
    if (v == "ppo") return Optimizer::ppo;
    throw ConfigError("config key '" + key + "': unknown optimizer '" + v +
                      "' (expected grpo or ppo)");
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& key, const std::string& v, F one) {
    std::vector<T> out;
    for (const std::string& e : split_list(v)) out.push_back(one(key, e));
    return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F one) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + one(xs[i]);
    return out;
}

std::string join_d(const std::vector<double>& xs) {
    return join(xs, [](double x) { return fmtd(x); });
}

// Single source of truth for the config surface: one setter/getter pair per
// key, so manifests round-trip by construction.
struct KeySpec {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

const std::map<std::string, KeySpec>& key_table() {
    static const std::map<std::string, KeySpec> t = [] {
        std::map<std::string, KeySpec> m;
        auto str = [&](const char* k, std::string RunConfig::*f) {
            m[k] = {[f](RunConfig& c, const std::string& v) { c.*f = v; },
                    [f](const RunConfig& c) { return c.*f; }};
        };
        auto num = [&](const char* k, auto accessor) {
            m[k] = {[k, accessor](RunConfig& c, const std::string& v) {
                        accessor(c) = decltype(accessor(c) + 0)(to_double(k, v));
                    },
                    [accessor](const RunConfig& c) {
                        return fmtd(double(accessor(const_cast<RunConfig&>(c))));
                    }};
        };
        auto integer = [&](const char* k, auto accessor) {
            m[k] = {[k, accessor](RunConfig& c, const std::string& v) {
                        accessor(c) = decltype(accessor(c) + 0)(to_long(k, v));
                    },
                    [accessor](const RunConfig& c) {
                        return std::to_string(accessor(const_cast<RunConfig&>(c)));
                    }};
        };

        str("command", &RunConfig::command);
        str("dataset", &RunConfig::dataset);
        str("schema", &RunConfig::schema);
        str("name", &RunConfig::name);
        str("heldout", &RunConfig::heldout);
        str("out", &RunConfig::out);
        str("eval.checkpoint", &RunConfig::eval_checkpoint);
        m["optimizer"] = {
            [](RunConfig& c, const std::string& v) { c.optimizer = to_opt("optimizer", v); },
            [](const RunConfig& c) { return optimizer_name(c.optimizer); }};
        integer("seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; });
        integer("jobs", [](RunConfig& c) -> int& { return c.jobs; });
        integer("checkpoint.interval",
                [](RunConfig& c) -> long& { return c.checkpoint_interval; });
        integer("synth.seed", [](RunConfig& c) -> std::uint64_t& { return c.synth_seed; });
        num("data.overlap", [](RunConfig& c) -> double& { return c.data_overlap; });
        num("l2", [](RunConfig& c) -> double& { return c.transfer.l2; });
        integer("probe.interval", [](RunConfig& c) -> int& { return c.transfer.probe_interval; });
        integer("refresh.every", [](RunConfig& c) -> long& { return c.transfer.refresh_every; });

        integer("policy.sensor_dim",
                [](RunConfig& c) -> int& { return c.transfer.policy.sensor_dim; });
        integer("policy.window_len",
                [](RunConfig& c) -> int& { return c.transfer.policy.window_len; });
        integer("policy.token_dim",
                [](RunConfig& c) -> int& { return c.transfer.policy.token_dim; });
        integer("policy.seq_len", [](RunConfig& c) -> int& { return c.transfer.policy.seq_len; });
        num("policy.log_sigma_lo",
            [](RunConfig& c) -> double& { return c.transfer.policy.log_sigma_lo; });
        num("policy.log_sigma_hi",
            [](RunConfig& c) -> double& { return c.transfer.policy.log_sigma_hi; });
        integer("enc.d_model", [](RunConfig& c) -> int& { return c.transfer.policy.enc.d_model; });
        integer("enc.heads", [](RunConfig& c) -> int& { return c.transfer.policy.enc.heads; });
        integer("enc.layers", [](RunConfig& c) -> int& { return c.transfer.policy.enc.layers; });
        integer("enc.ff", [](RunConfig& c) -> int& { return c.transfer.policy.enc.ff; });

        integer("grpo.group_size",
                [](RunConfig& c) -> std::size_t& { return c.transfer.grpo.group; });
        num("grpo.eps_clip", [](RunConfig& c) -> double& { return c.transfer.grpo.eps_clip; });
        num("grpo.beta_kl", [](RunConfig& c) -> double& { return c.transfer.grpo.beta_kl; });
        num("grpo.eps_stab", [](RunConfig& c) -> double& { return c.transfer.grpo.eps_stab; });
        integer("grpo.tokens",
                [](RunConfig& c) -> std::size_t& { return c.transfer.grpo.tokens; });
        integer("grpo.epochs",
                [](RunConfig& c) -> std::size_t& { return c.transfer.grpo.epochs; });

        num("gae.gamma", [](RunConfig& c) -> double& { return c.transfer.gae.gamma; });
        num("gae.lambda", [](RunConfig& c) -> double& { return c.transfer.gae.lambda; });

        num("reward.w_cls", [](RunConfig& c) -> double& { return c.transfer.weights.w_cls; });
        num("reward.w_inv", [](RunConfig& c) -> double& { return c.transfer.weights.w_inv; });
        num("reward.w_tmp", [](RunConfig& c) -> double& { return c.transfer.weights.w_tmp; });

        integer("batch.per_cell", [](RunConfig& c) -> int& { return c.transfer.batch.per_cell; });

        num("adam.lr", [](RunConfig& c) -> double& { return c.transfer.policy_adam.lr; });
        num("adam.beta1", [](RunConfig& c) -> double& { return c.transfer.policy_adam.beta1; });
        num("adam.beta2", [](RunConfig& c) -> double& { return c.transfer.policy_adam.beta2; });
        num("adam.eps", [](RunConfig& c) -> double& { return c.transfer.policy_adam.eps; });
        num("proj.lr", [](RunConfig& c) -> double& { return c.transfer.proj_adam.lr; });
        num("critic.lr", [](RunConfig& c) -> double& { return c.transfer.critic_adam.lr; });

        integer("synth.users", [](RunConfig& c) -> int& { return c.synth.users; });
        integer("synth.classes", [](RunConfig& c) -> int& { return c.synth.classes; });
        integer("synth.channels", [](RunConfig& c) -> int& { return c.synth.channels; });
        num("synth.rate", [](RunConfig& c) -> double& { return c.synth.sample_rate; });
        m["synth.freqs"] = {[](RunConfig& c, const std::string& v) {
                                c.synth.base_freq =
                                    to_list<double>("synth.freqs", v, to_double);
                            },
                            [](const RunConfig& c) { return join_d(c.synth.base_freq); }};
        num("synth.amp_lo", [](RunConfig& c) -> double& { return c.synth.amp_lo; });
        num("synth.amp_hi", [](RunConfig& c) -> double& { return c.synth.amp_hi; });
        num("synth.phase_max", [](RunConfig& c) -> double& { return c.synth.phase_max; });
        num("synth.noise", [](RunConfig& c) -> double& { return c.synth.noise; });
        integer("synth.windows_per_cell",
                [](RunConfig& c) -> int& { return c.synth.windows_per_cell; });
        integer("synth.window_len",
                [](RunConfig& c) -> std::size_t& { return c.synth.window_len; });
        num("synth.overlap", [](RunConfig& c) -> double& { return c.synth.overlap; });

        m["sweep.tokens"] = {[](RunConfig& c, const std::string& v) {
                                 c.sweep_grid = to_list<int>("sweep.tokens", v, to_int);
                             },
                             [](const RunConfig& c) {
                                 return join(c.sweep_grid, [](int x) {
                                     return std::to_string(x);
                                 });
                             }};
        m["sweep.optimizers"] = {
            [](RunConfig& c, const std::string& v) {
                c.sweep_optimizers = to_list<Optimizer>("sweep.optimizers", v, to_opt);
            },
            [](const RunConfig& c) {
                return join(c.sweep_optimizers,
                            [](Optimizer o) { return optimizer_name(o); });
            }};
        auto u64_list = [&](const char* k, std::vector<std::uint64_t> RunConfig::*f) {
            m[k] = {[k, f](RunConfig& c, const std::string& v) {
                        c.*f = to_list<std::uint64_t>(k, v, to_u64);
                    },
                    [f](const RunConfig& c) {
                        return join(c.*f, [](std::uint64_t x) { return std::to_string(x); });
                    }};
        };
        auto str_list = [&](const char* k, std::vector<std::string> RunConfig::*f) {
            m[k] = {[f](RunConfig& c, const std::string& v) { c.*f = split_list(v); },
                    [f](const RunConfig& c) {
                        return join(c.*f, [](const std::string& x) { return x; });
                    }};
        };
        u64_list("sweep.seeds", &RunConfig::sweep_seeds);
        str_list("sweep.heldouts", &RunConfig::sweep_heldouts);
        u64_list("compare.seeds", &RunConfig::compare_seeds);
        str_list("compare.heldouts", &RunConfig::compare_heldouts);
        return m;
    }();
    return t;
}

void validate(const RunConfig& c) {
    const RewardWeights& w = c.transfer.weights;
    if (w.w_cls < 0 || w.w_inv < 0 || w.w_tmp < 0)
        throw ConfigError("reward weights must be non-negative");
    if (w.w_cls + w.w_inv + w.w_tmp <= 0.0)
        throw ConfigError("at least one reward weight must be positive");
    if (c.transfer.grpo.tokens != std::size_t(c.transfer.policy.seq_len))
        throw ConfigError("grpo.tokens (" + std::to_string(c.transfer.grpo.tokens) +
                          ") must equal policy.seq_len (" +
                          std::to_string(c.transfer.policy.seq_len) + ")");
    if (c.dataset == "synthetic") {
        if (c.synth.channels != c.transfer.policy.sensor_dim)
            throw ConfigError("synth.channels must equal policy.sensor_dim");
        if (c.synth.window_len != std::size_t(c.transfer.policy.window_len))
            throw ConfigError("synth.window_len must equal policy.window_len");
    }
    if (c.jobs < 0) throw ConfigError("jobs must be non-negative");
    if (c.checkpoint_interval < 0) throw ConfigError("checkpoint.interval must be non-negative");
    if (c.transfer.probe_interval < 0) throw ConfigError("probe.interval must be non-negative");
    if (c.transfer.refresh_every < 0) throw ConfigError("refresh.every must be non-negative");
    if (c.data_overlap < 0.0 || c.data_overlap >= 1.0)
        throw ConfigError("data.overlap must lie in [0, 1)");
    if (c.transfer.l2 < 0.0) throw ConfigError("l2 must be non-negative");
    if (c.transfer.grpo.group < 2) throw ConfigError("grpo.group_size must be at least 2");
    if (c.transfer.grpo.epochs < 1) throw ConfigError("grpo.epochs must be positive");
    if (c.transfer.batch.per_cell < 1) throw ConfigError("batch.per_cell must be positive");
}

std::string default_out() {
    const char* env = std::getenv("CTFG_OUT");
    return env && *env ? env : "runs";
}

std::string stem_of(const std::string& path) {
    std::string s = fs::path(path).stem().string();
    return s.empty() ? "dataset" : s;
}

// ---- artifact helpers ------------------------------------------------------

struct Dataset {
    std::vector<SensorWindow> windows;
    SplitPlan plan;
};

Dataset load_dataset(const RunConfig& cfg) {
    Dataset ds;
    if (cfg.dataset == "synthetic") {
        Rng rng(cfg.synth_seed);
        ds.windows = synthetic_windows(cfg.synth, rng);
        ds.plan = synthetic_plan(cfg.synth);
        return ds;
    }
    if (!fs::exists(cfg.dataset))
        throw ConfigError("dataset file not found: " + cfg.dataset);
    if (cfg.schema.empty())
        throw ConfigError("schema= is required for file datasets");
    if (!fs::exists(cfg.schema))
        throw ConfigError("schema file not found: " + cfg.schema);
    SchemaDescriptor schema = load_schema(cfg.schema);
    if (schema.channels.size() != std::size_t(cfg.transfer.policy.sensor_dim))
        throw ConfigError("schema declares " + std::to_string(schema.channels.size()) +
                          " channels but policy.sensor_dim is " +
                          std::to_string(cfg.transfer.policy.sensor_dim));
    for (const Recording& rec : load_recordings(cfg.dataset, schema)) {
        std::vector<SensorWindow> w =
            make_windows(rec, std::size_t(cfg.transfer.policy.window_len), cfg.data_overlap);
        ds.windows.insert(ds.windows.end(), std::make_move_iterator(w.begin()),
                          std::make_move_iterator(w.end()));
    }
    ds.plan = schema.plan;
    return ds;
}

std::string resolve_heldout(const RunConfig& cfg, const SplitPlan& plan) {
    if (!cfg.heldout.empty()) return cfg.heldout;
    if (!plan.heldout.empty()) return plan.heldout;
    throw ConfigError("heldout group required (set heldout= or --holdout)");
}

fs::path ensure_outdir(const RunConfig& cfg) {
    fs::path dir(cfg.out.empty() ? default_out() : cfg.out);
    fs::create_directories(dir);
    return dir;
}

void apply_jobs(const RunConfig& cfg) {
#ifdef _OPENMP
    if (cfg.jobs > 0) omp_set_num_threads(cfg.jobs);
#endif
}

std::string run_base(const RunConfig& cfg, Optimizer opt, int tokens,
                     const std::string& heldout, std::uint64_t seed) {
    return cfg.name + "_" + optimizer_name(opt) + "_" + std::to_string(tokens) + "_" + heldout +
           "_" + std::to_string(seed);
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream f(p);
    if (!f) fail("cannot write " + p.string());
    return f;
}

void write_manifest(const fs::path& path, const RunConfig& cfg) {
    std::ofstream f = open_out(path);
    for (const auto& [k, spec] : key_table()) f << k << "=" << spec.get(cfg) << "\n";
    if (!f) fail("write failed for " + path.string());
}

std::map<std::string, Array> checkpoint_map(const ParamStore& policy, const ParamStore& proj,
                                            const ParamStore* critic) {
    std::map<std::string, Array> m = policy.all();
    for (const auto& [k, v] : proj.all()) m.emplace(k, v);
    if (critic)
        for (const auto& [k, v] : critic->all()) m.emplace(k, v);
    return m;
}

void write_metrics_csv(const fs::path& p, const std::vector<EpochMetrics>& ms) {
    std::ofstream f = open_out(p);
    f << "epoch,mean_reward,r_cls,r_inv,r_tmp,loss,mean_kl,grad_norm\n";
    for (std::size_t e = 0; e < ms.size(); ++e)
        f << e + 1 << "," << fmtd(ms[e].mean_reward) << "," << fmtd(ms[e].r_cls) << ","
          << fmtd(ms[e].r_inv) << "," << fmtd(ms[e].r_tmp) << "," << fmtd(ms[e].loss) << ","
          << fmtd(ms[e].mean_kl) << "," << fmtd(ms[e].grad_norm) << "\n";
    if (!f) fail("write failed for " + p.string());
}

void write_probes_csv(const fs::path& p, const std::vector<std::pair<int, double>>& trace) {
    std::ofstream f = open_out(p);
    f << "epoch,accuracy\n";
    for (const auto& [e, acc] : trace) f << e << "," << fmtd(acc) << "\n";
    if (!f) fail("write failed for " + p.string());
}

void write_report_txt(const fs::path& p, const RunConfig& cfg, const TransferRecord& rec) {
    std::ofstream f = open_out(p);
    f << "dataset " << cfg.name << "\noptimizer " << optimizer_name(rec.optimizer)
      << "\nheldout " << rec.heldout << "\nseed " << rec.seed << "\ntokens "
      << cfg.transfer.grpo.tokens << "\nepochs " << rec.epoch_metrics.size()
      << "\naccuracy " << fmtd(rec.accuracy) << "\n\nclass precision recall f1\n";
    for (std::size_t c = 0; c < rec.eval.classes.size(); ++c)
        f << rec.eval.classes[c] << " " << fmtd(rec.eval.precision[c]) << " "
          << fmtd(rec.eval.recall[c]) << " " << fmtd(rec.eval.f1[c]) << "\n";
    if (!f) fail("write failed for " + p.string());
}

double population_std(const std::vector<double>& xs, double mean) {
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    return xs.empty() ? 0.0 : std::sqrt(var / double(xs.size()));
}

}  // namespace

ConfigMap read_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    ConfigMap kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

RunConfig parse_config(const ConfigMap& kv) {
    RunConfig c;
    const auto& table = key_table();
    for (const auto& [k, v] : kv) {
        auto it = table.find(k);
        if (it == table.end()) throw ConfigError("unknown config key '" + k + "'");
        it->second.set(c, v);
    }
    if (c.dataset != "synthetic" && kv.find("name") == kv.end()) c.name = stem_of(c.dataset);
    if (c.out.empty()) c.out = default_out();
    validate(c);
    return c;
}

ConfigMap config_to_map(const RunConfig& c) {
    ConfigMap m;
    for (const auto& [k, spec] : key_table()) m[k] = spec.get(c);
    return m;
}

int cmd_train(const RunConfig& cfg) {
    apply_jobs(cfg);
    Dataset ds = load_dataset(cfg);
    std::string held = resolve_heldout(cfg, ds.plan);
    fs::path dir = ensure_outdir(cfg);
    std::string base =
        run_base(cfg, cfg.optimizer, int(cfg.transfer.grpo.tokens), held, cfg.seed);

    TransferConfig tc = cfg.transfer;
    if (cfg.checkpoint_interval > 0) {
        long every = cfg.checkpoint_interval;
        Optimizer opt = cfg.optimizer;
        fs::path d = dir;
        std::string b = base;
        tc.epoch_hook = [every, opt, d, b](int e, const Policy& p, const TmpProjection& pr,
                                           const ValueNet& vn) {
            if (e % every != 0) return;
            save_arrays((d / (b + "_e" + std::to_string(e) + ".ckpt")).string(),
                        checkpoint_map(p.params(), pr.params,
                                       opt == Optimizer::ppo ? &vn.params() : nullptr));
        };
    }

    TransferArtifacts art;
    TransferRecord rec =
        run_transfer(ds.windows, ds.plan, held, cfg.optimizer, tc, cfg.seed, &art);

    write_metrics_csv(dir / (base + ".csv"), rec.epoch_metrics);
    {
        std::ofstream f = open_out(dir / (base + "_timing.csv"));
        f << "epoch,wall_ms\n";
        for (std::size_t e = 0; e < art.epoch_ms.size(); ++e)
            f << e + 1 << "," << fmtd(art.epoch_ms[e]) << "\n";
    }
    {
        std::ofstream f = open_out(dir / (base + "_rewards.csv"));
        f << "epoch,g,r_cls,r_inv,r_tmp,total\n";
        for (std::size_t e = 0; e < art.epoch_breakdowns.size(); ++e)
            for (std::size_t g = 0; g < art.epoch_breakdowns[e].size(); ++g) {
                const RewardBreakdown& rb = art.epoch_breakdowns[e][g];
                f << e + 1 << "," << g << "," << fmtd(rb.r_cls) << "," << fmtd(rb.r_inv) << ","
                  << fmtd(rb.r_tmp) << "," << fmtd(rb.total) << "\n";
            }
    }
    write_probes_csv(dir / (base + "_probes.csv"), rec.trace);
    save_arrays((dir / (base + ".ckpt")).string(),
                checkpoint_map(art.policy_params, art.proj_params,
                               cfg.optimizer == Optimizer::ppo ? &art.critic_params : nullptr));
    write_report_txt(dir / (base + "_report.txt"), cfg, rec);
    write_manifest(dir / (base + "_manifest.cfg"), cfg);

    std::cout << "train " << base << ": held-out accuracy " << fmtd(rec.accuracy) << "\n";
    return 0;
}

int cmd_sweep(const RunConfig& cfg) {
    apply_jobs(cfg);
    if (cfg.sweep_grid.empty()) throw ConfigError("sweep.tokens must not be empty");
    if (cfg.sweep_optimizers.empty()) throw ConfigError("sweep.optimizers must not be empty");
    Dataset ds = load_dataset(cfg);
    std::vector<std::string> heldouts =
        cfg.sweep_heldouts.empty() ? std::vector<std::string>{resolve_heldout(cfg, ds.plan)}
                                   : cfg.sweep_heldouts;
    std::vector<std::uint64_t> seeds =
        cfg.sweep_seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : cfg.sweep_seeds;

    std::vector<ExperimentReport> reps = sweep_tokens(ds.windows, ds.plan, cfg.sweep_grid,
                                                      cfg.sweep_optimizers, heldouts, seeds,
                                                      cfg.transfer);

    fs::path dir = ensure_outdir(cfg);
    {
        std::ofstream f = open_out(dir / (cfg.name + "_sweep_report.csv"));
        f << "tokens,optimizer,mean_acc,std_acc,n\n";
        for (const ExperimentReport& r : reps)
            f << r.tokens << "," << optimizer_name(r.optimizer) << "," << fmtd(r.mean_acc) << ","
              << fmtd(r.std_acc) << "," << r.records.size() << "\n";
    }
    {
        std::ofstream f = open_out(dir / (cfg.name + "_sweep_records.csv"));
        f << "tokens,optimizer,heldout,seed,accuracy\n";
        for (const ExperimentReport& r : reps)
            for (const TransferRecord& rec : r.records)
                f << r.tokens << "," << optimizer_name(r.optimizer) << "," << rec.heldout << ","
                  << rec.seed << "," << fmtd(rec.accuracy) << "\n";
    }
    write_manifest(dir / (cfg.name + "_sweep_manifest.cfg"), cfg);

    for (const ExperimentReport& r : reps)
        std::cout << "sweep s=" << r.tokens << " " << optimizer_name(r.optimizer) << ": mean "
                  << fmtd(r.mean_acc) << " std " << fmtd(r.std_acc) << "\n";
    return 0;
}

int cmd_compare(const RunConfig& cfg) {
    apply_jobs(cfg);
    Dataset ds = load_dataset(cfg);
    std::vector<std::string> heldouts =
        cfg.compare_heldouts.empty() ? std::vector<std::string>{resolve_heldout(cfg, ds.plan)}
                                     : cfg.compare_heldouts;
    std::vector<std::uint64_t> seeds =
        cfg.compare_seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : cfg.compare_seeds;

    fs::path dir = ensure_outdir(cfg);
    int tokens = int(cfg.transfer.grpo.tokens);
    std::map<Optimizer, std::vector<double>> finals;
    std::map<Optimizer, std::vector<std::uint64_t>> used_seeds;
    for (const std::string& held : heldouts)
        for (std::uint64_t seed : seeds)
            for (Optimizer opt : {Optimizer::grpo, Optimizer::ppo}) {
                TransferRecord rec =
                    run_transfer(ds.windows, ds.plan, held, opt, cfg.transfer, seed);
                finals[opt].push_back(rec.accuracy);
                used_seeds[opt].push_back(seed);

                std::string base = run_base(cfg, opt, tokens, held, seed);
                std::ofstream f = open_out(dir / (base + ".csv"));
                f << "optimizer,epoch,mean_reward,r_cls,r_inv,r_tmp,loss,mean_kl,grad_norm,"
                     "probe_acc\n";
                std::map<int, double> probes(rec.trace.begin(), rec.trace.end());
                for (std::size_t e = 0; e < rec.epoch_metrics.size(); ++e) {
                    const EpochMetrics& em = rec.epoch_metrics[e];
                    f << optimizer_name(opt) << "," << e + 1 << "," << fmtd(em.mean_reward)
                      << "," << fmtd(em.r_cls) << "," << fmtd(em.r_inv) << ","
                      << fmtd(em.r_tmp) << "," << fmtd(em.loss) << "," << fmtd(em.mean_kl)
                      << "," << fmtd(em.grad_norm) << ",";
                    auto it = probes.find(int(e) + 1);
                    if (it != probes.end()) f << fmtd(it->second);
                    f << "\n";
                }
            }

    // both optimizers must have seen exactly the same (heldout, seed) pairs
    if (used_seeds[Optimizer::grpo] != used_seeds[Optimizer::ppo])
        fail("compare: optimizer runs are not seed-paired");

    {
        std::ofstream f = open_out(dir / (cfg.name + "_compare_summary.csv"));
        f << "optimizer,mean_acc,std_acc,n\n";
        for (Optimizer opt : {Optimizer::grpo, Optimizer::ppo}) {
            const std::vector<double>& xs = finals[opt];
            double mean = 0.0;
            for (double x : xs) mean += x;
            mean /= double(xs.size());
            f << optimizer_name(opt) << "," << fmtd(mean) << ","
              << fmtd(population_std(xs, mean)) << "," << xs.size() << "\n";
            std::cout << "compare " << optimizer_name(opt) << ": mean " << fmtd(mean) << " std "
                      << fmtd(population_std(xs, mean)) << "\n";
        }
    }
    write_manifest(dir / (cfg.name + "_compare_manifest.cfg"), cfg);
    return 0;
}

int cmd_synth(const RunConfig& cfg) {
    Rng rng(cfg.synth_seed);
    std::vector<Recording> recs = make_synthetic(cfg.synth, rng);
    fs::path dir = ensure_outdir(cfg);
    fs::path path = dir / (cfg.name + ".csv");
    save_synthetic_csv(path.string(), recs, cfg.synth);
    write_manifest(dir / (cfg.name + "_synth_manifest.cfg"), cfg);
    std::size_t rows = 0;
    for (const Recording& r : recs) rows += r.samples.rows();
    std::cout << "synth " << path.string() << ": " << recs.size() << " recordings, " << rows
              << " rows\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    apply_jobs(cfg);
    if (cfg.eval_checkpoint.empty())
        throw ConfigError("eval.checkpoint= (or --checkpoint) is required");
    if (!fs::exists(cfg.eval_checkpoint))
        throw ConfigError("checkpoint file not found: " + cfg.eval_checkpoint);

    Dataset ds = load_dataset(cfg);
    std::string held = resolve_heldout(cfg, ds.plan);

    Policy policy(cfg.transfer.policy);
    Rng init_rng(0);
    policy.init_params(init_rng);
    std::map<std::string, Array> loaded = load_arrays(cfg.eval_checkpoint);
    std::size_t hit = 0;
    for (auto& [k, v] : loaded) {
        if (!policy.params().has(k)) continue;  // projection/critic tensors ride along
        Array& dst = policy.params().get(k);
        if (dst.shape() != v.shape()) fail("checkpoint tensor '" + k + "' has the wrong shape");
        dst = std::move(v);
        ++hit;
    }
    if (hit != policy.params().count()) fail("checkpoint is missing policy tensors");

    std::vector<SensorWindow> windows = ds.windows;
    zscore_per_user(windows);
    SplitPlan plan = ds.plan;
    plan.heldout = held;
    auto [train, heldw] = split_logo(windows, plan);
    std::vector<int> train_labels, held_labels;
    for (const SensorWindow& w : train) train_labels.push_back(w.y);
    for (const SensorWindow& w : heldw) held_labels.push_back(w.y);

    int steps = int(cfg.transfer.grpo.tokens);
    LogRegModel model =
        fit_logreg(extract_features(policy, train, steps), train_labels, cfg.transfer.l2);
    EvalResult ev = evaluate(model, extract_features(policy, heldw, steps), held_labels);

    fs::path dir = ensure_outdir(cfg);
    std::string base =
        run_base(cfg, cfg.optimizer, steps, held, cfg.seed) + "_eval";
    {
        std::ofstream f = open_out(dir / (base + ".csv"));
        f << "class,precision,recall,f1\n";
        for (std::size_t c = 0; c < ev.classes.size(); ++c)
            f << ev.classes[c] << "," << fmtd(ev.precision[c]) << "," << fmtd(ev.recall[c])
              << "," << fmtd(ev.f1[c]) << "\n";
    }
    {
        std::ofstream f = open_out(dir / (base + ".txt"));
        f << "checkpoint " << cfg.eval_checkpoint << "\nheldout " << held << "\naccuracy "
          << fmtd(ev.accuracy) << "\n";
    }
    write_manifest(dir / (base + "_manifest.cfg"), cfg);
    std::cout << "eval " << held << ": accuracy " << fmtd(ev.accuracy) << "\n";
    return 0;
}

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"feature-token policy training and evaluation toolkit"};
    app.require_subcommand(1);

    struct Flags {
        std::string config;
        std::vector<std::string> sets;
        std::map<std::string, std::string> named;  // config key -> value
    } fl;

    auto add_common = [&fl](CLI::App* sub) {
        sub->add_option("--config", fl.config, "config file (key=value lines)")
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
        sub->add_option("--set", fl.sets, "override one config key (key=value, repeatable)");
        auto key_opt = [sub, &fl](const char* flag, const char* key, const char* help) {
            sub->add_option_function<std::string>(
                   flag, [&fl, key](const std::string& v) { fl.named[key] = v; }, help)
                ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
        };
        key_opt("--dataset", "dataset", "CSV path or 'synthetic'");
        key_opt("--schema", "schema", "schema descriptor path");
        key_opt("--holdout", "heldout", "held-out group name");
        key_opt("--seed", "seed", "training seed");
        key_opt("--out", "out", "output directory");
        key_opt("--jobs", "jobs", "worker thread cap");
        key_opt("--epochs", "grpo.epochs", "training epochs");
        key_opt("--name", "name", "dataset tag used in artifact names");
        return key_opt;
    };

    CLI::App* train = app.add_subcommand("train", "one transfer run with artifacts");
    {
        auto key_opt = add_common(train);
        key_opt("--optimizer", "optimizer", "grpo or ppo");
        train->add_option_function<std::string>(
                 "--tokens",
                 [&fl](const std::string& v) {
                     fl.named["grpo.tokens"] = v;
                     fl.named["policy.seq_len"] = v;
                 },
                 "feature tokens per sequence (sets grpo.tokens and policy.seq_len)")
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
    CLI::App* sweep = app.add_subcommand("sweep", "token-count sweep over optimizers");
    {
        auto key_opt = add_common(sweep);
        key_opt("--tokens", "sweep.tokens", "comma-separated token counts");
        key_opt("--optimizers", "sweep.optimizers", "comma-separated optimizer list");
        key_opt("--seeds", "sweep.seeds", "comma-separated seeds");
        key_opt("--heldouts", "sweep.heldouts", "comma-separated held-out groups");
    }
    CLI::App* compare = app.add_subcommand("compare", "seed-paired grpo vs ppo runs");
    {
        auto key_opt = add_common(compare);
        key_opt("--seeds", "compare.seeds", "comma-separated seeds");
        key_opt("--heldouts", "compare.heldouts", "comma-separated held-out groups");
    }
    CLI::App* synth = app.add_subcommand("synth", "write a synthetic dataset + schema");
    {
        auto key_opt = add_common(synth);
        key_opt("--users", "synth.users", "user count");
        key_opt("--classes", "synth.classes", "class count");
        key_opt("--noise", "synth.noise", "additive noise sigma");
        key_opt("--synth-seed", "synth.seed", "generator seed");
    }
    CLI::App* eval = app.add_subcommand("eval", "classify with a stored checkpoint");
    {
        auto key_opt = add_common(eval);
        key_opt("--checkpoint", "eval.checkpoint", "checkpoint path");
        key_opt("--optimizer", "optimizer", "tag used in artifact names");
    }

    try {
        app.parse(argc, argv);

        CLI::App* sub = app.get_subcommands().front();
        ConfigMap kv;
        if (!fl.config.empty()) kv = read_config_file(fl.config);
        for (const std::string& s : fl.sets) {
            std::size_t eq = s.find('=');
            if (eq == std::string::npos)
                throw ConfigError("--set expects key=value, got '" + s + "'");
            kv[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
        }
        for (const auto& [k, v] : fl.named) kv[k] = v;
        kv["command"] = sub->get_name();

        RunConfig cfg = parse_config(kv);
        if (sub == train) return cmd_train(cfg);
        if (sub == sweep) return cmd_sweep(cfg);
        if (sub == compare) return cmd_compare(cfg);
        if (sub == synth) return cmd_synth(cfg);
        return cmd_eval(cfg);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace ctfg
