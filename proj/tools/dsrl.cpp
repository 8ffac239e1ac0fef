// Command-line front end: train / baseline / eval / compare. One command is
// one process; everything lands under an output directory as TOML/JSONL/CSV
// so figures come from files, not from this binary.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dsrl/config.hpp"
#include "dsrl/io.hpp"

using namespace dsrl;

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Worker-pool width: hardware, capped by DSRL_THREADS and the job count.
std::size_t pool_width(std::size_t jobs) {
    std::size_t width = std::thread::hardware_concurrency();
    if (width == 0) width = 1;
    if (const char* cap = std::getenv("DSRL_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(cap, &end, 10);
        if (end == cap || *end != '\0' || v < 1)
            throw ConfigError("DSRL_THREADS must be a positive integer");
        width = std::min<std::size_t>(width, static_cast<std::size_t>(v));
    }
    return std::max<std::size_t>(1, std::min(width, jobs));
}

void write_json(const std::string& path, const nlohmann::json& j) {
    write_text_file(path, j.dump(1) + "\n");
}

// ---- train / baseline ------------------------------------------------------

struct TrainCliArgs {
    std::string config_path;
    std::string out_override;
    std::uint64_t seed_override = 0;
    std::size_t checkpoint_override = 0;
    bool out_set = false, seed_set = false, checkpoint_set = false;
};

int run_training(const TrainCliArgs& args, RolloutMode mode) {
    const char* command = mode == RolloutMode::dsrl ? "train" : "baseline";
    const char* mode_tag = rollout_mode_name(mode);
    RunConfig cfg = load_config(args.config_path);
    if (args.seed_set) cfg.train.seed = args.seed_override;
    if (args.out_set) cfg.out_dir = args.out_override;
    if (args.checkpoint_set) cfg.checkpoint_every = args.checkpoint_override;
    validate_config(cfg);

    const std::string& out = cfg.out_dir;
    ensure_dir(out);
    write_text_file(out + "/config.toml", serialize_config(cfg));

    Clock::time_point t0 = Clock::now();
    nlohmann::json summary;
    summary["version"] = kVersion;
    summary["command"] = command;
    summary["env"] = env_kind_name(cfg.env);
    summary["episodes"] = cfg.train.episodes;
    summary["seed"] = cfg.train.seed;

    if (cfg.train.episodes == 0) {  // vacuous run: artifacts, no training
        write_text_file(out + "/metrics.jsonl", "");
        summary["episodes_completed"] = 0;
        summary["failed"] = false;
        summary["wall_time_s"] = seconds_since(t0);
        write_json(out + "/run_summary.json", summary);
        return 0;
    }

    std::vector<BarrierSpec> barriers = barriers_for(cfg.model, cfg.barrier);

    std::ofstream metrics(out + "/metrics.jsonl",
                          std::ios::binary | std::ios::trunc);
    if (!metrics) throw ConfigError("cannot write '" + out + "/metrics.jsonl'");

    Trajectory last_traj;
    EpisodeSink sink = [&](const EpisodeMetrics& m, const Trajectory& traj,
                           const TrainResult& partial) {
        metrics << metrics_line(m) << "\n";
        metrics.flush();
        last_traj = traj;
        if (cfg.checkpoint_every > 0 && m.episode % cfg.checkpoint_every == 0) {
            std::string tag = "_ep" + std::to_string(m.episode);
            save_checkpoint(out + "/checkpoint" + tag + ".json",
                            Checkpoint::from_nets(partial.nets,
                                                  env_kind_name(cfg.env), mode_tag,
                                                  partial.adversary.omega));
            write_text_file(out + "/trajectory" + tag + ".csv",
                            trajectory_to_csv(cfg.model, traj));
        }
    };

    TrainResult result =
        train(cfg.model, barriers, cfg.prior, cfg.train, mode, sink);
    metrics.close();

    // Always freeze what exists; a failed run's partial artifacts are the
    // evidence one debugs from.
    save_checkpoint(out + "/checkpoint_final.json",
                    Checkpoint::from_nets(result.nets, env_kind_name(cfg.env),
                                          mode_tag, result.adversary.omega));
    if (!last_traj.states.empty())
        write_text_file(out + "/trajectory_final.csv",
                        trajectory_to_csv(cfg.model, last_traj));

    summary["episodes_completed"] = result.metrics.size();
    summary["failed"] = result.failed;
    if (result.failed) summary["error"] = result.error;
    summary["wall_time_s"] = seconds_since(t0);
    write_json(out + "/run_summary.json", summary);

    if (result.failed) {
        std::fprintf(stderr, "numeric failure: %s\n", result.error.c_str());
        return 3;
    }
    std::printf("%s: %zu episodes -> %s\n", command, result.metrics.size(),
                out.c_str());
    return 0;
}

// ---- eval -------------------------------------------------------------------

struct EvalRow {
    std::uint64_t seed = 0;
    double ret = 0.0;
    double min_h = 0.0;
    bool goal = false;
    std::size_t violations = 0;
    int fallbacks = 0;
    std::size_t steps = 0;
    Vec omega_exec;
};

double barrier_floor(const std::vector<BarrierSpec>& barriers, const Vec& x) {
    double lo = std::numeric_limits<double>::infinity();
    for (const BarrierSpec& b : barriers) lo = std::min(lo, b.h(x));
    return lo;
}

int run_eval(const std::string& ck_path, const std::string& cfg_path,
             const std::string& noise, std::vector<std::uint64_t> seeds,
             const std::string& out_override, bool out_set,
             const std::string& omega_from, bool omega_from_set) {
    RunConfig cfg = load_config(cfg_path);
    std::string out = out_set ? out_override : cfg.out_dir + "/eval";
    if (out.empty()) throw ConfigError("--out must be nonempty");
    if (seeds.empty()) seeds.push_back(0);

    Checkpoint ck = load_checkpoint(ck_path);
    if (ck.env_name != env_kind_name(cfg.env))
        throw ConfigError("checkpoint env '" + ck.env_name +
                          "' does not match config env '" +
                          env_kind_name(cfg.env) + "'");
    if (ck.actor.input_size() != cfg.model.n ||
        ck.actor.output_size() != cfg.model.m ||
        ck.omega.size() != cfg.model.n)
        throw ConfigError(
            "checkpoint shapes do not match the configured environment (n=" +
            std::to_string(cfg.model.n) + ", m=" + std::to_string(cfg.model.m) +
            ")");

    // The filter always assembles at the checkpoint's own noise estimate (the
    // belief the policy was trained under); --noise picks what is executed.
    Vec omega_asm = ck.omega;
    Vec omega_worst = ck.omega;
    if (omega_from_set) {
        Checkpoint other = load_checkpoint(omega_from);
        if (other.omega.size() != cfg.model.n)
            throw ConfigError("--omega-from checkpoint has wrong noise dimension");
        omega_worst = other.omega;
    }

    Clock::time_point t0 = Clock::now();
    ensure_dir(out);
    write_text_file(out + "/config.toml", serialize_config(cfg));

    AgentNets nets = ck.to_nets();
    std::vector<EvalRow> rows(seeds.size());
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr first_error;

    auto worker = [&]() {
        // Per-worker barrier closures; the nets and model are shared read-only.
        std::vector<BarrierSpec> barriers = barriers_for(cfg.model, cfg.barrier);
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= seeds.size()) return;
            try {
                std::uint64_t seed = seeds[i];
                Vec omega_exec;
                if (noise == "nominal") {
                    omega_exec = cfg.prior.center();
                } else if (noise == "worst") {
                    omega_exec = omega_worst;
                } else {  // sample
                    Rng rng(seed);
                    omega_exec = cfg.prior.draw(rng);
                }
                EpisodeResult er = run_eval_episode(nets, cfg.model, barriers,
                                                    omega_exec, omega_asm);
                if (er.aborted)
                    throw NumericError("seed " + std::to_string(seed) +
                                       ": " + er.error);
                write_text_file(out + "/eval_seed" + std::to_string(seed) +
                                    ".csv",
                                trajectory_to_csv(cfg.model, er.traj));
                EvalRow row;
                row.seed = seed;
                for (double r : er.traj.rewards) row.ret += r;
                row.min_h = er.traj.h_min.empty()
                                ? barrier_floor(barriers, er.traj.states.front())
                                : *std::min_element(er.traj.h_min.begin(),
                                                    er.traj.h_min.end());
                for (double h : er.traj.h_min)
                    if (h < 0.0) ++row.violations;
                row.goal = cfg.model.goal_reached(er.traj.states.back());
                row.fallbacks = er.traj.fallback_count;
                row.steps = er.traj.length();
                row.omega_exec = omega_exec;
                rows[i] = std::move(row);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };

    std::size_t width = pool_width(seeds.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < width; ++t) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);

    nlohmann::json js;
    js["version"] = kVersion;
    js["checkpoint"] = ck_path;
    js["checkpoint_mode"] = ck.mode;
    js["env"] = env_kind_name(cfg.env);
    js["noise"] = noise;
    js["omega_assembly"] = omega_asm;
    nlohmann::json jrows = nlohmann::json::array();
    double mean_ret = 0.0;
    double worst_min_h = std::numeric_limits<double>::infinity();
    std::size_t goals = 0, violations = 0;
    long long fallbacks = 0;
    for (const EvalRow& r : rows) {
        nlohmann::json jr;
        jr["seed"] = r.seed;
        jr["return"] = r.ret;
        jr["min_h"] = r.min_h;
        jr["goal"] = r.goal;
        jr["violations"] = r.violations;
        jr["fallbacks"] = r.fallbacks;
        jr["steps"] = r.steps;
        jr["omega_executed"] = r.omega_exec;
        jrows.push_back(jr);
        mean_ret += r.ret / static_cast<double>(rows.size());
        worst_min_h = std::min(worst_min_h, r.min_h);
        goals += r.goal ? 1 : 0;
        violations += r.violations;
        fallbacks += r.fallbacks;
    }
    js["rows"] = jrows;
    js["aggregate"] = {{"mean_return", mean_ret},
                       {"min_h", worst_min_h},
                       {"goal_rate",
                        static_cast<double>(goals) /
                            static_cast<double>(rows.size())},
                       {"violations", violations},
                       {"fallbacks", fallbacks}};
    write_json(out + "/eval_summary.json", js);

    nlohmann::json summary;
    summary["version"] = kVersion;
    summary["command"] = "eval";
    summary["env"] = env_kind_name(cfg.env);
    summary["seeds"] = seeds.size();
    summary["failed"] = false;
    summary["wall_time_s"] = seconds_since(t0);
    write_json(out + "/run_summary.json", summary);

    std::printf("eval: %zu seeds, mean return %s, min h %s -> %s\n",
                seeds.size(), format_shortest(mean_ret).c_str(),
                format_shortest(worst_min_h).c_str(), out.c_str());
    return 0;
}

// ---- compare ----------------------------------------------------------------

int run_compare(const std::vector<std::string>& run_dirs,
                const std::string& out) {
    if (out.empty()) throw ConfigError("--out must be nonempty");
    std::vector<RunConfig> cfgs;
    std::vector<std::vector<EpisodeMetrics>> runs;
    for (const std::string& dir : run_dirs) {
        cfgs.push_back(load_config(dir + "/config.toml"));
        runs.push_back(parse_metrics_jsonl(read_text_file(dir + "/metrics.jsonl")));
    }
    for (std::size_t i = 1; i < cfgs.size(); ++i)
        if (cfgs[i].env != cfgs[0].env)
            throw ConfigError(std::string("runs use different environments: '") +
                              env_kind_name(cfgs[0].env) + "' vs '" +
                              env_kind_name(cfgs[i].env) + "'");

    std::size_t aligned = runs.front().size();
    for (const auto& r : runs) aligned = std::min(aligned, r.size());

    ensure_dir(out);
    write_text_file(out + "/config.toml", serialize_config(cfgs.front()));

    // Per-episode mean and spread (max - min) across runs, plus each run's
    // own curve so the bands can be reconstructed by any plotting tool.
    std::string csv = "episode,mean_return,spread";
    for (std::size_t r = 0; r < runs.size(); ++r)
        csv += ",run" + std::to_string(r + 1);
    csv += "\n";
    for (std::size_t k = 0; k < aligned; ++k) {
        double lo = runs[0][k].episode_return, hi = lo, sum = 0.0;
        for (const auto& r : runs) {
            double v = r[k].episode_return;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            sum += v;
        }
        csv += std::to_string(k + 1);
        csv += "," + format_shortest(sum / static_cast<double>(runs.size()));
        csv += "," + format_shortest(hi - lo);
        for (const auto& r : runs) csv += "," + format_shortest(r[k].episode_return);
        csv += "\n";
    }
    write_text_file(out + "/compare_returns.csv", csv);

    nlohmann::json overlays = nlohmann::json::array();
    for (std::size_t r = 0; r < run_dirs.size(); ++r) {
        std::string src = run_dirs[r] + "/trajectory_final.csv";
        if (fs::exists(src)) {
            std::string dst = "overlay_run" + std::to_string(r + 1) + ".csv";
            write_text_file(out + "/" + dst, read_text_file(src));
            overlays.push_back(dst);
        }
    }

    nlohmann::json js;
    js["version"] = kVersion;
    js["command"] = "compare";
    js["env"] = env_kind_name(cfgs.front().env);
    js["runs"] = run_dirs;
    js["episodes_aligned"] = aligned;
    js["overlays"] = overlays;
    write_json(out + "/compare_summary.json", js);

    std::printf("compare: %zu runs, %zu aligned episodes -> %s\n",
                run_dirs.size(), aligned, out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"distributionally robust safe RL toolkit"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    TrainCliArgs targs, bargs;
    auto add_training_flags = [](CLI::App* sub, TrainCliArgs& a) {
        sub->add_option("--config", a.config_path, "TOML run configuration")
            ->required();
        auto* seed = sub->add_option("--seed", a.seed_override,
                                     "override [run].seed");
        auto* outv = sub->add_option("--out", a.out_override,
                                     "override [run].out");
        auto* ck = sub->add_option("--checkpoint-every", a.checkpoint_override,
                                   "override [run].checkpoint_every (0 = final only)");
        sub->parse_complete_callback([&a, seed, outv, ck] {
            a.seed_set = seed->count() > 0;
            a.out_set = outv->count() > 0;
            a.checkpoint_set = ck->count() > 0;
        });
    };
    CLI::App* train_sub = app.add_subcommand(
        "train", "adversarial training against the worst-case noise");
    add_training_flags(train_sub, targs);
    CLI::App* baseline_sub = app.add_subcommand(
        "baseline", "uncertainty-agnostic training at the nominal noise");
    add_training_flags(baseline_sub, bargs);

    std::string eval_ck, eval_cfg, eval_noise = "worst", eval_out, eval_omega_from;
    std::vector<std::uint64_t> eval_seeds;
    CLI::App* eval_sub =
        app.add_subcommand("eval", "deterministic rollouts of a checkpoint");
    eval_sub->add_option("checkpoint", eval_ck, "checkpoint JSON")->required();
    eval_sub->add_option("--config", eval_cfg, "TOML run configuration")
        ->required();
    eval_sub
        ->add_option("--noise", eval_noise,
                     "executed disturbance: nominal | worst | sample")
        ->check(CLI::IsMember({"nominal", "worst", "sample"}));
    eval_sub->add_option("--seeds", eval_seeds, "seed list (comma separated)")
        ->delimiter(',');
    auto* eval_out_opt =
        eval_sub->add_option("--out", eval_out, "output directory");
    auto* omega_from_opt = eval_sub->add_option(
        "--omega-from", eval_omega_from,
        "with --noise worst, execute this checkpoint's noise instead");

    std::vector<std::string> cmp_dirs;
    std::string cmp_out = "compare";
    CLI::App* cmp_sub =
        app.add_subcommand("compare", "merge runs into figure-ready CSV bundles");
    cmp_sub->add_option("run_dirs", cmp_dirs, "training output directories")
        ->required()
        ->expected(-1);
    cmp_sub->add_option("--out", cmp_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*train_sub) return run_training(targs, RolloutMode::dsrl);
        if (*baseline_sub) return run_training(bargs, RolloutMode::baseline);
        if (*eval_sub)
            return run_eval(eval_ck, eval_cfg, eval_noise, eval_seeds, eval_out,
                            eval_out_opt->count() > 0, eval_omega_from,
                            omega_from_opt->count() > 0);
        if (*cmp_sub) return run_compare(cmp_dirs, cmp_out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const ArgumentError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const ShapeError& e) {
        std::fprintf(stderr, "load error: %s\n", e.what());
        return 2;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 1;
    }
    return 0;
}
