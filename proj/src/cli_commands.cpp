#include "florg/cli_commands.hpp"

#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <random>
#include <thread>

#include "florg/checkpoint.hpp"
#include "florg/config.hpp"
#include "florg/errors.hpp"
#include "florg/federation.hpp"
#include "florg/metrics_io.hpp"
#include "florg/verify.hpp"

namespace fs = std::filesystem;

namespace florg {

namespace {

std::string utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::uint64_t parse_seed_text(const std::string& text, const char* origin) {
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(text.c_str(), &end, 10);
    if (end == text.c_str() || *end != '\0' || errno == ERANGE ||
        text.find('-') != std::string::npos) {
        throw ConfigError(std::string(origin) + ": bad seed '" + text + "'");
    }
    return static_cast<std::uint64_t>(v);
}

// flag > FLORG_SEED > config file > default
void resolve_seed(ExperimentConfig& cfg, bool flag_set, std::uint64_t flag_value) {
    if (flag_set) {
        cfg.seed = flag_value;
        return;
    }
    if (const char* env = std::getenv("FLORG_SEED")) {
        cfg.seed = parse_seed_text(env, "FLORG_SEED");
    }
}

void refuse_existing(const std::vector<fs::path>& paths, bool overwrite) {
    if (overwrite) return;
    for (const fs::path& p : paths) {
        if (fs::exists(p)) {
            throw ConfigError("refusing to overwrite '" + p.string() +
                              "' (pass --overwrite to replace it)");
        }
    }
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    out.flush();
    if (!out) throw IoError("short write to '" + path.string() + "'");
}

struct CellResult {
    Scheme scheme;
    std::uint64_t seed = 0;
    RunResult run;
    bool ok = false;
    bool diverged = false;
    std::string error;
};

// first round whose metric meets the target, or 0 when never met
int rounds_to_target(const std::vector<RoundMetrics>& metrics, double target, bool accuracy) {
    if (std::isnan(target)) return 0;
    for (const RoundMetrics& m : metrics) {
        const double v = accuracy ? m.eval_accuracy : m.global_loss;
        if (accuracy ? (v >= target) : (v <= target)) return m.round;
    }
    return 0;
}

struct Stats {
    double mean = 0.0, lo = 0.0, hi = 0.0;
};

Stats stats_of(const std::vector<double>& values) {
    Stats s;
    s.lo = values[0];
    s.hi = values[0];
    for (double v : values) {
        s.mean += v;
        s.lo = std::min(s.lo, v);
        s.hi = std::max(s.hi, v);
    }
    s.mean /= static_cast<double>(values.size());
    return s;
}

} // namespace

int cmd_run(const RunOptions& opt) {
    std::string started = utc_now();
    try {
        ExperimentConfig cfg = parse_config_file(opt.config_path);
        resolve_seed(cfg, opt.seed_set, opt.seed);
        validate_config(cfg);

        const fs::path out_dir(opt.out_dir);
        fs::create_directories(out_dir);
        const fs::path metrics_path = out_dir / "metrics.csv";
        const fs::path diag_path = out_dir / "diagnostics.csv";
        const fs::path ckpt_path = out_dir / "final.ckpt";
        const fs::path manifest_path = out_dir / "manifest.txt";
        std::vector<fs::path> outputs{metrics_path, ckpt_path, manifest_path};
        if (cfg.scheme == Scheme::florg) outputs.push_back(diag_path);
        refuse_existing(outputs, opt.overwrite);

        ExperimentEngine engine(cfg);
        CsvWriter metrics(metrics_path.string(), metrics_csv_header());
        RunResult result =
            engine.run([&](const RoundMetrics& m) { metrics.row(metrics_csv_row(m)); });
        metrics.close();

        if (cfg.scheme == Scheme::florg) {
            CsvWriter diag(diag_path.string(), theorem2_csv_header());
            for (const Theorem2Record& rec : result.diagnostics) {
                diag.row(theorem2_csv_row(rec));
            }
            diag.close();
        }

        Checkpoint ckpt;
        ckpt.config_text = config_to_text(engine.config());
        ckpt.rounds = result.rounds_completed;
        ckpt.matrices = engine.state_matrices();
        write_checkpoint(ckpt_path.string(), ckpt);

        std::string manifest;
        manifest += "tool_version = " + std::string(kToolVersion) + "\n";
        manifest += "config_path = " + opt.config_path + "\n";
        manifest += "output_dir = " + opt.out_dir + "\n";
        manifest += "started_utc = " + started + "\n";
        manifest += "finished_utc = " + utc_now() + "\n";
        manifest += "rounds_completed = " + std::to_string(result.rounds_completed) + "\n";
        manifest += "# resolved configuration\n";
        manifest += config_to_text(engine.config());
        write_text_file(manifest_path, manifest);

        const RoundMetrics& last = result.metrics.back();
        std::printf("%s seed %llu: %d rounds, loss %.6g -> %.6g\n",
                    scheme_name(cfg.scheme), static_cast<unsigned long long>(cfg.seed),
                    result.rounds_completed, result.initial_loss, last.global_loss);
        return kExitOk;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    }
}

int cmd_compare(const CompareOptions& opt) {
    try {
        ExperimentConfig base = parse_config_file(opt.config_path);
        validate_config(base);
        if (opt.schemes.empty() || opt.seeds.empty()) {
            throw ConfigError("compare needs at least one scheme and one seed");
        }
        if (opt.workers < 1) throw ConfigError("workers must be >= 1");

        std::vector<Scheme> schemes;
        for (const std::string& name : opt.schemes) schemes.push_back(scheme_from_name(name));

        const fs::path out_dir(opt.out_dir);
        fs::create_directories(out_dir);

        std::vector<CellResult> cells;
        std::vector<fs::path> cell_paths;
        for (Scheme scheme : schemes) {
            for (std::uint64_t seed : opt.seeds) {
                CellResult cell;
                cell.scheme = scheme;
                cell.seed = seed;
                cells.push_back(std::move(cell));
                cell_paths.push_back(out_dir / (std::string(scheme_name(scheme)) + "_seed" +
                                                std::to_string(seed) + ".csv"));
            }
        }
        const fs::path summary_path = out_dir / "summary.csv";
        std::vector<fs::path> all_paths = cell_paths;
        all_paths.push_back(summary_path);
        refuse_existing(all_paths, opt.overwrite);

        // cells are independent; a small pool splits them by atomic ticket
        std::atomic<std::size_t> next{0};
        auto worker = [&]() {
            for (std::size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) {
                CellResult& cell = cells[i];
                ExperimentConfig cfg = base;
                cfg.scheme = cell.scheme;
                cfg.seed = cell.seed;
                try {
                    cell.run = run_experiment(cfg);
                    cell.ok = true;
                } catch (const DivergenceError& e) {
                    cell.diverged = true;
                    cell.error = e.what();
                } catch (const std::exception& e) {
                    cell.error = e.what();
                }
            }
        };
        const int pool = std::min<int>(opt.workers, static_cast<int>(cells.size()));
        if (pool <= 1) {
            worker();
        } else {
            std::vector<std::thread> threads;
            for (int i = 0; i < pool; ++i) threads.emplace_back(worker);
            for (std::thread& t : threads) t.join();
        }

        bool any_divergence = false, any_error = false;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const CellResult& cell = cells[i];
            if (!cell.ok) {
                any_error = true;
                any_divergence = any_divergence || cell.diverged;
                std::fprintf(stderr, "%s seed %llu failed: %s\n", scheme_name(cell.scheme),
                             static_cast<unsigned long long>(cell.seed), cell.error.c_str());
                continue;
            }
            CsvWriter csv(cell_paths[i].string(), metrics_csv_header());
            for (const RoundMetrics& m : cell.run.metrics) csv.row(metrics_csv_row(m));
            csv.close();
        }
        if (any_error) return any_divergence ? kExitDivergence : kExitConfig;

        CsvWriter summary(summary_path.string(),
                          "scheme,seeds,final_loss_mean,final_loss_min,final_loss_max,"
                          "final_accuracy_mean,final_accuracy_min,final_accuracy_max,"
                          "uplink_total_mean,downlink_total_mean,rounds_to_target_loss,"
                          "rounds_to_target_accuracy");
        for (Scheme scheme : schemes) {
            std::vector<double> losses, accs, ups, downs;
            std::vector<int> to_loss, to_acc;
            for (const CellResult& cell : cells) {
                if (cell.scheme != scheme) continue;
                const auto& metrics = cell.run.metrics;
                losses.push_back(metrics.back().global_loss);
                accs.push_back(metrics.back().eval_accuracy);
                long long up = 0, down = 0;
                for (const RoundMetrics& m : metrics) {
                    up += m.uplink_params;
                    down += m.downlink_params;
                }
                ups.push_back(static_cast<double>(up));
                downs.push_back(static_cast<double>(down));
                to_loss.push_back(rounds_to_target(metrics, base.target_loss, false));
                to_acc.push_back(rounds_to_target(metrics, base.target_accuracy, true));
            }
            const Stats ls = stats_of(losses), as = stats_of(accs), us = stats_of(ups),
                        ds = stats_of(downs);
            // mean rounds-to-target only when every seed reached it
            auto target_cell = [](const std::vector<int>& rounds) -> std::string {
                double total = 0.0;
                for (int v : rounds) {
                    if (v == 0) return "-";
                    total += v;
                }
                return format_double(total / static_cast<double>(rounds.size()));
            };
            std::string row = scheme_name(scheme);
            row += ',' + std::to_string(opt.seeds.size());
            row += ',' + format_double(ls.mean) + ',' + format_double(ls.lo) + ',' +
                   format_double(ls.hi);
            row += ',' + format_double(as.mean) + ',' + format_double(as.lo) + ',' +
                   format_double(as.hi);
            row += ',' + format_double(us.mean) + ',' + format_double(ds.mean);
            row += ',' + target_cell(to_loss) + ',' + target_cell(to_acc);
            summary.row(row);
        }
        summary.close();
        std::printf("compare: %zu cells -> %s\n", cells.size(), summary_path.string().c_str());
        return kExitOk;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    }
}

int cmd_verify(const VerifyOptions& opt) {
    std::uint64_t seed;
    try {
        if (const char* env = std::getenv("FLORG_SEED")) {
            seed = parse_seed_text(env, "FLORG_SEED");
        } else {
            std::random_device rd;
            seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    }
    std::printf("verification seed %llu%s\n", static_cast<unsigned long long>(seed),
                opt.quick ? " (quick profile)" : "");
    const std::vector<CheckResult> results = run_verification(seed, opt.quick);
    int failed = 0;
    for (const CheckResult& r : results) {
        if (r.passed) {
            std::printf("[PASS] %-40s %s\n", r.name.c_str(), r.detail.c_str());
        } else {
            ++failed;
            std::printf("[FAIL] %-40s %s\n", r.name.c_str(), r.detail.c_str());
        }
    }
    std::printf("%zu checks, %d failed\n", results.size(), failed);
    return failed == 0 ? kExitOk : kExitVerify;
}

} // namespace florg
