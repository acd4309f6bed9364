// Command-line front end: run / compare / verify.
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "florg/cli_commands.hpp"

namespace {

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = text.find(',', start);
        const std::string item =
            text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!item.empty()) out.push_back(item);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"federated low-rank adaptation simulator"};
    app.require_subcommand(1);

    florg::RunOptions run_opt;
    std::uint64_t run_seed = 0;
    CLI::App* run = app.add_subcommand("run", "run one experiment from a config file");
    run->add_option("--config", run_opt.config_path, "experiment config path")->required();
    run->add_option("--out", run_opt.out_dir, "output directory")->required();
    run->add_flag("--overwrite", run_opt.overwrite, "replace existing output files");
    CLI::Option* seed_flag =
        run->add_option("--seed", run_seed, "seed override (beats FLORG_SEED and the file)");

    florg::CompareOptions cmp_opt;
    std::string schemes_text, seeds_text;
    CLI::App* cmp = app.add_subcommand("compare", "sweep schemes x seeds and summarise");
    cmp->add_option("--config", cmp_opt.config_path, "experiment config path")->required();
    cmp->add_option("--schemes", schemes_text, "comma-separated scheme names")->required();
    cmp->add_option("--seeds", seeds_text, "comma-separated seeds")->required();
    cmp->add_option("--out", cmp_opt.out_dir, "output directory")->required();
    cmp->add_option("--workers", cmp_opt.workers, "concurrent cells")->default_val(1);
    cmp->add_flag("--overwrite", cmp_opt.overwrite, "replace existing output files");

    florg::VerifyOptions verify_opt;
    CLI::App* verify = app.add_subcommand("verify", "run the property-check registry");
    verify->add_flag("--quick", verify_opt.quick, "reduced trial counts");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : florg::kExitConfig;
    }

    if (run->parsed()) {
        run_opt.seed_set = seed_flag->count() > 0;
        run_opt.seed = run_seed;
        return florg::cmd_run(run_opt);
    }
    if (cmp->parsed()) {
        cmp_opt.schemes = split_list(schemes_text);
        for (const std::string& s : split_list(seeds_text)) {
            try {
                std::size_t used = 0;
                cmp_opt.seeds.push_back(std::stoull(s, &used));
                if (used != s.size()) throw std::invalid_argument(s);
            } catch (const std::exception&) {
                std::fprintf(stderr, "config error: bad seed '%s'\n", s.c_str());
                return florg::kExitConfig;
            }
        }
        return florg::cmd_compare(cmp_opt);
    }
    return florg::cmd_verify(verify_opt);
}
