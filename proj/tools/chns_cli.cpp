// Experiment driver: validate configs, run experiments, refit rate tables.
// Exit codes: 0 success, 2 config error, 3 solver failure, 4 assertion failure.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "chns/config.hpp"
#include "chns/experiments.hpp"

namespace {

void print_rate_table(const chns::RateTable& t) {
    std::printf("%-12s", "dt");
    for (const auto& v : t.variables) std::printf("  %-12s %-8s", ("err_" + v).c_str(), "rate");
    std::printf("\n");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        std::printf("%-12.6g", t.rows[r].dt);
        for (std::size_t v = 0; v < t.variables.size(); ++v) {
            std::printf("  %-12.4e", t.rows[r].errors[v]);
            if (r == 0)
                std::printf(" %-8s", "-");
            else
                std::printf(" %-8.4f", t.rows[r].rates[v]);
        }
        std::printf("\n");
    }
    std::printf("%-12s", "ls-slope");
    for (std::size_t v = 0; v < t.variables.size(); ++v)
        std::printf("  %-12s %-8.4f", "", t.slopes[v]);
    std::printf("\n");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Phase-field / incompressible-flow time-filter solver"};
    app.require_subcommand(1);

    std::string config_path;
    std::string output_dir;
    std::string series_dir;
    int threads = 0;
    unsigned long long seed = 0;
    bool seed_set = false;

    CLI::App* run = app.add_subcommand("run", "run the experiment described by a JSON config");
    run->add_option("config", config_path, "config file")->required();
    run->add_option("--output-dir", output_dir, "override output.directory");
    run->add_option("--threads", threads, "worker threads for sweeps (env: CHNS_THREADS)");
    run->add_option("--seed", seed, "override the config seed")->each([&](const std::string&) {
        seed_set = true;
    });

    CLI::App* validate = app.add_subcommand("validate", "parse and validate a JSON config");
    validate->add_option("config", config_path, "config file")->required();

    CLI::App* rates = app.add_subcommand("rates", "recompute the rate table from errors.csv");
    rates->add_option("series-dir", series_dir, "directory holding errors.csv")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) {
            chns::ExperimentConfig cfg = chns::load_config(config_path);
            std::cout << "config ok: " << chns::detail_cfg::experiment_name(cfg.experiment)
                      << " / " << chns::detail_cfg::scheme_name(cfg.scheme) << "\n";
            return 0;
        }
        if (run->parsed()) {
            chns::ExperimentConfig cfg = chns::load_config(config_path);
            if (!output_dir.empty()) cfg.output_directory = output_dir;
            if (seed_set) cfg.seed = seed;
            chns::RunRecord rec = chns::run_experiment(cfg, threads);
            std::cout << "run ok: outputs in " << cfg.output_directory << "\n";
            if (rec.record.contains("rate_table")) {
                const auto& slopes = rec.record["rate_table"]["slopes"];
                std::cout << "least-squares slopes:";
                const char* names[] = {"phi", "mu", "u", "p"};
                for (std::size_t k = 0; k < slopes.size() && k < 4; ++k)
                    std::cout << " " << names[k] << "=" << slopes[k].get<double>();
                std::cout << "\n";
            }
            return 0;
        }
        if (rates->parsed()) {
            auto rows = chns::detail_run::read_errors_csv(std::filesystem::path(series_dir) /
                                                          "errors.csv");
            chns::RateTable t = chns::fit_rates({"phi", "mu", "u", "p"}, rows);
            print_rate_table(t);
            chns::detail_run::write_rates_csv(std::filesystem::path(series_dir) / "rates.csv", t);
            return 0;
        }
    } catch (const chns::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const chns::AssertionFailure& e) {
        std::cerr << "assertion failure: " << e.what() << "\n";
        return 4;
    } catch (const chns::SolveError& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return 3;
    } catch (const chns::NonlinearSolveError& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
