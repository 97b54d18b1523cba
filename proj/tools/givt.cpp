#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "givt/error.hpp"
#include "givt/harness/config.hpp"
#include "givt/harness/tasks.hpp"
#include "givt/kernels.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"GIVT toy pipeline: VAE tokenizer, real-valued-token transformer, samplers"};
    std::string task;
    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    std::string out_dir;
    bool print_config = false;

    app.add_option("task", task, "train-vae | train-givt | sample | eval | gradcheck | sweep-beta")
        ->required()
        ->check(CLI::IsMember({"train-vae", "train-givt", "sample", "eval", "gradcheck", "sweep-beta"}));
    app.add_option("--config", config_path, "JSON run config")->check(CLI::ExistingFile);
    app.add_option("--set", overrides, "override a config value by dotted path, e.g. givt.k=4");
    auto* seed_opt = app.add_option("--seed", seed, "root seed");
    auto* out_opt = app.add_option("--out", out_dir, "output directory");
    app.add_flag("--print-config", print_config, "print the resolved config and exit");

    CLI11_PARSE(app, argc, argv);

    try {
        std::vector<std::string> sets{"task=\"" + task + "\""};
        if (*seed_opt) {
            sets.push_back("seed=" + std::to_string(seed));
        }
        if (*out_opt) {
            sets.push_back("out_dir=\"" + out_dir + "\"");
        }
        sets.insert(sets.end(), overrides.begin(), overrides.end());
        const givt::harness::RunConfig cfg = config_path.empty() ? givt::harness::parse_config("{}", sets)
                                                                 : givt::harness::load_config(config_path, sets);
        if (print_config) {
            std::cout << givt::harness::to_json_text(cfg) << '\n';
            return 0;
        }
        std::cerr << "givt " << task << ": seed " << cfg.seed << ", " << givt::kernels::thread_count()
                  << " thread(s), output in " << cfg.out_dir.string() << '\n';
        return givt::harness::run_task(cfg);
    } catch (const givt::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
