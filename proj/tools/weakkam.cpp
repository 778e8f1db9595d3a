// weakkam: command-line experiment runner.
//
//   weakkam <stage> --config PATH [--out DIR] [--threads N]
//
// Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.

#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "weakkam/pipeline.hpp"

namespace wp = weakkam::pipeline;

int main(int argc, char** argv) {
  CLI::App app{"Discrete weak KAM / Aubry-Mather experiment runner"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_dir;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());

  const std::vector<std::pair<std::string, std::string>> commands{
      {"critical", "critical value and witness cycle"},
      {"weakkam", "weak KAM solution by value iteration"},
      {"barrier", "Peierls barrier and its checks"},
      {"aubry", "projected Aubry set with stationary/periodic labels"},
      {"quotient", "Mather semi-distance and quotient classes"},
      {"dimension", "covering numbers, h1 estimate, quadratic bound"},
      {"mane-compare", "Aubry set vs chain-recurrent set (mane family)"},
      {"chains", "chain-recurrent set of the vector field"},
      {"regularize", "alternating Lax-Oleinik smoothing"},
      {"ferry", "chain semi-metric delta_p on point sets"},
      {"all", "every stage applicable to the config"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON experiment config")->required();
    sub->add_option("--out", out_dir, "output directory (overrides outputs.directory)");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::Range(1u, 1024u));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    weakkam::set_thread_count(threads);
    auto cfg = wp::load_config(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    wp::Runner runner(cfg);
    const auto manifest = runner.run({stage});
    for (const auto& s : manifest["stages"])
      std::cout << s["stage"].get<std::string>() << ": " << s["files"].size() << " file(s), "
                << wp::num(s["wall_time_s"].get<double>()) << " s\n";
    std::cout << "manifest: " << cfg.out_dir << "/manifest.json\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "weakkam " << stage << ": " << e.what() << '\n';
    return wp::exit_code_for(e);
  }
}
