// rulecast: run experiments or serve elicitation sessions.
//
//   rulecast synthetic|scaling|sentiment|sweep --config <path> --out <dir> [--seed N] [--alpha X]
//   rulecast serve [--addr 127.0.0.1] [--port 8080] [--state-dir DIR] [--data-dir DIR]
//
// Exit codes: 0 success, 1 runtime failure, 2 bad configuration or usage.

#include <csignal>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "rulecast/experiments.hpp"
#include "rulecast/service.hpp"

namespace {

rulecast::service::HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int run_experiment_command(rulecast::ExperimentKind kind, const std::string& config_path,
                           const std::string& out_dir, std::optional<std::uint64_t> seed,
                           std::optional<double> alpha) {
  rulecast::ExperimentConfig config;
  try {
    config = rulecast::load_experiment_config(config_path);
    if (config.kind != kind) {
      throw rulecast::ConfigError(config_path + " configures experiment '" +
                                  std::string(rulecast::to_string(config.kind)) + "', not '" +
                                  std::string(rulecast::to_string(kind)) + "'");
    }
    if (seed) config.seed = *seed;
    if (alpha) {
      if (!(*alpha >= 0.0 && *alpha <= 1.0)) throw rulecast::ConfigError("--alpha must lie in [0, 1]");
      config.loop.alpha = *alpha;
    }
  } catch (const rulecast::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  try {
    for (const auto& path : rulecast::run_experiment(config, out_dir)) std::cout << path.string() << "\n";
  } catch (const rulecast::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decision-rule elicitation experiments and service"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  struct Experiment {
    const char* name;
    rulecast::ExperimentKind kind;
    const char* help;
  };
  const Experiment experiments[] = {
      {"synthetic", rulecast::ExperimentKind::Synthetic, "Switching-Gaussian task, three feedback conditions"},
      {"scaling", rulecast::ExperimentKind::Scaling, "Accuracy as the number of simulated experts grows"},
      {"sentiment", rulecast::ExperimentKind::Sentiment, "Per-topic alpha sweep on a text corpus"},
      {"sweep", rulecast::ExperimentKind::Sweep, "Alpha sweep on the switching task"},
  };
  std::vector<std::pair<CLI::App*, rulecast::ExperimentKind>> commands;
  for (const auto& e : experiments) {
    auto* cmd = app.add_subcommand(e.name, e.help);
    cmd->add_option("--config", config_path, "Key-value config file")->required();
    cmd->add_option("--out", out_dir, "Output directory")->required();
    cmd->add_option("--seed", seed, "Override the config seed");
    cmd->add_option("--alpha", alpha, "Override the mixing weight");
    commands.emplace_back(cmd, e.kind);
  }

  std::string addr = "127.0.0.1";
  int port = 8080;
  std::string state_dir, data_dir = "data";
  auto* serve = app.add_subcommand("serve", "Run the elicitation HTTP service");
  serve->add_option("--addr", addr, "Bind address");
  serve->add_option("--port", port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve->add_option("--state-dir", state_dir, "Persist sessions here");
  serve->add_option("--data-dir", data_dir, "Root for dataset paths in session requests");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  for (const auto& [cmd, kind] : commands) {
    if (cmd->parsed()) return run_experiment_command(kind, config_path, out_dir, seed, alpha);
  }

  try {
    rulecast::service::SessionManager::Options options;
    options.data_dir = data_dir;
    if (!state_dir.empty()) options.state_dir = state_dir;
    rulecast::service::SessionManager sessions(options);
    rulecast::service::HttpServer server(sessions);
    const int bound = server.bind(addr, port);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "listening on " << addr << ":" << bound << std::endl;
    server.serve();
    g_server = nullptr;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
