// Command-line front end. Talks to the library only through rohil.h.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rohil/rohil.h"

namespace fs = std::filesystem;

namespace {

struct CallFailed : std::runtime_error {
  rohil_status status;
  CallFailed(rohil_status s, const std::string& what) : std::runtime_error(what), status(s) {}
};

void check(rohil_status s, const char* what) {
  if (s != ROHIL_OK) {
    throw CallFailed(s, std::string(what) + ": " + rohil_status_name(s) + ": " + rohil_last_error());
  }
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using ConfigPtr = std::unique_ptr<rohil_config, Deleter<rohil_config, rohil_config_free>>;
using AgentPtr = std::unique_ptr<rohil_agent, Deleter<rohil_agent, rohil_agent_free>>;
using DatasetPtr = std::unique_ptr<rohil_dataset, Deleter<rohil_dataset, rohil_dataset_free>>;
using ReportPtr = std::unique_ptr<rohil_report, Deleter<rohil_report, rohil_report_free>>;

ConfigPtr load_config(const std::string& path) {
  rohil_config* c = nullptr;
  check(path.empty() ? rohil_config_default(&c) : rohil_config_load(path.c_str(), &c), "config");
  return ConfigPtr(c);
}

AgentPtr load_agent(const std::string& path) {
  rohil_agent* a = nullptr;
  check(rohil_agent_load(path.c_str(), &a), path.c_str());
  return AgentPtr(a);
}

DatasetPtr load_dataset(const std::string& path) {
  rohil_dataset* d = nullptr;
  check(rohil_dataset_load(path.c_str(), &d), path.c_str());
  return DatasetPtr(d);
}

std::uint64_t hash_of(const rohil_config* c) {
  std::uint64_t h = 0;
  check(rohil_config_hash(c, &h), "config hash");
  return h;
}

void print_progress(const char* message, void*) { std::cerr << message << "\n"; }

std::string csv_path_for(const std::string& out) {
  if (fs::path(out).has_extension()) return out;
  fs::create_directories(out);
  return (fs::path(out) / "results.csv").string();
}

void write_report(const rohil_report* r, const std::string& out) {
  const std::string path = csv_path_for(out);
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  check(rohil_report_write(r, path.c_str()), "report write");
  std::size_t n = 0;
  check(rohil_report_rows(r, &n), "report rows");
  std::cout << "wrote " << n << " rows to " << path << "\n";
}

struct ExperimentArgs {
  std::string config;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<double> alphas;
  std::vector<double> shifts;
  std::string cache;
  unsigned threads = 1;
  std::string out = "results.csv";
};

void add_experiment(CLI::App& app, const char* name, const char* help, ExperimentArgs& args) {
  CLI::App* sub = app.add_subcommand(name, help);
  sub->add_option("--config", args.config, "config file (defaults when omitted)")->check(CLI::ExistingFile);
  sub->add_option("--seeds", args.seeds, "source seeds")->delimiter(',');
  if (std::string(name) == "sweep-alpha") {
    sub->add_option("--alphas", args.alphas, "alpha grid (default 0,0.05,...,1)")->delimiter(',');
  }
  sub->add_option("--shifts", args.shifts, "evaluation shifts (default 0 and eval.shift)")->delimiter(',');
  sub->add_option("--cache", args.cache, "directory for reusable source runs");
  sub->add_option("--threads", args.threads, "worker threads, 0 = all cores");
  sub->add_option("--out", args.out, "CSV path or directory");
  sub->callback([&args, name] {
    ConfigPtr cfg = load_config(args.config);
    rohil_plan plan{};
    plan.seeds = args.seeds.data();
    plan.n_seeds = args.seeds.size();
    plan.alphas = args.alphas.empty() ? nullptr : args.alphas.data();
    plan.n_alphas = args.alphas.size();
    plan.shifts = args.shifts.empty() ? nullptr : args.shifts.data();
    plan.n_shifts = args.shifts.size();
    plan.cache_dir = args.cache.empty() ? nullptr : args.cache.c_str();
    plan.threads = args.threads;
    rohil_report* r = nullptr;
    check(rohil_run_experiment(cfg.get(), name, &plan, print_progress, nullptr, &r), name);
    ReportPtr report(r);
    write_report(report.get(), args.out);
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relighting-robust fine-tuning of pixel SAC agents"};
  app.require_subcommand(1);

  // train-source
  std::string ts_config, ts_out = "ckpt";
  std::uint64_t ts_seed = 1;
  auto* ts = app.add_subcommand("train-source", "train a source-light agent and record its buffers");
  ts->add_option("--config", ts_config, "config file")->check(CLI::ExistingFile);
  ts->add_option("--seed", ts_seed, "source seed");
  ts->add_option("--out", ts_out, "output directory");
  ts->callback([&] {
    ConfigPtr cfg = load_config(ts_config);
    rohil_source_result r{};
    check(rohil_train_source(cfg.get(), ts_seed, print_progress, nullptr, &r), "train-source");
    AgentPtr agent(r.agent);
    DatasetPtr rl(r.rl), demos(r.demos);
    fs::create_directories(ts_out);
    const fs::path dir(ts_out);
    check(rohil_agent_save(agent.get(), (dir / "source.ckpt").c_str(), r.best_step, hash_of(cfg.get())), "save");
    check(rohil_dataset_save(rl.get(), (dir / "rl.rohl").c_str()), "save rl");
    check(rohil_dataset_save(demos.get(), (dir / "demos.rohl").c_str()), "save demos");
    std::cout << "best source success " << r.best_success << " at step " << r.best_step << "; wrote " << ts_out
              << "\n";
  });

  // relight
  std::string rl_config, rl_dataset, rl_out;
  std::uint64_t rl_noise_seed = 0;
  auto* rl = app.add_subcommand("relight", "re-render a dataset under the four relighting conditions");
  rl->add_option("--config", rl_config, "config file")->check(CLI::ExistingFile);
  rl->add_option("--dataset", rl_dataset, "input dataset")->required()->check(CLI::ExistingFile);
  rl->add_option("--noise-seed", rl_noise_seed, "pixel-noise seed");
  rl->add_option("--out", rl_out, "output dataset file, or a directory")->required();
  rl->callback([&] {
    ConfigPtr cfg = load_config(rl_config);
    DatasetPtr in = load_dataset(rl_dataset);
    rohil_dataset* d = nullptr;
    check(rohil_relight(cfg.get(), in.get(), rl_noise_seed, &d), "relight");
    DatasetPtr out(d);
    std::string path = rl_out;
    if (!fs::path(path).has_extension()) {
      fs::create_directories(path);
      path = (fs::path(path) / (fs::path(rl_dataset).stem().string() + "_relit.rohl")).string();
    }
    check(rohil_dataset_save(out.get(), path.c_str()), "save");
    std::size_t n = 0;
    check(rohil_dataset_size(out.get(), &n), "size");
    std::cout << "wrote " << n << " records to " << path << "\n";
  });

  // finetune
  std::string ft_config, ft_source, ft_pools, ft_relit, ft_anchor = "mse", ft_out = "finetuned";
  double ft_alpha = 0.75;
  std::uint64_t ft_seed = 1, ft_every = 0;
  auto* ft = app.add_subcommand("finetune", "offline relighting fine-tune of a source agent");
  ft->add_option("--config", ft_config, "config file")->check(CLI::ExistingFile);
  ft->add_option("--source", ft_source, "source checkpoint")->required()->check(CLI::ExistingFile);
  ft->add_option("--pools", ft_pools, "directory with rl.rohl and demos.rohl")->required()->check(CLI::ExistingDirectory);
  ft->add_option("--relit", ft_relit, "directory with rl_relit.rohl and demos_relit.rohl (default: --pools)");
  ft->add_option("--alpha", ft_alpha, "retention coefficient")->check(CLI::Range(0.0, 1.0));
  ft->add_option("--anchor", ft_anchor, "anchor head")->check(CLI::IsMember({"mse", "kl", "none"}));
  ft->add_option("--seed", ft_seed, "fine-tune seed");
  ft->add_option("--checkpoint-every", ft_every, "also write step_N.ckpt every N steps");
  ft->add_option("--out", ft_out, "output directory");
  ft->callback([&] {
    ConfigPtr cfg = load_config(ft_config);
    AgentPtr source = load_agent(ft_source);
    const fs::path pools(ft_pools);
    const fs::path relit(ft_relit.empty() ? ft_pools : ft_relit);
    DatasetPtr rl_ds = load_dataset((pools / "rl.rohl").string());
    DatasetPtr demos = load_dataset((pools / "demos.rohl").string());
    DatasetPtr rl_relit = load_dataset((relit / "rl_relit.rohl").string());
    DatasetPtr demos_relit = load_dataset((relit / "demos_relit.rohl").string());
    fs::create_directories(ft_out);
    struct Ctx {
      fs::path dir;
      std::uint64_t hash;
      std::uint64_t every;
    } ctx{ft_out, hash_of(cfg.get()), ft_every};
    auto on_ckpt = [](std::uint64_t step, const rohil_agent* a, void* user) {
      auto* c = static_cast<Ctx*>(user);
      if (c->every == 0) return;
      const std::string path = (c->dir / ("step_" + std::to_string(step) + ".ckpt")).string();
      check(rohil_agent_save(a, path.c_str(), step, c->hash), "checkpoint");
    };
    rohil_agent* out = nullptr;
    check(rohil_finetune(cfg.get(), source.get(), rl_ds.get(), demos.get(), rl_relit.get(), demos_relit.get(),
                         ft_alpha, ft_anchor.c_str(), ft_seed, ft_every, ft_every ? +on_ckpt : nullptr, &ctx, &out),
          "finetune");
    AgentPtr agent(out);
    const std::string path = (fs::path(ft_out) / "final.ckpt").string();
    check(rohil_agent_save(agent.get(), path.c_str(), 0, ctx.hash), "save");
    std::cout << "wrote " << path << "\n";
  });

  // eval
  std::string ev_config, ev_agent;
  double ev_shift = 0.6;
  std::uint32_t ev_episodes = 100;
  std::uint64_t ev_seed = 0;
  bool ev_interventions = false;
  auto* ev = app.add_subcommand("eval", "evaluate an agent under a shifted light");
  ev->add_option("--config", ev_config, "config file")->check(CLI::ExistingFile);
  ev->add_option("--agent", ev_agent, "agent checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--shift", ev_shift, "shift intensity on the 0.1 grid");
  ev->add_option("--episodes", ev_episodes, "episodes");
  ev->add_option("--seed", ev_seed, "episode seed");
  ev->add_flag("--interventions", ev_interventions, "let the oracle take over stalled episodes");
  ev->callback([&] {
    ConfigPtr cfg = load_config(ev_config);
    AgentPtr agent = load_agent(ev_agent);
    rohil_eval_result r{};
    check(rohil_evaluate(cfg.get(), agent.get(), ev_shift, ev_episodes, ev_seed, ev_interventions ? 1 : 0, &r),
          "eval");
    std::printf("shift %.1f  episodes %u  success %.3f", r.shift, r.episodes, r.success_rate);
    if (r.has_mean_success_steps) std::printf("  mean steps %.2f", r.mean_success_steps);
    if (r.has_intervention_rate) std::printf("  interventions %.3f", r.intervention_rate);
    std::printf("\n");
  });

  ExperimentArgs sweep_alpha, ablate, compare, sweep_iters;
  add_experiment(app, "sweep-alpha", "alpha sweep over the retention grid", sweep_alpha);
  add_experiment(app, "ablate-2x2", "IRR x anchor ablation (Final-A..D)", ablate);
  add_experiment(app, "compare-anchor-head", "MSE vs KL policy anchor", compare);
  add_experiment(app, "sweep-iterations", "success every 1000 fine-tune steps", sweep_iters);

  // report
  std::vector<std::string> rp_inputs;
  std::string rp_out = "results.csv";
  auto* rp = app.add_subcommand("report", "merge report CSVs into one sorted CSV + JSON");
  rp->add_option("inputs", rp_inputs, "CSV files to merge")->check(CLI::ExistingFile);
  rp->add_option("--out", rp_out, "output CSV path");
  rp->callback([&] {
    rohil_report* r = nullptr;
    check(rohil_report_new(&r), "report");
    ReportPtr merged(r);
    for (const std::string& in : rp_inputs) {
      rohil_report* part = nullptr;
      check(rohil_report_load_csv(in.c_str(), &part), in.c_str());
      ReportPtr p(part);
      check(rohil_report_merge(merged.get(), p.get()), "merge");
    }
    write_report(merged.get(), rp_out);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const CallFailed& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.status);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
