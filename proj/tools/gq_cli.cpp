// gq: command-line front end for the grad queue experiments.
//
//   gq lemma-check
//   gq momentum-sim --C 2.5 --N 9 --steps 90 --output sim.csv
//   gq train-lines --config lines.ini --trials 10
//
// Every option can also come from a flat key=value file given with --config;
// command-line values win over the file.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "gradq/experiments.hpp"

int main(int argc, char** argv) {
  gradq::exp::ExperimentConfig cfg;
  CLI::App app{"Grad queue experiments: lemma oracles, momentum simulation, line-detection training"};
  app.set_config("--config", "", "flat key=value configuration file");

  app.add_option("--learning-rate,--learning_rate", cfg.learning_rate, "step size")->capture_default_str();
  app.add_option("--beta", cfg.beta, "momentum decay")->capture_default_str();
  app.add_option("--rho", cfg.rho, "boost clamp constant (>= 1)")->capture_default_str();
  app.add_option("--k", cfg.k, "number of clusters, 0 picks batch_size / optimal_batch")->capture_default_str();
  app.add_option("--optimal-batch,--optimal_batch", cfg.optimal_batch)->capture_default_str();
  app.add_option("--queue-capacity,--queue_capacity", cfg.queue_capacity, "grad queue length")->capture_default_str();
  app.add_option("--boost", cfg.boost, "enable the boost in the GQ arm")->capture_default_str();
  app.add_option("--adam", cfg.adam, "train with Adam instead of SGDM")->capture_default_str();
  app.add_option("--u", cfg.u, "repeated value of the sparse signal")->capture_default_str();
  app.add_option("--C", cfg.C, "sparse value, emitted every N steps")->capture_default_str();
  app.add_option("--N", cfg.N, "sparse period")->capture_default_str();
  app.add_option("--steps", cfg.steps, "simulation steps / synthetic loss feed length")->capture_default_str();
  app.add_option("--height", cfg.height)->capture_default_str();
  app.add_option("--width", cfg.width)->capture_default_str();
  app.add_option("--p", cfg.p, "horizontal-line images")->capture_default_str();
  app.add_option("--q", cfg.q, "vertical-line images")->capture_default_str();
  app.add_option("--noise", cfg.noise, "pixel noise std")->capture_default_str();
  app.add_option("--seed", cfg.seed, "master seed")->capture_default_str();
  app.add_option("--batch-size,--batch_size", cfg.batch_size, "0 means full batch")->capture_default_str();
  app.add_option("--train-steps,--train_steps", cfg.train_steps)->capture_default_str();
  app.add_option("--trials", cfg.trials, "seeds for train-lines")->capture_default_str();
  app.add_option("--window", cfg.window, "loss window of the queue-length controller")->capture_default_str();
  app.add_option("--min-length,--min_length", cfg.min_length)->capture_default_str();
  app.add_option("--max-length,--max_length", cfg.max_length)->capture_default_str();
  app.add_option("--feed", cfg.feed, "qlen-demo loss feed: staged, decreasing, flat, train")->capture_default_str();
  app.add_option("--output,-o", cfg.output, "CSV path, '-' for standard output")->capture_default_str();

  for (const char* name : {"lemma-check", "momentum-sim", "train-lines", "qlen-demo", "zeta-table"})
    app.add_subcommand(name)->fallthrough();
  app.require_subcommand(1);

  CLI11_PARSE(app, argc, argv);
  cfg.run = app.get_subcommands().front()->get_name();

  try {
    const auto res = gradq::exp::run(cfg);
    // With the CSV on stdout the summary moves to stderr.
    std::ostream& summary = cfg.output == "-" ? std::cerr : std::cout;
    if (cfg.output == "-") {
      gradq::exp::write_csv(std::cout, res.table, cfg);
    } else {
      std::ofstream out(cfg.output);
      if (!out) {
        std::cerr << "gq: cannot open " << cfg.output << " for writing\n";
        return 2;
      }
      gradq::exp::write_csv(out, res.table, cfg);
    }
    for (const auto& line : res.summary) summary << line << "\n";
    return res.ok ? 0 : 1;
  } catch (const gradq::exp::DivergenceError& e) {
    std::cerr << "gq: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "gq: " << e.what() << "\n";
    return 2;
  }
}
