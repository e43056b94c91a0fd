#include <CLI11.hpp>
#include <iostream>

#include "slicenet/commands.hpp"
#include "slicenet/error.hpp"

using namespace slicenet;

int main(int argc, char** argv) {
  CLI::App app{"Train and serve width-sliceable networks"};
  app.require_subcommand(1);

  GenDataOptions gen;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  g->add_option("--task", gen.task, "spirals | tinyimages | charlm")->required();
  g->add_option("--seed", gen.seed, "Generator seed");
  g->add_option("--size", gen.size, "Points, images or corpus characters");
  g->add_option("--out", gen.out, "Output directory");

  TrainOptions train;
  auto* t = app.add_subcommand("train", "Train a sliceable model");
  t->add_option("--config", train.config, "Experiment INI file");
  t->add_option("--data", train.data, "Dataset file (generated from the config when omitted)");
  t->add_option("--out", train.out, "Output directory");
  t->add_option("--resume", train.resume, "Checkpoint directory to continue from");
  t->add_option("--max-epochs", train.max_epochs, "Stop after this many epochs in this run");

  EvalOptions eval;
  auto* e = app.add_subcommand("eval", "Evaluate subnets of a checkpoint");
  e->add_option("--checkpoint", eval.checkpoint)->required();
  e->add_option("--data", eval.data);
  e->add_option("--rates", eval.rates)->delimiter(',');
  e->add_option("--out", eval.out);

  SweepOptions sweep;
  auto* s = app.add_subcommand("sweep", "Metric and cost for a list of slice rates");
  s->add_option("--checkpoint", sweep.checkpoint);
  s->add_option("--config", sweep.config);
  s->add_option("--model", sweep.model, "Built-in model: vgg13");
  s->add_option("--groups", sweep.groups, "Groups for the built-in model");
  s->add_option("--data", sweep.data);
  s->add_option("--rates", sweep.rates)->delimiter(',');
  s->add_option("--out", sweep.out);

  CostOptions cost;
  auto* c = app.add_subcommand("cost", "Per-layer parameter and operation counts");
  c->add_option("--config", cost.config);
  c->add_option("--model", cost.model, "Built-in model: vgg13");
  c->add_option("--groups", cost.groups);
  c->add_option("--rates", cost.rates)->delimiter(',');
  c->add_option("--out", cost.out);

  SimulateOptions sim;
  auto* m = app.add_subcommand("simulate", "Latency-bounded serving simulation");
  m->add_option("--trace", sim.trace, "CSV of arrival times")->required();
  m->add_option("--latency", sim.latency, "Latency constraint T in seconds");
  m->add_option("--sample-time", sim.sample_time, "Full-model seconds per query");
  m->add_option("--rates", sim.rates)->delimiter(',');
  m->add_option("--out", sim.out);

  CascadeOptions cascade;
  auto* k = app.add_subcommand("cascade", "Evaluate a cascade of subnets");
  k->add_option("--checkpoint", cascade.checkpoint)->required();
  k->add_option("--rates", cascade.rates)->delimiter(',');
  k->add_option("--independent", cascade.independent, "Fixed-model checkpoints, one per stage")
      ->delimiter(',');
  k->add_option("--data", cascade.data);
  k->add_option("--out", cascade.out);

  WidenOptions widen;
  auto* w = app.add_subcommand("widen", "Widen a cached subnet and compare with direct inference");
  w->add_option("--checkpoint", widen.checkpoint)->required();
  w->add_option("--data", widen.data);
  w->add_option("--from", widen.from, "Cached base rate");
  w->add_option("--to", widen.to, "Target rate");
  w->add_option("--mode", widen.mode, "exact | approx");
  w->add_option("--out", widen.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    nlohmann::json summary;
    if (*g) summary = cmd_gen_data(gen);
    else if (*t) summary = cmd_train(train);
    else if (*e) summary = cmd_eval(eval);
    else if (*s) summary = cmd_sweep(sweep);
    else if (*c) summary = cmd_cost(cost);
    else if (*m) summary = cmd_simulate(sim);
    else if (*k) summary = cmd_cascade(cascade);
    else if (*w) summary = cmd_widen(widen);
    std::cout << summary.dump(2) << '\n';
    return 0;
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return exit_code_for(err.kind());
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
}
