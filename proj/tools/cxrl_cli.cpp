#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cxrl/corpus.hpp"
#include "cxrl/errors.hpp"
#include "cxrl/evalsuite.hpp"
#include "cxrl/experiment.hpp"
#include "cxrl/grpo.hpp"
#include "cxrl/judge.hpp"

namespace fs = std::filesystem;
using namespace cxrl;
using ojson = nlohmann::ordered_json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

experiment::ExperimentConfig load_config(const Globals& g) {
  auto c = g.config_path.empty() ? experiment::ExperimentConfig{} : experiment::ExperimentConfig::from_file(g.config_path);
  if (g.seed) c.apply_seed(*g.seed);
  if (!g.out.empty()) c.output_dir = g.out;
  return c;
}

std::string out_path(const experiment::ExperimentConfig& c, const std::string& name) {
  return (fs::path(c.output_dir) / name).string();
}

void snapshot(const experiment::ExperimentConfig& c) {
  experiment::write_text(out_path(c, "config.json"), c.to_json().dump(2) + "\n");
}

std::shared_ptr<judge::Judge> make_judge(const std::string& spec, const experiment::ExperimentConfig& c) {
  if (spec == "none") return nullptr;
  experiment::JudgeSpec js = c.judge;
  js.backend = spec;
  if (js.is_mock()) return std::make_shared<judge::MockJudge>(experiment::judge_lexicon(js));
  auto endpoint = js.endpoint();
  endpoint.validate();
  return std::make_shared<judge::HttpJudge>(std::make_shared<judge::HttpTransport>(endpoint));
}

std::vector<corpus::StudyRecord> load_records(const std::string& path) {
  return corpus::filter_corpus(corpus::read_corpus_file(path));
}

// Scores pairs, fills every stratification, writes the report bundle.
// Returns 4 when judge calls failed permanently.
int emit_report(std::vector<evalsuite::EvalPair> pairs, const experiment::ExperimentConfig& c, judge::Judge* judge,
                const std::string& prefix) {
  const auto view = evalsuite::restrict_to_section(pairs, c.eval.section);
  pairs = view.pairs;
  if (view.excluded > 0) {
    std::cout << "section " << evalsuite::to_string(c.eval.section) << ": excluded " << view.excluded << " pairs\n";
  }
  const auto services = experiment::make_services(c);
  evalsuite::ScoreOptions opts;
  opts.coefficients = c.coefficients;
  opts.bootstrap_resamples = c.eval.bootstrap_resamples;
  opts.seed = c.seed;
  opts.threads = c.eval.threads;
  auto report = evalsuite::score_pairs(pairs, *services.suite, judge, opts);
  judge::Judge* strat_judge = report.judge_failures > 0 ? nullptr : judge;
  for (auto axis : {evalsuite::Axis::encounter, evalsuite::Axis::temporal, evalsuite::Axis::gender,
                    evalsuite::Axis::age_band, evalsuite::Axis::race}) {
    if (axis == evalsuite::Axis::temporal && strat_judge == nullptr) continue;
    auto table = evalsuite::stratify(pairs, report.scores, axis, strat_judge, c.coefficients);
    experiment::write_text(out_path(c, prefix + "strata_" + evalsuite::to_string(axis) + ".csv"),
                           evalsuite::strata_csv(table));
    report.strata.push_back(std::move(table));
  }
  report.conditions = evalsuite::condition_f1(pairs, services.suite->lexicon());
  experiment::write_text(out_path(c, prefix + "conditions.csv"), evalsuite::conditions_csv(*report.conditions));
  if (report.histogram) {
    experiment::write_text(out_path(c, prefix + "histogram.csv"), evalsuite::histogram_csv(*report.histogram));
  }
  std::ostringstream pj;
  evalsuite::write_pairs(pj, pairs);
  experiment::write_text(out_path(c, prefix + "pairs.jsonl"), pj.str());
  experiment::write_text(out_path(c, prefix + "report.json"), evalsuite::report_to_json(report).dump(2) + "\n");
  const std::string text = evalsuite::report_to_text(report);
  experiment::write_text(out_path(c, prefix + "report.txt"), text);
  std::cout << text;
  if (report.judge_failures > 0) {
    std::cerr << "judge failed on " << report.judge_failures << " pairs: " << report.judge_error << "\n";
    return 4;
  }
  return 0;
}

int cmd_ingest(const Globals& g, const std::string& in) {
  if (g.out.empty()) throw UsageError("ingest needs --out <path>");
  const auto raw = corpus::read_corpus_file(in);
  const auto kept = corpus::filter_corpus(raw);
  std::size_t both = 0, findings_only = 0, impression_only = 0;
  for (const auto& r : kept) {
    if (r.sections.findings && r.sections.impression) ++both;
    else if (r.sections.findings) ++findings_only;
    else ++impression_only;
  }
  corpus::write_corpus_file(g.out, kept);
  const ojson summary{{"input", raw.size()},
                      {"kept", kept.size()},
                      {"dropped", raw.size() - kept.size()},
                      {"findings_and_impression", both},
                      {"findings_only", findings_only},
                      {"impression_only", impression_only}};
  experiment::write_text(g.out + ".summary.json", summary.dump(2) + "\n");
  std::cout << "kept=" << kept.size() << " dropped=" << raw.size() - kept.size() << " findings_and_impression=" << both
            << " findings_only=" << findings_only << " impression_only=" << impression_only << "\n";
  return 0;
}

int cmd_split(const Globals& g, const std::string& in, std::size_t n) {
  const auto c = load_config(g);
  const auto records = corpus::read_corpus_file(in);
  if (n > records.size()) {
    throw DataError("cannot hold out " + std::to_string(n) + " of " + std::to_string(records.size()) + " records");
  }
  const auto split = corpus::split_validation(records, n, c.seed);
  corpus::write_corpus_file(out_path(c, "train.jsonl"), split.train);
  corpus::write_corpus_file(out_path(c, "validation.jsonl"), split.validation);
  std::cout << "train=" << split.train.size() << " validation=" << split.validation.size() << "\n";
  return 0;
}

int cmd_train(const Globals& g, const std::string& stage_name, const std::string& init_path) {
  const auto stage = experiment::parse_train_stage(stage_name);
  if (stage == experiment::TrainStage::rl2 && init_path.empty()) {
    throw UsageError("--stage rl2 needs --init <checkpoint> (the frozen KL reference)");
  }
  const auto c = load_config(g);
  const auto services = experiment::make_services(c);
  const auto task = experiment::make_task(c, services);
  const std::string hash = experiment::task_hash(task);
  std::optional<grpo::ToyPolicy> init;
  if (!init_path.empty()) init = grpo::load_checkpoint(init_path, hash).policy;

  snapshot(c);
  const auto result = experiment::run_stage(c, stage, task, services, init);
  const std::string name = experiment::to_string(stage);
  experiment::write_jsonl(out_path(c, name + "_log.jsonl"), result.log);
  const std::string ckpt = out_path(c, name + ".ckpt.json");
  grpo::save_checkpoint(ckpt, result.policy, hash, result.log.size());
  std::cout << "stage " << name << " steps=" << result.log.size() << " final_mean_reward=" << result.final_mean_reward
            << " oracle=" << grpo::oracle_mean(task) << "\n";
  std::cout << "checkpoint " << ckpt << " " << grpo::file_hash(ckpt) << "\n";
  return 0;
}

std::unique_ptr<judge::Generator> make_backend(const std::string& spec, const experiment::ExperimentConfig& c) {
  if (spec == "echo") return std::make_unique<judge::EchoGenerator>();
  if (spec.rfind("toy:", 0) == 0) {
    return std::make_unique<grpo::ToyPolicyGenerator>(grpo::load_checkpoint(spec.substr(4)).policy);
  }
  experiment::BackendSpec b = c.judge;
  b.backend = spec;
  auto endpoint = b.endpoint();
  endpoint.validate();
  return std::make_unique<judge::HttpGenerator>(std::make_shared<judge::HttpTransport>(endpoint));
}

int cmd_evaluate(const Globals& g, std::string corpus_path, const std::string& backend_spec, bool use_prior,
                 const std::string& judge_spec, const std::string& section) {
  auto c = load_config(g);
  if (corpus_path.empty() && c.corpus) corpus_path = *c.corpus;
  if (corpus_path.empty()) throw UsageError("evaluate needs --corpus or a config corpus path");
  c.corpus = corpus_path;
  if (use_prior) c.eval.use_prior = true;
  if (!section.empty()) c.eval.section = evalsuite::parse_section_scope(section);
  if (judge_spec != "none") c.judge.backend = judge_spec;
  const auto records = load_records(corpus_path);
  auto backend = make_backend(backend_spec, c);
  auto judge = make_judge(judge_spec, c);
  snapshot(c);

  evalsuite::InferenceOptions io;
  io.use_prior = c.eval.use_prior;
  io.max_tokens = c.eval.max_tokens;
  const auto inference = evalsuite::run_inference(records, *backend, io);
  const int code = emit_report(inference.pairs, c, judge.get(), "");
  if (!inference.complete) {
    std::cerr << "generation stopped after " << inference.pairs.size() << " studies: " << inference.error << "\n";
    return 4;
  }
  return code;
}

int cmd_baseline(const Globals& g, std::string corpus_path, const std::string& judge_spec) {
  auto c = load_config(g);
  if (corpus_path.empty() && c.corpus) corpus_path = *c.corpus;
  if (corpus_path.empty()) throw UsageError("baseline needs --corpus or a config corpus path");
  c.corpus = corpus_path;
  const auto records = load_records(corpus_path);
  auto judge = make_judge(judge_spec, c);
  snapshot(c);
  const auto base = evalsuite::copy_prior_baseline(records);
  std::cout << "copy-prior baseline: " << base.pairs.size() << " pairs, " << base.excluded << " without a prior\n";
  return emit_report(base.pairs, c, judge.get(), "baseline_");
}

int cmd_stratify(const Globals& g, const std::string& pairs_path, std::vector<std::string> axes,
                 const std::string& judge_spec) {
  const auto c = load_config(g);
  std::ifstream in(pairs_path);
  if (!in) throw IoError("cannot open '" + pairs_path + "'");
  auto pairs = evalsuite::read_pairs(in);
  auto judge = make_judge(judge_spec, c);
  const auto services = experiment::make_services(c);
  evalsuite::ScoreOptions opts;
  opts.coefficients = c.coefficients;
  opts.bootstrap_resamples = 0;
  opts.threads = c.eval.threads;
  const auto report = evalsuite::score_pairs(pairs, *services.suite, judge.get(), opts);
  if (axes.empty()) axes = {"encounter", "temporal", "gender", "age_band", "race"};
  for (const auto& name : axes) {
    const auto axis = evalsuite::parse_axis(name);
    const auto table = evalsuite::stratify(pairs, report.scores, axis, judge.get(), c.coefficients);
    const std::string csv = evalsuite::strata_csv(table);
    experiment::write_text(out_path(c, "strata_" + name + ".csv"), csv);
    std::cout << csv;
  }
  return report.judge_failures > 0 ? 4 : 0;
}

int cmd_serve_mock(const std::string& host, int port, int max_concurrency, int latency_ms) {
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);  // server threads inherit the mask

  judge::MockServerOptions opts;
  opts.host = host;
  opts.port = port;
  opts.max_concurrency = max_concurrency;
  opts.latency = std::chrono::milliseconds(latency_ms);
  judge::MockServer server(opts);
  server.start();
  std::cout << "serving " << server.base_url() << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  std::cout << "stopped after " << server.requests() << " requests" << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cxrl: report-generation reward pipeline on a toy policy"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "experiment config JSON")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "master seed");
  app.add_option("--out", g.out, "output directory (ingest: output file)");

  std::function<int()> action;

  auto* ingest = app.add_subcommand("ingest", "parse and filter a corpus");
  std::string in_path;
  ingest->add_option("--in", in_path)->required();
  ingest->callback([&] { action = [&] { return cmd_ingest(g, in_path); }; });

  auto* split = app.add_subcommand("split", "hold out a validation set");
  std::size_t n = 1024;
  split->add_option("--in", in_path)->required();
  split->add_option("--n", n);
  split->callback([&] { action = [&] { return cmd_split(g, in_path, n); }; });

  auto* train = app.add_subcommand("train", "run one training stage on the grammar task");
  std::string stage, init;
  train->add_option("--stage", stage)->required()->check(CLI::IsMember({"sft", "rl1", "rl2"}));
  train->add_option("--init", init, "starting checkpoint");
  train->callback([&] { action = [&] { return cmd_train(g, stage, init); }; });

  auto* evaluate = app.add_subcommand("evaluate", "generate and score a corpus");
  std::string corpus_path, backend = "echo", judge_spec = "mock", section;
  bool use_prior = false;
  evaluate->add_option("--corpus", corpus_path);
  evaluate->add_option("--backend", backend, "echo | toy:<checkpoint> | <url>");
  evaluate->add_flag("--use-prior", use_prior);
  evaluate->add_option("--judge", judge_spec, "mock | <url> | none");
  evaluate->add_option("--section", section, "full | findings | impression");
  evaluate->callback([&] {
    action = [&] { return cmd_evaluate(g, corpus_path, backend, use_prior, judge_spec, section); };
  });

  auto* stratify = app.add_subcommand("stratify", "stratified tables for a pairs file");
  std::string pairs_path;
  std::vector<std::string> axes;
  stratify->add_option("--pairs", pairs_path)->required();
  stratify->add_option("--axis", axes, "encounter | temporal | gender | age_band | race");
  stratify->add_option("--judge", judge_spec);
  stratify->callback([&] { action = [&] { return cmd_stratify(g, pairs_path, axes, judge_spec); }; });

  auto* baseline = app.add_subcommand("baseline", "score the copy-prior baseline");
  baseline->add_option("--corpus", corpus_path);
  baseline->add_option("--judge", judge_spec);
  baseline->callback([&] { action = [&] { return cmd_baseline(g, corpus_path, judge_spec); }; });

  auto* serve = app.add_subcommand("serve-mock", "serve the mock judge/embed/generate routes");
  std::string host = "127.0.0.1";
  int port = 8080, max_concurrency = 8, latency_ms = 0;
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--max-concurrency", max_concurrency);
  serve->add_option("--latency-ms", latency_ms);
  serve->callback([&] { action = [&] { return cmd_serve_mock(host, port, max_concurrency, latency_ms); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (*seed_opt) g.seed = seed;

  try {
    return action();
  } catch (const UsageError& e) {
    std::cerr << "usage: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const ServiceError& e) {
    std::cerr << "service error: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
