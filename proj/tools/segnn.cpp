// segnn: command-line driver for the unresolved-question pipeline.
//
// Every stage reads and writes artifacts under one work directory:
//   records/      ingest         posts, comments and users as JSON lines
//   graphs/       build-graphs   graphs.bin + manifest.json
//   features/     featurize      embeddings.seemb
//   models/       train          checkpoints and training logs
//   reports/      evaluate, compare, trend, stats

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "segnn/errors.hpp"
#include "segnn/evaluation.hpp"
#include "segnn/features.hpp"
#include "segnn/graph_io.hpp"
#include "segnn/ingest.hpp"
#include "segnn/synthetic.hpp"
#include "segnn/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// A stage artifact is missing; `stage` is the command that produces it.
class MissingArtifact : public segnn::Error {
 public:
  MissingArtifact(const fs::path& path, std::string stage)
      : segnn::Error("missing " + path.string()), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct Common {
  fs::path work = "work";
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

struct Layout {
  fs::path root;
  fs::path records() const { return root / "records"; }
  fs::path graphs() const { return root / "graphs"; }
  fs::path embeddings() const { return root / "features" / "embeddings.seemb"; }
  fs::path models() const { return root / "models"; }
  fs::path reports() const { return root / "reports"; }
};

void require(const fs::path& path, const std::string& stage) {
  if (!fs::exists(path)) throw MissingArtifact(path, stage);
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw segnn::Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw segnn::Error("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw segnn::FormatError(path.string() + ": " + e.what());
  }
}

std::string community_of(const Layout& l) {
  const fs::path meta = l.records() / "ingest.json";
  if (!fs::exists(meta)) return "unknown";
  return read_json(meta).value("community", std::string("unknown"));
}

segnn::DumpRecords load_records(const Layout& l) {
  require(l.records() / "posts.jsonl", "ingest");
  return segnn::read_records_jsonl(l.records());
}

segnn::LoadedCorpus load_graphs(const Layout& l) {
  require(l.graphs() / "manifest.json", "build-graphs");
  return segnn::read_corpus(l.graphs());
}

segnn::Dataset load_dataset(const Layout& l, std::size_t jobs) {
  auto corpus = load_graphs(l);
  require(l.embeddings(), "featurize");
  const auto provider = segnn::load_precomputed(l.embeddings());
  return segnn::make_dataset(corpus.manifest.community, corpus.graphs, *provider, jobs);
}

// ---- commands ----

struct IngestArgs {
  fs::path dump;
  std::string community;
};

void cmd_ingest(const Common& c, const IngestArgs& a) {
  const Layout l{c.work};
  if (!fs::is_directory(a.dump)) {
    throw segnn::InvalidArgument("dump directory " + a.dump.string() + " does not exist");
  }
  const auto records = segnn::ingest_directory(a.dump);
  const auto summary = segnn::summarize_corpus(records);
  segnn::write_records_jsonl(records, l.records());
  json report = segnn::ingestion_report(records, summary);
  report["community"] = a.community;
  report["seed"] = c.seed;
  write_json(l.records() / "ingest.json", report);
  std::cout << report.dump(2) << '\n';
}

struct BuildArgs {
  std::size_t subsample = 0;
};

void cmd_build_graphs(const Common& c, const BuildArgs& a) {
  const Layout l{c.work};
  const auto records = load_records(l);
  auto build = segnn::build_corpus(records);
  std::vector<segnn::CommGraph> graphs = std::move(build.graphs);
  std::size_t violations = 0;
  for (const auto& g : graphs) violations += segnn::validate_schema(g).empty() ? 0 : 1;
  if (a.subsample > 0 && a.subsample < graphs.size()) {
    std::vector<double> labels;
    labels.reserve(graphs.size());
    for (const auto& g : graphs) labels.push_back(g.unresolved ? 1.0 : 0.0);
    const auto keep = segnn::stratified_subsample(labels, a.subsample, c.seed);
    std::vector<segnn::CommGraph> picked;
    picked.reserve(keep.size());
    for (auto i : keep) picked.push_back(std::move(graphs[i]));
    graphs = std::move(picked);
  }
  segnn::write_corpus(l.graphs(), community_of(l), graphs, c.seed);
  json out = {{"graphs", graphs.size()},
              {"schema_violations", violations},
              {"excluded_comments", build.counters.excluded_comments},
              {"placeholder_users", build.counters.placeholder_users},
              {"orphan_comments", build.counters.orphan_comments},
              {"unknown_user_profiles", build.counters.unknown_user_profiles},
              {"seed", c.seed}};
  write_json(l.graphs() / "build.json", out);
  std::cout << out.dump(2) << '\n';
}

void cmd_stats(const Common& c) {
  const Layout l{c.work};
  const auto corpus = load_graphs(l);
  const auto table = segnn::graph_statistics(corpus.graphs);
  json j = segnn::stats_json(table);
  j["community"] = corpus.manifest.community;
  j["seed"] = c.seed;
  write_json(l.reports() / "stats.json", j);
  std::cout << segnn::format_stats_table(table);
}

struct FeaturizeArgs {
  std::string embedder = "hash";
  fs::path embeddings;
  std::size_t dim = segnn::kDefaultTextDim;
};

void cmd_featurize(const Common& c, const FeaturizeArgs& a) {
  const Layout l{c.work};
  const auto corpus = load_graphs(l);
  std::unique_ptr<segnn::EmbeddingProvider> provider;
  if (a.embedder == "hash") {
    provider = std::make_unique<segnn::HashingEmbedder>(a.dim);
  } else if (a.embedder == "precomputed") {
    if (a.embeddings.empty()) {
      throw segnn::InvalidArgument("--embeddings FILE is required with --embedder precomputed");
    }
    if (!fs::exists(a.embeddings)) {
      throw segnn::InvalidArgument("embedding file " + a.embeddings.string() + " does not exist");
    }
    provider = segnn::load_precomputed(a.embeddings);
  } else {
    throw segnn::InvalidArgument("unknown embedder '" + a.embedder +
                                 "' (expected hash or precomputed)");
  }
  std::vector<segnn::EmbeddingRecord> records;
  std::set<std::string> seen;
  for (const auto& g : corpus.graphs) {
    for (const auto& node : g.graph.nodes()) {
      std::string key = node.key();
      if (!seen.insert(key).second) continue;
      const auto v = provider->embed(key, node.text());
      records.push_back({std::move(key), std::vector<float>(v.begin(), v.end())});
    }
  }
  fs::create_directories(l.embeddings().parent_path());
  segnn::write_embedding_file(l.embeddings(), provider->dim(), records);
  json out = {{"embedder", a.embedder}, {"dim", provider->dim()}, {"keys", records.size()},
              {"seed", c.seed}};
  write_json(l.embeddings().parent_path() / "featurize.json", out);
  std::cout << out.dump(2) << '\n';
}

struct TrainingFlags {
  fs::path config;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;

  segnn::TrainConfig resolve(std::uint64_t seed) const {
    segnn::TrainConfig t;
    if (!config.empty()) read_json(config).get_to(t);
    if (epochs) t.epochs = *epochs;
    if (batch_size) t.batch_size = *batch_size;
    if (learning_rate) t.learning_rate = *learning_rate;
    t.seed = seed;
    t.validate();
    return t;
  }
};

struct TrainArgs {
  std::string model = "gcn";
  std::string features = "text+type";
  fs::path model_config;
  TrainingFlags flags;
};

void cmd_train(const Common& c, const TrainArgs& a) {
  const Layout l{c.work};
  const auto data = load_dataset(l, c.jobs);
  segnn::TrainConfig t = a.flags.resolve(c.seed);
  t.architecture = segnn::parse_architecture(a.model);
  t.feature_mode = segnn::parse_feature_mode(a.features);
  const auto dim = segnn::feature_dim(t.feature_mode, data.text_dim);
  segnn::ModelConfig mc = segnn::ModelConfig::preset(t.architecture, dim, t.feature_mode);
  if (!a.model_config.empty()) {
    mc = segnn::load_model_config(a.model_config);
    mc.input_dim = dim;
    mc.feature_mode = t.feature_mode;
  }
  const auto samples = segnn::feature_view(data, t.feature_mode);
  std::vector<std::size_t> all(samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  auto result = segnn::train(samples, all, t, mc);
  const std::string stem = a.model + "-" + std::string(segnn::to_string(t.feature_mode));
  fs::create_directories(l.models());
  result.model.save(l.models() / (stem + ".ckpt"),
                    json{{"seed", c.seed}, {"epoch", t.epochs}, {"train", t}});
  segnn::write_train_log_csv(result.log, l.models() / (stem + ".train.csv"));
  json out = {{"checkpoint", (l.models() / (stem + ".ckpt")).string()},
              {"epochs", t.epochs},
              {"seed", c.seed}};
  if (!result.log.epochs.empty()) {
    out["final_loss"] = result.log.epochs.back().loss;
    out["final_train_accuracy"] = result.log.epochs.back().train_accuracy;
  }
  std::cout << out.dump(2) << '\n';
}

struct EvalArgs {
  std::vector<std::string> models{"gcn"};
  std::string features = "text+type";
  std::size_t folds = 5;
  std::size_t fewshot_epochs = 0;
  TrainingFlags flags;
};

std::string method_name(const std::string& model, const std::string& features) {
  if (model == "gcn" || model == "ggnn") return model + ":" + features;
  return model;
}

segnn::MethodOptions method_options(const Common& c, const TrainingFlags& flags) {
  segnn::MethodOptions o;
  o.train = flags.resolve(c.seed);
  return o;
}

void cmd_evaluate(const Common& c, const EvalArgs& a) {
  const Layout l{c.work};
  segnn::parse_feature_mode(a.features);
  const auto options = method_options(c, a.flags);
  std::vector<std::unique_ptr<segnn::Method>> owned;
  std::vector<const segnn::Method*> methods;
  for (const auto& m : a.models) {
    owned.push_back(segnn::make_method(method_name(m, a.features), options));
    methods.push_back(owned.back().get());
  }
  const auto data = load_dataset(l, c.jobs);
  const auto results = segnn::run_cv(methods, data, a.folds, c.seed, c.jobs);
  fs::create_directories(l.reports() / "predictions");
  segnn::write_report_csv(results, l.reports() / "evaluate.csv");
  json j = segnn::report_json(results, a.folds, c.seed);
  j["community"] = data.community;
  j["train"] = options.train;
  write_json(l.reports() / "evaluate.json", j);
  for (const auto& r : results) {
    std::string file = r.method;
    for (char& ch : file) {
      if (ch == ':' || ch == '+') ch = '_';
    }
    segnn::write_predictions_csv(r.predictions, l.reports() / "predictions" / (file + ".csv"));
  }
  std::ifstream csv(l.reports() / "evaluate.csv");
  std::cout << csv.rdbuf();
}

struct CompareArgs {
  std::string a;
  std::string b;
  std::string features = "text+type";
  TrainingFlags flags;
};

void cmd_compare(const Common& c, const CompareArgs& a) {
  const Layout l{c.work};
  segnn::parse_feature_mode(a.features);
  const auto options = method_options(c, a.flags);
  const auto ma = segnn::make_method(method_name(a.a, a.features), options);
  const auto mb = segnn::make_method(method_name(a.b, a.features), options);
  const auto data = load_dataset(l, c.jobs);
  const auto result = segnn::five_by_two_cv_test(*ma, *mb, data, c.seed, c.jobs);
  json j = segnn::cv_test_json(result, ma->name(), mb->name(), c.seed);
  j["community"] = data.community;
  write_json(l.reports() / "compare.json", j);
  std::cout << j.dump(2) << '\n';
}

void cmd_trend(const Common& c) {
  const Layout l{c.work};
  const auto records = load_records(l);
  const auto outcomes = segnn::question_outcomes(records);
  const auto series = segnn::resolved_trend(outcomes);
  fs::create_directories(l.reports());
  segnn::write_trend_csv(series, l.reports() / "trend.csv");
  json points = json::array();
  for (const auto& p : series) {
    points.push_back({{"year", p.year}, {"questions", p.questions}, {"pct_resolved", p.pct_resolved}});
  }
  const double rho = segnn::trend_spearman(series);
  json j = {{"community", community_of(l)},
            {"series", points},
            {"spearman", std::isnan(rho) ? json(nullptr) : json(rho)},
            {"seed", c.seed}};
  write_json(l.reports() / "trend.json", j);
  std::ifstream csv(l.reports() / "trend.csv");
  std::cout << csv.rdbuf();
  if (!std::isnan(rho)) std::cout << "spearman " << rho << '\n';
}

struct SynthArgs {
  std::string community = "ds";
  std::size_t questions = 0;
  std::size_t users = 0;
  fs::path out;
};

void cmd_synth(const Common& c, const SynthArgs& a) {
  auto profile = segnn::community_profile(a.community);
  if (a.questions > 0) {
    const double ratio = static_cast<double>(a.questions) / static_cast<double>(profile.questions);
    profile.questions = a.questions;
    profile.users = a.users > 0 ? a.users
                                : std::max<std::size_t>(
                                      10, static_cast<std::size_t>(profile.users * ratio));
  } else if (a.users > 0) {
    profile.users = a.users;
  }
  const auto community = segnn::generate_community(profile, c.seed);
  segnn::write_dump_xml(community.records, a.out);
  const auto& e = community.expected;
  json j = {{"community", a.community},
            {"seed", c.seed},
            {"questions", e.n_questions},
            {"answers", e.n_answers},
            {"comments", e.n_comments},
            {"users", e.n_users},
            {"resolved", e.n_resolved},
            {"pct_resolved", e.pct_resolved},
            {"foundation_year", e.foundation_year}};
  write_json(a.out / "expected.json", j);
  std::cout << j.dump(2) << '\n';
}

// ---- error reporting ----

int fail(std::string_view kind, const std::string& message, const std::string& hint, int code) {
  json j = {{"error", kind}, {"message", message}};
  if (!hint.empty()) j["hint"] = hint;
  std::cerr << j.dump() << '\n';
  return code;
}

void add_training_flags(CLI::App* cmd, TrainingFlags& f) {
  cmd->add_option("--config", f.config, "Training config JSON (epochs, batch_size, learning_rate)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--epochs", f.epochs, "Training epochs (default 400)");
  cmd->add_option("--batch-size", f.batch_size, "Mini-batch size (default 32)");
  cmd->add_option("--lr", f.learning_rate, "Adam learning rate (default 1e-3)");
}

}  // namespace

int main(int argc, char** argv) {
  segnn::tune_allocator();
  CLI::App app{"Predict unresolved Stack Exchange questions from communication graphs"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--work", common.work, "Work directory holding stage artifacts")
      ->capture_default_str();
  app.add_option("--seed", common.seed, "Root seed for every random stream")->capture_default_str();
  app.add_option("--jobs", common.jobs, "Worker threads (0 = all cores)")->capture_default_str();

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Parse Posts.xml, Comments.xml and Users.xml");
  c_ingest->add_option("--dump", ingest.dump, "Extracted dump directory")->required();
  c_ingest->add_option("--community", ingest.community, "Community name recorded in outputs")
      ->default_val("unknown");

  BuildArgs build;
  auto* c_build = app.add_subcommand("build-graphs", "Build one communication graph per question");
  c_build->add_option("--subsample", build.subsample,
                      "Keep a class-stratified subsample of this many graphs");

  auto* c_stats = app.add_subcommand("stats", "Print the graph size distribution table");

  FeaturizeArgs featurize;
  auto* c_feat = app.add_subcommand("featurize", "Embed the text of every node");
  c_feat->add_option("--embedder", featurize.embedder, "hash or precomputed")
      ->capture_default_str();
  c_feat->add_option("--embeddings", featurize.embeddings, "SEEMB1 file for --embedder precomputed");
  c_feat->add_option("--dim", featurize.dim, "Hash embedding dimension")->capture_default_str();

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train a GNN on every graph and save a checkpoint");
  c_train->add_option("--model", train.model, "gcn or ggnn")->capture_default_str();
  c_train->add_option("--features", train.features, "text+type, text or type")
      ->capture_default_str();
  c_train->add_option("--model-config", train.model_config, "Model config JSON")
      ->check(CLI::ExistingFile);
  add_training_flags(c_train, train.flags);

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("evaluate", "Stratified k-fold evaluation of one or more methods");
  c_eval->add_option("--model", eval.models,
                     "Method: gcn, ggnn, logreg, majority or fewshot:<m>; repeatable")
      ->capture_default_str();
  c_eval->add_option("--features", eval.features, "Feature mode for gcn and ggnn")
      ->capture_default_str();
  c_eval->add_option("--folds", eval.folds, "Number of folds")->capture_default_str();
  add_training_flags(c_eval, eval.flags);

  CompareArgs compare;
  auto* c_cmp = app.add_subcommand("compare", "5x2cv paired t-test between two methods");
  c_cmp->add_option("--a", compare.a, "First method")->required();
  c_cmp->add_option("--b", compare.b, "Second method")->required();
  c_cmp->add_option("--features", compare.features, "Feature mode for gcn and ggnn")
      ->capture_default_str();
  add_training_flags(c_cmp, compare.flags);

  auto* c_trend = app.add_subcommand("trend", "Share of resolved questions per year");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Write a synthetic dump in the Stack Exchange format");
  c_synth->add_option("--community", synth.community, "Profile: pol, ds or cs")
      ->capture_default_str();
  c_synth->add_option("--questions", synth.questions, "Number of questions (default: full size)");
  c_synth->add_option("--users", synth.users, "Number of users (default: scaled with questions)");
  c_synth->add_option("--out", synth.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), "see segnn --help", 2);
  }
  if (common.jobs == 0) common.jobs = std::max(1u, std::thread::hardware_concurrency());

  try {
    if (c_ingest->parsed()) cmd_ingest(common, ingest);
    if (c_build->parsed()) cmd_build_graphs(common, build);
    if (c_stats->parsed()) cmd_stats(common);
    if (c_feat->parsed()) cmd_featurize(common, featurize);
    if (c_train->parsed()) cmd_train(common, train);
    if (c_eval->parsed()) cmd_evaluate(common, eval);
    if (c_cmp->parsed()) cmd_compare(common, compare);
    if (c_trend->parsed()) cmd_trend(common);
    if (c_synth->parsed()) cmd_synth(common, synth);
  } catch (const MissingArtifact& e) {
    return fail("missing_artifact", e.what(), "run `segnn " + e.stage() + "` first", 3);
  } catch (const segnn::MissingEmbedding& e) {
    return fail("missing_embedding", e.what(), "re-run `segnn featurize` for this corpus", 4);
  } catch (const segnn::SingleClassError& e) {
    return fail("single_class", e.what(), "the training split holds one class only", 4);
  } catch (const segnn::InvalidArgument& e) {
    return fail("invalid_argument", e.what(), "", 2);
  } catch (const segnn::FormatError& e) {
    return fail("format", e.what(), "", 4);
  } catch (const segnn::XmlParseError& e) {
    return fail("xml_parse", e.what(), "", 4);
  } catch (const std::exception& e) {
    return fail("error", e.what(), "", 1);
  }
  return 0;
}
