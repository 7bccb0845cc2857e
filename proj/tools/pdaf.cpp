// tools/pdaf.cpp

// Copyright 2026  PDAF authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Command line front end: featurize, priors, train, embed, score, ablate and
// a synthetic corpus generator. Options may come from a key = value config
// file; explicit flags always win. Exit codes: 0 success, 1 bad input or
// configuration, 2 runtime failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pdaf/fixture.hpp"
#include "pdaf/pipeline.hpp"

namespace {

using namespace pdaf;

// Shared configuration options. Every value can come from the config file;
// a flag that was actually passed overrides it.
struct CfgOpts {
  std::string config;
  std::string corpus;
  std::string work;
  std::string estimator;
  uint64_t seed = 0;
  double lambda = 0.0;
  int epochs = 0;
  int batch = 0;
  CLI::Option *o_corpus = nullptr;
  CLI::Option *o_work = nullptr;
  CLI::Option *o_seed = nullptr;
  CLI::Option *o_est = nullptr;
  CLI::Option *o_lambda = nullptr;
  CLI::Option *o_epochs = nullptr;
  CLI::Option *o_batch = nullptr;

  void attach(CLI::App *sub, bool with_train_flags) {
    sub->add_option("--config", config, "key = value configuration file");
    o_corpus = sub->add_option("--corpus-dir", corpus, "corpus directory");
    o_work = sub->add_option("--work-dir", work, "artifact directory");
    o_seed = sub->add_option("--seed", seed, "master seed");
    o_est = sub->add_option("--estimator", estimator,
                            "prior estimator: baseline|pop|pup|pfp|fup|learned");
    o_lambda = sub->add_option("--lambda", lambda, "debias strength, >= 0");
    if (with_train_flags) {
      o_epochs = sub->add_option("--epochs", epochs, "training epochs");
      o_batch = sub->add_option("--batch-size", batch, "utterances per optimizer step");
    }
  }

  RunConfig materialize() const {
    RunConfig rc;
    if (!config.empty()) load_config_file(rc, config);
    if (o_corpus != nullptr && *o_corpus) rc.corpus_dir = corpus;
    if (o_work != nullptr && *o_work) rc.work_dir = work;
    if (o_seed != nullptr && *o_seed) rc.seed = seed;
    if (o_est != nullptr && *o_est) rc.estimator = parse_estimator(estimator);
    if (o_lambda != nullptr && *o_lambda) rc.lambda = lambda;
    if (o_epochs != nullptr && *o_epochs) rc.train.epochs = epochs;
    if (o_batch != nullptr && *o_batch) rc.train.batch_size = batch;
    return rc;
  }
};

void check_threads_env() {
  const char *env = std::getenv("PDAF_THREADS");
  if (env == nullptr) return;
  char *end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || v < 1) {
    throw ValidationError(std::string("PDAF_THREADS must be a positive integer, got '") + env +
                          "'");
  }
}

int cmd_make_fixture(const std::string &out, int speakers, int utts, uint64_t seed,
                     int sample_rate) {
  FixtureConfig fc;
  fc.out_dir = out;
  fc.n_speakers = speakers;
  fc.utts_per_speaker = utts;
  fc.seed = seed;
  fc.sample_rate = sample_rate;
  const FixtureSummary sum = make_fixture(fc);
  std::cout << "wrote " << sum.utts.size() << " utterances under " << out << "\n";
  return 0;
}

int cmd_featurize(const CfgOpts &opts) {
  const RunConfig rc = opts.materialize();
  const FeaturizeResult res = featurize_corpus(rc, &std::cerr);
  std::cout << "featurize: " << res.n_computed << " computed, " << res.n_reused << " reused, "
            << res.failures.size() << " failed; manifest " << manifest_path(rc) << "\n";
  if (!res.failures.empty()) {
    std::cerr << "featurize: " << res.failures.size() << " utterance(s) failed\n";
    return 2;
  }
  return 0;
}

int cmd_priors(const CfgOpts &opts, const std::string &utt, const std::string &out) {
  const RunConfig rc = opts.materialize();
  const Manifest manifest = read_manifest(manifest_path(rc));
  const AlignmentMap alignments = load_alignments(rc);

  PriorTable table;
  switch (rc.estimator) {
    case EstimatorKind::kPop:
    case EstimatorKind::kPfp: {
      const std::vector<Utterance> train_set = load_utterances(rc, manifest, alignments, "train");
      table = *corpus_prior_table(rc.estimator, train_set);
      break;
    }
    case EstimatorKind::kPup:
    case EstimatorKind::kFup: {
      if (utt.empty()) {
        throw ValidationError("per-utterance estimators need --utt");
      }
      const std::vector<Utterance> all = load_utterances(rc, manifest, alignments, "all");
      const Utterance *found = nullptr;
      for (const Utterance &u : all) {
        if (u.utt == utt) found = &u;
      }
      if (found == nullptr) throw ValidationError("utterance not in manifest: " + utt);
      table = rc.estimator == EstimatorKind::kPup ? pup(found->segments) : fup(found->labels);
      break;
    }
    case EstimatorKind::kBaseline:
    case EstimatorKind::kLearned:
      throw ValidationError("estimator " + estimator_name(rc.estimator) +
                            " has no counting prior to emit");
  }

  const nlohmann::json j = {{"feature_fingerprint", rc.feature_fingerprint()},
                            {"seed", rc.seed},
                            {"utt", utt},
                            {"table", prior_table_to_json(table)}};
  std::ofstream os(out, std::ios::trunc);
  if (!os) throw Error("cannot write " + out);
  os << j.dump(2) << "\n";
  std::cout << "priors: " << estimator_name(table.estimator) << " table -> " << out << "\n";
  return 0;
}

int cmd_train(const CfgOpts &opts, std::string out_model) {
  RunConfig rc = opts.materialize();
  // The baseline ablation is exactly "no debias term": pin lambda to zero no
  // matter what the config file says.
  if (rc.estimator == EstimatorKind::kBaseline) rc.lambda = 0.0;
  if (out_model.empty()) out_model = rc.work_dir + "/model.ckpt";
  const TrainPipelineResult res = train_pipeline(rc, out_model, &std::cerr);
  std::cout << "train: " << res.speakers.size() << " speakers, best epoch "
            << res.train.best_epoch << " loss " << res.train.best_loss << ", model "
            << res.model_path << "\n";
  return 0;
}

int cmd_embed(const CfgOpts &opts, const std::string &model_path, const std::string &split,
              const std::string &ablate_spec, std::string condition, std::string out) {
  const RunConfig rc = opts.materialize();
  PdafModel model = load_checkpoint(model_path);
  const std::set<int> ablate = resolve_ablation_spec(ablate_spec);
  if (condition.empty()) condition = ablate_spec.empty() ? "none" : ablate_spec;
  if (out.empty()) out = rc.work_dir + "/embeddings.jsonl";
  const EmbedPipelineResult res =
      embed_pipeline(model, rc, split, ablate, condition, out, &std::cerr);
  std::cout << "embed: " << res.n_embedded << " utterances (" << res.skipped.size()
            << " skipped) -> " << out << "\n";
  return 0;
}

int cmd_score(const std::string &embeddings_path, const std::string &trials_path, int make_n,
              uint64_t seed, const std::string &out_scores, const std::string &out_report) {
  const EmbeddingSet emb = read_embeddings(embeddings_path);
  std::vector<Trial> trials;
  if (std::filesystem::exists(trials_path)) {
    trials = read_trials(trials_path);
  } else if (make_n > 0) {
    EmbeddingSet test_only = emb;
    // Trials come from held-out utterances when the file has any.
    bool any_test = false;
    for (const auto &[utt, split] : emb.split_of) any_test = any_test || split == "test";
    if (any_test) {
      test_only.order.clear();
      for (const std::string &utt : emb.order) {
        if (emb.split_of.at(utt) == "test") test_only.order.push_back(utt);
      }
    }
    trials = make_trials_from_embeddings(test_only, make_n, seed);
    write_trials(trials_path, trials);
    std::cerr << "score: wrote " << trials.size() << " trials to " << trials_path << "\n";
  } else {
    throw ValidationError("trial file " + trials_path +
                          " does not exist; pass --make-trials to generate it");
  }

  const ScorePipelineResult res = score_trials(emb, trials);
  if (!out_scores.empty()) write_score_csv(out_scores, res.scores);
  if (!out_report.empty()) {
    const nlohmann::json j = {{"eer", res.report.eer},
                              {"threshold", res.report.threshold},
                              {"n_target", res.report.n_target},
                              {"n_nontarget", res.report.n_nontarget},
                              {"model_fingerprint", emb.header.value("model_fingerprint", "")},
                              {"feature_fingerprint", emb.header.value("feature_fingerprint", "")},
                              {"estimator", emb.header.value("estimator", "")},
                              {"lambda", emb.header.value("lambda", 0.0)},
                              {"seed", emb.header.value("seed", 0)},
                              {"condition", emb.header.value("condition", "")}};
    std::ofstream os(out_report, std::ios::trunc);
    if (!os) throw Error("cannot write " + out_report);
    os << j.dump(2) << "\n";
  }
  std::cout << "score: eer " << res.report.eer * 100.0 << "% over " << trials.size()
            << " trials (threshold " << res.report.threshold << ")\n";
  return 0;
}

int cmd_ablate(const CfgOpts &opts, const std::string &model_path, const std::string &trials_path,
               const std::vector<std::string> &classes, const std::vector<std::string> &phonemes,
               bool each_class, bool each_phoneme, std::string out_dir, bool dump_scores) {
  const RunConfig rc = opts.materialize();
  PdafModel model = load_checkpoint(model_path);
  const std::vector<Trial> trials = read_trials(trials_path);
  if (out_dir.empty()) out_dir = rc.work_dir;
  std::filesystem::create_directories(out_dir);

  std::vector<AblationCondition> conditions;
  for (const std::string &c : classes) conditions.push_back({c, resolve_ablation_spec(c)});
  for (const std::string &p : phonemes) conditions.push_back({p, resolve_ablation_spec(p)});
  if (each_class) {
    for (const auto &[name, cls] : phonetic_class_names()) {
      conditions.push_back({name, resolve_ablation_spec(name)});
    }
  }
  if (each_phoneme) {
    const auto &inv = PhonemeInventory::get();
    for (const std::string &sym : inv.symbols()) {
      if (sym != "SIL") conditions.push_back({sym, {inv.index_of(sym)}});
    }
  }
  if (conditions.empty()) {
    throw ValidationError("no ablation conditions; pass --class, --phoneme, --each-class or "
                          "--each-phoneme");
  }

  const AblationResult res = run_ablation(model, rc, trials, conditions);
  for (const std::string &w : res.warnings) std::cerr << "ablate: " << w << "\n";
  write_ablation_csv(out_dir + "/ablation.csv", res.rows);
  {
    std::ofstream os(out_dir + "/ablation.json", std::ios::trunc);
    if (!os) throw Error("cannot write " + out_dir + "/ablation.json");
    os << ablation_report_json(res, model, static_cast<int64_t>(trials.size())).dump(2) << "\n";
  }
  if (dump_scores) {
    for (const auto &[condition, scores] : res.scores) {
      write_score_csv(out_dir + "/scores_" + condition + ".csv", scores);
    }
  }
  for (const AblationRow &row : res.rows) {
    std::cout << "ablate: " << row.condition << " eer " << row.eer * 100.0 << "% (delta "
              << row.delta_pp << " pp, " << row.n_trials << " trials)\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"phoneme-debiased attention speaker embedding toolkit"};
  app.require_subcommand(1);

  struct {
    std::string out;
    int speakers = 8;
    int utts = 20;
    uint64_t seed = 7;
    int sample_rate = 16000;
  } fx;
  CLI::App *c_fixture = app.add_subcommand("make-fixture", "generate a synthetic labelled corpus");
  c_fixture->add_option("--out", fx.out, "corpus output directory")->required();
  c_fixture->add_option("--speakers", fx.speakers, "number of speakers");
  c_fixture->add_option("--utts", fx.utts, "utterances per speaker");
  c_fixture->add_option("--seed", fx.seed, "generation seed");
  c_fixture->add_option("--sample-rate", fx.sample_rate, "sample rate in Hz");

  CfgOpts fz;
  CLI::App *c_featurize = app.add_subcommand("featurize", "cache log-mel features for a corpus");
  fz.attach(c_featurize, false);

  CfgOpts pr;
  std::string pr_utt, pr_out = "priors.json";
  CLI::App *c_priors = app.add_subcommand("priors", "emit a phoneme prior table");
  pr.attach(c_priors, false);
  c_priors->add_option("--utt", pr_utt, "utterance id for per-utterance estimators");
  c_priors->add_option("--out", pr_out, "output JSON path");

  CfgOpts tr;
  std::string tr_out;
  CLI::App *c_train = app.add_subcommand("train", "train a speaker embedding model");
  tr.attach(c_train, true);
  c_train->add_option("--out", tr_out, "model checkpoint path (default work_dir/model.ckpt)");

  CfgOpts em;
  std::string em_model, em_split = "test", em_ablate, em_condition, em_out;
  CLI::App *c_embed = app.add_subcommand("embed", "embed utterances with a trained model");
  em.attach(c_embed, false);
  c_embed->add_option("--model", em_model, "checkpoint path")->required();
  c_embed->add_option("--split", em_split, "train|test|all")
      ->check(CLI::IsMember({"train", "test", "all"}));
  c_embed->add_option("--ablate", em_ablate, "phonetic class name or comma separated symbols");
  c_embed->add_option("--condition", em_condition, "condition label stored in the output");
  c_embed->add_option("--out", em_out, "embeddings output path");

  std::string sc_emb, sc_trials, sc_out = "scores.csv", sc_report;
  int sc_make = 0;
  uint64_t sc_seed = 7;
  CLI::App *c_score = app.add_subcommand("score", "score verification trials on embeddings");
  c_score->add_option("--embeddings", sc_emb, "embeddings file")->required();
  c_score->add_option("--trials", sc_trials, "trial list path")->required();
  c_score->add_option("--make-trials", sc_make,
                      "generate this many target trials per speaker if the trial file is missing");
  c_score->add_option("--seed", sc_seed, "seed for trial generation");
  c_score->add_option("--out", sc_out, "score dump CSV path");
  c_score->add_option("--report", sc_report, "EER report JSON path");

  CfgOpts ab;
  std::string ab_model, ab_trials, ab_out_dir;
  std::vector<std::string> ab_classes, ab_phonemes;
  bool ab_each_class = false, ab_each_phoneme = false, ab_dump = false;
  CLI::App *c_ablate = app.add_subcommand("ablate", "masking study over phonemes or classes");
  ab.attach(c_ablate, false);
  c_ablate->add_option("--model", ab_model, "checkpoint path")->required();
  c_ablate->add_option("--trials", ab_trials, "trial list path")->required();
  c_ablate->add_option("--class", ab_classes, "phonetic class to mask (repeatable)");
  c_ablate->add_option("--phoneme", ab_phonemes, "phoneme symbols to mask (repeatable)");
  c_ablate->add_flag("--each-class", ab_each_class, "run every phonetic class");
  c_ablate->add_flag("--each-phoneme", ab_each_phoneme, "run every phoneme separately");
  c_ablate->add_option("--out-dir", ab_out_dir, "report directory (default work_dir)");
  c_ablate->add_flag("--dump-scores", ab_dump, "write per-condition score CSVs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    check_threads_env();
    if (app.got_subcommand(c_fixture)) {
      return cmd_make_fixture(fx.out, fx.speakers, fx.utts, fx.seed, fx.sample_rate);
    }
    if (app.got_subcommand(c_featurize)) return cmd_featurize(fz);
    if (app.got_subcommand(c_priors)) return cmd_priors(pr, pr_utt, pr_out);
    if (app.got_subcommand(c_train)) return cmd_train(tr, tr_out);
    if (app.got_subcommand(c_embed)) {
      return cmd_embed(em, em_model, em_split, em_ablate, em_condition, em_out);
    }
    if (app.got_subcommand(c_score)) {
      return cmd_score(sc_emb, sc_trials, sc_make, sc_seed, sc_out, sc_report);
    }
    if (app.got_subcommand(c_ablate)) {
      return cmd_ablate(ab, ab_model, ab_trials, ab_classes, ab_phonemes, ab_each_class,
                        ab_each_phoneme, ab_out_dir, ab_dump);
    }
    std::cerr << "error: no subcommand selected\n";
    return 1;
  } catch (const ValidationError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DomainError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DimensionError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const UnsupportedFormatError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const VersionError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception &e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
}
