#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "varconet/checkpoint.hpp"
#include "varconet/config.hpp"
#include "varconet/dataio.hpp"
#include "varconet/error.hpp"
#include "varconet/gradcheck.hpp"
#include "varconet/synth.hpp"
#include "varconet/train.hpp"
#include "varconet/variability.hpp"

namespace varconet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  std::string out;
  std::string cohort;
  std::string checkpoint;
  std::string head;
  std::string baseline;
  std::string target;
  std::string output;
  bool pcc = false;
  bool resume = false;
};

struct Context {
  RunConfig cfg;
  Options opt;
  fs::path out;
  fs::path cohort;
  std::ostream& log;
};

void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream f(file, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + file.string());
  f << text;
  if (!f) throw IoError("write failed for " + file.string());
}

void write_json(const fs::path& file, const json& j) { write_text(file, j.dump(2) + "\n"); }

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

json checkpoint_header(const HyperParams& hp, Eigen::Index regions) {
  json model;
  to_json(model, hp);
  return json{{"model", model}, {"regions", regions}};
}

Encoder load_encoder(const fs::path& file) {
  Checkpoint ckpt = load_checkpoint(file);
  HyperParams hp;
  if (!ckpt.header.hyperparameters.contains("model")) {
    throw FormatError(file.string() + ": checkpoint carries no model hyperparameters");
  }
  from_json(ckpt.header.hyperparameters.at("model"), hp);
  return Encoder(std::move(ckpt.params), hp);
}

fs::path resolve_checkpoint(const Context& ctx) {
  if (!ctx.opt.checkpoint.empty()) return ctx.opt.checkpoint;
  if (!ctx.cfg.paths.checkpoint.empty()) return ctx.cfg.paths.checkpoint;
  const fs::path best = ctx.out / "encoder_best.vcnc";
  return fs::exists(best) ? best : ctx.out / "encoder_final.vcnc";
}

struct Split {
  SubjectSplit ids;
  Cohort train, val, test;
};

Split make_split(const Cohort& cohort, const RunConfig& cfg) {
  Split s;
  s.ids = split_subjects(cohort, cfg.train.n_train, cfg.train.n_val, cfg.train.n_test, cfg.train.seed);
  s.train = select_subjects(cohort, s.ids.train);
  s.val = select_subjects(cohort, s.ids.val);
  s.test = select_subjects(cohort, s.ids.test);
  return s;
}

json split_json(const SubjectSplit& s) {
  return json{{"train", s.train}, {"val", s.val}, {"test", s.test}};
}

// --- synth -------------------------------------------------------------------

void run_synth(Context& ctx) {
  auto [cohort, truth] = generate_cohort(ctx.cfg.synth);
  save_cohort(cohort, ctx.cohort);
  write_json(ctx.out / "ground_truth.json", to_json(truth));
  json synth;
  to_json(synth, ctx.cfg.synth);
  int positives = 0;
  if (cohort.labels)
    for (const auto& [id, l] : *cohort.labels) positives += l;
  write_json(ctx.out / "synth_report.json",
             json{{"config", synth},
                  {"cohort", ctx.cohort.generic_string()},
                  {"subjects", cohort.subjects().size()},
                  {"recordings", cohort.recordings.size()},
                  {"labeled", cohort.labels.has_value()},
                  {"label_1_subjects", positives}});
  ctx.log << "wrote " << cohort.recordings.size() << " recordings to " << ctx.cohort.string() << "\n";
}

// --- train -------------------------------------------------------------------

void run_train(Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const Cohort cohort = load_cohort(ctx.cohort);
  const Split split = make_split(cohort, cfg);

  ValidationHook hook = cfg.train.selection == "probe"
                            ? make_probe_hook(split.train, split.val, cfg.eval.probe_config(), ctx.opt.workers)
                            : make_fingerprint_hook(split.val, cfg.eval.fingerprint_options(true), ctx.opt.workers);
  TrainConfig tc;
  tc.epochs = cfg.train.epochs;
  tc.warmup_epochs = cfg.train.warmup_epochs;
  tc.floor_lr = cfg.train.floor_lr;
  tc.seed = cfg.train.seed;
  tc.workers = ctx.opt.workers;
  tc.hook_stride = cfg.train.hook_stride;

  fs::create_directories(ctx.out);
  std::ofstream log_file(ctx.out / "train_log.jsonl", std::ios::trunc);
  if (!log_file) throw IoError("cannot write " + (ctx.out / "train_log.jsonl").string());
  auto on_epoch = [&](const Encoder&, const EpochLog& e) {
    log_file << to_json(e, hook.metric_name).dump() << "\n" << std::flush;
    ctx.log << "epoch " << e.epoch << " loss " << e.mean_loss;
    if (e.metric) ctx.log << " " << hook.metric_name << " " << *e.metric;
    ctx.log << "\n";
  };
  TrainResult result = train_contrastive(split.train, cfg.model, tc, hook, on_epoch);

  const Eigen::Index regions = result.final_encoder.regions();
  const json header = checkpoint_header(cfg.model, regions);
  save_checkpoint(ctx.out / "encoder_final.vcnc", result.final_encoder.params(), header,
                  std::max(0, cfg.train.epochs - 1));
  json report{{"selection", cfg.train.selection},
              {"metric", hook.metric_name},
              {"epochs", cfg.train.epochs},
              {"split", split_json(split.ids)},
              {"final_loss", result.log.empty() ? json(nullptr) : json(result.log.back().mean_loss)}};
  if (result.best) {
    save_checkpoint(ctx.out / "encoder_best.vcnc", *result.best->encoder, header, result.best->epoch);
    if (result.best->head) {
      save_checkpoint(ctx.out / "head_best.vcnc", *result.best->head, header, result.best->epoch);
    }
    report["best_epoch"] = result.best->epoch;
    report["best_metric"] = result.best->metric;
  }
  write_json(ctx.out / "train_report.json", report);
}

// --- embed -------------------------------------------------------------------

void run_embed(Context& ctx) {
  const Cohort cohort = load_cohort(ctx.cohort);
  EmbeddingTable table;
  std::vector<const Recording*> recs;
  for (const auto& r : cohort.recordings) {
    recs.push_back(&r);
    table.subject_ids.push_back(r.subject_id);
    table.sessions.push_back(r.session_index);
  }
  if (ctx.opt.pcc) {
    if (recs.empty()) throw InvariantError("cohort has no recordings");
    table.values.resize(static_cast<Eigen::Index>(recs.size()), pcc_fc(recs.front()->data).size());
    for (std::size_t i = 0; i < recs.size(); ++i)
      table.values.row(static_cast<Eigen::Index>(i)) = pcc_fc(recs[i]->data).transpose();
  } else {
    const Encoder encoder = load_encoder(resolve_checkpoint(ctx));
    table.values = embed_recordings(encoder, recs, ctx.opt.workers);
  }
  table.regions = recs.empty() ? 0 : static_cast<int>(recs.front()->regions());
  const fs::path file = ctx.opt.output.empty() ? ctx.out / "embeddings.f32" : fs::path(ctx.opt.output);
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  save_embeddings(table, file);
  ctx.log << "wrote " << recs.size() << " embeddings to " << file.string() << "\n";
}

// --- fingerprint -------------------------------------------------------------

void run_fingerprint(Context& ctx) {
  const Cohort cohort = load_cohort(ctx.cohort);
  const Split split = make_split(cohort, ctx.cfg);
  const Encoder encoder = load_encoder(resolve_checkpoint(ctx));
  const FingerprintOptions options = ctx.cfg.eval.fingerprint_options();

  const FingerprintReport ours = fingerprint_protocol(split.test, encoder_embedder(encoder), options);
  const FingerprintReport pcc =
      fingerprint_protocol(split.test, [](const Matrix& x) { return pcc_fc(x); }, options);

  write_json(ctx.out / "fingerprint_report.json",
             json{{"subjects", split.ids.test.size()}, {"varconet", to_json(ours)}, {"pcc", to_json(pcc)}});
  std::string csv = "method,combination,mean,sd\n";
  for (const auto& [name, rep] : {std::pair{"varconet", &ours}, std::pair{"pcc", &pcc}}) {
    for (const auto& c : rep->combinations)
      csv += std::string(name) + "," + c.label() + "," + fmt(c.mean) + "," + fmt(c.sd) + "\n";
  }
  write_text(ctx.out / "fingerprint.csv", csv);
  ctx.log << "objective varconet " << ours.objective << " pcc " << pcc.objective << "\n";
}

// --- classify ----------------------------------------------------------------

void run_classify(Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const Cohort cohort = load_cohort(ctx.cohort);
  if (!cohort.labels) throw InvariantError(ctx.cohort.string() + ": cohort has no labels");
  const Split split = make_split(cohort, cfg);
  const Encoder encoder = load_encoder(resolve_checkpoint(ctx));

  ParamStore head;
  const fs::path head_file = ctx.opt.head.empty() ? ctx.out / "head_best.vcnc" : fs::path(ctx.opt.head);
  std::string head_source;
  if (fs::exists(head_file)) {
    head = load_checkpoint(head_file).params;
    head_source = head_file.generic_string();
  } else {
    auto [tr, ytr] = labeled_recordings(split.train);
    auto [va, yva] = labeled_recordings(split.val);
    ProbeResult probe = train_linear_probe(embed_recordings(encoder, tr, ctx.opt.workers), ytr,
                                           embed_recordings(encoder, va, ctx.opt.workers), yva,
                                           cfg.eval.probe_config());
    head = std::move(probe.head);
    head_source = "probe";
  }

  auto [test, ytest] = labeled_recordings(split.test);
  const std::vector<double> probs = predict_proba(head, embed_recordings(encoder, test, ctx.opt.workers));
  const ClassificationReport metrics = classification_metrics(probs, ytest);

  const double threshold = metrics.threshold;
  Predictor predictor = [&](const Matrix& x) {
    Matrix row = encoder.fc_vector(x).transpose();
    return predict_proba(head, row).front() > threshold ? 1 : 0;
  };
  std::vector<Recording> test_recs;
  for (const Recording* r : test) test_recs.push_back(*r);
  const StabilityReport stability = stability_eval({predictor}, test_recs, cfg.eval.window_minutes);

  write_json(ctx.out / "classify_report.json",
             json{{"head", head_source},
                  {"test_recordings", test.size()},
                  {"metrics", to_json(metrics)},
                  {"stability",
                   {{"percent_changed", stability.percent_changed},
                    {"instances", stability.instances},
                    {"unstable", stability.unstable},
                    {"skipped", stability.skipped}}}});
  std::string csv = "subject_id,session,label,probability\n";
  for (std::size_t i = 0; i < test.size(); ++i) {
    csv += test[i]->subject_id + "," + std::to_string(test[i]->session_index) + "," +
           std::to_string(ytest[i]) + "," + fmt(probs[i]) + "\n";
  }
  write_text(ctx.out / "predictions.csv", csv);
  ctx.log << "test AUC " << metrics.auc << " F1 " << metrics.f1 << "\n";
}

// --- importance --------------------------------------------------------------

void run_importance(Context& ctx) {
  const fs::path head_file = ctx.opt.head.empty() ? ctx.out / "head_best.vcnc" : fs::path(ctx.opt.head);
  const ParamStore head = load_checkpoint(head_file).params;
  const Matrix w = head.matrix(head.index_of("head.weight"));
  const ImportanceVector imp = feature_importance({w}, ctx.cfg.eval.top_k);

  json ranking = json::array();
  std::string csv = "rank,index,region_i,region_j,importance\n";
  for (std::size_t r = 0; r < imp.ranking.size(); ++r) {
    const RankedEdge& e = imp.ranking[r];
    ranking.push_back({{"index", e.index}, {"region_i", e.region_i}, {"region_j", e.region_j},
                       {"importance", e.importance}});
    csv += std::to_string(r + 1) + "," + std::to_string(e.index) + "," + std::to_string(e.region_i) +
           "," + std::to_string(e.region_j) + "," + fmt(e.importance) + "\n";
  }
  write_json(ctx.out / "importance_report.json",
             json{{"head", head_file.generic_string()}, {"connections", imp.values.size()}, {"top", ranking}});
  write_text(ctx.out / "importance.csv", csv);
}

// --- icc ---------------------------------------------------------------------

// N x D matrices per session for subjects present with both sessions in
// both tables, in sorted subject order.
std::vector<Matrix> session_blocks(const EmbeddingTable& t, const std::vector<std::string>& subjects) {
  std::vector<Matrix> blocks(2, Matrix(static_cast<Eigen::Index>(subjects.size()), t.values.cols()));
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    for (std::size_t r = 0; r < t.subject_ids.size(); ++r) {
      if (t.subject_ids[r] == subjects[s]) {
        blocks[static_cast<std::size_t>(t.sessions[r])].row(static_cast<Eigen::Index>(s)) =
            t.values.row(static_cast<Eigen::Index>(r));
      }
    }
  }
  return blocks;
}

std::set<std::string> paired_subjects(const EmbeddingTable& t) {
  std::map<std::string, int> seen;
  for (std::size_t r = 0; r < t.subject_ids.size(); ++r) seen[t.subject_ids[r]] |= 1 << t.sessions[r];
  std::set<std::string> out;
  for (const auto& [id, mask] : seen)
    if (mask == 3) out.insert(id);
  return out;
}

void run_icc(Context& ctx) {
  if (ctx.opt.baseline.empty() || ctx.opt.target.empty()) {
    throw ConfigError("icc needs --baseline and --target embedding files");
  }
  const EmbeddingTable base = load_embeddings(ctx.opt.baseline);
  const EmbeddingTable target = load_embeddings(ctx.opt.target);
  if (base.values.cols() != target.values.cols()) {
    throw InvariantError("embedding widths differ: " + std::to_string(base.values.cols()) + " vs " +
                         std::to_string(target.values.cols()));
  }
  const auto a = paired_subjects(base), b = paired_subjects(target);
  std::vector<std::string> subjects;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(subjects));
  if (subjects.size() < 2) throw DegenerateError("icc needs at least 2 subjects with both sessions in both files");

  const VariationField fb = variation_field(session_blocks(base, subjects));
  const VariationField ft = variation_field(session_blocks(target, subjects));
  const auto deltas = delta_icc_flow(fb, ft);
  const FlowSummary summary = summarize_flow(fb, ft, deltas);

  const auto regions = regions_for_pairs(static_cast<Eigen::Index>(deltas.size()));
  std::string csv =
      "index,region_i,region_j,icc_baseline,icc_target,within_baseline,within_target,between_baseline,"
      "between_target,delta_icc,quadrant\n";
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    const auto [i, j] = pair_of_index(static_cast<Eigen::Index>(k), regions);
    const auto& cb = fb.connections[k];
    const auto& ct = ft.connections[k];
    csv += std::to_string(k) + "," + std::to_string(i) + "," + std::to_string(j) + "," + fmt(cb.icc) + "," +
           fmt(ct.icc) + "," + fmt(cb.within_var) + "," + fmt(ct.within_var) + "," + fmt(cb.between_var) +
           "," + fmt(ct.between_var) + "," + fmt(deltas[k].delta_icc) + "," + to_string(deltas[k].quadrant) +
           "\n";
  }
  json report = to_json(summary);
  report["subjects"] = subjects.size();
  report["connections"] = deltas.size();
  write_json(ctx.out / "icc_report.json", report);
  write_text(ctx.out / "icc_connections.csv", csv);
}

// --- tune --------------------------------------------------------------------

void run_tune(Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const Cohort cohort = load_cohort(ctx.cohort);
  const Split split = make_split(cohort, cfg);
  if (split.train.recordings.empty()) throw InvariantError("tune needs training subjects");
  const int regions = static_cast<int>(split.train.recordings.front().regions());
  const SearchSpace space = cfg.tune.search_space(regions);

  const ObjectiveFn objective = [&](const Assignment& a, std::uint64_t seed) {
    HyperParams hp = cfg.model;
    hp.n_layers = static_cast<int>(a[space.index_of("n_layers")]);
    hp.n_heads = static_cast<int>(a[space.index_of("n_heads")]);
    hp.ff_dim = static_cast<int>(a[space.index_of("ff_dim")]);
    hp.batch_size = static_cast<int>(a[space.index_of("batch_size")]);
    hp.lr = a[space.index_of("lr")];
    hp.tau = a[space.index_of("tau")];
    TrainConfig tc;
    tc.epochs = cfg.tune.epochs;
    tc.warmup_epochs = std::min(cfg.train.warmup_epochs, cfg.tune.epochs);
    tc.seed = seed;
    tc.workers = ctx.opt.workers;
    tc.hook_stride = cfg.train.hook_stride;
    const TrainResult r = train_contrastive(
        split.train, hp, tc, make_fingerprint_hook(split.val, cfg.eval.fingerprint_options(true), ctx.opt.workers));
    if (!r.best) throw InvariantError("no validation epoch ran");
    ctx.log << "trial objective " << r.best->metric << "\n";
    return r.best->metric;
  };

  fs::create_directories(ctx.out);
  const fs::path log = ctx.out / "trials.jsonl";
  std::vector<TrialRecord> history;
  if (ctx.opt.resume && fs::exists(log)) {
    history = load_history(space, log);
  } else {
    write_text(log, "");
  }
  const SearchResult result =
      run_search(space, objective, cfg.tune.n_trials, cfg.train.seed, cfg.tune.tpe(), history, log);

  std::string csv = "trial,";
  for (const auto& d : space.dimensions) csv += d.name + ",";
  csv += "status,objective\n";
  for (std::size_t t = 0; t < result.history.size(); ++t) {
    const auto& rec = result.history[t];
    csv += std::to_string(t) + ",";
    for (double v : rec.assignment) csv += fmt(v) + ",";
    csv += std::string(rec.status == TrialStatus::Complete ? "complete," + fmt(rec.objective) : "failed,") + "\n";
  }
  write_text(ctx.out / "trials.csv", csv);

  json best = json::object();
  for (std::size_t d = 0; d < result.best.size(); ++d) best[space.dimensions[d].name] = result.best[d];
  write_json(ctx.out / "tune_report.json", json{{"trials", result.history.size()},
                                                 {"best_assignment", best},
                                                 {"best_objective", result.best_objective},
                                                 {"running_best", result.running_best}});
}

// --- gradcheck ---------------------------------------------------------------

bool run_gradcheck_cmd(Context& ctx) {
  GradcheckOptions o;
  if (ctx.opt.seed) o.seed = *ctx.opt.seed;
  const auto rows = run_gradcheck(o);
  bool ok = true;
  ctx.log << std::left << std::setw(22) << "layer" << std::setw(8) << "points" << std::setw(12) << "coords"
          << std::setw(14) << "max_rel_err" << "result\n";
  json j = json::array();
  for (const auto& r : rows) {
    ok = ok && r.passed;
    std::ostringstream err;
    err << std::scientific << std::setprecision(3) << r.max_rel_error;
    ctx.log << std::left << std::setw(22) << r.name << std::setw(8) << r.points << std::setw(12) << r.coordinates
            << std::setw(14) << err.str() << (r.passed ? "PASS" : "FAIL") << "\n";
    j.push_back({{"name", r.name}, {"points", r.points}, {"coordinates", r.coordinates},
                 {"max_rel_error", r.max_rel_error}, {"passed", r.passed}});
  }
  if (!ctx.opt.out.empty()) write_json(ctx.out / "gradcheck_report.json", json{{"tolerance", o.tolerance}, {"rows", j}});
  return ok;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"VarCoNet: contrastive functional-connectome encoder and evaluation suite", "varconet"};
  app.require_subcommand(1);
  Options opt;
  std::uint64_t seed = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Seed for synthesis, splitting and training");
    sub->add_option("--workers", opt.workers, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", opt.out, "Output directory for reports");
    sub->add_option("--cohort", opt.cohort, "Cohort directory (overrides paths.cohort)");
  };
  auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort");
  auto* train = app.add_subcommand("train", "Contrastive training with per-epoch validation");
  auto* embed = app.add_subcommand("embed", "Write FC-vector embeddings of a cohort");
  auto* fingerprint = app.add_subcommand("fingerprint", "Subject fingerprinting on the test split");
  auto* classify = app.add_subcommand("classify", "Linear-probe classification on the test split");
  auto* tune = app.add_subcommand("tune", "TPE hyperparameter search");
  auto* icc = app.add_subcommand("icc", "ICC variation-field comparison of two embedding files");
  auto* importance = app.add_subcommand("importance", "Connection importance from a linear head");
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  for (auto* s : {synth, train, embed, fingerprint, classify, tune, icc, importance, gradcheck}) common(s);
  for (auto* s : {embed, fingerprint, classify}) s->add_option("--checkpoint", opt.checkpoint, "Encoder checkpoint");
  for (auto* s : {classify, importance}) s->add_option("--head", opt.head, "Linear head checkpoint");
  embed->add_flag("--pcc", opt.pcc, "Use Pearson FC instead of the encoder");
  embed->add_option("--output", opt.output, "Embedding file (default <out>/embeddings.f32)");
  icc->add_option("--baseline", opt.baseline, "Baseline embedding file")->check(CLI::ExistingFile);
  icc->add_option("--target", opt.target, "Target embedding file")->check(CLI::ExistingFile);
  tune->add_flag("--resume", opt.resume, "Continue from <out>/trials.jsonl");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }
  for (auto* s : app.get_subcommands())
    if (s->count("--seed")) opt.seed = seed;

  try {
    RunConfig cfg = opt.config.empty() ? parse_config(json::object()) : parse_config_file(opt.config);
    if (opt.seed) {
      cfg.synth.seed = *opt.seed;
      cfg.train.seed = *opt.seed;
    }
    Context ctx{cfg, opt, opt.out.empty() ? fs::path(cfg.paths.out) : fs::path(opt.out),
                opt.cohort.empty() ? fs::path(cfg.paths.cohort) : fs::path(opt.cohort), out};
    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "synth") run_synth(ctx);
    else if (name == "train") run_train(ctx);
    else if (name == "embed") run_embed(ctx);
    else if (name == "fingerprint") run_fingerprint(ctx);
    else if (name == "classify") run_classify(ctx);
    else if (name == "tune") run_tune(ctx);
    else if (name == "icc") run_icc(ctx);
    else if (name == "importance") run_importance(ctx);
    else if (name == "gradcheck") return run_gradcheck_cmd(ctx) ? 0 : 1;
    return 0;
  } catch (const Error& e) {
    err << "varconet: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "varconet: " << e.what() << "\n";
    return 1;
  }
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace varconet::cli
