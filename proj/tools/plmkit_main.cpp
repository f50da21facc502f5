// plmkit: protein language-model toolkit CLI.
// Subcommands wire the library into a reproducible pipeline: corpus
// preparation, denoising pre-training, embedding extraction, supervised
// heads, evaluation, redundancy filtering, projections, and benchmarks.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "plmkit/bench.hpp"
#include "plmkit/embed.hpp"
#include "plmkit/heads.hpp"
#include "plmkit/metrics.hpp"
#include "plmkit/pretrain.hpp"
#include "plmkit/redundancy.hpp"
#include "plmkit/viz.hpp"

using namespace plmkit;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

// ---- shared helpers ----

void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed,
                         const std::string& context) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw UserError("unknown key '" + key + "' in " + context);
  }
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot open config file: " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UserError("bad JSON in " + path + ": " + e.what());
  }
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag,
                           const std::optional<std::uint64_t>& config = {}) {
  if (flag) return *flag;
  if (const char* env = std::getenv("PROTLMKIT_SEED")) {
    try {
      return std::stoull(env);
    } catch (...) {
      throw UserError("PROTLMKIT_SEED is not a number");
    }
  }
  if (config) return *config;
  return 42;
}

// every command records the resolved configuration next to its output
void write_manifest(const std::string& out_path, const std::string& command,
                    const json& resolved) {
  namespace fs = std::filesystem;
  fs::path manifest;
  if (fs::is_directory(out_path))
    manifest = fs::path(out_path) / "run.json";
  else
    manifest = fs::path(out_path + ".run.json");
  json j{{"tool", "plmkit"},
         {"version", kToolVersion},
         {"command", command},
         {"config", resolved}};
  std::ofstream out(manifest);
  if (!out) throw UserError("cannot write manifest: " + manifest.string());
  out << j.dump(2) << '\n';
}

std::vector<SequenceRecord> read_fasta_arg(const std::string& in_path) {
  if (in_path == "-") return parse_fasta(std::cin);
  return parse_fasta_file(in_path);
}

EncoderConfig encoder_config_from_json(const json& j) {
  reject_unknown_keys(j, {"layers", "d_model", "ff_width", "heads", "positional",
                          "max_positions", "rel_buckets", "rel_max_distance",
                          "share_layers", "dropout"},
                      "encoder config");
  EncoderConfig cfg;
  cfg.layers = j.value("layers", cfg.layers);
  cfg.d_model = j.value("d_model", cfg.d_model);
  cfg.ff_width = j.value("ff_width", cfg.ff_width);
  cfg.heads = j.value("heads", cfg.heads);
  if (j.contains("positional"))
    cfg.positional = positional_from_name(j.at("positional").get<std::string>());
  cfg.max_positions = j.value("max_positions", cfg.max_positions);
  cfg.rel_buckets = j.value("rel_buckets", cfg.rel_buckets);
  cfg.rel_max_distance = j.value("rel_max_distance", cfg.rel_max_distance);
  cfg.share_layers = j.value("share_layers", cfg.share_layers);
  cfg.dropout = j.value("dropout", cfg.dropout);
  cfg.validate();
  return cfg;
}

json encoder_config_to_json(const EncoderConfig& c) {
  return json{{"layers", c.layers},
              {"d_model", c.d_model},
              {"ff_width", c.ff_width},
              {"heads", c.heads},
              {"positional", positional_name(c.positional)},
              {"max_positions", c.max_positions},
              {"rel_buckets", c.rel_buckets},
              {"rel_max_distance", c.rel_max_distance},
              {"share_layers", c.share_layers},
              {"dropout", c.dropout}};
}

std::vector<std::pair<std::string, Eigen::RowVectorXf>> load_pooled(
    const std::string& path) {
  auto file = read_embedding_file(path);
  std::vector<std::pair<std::string, Eigen::RowVectorXf>> out;
  for (const auto& rec : file.records) {
    if (rec.values.rows() != 1)
      throw UserError("expected pooled embeddings (1 row per protein) in " + path +
                      "; got " + std::to_string(rec.values.rows()) + " rows for '" +
                      rec.id + "'");
    out.emplace_back(rec.id, rec.values.row(0));
  }
  return out;
}

// ---- subcommand implementations ----

int run_prepare(const std::string& in_path, std::uint32_t shards,
                const std::string& out_dir) {
  auto records = read_fasta_arg(in_path);
  if (records.empty()) throw UserError("no sequences in " + in_path);
  std::vector<TokenSeq> tokens;
  tokens.reserve(records.size());
  for (const auto& r : records) tokens.push_back(tokenize(r));
  std::filesystem::create_directories(out_dir);
  auto written = write_shards(tokens, shards, out_dir);
  std::size_t total = 0;
  for (const auto& s : written) total += s.record_count;
  write_manifest(out_dir, "prepare",
                 json{{"in", in_path},
                      {"shards", shards},
                      {"out", out_dir},
                      {"records", total}});
  std::cout << "wrote " << written.size() << " shards, " << total << " records to "
            << out_dir << "\n";
  return 0;
}

int run_pretrain(const std::string& config_path, const std::string& out_path,
                 int workers, const std::optional<std::uint64_t>& seed_flag,
                 const std::string& log_path) {
  const json j = load_json_file(config_path);
  reject_unknown_keys(j, {"data_dir", "encoder", "optimizer", "optimizer_hyper",
                          "schedule", "corruption", "phases", "seed", "log_every",
                          "corpus_id"},
                      "pretrain config");

  PretrainConfig pc;
  pc.encoder = encoder_config_from_json(j.value("encoder", json::object()));
  pc.optimizer = nn::optimizer_from_name(j.value("optimizer", "adam"));
  if (j.contains("optimizer_hyper")) {
    const json& h = j.at("optimizer_hyper");
    reject_unknown_keys(h, {"beta1", "beta2", "eps", "weight_decay"},
                        "optimizer_hyper");
    pc.hyper.beta1 = h.value("beta1", pc.hyper.beta1);
    pc.hyper.beta2 = h.value("beta2", pc.hyper.beta2);
    pc.hyper.eps = h.value("eps", pc.hyper.eps);
    pc.hyper.weight_decay = h.value("weight_decay", pc.hyper.weight_decay);
  }
  {
    const json& s = j.at("schedule");
    reject_unknown_keys(s, {"kind", "warmup_steps", "peak_lr", "total_steps"},
                        "schedule");
    pc.schedule.kind = nn::schedule_from_name(s.at("kind").get<std::string>());
    pc.schedule.warmup_steps = s.at("warmup_steps").get<long>();
    pc.schedule.peak_lr = s.at("peak_lr").get<double>();
    pc.schedule.total_steps = s.value("total_steps", 0L);
  }
  if (j.contains("corruption")) {
    const json& c = j.at("corruption");
    reject_unknown_keys(c, {"mask_prob", "mask_frac", "random_frac"}, "corruption");
    pc.corruption.mask_prob = c.value("mask_prob", pc.corruption.mask_prob);
    pc.corruption.mask_frac = c.value("mask_frac", pc.corruption.mask_frac);
    pc.corruption.random_frac = c.value("random_frac", pc.corruption.random_frac);
  }
  for (const json& p : j.at("phases")) {
    reject_unknown_keys(p, {"max_len", "steps", "batch_size"}, "phase");
    pc.phases.push_back({p.at("max_len").get<int>(), p.at("steps").get<long>(),
                         p.at("batch_size").get<long>()});
  }
  pc.seed = resolve_seed(seed_flag, j.contains("seed")
                                        ? std::optional<std::uint64_t>(
                                              j.at("seed").get<std::uint64_t>())
                                        : std::nullopt);
  pc.workers = workers;
  pc.log_every = j.value("log_every", pc.log_every);
  pc.corpus_id = j.value("corpus_id", std::string{});

  const std::string data_dir = j.at("data_dir").get<std::string>();
  auto corpus = read_shards(data_dir);

  TrainingLog log;
  auto ckpt = pretrain(corpus, pc, &log);
  save_checkpoint(ckpt, out_path);
  if (!log_path.empty()) {
    std::ofstream log_out(log_path);
    if (!log_out) throw UserError("cannot write log: " + log_path);
    log.write_tsv(log_out);
  }

  json resolved = j;
  resolved["seed"] = pc.seed;
  resolved["workers"] = workers;
  resolved["encoder"] = encoder_config_to_json(pc.encoder);
  resolved["truncated_records"] = log.truncated_records;
  write_manifest(out_path, "pretrain", resolved);
  std::cout << "trained " << ckpt.meta.steps << " steps ("
            << ckpt.meta.samples_seen << " samples); final loss "
            << (log.entries.empty() ? 0.0 : log.entries.back().loss) << "\n";
  if (log.truncated_records > 0)
    std::cerr << "note: " << log.truncated_records
              << " over-length records were truncated to the phase limit\n";
  return 0;
}

int run_embed(const std::string& ckpt_path, const std::string& in_path,
              const std::string& out_path, const std::string& precision,
              std::size_t budget, int workers, const std::string& pool_strategy) {
  auto ckpt = load_checkpoint(ckpt_path);
  auto proteins = read_fasta_arg(in_path);
  EmbedFileOptions opts;
  opts.precision = precision_from_name(precision);
  opts.token_budget = budget;
  opts.workers = workers;

  if (pool_strategy.empty()) {
    auto report = embed_file(ckpt, proteins, out_path, opts);
    for (const auto& id : report.skipped_over_length)
      std::cerr << "warning: skipped over-length protein '" << id << "'\n";
    write_manifest(out_path, "embed",
                   json{{"ckpt", ckpt_path},
                        {"in", in_path},
                        {"precision", precision},
                        {"token_budget", budget},
                        {"written", report.written},
                        {"skipped", report.skipped_over_length}});
    std::cout << "embedded " << report.written << " proteins to " << out_path << "\n";
    return 0;
  }

  // pooled per-protein vectors, stored as 1-row records
  const PoolStrategy strategy = pool_from_name(pool_strategy);
  std::vector<EmbeddingMatrix> pooled;
  std::vector<std::string> skipped;
  for (const auto& protein : proteins) {
    const auto len = protein.residues.size();
    if (len > opts.token_budget ||
        (ckpt.config.positional == PositionalKind::LearnedAbsolute &&
         len > std::size_t(ckpt.config.max_positions))) {
      skipped.push_back(protein.id);
      std::cerr << "warning: skipped over-length protein '" << protein.id << "'\n";
      continue;
    }
    auto residues = embed_residues(ckpt, protein, opts.precision);
    auto vec = pool(residues.values, strategy);
    EmbeddingMatrix rec;
    rec.id = protein.id;
    rec.values.resize(1, vec.values.cols());
    rec.values.row(0) = vec.values;
    rec.source_checkpoint = residues.source_checkpoint;
    pooled.push_back(std::move(rec));
  }
  if (pooled.empty()) throw UserError("no embeddable proteins");
  write_embedding_file(out_path, opts.precision, pooled);
  // pooled files carry their strategy in a sidecar (the PLME header has no
  // strategy field)
  {
    std::ofstream meta(out_path + ".meta.json");
    meta << json{{"pooling", pool_strategy},
                 {"width", pooled.front().values.cols()},
                 {"concat_order", "mean|min|max"}}
                .dump(2)
         << '\n';
  }
  write_manifest(out_path, "embed",
                 json{{"ckpt", ckpt_path},
                      {"in", in_path},
                      {"precision", precision},
                      {"pool", pool_strategy},
                      {"written", pooled.size()},
                      {"skipped", skipped}});
  std::cout << "pooled " << pooled.size() << " proteins (" << pool_strategy
            << ") to " << out_path << "\n";
  return 0;
}

HeadHyper hyper_from_json_file(const std::string& path) {
  HeadHyper hyper;
  if (path.empty()) return hyper;
  const json j = load_json_file(path);
  reject_unknown_keys(j, {"learning_rate", "batch_proteins", "max_epochs", "patience",
                          "validation_split", "conv_window", "compress_width",
                          "lstm_hidden"},
                      "head hyperparameters");
  hyper.learning_rate = j.value("learning_rate", hyper.learning_rate);
  hyper.batch_proteins = j.value("batch_proteins", hyper.batch_proteins);
  hyper.max_epochs = j.value("max_epochs", hyper.max_epochs);
  hyper.patience = j.value("patience", hyper.patience);
  hyper.validation_split = j.value("validation_split", hyper.validation_split);
  hyper.conv_window = j.value("conv_window", hyper.conv_window);
  hyper.compress_width = j.value("compress_width", hyper.compress_width);
  hyper.lstm_hidden = j.value("lstm_hidden", hyper.lstm_hidden);
  return hyper;
}

int run_train_head(const std::string& kind_name, const std::string& features_path,
                   const std::string& baseline, const std::string& baseline_fasta,
                   const std::string& labels_path, const std::string& out_path,
                   const std::string& hyper_path,
                   const std::optional<std::uint64_t>& seed_flag) {
  const HeadKind kind = head_kind_from_name(kind_name);
  const HeadHyper hyper = hyper_from_json_file(hyper_path);
  const std::uint64_t seed = resolve_seed(seed_flag);

  std::ifstream labels_in(labels_path);
  if (!labels_in) throw UserError("cannot open labels: " + labels_path);

  HeadModel model;
  if (kind == HeadKind::ProteinFnn) {
    auto labels = parse_protein_labels(labels_in);
    auto pooled = load_pooled(features_path);
    std::map<std::string, const Eigen::RowVectorXf*> by_id;
    for (const auto& [id, vec] : pooled) by_id[id] = &vec;
    std::vector<ProteinExample> data;
    for (const auto& label : labels) {
      const auto it = by_id.find(label.id);
      if (it == by_id.end())
        throw UserError("no pooled embedding for labeled protein '" + label.id + "'");
      data.push_back({label.id, *it->second, label.localization, label.membrane});
    }
    model = train_protein_head(data, hyper, seed);
  } else {
    auto labels = parse_residue_labels(labels_in);
    std::map<std::string, nn::Mat<float>> features;
    if (!baseline.empty()) {
      const BaselineKind bk = baseline == "onehot" ? BaselineKind::OneHot
                              : baseline == "blosum62"
                                  ? BaselineKind::Blosum62
                                  : throw UserError("unknown baseline: " + baseline);
      for (const auto& rec : read_fasta_arg(baseline_fasta))
        features.emplace(rec.id, baseline_features(bk, tokenize(rec)));
    } else {
      for (auto& rec : read_embedding_file(features_path).records)
        features.emplace(rec.id, std::move(rec.values));
    }
    std::vector<ResidueExample> data;
    for (const auto& label : labels) {
      const auto it = features.find(label.id);
      if (it == features.end())
        throw UserError("no features for labeled protein '" + label.id + "'");
      data.push_back({label.id, it->second, label.ss8});
    }
    model = train_residue_head(kind, data, hyper, seed);
  }

  save_head_model(model, out_path);
  write_manifest(out_path, "train-head",
                 json{{"kind", kind_name},
                      {"features", features_path},
                      {"baseline", baseline},
                      {"labels", labels_path},
                      {"seed", seed},
                      {"epochs_trained", model.epochs_trained},
                      {"validation_score", model.validation_score}});
  std::cout << "trained " << kind_name << " head for " << model.epochs_trained
            << " epochs; validation score " << model.validation_score << "\n";
  return 0;
}

int run_predict(const std::string& model_path, const std::string& features_path,
                const std::string& ckpt_path, const std::string& in_path,
                const std::string& out_path, const std::string& precision,
                const std::string& pool_strategy) {
  auto model = load_head_model(model_path);
  std::ofstream out(out_path);
  if (!out) throw UserError("cannot write predictions: " + out_path);

  std::vector<std::pair<std::string, nn::Mat<float>>> features;
  if (!features_path.empty()) {
    for (auto& rec : read_embedding_file(features_path).records)
      features.emplace_back(rec.id, std::move(rec.values));
  } else {
    if (ckpt_path.empty() || in_path.empty())
      throw UserError("predict needs --features, or --ckpt with --in");
    auto ckpt = load_checkpoint(ckpt_path);
    for (const auto& protein : read_fasta_arg(in_path))
      features.emplace_back(
          protein.id,
          embed_residues(ckpt, protein, precision_from_name(precision)).values);
  }

  if (model.kind == HeadKind::ProteinFnn) {
    const PoolStrategy strategy = pool_from_name(pool_strategy);
    for (const auto& [id, matrix] : features) {
      Eigen::RowVectorXf vec;
      if (matrix.rows() == 1 && matrix.cols() == model.input_width)
        vec = matrix.row(0);  // already pooled
      else
        vec = pool(matrix, strategy).values;
      auto pred = predict_protein(model, vec);
      out << id << '\t' << pred.localization << '\t' << pred.membrane << '\n';
    }
  } else {
    for (const auto& [id, matrix] : features) {
      auto pred = predict_residue(model, matrix);
      out << id << '\t' << pred.ss3 << '\t' << pred.ss8 << '\n';
    }
  }
  write_manifest(out_path, "predict",
                 json{{"model", model_path},
                      {"features", features_path},
                      {"ckpt", ckpt_path},
                      {"in", in_path},
                      {"n", features.size()}});
  std::cout << "predicted " << features.size() << " proteins to " << out_path << "\n";
  return 0;
}

struct EvalInputs {
  std::vector<LabeledSeq> pred;
  std::vector<LabeledSeq> gold;
};

EvalInputs load_eval_inputs(const std::string& pred_path, const std::string& gold_path,
                            int states) {
  EvalInputs inputs;
  std::ifstream pred_in(pred_path), gold_in(gold_path);
  if (!pred_in) throw UserError("cannot open predictions: " + pred_path);
  if (!gold_in) throw UserError("cannot open gold labels: " + gold_path);

  if (states == 3 || states == 8) {
    auto gold = parse_residue_labels(gold_in);
    for (const auto& g : gold) {
      LabeledSeq seq{g.id, {}};
      const std::string& src = states == 3 ? g.ss3 : g.ss8;
      for (char c : src)
        seq.labels.push_back(states == 3 ? ss3_index(c) : ss8_index(c));
      inputs.gold.push_back(std::move(seq));
    }
    // predictions: id <TAB> ss3 <TAB> ss8
    std::string line;
    long line_no = 0;
    while (std::getline(pred_in, line)) {
      line_no++;
      if (line.empty()) continue;
      std::istringstream fields(line);
      std::string id, ss3, ss8;
      std::getline(fields, id, '\t');
      std::getline(fields, ss3, '\t');
      std::getline(fields, ss8, '\t');
      if (id.empty() || ss3.empty() || ss8.empty())
        throw UserError("bad prediction line " + std::to_string(line_no) + " in " +
                        pred_path);
      LabeledSeq seq{id, {}};
      for (char c : states == 3 ? ss3 : ss8)
        seq.labels.push_back(states == 3 ? ss3_index(c) : ss8_index(c));
      inputs.pred.push_back(std::move(seq));
    }
    return inputs;
  }

  if (states == 10 || states == 2) {
    auto gold = parse_protein_labels(gold_in);
    // class inventory from the gold labels
    std::map<std::string, int> classes;
    if (states == 10) {
      for (const auto& g : gold)
        if (!g.localization.empty() && !classes.count(g.localization))
          classes.emplace(g.localization, int(classes.size()));
      if (classes.size() > 10) throw UserError("more than 10 localization classes");
    } else {
      classes = {{"membrane-bound", 0}, {"water-soluble", 1}};
    }
    auto class_of = [&](const std::string& name, const std::string& id) {
      const auto it = classes.find(name);
      if (it == classes.end())
        throw UserError("unknown class '" + name + "' for protein '" + id + "'");
      return it->second;
    };
    std::map<std::string, std::string> pred_of;
    std::string line;
    while (std::getline(pred_in, line)) {
      if (line.empty()) continue;
      std::istringstream fields(line);
      std::string id, loc, mem;
      std::getline(fields, id, '\t');
      std::getline(fields, loc, '\t');
      std::getline(fields, mem, '\t');
      pred_of[id] = states == 10 ? loc : mem;
    }
    for (const auto& g : gold) {
      const std::string& gold_label = states == 10 ? g.localization : g.membrane;
      if (gold_label.empty()) continue;  // unlabeled for this task
      const auto it = pred_of.find(g.id);
      if (it == pred_of.end())
        throw UserError("no prediction for '" + g.id + "'");
      inputs.gold.push_back({g.id, {class_of(gold_label, g.id)}});
      inputs.pred.push_back({g.id, {class_of(it->second, g.id)}});
    }
    return inputs;
  }
  throw UserError("--states must be one of 3, 8, 10, 2");
}

int run_eval(const std::string& pred_path, const std::string& gold_path, int states,
             long bootstrap, const std::optional<std::uint64_t>& seed_flag,
             const std::string& out_path, const std::string& compare_path,
             const std::string& neff_json_path, const std::string& spearman_csv) {
  const std::uint64_t seed = resolve_seed(seed_flag);
  auto inputs = load_eval_inputs(pred_path, gold_path, states);
  auto report = q_accuracy(inputs.pred, inputs.gold, states,
                           "Q" + std::to_string(states));
  std::vector<double> scores;
  for (const auto& [id, s] : report.per_protein) scores.push_back(s);
  report.bootstrap_se = bootstrap_se(scores, bootstrap, seed);
  report.bootstrap_b = bootstrap;
  report.seed = seed;

  json output = json::parse(report.to_json());

  if (!compare_path.empty()) {
    auto other_inputs = load_eval_inputs(compare_path, gold_path, states);
    auto other = q_accuracy(other_inputs.pred, other_inputs.gold, states, "other");
    auto comparison = compare_per_protein(report.per_protein, other.per_protein);
    output["comparison"] = json::parse(comparison.to_json());
    if (!out_path.empty()) {
      std::ofstream scatter(out_path + ".scatter.csv");
      comparison.write_scatter_csv(scatter);
    }
  }

  if (!neff_json_path.empty()) {
    const json nj = load_json_file(neff_json_path);
    std::map<std::string, long> neff_of;
    for (const auto& [id, value] : nj.at("neff_per_id").items())
      neff_of[id] = value.get<long>();
    auto buckets = neff_bucket_report(report.per_protein, neff_of);
    output["neff_buckets"] = json::parse(buckets.to_json());
  }

  if (!spearman_csv.empty()) {
    std::ifstream in(spearman_csv);
    if (!in) throw UserError("cannot open " + spearman_csv);
    std::vector<double> xs, ys;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos) throw UserError("expected x,y rows in " + spearman_csv);
      try {
        xs.push_back(std::stod(line.substr(0, comma)));
        ys.push_back(std::stod(line.substr(comma + 1)));
      } catch (...) {
        continue;  // header row
      }
    }
    output["spearman"] = spearman(xs, ys);
  }

  const std::string rendered = output.dump(2);
  std::cout << rendered << "\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw UserError("cannot write report: " + out_path);
    out << rendered << '\n';
    write_manifest(out_path, "eval",
                   json{{"pred", pred_path},
                        {"gold", gold_path},
                        {"states", states},
                        {"bootstrap", bootstrap},
                        {"seed", seed}});
  }
  return 0;
}

int run_make_testset(const std::string& candidates_path,
                     const std::vector<std::string>& ref_paths, double threshold,
                     const std::string& out_path, const std::string& audit_path,
                     const std::string& denominator) {
  AlignParams params;
  if (denominator == "shorter")
    params.denominator = PideDenominator::Shorter;
  else if (denominator == "longer")
    params.denominator = PideDenominator::Longer;
  else if (denominator == "alignment-length")
    params.denominator = PideDenominator::AlignmentLength;
  else
    throw UserError("unknown denominator: " + denominator);

  auto candidates = parse_fasta_file(candidates_path);
  std::vector<std::vector<SequenceRecord>> refs;
  for (const auto& path : ref_paths) refs.push_back(parse_fasta_file(path));

  auto result = filter_redundant(candidates, refs, threshold, params);

  std::ofstream out(out_path);
  if (!out) throw UserError("cannot write kept list: " + out_path);
  for (const auto& rec : result.kept) out << rec.id << '\n';

  json audit = json::array();
  for (const auto& a : result.audit)
    audit.push_back(json{{"id", a.id}, {"max_pide", a.max_pide}});
  std::ofstream audit_out(audit_path);
  if (!audit_out) throw UserError("cannot write audit: " + audit_path);
  audit_out << json{{"threshold", threshold},
                    {"denominator", denominator},
                    {"candidates", candidates.size()},
                    {"kept", result.kept.size()},
                    {"audit", audit}}
                   .dump(2)
            << '\n';

  write_manifest(out_path, "make-testset",
                 json{{"candidates", candidates_path},
                      {"refs", ref_paths},
                      {"threshold", threshold},
                      {"denominator", denominator},
                      {"kept", result.kept.size()}});
  std::cout << "kept " << result.kept.size() << " of " << candidates.size()
            << " candidates\n";
  return 0;
}

int run_neff(const std::string& in_path, double threshold, const std::string& out_path) {
  auto sequences = read_fasta_arg(in_path);
  auto result = neff(sequences, threshold);
  json clusters = json::object();
  for (const auto& [id, cluster] : result.cluster_of)
    clusters[id] = cluster;
  std::ofstream out(out_path);
  if (!out) throw UserError("cannot write: " + out_path);
  out << json{{"neff", result.neff},
              {"threshold", threshold},
              {"clusters", clusters}}
             .dump(2)
      << '\n';
  write_manifest(out_path, "neff",
                 json{{"in", in_path}, {"threshold", threshold}, {"neff", result.neff}});
  std::cout << "neff " << result.neff << " over " << sequences.size()
            << " sequences\n";
  return 0;
}

int run_project(const std::string& embeddings_path, const std::string& ckpt_path,
                const std::string& random_config_path, const std::string& in_path,
                bool tokens_mode, const std::string& annotations_path,
                const std::string& column, const std::string& out_prefix,
                double perplexity, bool perplexity_given, int iterations,
                const std::optional<std::uint64_t>& seed_flag, bool standardize,
                const std::string& pool_strategy) {
  TsneParams params;
  params.iterations = iterations;
  params.seed = resolve_seed(seed_flag);
  params.standardize = standardize;
  // amino-acid token plots default to perplexity 5, everything else to 30
  params.perplexity = perplexity_given ? perplexity : (tokens_mode ? 5.0 : 30.0);

  std::vector<std::pair<std::string, Eigen::RowVectorXf>> embeddings;
  std::vector<Annotation> annotations;

  if (tokens_mode) {
    if (ckpt_path.empty()) throw UserError("--tokens needs --ckpt");
    auto ckpt = load_checkpoint(ckpt_path);
    const auto& table = ckpt.params.at("embed.tok");
    for (int t = 0; t < Vocabulary::kResidueTokens; ++t) {
      const std::string letter(1, Vocabulary::decode(TokenId(t)));
      embeddings.emplace_back(letter, table.row(t));
      Annotation a;
      a.id = letter;
      a.columns["label"] = letter;
      annotations.push_back(a);
    }
  } else if (!embeddings_path.empty()) {
    embeddings = load_pooled(embeddings_path);
  } else {
    // embed on the fly from a trained checkpoint or a random-init config
    if (in_path.empty())
      throw UserError("project needs --embeddings, or --in with --ckpt/--random-config");
    Checkpoint ckpt;
    if (!random_config_path.empty()) {
      const json j = load_json_file(random_config_path);
      reject_unknown_keys(j, {"encoder", "seed"}, "random config");
      ckpt = init_encoder(encoder_config_from_json(j.value("encoder", json::object())),
                          resolve_seed(seed_flag, j.value("seed", 42ULL)));
    } else if (!ckpt_path.empty()) {
      ckpt = load_checkpoint(ckpt_path);
    } else {
      throw UserError("project needs --ckpt or --random-config with --in");
    }
    const PoolStrategy strategy = pool_from_name(pool_strategy);
    for (const auto& protein : read_fasta_arg(in_path)) {
      auto matrix = embed_residues(ckpt, protein);
      embeddings.emplace_back(protein.id, pool(matrix.values, strategy).values);
    }
  }

  if (!annotations_path.empty()) {
    std::ifstream ann_in(annotations_path);
    if (!ann_in) throw UserError("cannot open annotations: " + annotations_path);
    annotations = parse_annotations(ann_in);
  } else if (!tokens_mode) {
    throw UserError("project needs --annotations (or --tokens mode)");
  }

  auto result = project_embeddings(embeddings, annotations, column, params);
  for (const auto& id : result.missing_annotations)
    std::cerr << "warning: no annotation for '" << id << "', excluded\n";

  {
    std::ofstream csv(out_prefix + ".coords.csv");
    if (!csv) throw UserError("cannot write " + out_prefix + ".coords.csv");
    write_coords_csv(result, csv);
  }
  {
    std::ofstream svg(out_prefix + ".svg");
    write_scatter_svg(result, svg);
  }
  write_manifest(out_prefix + ".coords.csv", "project",
                 json{{"embeddings", embeddings_path},
                      {"ckpt", ckpt_path},
                      {"random_config", random_config_path},
                      {"tokens", tokens_mode},
                      {"annotations", annotations_path},
                      {"column", column},
                      {"perplexity", params.perplexity},
                      {"iterations", params.iterations},
                      {"seed", params.seed},
                      {"standardize", params.standardize},
                      {"initial_kl", result.initial_kl},
                      {"final_kl", result.final_kl},
                      {"max_entropy_error", result.max_entropy_error},
                      {"excluded", result.missing_annotations}});
  std::cout << "projected " << result.points.size() << " points; KL "
            << result.initial_kl << " -> " << result.final_kl << "\n";
  return 0;
}

int run_attn(const std::string& ckpt_path, const std::string& in_path,
             const std::string& protein_id, int layer, int head, int top_k,
             const std::string& out_prefix) {
  auto ckpt = load_checkpoint(ckpt_path);
  auto proteins = read_fasta_arg(in_path);
  if (proteins.empty()) throw UserError("no sequences in " + in_path);
  const SequenceRecord* protein = &proteins.front();
  if (!protein_id.empty()) {
    protein = nullptr;
    for (const auto& p : proteins)
      if (p.id == protein_id) protein = &p;
    if (!protein) throw UserError("protein '" + protein_id + "' not found");
  }

  auto map = attention_map(ckpt, *protein, layer, head, top_k);
  {
    std::ofstream csv(out_prefix + ".attn.csv");
    if (!csv) throw UserError("cannot write " + out_prefix + ".attn.csv");
    write_attention_csv(map, csv);
  }
  {
    std::ofstream svg(out_prefix + ".attn.svg");
    write_attention_svg(map, *protein, svg);
  }
  {
    std::ofstream tsv(out_prefix + ".topk.tsv");
    write_top_attended_tsv(map, *protein, tsv);
  }
  write_manifest(out_prefix + ".attn.csv", "attn",
                 json{{"ckpt", ckpt_path},
                      {"in", in_path},
                      {"id", protein->id},
                      {"layer", layer},
                      {"head", head},
                      {"topk", top_k}});
  std::cout << "attention map for '" << protein->id << "' layer " << layer
            << " head " << head << " written to " << out_prefix << ".*\n";
  return 0;
}

int run_bench(const std::string& ckpt_path, const std::string& lengths_csv,
              const std::string& batches_csv, int repeats,
              const std::string& precision, const std::string& out_path,
              const std::optional<std::uint64_t>& seed_flag) {
  auto parse_ints = [](const std::string& csv) {
    std::vector<int> out;
    std::istringstream in(csv);
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(std::stoi(item));
    return out;
  };
  auto ckpt = load_checkpoint(ckpt_path);
  auto report =
      bench_inference(ckpt, parse_ints(lengths_csv), parse_ints(batches_csv), repeats,
                      precision_from_name(precision), resolve_seed(seed_flag));
  report.write_table(std::cout);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw UserError("cannot write report: " + out_path);
    out << report.to_json() << '\n';
    write_manifest(out_path, "bench",
                   json{{"ckpt", ckpt_path},
                        {"lengths", lengths_csv},
                        {"batches", batches_csv},
                        {"repeats", repeats},
                        {"precision", precision}});
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"protein language-model toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  std::optional<std::uint64_t> seed;

  // prepare
  auto* prepare = app.add_subcommand("prepare", "tokenize a FASTA corpus into shards");
  std::string prepare_in, prepare_out;
  std::uint32_t prepare_shards = 1;
  prepare->add_option("--in", prepare_in, "input FASTA ('-' for stdin)")->required();
  prepare->add_option("--shards", prepare_shards, "number of shard files")->required();
  prepare->add_option("--out", prepare_out, "output directory")->required();

  // pretrain
  auto* pretrain_cmd = app.add_subcommand("pretrain", "denoising pre-training");
  std::string pretrain_config, pretrain_out, pretrain_log;
  int pretrain_workers = 1;
  pretrain_cmd->add_option("--config", pretrain_config, "JSON config")->required();
  pretrain_cmd->add_option("--out", pretrain_out, "output checkpoint (.plmc)")->required();
  pretrain_cmd->add_option("--workers", pretrain_workers, "data-parallel workers");
  pretrain_cmd->add_option("--seed", seed, "seed override");
  pretrain_cmd->add_option("--log", pretrain_log, "training log TSV");

  // embed
  auto* embed_cmd = app.add_subcommand("embed", "extract frozen embeddings");
  std::string embed_ckpt, embed_in, embed_out, embed_precision = "full", embed_pool;
  std::size_t embed_budget = 8192;
  int embed_workers = 1;
  embed_cmd->add_option("--ckpt", embed_ckpt, "checkpoint")->required();
  embed_cmd->add_option("--in", embed_in, "input FASTA ('-' for stdin)")->required();
  embed_cmd->add_option("--out", embed_out, "output embedding file (.plme)")->required();
  embed_cmd->add_option("--precision", embed_precision, "full|half");
  embed_cmd->add_option("--budget", embed_budget, "token budget per batch");
  embed_cmd->add_option("--workers", embed_workers, "parallel batches");
  embed_cmd->add_option("--pool", embed_pool, "write pooled vectors: mean|min|max|concat");

  // train-head
  auto* train_cmd = app.add_subcommand("train-head", "train a supervised head");
  std::string th_kind, th_features, th_baseline, th_baseline_fasta, th_labels, th_out,
      th_hyper;
  train_cmd->add_option("--kind", th_kind, "logreg|fnn|cnn|lstm|protein-fnn")->required();
  train_cmd->add_option("--features", th_features, "embedding file (.plme)");
  train_cmd->add_option("--baseline", th_baseline, "onehot|blosum62 featurizer");
  train_cmd->add_option("--baseline-fasta", th_baseline_fasta,
                        "FASTA for baseline featurization");
  train_cmd->add_option("--labels", th_labels, "label TSV")->required();
  train_cmd->add_option("--out", th_out, "output model (.plmh)")->required();
  train_cmd->add_option("--hyper", th_hyper, "hyperparameter JSON");
  train_cmd->add_option("--seed", seed, "seed override");

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "run a trained head");
  std::string pr_model, pr_features, pr_ckpt, pr_in, pr_out, pr_precision = "full",
                        pr_pool = "mean";
  predict_cmd->add_option("--model", pr_model, "model file (.plmh)")->required();
  predict_cmd->add_option("--features", pr_features, "embedding file (.plme)");
  predict_cmd->add_option("--ckpt", pr_ckpt, "checkpoint for on-the-fly embedding");
  predict_cmd->add_option("--in", pr_in, "FASTA ('-' for stdin)");
  predict_cmd->add_option("--out", pr_out, "output TSV")->required();
  predict_cmd->add_option("--precision", pr_precision, "full|half");
  predict_cmd->add_option("--pool", pr_pool, "pooling for protein heads");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score predictions");
  std::string ev_pred, ev_gold, ev_out, ev_compare, ev_neff, ev_spearman;
  int ev_states = 3;
  long ev_bootstrap = 1000;
  eval_cmd->add_option("--pred", ev_pred, "prediction TSV")->required();
  eval_cmd->add_option("--gold", ev_gold, "gold label TSV")->required();
  eval_cmd->add_option("--states", ev_states, "3|8|10|2")->required();
  eval_cmd->add_option("--bootstrap", ev_bootstrap, "bootstrap resamples");
  eval_cmd->add_option("--seed", seed, "seed override");
  eval_cmd->add_option("--out", ev_out, "report JSON path");
  eval_cmd->add_option("--compare", ev_compare, "second prediction TSV to compare");
  eval_cmd->add_option("--neff-json", ev_neff, "per-id Neff JSON for bucket report");
  eval_cmd->add_option("--spearman-csv", ev_spearman, "x,y CSV for rank correlation");

  // make-testset
  auto* testset_cmd = app.add_subcommand("make-testset", "redundancy-filter candidates");
  std::string ts_candidates, ts_out, ts_audit, ts_denominator = "shorter";
  std::vector<std::string> ts_refs;
  double ts_threshold = 20.0;
  testset_cmd->add_option("--candidates", ts_candidates, "candidate FASTA")->required();
  testset_cmd->add_option("--refs", ts_refs, "reference FASTA (repeatable)");
  testset_cmd->add_option("--threshold", ts_threshold, "PIDE threshold (percent)");
  testset_cmd->add_option("--out", ts_out, "kept-id list")->required();
  testset_cmd->add_option("--audit", ts_audit, "audit JSON")->required();
  testset_cmd->add_option("--denominator", ts_denominator,
                          "shorter|longer|alignment-length");

  // neff
  auto* neff_cmd = app.add_subcommand("neff", "effective sequence count of an MSA");
  std::string nf_in, nf_out;
  double nf_threshold = 62.0;
  neff_cmd->add_option("--in", nf_in, "ungapped MSA FASTA ('-' for stdin)")->required();
  neff_cmd->add_option("--threshold", nf_threshold, "PIDE threshold (percent)");
  neff_cmd->add_option("--out", nf_out, "output JSON")->required();

  // project
  auto* project_cmd = app.add_subcommand("project", "t-SNE projection");
  std::string pj_embeddings, pj_ckpt, pj_random, pj_in, pj_ann, pj_column = "label",
                             pj_out, pj_pool = "mean";
  double pj_perplexity = 30.0;
  int pj_iterations = 3000;
  bool pj_tokens = false, pj_standardize = false;
  project_cmd->add_option("--embeddings", pj_embeddings, "pooled embedding file");
  project_cmd->add_option("--ckpt", pj_ckpt, "checkpoint for on-the-fly embedding");
  project_cmd->add_option("--random-config", pj_random,
                          "config JSON for a random-init baseline");
  project_cmd->add_option("--in", pj_in, "FASTA for on-the-fly embedding");
  project_cmd->add_flag("--tokens", pj_tokens, "project the amino-acid embedding table");
  project_cmd->add_option("--annotations", pj_ann, "annotation TSV");
  project_cmd->add_option("--column", pj_column, "annotation column");
  project_cmd->add_option("--out", pj_out, "output prefix")->required();
  auto* perp_opt = project_cmd->add_option("--perplexity", pj_perplexity, "t-SNE perplexity");
  project_cmd->add_option("--iterations", pj_iterations, "t-SNE iterations");
  project_cmd->add_option("--seed", seed, "seed override");
  project_cmd->add_flag("--standardize", pj_standardize, "z-score input columns");
  project_cmd->add_option("--pool", pj_pool, "pooling for on-the-fly embedding");

  // attn
  auto* attn_cmd = app.add_subcommand("attn", "export an attention map");
  std::string at_ckpt, at_in, at_id, at_out;
  int at_layer = 0, at_head = 0, at_topk = 4;
  attn_cmd->add_option("--ckpt", at_ckpt, "checkpoint")->required();
  attn_cmd->add_option("--in", at_in, "FASTA ('-' for stdin)")->required();
  attn_cmd->add_option("--id", at_id, "protein id (default: first record)");
  attn_cmd->add_option("--layer", at_layer, "layer index")->required();
  attn_cmd->add_option("--head", at_head, "head index")->required();
  attn_cmd->add_option("--topk", at_topk, "top attended positions per residue");
  attn_cmd->add_option("--out", at_out, "output prefix")->required();

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "inference speed grid");
  std::string bn_ckpt, bn_lengths = "128,256,512", bn_batches = "1,16,32",
                       bn_precision = "full", bn_out;
  int bn_repeats = 100;
  bench_cmd->add_option("--ckpt", bn_ckpt, "checkpoint")->required();
  bench_cmd->add_option("--lengths", bn_lengths, "comma-separated lengths");
  bench_cmd->add_option("--batches", bn_batches, "comma-separated batch sizes");
  bench_cmd->add_option("--repeats", bn_repeats, "timed repeats per cell");
  bench_cmd->add_option("--precision", bn_precision, "full|half");
  bench_cmd->add_option("--out", bn_out, "report JSON path");
  bench_cmd->add_option("--seed", seed, "seed override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // usage text to the right stream; normalize exit codes to 0 (--help) or 1
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*prepare) return run_prepare(prepare_in, prepare_shards, prepare_out);
    if (*pretrain_cmd)
      return run_pretrain(pretrain_config, pretrain_out, pretrain_workers, seed,
                          pretrain_log);
    if (*embed_cmd)
      return run_embed(embed_ckpt, embed_in, embed_out, embed_precision, embed_budget,
                       embed_workers, embed_pool);
    if (*train_cmd)
      return run_train_head(th_kind, th_features, th_baseline, th_baseline_fasta,
                            th_labels, th_out, th_hyper, seed);
    if (*predict_cmd)
      return run_predict(pr_model, pr_features, pr_ckpt, pr_in, pr_out, pr_precision,
                         pr_pool);
    if (*eval_cmd)
      return run_eval(ev_pred, ev_gold, ev_states, ev_bootstrap, seed, ev_out,
                      ev_compare, ev_neff, ev_spearman);
    if (*testset_cmd)
      return run_make_testset(ts_candidates, ts_refs, ts_threshold, ts_out, ts_audit,
                              ts_denominator);
    if (*neff_cmd) return run_neff(nf_in, nf_threshold, nf_out);
    if (*project_cmd)
      return run_project(pj_embeddings, pj_ckpt, pj_random, pj_in, pj_tokens, pj_ann,
                         pj_column, pj_out, pj_perplexity, perp_opt->count() > 0,
                         pj_iterations, seed, pj_standardize, pj_pool);
    if (*attn_cmd)
      return run_attn(at_ckpt, at_in, at_id, at_layer, at_head, at_topk, at_out);
    if (*bench_cmd)
      return run_bench(bn_ckpt, bn_lengths, bn_batches, bn_repeats, bn_precision,
                       bn_out, seed);
    std::cerr << "no subcommand given\n";
    return 1;
  } catch (const UserError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}
