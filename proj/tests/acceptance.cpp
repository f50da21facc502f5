// Acceptance suite: runs every acceptance criterion end to end and prints one
// PASS/FAIL line per criterion. Exits nonzero if any criterion fails.
//
// Usage: acceptance [--cli /path/to/plmkit] [--only N]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "plmkit/align.hpp"
#include "plmkit/bench.hpp"
#include "plmkit/blosum62.hpp"
#include "plmkit/embed.hpp"
#include "plmkit/gradcheck.hpp"
#include "plmkit/heads.hpp"
#include "plmkit/metrics.hpp"
#include "plmkit/pretrain.hpp"
#include "plmkit/redundancy.hpp"
#include "plmkit/tsne.hpp"

using namespace plmkit;
namespace fs = std::filesystem;

namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define REQUIRE_MSG(cond, ...)                               \
  do {                                                       \
    if (!(cond)) {                                           \
      char buf_[512];                                        \
      std::snprintf(buf_, sizeof buf_, __VA_ARGS__);         \
      throw Failure(buf_);                                   \
    }                                                        \
  } while (0)

std::string g_cli = "plmkit";
fs::path g_work;

std::string file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure("missing file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void run_cli(const std::string& args) {
  const std::string cmd = g_cli + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  if (rc != 0) throw Failure("CLI command failed: " + g_cli + " " + args);
}

// ---- shared fixtures ----

nn::Mat<double> random_mat(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  nn::Mat<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * scale;
  return m;
}

// toy corpus built from a fixed motif vocabulary: masked tokens are
// recoverable from local context, which a denoising encoder can learn
std::vector<TokenSeq> motif_corpus(int n, int min_len, int max_len,
                                   std::uint64_t seed) {
  Rng rng(seed);
  const int n_motifs = 12, motif_len = 7;
  std::vector<std::vector<TokenId>> motifs;
  for (int m = 0; m < n_motifs; ++m) {
    std::vector<TokenId> motif;
    for (int j = 0; j < motif_len; ++j) motif.push_back(TokenId(rng.uniform_int(20)));
    motifs.push_back(motif);
  }
  std::vector<TokenSeq> corpus;
  for (int i = 0; i < n; ++i) {
    TokenSeq s;
    s.source_id = "toy" + std::to_string(i);
    const std::size_t target =
        std::size_t(min_len) + rng.uniform_int(std::uint32_t(max_len - min_len + 1));
    while (s.ids.size() < target) {
      const auto& motif = motifs[rng.uniform_int(n_motifs)];
      for (TokenId t : motif) {
        if (s.ids.size() == target) break;
        s.ids.push_back(t);
      }
    }
    corpus.push_back(std::move(s));
  }
  return corpus;
}

EncoderConfig toy_encoder_config() {
  EncoderConfig cfg;
  cfg.layers = 2;
  cfg.d_model = 64;
  cfg.ff_width = 256;
  cfg.heads = 4;
  cfg.dropout = 0.0;
  cfg.positional = PositionalKind::RelativeBucketed;
  return cfg;
}

// trained once, reused by criteria 2 and 9
struct ToyPipeline {
  std::vector<TokenSeq> corpus;
  Checkpoint checkpoint;
  TrainingLog log;
  double initial_loss = 0.0;
  bool ready = false;
};
ToyPipeline g_toy;

void ensure_toy_pipeline() {
  if (g_toy.ready) return;
  g_toy.corpus = motif_corpus(100, 50, 100, 1001);

  PretrainConfig pc;
  pc.encoder = toy_encoder_config();
  pc.schedule = {nn::ScheduleKind::LinearWarmupConstant, 100, 1e-3, 0};
  pc.optimizer = nn::OptimizerKind::Adam;
  pc.corruption = {0.15, 1.0, 0.0};  // pure MASK: initial logits are near zero
  pc.phases = {{64, 1000, 16}, {128, 1000, 16}};
  pc.seed = 42;
  pc.log_every = 100;

  // denoising loss of the untrained model on a held-out style batch
  {
    auto params = init_params<float>(pc.encoder, pc.seed);
    std::vector<const TokenSeq*> seqs;
    for (int i = 0; i < 16; ++i) seqs.push_back(&g_toy.corpus[std::size_t(i)]);
    Rng rng(4242);
    auto batch = make_masked_batch(seqs, 128, pc.corruption, rng);
    EncoderForward<float> fwd;
    EncodeOptions opts;
    encoder_forward(fwd, pc.encoder, params, batch.inputs, batch.valid, opts, false);
    g_toy.initial_loss =
        double(mlm_loss(fwd, batch.target_rows, batch.target_ids).loss.value()(0, 0));
  }

  g_toy.checkpoint = pretrain(g_toy.corpus, pc, &g_toy.log);
  g_toy.ready = true;
}

double toy_masked_accuracy(const Checkpoint& ckpt, std::uint64_t seed) {
  // fresh corruption patterns over the whole corpus, model frozen
  std::size_t correct = 0, total = 0;
  Rng rng(seed);
  for (std::size_t start = 0; start < g_toy.corpus.size(); start += 20) {
    std::vector<const TokenSeq*> seqs;
    for (std::size_t i = start; i < std::min(start + 20, g_toy.corpus.size()); ++i)
      seqs.push_back(&g_toy.corpus[i]);
    auto batch = make_masked_batch(seqs, 128, {0.15, 1.0, 0.0}, rng.fork(start));
    if (batch.target_rows.empty()) continue;
    EncoderForward<float> fwd;
    EncodeOptions opts;
    encoder_forward(fwd, ckpt.config, ckpt.params, batch.inputs, batch.valid, opts,
                    false);
    auto loss = mlm_loss(fwd, batch.target_rows, batch.target_ids);
    correct += std::size_t(loss.accuracy * double(loss.targets) + 0.5);
    total += loss.targets;
  }
  return double(correct) / double(total);
}

// long-range copy-chain task shared by criteria 3 and 9
constexpr int kShift = 15;
constexpr int kTaskLen = 48;

struct LongRangeTask {
  std::vector<TokenSeq> seqs;
  std::vector<std::string> ss8;
};

LongRangeTask make_longrange_task(int n, std::uint64_t seed) {
  Rng rng(seed);
  LongRangeTask task;
  for (int i = 0; i < n; ++i) {
    TokenSeq s;
    s.source_id = "lr" + std::to_string(i);
    for (int j = 0; j < kTaskLen; ++j) {
      // copy chain at offset 15: strong enough for denoising to learn the
      // offset, weak enough that a local-window model cannot ride it
      if (j >= kShift && rng.uniform() < 0.35)
        s.ids.push_back(s.ids[std::size_t(j - kShift)]);
      else
        s.ids.push_back(TokenId(rng.uniform_int(20)));
    }
    std::string ss8;
    for (int j = 0; j < kTaskLen; ++j) {
      const TokenId partner = s.ids[std::size_t((j + kShift) % kTaskLen)];
      const int cls = partner < 7 ? 0 : partner < 14 ? 1 : 2;
      ss8.push_back(cls == 0 ? 'H' : cls == 1 ? 'E' : 'S');
    }
    task.seqs.push_back(std::move(s));
    task.ss8.push_back(std::move(ss8));
  }
  return task;
}

SequenceRecord record_of(const TokenSeq& seq) {
  SequenceRecord rec{seq.source_id, "", ""};
  for (TokenId t : seq.ids) rec.residues.push_back(Vocabulary::decode(t));
  return rec;
}

std::vector<ResidueExample> featurize(const Checkpoint& ckpt, const LongRangeTask& task,
                                      Precision precision = Precision::Full) {
  std::vector<ResidueExample> out;
  for (std::size_t i = 0; i < task.seqs.size(); ++i)
    out.push_back({task.seqs[i].source_id,
                   embed_residues(ckpt, record_of(task.seqs[i]), precision).values,
                   task.ss8[i]});
  return out;
}

double task_q3(const HeadModel& model, const std::vector<ResidueExample>& test) {
  double sum = 0;
  for (const auto& ex : test) {
    auto pred = predict_residue(model, ex.features);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ex.ss8.size(); ++i)
      if (pred.ss3[i] == map_ss8_to_ss3(ex.ss8[i])) correct++;
    sum += 100.0 * double(correct) / double(ex.ss8.size());
  }
  return sum / double(test.size());
}

struct LongRangeResult {
  Checkpoint trained;
  HeadModel head_on_trained;
  LongRangeTask test_task;
  double q3_pretrained = 0.0;
  double q3_random = 0.0;
  bool ready = false;
};
LongRangeResult g_longrange;

void ensure_longrange() {
  if (g_longrange.ready) return;
  auto train_task = make_longrange_task(300, 2001);
  g_longrange.test_task = make_longrange_task(100, 2002);

  EncoderConfig cfg = toy_encoder_config();
  cfg.rel_buckets = 64;  // distance 15 resolved exactly

  PretrainConfig pc;
  pc.encoder = cfg;
  pc.schedule = {nn::ScheduleKind::LinearWarmupConstant, 100, 1e-3, 0};
  pc.optimizer = nn::OptimizerKind::Adam;
  pc.corruption = {0.15, 1.0, 0.0};
  pc.phases = {{kTaskLen, 2000, 16}};
  pc.seed = 42;
  pc.log_every = 500;

  g_longrange.trained = pretrain(train_task.seqs, pc, nullptr);
  auto random_ckpt = init_encoder(cfg, 43);  // identical architecture, untrained

  HeadHyper hyper;
  hyper.max_epochs = 100;
  hyper.patience = 10;
  hyper.validation_split = 0.0;

  auto trained_features = featurize(g_longrange.trained, train_task);
  g_longrange.head_on_trained = train_residue_head(HeadKind::Cnn, trained_features, hyper, 7);
  g_longrange.q3_pretrained =
      task_q3(g_longrange.head_on_trained, featurize(g_longrange.trained, g_longrange.test_task));

  auto random_features = featurize(random_ckpt, train_task);
  auto head_random = train_residue_head(HeadKind::Cnn, random_features, hyper, 7);
  g_longrange.q3_random =
      task_q3(head_random, featurize(random_ckpt, g_longrange.test_task));
  g_longrange.ready = true;
}

// ---- criteria ----

// 1. every kernel and each full model passes 64-bit finite-difference checks
void criterion_gradients() {
  Rng rng(11);
  using Build = std::function<nn::NodeRef<double>(nn::Graph<double>&,
                                                  const std::vector<nn::NodeRef<double>>&)>;
  struct KernelCheck {
    const char* name;
    std::vector<nn::Mat<double>> inputs;
    Build build;
    double eps = 1e-5;
  };
  using namespace nn;

  Rng mask_rng(3);
  const auto drop = dropout_mask<double>(4, 4, 0.4, mask_rng);
  const auto weights35 = random_mat(rng, 3, 5);
  const auto weights46 = random_mat(rng, 4, 6);

  nn::Mat<double> off_zero = random_mat(rng, 4, 4);
  for (Eigen::Index i = 0; i < off_zero.size(); ++i)
    if (std::abs(off_zero.data()[i]) < 0.1)
      off_zero.data()[i] += off_zero.data()[i] < 0 ? -0.2 : 0.2;

  Eigen::MatrixXi buckets(4, 4);
  for (Eigen::Index r = 0; r < 4; ++r)
    for (Eigen::Index c = 0; c < 4; ++c)
      buckets(r, c) = int(std::min<Eigen::Index>(std::abs(r - c), 3));
  nn::Mat<double> attn_mask = nn::Mat<double>::Zero(8, 4);
  attn_mask.col(3).setConstant(-1e30);
  AttentionSpec attn_spec;
  attn_spec.heads = 2;
  attn_spec.batch = 2;
  attn_spec.seq_len = 4;
  attn_spec.additive_mask = &attn_mask;
  attn_spec.rel_buckets = &buckets;

  std::vector<KernelCheck> checks;
  checks.push_back({"matmul",
                    {random_mat(rng, 3, 4), random_mat(rng, 4, 2)},
                    [](auto& g, const auto& in) { return sum_all(matmul(in[0], in[1])); }});
  checks.push_back({"matmul_nt",
                    {random_mat(rng, 3, 4), random_mat(rng, 5, 4)},
                    [](auto& g, const auto& in) { return sum_all(matmul_nt(in[0], in[1])); }});
  checks.push_back({"add+mul+scale",
                    {random_mat(rng, 3, 3), random_mat(rng, 3, 3)},
                    [](auto& g, const auto& in) {
                      return sum_all(scale(mul(add(in[0], in[1]), in[0]), -1.5));
                    }});
  checks.push_back({"bias",
                    {random_mat(rng, 4, 3), random_mat(rng, 1, 3)},
                    [](auto& g, const auto& in) {
                      return sum_all(tanh_op(add_row_bias(in[0], in[1])));
                    }});
  checks.push_back({"relu",
                    {off_zero},
                    [](auto& g, const auto& in) { return sum_all(relu(in[0])); }});
  checks.push_back({"gelu",
                    {random_mat(rng, 4, 4)},
                    [](auto& g, const auto& in) { return sum_all(gelu(in[0])); }});
  checks.push_back({"tanh",
                    {random_mat(rng, 4, 4)},
                    [](auto& g, const auto& in) { return sum_all(tanh_op(in[0])); }});
  checks.push_back({"sigmoid",
                    {random_mat(rng, 4, 4)},
                    [](auto& g, const auto& in) { return sum_all(sigmoid(in[0])); }});
  checks.push_back({"softmax",
                    {random_mat(rng, 3, 5)},
                    [&](auto& g, const auto& in) {
                      return sum_all(mul(softmax_rows(in[0]), constant(g, weights35)));
                    }});
  checks.push_back({"layer_norm",
                    {random_mat(rng, 4, 6), random_mat(rng, 1, 6), random_mat(rng, 1, 6)},
                    [&](auto& g, const auto& in) {
                      return sum_all(
                          mul(layer_norm(in[0], in[1], in[2]), constant(g, weights46)));
                    }});
  checks.push_back({"embedding",
                    {random_mat(rng, 5, 3)},
                    [](auto& g, const auto& in) {
                      return sum_all(tanh_op(embedding(in[0], {2, 0, 2, 4})));
                    }});
  checks.push_back({"gather+blocks+concat",
                    {random_mat(rng, 5, 6), random_mat(rng, 5, 2)},
                    [](auto& g, const auto& in) {
                      auto picked = gather_rows(in[0], {1, 3, 3});
                      auto blocked = col_block(row_block(picked, 0, 2), 1, 3);
                      auto joined = concat_cols(blocked, row_block(in[1], 0, 2));
                      return sum_all(tanh_op(joined));
                    }});
  checks.push_back({"dropout",
                    {random_mat(rng, 4, 4)},
                    [&](auto& g, const auto& in) { return sum_all(dropout(in[0], drop)); }});
  checks.push_back({"conv1d_same",
                    {random_mat(rng, 6, 2), random_mat(rng, 6, 3), random_mat(rng, 1, 3)},
                    [](auto& g, const auto& in) {
                      return sum_all(tanh_op(conv1d_same(in[0], in[1], in[2], 3)));
                    }});
  checks.push_back({"lstm_cell",
                    {random_mat(rng, 1, 2), random_mat(rng, 2, 12), random_mat(rng, 3, 12),
                     random_mat(rng, 1, 3), random_mat(rng, 1, 3), random_mat(rng, 1, 12)},
                    [](auto& g, const auto& in) {
                      LstmState<double> st{in[3], in[4]};
                      auto next = lstm_cell(in[0], st, in[1], in[2], in[5]);
                      return sum_all(add(next.h, next.c));
                    }});
  checks.push_back({"lstm_seq",
                    {random_mat(rng, 5, 3), random_mat(rng, 3, 8), random_mat(rng, 2, 8),
                     random_mat(rng, 1, 8)},
                    [](auto& g, const auto& in) {
                      auto fwd = lstm_seq(in[0], in[1], in[2], in[3], false);
                      auto bwd = lstm_seq(in[0], in[1], in[2], in[3], true);
                      return sum_all(tanh_op(concat_cols(fwd, bwd)));
                    }});
  checks.push_back({"attention",
                    {random_mat(rng, 8, 6), random_mat(rng, 8, 6), random_mat(rng, 8, 6),
                     random_mat(rng, 2, 4)},
                    [&](auto& g, const auto& in) {
                      auto out = multihead_attention(in[0], in[1], in[2], in[3], attn_spec);
                      return sum_all(tanh_op(out));
                    }});
  checks.push_back({"cross_entropy",
                    {random_mat(rng, 3, 4)},
                    [](auto& g, const auto& in) { return cross_entropy(in[0], {1, 0, 3}); }});
  checks.push_back({"reductions",
                    {random_mat(rng, 3, 4)},
                    [](auto& g, const auto& in) {
                      return add(mean_all(in[0]), sum_all(tanh_op(in[0])));
                    }});

  for (const auto& check : checks) {
    const double err = grad_check(check.build, check.inputs, check.eps);
    REQUIRE_MSG(err < 1e-4, "kernel %s: max relative error %.3e >= 1e-4", check.name, err);
  }

  // full models: tiny encoder, the four residue heads, the protein head
  {
    EncoderConfig cfg;
    cfg.layers = 2;
    cfg.d_model = 16;
    cfg.ff_width = 32;
    cfg.heads = 2;
    cfg.rel_buckets = 8;
    cfg.rel_max_distance = 16;
    cfg.dropout = 0.0;
    auto params = init_params<double>(cfg, 21);
    auto corpus = motif_corpus(2, 6, 8, 77);
    std::vector<const TokenSeq*> seqs{&corpus[0], &corpus[1]};
    Rng rng2(23);
    auto batch = make_masked_batch(seqs, 8, {0.4, 0.8, 0.1}, rng2);
    const double err = nn::param_grad_check(
        [&](const ParamMap<double>& p, ParamMap<double>* grads) {
          EncoderForward<double> fwd;
          EncodeOptions opts;
          encoder_forward(fwd, cfg, p, batch.inputs, batch.valid, opts, grads != nullptr);
          auto loss = mlm_loss(fwd, batch.target_rows, batch.target_ids);
          if (grads) {
            fwd.graph.backward(loss.loss.node);
            for (const auto& [name, node] : fwd.param_nodes)
              grads->emplace(name, node.grad());
          }
          return double(loss.loss.value()(0, 0));
        },
        params, 1e-3);
    REQUIRE_MSG(err < 1e-4, "tiny encoder: max relative error %.3e >= 1e-4", err);
  }
  {
    HeadHyper hyper;
    hyper.compress_width = 4;
    hyper.lstm_hidden = 3;
    const int width = 6;
    auto features = random_mat(rng, 7, width);
    std::vector<int> t3 = {0, 1, 2, 0, 1, 2, 0};
    std::vector<int> t8 = {0, 1, 2, 3, 4, 5, 6};
    for (auto kind : {HeadKind::LogReg, HeadKind::Fnn, HeadKind::Cnn, HeadKind::Lstm}) {
      auto params = init_head_params<double>(kind, width, hyper, 11);
      Rng perturb(87);  // keeps every ReLU pre-activation clear of the kink
      for (auto& [name, mat] : params)
        for (Eigen::Index i = 0; i < mat.size(); ++i)
          mat.data()[i] = mat.data()[i] * 10.0 + 0.05 * perturb.normal();
      const double err = nn::param_grad_check(
          [&](const ParamMap<double>& p, ParamMap<double>* grads) {
            nn::Graph<double> g;
            std::map<std::string, nn::NodeRef<double>> nodes;
            for (const auto& [name, mat] : p)
              nodes.emplace(name, nn::leaf(g, mat, grads != nullptr));
            auto out = residue_head_forward(g, kind, hyper, nodes,
                                            nn::constant(g, features));
            auto loss = nn::add(nn::cross_entropy(out.logits3, t3),
                                nn::cross_entropy(out.logits8, t8));
            if (grads) {
              g.backward(loss.node);
              for (const auto& [name, node] : nodes) grads->emplace(name, node.grad());
            }
            return double(loss.value()(0, 0));
          },
          params, 1e-3);
      REQUIRE_MSG(err < 1e-4, "%s head: max relative error %.3e >= 1e-4",
                  head_kind_name(kind), err);
    }
    auto pooled = random_mat(rng, 5, width);
    std::vector<int> loc = {0, 3, 9, 2, 5};
    std::vector<int> mem = {0, 1, 0, 1, 1};
    auto params = init_head_params<double>(HeadKind::ProteinFnn, width, hyper, 13);
    Rng perturb(82);
    for (auto& [name, mat] : params)
      for (Eigen::Index i = 0; i < mat.size(); ++i)
        mat.data()[i] = mat.data()[i] * 10.0 + 0.05 * perturb.normal();
    const double err = nn::param_grad_check(
        [&](const ParamMap<double>& p, ParamMap<double>* grads) {
          nn::Graph<double> g;
          std::map<std::string, nn::NodeRef<double>> nodes;
          for (const auto& [name, mat] : p)
            nodes.emplace(name, nn::leaf(g, mat, grads != nullptr));
          auto out = protein_head_forward(g, hyper, nodes, nn::constant(g, pooled));
          auto loss = nn::add(nn::cross_entropy(out.logits_loc, loc),
                              nn::cross_entropy(out.logits_mem, mem));
          if (grads) {
            g.backward(loss.node);
            for (const auto& [name, node] : nodes) grads->emplace(name, node.grad());
          }
          return double(loss.value()(0, 0));
        },
        params, 1e-3);
    REQUIRE_MSG(err < 1e-4, "protein head: max relative error %.3e >= 1e-4", err);
  }
}

// 2. toy pre-training: initial loss near ln(21), masked accuracy > 95%
void criterion_pretraining_learns() {
  ensure_toy_pipeline();
  const double ln21 = std::log(21.0);
  REQUIRE_MSG(std::abs(g_toy.initial_loss - ln21) < 0.05,
              "initial loss %.4f not within 0.05 of ln(21)=%.4f", g_toy.initial_loss,
              ln21);
  REQUIRE_MSG(g_toy.checkpoint.meta.steps == 2000, "expected 2000 steps");
  const double accuracy = toy_masked_accuracy(g_toy.checkpoint, 777);
  REQUIRE_MSG(accuracy > 0.95, "masked accuracy %.4f <= 0.95 after 2000 steps",
              accuracy);
  // the log records the two-phase length curriculum
  bool saw_64 = false, saw_128 = false;
  for (const auto& e : g_toy.log.entries) {
    if (e.max_len == 64) saw_64 = true;
    if (e.max_len == 128) saw_128 = true;
  }
  REQUIRE_MSG(saw_64 && saw_128, "training log is missing a phase");

  // loss trend: non-increasing across smoothed windows of the log
  const auto& entries = g_toy.log.entries;
  REQUIRE_MSG(entries.size() >= 9, "training log too sparse");
  auto window_mean = [&](std::size_t begin, std::size_t end) {
    double sum = 0;
    for (std::size_t i = begin; i < end; ++i) sum += entries[i].loss;
    return sum / double(end - begin);
  };
  const std::size_t third = entries.size() / 3;
  const double w0 = window_mean(0, third);
  const double w1 = window_mean(third, 2 * third);
  const double w2 = window_mean(2 * third, entries.size());
  REQUIRE_MSG(w0 > w1 && w1 > w2, "smoothed loss not decreasing: %.3f, %.3f, %.3f", w0,
              w1, w2);
}

// 3. CNN on pre-trained embeddings beats CNN on random-init embeddings
void criterion_transfer_beats_random() {
  ensure_longrange();
  const double gap = g_longrange.q3_pretrained - g_longrange.q3_random;
  REQUIRE_MSG(gap >= 10.0,
              "pretrained Q3 %.1f vs random Q3 %.1f: gap %.1f < 10 points",
              g_longrange.q3_pretrained, g_longrange.q3_random, gap);
}

// 4. data-parallel gradients equal the single worker; near-linear wall time
void criterion_data_parallel() {
  auto cfg = toy_encoder_config();
  cfg.d_model = 32;
  cfg.ff_width = 64;
  auto corpus = motif_corpus(16, 40, 60, 31);
  std::vector<const TokenSeq*> seqs;
  for (const auto& s : corpus) seqs.push_back(&s);
  Rng rng(32);
  auto batch = make_masked_batch(seqs, 64, {0.3, 0.8, 0.1}, rng);

  {
    auto params = init_params<double>(cfg, 33);
    auto g1 = data_parallel_gradients(cfg, params, batch, 1);
    auto g4 = data_parallel_gradients(cfg, params, batch, 4);
    double max_diff = 0.0;
    for (const auto& [name, grad] : g1)
      max_diff = std::max(max_diff, double((grad - g4.at(name)).cwiseAbs().maxCoeff()));
    REQUIRE_MSG(max_diff < 1e-10, "4-worker gradients differ by %.3e >= 1e-10",
                max_diff);
  }

  // wall-time overhead of 4 workers vs 1 on a fixed global batch < 50%
  auto fparams = init_params<float>(cfg, 33);
  auto time_workers = [&](int workers) {
    double best = 1e100;
    for (int rep = 0; rep < 5; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      data_parallel_gradients(cfg, fparams, batch, workers);
      best = std::min(best, std::chrono::duration<double>(
                                std::chrono::steady_clock::now() - t0)
                                .count());
    }
    return best;
  };
  time_workers(1);  // warm-up
  const double t1 = time_workers(1);
  const double t4 = time_workers(4);
  REQUIRE_MSG(t4 < 1.5 * t1, "4 workers took %.3fs vs %.3fs single (overhead >= 50%%)",
              t4, t1);
}

// 5. metric oracles
void criterion_metric_oracles() {
  Rng rng(51);
  for (int trial = 0; trial < 100; ++trial) {
    const int states = 2 + int(rng.uniform_int(9));
    std::vector<LabeledSeq> pred, gold;
    const int proteins = 1 + int(rng.uniform_int(6));
    std::size_t correct = 0, total = 0;
    for (int p = 0; p < proteins; ++p) {
      LabeledSeq gp{"p" + std::to_string(p), {}};
      LabeledSeq pp = gp;
      const std::size_t len = 1 + rng.uniform_int(40);
      for (std::size_t i = 0; i < len; ++i) {
        gp.labels.push_back(int(rng.uniform_int(std::uint32_t(states))));
        pp.labels.push_back(int(rng.uniform_int(std::uint32_t(states))));
        total++;
        if (gp.labels.back() == pp.labels.back()) correct++;
      }
      gold.push_back(gp);
      pred.push_back(pp);
    }
    const auto report = q_accuracy(pred, gold, states);
    const double oracle = 100.0 * double(correct) / double(total);
    REQUIRE_MSG(std::abs(report.micro - oracle) < 1e-9,
                "q_accuracy micro %.6f != counting oracle %.6f", report.micro, oracle);
  }

  const double exact = std::sqrt(1250.0);  // enumeration over the 4 resamples
  const double estimate = bootstrap_se({0.0, 100.0}, 10000, 42);
  REQUIRE_MSG(std::abs(estimate - exact) < 1.0,
              "bootstrap SE %.4f not within 1.0 of sqrt(1250)=%.4f", estimate, exact);
  REQUIRE_MSG(bootstrap_se({61.5, 61.5, 61.5, 61.5}, 5000, 7) == 0.0,
              "constant scores must give SE exactly 0");
}

// 6. redundancy guarantee through the make-testset CLI
void criterion_redundancy() {
  Rng rng(61);
  auto random_seq = [&](std::size_t len) {
    std::string s;
    for (std::size_t i = 0; i < len; ++i)
      s.push_back(Vocabulary::decode(TokenId(rng.uniform_int(20))));
    return s;
  };
  auto mutate = [&](std::string s, int sites) {
    for (int m = 0; m < sites; ++m)
      s[rng.uniform_int(std::uint32_t(s.size()))] =
          Vocabulary::decode(TokenId(rng.uniform_int(20)));
    return s;
  };

  // Random same-length pairs score ~15-18% PIDE on average, so an uncurated
  // random fixture collapses at a 20% threshold. Build a pool of mutually
  // dissimilar sequences first, then plant near-duplicates around it.
  std::vector<std::string> pool;
  for (int tries = 0; tries < 20000 && pool.size() < 24; ++tries) {
    const std::string s = random_seq(50 + rng.uniform_int(20));
    bool ok = true;
    for (const auto& other : pool)
      if (pairwise_identity(s, other).pide >= 19.0) {
        ok = false;
        break;
      }
    if (ok) pool.push_back(s);
  }
  REQUIRE_MSG(pool.size() == 24, "could not assemble a dissimilar pool (%zu)",
              pool.size());

  std::vector<SequenceRecord> refs, candidates;
  for (int i = 0; i < 4; ++i)
    refs.push_back({"ref" + std::to_string(i), "", pool[std::size_t(i)]});
  // 200 candidates: 20 pool members that should survive, near-duplicates of
  // pool members and references that must be dropped, plus random filler
  int next = 0;
  for (int i = 0; i < 20; ++i)
    candidates.push_back({"cand" + std::to_string(next++), "", pool[std::size_t(4 + i)]});
  for (int i = 0; i < 90; ++i)
    candidates.push_back({"cand" + std::to_string(next++), "",
                          mutate(pool[4 + rng.uniform_int(20)], 6)});
  for (int i = 0; i < 60; ++i)
    candidates.push_back({"cand" + std::to_string(next++), "",
                          mutate(refs[rng.uniform_int(4)].residues, 6)});
  for (int i = 0; i < 30; ++i)
    candidates.push_back({"cand" + std::to_string(next++), "",
                          random_seq(50 + rng.uniform_int(20))});
  REQUIRE_MSG(candidates.size() == 200, "fixture must have 200 candidates");

  const fs::path dir = g_work / "testset";
  fs::create_directories(dir);
  {
    std::ofstream c(dir / "cands.fasta"), r(dir / "refs.fasta");
    write_fasta(c, candidates);
    write_fasta(r, refs);
  }
  run_cli("make-testset --candidates " + (dir / "cands.fasta").string() + " --refs " +
          (dir / "refs.fasta").string() + " --threshold 20 --out " +
          (dir / "kept.txt").string() + " --audit " + (dir / "audit.json").string());

  std::vector<const SequenceRecord*> kept;
  {
    std::ifstream in(dir / "kept.txt");
    std::string id;
    while (std::getline(in, id)) {
      const SequenceRecord* found = nullptr;
      for (const auto& c : candidates)
        if (c.id == id) found = &c;
      REQUIRE_MSG(found != nullptr, "kept id '%s' is not a candidate", id.c_str());
      kept.push_back(found);
    }
  }
  REQUIRE_MSG(kept.size() >= 15, "kept only %zu sequences; fixture degenerated",
              kept.size());

  // exhaustive re-check: no kept-kept or kept-ref pair above the threshold
  for (std::size_t i = 0; i < kept.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const double pide = pairwise_identity(kept[i]->residues, kept[j]->residues).pide;
      REQUIRE_MSG(pide <= 20.0, "kept pair %s/%s has PIDE %.2f > 20", kept[i]->id.c_str(),
                  kept[j]->id.c_str(), pide);
    }
    for (const auto& ref : refs) {
      const double pide = pairwise_identity(kept[i]->residues, ref.residues).pide;
      REQUIRE_MSG(pide <= 20.0, "kept %s vs ref %s has PIDE %.2f > 20",
                  kept[i]->id.c_str(), ref.id.c_str(), pide);
    }
  }

  // alignment scores equal brute-force enumeration for all short pairs
  struct Oracle {
    static long best(const std::string& a, const std::string& b, std::size_t i,
                     std::size_t j, int last, const AlignParams& p) {
      if (i == a.size() && j == b.size()) return 0;
      long best_score = std::numeric_limits<long>::min() / 4;
      if (i < a.size() && j < b.size())
        best_score = std::max(best_score, long(blosum62_score_chars(a[i], b[j])) +
                                              best(a, b, i + 1, j + 1, 0, p));
      if (i < a.size())
        best_score = std::max(best_score, (last == 1 ? p.gap_extend : p.gap_open) +
                                              best(a, b, i + 1, j, 1, p));
      if (j < b.size())
        best_score = std::max(best_score, (last == 2 ? p.gap_extend : p.gap_open) +
                                              best(a, b, i, j + 1, 2, p));
      return best_score;
    }
  };
  for (int trial = 0; trial < 150; ++trial) {
    const std::string a = random_seq(1 + rng.uniform_int(6));
    const std::string b = random_seq(1 + rng.uniform_int(6));
    const auto result = pairwise_identity(a, b);
    const long oracle = Oracle::best(a, b, 0, 0, -1, {});
    REQUIRE_MSG(result.score == oracle, "DP score %ld != enumeration %ld for %s/%s",
                result.score, oracle, a.c_str(), b.c_str());
  }
}

// 7. pooling properties over 1000 random matrices
void criterion_pooling() {
  Rng rng(71);
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Index rows = 1 + Eigen::Index(rng.uniform_int(12));
    const Eigen::Index d = 2 + Eigen::Index(rng.uniform_int(10));
    nn::Mat<float> m(rows, d);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = float(rng.normal());
    nn::Mat<float> shuffled = m;
    for (Eigen::Index r = rows; r > 1; --r) {
      const Eigen::Index other = Eigen::Index(rng.uniform_int(std::uint32_t(r)));
      shuffled.row(r - 1).swap(shuffled.row(other));
    }
    for (auto s : {PoolStrategy::Mean, PoolStrategy::Min, PoolStrategy::Max,
                   PoolStrategy::Concat}) {
      const auto a = pool(m, s).values;
      const auto b = pool(shuffled, s).values;
      REQUIRE_MSG((a - b).cwiseAbs().maxCoeff() < 1e-5f,
                  "pooling not permutation invariant (trial %d)", trial);
      const Eigen::Index expect = s == PoolStrategy::Concat ? 3 * d : d;
      REQUIRE_MSG(a.cols() == expect, "pooled width %ld != %ld", long(a.cols()),
                  long(expect));
    }
    if (rows == 1) {
      for (auto s : {PoolStrategy::Mean, PoolStrategy::Min, PoolStrategy::Max}) {
        REQUIRE_MSG((pool(m, s).values - m.row(0)).cwiseAbs().maxCoeff() == 0.0f,
                    "single-row pooling must reproduce the row");
      }
    }
  }
}

// 8. t-SNE calibration at the settings used throughout
void criterion_tsne() {
  Rng rng(81);
  const int n = 500;
  nn::Mat<double> points(n, 16);
  for (int i = 0; i < n; ++i) {
    const int cluster = i % 5;
    for (int d = 0; d < 16; ++d)
      points(i, d) = 3.0 * cluster * (d % 5 == cluster) + rng.normal() * 0.4;
  }
  TsneParams params;
  params.perplexity = 30;
  params.iterations = 3000;
  params.seed = 42;

  auto a = tsne(points, params);
  REQUIRE_MSG(a.max_entropy_error < 1e-3,
              "conditional entropy off by %.2e >= 1e-3 nats", a.max_entropy_error);
  REQUIRE_MSG(a.final_kl < a.initial_kl, "final KL %.4f >= initial KL %.4f", a.final_kl,
              a.initial_kl);

  auto b = tsne(points, params);
  REQUIRE_MSG((a.coords - b.coords).cwiseAbs().maxCoeff() == 0.0,
              "seed-42 reruns are not bit-identical");
}

// 9. half-precision inference leaves Q3 nearly unchanged
void criterion_half_precision() {
  ensure_longrange();
  const auto full = featurize(g_longrange.trained, g_longrange.test_task, Precision::Full);
  const auto half = featurize(g_longrange.trained, g_longrange.test_task, Precision::Half);
  const double q3_full = task_q3(g_longrange.head_on_trained, full);
  const double q3_half = task_q3(g_longrange.head_on_trained, half);
  REQUIRE_MSG(std::abs(q3_half - q3_full) < 0.5,
              "Q3(half)=%.2f vs Q3(full)=%.2f differ by >= 0.5 points", q3_half,
              q3_full);
}

// 10. benchmark grid shape and length scaling
void criterion_bench() {
  EncoderConfig cfg;
  cfg.layers = 1;
  cfg.d_model = 32;
  cfg.ff_width = 64;
  cfg.heads = 2;
  cfg.dropout = 0.0;
  auto ckpt = init_encoder(cfg, 9);
  auto report = bench_inference(ckpt, {128, 256, 512}, {1, 16, 32}, 100, Precision::Full);
  REQUIRE_MSG(report.cells.size() == 9, "expected 9 grid rows, got %zu",
              report.cells.size());
  double t128 = 0, t512 = 0;
  for (const auto& cell : report.cells) {
    REQUIRE_MSG(cell.repeats == 100, "repeats %d != 100", cell.repeats);
    REQUIRE_MSG(cell.supported && cell.mean_seconds_per_protein > 0, "bad cell");
    if (cell.batch == 1 && cell.length == 128) t128 = cell.mean_seconds_per_protein;
    if (cell.batch == 1 && cell.length == 512) t512 = cell.mean_seconds_per_protein;
  }
  REQUIRE_MSG(t512 >= 0.9 * t128,
              "per-protein time at length 512 (%.6fs) < 0.9x length 128 (%.6fs)", t512,
              t128);
  // schema-valid JSON
  const auto parsed = nlohmann::json::parse(report.to_json());
  REQUIRE_MSG(parsed.at("grid").size() == 9, "report JSON grid malformed");
}

// 11. Spearman utility
void criterion_spearman() {
  {
    std::vector<double> x = {1, 2, 3, 4, 5}, up = {2, 4, 8, 16, 32},
                        down = {9, 7, 5, 3, 1};
    REQUIRE_MSG(std::abs(spearman(x, up) - 1.0) < 1e-12, "monotone rho != 1");
    REQUIRE_MSG(std::abs(spearman(x, down) + 1.0) < 1e-12, "reversed rho != -1");
  }
  Rng rng(111);
  auto oracle_rank = [](const std::vector<double>& v, std::size_t i) {
    std::size_t less = 0, equal = 0;
    for (double other : v) {
      if (other < v[i]) less++;
      if (other == v[i]) equal++;
    }
    return 1.0 + double(less) + (double(equal) - 1.0) / 2.0;
  };
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 3 + rng.uniform_int(40);
    std::vector<double> x, y;
    for (std::size_t i = 0; i < n; ++i) {
      x.push_back(double(rng.uniform_int(8)));
      y.push_back(double(rng.uniform_int(8)));
    }
    auto constant = [](const std::vector<double>& v) {
      for (double e : v)
        if (e != v[0]) return false;
      return true;
    };
    if (constant(x) || constant(y)) continue;
    std::vector<double> rx, ry;
    for (std::size_t i = 0; i < n; ++i) {
      rx.push_back(oracle_rank(x, i));
      ry.push_back(oracle_rank(y, i));
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += rx[i];
      my += ry[i];
    }
    mx /= double(n);
    my /= double(n);
    double cov = 0, vx = 0, vy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      cov += (rx[i] - mx) * (ry[i] - my);
      vx += (rx[i] - mx) * (rx[i] - mx);
      vy += (ry[i] - my) * (ry[i] - my);
    }
    const double oracle = cov / std::sqrt(vx * vy);
    REQUIRE_MSG(std::abs(spearman(x, y) - oracle) < 1e-12,
                "spearman %.12f != oracle %.12f", spearman(x, y), oracle);
  }
}

// 12. byte-identical reruns through the CLI
void criterion_determinism() {
  const fs::path dir = g_work / "determinism";
  fs::create_directories(dir);

  // small FASTA corpus
  {
    Rng rng(121);
    std::vector<SequenceRecord> records;
    for (int i = 0; i < 24; ++i) {
      std::string s;
      for (int j = 0; j < 30 + int(rng.uniform_int(20)); ++j)
        s.push_back(Vocabulary::decode(TokenId(rng.uniform_int(20))));
      records.push_back({"d" + std::to_string(i), "", s});
    }
    std::ofstream f(dir / "corpus.fasta");
    write_fasta(f, records);
  }
  run_cli("prepare --in " + (dir / "corpus.fasta").string() + " --shards 2 --out " +
          (dir / "data").string());
  {
    std::ofstream cfg(dir / "cfg.json");
    cfg << R"({"data_dir": ")" << (dir / "data").string() << R"(",
      "encoder": {"layers": 2, "d_model": 32, "ff_width": 64, "heads": 2, "dropout": 0.1},
      "schedule": {"kind": "linear-warmup-constant", "warmup_steps": 10, "peak_lr": 0.001},
      "phases": [{"max_len": 48, "steps": 30, "batch_size": 8}],
      "corpus_id": "determinism"})";
  }
  run_cli("pretrain --config " + (dir / "cfg.json").string() + " --out " +
          (dir / "a.plmc").string() + " --seed 42");
  run_cli("pretrain --config " + (dir / "cfg.json").string() + " --out " +
          (dir / "b.plmc").string() + " --seed 42");
  REQUIRE_MSG(file_bytes(dir / "a.plmc") == file_bytes(dir / "b.plmc"),
              "pretrain reruns differ");

  run_cli("embed --ckpt " + (dir / "a.plmc").string() + " --in " +
          (dir / "corpus.fasta").string() + " --out " + (dir / "emb.plme").string());
  run_cli("embed --ckpt " + (dir / "a.plmc").string() + " --in " +
          (dir / "corpus.fasta").string() + " --out " + (dir / "pooled.plme").string() +
          " --pool mean");
  {
    // synthetic residue labels
    auto corpus = parse_fasta_file((dir / "corpus.fasta").string());
    std::ofstream out(dir / "labels.tsv");
    Rng rng(122);
    for (const auto& rec : corpus) {
      std::string ss8;
      for (std::size_t i = 0; i < rec.residues.size(); ++i)
        ss8.push_back(kSs8Alphabet[rng.uniform_int(8)]);
      out << rec.id << '\t' << rec.residues << '\t' << ss8 << '\n';
    }
  }
  run_cli("train-head --kind fnn --features " + (dir / "emb.plme").string() +
          " --labels " + (dir / "labels.tsv").string() + " --out " +
          (dir / "ha.plmh").string() + " --seed 5");
  run_cli("train-head --kind fnn --features " + (dir / "emb.plme").string() +
          " --labels " + (dir / "labels.tsv").string() + " --out " +
          (dir / "hb.plmh").string() + " --seed 5");
  REQUIRE_MSG(file_bytes(dir / "ha.plmh") == file_bytes(dir / "hb.plmh"),
              "train-head reruns differ");

  {
    std::ofstream ann(dir / "ann.tsv");
    auto corpus = parse_fasta_file((dir / "corpus.fasta").string());
    for (std::size_t i = 0; i < corpus.size(); ++i)
      ann << corpus[i].id << "\tg" << i % 3 << '\n';
  }
  run_cli("project --embeddings " + (dir / "pooled.plme").string() + " --annotations " +
          (dir / "ann.tsv").string() + " --out " + (dir / "pa").string() +
          " --perplexity 6 --iterations 600 --seed 42");
  run_cli("project --embeddings " + (dir / "pooled.plme").string() + " --annotations " +
          (dir / "ann.tsv").string() + " --out " + (dir / "pb").string() +
          " --perplexity 6 --iterations 600 --seed 42");
  REQUIRE_MSG(file_bytes(dir / "pa.coords.csv") == file_bytes(dir / "pb.coords.csv"),
              "tsne reruns differ");

  run_cli("predict --model " + (dir / "ha.plmh").string() + " --features " +
          (dir / "emb.plme").string() + " --out " + (dir / "pred.tsv").string());
  run_cli("eval --pred " + (dir / "pred.tsv").string() + " --gold " +
          (dir / "labels.tsv").string() + " --states 3 --bootstrap 1000 --seed 42 --out " +
          (dir / "ra.json").string());
  run_cli("eval --pred " + (dir / "pred.tsv").string() + " --gold " +
          (dir / "labels.tsv").string() + " --states 3 --bootstrap 1000 --seed 42 --out " +
          (dir / "rb.json").string());
  REQUIRE_MSG(file_bytes(dir / "ra.json") == file_bytes(dir / "rb.json"),
              "bootstrap reruns differ");
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--cli" && i + 1 < argc) g_cli = argv[++i];
    if (arg == "--only" && i + 1 < argc) only = std::atoi(argv[++i]);
  }
  g_work = fs::temp_directory_path() / "plmkit_acceptance";
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  struct Criterion {
    int id;
    const char* title;
    std::function<void()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient correctness: kernels and full models < 1e-4", criterion_gradients},
      {2, "pre-training learns: init loss ~ ln(21), masked accuracy > 95%",
       criterion_pretraining_learns},
      {3, "transfer beats random init by >= 10 Q3 points", criterion_transfer_beats_random},
      {4, "data-parallel equivalence within 1e-10 and < 50% overhead",
       criterion_data_parallel},
      {5, "metric oracles: counting, bootstrap enumeration", criterion_metric_oracles},
      {6, "redundancy guarantee: no kept pair above 20% PIDE", criterion_redundancy},
      {7, "pooling properties over 1000 random matrices", criterion_pooling},
      {8, "t-SNE calibration at perplexity 30 on 500 points", criterion_tsne},
      {9, "half-precision inference: |dQ3| < 0.5 points", criterion_half_precision},
      {10, "benchmark grid: 3x3, repeats=100, length scaling", criterion_bench},
      {11, "spearman: monotone fixtures and rank oracle", criterion_spearman},
      {12, "determinism: byte-identical CLI reruns", criterion_determinism},
  };

  int failures = 0;
  for (const auto& criterion : criteria) {
    if (only != 0 && criterion.id != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    std::string message;
    bool ok = true;
    try {
      criterion.run();
    } catch (const std::exception& e) {
      ok = false;
      message = e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s  criterion %2d (%6.1fs): %s%s%s\n", ok ? "PASS" : "FAIL",
                criterion.id, secs, criterion.title, ok ? "" : " -- ",
                message.c_str());
    std::fflush(stdout);
    if (!ok) failures++;
  }
  if (failures) std::printf("%d criterion(s) FAILED\n", failures);
  return failures == 0 ? 0 : 1;
}
