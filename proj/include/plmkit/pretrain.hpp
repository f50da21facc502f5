#pragma once

#include <thread>
#include <vector>

#include "plmkit/encoder.hpp"
#include "plmkit/optim.hpp"
#include "plmkit/schedule.hpp"
#include "plmkit/shards.hpp"

namespace plmkit {

template <typename To, typename From>
ParamMap<To> cast_params(const ParamMap<From>& in) {
  ParamMap<To> out;
  for (const auto& [name, mat] : in)
    out.emplace(name, mat.template cast<To>());
  return out;
}

struct GradientStats {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t targets = 0;
};

// Synchronous data-parallel gradients: the global batch is split into
// contiguous micro-batches, each worker backpropagates independently, and the
// per-worker gradients are combined in worker-index order weighted by target
// count. The result equals the single-worker gradient on the full batch up to
// floating-point reassociation.
template <typename S>
ParamMap<S> data_parallel_gradients(const EncoderConfig& cfg,
                                    const ParamMap<S>& params,
                                    const MaskedBatch& batch, int n_workers,
                                    GradientStats* stats = nullptr,
                                    std::vector<Rng>* dropout_rngs = nullptr) {
  if (n_workers < 1) throw ContractError("data_parallel: n_workers must be >= 1");
  const Eigen::Index B = batch.size();
  if (B % n_workers != 0)
    throw ContractError(
        "data_parallel: global batch of " + std::to_string(B) +
        " is not divisible by " + std::to_string(n_workers) +
        " workers; pad the batch or change the worker count");
  const Eigen::Index per = B / n_workers;
  const Eigen::Index L = batch.max_len();

  struct WorkerOut {
    ParamMap<S> grads;
    double loss = 0.0;
    std::size_t correct = 0;
    std::size_t targets = 0;
  };
  auto outs = std::vector<WorkerOut>(std::size_t(n_workers));

  auto run_worker = [&](int w) {
    WorkerOut& out = outs[std::size_t(w)];
    const Eigen::Index row0 = Eigen::Index(w) * per;

    // local slice of targets, rebased to worker-local rows
    std::vector<std::size_t> rows;
    std::vector<TokenId> ids;
    for (std::size_t t = 0; t < batch.target_rows.size(); ++t) {
      const Eigen::Index ex = Eigen::Index(batch.target_rows[t]) / L;
      if (ex < row0 || ex >= row0 + per) continue;
      rows.push_back(batch.target_rows[t] - std::size_t(row0) * std::size_t(L));
      ids.push_back(batch.target_ids[t]);
    }
    out.targets = rows.size();
    if (rows.empty()) return;  // contributes nothing

    EncodeOptions opts;
    opts.train = true;
    std::vector<Rng> local_rngs;
    if (dropout_rngs && cfg.dropout > 0.0) {
      for (Eigen::Index b = row0; b < row0 + per; ++b)
        local_rngs.push_back((*dropout_rngs)[std::size_t(b)]);
      opts.dropout_rngs = &local_rngs;
    }

    EncoderForward<S> fwd;
    encoder_forward(fwd, cfg, params, batch.inputs.middleRows(row0, per).eval(),
                    batch.valid.middleRows(row0, per).eval(), opts, true);
    auto loss = mlm_loss(fwd, rows, ids);
    fwd.graph.backward(loss.loss.node);

    out.loss = double(loss.loss.value()(0, 0));
    out.correct = std::size_t(loss.accuracy * double(loss.targets) + 0.5);
    for (const auto& [name, node] : fwd.param_nodes)
      out.grads.emplace(name, node.grad());
  };

  if (n_workers == 1) {
    run_worker(0);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(std::size_t(n_workers));
    for (int w = 0; w < n_workers; ++w) threads.emplace_back(run_worker, w);
    for (auto& t : threads) t.join();
  }

  std::size_t total_targets = 0;
  for (const auto& o : outs) total_targets += o.targets;
  if (total_targets == 0)
    throw ContractError("data_parallel: batch produced no targets");

  // fixed-order weighted reduction
  ParamMap<S> combined;
  for (const auto& [name, mat] : params)
    combined.emplace(name, nn::Mat<S>::Zero(mat.rows(), mat.cols()));
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (int w = 0; w < n_workers; ++w) {
    const WorkerOut& o = outs[std::size_t(w)];
    if (o.targets == 0) continue;
    const S weight = S(double(o.targets) / double(total_targets));
    for (auto& [name, grad] : combined) grad += weight * o.grads.at(name);
    loss_sum += double(o.targets) / double(total_targets) * o.loss;
    correct += o.correct;
  }
  if (stats) {
    stats->loss = loss_sum;
    stats->accuracy = double(correct) / double(total_targets);
    stats->targets = total_targets;
  }
  return combined;
}

struct PretrainPhase {
  int max_len = 0;
  long steps = 0;
  long batch_size = 0;
};

struct PretrainConfig {
  EncoderConfig encoder;
  nn::Schedule schedule;
  nn::OptimizerKind optimizer = nn::OptimizerKind::Adam;
  nn::OptimizerHyper hyper;
  CorruptionPolicy corruption;
  std::vector<PretrainPhase> phases;
  std::uint64_t seed = 42;
  int workers = 1;
  long log_every = 100;
  std::string corpus_id;
};

struct TrainingLogEntry {
  long step = 0;
  double loss = 0.0;
  double learning_rate = 0.0;
  long samples_seen = 0;
  double wall_seconds = 0.0;
  int max_len = 0;
  double masked_accuracy = 0.0;
};

struct TrainingLog {
  std::vector<TrainingLogEntry> entries;
  std::size_t truncated_records = 0;
  void write_tsv(std::ostream& out) const;
};

Checkpoint pretrain(const std::vector<TokenSeq>& corpus, const PretrainConfig& cfg,
                    TrainingLog* log = nullptr);

}  // namespace plmkit
