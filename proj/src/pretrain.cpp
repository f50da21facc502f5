#include "plmkit/pretrain.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <ostream>

namespace plmkit {

void TrainingLog::write_tsv(std::ostream& out) const {
  out << "step\tloss\tlearning_rate\tsamples_seen\twall_seconds\tmax_len\tmasked_accuracy\n";
  for (const auto& e : entries) {
    out << e.step << '\t' << e.loss << '\t' << e.learning_rate << '\t'
        << e.samples_seen << '\t' << e.wall_seconds << '\t' << e.max_len << '\t'
        << e.masked_accuracy << '\n';
  }
}

Checkpoint pretrain(const std::vector<TokenSeq>& corpus, const PretrainConfig& cfg,
                    TrainingLog* log) {
  cfg.encoder.validate();
  cfg.corruption.validate();
  if (cfg.phases.empty()) throw ContractError("pretrain: at least one phase required");
  for (const auto& phase : cfg.phases) {
    if (phase.max_len < 1 || phase.steps < 1 || phase.batch_size < 1)
      throw ContractError("pretrain: phase fields must be >= 1");
    if (std::size_t(phase.batch_size) > corpus.size())
      throw UserError("pretrain: corpus has " + std::to_string(corpus.size()) +
                      " records, smaller than one batch of " +
                      std::to_string(phase.batch_size));
  }

  Checkpoint ckpt;
  ckpt.config = cfg.encoder;
  ckpt.params = init_params<float>(cfg.encoder, cfg.seed);
  ckpt.meta.seed = cfg.seed;
  ckpt.meta.corpus_id = cfg.corpus_id;
  ckpt.meta.optimizer = nn::optimizer_name(cfg.optimizer);
  ckpt.meta.schedule = nn::schedule_name(cfg.schedule.kind);

  nn::OptimizerState<float> opt;
  opt.kind = cfg.optimizer;
  opt.hyper = cfg.hyper;

  const Rng root(cfg.seed);
  const auto t0 = std::chrono::steady_clock::now();
  long global_step = 0;
  long samples_seen = 0;
  std::size_t truncated = 0;

  for (std::size_t phase_idx = 0; phase_idx < cfg.phases.size(); ++phase_idx) {
    const PretrainPhase& phase = cfg.phases[phase_idx];
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();  // forces a shuffle on first use
    long epoch = 0;

    for (long step = 0; step < phase.steps; ++step) {
      global_step++;

      // assemble the next batch, skipping (rare) batches with no targets
      MaskedBatch batch;
      for (int attempt = 0;; ++attempt) {
        std::vector<const TokenSeq*> seqs;
        for (long i = 0; i < phase.batch_size; ++i) {
          if (cursor == order.size()) {
            Rng shuffle_rng = root.fork(0x5A5A0000ull + phase_idx * 1000003ull +
                                        std::uint64_t(epoch));
            for (std::size_t j = order.size(); j > 1; --j)
              std::swap(order[j - 1], order[shuffle_rng.uniform_int(std::uint32_t(j))]);
            cursor = 0;
            epoch++;
          }
          seqs.push_back(&corpus[order[cursor++]]);
        }
        Rng batch_rng = root.fork(0xBA7C0000ull + std::uint64_t(global_step) * 31337ull +
                                  std::uint64_t(attempt));
        batch = make_masked_batch(seqs, std::size_t(phase.max_len), cfg.corruption,
                                  batch_rng, &truncated);
        if (!batch.target_rows.empty()) break;
        if (attempt > 64)
          throw InternalError("pretrain: could not assemble a batch with targets");
      }

      std::vector<Rng> dropout_rngs;
      std::vector<Rng>* dropout_ptr = nullptr;
      if (cfg.encoder.dropout > 0.0) {
        for (Eigen::Index b = 0; b < batch.size(); ++b)
          dropout_rngs.push_back(root.fork(0xD80F0000ull +
                                           std::uint64_t(global_step) * 65537ull +
                                           std::uint64_t(b)));
        dropout_ptr = &dropout_rngs;
      }

      GradientStats stats;
      auto grads = data_parallel_gradients(cfg.encoder, ckpt.params, batch,
                                           cfg.workers, &stats, dropout_ptr);
      const double lr = nn::schedule_at(cfg.schedule, global_step);
      nn::optimizer_step(opt, ckpt.params, grads, lr);
      samples_seen += phase.batch_size;

      if (log && (global_step % cfg.log_every == 0 || step == phase.steps - 1)) {
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log->entries.push_back({global_step, stats.loss, lr, samples_seen, wall,
                                phase.max_len, stats.accuracy});
      }
    }
    ckpt.meta.phases.push_back({phase.max_len, phase.steps, phase.batch_size});
  }

  ckpt.meta.steps = global_step;
  ckpt.meta.global_batch_size = cfg.phases.back().batch_size;
  ckpt.meta.samples_seen = samples_seen;
  if (log) log->truncated_records = truncated;
  ckpt.meta.validate();
  return ckpt;
}

}  // namespace plmkit
