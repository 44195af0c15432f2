// Library walk-through: synthetic corpus -> train -> score heads -> prune ->
// compare, printing the comparison table.
//
//   desk_pipeline [seed]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iostream>

#include "headprune/headprune.hpp"

int main(int argc, char** argv) {
  using namespace headprune;
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 7;
  const auto start = std::chrono::steady_clock::now();

  const auto corpus = make_synthetic_corpus(200, 0.5, seed);
  const TaskSpec task = TaskSpec::parse("idiom");
  const CorpusSplits splits = carve_splits(corpus, seed);
  const Vocabulary vocab = build_vocab(splits.train, 256);

  ModelConfig mc = ModelConfig::desk(vocab.size());
  TrainConfig tc = TrainConfig::desk();
  tc.seed = seed;

  auto encode = [&](const std::vector<CorpusRecord>& rows) { return encode_examples(rows, vocab, task, mc.max_len); };
  const auto train_set = encode(splits.train);
  const auto val_set = encode(splits.validation);
  const auto test_set = encode(splits.test);

  TrainResult trained = train(Model(mc, seed), train_set, val_set, tc);
  for (const auto& r : trained.fit.history) {
    std::printf("epoch %2zu  train %.4f  val %.4f  acc %.3f\n", r.epoch, r.train_loss, r.val_loss, r.val_accuracy);
  }

  const ImportanceGrid grid = score_heads(trained.model, train_set, task);
  PruneResult pruned = prune(trained.model, grid, 0.0);
  std::printf("%zu of %zu heads retained\n", pruned.report.retained_count, pruned.report.total_count);

  Checkpoint original{trained.model, vocab, task, tc, {}};
  Checkpoint after{pruned.model, vocab, task, tc, {}};
  const Comparison cmp = compare(original, after, test_set, task);
  std::cout << render_comparison_table(cmp.original, cmp.pruned);

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("elapsed %.1fs\n", secs);
  return 0;
}
