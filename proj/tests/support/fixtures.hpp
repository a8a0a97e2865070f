#pragma once

#include <string>
#include <vector>

#include "dapt/synthetic.hpp"
#include "dapt/tokenizer.hpp"
#include "dapt/training.hpp"

namespace dapt::testing {

/// Small separable binary task with its tokenizer and a compact model.
struct BinaryFixture {
  Tokenizer tokenizer;
  ModelConfig model;
  std::vector<Document> docs;
  std::vector<ClassificationExample> train;
  std::vector<ClassificationExample> validation;

  explicit BinaryFixture(std::size_t per_class = 40, std::uint64_t seed = 1, int vocab = 320) {
    docs = synthetic::binary_task(per_class, seed);
    std::vector<std::string> texts;
    for (const auto& d : docs) texts.push_back(d.text);
    tokenizer = Tokenizer::train(texts, static_cast<std::size_t>(vocab));
    model.num_layers = 1;
    model.num_heads = 2;
    model.hidden_dim = 16;
    model.ff_dim = 32;
    model.max_positions = 64;
    model.vocab_size = static_cast<int>(tokenizer.vocab_size());
    auto all = make_classification_examples(docs, tokenizer, ClassMap::binary(), model.max_positions);
    const std::size_t cut = all.size() * 3 / 4;
    train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(cut));
    validation.assign(all.begin() + static_cast<std::ptrdiff_t>(cut), all.end());
  }

  TrainingConfig finetune_config() const {
    TrainingConfig c;
    c.learning_rate = 2e-3;
    c.batch_size = 8;
    c.epochs = 3;
    c.eval_checkpoints = 5;
    c.seed = 7;
    return c;
  }

  std::vector<Segment> segments(int length = 32) const {
    std::vector<std::vector<TokenId>> ids;
    for (const auto& d : docs) ids.push_back(tokenizer.encode(d.text));
    return pack_segments(ids, length);
  }
};

}  // namespace dapt::testing
