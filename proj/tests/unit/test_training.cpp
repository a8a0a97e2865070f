#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "dapt/eval.hpp"
#include "dapt/training.hpp"
#include "fixtures.hpp"

using namespace dapt;

TEST_SUITE("training") {
  TEST_CASE("packing joins documents with separators") {
    auto segs = pack_segments({{10, 11, 12}, {}, {13, 14}, {15}}, 3);
    // stream: 10 11 12 SEP 13 14 SEP 15
    REQUIRE(segs.size() == 3);
    CHECK(segs[0] == Segment{10, 11, 12});
    CHECK(segs[1] == Segment{SpecialTokens::kSep, 13, 14});
    CHECK(segs[2] == Segment{SpecialTokens::kSep, 15});
    CHECK_THROWS_AS(pack_segments({{}, {}}, 4), ValidationError);
    // 300 + separator + 300 tokens at the default length.
    auto two = pack_segments({Segment(300, 7), Segment(300, 8)});
    REQUIRE(two.size() == 2);
    CHECK(two[0].size() == 512);
    CHECK(two[0][300] == SpecialTokens::kSep);
    CHECK(two[1].size() == 89);
    CHECK(pack_segments({Segment(512, 9)}).size() == 1);
    CHECK(pack_segments({{9}}, 512)[0].size() == 1);
    CHECK_THROWS_AS(pack_segments({{5}}, 0), ValidationError);
  }

  TEST_CASE("masking policy validation") {
    MaskingPolicy p;
    CHECK_NOTHROW(p.validate());
    p.keep_original = 0.2;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p = MaskingPolicy{};
    p.mask_rate = 1.5;
    CHECK_THROWS_AS(p.validate(), ValidationError);
  }

  TEST_CASE("masking selects the requested share and never touches specials") {
    Segment seg;
    for (int i = 0; i < 200; ++i) seg.push_back(i % 10 == 0 ? SpecialTokens::kSep : 5 + i % 50);
    MaskingPolicy p;
    auto m = apply_dynamic_masking(seg, p, 123, 60);
    CHECK(m.positions.size() == 27);  // round(0.15 * 180)
    CHECK(m.targets.size() == m.positions.size());
    CHECK(std::is_sorted(m.positions.begin(), m.positions.end()));
    for (std::size_t k = 0; k < m.positions.size(); ++k) {
      const auto pos = static_cast<std::size_t>(m.positions[k]);
      CHECK_FALSE(SpecialTokens::is_special(seg[pos]));
      CHECK(m.targets[k] == seg[pos]);
    }
    std::set<int> chosen(m.positions.begin(), m.positions.end());
    for (std::size_t i = 0; i < seg.size(); ++i) {
      if (!chosen.count(static_cast<int>(i))) CHECK(m.input[i] == seg[i]);
    }
    auto again = apply_dynamic_masking(seg, p, 123, 60);
    CHECK(again.input == m.input);
    CHECK(apply_dynamic_masking(seg, p, 124, 60).positions != m.positions);
  }

  TEST_CASE("masking edge cases") {
    MaskingPolicy p;
    CHECK(apply_dynamic_masking({7, 8}, p, 1, 20).positions.size() == 1);
    CHECK_THROWS_AS(apply_dynamic_masking({SpecialTokens::kSep}, p, 1, 20), ValidationError);
    CHECK_THROWS_AS(apply_dynamic_masking({}, p, 1, 20), ValidationError);
    p.mask_rate = 0.0;
    CHECK(apply_dynamic_masking({7, 8}, p, 1, 20).positions.empty());
    p = MaskingPolicy{};
    p.replace_with_mask = 0.0;
    p.replace_with_random = 0.0;
    p.keep_original = 1.0;
    auto kept = apply_dynamic_masking({7, 8, 9, 10}, p, 1, 20);
    CHECK(kept.input == Segment{7, 8, 9, 10});
  }

  TEST_CASE("dynamic masks differ between steps") {
    std::mt19937_64 rng(21);
    std::uniform_int_distribution<TokenId> tok(SpecialTokens::kCount, 999);
    int identical = 0;
    for (std::uint64_t s = 0; s < 1000; ++s) {
      Segment seg(512);
      for (auto& t : seg) t = tok(rng);
      auto a = apply_dynamic_masking(seg, MaskingPolicy{}, derive_seed(3, 1, s), 1000);
      auto b = apply_dynamic_masking(seg, MaskingPolicy{}, derive_seed(3, 2, s), 1000);
      CHECK(a.positions.size() == 77);
      identical += a.positions == b.positions;
    }
    CHECK(identical == 0);
  }

  TEST_CASE("overfitting one fixed batch drives the loss down") {
    testing::BinaryFixture f(5);
    auto segs = f.segments(24);
    segs.resize(1);
    MaskingPolicy fixed;
    fixed.dynamic = false;
    TrainingConfig c;
    c.learning_rate = 3e-3;
    c.batch_size = 1;
    c.total_steps = 300;
    c.log_every = 1;
    c.warmup_fraction = 0.0;
    auto r = pretrain_mlm(c, f.model, Parameters::initialize(f.model, 2), segs, fixed);
    REQUIRE(r.history.size() == 300);
    CHECK(r.history.back().train_loss < 0.1 * r.history.front().train_loss);
  }

  TEST_CASE("class maps") {
    auto b = ClassMap::binary();
    CHECK(b.num_classes() == 2);
    Document nfc{"a", "x", {73, 14}};
    Document other{"b", "x", {14, 73}};
    CHECK(b.label_of(nfc) == 1);
    CHECK(b.label_of(other) == 0);
    auto m = ClassMap::multiclass_from({nfc, other, Document{"c", "x", {14}}});
    CHECK(m.codes == std::vector<CategoryCode>{14, 73});
    CHECK(m.label_of(nfc) == 1);
    CHECK(ClassMap::from_text(m.to_text()).codes == m.codes);
    CHECK(ClassMap::from_text(b.to_text()).task == Task::kBinary);
    CHECK_THROWS_AS(m.label_of(Document{"d", "x", {22}}), ValidationError);
    CHECK_THROWS_AS(parse_task("ternary"), ValidationError);
  }

  TEST_CASE("classification examples start with [CLS] and are truncated") {
    testing::BinaryFixture f(5);
    auto ex = make_classification_examples(f.docs, f.tokenizer, ClassMap::binary(), 6);
    CHECK(ex.size() == 10);
    for (const auto& e : ex) {
      CHECK(e.ids.front() == SpecialTokens::kCls);
      CHECK(e.ids.size() <= 6);
    }
    CHECK(ex[0].label != ex[1].label);
  }

  TEST_CASE("training config problems are all reported") {
    TrainingConfig c;
    c.learning_rate = 0;
    c.batch_size = 0;
    c.warmup_fraction = 1.0;
    auto p = c.problems();
    CHECK(p.size() == 3);
    CHECK_THROWS_AS(c.validate(), ValidationError);
    TrainingConfig d;
    d.batch_size = 16;
    d.epochs = 5;
    CHECK(d.resolve_total_steps(100) == 35);
    d.total_steps = 9;
    CHECK(d.resolve_total_steps(100) == 9);
    CHECK(full_scale_finetune_config().eval_checkpoints == 20);
  }

  TEST_CASE("checkpoint schedule and selection") {
    CHECK(checkpoint_schedule(100, 4) == std::vector<long>{25, 50, 75, 100});
    CHECK(checkpoint_schedule(10, 3) == std::vector<long>{3, 6, 10});
    CHECK(checkpoint_schedule(3, 20) == std::vector<long>{1, 2, 3});
    CHECK_THROWS_AS(checkpoint_schedule(0, 2), ValidationError);
    CHECK(select_best_checkpoint({0.5, 0.2, 0.2, 0.3}) == 1);
    CHECK(select_best_checkpoint({1.0}) == 0);
    CHECK_THROWS_AS(select_best_checkpoint({}), ValidationError);
  }

  TEST_CASE("pre-training lowers the masked-token loss and is reproducible") {
    testing::BinaryFixture f(20);
    auto segs = f.segments();
    TrainingConfig c;
    c.learning_rate = 3e-3;
    c.batch_size = 4;
    c.total_steps = 150;
    c.log_every = 50;
    c.seed = 3;
    auto init = Parameters::initialize(f.model, 3);
    const double before = evaluate_mlm(init, f.model, segs, MaskingPolicy{}, 9);
    auto r = pretrain_mlm(c, f.model, init, segs, MaskingPolicy{}, &segs);
    CHECK(r.history.size() == 3);
    CHECK(r.history.back().step == 150);
    CHECK(std::isfinite(r.history.back().validation_loss));
    CHECK(evaluate_mlm(r.params, f.model, segs, MaskingPolicy{}, 9) < 0.8 * before);
    auto again = pretrain_mlm(c, f.model, init, segs, MaskingPolicy{}, nullptr);
    CHECK(again.params.token_embedding == r.params.token_embedding);
    CHECK_THROWS_AS(pretrain_mlm(c, f.model, init, {}, MaskingPolicy{}), ValidationError);
  }

  TEST_CASE("diverging pre-training names the step") {
    testing::BinaryFixture f(5);
    TrainingConfig c;
    c.learning_rate = 1e300;
    c.warmup_fraction = 0;
    c.total_steps = 20;
    c.batch_size = 2;
    try {
      pretrain_mlm(c, f.model, Parameters::initialize(f.model, 1), f.segments());
      FAIL("expected a numerical error");
    } catch (const NumericalError& e) {
      CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
  }

  TEST_CASE("fine-tuning picks the lowest validation loss") {
    testing::BinaryFixture f(30);
    auto c = f.finetune_config();
    std::vector<long> sunk;
    auto r = finetune_classifier(c, f.model, Parameters::initialize(f.model, 5), ClassMap::binary(),
                                 f.train, f.validation, [&](long step, const ModelConfig&, const Parameters&) {
                                   sunk.push_back(step);
                                   return "ck-" + std::to_string(step);
                                 });
    REQUIRE(r.checkpoints.size() == 5);
    CHECK(sunk.size() == 5);
    CHECK(r.checkpoints.back().step == c.resolve_total_steps(f.train.size()));
    std::vector<double> losses;
    for (const auto& m : r.checkpoints) losses.push_back(m.validation_loss);
    CHECK(r.best_index == select_best_checkpoint(losses));
    CHECK(r.checkpoints[r.best_index].is_best);
    CHECK(r.validation_metrics.loss == doctest::Approx(losses[r.best_index]).epsilon(1e-12));
    auto check = evaluate_classifier(r.best_params, r.config, f.validation, AverageMode::kBinary);
    CHECK(check.loss == doctest::Approx(r.validation_metrics.loss).epsilon(1e-12));
    CHECK(r.validation_metrics.accuracy > 0.9);
  }

  TEST_CASE("frozen layers do not move") {
    testing::BinaryFixture f(10);
    f.model.num_layers = 2;
    auto init = Parameters::initialize(f.model, 6);
    auto c = f.finetune_config();
    c.epochs = 1;
    c.freeze_layers = 1;
    auto r = finetune_classifier(c, f.model, init, ClassMap::binary(), f.train, f.validation);
    CHECK(r.best_params.token_embedding == init.token_embedding);
    CHECK(r.best_params.layers[0].w_query == init.layers[0].w_query);
    CHECK(r.best_params.layers[1].w_query != init.layers[1].w_query);
    c.freeze_layers = 3;
    CHECK_THROWS_AS(finetune_classifier(c, f.model, init, ClassMap::binary(), f.train, f.validation),
                    ValidationError);
  }

  TEST_CASE("grid rows follow the cross product and failures are marked") {
    testing::BinaryFixture f(8);
    auto c = f.finetune_config();
    c.epochs = 1;
    c.eval_checkpoints = 2;
    auto init = Parameters::initialize(f.model, 8);
    auto rows = hyperparameter_grid(c, f.model, init, ClassMap::binary(), f.train, f.validation,
                                    {1e-3, 1e300}, {4, 8}, 1);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].learning_rate == 1e-3);
    CHECK(rows[1].batch_size == 8);
    CHECK(rows[0].status == "ok");
    CHECK(rows[3].status.rfind("failed: ", 0) == 0);
    CHECK(best_grid_row(rows) < 2);
    auto threaded = hyperparameter_grid(c, f.model, init, ClassMap::binary(), f.train, f.validation,
                                        {1e-3, 1e300}, {4, 8}, 3);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(threaded[i].status == rows[i].status);
      if (rows[i].status == "ok") CHECK(threaded[i].loss == rows[i].loss);
    }
    auto single = hyperparameter_grid(c, f.model, init, ClassMap::binary(), f.train, f.validation, {1e-3}, {4});
    auto direct_cfg = c;
    direct_cfg.learning_rate = 1e-3;
    direct_cfg.batch_size = 4;
    auto direct = finetune_classifier(direct_cfg, f.model, init, ClassMap::binary(), f.train, f.validation);
    CHECK(single[0].loss == direct.validation_metrics.loss);
    CHECK(single[0].accuracy == direct.validation_metrics.accuracy);
    GridRow bad;
    bad.status = "failed: x";
    CHECK_THROWS_AS(best_grid_row({bad}), ValidationError);
  }
}
