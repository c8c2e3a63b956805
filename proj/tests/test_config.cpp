// Copyright 2026 The pitchacc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <catch_amalgamated.hpp>

#include "pitchacc/config.hpp"

using namespace pitchacc;

TEST_CASE("toml subset parsing", "[config]") {
  const auto doc = parse_toml(R"(
# comment
[a]
s = "x \"q\" # not a comment"  # trailing
i = -42
f = 1.5e-3
b = true
arr = [1, 2, 3,]
strs = ["p", "q"]
empty = []
big = 1_000
)");
  CHECK(doc["a"]["s"] == "x \"q\" # not a comment");
  CHECK(doc["a"]["i"] == -42);
  CHECK(doc["a"]["f"].get<double>() == 1.5e-3);
  CHECK(doc["a"]["b"] == true);
  CHECK(doc["a"]["arr"] == nlohmann::json({1, 2, 3}));
  CHECK(doc["a"]["strs"] == nlohmann::json({"p", "q"}));
  CHECK(doc["a"]["empty"].empty());
  CHECK(doc["a"]["big"] == 1000);
  CHECK(parse_toml(dump_toml(doc)) == doc);

  auto fails_at = [](const std::string& text, const std::string& where) {
    try {
      parse_toml(text);
    } catch (const ConfigError& e) {
      return std::string(e.what()).find(where) != std::string::npos;
    }
    return false;
  };
  CHECK(fails_at("[a]\nx = 1\nx = 2\n", "line 3"));
  CHECK(fails_at("[a]\nx = \"open\n", "unterminated"));
  CHECK(fails_at("[a]\nx = [[1]]\n", "nested"));
  CHECK(fails_at("[a]\nx = 1 2\n", "trailing"));
  CHECK(fails_at("[a\n", "section"));
  CHECK(fails_at("[a]\njust words\n", "key = value"));
  CHECK(fails_at("[a]\nx = nope\n", "nope"));
}

TEST_CASE("experiment config keys", "[config]") {
  const auto c = parse_config("");
  CHECK(c.model == ModelConfig{});
  CHECK(c.model_seeds == std::vector<std::uint64_t>{1, 2, 3, 4, 5});

  CHECK_THROWS_WITH(parse_config("[model]\ndropuot = 0.1\n"), Catch::Matchers::ContainsSubstring("dropuot"));
  CHECK_THROWS_WITH(parse_config("[modle]\n"), Catch::Matchers::ContainsSubstring("modle"));
  CHECK_THROWS_WITH(parse_config("[experiment]\nfolds = \"ten\"\n"),
                    Catch::Matchers::ContainsSubstring("experiment.folds"));
  CHECK_THROWS_WITH(parse_config("[experiment]\nseed = -3\n"), Catch::Matchers::ContainsSubstring("experiment.seed"));
  CHECK_THROWS_WITH(parse_config("[synth]\nn_utterances = 1.5\n"), Catch::Matchers::ContainsSubstring("synth"));
  CHECK_THROWS(parse_config("[model]\ncnn_kernel_width = 10\n"));
  CHECK_THROWS(parse_config("[experiment]\nablation = \"-loudness\"\n"));
  CHECK_THROWS(parse_config("stray = 1\n"));
  CHECK_THROWS(parse_config("", {"model.nothing=1"}));
  CHECK_THROWS(parse_config("", {"no-dot=1"}));
}

TEST_CASE("overrides win over the file", "[config]") {
  const std::string text = "[model]\ndropout = 0.3\ncontext = \"three_token\"\n[experiment]\nmodel_seeds = [4]\n";
  const auto c = parse_config(text, {"model.dropout=0.1", "model.context=full_utterance", "experiment.model_seeds=[7, 8]",
                                     "corpus.path=some/file.jsonl"});
  CHECK(c.model.dropout == 0.1);
  CHECK(c.model.context == Context::full_utterance);
  CHECK(c.model_seeds == std::vector<std::uint64_t>{7, 8});
  CHECK(c.corpus_path == "some/file.jsonl");
}

TEST_CASE("config round trip", "[config]") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    ExperimentConfig c;
    c.model.dropout = rng.uniform();
    c.model.weight_decay = rng.uniform() * 1e-4;
    c.model.learning_rate = rng.uniform(1e-4, 1e-2);
    c.model.cnn_kernel_width = 1 + 2 * static_cast<int>(rng.below(12));
    c.model.input_mode = static_cast<InputMode>(rng.below(3));
    c.synth.accent_f0_semitones = rng.uniform(0, 8);
    c.synth.noise_db = -rng.uniform(10, 50);
    c.featurizer.octave_cost = rng.uniform() * 0.1;
    c.seed = rng();
    c.model_seeds = {rng.below(100), rng.below(100)};
    c.corpus_path = "dir with space/\"quoted\"\\corpus.jsonl";
    c.vocab_sizes = {static_cast<int>(1 + rng.below(5000))};
    const auto text = to_toml(c);
    const auto back = parse_config(text);
    CHECK(to_toml(back) == text);
    CHECK(back.model == c.model);
    CHECK(back.synth.noise_db == c.synth.noise_db);
    CHECK(back.featurizer.octave_cost == c.featurizer.octave_cost);
    CHECK(back.seed == c.seed);
    CHECK(back.corpus_path == c.corpus_path);
  }
  ExperimentConfig c;
  c.out_dir = "elsewhere";
  CHECK(to_toml(c, false).find("[output]") == std::string::npos);
  CHECK(parse_config(to_toml(c)).out_dir == "elsewhere");
}

TEST_CASE("shipped demo config", "[config]") {
  const auto c = load_config(std::filesystem::path(PITCHACC_SOURCE_DIR) / "configs" / "demo.toml");
  CHECK(c.synth.n_utterances == 60);
  CHECK(c.corpus_path.empty());
  CHECK(c.model.input_mode == InputMode::speech);
}
