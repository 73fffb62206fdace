#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "recarena/judge.hpp"
#include "recarena/verdict.hpp"
#include "support/fake_server.hpp"
#include "support/fixtures.hpp"

namespace recarena::judge {
namespace {

using nlohmann::json;
using promptkit::JudgeMode;
using promptkit::PromptBundle;
using testing::FakeServer;

constexpr const char* kKeyEnv = "RECARENA_TEST_API_KEY";
const Corpus* const kNoCorpus = nullptr;

ProviderConfig http_config(const FakeServer& server) {
  ProviderConfig cfg;
  cfg.provider = "openai";
  cfg.base_url = server.base_url();
  cfg.model_id = "fake-model";
  cfg.api_key_env = kKeyEnv;
  cfg.timeout = std::chrono::seconds(5);
  cfg.max_retries = 3;
  cfg.backoff.initial = std::chrono::milliseconds(1);
  cfg.backoff.cap = std::chrono::milliseconds(4);
  return cfg;
}

PromptBundle text_bundle(const std::string& prompt, JudgeMode mode = JudgeMode::kPair) {
  PromptBundle b;
  b.mode = mode;
  b.user_id = "u";
  b.system_a_id = "a";
  b.system_b_id = mode == JudgeMode::kPair ? "b" : "";
  b.prompt_text = prompt;
  return b;
}

class JudgeHttp : public ::testing::Test {
 protected:
  void SetUp() override { setenv(kKeyEnv, "test-secret", 1); }
  void TearDown() override { unsetenv(kKeyEnv); }
};

TEST_F(JudgeHttp, RetriesTooManyRequestsThenSucceeds) {
  FakeServer server([](const std::string&, int call) {
    return call < 2 ? std::pair{429, std::string()} : std::pair{200, std::string("hello")};
  });
  Judge judge(http_config(server), kNoCorpus, nullptr);
  auto raw = judge.judge_pair(text_bundle("prompt"));
  EXPECT_EQ(raw.response_text, "hello");
  EXPECT_EQ(raw.provider_meta.retry_count, 2);
  EXPECT_FALSE(raw.provider_meta.cache_hit);
  EXPECT_EQ(raw.provider_meta.model_id, "fake-model");
  EXPECT_EQ(server.calls(), 3);
}

TEST_F(JudgeHttp, SendsChatCompletionsShape) {
  FakeServer server([](const std::string&, int) { return std::pair{200, std::string("ok")}; });
  auto cfg = http_config(server);
  cfg.temperature = 0.0;
  Judge judge(cfg, kNoCorpus, nullptr);
  judge.judge_pair(text_bundle("the prompt"));
  auto body = server.last_body();
  EXPECT_EQ(body["model"], "fake-model");
  EXPECT_EQ(body["temperature"], 0.0);
  ASSERT_EQ(body["messages"].size(), 1u);
  EXPECT_EQ(body["messages"][0]["role"], "user");
  EXPECT_EQ(body["messages"][0]["content"], "the prompt");
  EXPECT_EQ(server.last_auth(), "Bearer test-secret");
}

TEST_F(JudgeHttp, ExhaustedRetriesCarryLastStatus) {
  FakeServer server([](const std::string&, int) { return std::pair{503, std::string()}; });
  auto cfg = http_config(server);
  cfg.max_retries = 2;
  Judge judge(cfg, kNoCorpus, nullptr);
  try {
    judge.judge_pair(text_bundle("p"));
    FAIL() << "expected TransportError";
  } catch (const TransportError& e) {
    EXPECT_EQ(e.status(), 503);
    EXPECT_EQ(e.retries(), 2);
  }
  EXPECT_EQ(server.calls(), 3);
}

TEST_F(JudgeHttp, ClientErrorsAndEmptyContentAreProviderErrors) {
  FakeServer server([](const std::string& prompt, int) {
    if (prompt == "bad") return std::pair{400, std::string()};
    return std::pair{200, std::string()};
  });
  Judge judge(http_config(server), kNoCorpus, nullptr);
  EXPECT_THROW(judge.judge_pair(text_bundle("bad")), ProviderError);
  EXPECT_EQ(server.calls(), 1);  // not retried
  EXPECT_THROW(judge.judge_pair(text_bundle("empty")), ProviderError);
}

TEST_F(JudgeHttp, UnreachableServerIsTransportError) {
  ProviderConfig cfg;
  cfg.provider = "openai";
  cfg.base_url = "http://127.0.0.1:1/v1";
  cfg.api_key_env = kKeyEnv;
  cfg.max_retries = 1;
  cfg.timeout = std::chrono::seconds(1);
  cfg.backoff.initial = std::chrono::milliseconds(1);
  Judge judge(cfg, kNoCorpus, nullptr);
  try {
    judge.judge_pair(text_bundle("p"));
    FAIL() << "expected TransportError";
  } catch (const TransportError& e) {
    EXPECT_EQ(e.status(), 0);
    EXPECT_EQ(e.retries(), 1);
  }
}

TEST_F(JudgeHttp, MissingKeyFailsBeforeAnyRequest) {
  FakeServer server([](const std::string&, int) { return std::pair{200, std::string("x")}; });
  auto cfg = http_config(server);
  cfg.api_key_env = "RECARENA_TEST_KEY_THAT_IS_NOT_SET";
  EXPECT_THROW(Judge(cfg, kNoCorpus, nullptr), ConfigError);
  EXPECT_EQ(server.calls(), 0);
}

TEST_F(JudgeHttp, WarmCacheMakesNoCalls) {
  FakeServer server([](const std::string& prompt, int) { return std::pair{200, "answer to " + prompt}; });
  testing::TempDir dir("cache");
  auto cache = std::make_shared<const ResponseCache>(dir.path());
  Judge judge(http_config(server), nullptr, cache);
  std::vector<PromptBundle> bundles;
  for (int i = 0; i < 5; ++i) bundles.push_back(text_bundle("p" + std::to_string(i)));

  auto cold = run_batch(bundles, judge);
  EXPECT_EQ(server.calls(), 5);
  EXPECT_EQ(cold.summary.cached, 0u);

  auto warm = run_batch(bundles, judge);
  EXPECT_EQ(server.calls(), 5);
  EXPECT_EQ(warm.summary.cached, 5u);
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    EXPECT_EQ(warm.results[i].judgment->response_text, cold.results[i].judgment->response_text);
    EXPECT_TRUE(warm.results[i].judgment->provider_meta.cache_hit);
  }
  // Layout: {dir}/{first two hex}/{key}.json.
  const auto key = cache_key(bundles[0], judge.config());
  EXPECT_TRUE(std::filesystem::exists(dir / (key.substr(0, 2) + "/" + key + ".json")));
}

TEST_F(JudgeHttp, BatchRecordsFailuresAndKeepsOrder) {
  FakeServer server([](const std::string& prompt, int) {
    if (prompt == "p3" || prompt == "p7") return std::pair{400, std::string()};
    return std::pair{200, "r:" + prompt};
  });
  server.set_delay(5);
  auto cfg = http_config(server);
  cfg.max_in_flight = 3;
  Judge judge(cfg, kNoCorpus, nullptr);
  std::vector<PromptBundle> bundles;
  for (int i = 0; i < 10; ++i) bundles.push_back(text_bundle("p" + std::to_string(i)));
  auto out = run_batch(bundles, judge);
  EXPECT_EQ(out.summary.ok, 8u);
  EXPECT_EQ(out.summary.failed, 2u);
  ASSERT_EQ(out.results.size(), 10u);
  for (int i = 0; i < 10; ++i) {
    if (i == 3 || i == 7) {
      EXPECT_FALSE(out.results[i].judgment.has_value());
      EXPECT_FALSE(out.results[i].error.empty());
    } else {
      EXPECT_EQ(out.results[i].judgment->response_text, "r:p" + std::to_string(i));
    }
  }
  EXPECT_LE(server.max_in_flight(), 3);
}

// --- configuration --------------------------------------------------------------

TEST(ProviderConfigTest, ValidationAndJson) {
  ProviderConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.temperature = -0.1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.temperature = 0.0;
  cfg.max_in_flight = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.max_in_flight = 2;
  cfg.provider = "other";
  EXPECT_THROW(cfg.validate(), ConfigError);

  ProviderConfig a;
  a.model_id = "m";
  a.temperature = 0.5;
  auto back = provider_config_from_json(to_json(a));
  EXPECT_EQ(back.model_id, "m");
  EXPECT_EQ(back.temperature, 0.5);
  auto partial = provider_config_from_json(json{{"max_in_flight", 7}}, a);
  EXPECT_EQ(partial.max_in_flight, 7);
  EXPECT_EQ(partial.model_id, "m");
}

TEST(Backoff, NominalScheduleIsCapped) {
  BackoffPolicy p;
  EXPECT_EQ(p.nominal_delay(0).count(), 1000);
  EXPECT_EQ(p.nominal_delay(1).count(), 2000);
  EXPECT_EQ(p.nominal_delay(2).count(), 4000);
  EXPECT_EQ(p.nominal_delay(6).count(), 60000);
  EXPECT_EQ(p.nominal_delay(40).count(), 60000);
}

TEST(CacheKey, CoversPromptModelTemperatureAndMode) {
  ProviderConfig cfg;
  cfg.provider = "openai";
  cfg.model_id = "m1";
  const auto base = text_bundle("prompt");
  const auto k = cache_key(base, cfg);
  EXPECT_EQ(k, cache_key(base, cfg));
  EXPECT_EQ(k.size(), 64u);

  EXPECT_NE(cache_key(text_bundle("prompt!"), cfg), k);
  auto other_model = cfg;
  other_model.model_id = "m2";
  EXPECT_NE(cache_key(base, other_model), k);
  auto warm = cfg;
  warm.temperature = 1e-9;
  EXPECT_NE(cache_key(base, warm), k);
  EXPECT_NE(cache_key(text_bundle("prompt", JudgeMode::kAbsolute), cfg), k);
}

TEST(Completion, ExtractsFirstChoice) {
  auto doc = make_completion_document("m", "text");
  EXPECT_EQ(extract_completion_text(doc), "text");
  EXPECT_THROW(extract_completion_text(json{{"choices", json::array()}}), ProviderError);
}

// --- mock judge ---------------------------------------------------------------

struct MockFixture : ::testing::Test {
  Corpus corpus = testing::small_corpus();
  promptkit::DimensionRegistry dims = promptkit::DimensionRegistry::defaults();
  promptkit::UserProfile profile = promptkit::build_profile(corpus, "u1");
  RecList good{"good", "u1", {"i1", "i2", "i3"}};  // drama/romance, like the history
  RecList bad{"bad", "u1", {"i4", "i7", "i8"}};    // disjoint categories

  PromptBundle pair(const RecList& a, const RecList& b, bool swap = false) {
    promptkit::PromptOptions o;
    o.swap = swap;
    return promptkit::build_prompt(profile, a, b, corpus, dims, promptkit::PromptTemplate::default_pairwise(),
                                   o);
  }
};

TEST_F(MockFixture, DominantListWins) {
  auto raw = mock_judge(pair(good, bad), corpus);
  auto v = verdict::parse_verdict(raw, pair(good, bad), dims);
  EXPECT_EQ(v.overall, verdict::Outcome::kA);
  EXPECT_FALSE(v.used_fallback);
  EXPECT_EQ(v.per_dimension.size(), 6u);
  EXPECT_GT(history_overlap(good.items, "u1", corpus), history_overlap(bad.items, "u1", corpus));
}

TEST_F(MockFixture, IdenticalListsTie) {
  RecList same{"other", "u1", good.items};
  auto b = pair(good, same);
  auto v = verdict::parse_verdict(mock_judge(b, corpus), b, dims);
  EXPECT_EQ(v.overall, verdict::Outcome::kTie);
  for (const auto& [k, o] : v.per_dimension) EXPECT_EQ(o, verdict::Outcome::kTie) << k;
}

TEST_F(MockFixture, SwapNamesPositionalWinnerAndUnswapRestoresIt) {
  auto plain = pair(good, bad);
  auto swapped = pair(good, bad, true);
  auto raw = mock_judge(swapped, corpus);
  EXPECT_NE(raw.response_text.find("\"overall\":\"B\""), std::string::npos) << raw.response_text;
  auto v = verdict::parse_verdict(raw, swapped, dims);
  EXPECT_EQ(v.overall, verdict::Outcome::kA);
  EXPECT_TRUE(v.swap_corrected);
  auto reference = verdict::parse_verdict(mock_judge(plain, corpus), plain, dims);
  EXPECT_EQ(v.per_dimension, reference.per_dimension);
  EXPECT_EQ(v.overall, reference.overall);
}

TEST_F(MockFixture, SymmetricUnderListExchange) {
  auto ab = pair(good, bad);
  auto ba = pair(bad, good);
  auto v1 = verdict::parse_verdict(mock_judge(ab, corpus), ab, dims);
  auto v2 = verdict::parse_verdict(mock_judge(ba, corpus), ba, dims);
  EXPECT_EQ(v2.overall, verdict::invert(v1.overall));
  for (const auto& [k, o] : v1.per_dimension) EXPECT_EQ(v2.per_dimension.at(k), verdict::invert(o));
}

TEST_F(MockFixture, AbsoluteScoreIsBoundedAndMonotone) {
  auto tmpl = promptkit::PromptTemplate::default_absolute();
  auto sa = verdict::parse_absolute_score(
      mock_judge(promptkit::build_absolute_prompt(profile, good, corpus, dims, tmpl), corpus));
  auto sb = verdict::parse_absolute_score(
      mock_judge(promptkit::build_absolute_prompt(profile, bad, corpus, dims, tmpl), corpus));
  EXPECT_GE(sa, 0.0);
  EXPECT_LE(sa, 1.0);
  EXPECT_GT(sa, sb);
  EXPECT_NEAR(sa, history_overlap(good.items, "u1", corpus), 1e-4);
}

TEST_F(MockFixture, AbsoluteScoreIsCached) {
  testing::TempDir dir("abs-cache");
  auto cache = std::make_shared<const ResponseCache>(dir.path());
  ProviderConfig cfg;
  Judge judge(cfg, &corpus, cache);
  auto b = promptkit::build_absolute_prompt(profile, good, corpus, dims,
                                            promptkit::PromptTemplate::default_absolute());
  auto first = judge.judge_absolute(b);
  auto second = judge.judge_absolute(b);
  EXPECT_FALSE(first.provider_meta.cache_hit);
  EXPECT_TRUE(second.provider_meta.cache_hit);
  EXPECT_EQ(verdict::parse_absolute_score(first), verdict::parse_absolute_score(second));
  EXPECT_THROW(judge.judge_pair(b), std::invalid_argument);
}

TEST_F(MockFixture, BatchOrderIndependentOfParallelism) {
  auto toy = parse_movielens(testing::toy_data("movielens"));
  auto strong = read_rec_lists(testing::toy_data("strong.jsonl"));
  auto weak = read_rec_lists(testing::toy_data("weak.jsonl"));
  std::vector<PromptBundle> bundles;
  for (std::size_t i = 0; i < strong.size(); ++i) {
    auto p = promptkit::build_profile(toy, strong[i].user_id);
    bundles.push_back(promptkit::build_prompt(p, strong[i], weak[i], toy, dims,
                                              promptkit::PromptTemplate::default_pairwise()));
  }
  ProviderConfig one;
  one.max_in_flight = 1;
  ProviderConfig eight;
  eight.max_in_flight = 8;
  auto r1 = run_batch(bundles, Judge(one, &toy, nullptr));
  auto r8 = run_batch(bundles, Judge(eight, &toy, nullptr));
  ASSERT_EQ(r1.results.size(), r8.results.size());
  for (std::size_t i = 0; i < r1.results.size(); ++i) {
    ASSERT_TRUE(r1.results[i].judgment);
    EXPECT_EQ(r1.results[i].judgment->response_text, r8.results[i].judgment->response_text);
    EXPECT_EQ(r1.results[i].judgment->bundle_hash, r8.results[i].judgment->bundle_hash);
  }
  EXPECT_EQ(r1.summary.ok, bundles.size());
}

TEST(MockConfig, RequiresCorpus) {
  ProviderConfig cfg;
  EXPECT_THROW(Judge(cfg, kNoCorpus, nullptr), ConfigError);
}

}  // namespace
}  // namespace recarena::judge
