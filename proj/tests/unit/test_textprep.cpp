#include "doctest.h"
#include "fixture.hpp"
#include "persona/error.hpp"
#include "persona/textprep.hpp"

#include <numeric>
#include <string>

using namespace persona;
using namespace persona::textprep;

namespace {

std::string words(std::size_t n, const std::string& w = "w") {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) out += (i ? " " : "") + w;
  return out;
}

std::size_t tokens(const std::vector<Sentence>& ss) {
  std::size_t n = 0;
  for (const auto& s : ss) n += s.size();
  return n;
}

Essay essay(std::string text) {
  Essay e;
  e.author_id = "e1";
  e.text = std::move(text);
  return e;
}

}  // namespace

TEST_CASE("clean_text: golden examples") {
  CHECK(clean_text("Hello, world!") == "Hello world!");
  CHECK(clean_text("caf\xC3\xA9 #1") == "caf 1");
  CHECK(clean_text("") == "");
  CHECK(clean_text("a-b") == "a b");
  CHECK(clean_text("  \"You're\"\t\n ok?  ") == "\"You're\" ok?");
  CHECK(clean_text("end.Start") == "end.Start");
}

TEST_CASE("clean_text: output alphabet and idempotence") {
  std::string all;
  for (int c = 1; c < 256; ++c) all += static_cast<char>(c);
  const std::string once = clean_text(all + " tail");
  for (char c : once) {
    const auto u = static_cast<unsigned char>(c);
    const bool ok = std::isalnum(u) || c == '\'' || c == '"' || c == '!' || c == '.' || c == '?' || c == ' ';
    CHECK_MESSAGE(ok, "unexpected byte " << int(u));
    CHECK(u < 0x80);
  }
  CHECK(once.find("  ") == std::string::npos);
  CHECK(clean_text(once) == once);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto text = testing::random_essay_text(seed, 60);
    CHECK(clean_text(clean_text(text)) == clean_text(text));
  }
}

TEST_CASE("split_sentences: golden examples") {
  const auto s = split_sentences("I run. Do you? yes");
  REQUIRE(s.size() == 3);
  CHECK(s[0] == Sentence{"I", "run"});
  CHECK(s[1] == Sentence{"Do", "you"});
  CHECK(s[2] == Sentence{"yes"});
  const auto wow = split_sentences("wow!!");
  REQUIRE(wow.size() == 1);
  CHECK(wow[0] == Sentence{"wow!!"});
  CHECK(split_sentences("...").empty());
  CHECK(split_sentences("").empty());
}

TEST_CASE("expand_contractions: golden examples") {
  CHECK(expand_contractions({"you're"}) == Sentence{"you", "are"});
  CHECK(expand_contractions({"cannot"}) == Sentence{"cannot"});
  CHECK(expand_contractions({"It's", "won't"}) == Sentence{"It", "is", "will", "not"});
}

TEST_CASE("expand_contractions: table coverage") {
  const auto& t = ContractionTable::builtin();
  CHECK(t.expand("can't") == std::vector<std::string>{"cannot"});
  CHECK(t.expand("Can't") == std::vector<std::string>{"Cannot"});
  CHECK(t.expand("shan't") == std::vector<std::string>{"shall", "not"});
  CHECK(t.expand("let's") == std::vector<std::string>{"let", "us"});
  CHECK(t.expand("Let's") == std::vector<std::string>{"Let", "us"});
  CHECK(t.expand("don't") == std::vector<std::string>{"do", "not"});
  CHECK(t.expand("WE'LL") == std::vector<std::string>{"WE", "will"});
  CHECK(t.expand("they've") == std::vector<std::string>{"they", "have"});
  CHECK(t.expand("I'm") == std::vector<std::string>{"I", "am"});
  CHECK(t.expand("she'd") == std::vector<std::string>{"she", "would"});
  CHECK(t.expand("that's") == std::vector<std::string>{"that", "is"});
  CHECK(t.expand("Who's") == std::vector<std::string>{"Who", "is"});
  CHECK(t.expand("John's") == std::vector<std::string>{"John's"});
  CHECK(t.expand("'re") == std::vector<std::string>{"'re"});
  CHECK(t.expand("rock'n'roll") == std::vector<std::string>{"rock'n'roll"});
  CHECK(t.expand("hello") == std::vector<std::string>{"hello"});
}

TEST_CASE("expand_contractions: quote and exclamation wrappers") {
  CHECK(expand_contractions({"\"you're"}) == Sentence{"\"you", "are"});
  CHECK(expand_contractions({"don't!"}) == Sentence{"do", "not!"});
  CHECK(expand_contractions({"\"it's\""}) == Sentence{"\"it", "is\""});
}

TEST_CASE("expand_contractions: growth equals the number of splitting matches") {
  const Sentence in{"I'm", "sure", "you're", "fine", "can't", "John's", "won't"};
  const auto out = expand_contractions(in);
  std::size_t splitting = 0;
  for (const auto& tok : in) splitting += ContractionTable::builtin().expand(tok).size() - 1;
  CHECK(splitting == 3);
  CHECK(out.size() == in.size() + splitting);
  CHECK(out.size() >= in.size());
}

TEST_CASE("contraction table parse") {
  const auto t = ContractionTable::parse("# table, version test-1\nwhole\tain't\tis not\nsuffix\t'll\twill\nstem_s\tit\n");
  CHECK(t.version() == "test-1");
  CHECK(t.expand("ain't") == std::vector<std::string>{"is", "not"});
  CHECK(t.expand("we'll") == std::vector<std::string>{"we", "will"});
  CHECK(t.expand("it's") == std::vector<std::string>{"it", "is"});
  CHECK(t.expand("don't") == std::vector<std::string>{"don't"});
  CHECK_THROWS_AS(ContractionTable::parse("bogus\tline\n"), IngestError);
  CHECK_FALSE(ContractionTable::builtin().version().empty());
}

TEST_CASE("chunk_essay: greedy packing arithmetic") {
  const auto chunks = chunk_essay(essay(words(120) + ". " + words(90) + ". " + words(100) + "."));
  REQUIRE(chunks.size() == 2);
  CHECK(chunks[0].token_count == 120);
  CHECK(chunks[0].sentences.size() == 1);
  CHECK(chunks[1].token_count == 190);
  CHECK(chunks[1].sentences.size() == 2);
  CHECK(chunks[0].chunk_index == 0);
  CHECK(chunks[1].chunk_index == 1);
}

TEST_CASE("chunk_essay: oversized sentence is hard split") {
  const auto chunks = chunk_essay(essay(words(450) + "."));
  REQUIRE(chunks.size() == 3);
  CHECK(chunks[0].token_count == 200);
  CHECK(chunks[1].token_count == 200);
  CHECK(chunks[2].token_count == 50);
}

TEST_CASE("chunk_essay: adversarial all-contraction input stays within bounds") {
  const auto chunks = chunk_essay(essay(words(200, "you're") + "."));
  std::size_t total = 0;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    CHECK(chunks[i].token_count <= 250);
    CHECK(chunks[i].pre_expansion_tokens <= 200);
    CHECK(chunks[i].chunk_index == i);
    CHECK(chunks[i].token_count == tokens(chunks[i].sentences));
    total += chunks[i].token_count;
  }
  CHECK(total == 400);
  CHECK(chunks.size() == 2);
}

TEST_CASE("chunk_essay: token conservation and bounds on random essays") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto text = testing::random_essay_text(seed, 50 + seed * 37);
    const auto e = essay(text);
    const auto sentences = split_sentences(clean_text(text));
    std::size_t pre_total = 0, post_expected = 0;
    for (const auto& s : sentences) {
      pre_total += s.size();
      post_expected += expand_contractions(s).size();
    }
    const auto chunks = chunk_essay(e);
    std::size_t pre = 0, post = 0;
    std::vector<Sentence> flattened;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      const auto& c = chunks[i];
      CHECK(c.chunk_index == i);
      CHECK(c.author_id == "e1");
      CHECK(c.pre_expansion_tokens <= 200);
      CHECK(c.token_count <= 250);
      CHECK(c.token_count == tokens(c.sentences));
      pre += c.pre_expansion_tokens;
      post += c.token_count;
      flattened.insert(flattened.end(), c.sentences.begin(), c.sentences.end());
    }
    CHECK(pre == pre_total);
    CHECK(post == post_expected);
    CHECK(chunk_essay(e) == chunks);
    std::vector<Sentence> expected;
    for (const auto& s : sentences) expected.push_back(expand_contractions(s));
    CHECK(flattened == expected);
  }
}

TEST_CASE("chunk_essay: window packing ignores sentence boundaries") {
  ChunkPlan plan;
  plan.pack = PackMode::kWindow;
  const auto chunks = chunk_essay(essay(words(120) + ". " + words(90) + ". " + words(100) + "."), plan);
  REQUIRE(chunks.size() == 2);
  CHECK(chunks[0].token_count == 200);
  CHECK(chunks[1].token_count == 110);
}

TEST_CASE("chunk_essay: custom limit and empty essays") {
  ChunkPlan plan;
  plan.max_pre_expansion_tokens = 50;
  for (const auto& c : chunk_essay(essay(testing::random_essay_text(3, 400)), plan)) {
    CHECK(c.pre_expansion_tokens <= 50);
  }
  CHECK_THROWS_AS(chunk_essay(essay("#, ,,, \xC3\xA9")), EmptyEssayError);
  CHECK(chunk_essay(essay("!!! ,,,")).front().sentences == std::vector<Sentence>{{"!!!"}});
  CHECK_THROWS_AS(chunk_essay(essay("... ???")), EmptyEssayError);
  ChunkPlan bad;
  bad.max_pre_expansion_tokens = 0;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad.max_pre_expansion_tokens = 300;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  CHECK_THROWS_AS(parse_pack_mode("blocks"), UsageError);
}

TEST_CASE("chunks jsonl round trip and validation") {
  Essay a = essay(testing::random_essay_text(11, 500));
  Essay b = essay("Tiny essay with \"quotes\" here. Ok?");
  b.author_id = "id,with \"odd\" chars";
  auto chunks = chunk_essay(a);
  const auto more = chunk_essay(b);
  chunks.insert(chunks.end(), more.begin(), more.end());
  std::string text;
  for (const auto& c : chunks) text += chunk_to_json_line(c) + "\n";
  const auto back = parse_chunks_jsonl(text, "mem.jsonl");
  REQUIRE(back.size() == chunks.size());
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    CHECK(back[i].author_id == chunks[i].author_id);
    CHECK(back[i].chunk_index == chunks[i].chunk_index);
    CHECK(back[i].sentences == chunks[i].sentences);
    CHECK(back[i].token_count == chunks[i].token_count);
  }
  const auto dir = testing::scratch_dir("textprep_jsonl");
  write_chunks_jsonl(dir + "/c.jsonl", chunks);
  CHECK(testing::read_file(dir + "/c.jsonl") == text);
  CHECK(read_chunks_jsonl(dir + "/c.jsonl").size() == chunks.size());

  CHECK_THROWS_AS(parse_chunks_jsonl("{\"author_id\":\"x\",\"chunk_index\":1,\"sentences\":[[\"a\"]]}\n", "m"),
                  IngestError);
  CHECK_THROWS_AS(parse_chunks_jsonl("{\"author_id\":\"x\",\"chunk_index\":0,\"sentences\":[[\"a b\"]]}\n", "m"),
                  IngestError);
  CHECK_THROWS_AS(parse_chunks_jsonl("{\"author_id\":\"x\",\"chunk_index\":0,\"sentences\":[[\"\"]]}\n", "m"),
                  IngestError);
  CHECK_THROWS_AS(parse_chunks_jsonl("not json\n", "m"), IngestError);
  const std::string dup = "{\"author_id\":\"x\",\"chunk_index\":0,\"sentences\":[[\"a\"]]}\n";
  CHECK_THROWS_AS(parse_chunks_jsonl(dup + dup, "m"), IngestError);
  CHECK(parse_chunks_jsonl("", "m").empty());
}
