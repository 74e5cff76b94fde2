#include "ovd/llm.hpp"

#include "ovd/errors.hpp"
#include "ovd/rng.hpp"

#include <doctest.h>

// Must match core's httplib configuration or the inline definitions diverge.
#ifdef OVD_HTTPS_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

using namespace ovd;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

TextEncoder hash_encoder(std::size_t dim) {
    return [dim](const std::string& phrase) {
        Rng rng(mix_seed(fnv1a(phrase), 0xabc));
        Embedding v(dim);
        for (double& x : v) x = rng.gaussian();
        return l2_normalize(v);
    };
}

} // namespace

TEST_CASE("template H renders the exact query string") {
    const LLMQuery q = build_template_h("person", {"hair", "two eyes"});
    CHECK(q.rendered ==
          "Q: There are several useful visual features to tell there is a person in a photo, "
          "including hair, two eyes.");
    CHECK(q.kind == LLMQuery::Kind::H);
    CHECK(q.category == "person");

    const LLMQuery single = build_template_h("dog", {"snout"});
    CHECK(single.rendered ==
          "Q: There are several useful visual features to tell there is a dog in a photo, "
          "including snout.");

    CHECK_THROWS_AS(build_template_h("person", {}), EmptyPayload);
}

TEST_CASE("template C renders the exact query string") {
    const LLMQuery q = build_template_c("bus", {"airplane", "car"});
    CHECK(q.rendered ==
          "Q: Which visual features could be used to distinguish bus from some confusing "
          "categories including airplane, car in a photo?");

    const LLMQuery single = build_template_c("bus", {"truck"});
    CHECK(single.rendered ==
          "Q: Which visual features could be used to distinguish bus from some confusing "
          "categories including truck in a photo?");

    CHECK_THROWS_AS(build_template_c("bus", {}), EmptyPayload);
}

TEST_CASE("template rendering is injective over distinct inputs") {
    std::set<std::string> rendered;
    std::size_t produced = 0;
    const std::vector<std::string> categories = {"bus", "car", "cat"};
    const std::vector<std::vector<std::string>> payloads = {
        {"wheel"}, {"wheel", "door"}, {"door"}, {"door", "wheel"}};
    for (const auto& cat : categories) {
        for (const auto& payload : payloads) {
            rendered.insert(build_template_h(cat, payload).rendered);
            rendered.insert(build_template_c(cat, payload).rendered);
            produced += 2;
        }
    }
    CHECK(rendered.size() == produced);
}

TEST_CASE("parse_reply splits, strips and dedupes") {
    CHECK(parse_reply("a) hair\nb) two eyes\n") ==
          std::vector<std::string>{"hair", "two eyes"});
    CHECK(parse_reply("Pedals, a Bell, pedals") == std::vector<std::string>{"pedals", "a bell"});
    CHECK(parse_reply("").empty());
    CHECK(parse_reply("1. red frame\n2) bell; - pedals\n* chain") ==
          std::vector<std::string>{"red frame", "bell", "pedals", "chain"});
    CHECK(parse_reply("fluffy tail.") == std::vector<std::string>{"fluffy tail"});
    CHECK(parse_reply("one two three four five six seven") == std::vector<std::string>{});
    CHECK(parse_reply("one two three four five six") ==
          std::vector<std::string>{"one two three four five six"});
    CHECK(parse_reply("1.5 liter bottle") == std::vector<std::string>{"1.5 liter bottle"});
    CHECK(parse_reply("  spaced   out  phrase  ") == std::vector<std::string>{"spaced out phrase"});
}

TEST_CASE("parse_reply round-trips its own join") {
    Rng rng(3);
    const std::vector<std::string> pool = {"hair",  "two eyes", "bell",   "pedals",
                                           "chain", "red frame", "fluffy tail"};
    for (int trial = 0; trial < 30; ++trial) {
        std::string reply;
        const std::size_t n = 1 + rng.next_below(5);
        for (std::size_t i = 0; i < n; ++i) {
            if (i) reply += "\n";
            reply += "- " + pool[rng.next_below(pool.size())];
        }
        const auto parsed = parse_reply(reply);
        std::string joined;
        for (std::size_t i = 0; i < parsed.size(); ++i) {
            if (i) joined += ", ";
            joined += parsed[i];
        }
        CHECK(parse_reply(joined) == parsed);
    }
}

TEST_CASE("scripted mock replies or reports a missing script") {
    ScriptedMock mock;
    mock.script(LLMQuery::Kind::H, "cat", "whiskers, tail");
    const LLMQuery q = build_template_h("cat", {"fur"});
    CHECK(mock.send(q) == "whiskers, tail");

    const LLMQuery missing = build_template_h("dog", {"snout"});
    CHECK_THROWS_AS(mock.send(missing), MissingScript);
    CHECK_THROWS_AS(mock.send(missing), LlmUnavailable); // MissingScript is one of these
}

TEST_CASE("record then replay reproduces replies byte for byte") {
    const std::string path = temp_path("ovd_transcript.jsonl");
    std::filesystem::remove(path);

    auto inner = std::make_unique<ScriptedMock>();
    inner->script(LLMQuery::Kind::H, "cat", "whiskers, tail");
    inner->script(LLMQuery::Kind::C, "cat", "slit pupils");
    RecordingClient recorder(std::move(inner), path);
    recorder.on_cycle(1);

    const LLMQuery qh = build_template_h("cat", {"fur"});
    const LLMQuery qc = build_template_c("cat", {"dog"});
    const std::string rh = recorder.send(qh);
    const std::string rc = recorder.send(qc);

    ReplayFileClient replay(path);
    CHECK(replay.send(qh) == rh);
    CHECK(replay.send(qc) == rc);
    CHECK_THROWS_AS(replay.send(qh), LlmUnavailable); // exhausted

    ReplayFileClient mismatched(path);
    CHECK_THROWS_AS(mismatched.send(qc), LlmUnavailable); // wrong order

    std::filesystem::remove(path);
}

TEST_CASE("replay of a missing transcript is unavailable") {
    CHECK_THROWS_AS(ReplayFileClient(temp_path("ovd_missing_transcript.jsonl")), LlmUnavailable);
}

TEST_CASE("http chat against a local stub") {
    httplib::Server server;
    std::atomic<int> hits{0};
    server.Post("/v1/chat", [&](const httplib::Request&, httplib::Response& res) {
        hits++;
        res.set_content(R"({"choices":[{"message":{"content":"hair, two eyes"}}]})",
                        "application/json");
    });
    server.Post("/broken", [&](const httplib::Request&, httplib::Response& res) {
        hits++;
        res.status = 500;
    });
    server.Post("/garbled", [&](const httplib::Request&, httplib::Response& res) {
        hits++;
        res.set_content("not json at all", "text/plain");
    });

    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    const std::string base = "http://127.0.0.1:" + std::to_string(port);
    const LLMQuery q = build_template_h("person", {"hair"});

    {
        HttpChat client(base + "/v1/chat", "test-model", "", 5.0, 1);
        CHECK(client.send(q) == "hair, two eyes");
    }
    {
        hits = 0;
        HttpChat client(base + "/broken", "test-model", "", 5.0, 1);
        CHECK_THROWS_AS(client.send(q), LlmUnavailable);
        CHECK(hits == 2); // one retry
    }
    {
        HttpChat client(base + "/garbled", "test-model", "", 5.0, 1);
        CHECK_THROWS_AS(client.send(q), LlmUnavailable);
    }
    {
        HttpChat client("http://127.0.0.1:1/none", "test-model", "", 0.2, 1);
        CHECK_THROWS_AS(client.send(q), LlmUnavailable);
    }

    server.stop();
    server_thread.join();
}

TEST_CASE("hierarchical_update with duplicate-only replies keeps K fixed") {
    const auto encode = hash_encoder(8);
    auto dict = DescriptorDictionary::init(
        {"cat", "dog"}, {{"cat", {"whiskers", "tail"}}, {"dog", {"snout", "paws"}}}, encode);

    ScriptedMock mock;
    mock.script(LLMQuery::Kind::H, "cat", "whiskers, tail");
    mock.script(LLMQuery::Kind::H, "dog", "snout, paws");

    UpdatePolicy policy;
    const UpdateReport report = hierarchical_update(dict, policy, mock, encode, 1);

    CHECK(dict.entry("cat").descriptors.size() == 2);
    CHECK(dict.entry("dog").descriptors.size() == 2);
    CHECK(dict.cycle() == 1);
    REQUIRE(report.per_category.size() == 2);
    for (const auto& cu : report.per_category) {
        CHECK(cu.merged == cu.parsed.size());
        CHECK(cu.inserted == 0);
        CHECK(cu.errors.empty());
    }
}

TEST_CASE("hierarchical_update inserts new phrases and C follows H") {
    // Basis encoder keeps every phrase orthogonal to every other.
    std::vector<std::string> vocab;
    const TextEncoder basis = [&vocab](const std::string& phrase) {
        auto it = std::find(vocab.begin(), vocab.end(), phrase);
        std::size_t idx;
        if (it == vocab.end()) {
            vocab.push_back(phrase);
            idx = vocab.size() - 1;
        } else {
            idx = static_cast<std::size_t>(it - vocab.begin());
        }
        Embedding v(16, 0.0);
        v.at(idx) = 1.0;
        return v;
    };

    auto dict = DescriptorDictionary::init(
        {"cat", "dog"}, {{"cat", {"whiskers"}}, {"dog", {"snout"}}}, basis);
    // Make "dog" a confuser of "cat".
    dict.record_confusion("cat", "dog");
    dict.record_confusion("cat", "dog");

    ScriptedMock mock;
    mock.script(LLMQuery::Kind::H, "cat", "fluffy tail");
    mock.script(LLMQuery::Kind::H, "dog", "floppy ears");
    mock.script(LLMQuery::Kind::C, "cat", "slit pupils");

    UpdatePolicy policy;
    policy.min_confusion = 2;
    const UpdateReport report = hierarchical_update(dict, policy, mock, basis, 1);

    CHECK(dict.entry("cat").descriptors.size() == 3); // whiskers + H + C
    CHECK(dict.entry("dog").descriptors.size() == 2);
    const CategoryUpdate& cat_update = report.per_category[0];
    CHECK(cat_update.category == "cat");
    REQUIRE(cat_update.queries.size() == 2);
    CHECK(cat_update.queries[1].find("distinguish cat") != std::string::npos);
    CHECK(cat_update.queries[1].find("including dog") != std::string::npos);
    CHECK(cat_update.inserted == 2);
    CHECK(cat_update.inserted + cat_update.merged == cat_update.parsed.size());
}

TEST_CASE("hierarchical_update survives per-category LLM failures") {
    const auto encode = hash_encoder(8);
    auto dict = DescriptorDictionary::init(
        {"cat", "dog"}, {{"cat", {"whiskers"}}, {"dog", {"snout"}}}, encode);

    ScriptedMock mock;
    mock.script(LLMQuery::Kind::H, "dog", "floppy ears");
    // No script for "cat": its H query fails, the run continues.

    UpdatePolicy policy;
    const UpdateReport report = hierarchical_update(dict, policy, mock, encode, 1);
    REQUIRE(report.per_category.size() == 2);
    CHECK(report.per_category[0].category == "cat");
    CHECK(report.per_category[0].errors.size() == 1);
    CHECK(report.per_category[0].inserted == 0);
    CHECK(report.per_category[1].errors.empty());
    CHECK(dict.entry("dog").descriptors.size() == 2);
    CHECK(dict.cycle() == 1);
}

TEST_CASE("hierarchical_update caps accepted phrases per reply") {
    const auto encode = hash_encoder(12);
    auto dict =
        DescriptorDictionary::init({"cat"}, {{"cat", {"whiskers"}}}, encode);
    ScriptedMock mock;
    mock.script(LLMQuery::Kind::H, "cat", "p1, p2, p3, p4, p5, p6");

    UpdatePolicy policy;
    policy.max_new_per_query = 3;
    const UpdateReport report = hierarchical_update(dict, policy, mock, encode, 1);
    CHECK(report.per_category[0].parsed.size() == 3);
}

TEST_CASE("hierarchical_update sends the top-usage descriptors in H") {
    const auto encode = hash_encoder(8);
    auto dict = DescriptorDictionary::init(
        {"cat"}, {{"cat", {"a", "b", "c", "d"}}}, encode);
    dict.record_usage("cat", {1});
    dict.record_usage("cat", {1});
    dict.record_usage("cat", {3});

    ScriptedMock mock;
    mock.script(LLMQuery::Kind::H, "cat", "");
    UpdatePolicy policy;
    policy.template_h_top = 2;
    policy.floor = 4;
    const UpdateReport report = hierarchical_update(dict, policy, mock, encode, 1);
    CHECK(report.per_category[0].queries[0] ==
          "Q: There are several useful visual features to tell there is a cat in a photo, "
          "including b, d.");
}

TEST_CASE("hierarchical_update is deterministic") {
    const auto encode = hash_encoder(8);
    const auto build = [&] {
        auto dict = DescriptorDictionary::init(
            {"cat", "dog"}, {{"cat", {"whiskers", "tail"}}, {"dog", {"snout"}}}, encode);
        dict.record_usage("cat", {0});
        dict.record_confusion("cat", "dog");
        dict.record_confusion("cat", "dog");
        return dict;
    };
    ScriptedMock mock;
    mock.script(LLMQuery::Kind::H, "cat", "fluffy tail, whiskers");
    mock.script(LLMQuery::Kind::H, "dog", "floppy ears");
    mock.script(LLMQuery::Kind::C, "cat", "slit pupils, whiskers");

    UpdatePolicy policy;
    auto d1 = build();
    auto d2 = build();
    const UpdateReport r1 = hierarchical_update(d1, policy, mock, encode, 1);
    const UpdateReport r2 = hierarchical_update(d2, policy, mock, encode, 1);
    CHECK(d1 == d2);
    REQUIRE(r1.per_category.size() == r2.per_category.size());
    for (std::size_t i = 0; i < r1.per_category.size(); ++i) {
        CHECK(r1.per_category[i].parsed == r2.per_category[i].parsed);
        CHECK(r1.per_category[i].pruned == r2.per_category[i].pruned);
        CHECK(r1.per_category[i].merged == r2.per_category[i].merged);
        CHECK(r1.per_category[i].inserted == r2.per_category[i].inserted);
    }
}

TEST_CASE("every category keeps at least one descriptor after an update") {
    const auto encode = hash_encoder(8);
    auto dict = DescriptorDictionary::init(
        {"cat", "dog"}, {{"cat", {"a", "b", "c"}}, {"dog", {"x"}}}, encode);
    for (int i = 0; i < 50; ++i) dict.record_usage("cat", {0});

    ScriptedMock mock;
    mock.script(LLMQuery::Kind::H, "cat", "");
    mock.script(LLMQuery::Kind::H, "dog", "");
    UpdatePolicy policy;
    policy.rho = 0.9;
    policy.floor = 1;
    hierarchical_update(dict, policy, mock, encode, 5);
    CHECK(dict.entry("cat").descriptors.size() >= 1);
    CHECK(dict.entry("dog").descriptors.size() >= 1);
}

TEST_CASE("update order is prune, then H, then C") {
    // A low-usage descriptor must be gone before the H payload is built.
    const auto encode = hash_encoder(8);
    auto dict = DescriptorDictionary::init({"cat"}, {{"cat", {"keep", "drop"}}}, encode);
    for (int i = 0; i < 20; ++i) dict.record_usage("cat", {0});

    ScriptedMock mock;
    mock.script(LLMQuery::Kind::H, "cat", "");
    UpdatePolicy policy;
    policy.rho = 0.5;
    policy.floor = 1;
    policy.template_h_top = 5;
    const UpdateReport report = hierarchical_update(dict, policy, mock, encode, 2);
    CHECK(report.per_category[0].pruned == std::vector<std::string>{"drop"});
    CHECK(report.per_category[0].queries[0].find("drop") == std::string::npos);
}
