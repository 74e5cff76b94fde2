#pragma once

#include "ovd/dictionary.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace ovd {

// A rendered query to the language model. Kind H carries a category's
// high-frequency descriptors, kind C carries the labels it keeps being
// mistaken for.
struct LLMQuery {
    enum class Kind { H, C };
    Kind kind = Kind::H;
    std::string category;
    std::vector<std::string> payload;
    std::string rendered;
};

const char* to_string(LLMQuery::Kind kind);
LLMQuery::Kind kind_from_string(const std::string& s);

// "Q: There are several useful visual features to tell there is a {category}
// in a photo, including {p1, p2, ...}."
LLMQuery build_template_h(const std::string& category, const std::vector<std::string>& high_freq);

// "Q: Which visual features could be used to distinguish {category} from
// some confusing categories including {c1, c2, ...} in a photo?"
LLMQuery build_template_c(const std::string& category, const std::vector<std::string>& confusers);

// Splits a free-form reply into candidate phrases: newlines, commas and
// semicolons separate items; "-", "*", "1.", "1)" and "a)" prefixes are
// stripped; items are trimmed, lowercased, trailing punctuation removed;
// empties, phrases over 6 words and duplicates are dropped, order kept.
std::vector<std::string> parse_reply(const std::string& raw);

// Pluggable chat backend. Implementations throw LlmUnavailable on failure.
class LlmClient {
public:
    virtual ~LlmClient() = default;
    virtual std::string send(const LLMQuery& query) = 0;
    // Orchestration hint so transcript records can carry the update cycle.
    virtual void on_cycle(int /*cycle*/) {}
};

// Deterministic canned replies keyed by (kind, category). Missing entries
// throw MissingScript.
class ScriptedMock : public LlmClient {
public:
    void script(LLMQuery::Kind kind, const std::string& category, const std::string& reply);
    std::string send(const LLMQuery& query) override;

private:
    std::map<std::pair<LLMQuery::Kind, std::string>, std::string> replies_;
};

// Replays a recorded transcript in order; each send must match the next
// record's kind, category and rendered text byte-for-byte.
class ReplayFileClient : public LlmClient {
public:
    explicit ReplayFileClient(const std::string& path);
    std::string send(const LLMQuery& query) override;

private:
    struct Record {
        int cycle = 0;
        std::string category;
        std::string kind;
        std::string rendered;
        std::string reply;
    };
    std::vector<Record> records_;
    std::size_t next_ = 0;
    std::string path_;
};

// Wraps another client and appends every exchange to a transcript file
// (line-delimited JSON) that ReplayFileClient can play back.
class RecordingClient : public LlmClient {
public:
    RecordingClient(std::unique_ptr<LlmClient> inner, const std::string& path);
    std::string send(const LLMQuery& query) override;
    void on_cycle(int cycle) override;

private:
    std::unique_ptr<LlmClient> inner_;
    std::string path_;
    int cycle_ = 0;
};

// POSTs an OpenAI-style chat completion request. The bearer token comes from
// the environment variable named at construction; timeouts and a single
// retry with backoff are built in. Any failure throws LlmUnavailable.
class HttpChat : public LlmClient {
public:
    HttpChat(std::string url, std::string model, std::string api_key_env, double timeout_s,
             int backoff_ms = 500);
    std::string send(const LLMQuery& query) override;

private:
    std::string url_;
    std::string model_;
    std::string api_key_env_;
    double timeout_s_;
    int backoff_ms_;
};

// Knobs for one hierarchical dictionary update.
struct UpdatePolicy {
    int n_upd = 250;                   // iterations between updates
    double rho = 0.2;                  // prune ratio against the per-category max usage
    std::size_t floor = 3;             // descriptors always kept per category
    std::size_t k_confusing = 3;       // confusers per C query
    std::uint64_t min_confusion = 2;   // counts below this are ignored
    std::size_t template_h_top = 5;    // high-frequency descriptors sent in an H query
    std::size_t max_new_per_query = 10;// parsed phrases accepted per reply
    bool enable_h = true;
    bool enable_c = true;
    MergeScope merge_scope = MergeScope::Category;
};

struct CategoryUpdate {
    std::string category;
    std::vector<std::string> pruned;
    std::vector<std::string> queries; // rendered query strings, in send order
    std::vector<std::string> replies; // raw replies, aligned with queries
    std::vector<std::string> parsed;  // accepted phrases across both templates
    std::size_t merged = 0;
    std::size_t inserted = 0;
    std::vector<std::string> errors;
};

struct UpdateReport {
    int cycle = 0;
    std::vector<CategoryUpdate> per_category;
};

// One prune -> generate (H, then C) -> merge pass over every category, in
// dictionary order. Per-category LLM failures are recorded in the report and
// never abort the run. Descriptors created at cycle-1 or later are exempt
// from this pass's pruning.
UpdateReport hierarchical_update(DescriptorDictionary& dict, const UpdatePolicy& policy,
                                 LlmClient& llm, const TextEncoder& encode, int cycle);

} // namespace ovd
