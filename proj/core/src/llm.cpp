#include "ovd/llm.hpp"

#include "ovd/errors.hpp"

#ifdef OVD_HTTPS_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <fstream>
#include <thread>

using json = nlohmann::ordered_json;

namespace ovd {

const char* to_string(LLMQuery::Kind kind) {
    return kind == LLMQuery::Kind::H ? "H" : "C";
}

LLMQuery::Kind kind_from_string(const std::string& s) {
    if (s == "H") return LLMQuery::Kind::H;
    if (s == "C") return LLMQuery::Kind::C;
    throw FormatError("unknown query kind \"" + s + "\"");
}

namespace {

std::string join(const std::vector<std::string>& items, const char* sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += sep;
        out += items[i];
    }
    return out;
}

} // namespace

LLMQuery build_template_h(const std::string& category,
                          const std::vector<std::string>& high_freq) {
    if (high_freq.empty()) throw EmptyPayload("template H: empty descriptor payload");
    LLMQuery q;
    q.kind = LLMQuery::Kind::H;
    q.category = category;
    q.payload = high_freq;
    q.rendered = "Q: There are several useful visual features to tell there is a " + category +
                 " in a photo, including " + join(high_freq, ", ") + ".";
    return q;
}

LLMQuery build_template_c(const std::string& category,
                          const std::vector<std::string>& confusers) {
    if (confusers.empty()) throw EmptyPayload("template C: empty confuser payload");
    LLMQuery q;
    q.kind = LLMQuery::Kind::C;
    q.category = category;
    q.payload = confusers;
    q.rendered = "Q: Which visual features could be used to distinguish " + category +
                 " from some confusing categories including " + join(confusers, ", ") +
                 " in a photo?";
    return q;
}

namespace {

// Strips "-", "*", "1.", "1)" and "a)" style list markers. The dotted forms
// require a following space so decimals like "1.5 liter" survive.
std::string strip_list_prefix(std::string s) {
    for (;;) {
        std::size_t i = 0;
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        std::size_t start = i;
        if (i < s.size() && (s[i] == '-' || s[i] == '*')) {
            ++i;
            while (i < s.size() && (s[i] == '-' || s[i] == '*')) ++i;
        } else if (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
            std::size_t j = i;
            while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
            if (j < s.size() && s[j] == ')') {
                i = j + 1;
            } else if (j + 1 < s.size() && s[j] == '.' &&
                       std::isspace(static_cast<unsigned char>(s[j + 1]))) {
                i = j + 1;
            } else {
                return s.substr(start);
            }
        } else if (i + 1 < s.size() && std::isalpha(static_cast<unsigned char>(s[i])) &&
                   (s[i + 1] == ')' ||
                    (s[i + 1] == '.' && i + 2 < s.size() &&
                     std::isspace(static_cast<unsigned char>(s[i + 2]))))) {
            i += 2;
        } else {
            return s.substr(start);
        }
        s = s.substr(i);
    }
}

std::string strip_trailing_punct(std::string s) {
    while (!s.empty()) {
        const char c = s.back();
        if (c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?' ||
            std::isspace(static_cast<unsigned char>(c))) {
            s.pop_back();
        } else {
            break;
        }
    }
    return s;
}

} // namespace

std::vector<std::string> parse_reply(const std::string& raw) {
    std::vector<std::string> segments;
    std::string current;
    for (char c : raw) {
        if (c == '\n' || c == '\r' || c == ',' || c == ';') {
            segments.push_back(current);
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    segments.push_back(current);

    std::vector<std::string> out;
    for (std::string& seg : segments) {
        std::string phrase = normalize_phrase(strip_trailing_punct(strip_list_prefix(seg)));
        if (phrase.empty()) continue;
        if (word_count(phrase) > 6) continue;
        if (std::find(out.begin(), out.end(), phrase) != out.end()) continue;
        out.push_back(std::move(phrase));
    }
    return out;
}

void ScriptedMock::script(LLMQuery::Kind kind, const std::string& category,
                          const std::string& reply) {
    replies_[{kind, category}] = reply;
}

std::string ScriptedMock::send(const LLMQuery& query) {
    auto it = replies_.find({query.kind, query.category});
    if (it == replies_.end()) {
        throw MissingScript("no scripted reply for (" + std::string(to_string(query.kind)) +
                            ", " + query.category + ")");
    }
    return it->second;
}

ReplayFileClient::ReplayFileClient(const std::string& path) : path_(path) {
    std::ifstream in(path);
    if (!in) throw LlmUnavailable("replay: cannot open transcript \"" + path + "\"");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json doc;
        try {
            doc = json::parse(line);
        } catch (const json::exception& e) {
            throw LlmUnavailable("replay: \"" + path + "\" line " + std::to_string(line_no) +
                                 ": " + e.what());
        }
        Record rec;
        rec.cycle = doc.value("cycle", 0);
        rec.category = doc.value("category", "");
        rec.kind = doc.value("kind", "");
        rec.rendered = doc.value("rendered", "");
        rec.reply = doc.value("reply", "");
        records_.push_back(std::move(rec));
    }
}

std::string ReplayFileClient::send(const LLMQuery& query) {
    if (next_ >= records_.size()) {
        throw LlmUnavailable("replay: transcript \"" + path_ + "\" exhausted");
    }
    const Record& rec = records_[next_];
    if (rec.kind != to_string(query.kind) || rec.category != query.category ||
        rec.rendered != query.rendered) {
        throw LlmUnavailable("replay: transcript \"" + path_ + "\" record " +
                             std::to_string(next_) + " does not match query for \"" +
                             query.category + "\"");
    }
    ++next_;
    return rec.reply;
}

RecordingClient::RecordingClient(std::unique_ptr<LlmClient> inner, const std::string& path)
    : inner_(std::move(inner)), path_(path) {}

void RecordingClient::on_cycle(int cycle) {
    cycle_ = cycle;
    inner_->on_cycle(cycle);
}

std::string RecordingClient::send(const LLMQuery& query) {
    const std::string reply = inner_->send(query);
    json rec;
    rec["cycle"] = cycle_;
    rec["category"] = query.category;
    rec["kind"] = to_string(query.kind);
    rec["rendered"] = query.rendered;
    rec["reply"] = reply;
    std::ofstream out(path_, std::ios::app);
    if (!out) throw IoError("record: cannot open transcript \"" + path_ + "\"");
    out << rec.dump() << "\n";
    out.flush();
    return reply;
}

namespace {

struct ParsedUrl {
    std::string base; // scheme://host[:port]
    std::string path; // /path or /
};

ParsedUrl parse_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("http: url \"" + url + "\" missing scheme");
    }
    const auto path_start = url.find('/', scheme_end + 3);
    ParsedUrl out;
    if (path_start == std::string::npos) {
        out.base = url;
        out.path = "/";
    } else {
        out.base = url.substr(0, path_start);
        out.path = url.substr(path_start);
    }
    return out;
}

} // namespace

HttpChat::HttpChat(std::string url, std::string model, std::string api_key_env, double timeout_s,
                   int backoff_ms)
    : url_(std::move(url)),
      model_(std::move(model)),
      api_key_env_(std::move(api_key_env)),
      timeout_s_(timeout_s),
      backoff_ms_(backoff_ms) {}

std::string HttpChat::send(const LLMQuery& query) {
    const ParsedUrl url = parse_url(url_);
#ifndef OVD_HTTPS_SUPPORT
    if (url.base.rfind("https://", 0) == 0) {
        throw LlmUnavailable("http: built without TLS support, cannot reach " + url.base);
    }
#endif

    json body;
    body["model"] = model_;
    body["messages"] = json::array({json{{"role", "user"}, {"content", query.rendered}}});
    const std::string payload = body.dump();

    httplib::Headers headers;
    if (!api_key_env_.empty()) {
        const char* key = std::getenv(api_key_env_.c_str());
        if (key != nullptr && key[0] != '\0') {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
    }

    std::string last_error;
    for (int attempt = 0; attempt < 2; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms_ << (attempt - 1)));
        }
        httplib::Client client(url.base);
        const auto seconds = static_cast<time_t>(timeout_s_);
        const auto usec = static_cast<time_t>((timeout_s_ - static_cast<double>(seconds)) * 1e6);
        client.set_connection_timeout(seconds, usec);
        client.set_read_timeout(seconds, usec);
        client.set_write_timeout(seconds, usec);

        auto res = client.Post(url.path, headers, payload, "application/json");
        if (!res) {
            last_error = "connection failed (" + httplib::to_string(res.error()) + ")";
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            last_error = "status " + std::to_string(res->status);
            continue;
        }
        try {
            const json doc = json::parse(res->body);
            return doc.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception& e) {
            last_error = std::string("malformed response: ") + e.what();
            continue;
        }
    }
    throw LlmUnavailable("http: " + url_ + ": " + last_error);
}

UpdateReport hierarchical_update(DescriptorDictionary& dict, const UpdatePolicy& policy,
                                 LlmClient& llm, const TextEncoder& encode, int cycle) {
    UpdateReport report;
    report.cycle = cycle;
    llm.on_cycle(cycle);

    const auto accept_phrases = [&](CategoryUpdate& cu, const std::string& category,
                                    const std::string& reply) {
        std::vector<std::string> phrases = parse_reply(reply);
        if (phrases.size() > policy.max_new_per_query) {
            phrases.resize(policy.max_new_per_query);
        }
        for (const std::string& phrase : phrases) {
            try {
                const Embedding emb = l2_normalize(encode(phrase));
                const MergeResult res =
                    dict.merge_descriptor(category, phrase, emb, cycle, policy.merge_scope);
                cu.parsed.push_back(phrase);
                if (res.kind == MergeResult::Kind::MergedInto) {
                    ++cu.merged;
                } else {
                    ++cu.inserted;
                }
            } catch (const std::exception& e) {
                cu.errors.push_back("merge \"" + phrase + "\": " + e.what());
            }
        }
    };

    for (const std::string& category : dict.categories()) {
        CategoryUpdate cu;
        cu.category = category;

        // (1) discard low-frequency descriptors; anything born last cycle or
        // later has not had a full interval to accrue usage and is spared.
        cu.pruned = dict.prune_low_frequency(category, policy.rho, policy.floor, cycle - 1);

        // (2) solicit new descriptors seeded by the high-frequency ones.
        if (policy.enable_h) {
            const CategoryEntry& entry = dict.entry(category);
            std::vector<std::size_t> rank(entry.descriptors.size());
            for (std::size_t i = 0; i < rank.size(); ++i) rank[i] = i;
            std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
                return entry.descriptors[a].usage > entry.descriptors[b].usage;
            });
            std::vector<std::string> high_freq;
            for (std::size_t i = 0; i < std::min(policy.template_h_top, rank.size()); ++i) {
                high_freq.push_back(entry.descriptors[rank[i]].text);
            }
            try {
                const LLMQuery query = build_template_h(category, high_freq);
                cu.queries.push_back(query.rendered);
                const std::string reply = llm.send(query);
                cu.replies.push_back(reply);
                accept_phrases(cu, category, reply);
            } catch (const LlmUnavailable& e) {
                cu.errors.push_back(std::string("H: ") + e.what());
            }
        }

        // (3) solicit discriminative descriptors against frequent confusers.
        if (policy.enable_c) {
            const std::vector<std::string> confusers =
                dict.confusing_categories(category, policy.k_confusing, policy.min_confusion);
            if (!confusers.empty()) {
                try {
                    const LLMQuery query = build_template_c(category, confusers);
                    cu.queries.push_back(query.rendered);
                    const std::string reply = llm.send(query);
                    cu.replies.push_back(reply);
                    accept_phrases(cu, category, reply);
                } catch (const LlmUnavailable& e) {
                    cu.errors.push_back(std::string("C: ") + e.what());
                }
            }
        }

        report.per_category.push_back(std::move(cu));
    }
    dict.set_cycle(cycle);
    return report;
}

} // namespace ovd
