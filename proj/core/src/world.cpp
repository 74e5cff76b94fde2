#include "ovd/world.hpp"

#include "ovd/errors.hpp"
#include "ovd/rng.hpp"

#include <algorithm>
#include <set>

namespace ovd {

namespace {

Embedding random_unit(Rng& rng, std::size_t dim) {
    Embedding v(dim);
    for (double& x : v) x = rng.gaussian();
    return l2_normalize(v);
}

void validate(const WorldSpec& spec) {
    if (spec.dim < 4) throw InvalidSpec("world: dim must be >= 4");
    if (spec.n_categories == 0) throw InvalidSpec("world: need at least one category");
    if (spec.n_base >= spec.n_categories) {
        throw InvalidSpec("world: n_base must be < n_categories");
    }
    if (spec.descriptors_per_category == 0) {
        throw InvalidSpec("world: descriptors_per_category must be >= 1");
    }
    if (spec.shared_parts_per_category > spec.descriptors_per_category) {
        throw InvalidSpec("world: shared_parts_per_category cannot exceed "
                          "descriptors_per_category");
    }
    if (!(spec.presence_prob > 0.0) || spec.presence_prob > 1.0) {
        throw InvalidSpec("world: presence_prob must be in (0, 1]");
    }
    if (spec.noise_sigma < 0.0) throw InvalidSpec("world: noise_sigma must be >= 0");
    if (spec.context_gain < 0.0 || spec.context_gain > 1.0) {
        throw InvalidSpec("world: context_gain must be in [0, 1]");
    }
    if (spec.width < 8.0 || spec.height < 8.0) {
        throw InvalidSpec("world: image must be at least 8x8");
    }
}

} // namespace

World World::generate(const WorldSpec& spec) {
    validate(spec);
    World w;
    w.spec_ = spec;

    // Shared pool first: part k is used by every category whose index window
    // covers k, chaining neighbours (and wrapping novel back onto base).
    Rng pool_rng(mix_seed(spec.seed, 0x706f6f6cu));
    std::vector<HiddenDescriptor> pool;
    if (spec.shared_parts_per_category > 0) {
        for (std::size_t k = 0; k < spec.n_categories; ++k) {
            HiddenDescriptor d;
            d.phrase = "part" + std::to_string(k);
            d.signature = random_unit(pool_rng, spec.dim);
            pool.push_back(std::move(d));
        }
    }

    Rng sig_rng(mix_seed(spec.seed, 0x7369676eu)); // unique-signature stream
    for (std::size_t c = 0; c < spec.n_categories; ++c) {
        w.labels_.push_back("cat" + std::to_string(c));
        std::vector<HiddenDescriptor> parts;
        Embedding sum(spec.dim, 0.0);
        for (std::size_t s = 0; s < spec.shared_parts_per_category; ++s) {
            parts.push_back(pool[(c + s) % pool.size()]);
        }
        const std::size_t unique = spec.descriptors_per_category - spec.shared_parts_per_category;
        for (std::size_t k = 0; k < unique; ++k) {
            HiddenDescriptor d;
            d.phrase = "cat" + std::to_string(c) + "-part" + std::to_string(k);
            d.signature = random_unit(sig_rng, spec.dim);
            parts.push_back(std::move(d));
        }
        for (const auto& d : parts) {
            for (std::size_t i = 0; i < spec.dim; ++i) sum[i] += d.signature[i];
        }
        w.descriptors_.push_back(std::move(parts));
        w.prototypes_.push_back(l2_normalize(sum));
    }

    Rng dis_rng(mix_seed(spec.seed, 0x64697374u)); // distractor stream
    const std::size_t pool_size = 8 * std::max<std::size_t>(1, spec.n_distractors_per_reply);
    for (std::size_t k = 0; k < pool_size; ++k) {
        HiddenDescriptor d;
        d.phrase = "noise-" + std::to_string(k);
        d.signature = random_unit(dis_rng, spec.dim);
        w.distractors_.push_back(std::move(d));
    }
    return w;
}

std::vector<std::string> World::base_labels() const {
    return {labels_.begin(), labels_.begin() + static_cast<std::ptrdiff_t>(spec_.n_base)};
}

std::vector<std::string> World::novel_labels() const {
    return {labels_.begin() + static_cast<std::ptrdiff_t>(spec_.n_base), labels_.end()};
}

std::size_t World::category_index(const std::string& category) const {
    auto it = std::find(labels_.begin(), labels_.end(), category);
    if (it == labels_.end()) {
        throw UnknownCategory("world: unknown category \"" + category + "\"");
    }
    return static_cast<std::size_t>(it - labels_.begin());
}

const std::vector<HiddenDescriptor>& World::true_descriptors(const std::string& category) const {
    return descriptors_[category_index(category)];
}

const Embedding& World::prototype(const std::string& category) const {
    return prototypes_[category_index(category)];
}

bool World::is_world_phrase(const std::string& phrase) const {
    for (const auto& parts : descriptors_) {
        for (const auto& d : parts) {
            if (d.phrase == phrase) return true;
        }
    }
    for (const auto& d : distractors_) {
        if (d.phrase == phrase) return true;
    }
    return false;
}

std::vector<SyntheticSample> World::sample_batch(const std::vector<std::string>& categories,
                                                 std::size_t batch_size,
                                                 std::uint64_t seed) const {
    if (categories.empty()) throw InvalidCategory("sample_batch: empty category list");
    std::vector<std::size_t> cat_idx;
    for (const auto& c : categories) {
        auto it = std::find(labels_.begin(), labels_.end(), c);
        if (it == labels_.end()) {
            throw InvalidCategory("sample_batch: unknown category \"" + c + "\"");
        }
        cat_idx.push_back(static_cast<std::size_t>(it - labels_.begin()));
    }

    Rng rng(mix_seed(spec_.seed, mix_seed(seed, 0x62617463u)));
    std::vector<SyntheticSample> out;
    out.reserve(batch_size);
    for (std::size_t s = 0; s < batch_size; ++s) {
        const std::size_t ci = cat_idx[rng.next_below(cat_idx.size())];
        const auto& parts = descriptors_[ci];

        // Present subset, resampled until non-empty.
        std::vector<std::size_t> present;
        do {
            present.clear();
            for (std::size_t k = 0; k < parts.size(); ++k) {
                if (rng.uniform01() <= spec_.presence_prob) present.push_back(k);
            }
        } while (present.empty());

        Embedding raw(spec_.dim, 0.0);
        for (std::size_t k : present) {
            for (std::size_t i = 0; i < spec_.dim; ++i) raw[i] += parts[k].signature[i];
        }
        for (std::size_t i = 0; i < spec_.dim; ++i) raw[i] += spec_.noise_sigma * rng.gaussian();
        const Embedding r = l2_normalize(raw);

        Embedding ctx(spec_.dim);
        for (std::size_t i = 0; i < spec_.dim; ++i) {
            ctx[i] = r[i] + spec_.context_gain * prototypes_[ci][i] +
                     spec_.noise_sigma * rng.gaussian();
        }

        SyntheticSample sample;
        sample.proposal.r = r;
        sample.proposal.r_ctx = l2_normalize(ctx);
        sample.proposal.true_category = labels_[ci];

        // Uniform box with a 4x4 minimum, inside the image.
        const double x1 = rng.uniform(0.0, spec_.width - 4.0);
        const double y1 = rng.uniform(0.0, spec_.height - 4.0);
        sample.proposal.box.x1 = x1;
        sample.proposal.box.y1 = y1;
        sample.proposal.box.x2 = rng.uniform(x1 + 4.0, spec_.width);
        sample.proposal.box.y2 = rng.uniform(y1 + 4.0, spec_.height);
        out.push_back(std::move(sample));
    }
    return out;
}

Embedding World::encode_text(const std::string& phrase) const {
    for (const auto& parts : descriptors_) {
        for (const auto& d : parts) {
            if (d.phrase == phrase) return d.signature;
        }
    }
    for (const auto& d : distractors_) {
        if (d.phrase == phrase) return d.signature;
    }
    Rng rng(mix_seed(fnv1a(phrase), 0x74657874u));
    return random_unit(rng, spec_.dim);
}

std::string World::llm_reply(const LLMQuery& query) const {
    const std::size_t ci = category_index(query.category);
    const auto& parts = descriptors_[ci];

    std::vector<std::string> phrases;
    if (query.kind == LLMQuery::Kind::H) {
        // Up to half a category's parts per reply; filling a dictionary takes
        // a few update cycles, the way repeated prompting would.
        const std::size_t max_new = std::max<std::size_t>(1, parts.size() / 2);
        std::set<std::string> listed;
        for (const auto& p : query.payload) listed.insert(normalize_phrase(p));
        for (const auto& d : parts) {
            if (phrases.size() == max_new) break;
            if (!listed.count(d.phrase)) phrases.push_back(d.phrase);
        }
        // Deterministic distractor slice keyed off the query itself.
        if (!distractors_.empty() && spec_.n_distractors_per_reply > 0) {
            std::string key = query.category;
            for (const auto& p : query.payload) {
                key += '|';
                key += p;
            }
            const std::size_t start = fnv1a(key) % distractors_.size();
            for (std::size_t k = 0; k < spec_.n_distractors_per_reply; ++k) {
                phrases.push_back(distractors_[(start + k) % distractors_.size()].phrase);
            }
        }
    } else {
        std::vector<std::size_t> confusers;
        for (const auto& label : query.payload) {
            if (label == query.category) {
                throw InvalidQuery("world: category \"" + label + "\" listed as its own confuser");
            }
            confusers.push_back(category_index(label));
        }
        if (confusers.empty()) throw InvalidQuery("world: C query without confusers");

        // Margin of each part: affinity to its own prototype minus the best
        // affinity to any confuser prototype.
        std::vector<std::pair<double, std::size_t>> margins;
        for (std::size_t k = 0; k < parts.size(); ++k) {
            const double own = cosine(parts[k].signature, prototypes_[ci]);
            double worst = -2.0;
            for (std::size_t cj : confusers) {
                worst = std::max(worst, cosine(parts[k].signature, prototypes_[cj]));
            }
            margins.emplace_back(own - worst, k);
        }
        std::stable_sort(margins.begin(), margins.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        const std::size_t take = std::max<std::size_t>(1, (parts.size() + 1) / 2);
        for (std::size_t i = 0; i < std::min(take, margins.size()); ++i) {
            phrases.push_back(parts[margins[i].second].phrase);
        }
    }

    std::string reply;
    for (std::size_t i = 0; i < phrases.size(); ++i) {
        if (i) reply += ", ";
        reply += phrases[i];
    }
    return reply;
}

std::vector<std::string> World::init_distractors(const std::string& category) const {
    const std::size_t ci = category_index(category);
    std::vector<std::string> out;
    if (distractors_.empty() || spec_.n_distractors_per_reply == 0) return out;
    const std::size_t start =
        (ci * spec_.n_distractors_per_reply) % distractors_.size();
    for (std::size_t k = 0; k < spec_.n_distractors_per_reply; ++k) {
        out.push_back(distractors_[(start + k) % distractors_.size()].phrase);
    }
    return out;
}

} // namespace ovd
