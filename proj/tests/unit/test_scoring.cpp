#include "ovd/scoring.hpp"

#include "ovd/errors.hpp"
#include "ovd/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

using namespace ovd;

namespace {

// Dictionary with explicit unit embeddings per descriptor, no encoder.
DescriptorDictionary explicit_dict(
    const std::vector<std::pair<std::string, std::vector<Embedding>>>& spec) {
    std::vector<std::string> categories;
    std::map<std::string, std::vector<std::string>> seeds;
    std::map<std::string, Embedding> by_phrase;
    for (const auto& [label, embeddings] : spec) {
        categories.push_back(label);
        std::vector<std::string> phrases;
        for (std::size_t k = 0; k < embeddings.size(); ++k) {
            const std::string phrase = label + " part " + std::to_string(k);
            phrases.push_back(phrase);
            by_phrase[phrase] = embeddings[k];
        }
        seeds[label] = phrases;
    }
    const TextEncoder encode = [by_phrase](const std::string& phrase) {
        return by_phrase.at(phrase);
    };
    return DescriptorDictionary::init(categories, seeds, encode);
}

// Unit 2-vector with a chosen cosine against [1, 0].
Embedding with_phi(double value) {
    return {value, std::sqrt(1.0 - value * value)};
}

Embedding random_unit(Rng& rng, std::size_t dim) {
    Embedding v(dim);
    for (double& x : v) x = rng.gaussian();
    return l2_normalize(v);
}

} // namespace

TEST_CASE("phi matches cosine against the normalized feature") {
    CHECK(phi({1.0, 0.0}, {1.0, 0.0}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(phi({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(phi({1.0, 0.0}, {2.0, 2.0}) == doctest::Approx(0.70710678).epsilon(1e-8));
    CHECK_THROWS_AS(phi({1.0, 0.0}, {0.0, 0.0}), ZeroVector);
    CHECK_THROWS_AS(phi({1.0, 0.0}, {1.0, 0.0, 0.0}), DimMismatch);
}

TEST_CASE("category_score examples") {
    const auto dict = explicit_dict({{"a", {with_phi(1.0)}}});
    const auto [score_one, idx_one] = category_score(dict.entry("a"), {1.0, 0.0}, 1);
    CHECK(score_one == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(idx_one == std::vector<std::size_t>{0});

    const auto dict3 = explicit_dict({{"a", {with_phi(0.9), with_phi(0.1), with_phi(0.7)}}});
    const auto [score, idx] = category_score(dict3.entry("a"), {1.0, 0.0}, 2);
    CHECK(score == doctest::Approx(0.8).epsilon(1e-9));
    CHECK(idx == std::vector<std::size_t>{0, 2});

    // K < n_sel averages over everything there is.
    const auto [score_k1, idx_k1] = category_score(dict.entry("a"), {1.0, 0.0}, 4);
    CHECK(score_k1 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(idx_k1.size() == 1);
}

TEST_CASE("predict separates orthogonal categories") {
    const auto dict = explicit_dict({{"a", {{1.0, 0.0}}}, {"b", {{0.0, 1.0}}}});
    const ScoreBreakdown bd = predict(dict, {1.0, 0.0}, 1);
    CHECK(bd.predicted == "a");
    CHECK(bd.per_category_score.at("a") == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(bd.per_category_score.at("b") == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("predict with a one-label subset returns that label") {
    const auto dict = explicit_dict({{"a", {{1.0, 0.0}}}, {"b", {{0.0, 1.0}}}});
    const std::vector<std::string> subset = {"b"};
    const ScoreBreakdown bd = predict(dict, {1.0, 0.0}, 1, &subset);
    CHECK(bd.predicted == "b");
    CHECK(bd.per_category_score.count("a") == 0);

    const std::vector<std::string> bogus = {"zebra"};
    CHECK_THROWS_AS(predict(dict, {1.0, 0.0}, 1, &bogus), UnknownCategory);
}

TEST_CASE("predict matches the brute-force max-mean-subset oracle") {
    Rng rng(42);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t dim = 4 + rng.next_below(5);
        const std::size_t n_categories = 2 + rng.next_below(4);
        const std::size_t n_sel = 1 + rng.next_below(3);

        std::vector<std::pair<std::string, std::vector<Embedding>>> spec;
        for (std::size_t c = 0; c < n_categories; ++c) {
            std::vector<Embedding> embeddings;
            const std::size_t k = 1 + rng.next_below(6);
            for (std::size_t j = 0; j < k; ++j) embeddings.push_back(random_unit(rng, dim));
            spec.emplace_back("c" + std::to_string(c), std::move(embeddings));
        }
        const auto dict = explicit_dict(spec);
        const Embedding v = random_unit(rng, dim);
        const ScoreBreakdown bd = predict(dict, v, n_sel);

        // Oracle: enumerate every subset of size min(n_sel, K), take the
        // best mean. The top-n mean must be exactly that maximum.
        std::string oracle_best_label;
        double oracle_best = -2.0;
        for (const auto& [label, embeddings] : spec) {
            std::vector<double> phis;
            for (const auto& t : embeddings) phis.push_back(phi(t, v));
            const std::size_t take = std::min<std::size_t>(n_sel, phis.size());
            double best_mean = -2.0;
            std::vector<bool> mask(phis.size(), false);
            std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(take), true);
            std::sort(mask.begin(), mask.end());
            do {
                double sum = 0.0;
                for (std::size_t i = 0; i < phis.size(); ++i) {
                    if (mask[i]) sum += phis[i];
                }
                best_mean = std::max(best_mean, sum / static_cast<double>(take));
            } while (std::next_permutation(mask.begin(), mask.end()));
            CHECK(bd.per_category_score.at(label) == doctest::Approx(best_mean).epsilon(1e-9));
            if (best_mean > oracle_best) {
                oracle_best = best_mean;
                oracle_best_label = label;
            }
        }
        CHECK(bd.predicted == oracle_best_label);
    }
}

TEST_CASE("prediction is invariant to positive rescaling of the feature") {
    Rng rng(5);
    const auto dict = explicit_dict({{"a", {random_unit(rng, 6), random_unit(rng, 6)}},
                                     {"b", {random_unit(rng, 6), random_unit(rng, 6)}}});
    for (int trial = 0; trial < 20; ++trial) {
        const Embedding v = random_unit(rng, 6);
        const ScoreBreakdown bd = predict(dict, v, 2);

        const ScoreBreakdown bd2 = predict(dict, scale(v, 2.0), 2);
        CHECK(bd2.predicted == bd.predicted);
        CHECK(bd2.per_category_score.at("a") == bd.per_category_score.at("a"));
        CHECK(bd2.selected_indices == bd.selected_indices);

        const ScoreBreakdown bd37 = predict(dict, scale(v, 3.7), 2);
        CHECK(bd37.predicted == bd.predicted);
        CHECK(bd37.per_category_score.at("a") ==
              doctest::Approx(bd.per_category_score.at("a")).epsilon(1e-12));
    }
}

TEST_CASE("appending a low-phi descriptor leaves the score unchanged") {
    auto dict = explicit_dict({{"a", {with_phi(0.9), with_phi(0.8), with_phi(0.7)}}});
    const Embedding v = {1.0, 0.0};
    const double before = category_score(dict.entry("a"), v, 2).first;
    dict.merge_descriptor("a", "weak one", with_phi(-0.5), 0);
    REQUIRE(dict.entry("a").descriptors.size() == 4);
    CHECK(category_score(dict.entry("a"), v, 2).first == before);
}

TEST_CASE("score breakdown invariant: score is the mean of selected phis") {
    Rng rng(77);
    const auto dict = explicit_dict({{"a", {random_unit(rng, 8), random_unit(rng, 8),
                                            random_unit(rng, 8)}},
                                     {"b", {random_unit(rng, 8)}}});
    for (int trial = 0; trial < 20; ++trial) {
        const Embedding v = random_unit(rng, 8);
        for (const PhiMode mode : {PhiMode::Cosine, PhiMode::Softmax}) {
            const ScoreBreakdown bd = predict(dict, v, 2, nullptr, mode);
            for (const auto& [label, selected] : bd.selected_indices) {
                double sum = 0.0;
                for (std::size_t i : selected) sum += bd.per_descriptor_phi.at(label)[i];
                CHECK(bd.per_category_score.at(label) ==
                      doctest::Approx(sum / static_cast<double>(selected.size())).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("softmax phi mode yields positive normalized relevances") {
    Rng rng(13);
    const auto dict = explicit_dict({{"a", {random_unit(rng, 4), random_unit(rng, 4)}},
                                     {"b", {random_unit(rng, 4)}}});
    const Embedding v = random_unit(rng, 4);
    const ScoreBreakdown bd = predict(dict, v, 1, nullptr, PhiMode::Softmax);
    double total = 0.0;
    for (const auto& [label, phis] : bd.per_descriptor_phi) {
        (void)label;
        for (double x : phis) {
            CHECK(x > 0.0);
            total += x;
        }
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));

    // Softmax is monotone, so the per-category selection matches cosine mode.
    const ScoreBreakdown cos_bd = predict(dict, v, 1);
    CHECK(bd.selected_indices == cos_bd.selected_indices);
}

TEST_CASE("score_and_record updates usage and confusion") {
    auto dict = explicit_dict({{"a", {{1.0, 0.0}}}, {"b", {{0.0, 1.0}}}});

    // Correct prediction: usage on the true category's selection, no miss.
    const ScoreBreakdown hit = score_and_record(dict, {1.0, 0.0}, "a", 1);
    CHECK(hit.predicted == "a");
    CHECK(dict.entry("a").descriptors[0].usage == 1);
    CHECK(dict.entry("a").predictions_total == 1);
    CHECK(dict.entry("a").misclassified_total == 0);

    // Miss: same usage bookkeeping plus a confusion count.
    const ScoreBreakdown miss = score_and_record(dict, {0.0, 1.0}, "a", 1);
    CHECK(miss.predicted == "b");
    CHECK(dict.entry("a").descriptors[0].usage == 2);
    CHECK(dict.entry("a").confusion.at("b") == 1);
    CHECK(dict.entry("a").misclassified_total == 1);
    CHECK(dict.entry("b").predictions_total == 0);

    CHECK_THROWS_AS(score_and_record(dict, {1.0, 0.0}, "zebra", 1), UnknownCategory);
}

TEST_CASE("record_on=predicted credits the predicted category") {
    auto dict = explicit_dict({{"a", {{1.0, 0.0}}}, {"b", {{0.0, 1.0}}}});
    score_and_record(dict, {0.0, 1.0}, "a", 1, RecordOn::Predicted);
    CHECK(dict.entry("a").descriptors[0].usage == 0);
    CHECK(dict.entry("b").descriptors[0].usage == 1);
    CHECK(dict.entry("a").confusion.at("b") == 1);
}

TEST_CASE("usage increments per batch equal sum of min(n_sel, K_true)") {
    Rng rng(31);
    auto dict = explicit_dict({{"a", {random_unit(rng, 6), random_unit(rng, 6)}},
                               {"b", {random_unit(rng, 6), random_unit(rng, 6),
                                      random_unit(rng, 6), random_unit(rng, 6)}}});
    const std::size_t n_sel = 3;
    std::size_t expected = 0;
    const std::vector<std::string> labels = {"a", "b"};
    for (int p = 0; p < 50; ++p) {
        const std::string& label = labels[rng.next_below(2)];
        expected += std::min(n_sel, dict.entry(label).descriptors.size());
        score_and_record(dict, random_unit(rng, 6), label, n_sel);
    }
    std::size_t total_usage = 0;
    for (const auto& label : labels) {
        for (const auto& d : dict.entry(label).descriptors) total_usage += d.usage;
    }
    CHECK(total_usage == expected);
}
