#include "ovd/embedding.hpp"

#include "ovd/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace ovd {

double dot(const Embedding& a, const Embedding& b) {
    if (a.size() != b.size()) {
        throw DimMismatch("dot: dim " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const Embedding& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

bool all_finite(const Embedding& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Embedding l2_normalize(const Embedding& v) {
    const double n = norm(v);
    if (!(n > kZeroNormEps)) {
        throw ZeroVector("l2_normalize: norm " + std::to_string(n) + " below threshold");
    }
    Embedding out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return out;
}

double cosine(const Embedding& a, const Embedding& b) {
    if (a.size() != b.size()) {
        throw DimMismatch("cosine: dim " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
    }
    const double na = norm(a);
    const double nb = norm(b);
    if (!(na > kZeroNormEps) || !(nb > kZeroNormEps)) {
        throw ZeroVector("cosine: zero-norm operand");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return std::clamp(s / (na * nb), -1.0, 1.0);
}

std::vector<std::size_t> top_n_indices(const std::vector<double>& scores, std::size_t n) {
    if (scores.empty()) throw EmptyInput("top_n_indices: empty score list");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const std::size_t k = std::min(n, scores.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (scores[a] != scores[b]) return scores[a] > scores[b];
                          return a < b;
                      });
    idx.resize(k);
    return idx;
}

std::vector<double> softmax(const std::vector<double>& logits, double temperature) {
    if (!(temperature > 0.0)) {
        throw ConfigError("softmax: temperature must be > 0");
    }
    if (logits.empty()) return {};
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp((logits[i] - mx) / temperature);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

Embedding add(const Embedding& a, const Embedding& b) {
    if (a.size() != b.size()) {
        throw DimMismatch("add: dim " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
    }
    Embedding out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

Embedding scale(const Embedding& v, double factor) {
    Embedding out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * factor;
    return out;
}

} // namespace ovd
