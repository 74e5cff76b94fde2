#pragma once

#include <cstddef>
#include <vector>

namespace ovd {

// Dense real vector. Visual features, context features, prompts and
// descriptor text embeddings are all this one type; every experiment uses a
// single fixed dimension.
using Embedding = std::vector<double>;

inline constexpr double kZeroNormEps = 1e-12;

double dot(const Embedding& a, const Embedding& b);
double norm(const Embedding& v);
bool all_finite(const Embedding& v);

// Returns v / ||v||. Throws ZeroVector when ||v|| <= 1e-12.
Embedding l2_normalize(const Embedding& v);

// Cosine similarity in [-1, 1]. Throws DimMismatch / ZeroVector.
double cosine(const Embedding& a, const Embedding& b);

// Indices of the min(n, scores.size()) largest scores, descending,
// ties broken by lower index. Throws EmptyInput.
std::vector<std::size_t> top_n_indices(const std::vector<double>& scores, std::size_t n);

// Max-subtracted softmax of logits / temperature. temperature must be > 0.
std::vector<double> softmax(const std::vector<double>& logits, double temperature);

Embedding add(const Embedding& a, const Embedding& b);
Embedding scale(const Embedding& v, double factor);

} // namespace ovd
