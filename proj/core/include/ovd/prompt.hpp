#pragma once

#include "ovd/dictionary.hpp"
#include "ovd/embedding.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ovd {

// Axis-aligned box in image coordinates, x1 < x2 and y1 < y2.
struct Box {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
};

// Grows the box by m horizontally and n vertically on each side, clamped to
// [0, width] x [0, height]. The result always contains the input box.
Box enlarge_box(const Box& box, double m, double n, double image_width, double image_height);

// Two-layer perceptron mapping a context feature to an additive prompt:
// pi = W2 * tanh(W1 * c + b1) + b2. The final layer is zero-initialized so a
// fresh net is an exact no-op on the classifier.
struct MetaNetParams {
    std::size_t dim = 0;
    std::size_t hidden = 0;
    std::vector<double> w1; // hidden x dim, row-major
    std::vector<double> b1; // hidden
    std::vector<double> w2; // dim x hidden, row-major
    std::vector<double> b2; // dim

    static MetaNetParams init(std::size_t dim, std::size_t hidden, std::uint64_t seed);
    static std::size_t default_hidden(std::size_t dim); // dim, at least 2
    std::size_t parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }
};

Embedding meta_forward(const MetaNetParams& theta, const Embedding& r_ctx);

// v = r + pi
Embedding prompted_feature(const Embedding& r, const Embedding& pi);

// One region proposal: box, raw feature, enlarged-context feature, label.
struct Proposal {
    Box box;
    Embedding r;
    Embedding r_ctx;
    std::string true_category;
};

// Softmax cross-entropy over per-category scores s(c, v) / tau against the
// true category. Candidates default to every dictionary category; training
// passes the base labels so unseen categories never act as negatives.
double classification_loss(const DescriptorDictionary& dict, const Embedding& v,
                           const std::string& true_category, std::size_t n_sel, double tau,
                           const std::vector<std::string>* candidates = nullptr);

// Analytic gradient of the mean classification loss over the batch w.r.t.
// theta. The dictionary and the top-N selections are held fixed at their
// forward-pass values (selection acts as a constant gate).
MetaNetParams grad_theta(const MetaNetParams& theta, const DescriptorDictionary& dict,
                         const std::vector<Proposal>& batch, std::size_t n_sel, double tau,
                         const std::vector<std::string>* candidates = nullptr);

MetaNetParams sgd_step(const MetaNetParams& theta, const MetaNetParams& grads, double lr);

struct Checkpoint {
    MetaNetParams params;
    int step = 0;
    double lr = 0.0;
    double tau = 0.0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace ovd
