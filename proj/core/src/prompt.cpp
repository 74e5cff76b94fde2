#include "ovd/prompt.hpp"

#include "ovd/errors.hpp"
#include "ovd/rng.hpp"
#include "ovd/scoring.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

using json = nlohmann::ordered_json;

namespace ovd {

Box enlarge_box(const Box& box, double m, double n, double image_width, double image_height) {
    if (!(box.x1 < box.x2) || !(box.y1 < box.y2)) {
        throw InvalidBox("enlarge_box: degenerate box");
    }
    if (box.x1 < 0.0 || box.y1 < 0.0 || box.x2 > image_width || box.y2 > image_height) {
        throw InvalidBox("enlarge_box: box outside image");
    }
    Box out;
    out.x1 = std::clamp(box.x1 - m, 0.0, image_width);
    out.y1 = std::clamp(box.y1 - n, 0.0, image_height);
    out.x2 = std::clamp(box.x2 + m, 0.0, image_width);
    out.y2 = std::clamp(box.y2 + n, 0.0, image_height);
    return out;
}

std::size_t MetaNetParams::default_hidden(std::size_t dim) {
    // Full width: a narrower bottleneck cannot represent the isotropic
    // context amplification that carries over to unseen categories.
    return std::max<std::size_t>(2, dim);
}

MetaNetParams MetaNetParams::init(std::size_t dim, std::size_t hidden, std::uint64_t seed) {
    MetaNetParams p;
    p.dim = dim;
    p.hidden = hidden;
    p.w1.resize(hidden * dim);
    p.b1.assign(hidden, 0.0);
    p.w2.assign(dim * hidden, 0.0); // zero: a fresh net leaves features untouched
    p.b2.assign(dim, 0.0);
    Rng rng(mix_seed(seed, 0x6d657461u));
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    for (double& w : p.w1) w = scale * rng.gaussian();
    return p;
}

Embedding meta_forward(const MetaNetParams& theta, const Embedding& r_ctx) {
    if (r_ctx.size() != theta.dim) {
        throw DimMismatch("meta_forward: input dim " + std::to_string(r_ctx.size()) +
                          ", expected " + std::to_string(theta.dim));
    }
    std::vector<double> a(theta.hidden);
    for (std::size_t h = 0; h < theta.hidden; ++h) {
        double z = theta.b1[h];
        const double* row = &theta.w1[h * theta.dim];
        for (std::size_t d = 0; d < theta.dim; ++d) z += row[d] * r_ctx[d];
        a[h] = std::tanh(z);
    }
    Embedding pi(theta.dim);
    for (std::size_t i = 0; i < theta.dim; ++i) {
        double acc = theta.b2[i];
        const double* row = &theta.w2[i * theta.hidden];
        for (std::size_t h = 0; h < theta.hidden; ++h) acc += row[h] * a[h];
        pi[i] = acc;
    }
    return pi;
}

Embedding prompted_feature(const Embedding& r, const Embedding& pi) {
    return add(r, pi);
}

double classification_loss(const DescriptorDictionary& dict, const Embedding& v,
                           const std::string& true_category, std::size_t n_sel, double tau,
                           const std::vector<std::string>* candidates) {
    if (!dict.has_category(true_category)) {
        throw UnknownCategory("classification_loss: unknown category \"" + true_category + "\"");
    }
    const std::vector<std::string>& labels =
        candidates != nullptr ? *candidates : dict.categories();
    if (std::find(labels.begin(), labels.end(), true_category) == labels.end()) {
        throw UnknownCategory("classification_loss: true category \"" + true_category +
                              "\" not among candidates");
    }
    const ScoreBreakdown bd = predict(dict, v, n_sel, candidates);
    std::vector<double> scores;
    std::size_t true_idx = 0;
    for (const auto& label : labels) {
        if (label == true_category) true_idx = scores.size();
        scores.push_back(bd.per_category_score.at(label));
    }
    const std::vector<double> p = softmax(scores, tau);
    return -std::log(std::max(p[true_idx], 1e-300));
}

MetaNetParams grad_theta(const MetaNetParams& theta, const DescriptorDictionary& dict,
                         const std::vector<Proposal>& batch, std::size_t n_sel, double tau,
                         const std::vector<std::string>* candidates) {
    if (batch.empty()) throw EmptyInput("grad_theta: empty batch");

    MetaNetParams g;
    g.dim = theta.dim;
    g.hidden = theta.hidden;
    g.w1.assign(theta.w1.size(), 0.0);
    g.b1.assign(theta.b1.size(), 0.0);
    g.w2.assign(theta.w2.size(), 0.0);
    g.b2.assign(theta.b2.size(), 0.0);

    const std::vector<std::string>& labels =
        candidates != nullptr ? *candidates : dict.categories();

    for (const Proposal& prop : batch) {
        if (prop.true_category.empty()) {
            throw EmptyInput("grad_theta: unlabeled proposal in batch");
        }
        if (std::find(labels.begin(), labels.end(), prop.true_category) == labels.end()) {
            throw UnknownCategory("grad_theta: category \"" + prop.true_category +
                                  "\" not among candidates");
        }

        // Forward, keeping the hidden activations around.
        std::vector<double> a(theta.hidden);
        for (std::size_t h = 0; h < theta.hidden; ++h) {
            double z = theta.b1[h];
            const double* row = &theta.w1[h * theta.dim];
            for (std::size_t d = 0; d < theta.dim; ++d) z += row[d] * prop.r_ctx[d];
            a[h] = std::tanh(z);
        }
        Embedding v(theta.dim);
        for (std::size_t i = 0; i < theta.dim; ++i) {
            double acc = theta.b2[i] + prop.r[i];
            const double* row = &theta.w2[i * theta.hidden];
            for (std::size_t h = 0; h < theta.hidden; ++h) acc += row[h] * a[h];
            v[i] = acc;
        }

        const ScoreBreakdown bd = predict(dict, v, n_sel, candidates);
        std::vector<double> scores;
        scores.reserve(labels.size());
        std::size_t true_idx = 0;
        for (const auto& label : labels) {
            if (label == prop.true_category) true_idx = scores.size();
            scores.push_back(bd.per_category_score.at(label));
        }
        const std::vector<double> p = softmax(scores, tau);

        // d loss / d v, with the selected descriptor sets held fixed.
        // phi(t, v) = t.v / ||v|| for unit t, so
        // d phi / d v = t / ||v|| - (t.v) v / ||v||^3.
        const double vnorm = norm(v);
        if (!(vnorm > kZeroNormEps)) throw ZeroVector("grad_theta: zero prompted feature");
        const double inv_norm = 1.0 / vnorm;
        const double inv_norm3 = inv_norm * inv_norm * inv_norm;

        Embedding g_v(theta.dim, 0.0);
        for (std::size_t c = 0; c < labels.size(); ++c) {
            const double dl_ds = (p[c] - (c == true_idx ? 1.0 : 0.0)) / tau;
            if (dl_ds == 0.0) continue;
            const CategoryEntry& e = dict.entry(labels[c]);
            const auto& selected = bd.selected_indices.at(labels[c]);
            const double w = dl_ds / static_cast<double>(selected.size());
            for (std::size_t k : selected) {
                const Embedding& t = e.descriptors[k].embedding;
                const double tv = dot(t, v);
                for (std::size_t i = 0; i < theta.dim; ++i) {
                    g_v[i] += w * (t[i] * inv_norm - tv * v[i] * inv_norm3);
                }
            }
        }

        // Backprop through pi = W2 a + b2 and a = tanh(W1 c + b1).
        for (std::size_t i = 0; i < theta.dim; ++i) {
            g.b2[i] += g_v[i];
            double* row = &g.w2[i * theta.hidden];
            for (std::size_t h = 0; h < theta.hidden; ++h) row[h] += g_v[i] * a[h];
        }
        std::vector<double> g_z(theta.hidden, 0.0);
        for (std::size_t h = 0; h < theta.hidden; ++h) {
            double g_a = 0.0;
            for (std::size_t i = 0; i < theta.dim; ++i) {
                g_a += theta.w2[i * theta.hidden + h] * g_v[i];
            }
            g_z[h] = g_a * (1.0 - a[h] * a[h]);
        }
        for (std::size_t h = 0; h < theta.hidden; ++h) {
            g.b1[h] += g_z[h];
            double* row = &g.w1[h * theta.dim];
            for (std::size_t d = 0; d < theta.dim; ++d) row[d] += g_z[h] * prop.r_ctx[d];
        }
    }

    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (double& x : g.w1) x *= inv_n;
    for (double& x : g.b1) x *= inv_n;
    for (double& x : g.w2) x *= inv_n;
    for (double& x : g.b2) x *= inv_n;
    return g;
}

MetaNetParams sgd_step(const MetaNetParams& theta, const MetaNetParams& grads, double lr) {
    if (theta.dim != grads.dim || theta.hidden != grads.hidden ||
        theta.w1.size() != grads.w1.size() || theta.w2.size() != grads.w2.size()) {
        throw DimMismatch("sgd_step: parameter/gradient shape mismatch");
    }
    MetaNetParams out = theta;
    for (std::size_t i = 0; i < out.w1.size(); ++i) out.w1[i] -= lr * grads.w1[i];
    for (std::size_t i = 0; i < out.b1.size(); ++i) out.b1[i] -= lr * grads.b1[i];
    for (std::size_t i = 0; i < out.w2.size(); ++i) out.w2[i] -= lr * grads.w2[i];
    for (std::size_t i = 0; i < out.b2.size(); ++i) out.b2[i] -= lr * grads.b2[i];
    return out;
}

namespace {

json matrix_rows(const std::vector<double>& flat, std::size_t rows, std::size_t cols) {
    json out = json::array();
    for (std::size_t r = 0; r < rows; ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < cols; ++c) row.push_back(flat[r * cols + c]);
        out.push_back(std::move(row));
    }
    return out;
}

std::vector<double> flatten_rows(const json& rows, std::size_t expect_rows,
                                 std::size_t expect_cols, const char* name) {
    if (rows.size() != expect_rows) {
        throw FormatError(std::string("checkpoint: ") + name + " row count mismatch");
    }
    std::vector<double> flat;
    flat.reserve(expect_rows * expect_cols);
    for (const auto& row : rows) {
        if (row.size() != expect_cols) {
            throw FormatError(std::string("checkpoint: ") + name + " column count mismatch");
        }
        for (const auto& x : row) flat.push_back(x.get<double>());
    }
    return flat;
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    const MetaNetParams& p = ckpt.params;
    json doc;
    doc["version"] = 1;
    doc["dim"] = p.dim;
    doc["hidden"] = p.hidden;
    doc["W1"] = matrix_rows(p.w1, p.hidden, p.dim);
    doc["b1"] = p.b1;
    doc["W2"] = matrix_rows(p.w2, p.dim, p.hidden);
    doc["b2"] = p.b2;
    doc["step"] = ckpt.step;
    doc["lr"] = ckpt.lr;
    doc["tau"] = ckpt.tau;
    std::ofstream out(path);
    if (!out) throw IoError("save_checkpoint: cannot open \"" + path + "\"");
    out << doc.dump(2) << "\n";
    if (!out) throw IoError("save_checkpoint: write failed for \"" + path + "\"");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_checkpoint: cannot open \"" + path + "\"");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw FormatError("load_checkpoint: \"" + path + "\": " + e.what());
    }
    try {
        Checkpoint ckpt;
        if (doc.at("version").get<int>() != 1) {
            throw FormatError("load_checkpoint: unsupported version");
        }
        ckpt.params.dim = doc.at("dim").get<std::size_t>();
        ckpt.params.hidden = doc.at("hidden").get<std::size_t>();
        ckpt.params.w1 = flatten_rows(doc.at("W1"), ckpt.params.hidden, ckpt.params.dim, "W1");
        ckpt.params.b1 = doc.at("b1").get<std::vector<double>>();
        ckpt.params.w2 = flatten_rows(doc.at("W2"), ckpt.params.dim, ckpt.params.hidden, "W2");
        ckpt.params.b2 = doc.at("b2").get<std::vector<double>>();
        if (ckpt.params.b1.size() != ckpt.params.hidden ||
            ckpt.params.b2.size() != ckpt.params.dim) {
            throw FormatError("load_checkpoint: bias length mismatch");
        }
        ckpt.step = doc.at("step").get<int>();
        ckpt.lr = doc.at("lr").get<double>();
        ckpt.tau = doc.at("tau").get<double>();
        return ckpt;
    } catch (const json::exception& e) {
        throw FormatError("load_checkpoint: \"" + path + "\": " + e.what());
    }
}

} // namespace ovd
