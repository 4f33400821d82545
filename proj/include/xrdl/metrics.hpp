#pragma once

// Confusion matrices, classification reports and model evaluation.

#include "xrdl/data.hpp"
#include "xrdl/error.hpp"
#include "xrdl/model.hpp"

#include "json.hpp"

#include <cstdio>
#include <string>
#include <vector>

namespace xrdl {

/// Rows are true classes, columns predicted classes.
struct confusion_matrix {
    std::vector<std::string> class_names;
    std::vector<std::vector<std::size_t>> counts;

    [[nodiscard]] std::size_t num_classes() const noexcept { return counts.size(); }

    [[nodiscard]] std::size_t total() const {
        std::size_t t = 0;
        for (const auto& row : counts) {
            for (const auto c : row) {
                t += c;
            }
        }
        return t;
    }

    [[nodiscard]] std::size_t trace() const {
        std::size_t t = 0;
        for (std::size_t i = 0; i < counts.size(); ++i) {
            t += counts[i][i];
        }
        return t;
    }

    friend bool operator==(const confusion_matrix&, const confusion_matrix&) = default;
};

inline std::vector<std::string> default_class_names(std::size_t n) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n; ++i) {
        names.push_back("class_" + std::to_string(i));
    }
    return names;
}

inline confusion_matrix confusion(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted,
                                  std::size_t num_classes, std::vector<std::string> class_names = {}) {
    if (truth.size() != predicted.size()) {
        throw usage_error("confusion: " + std::to_string(truth.size()) + " true labels vs " +
                          std::to_string(predicted.size()) + " predictions");
    }
    if (class_names.empty()) {
        class_names = default_class_names(num_classes);
    }
    if (class_names.size() != num_classes || num_classes == 0) {
        throw usage_error("confusion: class name count does not match num_classes");
    }
    confusion_matrix cm{std::move(class_names),
                        std::vector<std::vector<std::size_t>>(num_classes, std::vector<std::size_t>(num_classes, 0))};
    for (std::size_t k = 0; k < truth.size(); ++k) {
        if (truth[k] >= num_classes || predicted[k] >= num_classes) {
            throw usage_error("confusion: label out of range at position " + std::to_string(k));
        }
        ++cm.counts[truth[k]][predicted[k]];
    }
    return cm;
}

struct class_metrics {
    std::string name;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct classification_report {
    std::vector<class_metrics> classes;
    double accuracy = 0.0;
    std::size_t total = 0;
    class_metrics macro_avg;
    class_metrics weighted_avg;
};

inline double f1_score(double precision, double recall) {
    return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

/// Per-class precision/recall/F1/support with macro and support-weighted
/// averages. Empty denominators yield 0.
inline classification_report make_classification_report(const confusion_matrix& cm) {
    const std::size_t c = cm.num_classes();
    const std::size_t total = cm.total();
    if (c == 0 || total == 0) {
        throw usage_error("classification report needs a non-empty confusion matrix");
    }
    classification_report r;
    r.total = total;
    r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
    r.macro_avg.name = "macro avg";
    r.weighted_avg.name = "weighted avg";
    for (std::size_t i = 0; i < c; ++i) {
        std::size_t row = 0, col = 0;
        for (std::size_t j = 0; j < c; ++j) {
            row += cm.counts[i][j];
            col += cm.counts[j][i];
        }
        const double tp = static_cast<double>(cm.counts[i][i]);
        class_metrics m;
        m.name = cm.class_names.at(i);
        m.precision = col == 0 ? 0.0 : tp / static_cast<double>(col);
        m.recall = row == 0 ? 0.0 : tp / static_cast<double>(row);
        m.f1 = f1_score(m.precision, m.recall);
        m.support = row;
        r.classes.push_back(m);

        const double w = static_cast<double>(row) / static_cast<double>(total);
        r.macro_avg.precision += m.precision / static_cast<double>(c);
        r.macro_avg.recall += m.recall / static_cast<double>(c);
        r.macro_avg.f1 += m.f1 / static_cast<double>(c);
        r.weighted_avg.precision += w * m.precision;
        r.weighted_avg.recall += w * m.recall;
        r.weighted_avg.f1 += w * m.f1;
    }
    r.macro_avg.support = total;
    r.weighted_avg.support = total;
    return r;
}

/// Two-decimal table in the usual precision/recall/f1-score/support layout.
inline std::string render_report(const classification_report& r) {
    std::size_t width = 12;
    for (const auto& m : r.classes) {
        width = std::max(width, m.name.size());
    }
    const int w = static_cast<int>(width);
    char line[512];
    std::string out;
    std::snprintf(line, sizeof line, "%*s %9s %9s %9s %9s\n\n", w, "", "precision", "recall", "f1-score", "support");
    out += line;
    auto row = [&](const class_metrics& m) {
        std::snprintf(line, sizeof line, "%*s %9.2f %9.2f %9.2f %9zu\n", w, m.name.c_str(), m.precision, m.recall,
                      m.f1, m.support);
        out += line;
    };
    for (const auto& m : r.classes) {
        row(m);
    }
    out += "\n";
    std::snprintf(line, sizeof line, "%*s %9s %9s %9.2f %9zu\n", w, "accuracy", "", "", r.accuracy, r.total);
    out += line;
    row(r.macro_avg);
    row(r.weighted_avg);
    return out;
}

inline nlohmann::json to_json(const class_metrics& m) {
    return {{"name", m.name}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
}

/// Key-value layout: classes[], accuracy, total, macro_avg, weighted_avg.
inline nlohmann::json to_json(const classification_report& r) {
    nlohmann::json classes = nlohmann::json::array();
    for (const auto& m : r.classes) {
        classes.push_back(to_json(m));
    }
    return {{"classes", classes},
            {"accuracy", r.accuracy},
            {"total", r.total},
            {"macro_avg", to_json(r.macro_avg)},
            {"weighted_avg", to_json(r.weighted_avg)}};
}

/// Header row of class names, then one row of counts per true class.
inline std::string format_confusion_csv(const confusion_matrix& cm) {
    std::string out;
    for (std::size_t i = 0; i < cm.class_names.size(); ++i) {
        out += (i ? "," : "") + cm.class_names[i];
    }
    out += "\n";
    for (const auto& row : cm.counts) {
        for (std::size_t j = 0; j < row.size(); ++j) {
            out += (j ? "," : "") + std::to_string(row[j]);
        }
        out += "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct evaluation {
    double loss = 0.0;
    double accuracy = 0.0;
    confusion_matrix matrix;
    classification_report report;
};

/// Infer-mode pass over all batches. Loss is the mean of per-sample
/// cross-entropies, accumulated in double in sample order.
template <scalar T>
evaluation evaluate_model(const model_spec& spec, const param_store<T>& params, const std::vector<batch>& batches,
                          std::vector<std::string> class_names = {}) {
    if (batches.empty()) {
        throw usage_error("evaluate_model needs at least one batch");
    }
    std::vector<std::size_t> truth, predicted;
    double loss_sum = 0.0;
    for (const auto& b : batches) {
        const tensor<T> out = infer(spec, params, b.images.template cast<T>());
        for (const T l : cross_entropy_per_sample(out, b.labels.template cast<T>())) {
            loss_sum += static_cast<double>(l);
        }
        const auto pred = predict_classes(out);
        predicted.insert(predicted.end(), pred.begin(), pred.end());
        truth.insert(truth.end(), b.label_indices.begin(), b.label_indices.end());
    }
    evaluation e;
    e.matrix = confusion(truth, predicted, spec.num_classes, std::move(class_names));
    e.report = make_classification_report(e.matrix);
    e.accuracy = e.report.accuracy;
    e.loss = loss_sum / static_cast<double>(truth.size());
    return e;
}

}  // namespace xrdl
