#include "voxadv/evaluation.hpp"

#include <cstdio>
#include <sstream>

#include "voxadv/error.hpp"
#include "voxadv/types.hpp"

namespace voxadv {

namespace {

void add_optional(std::optional<double>& sum, int& n, const std::optional<double>& v) {
    if (!v) return;
    sum = sum.value_or(0.0) + *v;
    ++n;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::string num(const std::optional<double>& v) { return v ? num(*v) : std::string("NA"); }

void write_row(std::ostringstream& out, const std::string& id, const MetricReport& r, int k) {
    out << id << ',' << num(r.mean.dsc) << ',' << num(r.mean.jaccard) << ',' << num(r.mean.hd95) << ',' << num(r.mean.assd);
    if (k > 2)
        for (const auto& c : r.per_class) out << ',' << num(c.dsc);
    out << '\n';
}

}  // namespace

Evaluation summarize(std::vector<CaseEvaluation> cases, int num_classes, DistanceUnit unit) {
    Evaluation e;
    e.num_classes = num_classes;
    e.unit = unit;
    e.cases = std::move(cases);
    e.mean.unit = unit;
    if (e.cases.empty()) return e;
    const std::size_t fg = static_cast<std::size_t>(num_classes - 1);
    const double n = static_cast<double>(e.cases.size());

    auto average = [n](const std::vector<const ClassMetrics*>& ms) {
        ClassMetrics out;
        std::optional<double> hd, as;
        int hd_n = 0, as_n = 0;
        for (const ClassMetrics* m : ms) {
            out.dsc += m->dsc / n;
            out.jaccard += m->jaccard / n;
            add_optional(hd, hd_n, m->hd95);
            add_optional(as, as_n, m->assd);
        }
        if (hd) out.hd95 = *hd / hd_n;
        if (as) out.assd = *as / as_n;
        return out;
    };

    for (std::size_t c = 0; c < fg; ++c) {
        std::vector<const ClassMetrics*> ms;
        for (const auto& ce : e.cases) {
            if (ce.report.per_class.size() != fg) throw ShapeError("case report class count differs");
            ms.push_back(&ce.report.per_class[c]);
        }
        e.mean.per_class.push_back(average(ms));
    }
    std::vector<const ClassMetrics*> means;
    for (const auto& ce : e.cases) means.push_back(&ce.report.mean);
    e.mean.mean = average(means);
    return e;
}

Evaluation evaluate_split(const BackboneParams<float>& student, const DatasetManifest& m, Preset preset, DistanceUnit unit,
                          Split split) {
    if (student.num_classes != m.num_classes)
        throw DomainError("class-count mismatch: checkpoint has " + std::to_string(student.num_classes) + ", manifest has " +
                          std::to_string(m.num_classes));
    std::vector<CaseEvaluation> cases;
    for (const CaseEntry* c : m.with_split(split)) {
        if (!c->mask) throw DomainError("case '" + c->id + "' has no mask to evaluate against");
        const Volume v = preprocess(read_volume(m.resolve(c->volume)), preset);
        LabelMask truth = read_mask(m.resolve(*c->mask), m.num_classes);
        if (!(truth.extent == v.extent())) truth = resample_nearest(truth, v.extent());
        const LabelMask pred = argmax_labels(backbone_forward(student, v).prediction);
        cases.push_back({c->id, evaluate_case(pred, truth, v.spacing, unit)});
    }
    return summarize(std::move(cases), m.num_classes, unit);
}

std::string evaluation_csv(const Evaluation& e) {
    std::ostringstream out;
    out << "case,dice,jaccard,hd95,assd";
    if (e.num_classes > 2)
        for (int c = 1; c < e.num_classes; ++c) out << ",dice_" << c;
    out << '\n';
    for (const auto& c : e.cases) write_row(out, c.case_id, c.report, e.num_classes);
    write_row(out, "mean", e.mean, e.num_classes);
    return out.str();
}

}  // namespace voxadv
