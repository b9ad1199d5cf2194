#include "panoseg/metrics.hpp"

#include <iomanip>
#include <stdexcept>

#include "panoseg/geometry.hpp"

namespace panoseg::train {

void ConfusionCounts::add(const LabelMap& pred, const LabelMap& gt, const Mask* ignore, const Mask* region) {
    if (!pred.same_dims(gt)) throw std::invalid_argument("metrics: prediction and ground truth dims differ");
    if (ignore && !ignore->same_dims(gt)) throw std::invalid_argument("metrics: ignore mask dims differ");
    if (region && !region->same_dims(gt)) throw std::invalid_argument("metrics: region mask dims differ");
    const auto k = static_cast<std::int32_t>(num_classes());
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (ignore && ignore->values[i]) continue;
        if (region && !region->values[i]) continue;
        const auto p = pred.values[i], g = gt.values[i];
        if (p < 0 || p >= k || g < 0 || g >= k) throw std::invalid_argument("metrics: label out of range");
        ++evaluated;
        if (p == g) {
            ++tp[p];
        } else {
            ++fp[p];
            ++fn[g];
        }
    }
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
    if (other.num_classes() != num_classes()) throw std::invalid_argument("metrics: class count mismatch");
    for (std::size_t c = 0; c < num_classes(); ++c) {
        tp[c] += other.tp[c];
        fp[c] += other.fp[c];
        fn[c] += other.fn[c];
    }
    evaluated += other.evaluated;
    return *this;
}

MetricReport make_report(const ConfusionCounts& counts) {
    MetricReport r;
    r.counts = counts;
    const std::size_t k = counts.num_classes();
    r.per_class_iou.resize(k);
    r.per_class_acc.resize(k);
    double iou_sum = 0.0, acc_sum = 0.0;
    std::size_t iou_n = 0, acc_n = 0;
    for (std::size_t c = 0; c < k; ++c) {
        const auto tp = static_cast<double>(counts.tp[c]);
        const auto uni = tp + static_cast<double>(counts.fp[c] + counts.fn[c]);
        const auto gt = tp + static_cast<double>(counts.fn[c]);
        if (uni > 0) {
            r.per_class_iou[c] = tp / uni;
            iou_sum += tp / uni;
            ++iou_n;
        }
        if (gt > 0) {
            r.per_class_acc[c] = tp / gt;
            acc_sum += tp / gt;
            ++acc_n;
        }
    }
    r.miou = iou_n ? iou_sum / static_cast<double>(iou_n) : 0.0;
    r.macc = acc_n ? acc_sum / static_cast<double>(acc_n) : 0.0;
    return r;
}

MetricReport compute_metrics(const LabelMap& pred, const LabelMap& gt, const Mask* ignore, std::size_t num_classes) {
    ConfusionCounts c(num_classes);
    c.add(pred, gt, ignore);
    return make_report(c);
}

std::vector<EdgeReport> edge_eval(const LabelMap& pred, const LabelMap& gt, const Mask* ignore,
                                  const std::vector<double>& ratios, std::size_t num_classes) {
    std::vector<EdgeReport> out;
    for (double ratio : ratios) {
        const auto band = geometry::edge_band_mask(gt.height, gt.width, ratio);
        ConfusionCounts c(num_classes);
        c.add(pred, gt, ignore, &band.mask);
        out.push_back({ratio, make_report(c)});
    }
    return out;
}

void write_metrics_csv(std::ostream& out, const MetricReport& report, const std::vector<std::string>& class_names) {
    auto fmt = [&](const std::optional<double>& v) {
        if (v) out << std::fixed << std::setprecision(6) << *v;
    };
    out << "class,id,iou,acc,tp,fp,fn\n";
    const auto& c = report.counts;
    std::uint64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t k = 0; k < c.num_classes(); ++k) {
        out << (k < class_names.size() ? class_names[k] : "class" + std::to_string(k)) << ',' << k << ',';
        fmt(report.per_class_iou[k]);
        out << ',';
        fmt(report.per_class_acc[k]);
        out << ',' << c.tp[k] << ',' << c.fp[k] << ',' << c.fn[k] << '\n';
        tp += c.tp[k];
        fp += c.fp[k];
        fn += c.fn[k];
    }
    out << "mean,,";
    fmt(report.miou);
    out << ',';
    fmt(report.macc);
    out << ',' << tp << ',' << fp << ',' << fn << '\n';
}

}  // namespace panoseg::train
