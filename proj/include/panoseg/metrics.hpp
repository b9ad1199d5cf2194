#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "panoseg/grid.hpp"

namespace panoseg::train {

// Per-class confusion counts; merging two accumulators is addition.
struct ConfusionCounts {
    std::vector<std::uint64_t> tp, fp, fn;
    std::uint64_t evaluated = 0;

    explicit ConfusionCounts(std::size_t num_classes = 0) : tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0) {}

    std::size_t num_classes() const { return tp.size(); }
    // Counts pixels where `ignore` (optional) is 0 and `region` (optional) is 1.
    void add(const LabelMap& pred, const LabelMap& gt, const Mask* ignore = nullptr, const Mask* region = nullptr);
    ConfusionCounts& operator+=(const ConfusionCounts& other);
};

struct MetricReport {
    std::vector<std::optional<double>> per_class_iou;  // undefined when the class has an empty union
    std::vector<std::optional<double>> per_class_acc;  // undefined when the class has no GT pixel
    double miou = 0.0;  // fractions in [0,1]
    double macc = 0.0;
    ConfusionCounts counts;
};

MetricReport make_report(const ConfusionCounts& counts);

MetricReport compute_metrics(const LabelMap& pred, const LabelMap& gt, const Mask* ignore, std::size_t num_classes);

struct EdgeReport {
    double ratio = 1.0;
    MetricReport report;
};

// Metrics restricted to the border bands of each ratio, excluding ignored pixels.
std::vector<EdgeReport> edge_eval(const LabelMap& pred, const LabelMap& gt, const Mask* ignore,
                                  const std::vector<double>& ratios, std::size_t num_classes);

// Header `class,id,iou,acc,tp,fp,fn`, one row per class, then a `mean` row.
void write_metrics_csv(std::ostream& out, const MetricReport& report, const std::vector<std::string>& class_names);

}  // namespace panoseg::train
