#include "odgen/stats/layout_stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <Eigen/Cholesky>
#include <nlohmann/json.hpp>

#include "odgen/core/error.hpp"
#include "odgen/core/log.hpp"

using json = nlohmann::json;

namespace odgen {

namespace {

Eigen::VectorXd count_vector(const LabeledImage& item, int k) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(k);
    for (const auto& ann : item.annotations) v[ann.category_id] += 1.0;
    return v;
}

struct RunningMoments {
    long n = 0;
    double sum = 0.0;
    double sum_sq = 0.0;
    void push(double x) {
        ++n;
        sum += x;
        sum_sq += x * x;
    }
    double mean() const { return n > 0 ? sum / n : 0.0; }
    // unbiased for n >= 2, zero for a single sample
    double var() const {
        if (n < 2) return 0.0;
        const double m = mean();
        return std::max(0.0, (sum_sq - n * m * m) / (n - 1));
    }
};

}  // namespace

ClassCountStats estimate_count_stats(const DetectionDataset& dataset) {
    const int k = dataset.num_categories();
    const long n = static_cast<long>(dataset.items.size());
    if (n < 2) {
        throw InsufficientDataError(
            strfmt("count covariance needs at least 2 images, got %ld", n));
    }
    ClassCountStats stats;
    stats.mu = Eigen::VectorXd::Zero(k);
    for (const auto& item : dataset.items) stats.mu += count_vector(item, k);
    stats.mu /= static_cast<double>(n);

    stats.sigma = Eigen::MatrixXd::Zero(k, k);
    for (const auto& item : dataset.items) {
        const Eigen::VectorXd d = count_vector(item, k) - stats.mu;
        stats.sigma += d * d.transpose();
    }
    stats.sigma /= static_cast<double>(n - 1);
    stats.sigma += kCovarianceEpsilon * Eigen::MatrixXd::Identity(k, k);
    return stats;
}

BoxAttrStats estimate_box_stats(const DetectionDataset& dataset) {
    const int k = dataset.num_categories();
    std::vector<RunningMoments> mx(k), my(k), ma(k), mr(k);
    for (const auto& item : dataset.items) {
        const double w = item.pixels.width;
        const double h = item.pixels.height;
        for (const auto& ann : item.annotations) {
            // normalize, then reuse the one area/ratio definition
            const BBox nb{ann.bbox.x / w, ann.bbox.y / h, ann.bbox.w / w, ann.bbox.h / h};
            const BoxGeometry geo = derive_geometry(nb);
            mx[ann.category_id].push(nb.x);
            my[ann.category_id].push(nb.y);
            ma[ann.category_id].push(geo.area);
            mr[ann.category_id].push(geo.ratio);
        }
    }
    BoxAttrStats stats;
    stats.per_category.resize(k);
    for (int c = 0; c < k; ++c) {
        CategoryBoxStats& s = stats.per_category[c];
        s.sample_count = mx[c].n;
        if (mx[c].n == 0) {
            stats.missing_categories.push_back(c);
            continue;
        }
        s.fitted = true;
        s.mu_x = mx[c].mean();
        s.var_x = mx[c].var();
        s.mu_y = my[c].mean();
        s.var_y = my[c].var();
        s.mu_area = ma[c].mean();
        s.var_area = ma[c].var();
        s.mu_ratio = mr[c].mean();
        s.var_ratio = mr[c].var();
    }
    for (int c : stats.missing_categories) {
        LOG_WARN("no boxes for category %d (%s); sampler will emit none", c,
                 c < static_cast<int>(dataset.categories.size()) ? dataset.categories[c].c_str()
                                                                 : "?");
    }
    return stats;
}

std::vector<int> sample_object_counts(const ClassCountStats& stats, int max_total, Rng& rng) {
    const int k = static_cast<int>(stats.mu.size());
    Eigen::MatrixXd sigma = stats.sigma;
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    for (int attempt = 0; attempt < 8 && llt.info() != Eigen::Success; ++attempt) {
        sigma += kCovarianceEpsilon * 10.0 * Eigen::MatrixXd::Identity(k, k);
        llt.compute(sigma);
    }
    if (llt.info() != Eigen::Success) {
        throw InsufficientDataError("count covariance is not positive semi-definite");
    }
    Eigen::VectorXd z(k);
    for (int i = 0; i < k; ++i) z[i] = rng.gaussian();
    const Eigen::VectorXd draw = stats.mu + llt.matrixL() * z;

    std::vector<int> counts(k);
    long total = 0;
    for (int i = 0; i < k; ++i) {
        counts[i] = std::max(0, static_cast<int>(std::lround(draw[i])));
        total += counts[i];
    }
    // uniform random drops until the condition list can hold everything
    while (total > max_total) {
        long pick = rng.uniform_int(0, static_cast<int>(total) - 1);
        for (int i = 0; i < k; ++i) {
            if (pick < counts[i]) {
                --counts[i];
                --total;
                break;
            }
            pick -= counts[i];
        }
    }
    return counts;
}

namespace {

BBox box_from_attrs(double x, double y, double area, double ratio, int height, int width) {
    const double nw = std::sqrt(area * ratio);
    const double nh = std::sqrt(area / ratio);
    return BBox{x * width, y * height, nw * width, nh * height};
}

}  // namespace

BBox sample_bbox(const BoxAttrStats& stats, int category, int height, int width, Rng& rng) {
    if (category < 0 || category >= static_cast<int>(stats.per_category.size()) ||
        !stats.per_category[category].fitted) {
        throw InsufficientDataError(strfmt("no fitted box stats for category %d", category));
    }
    const CategoryBoxStats& s = stats.per_category[category];
    for (int attempt = 0; attempt < kBoxSampleRetries; ++attempt) {
        const double x = rng.gaussian(s.mu_x, std::sqrt(s.var_x));
        const double y = rng.gaussian(s.mu_y, std::sqrt(s.var_y));
        const double area = rng.gaussian(s.mu_area, std::sqrt(s.var_area));
        const double ratio = rng.gaussian(s.mu_ratio, std::sqrt(s.var_ratio));
        if (area <= 0.0 || ratio <= 0.0) continue;
        try {
            return clip_bbox(box_from_attrs(x, y, area, ratio, height, width), width, height);
        } catch (const EmptyBoxError&) {
            continue;
        }
    }
    // mean-box fallback: mean size, position clamped so the box always fits
    BBox mean = box_from_attrs(s.mu_x, s.mu_y, s.mu_area, s.mu_ratio, height, width);
    mean.w = std::min(mean.w, static_cast<double>(width));
    mean.h = std::min(mean.h, static_cast<double>(height));
    mean.x = std::clamp(mean.x, 0.0, width - mean.w);
    mean.y = std::clamp(mean.y, 0.0, height - mean.h);
    return clip_bbox(mean, width, height);
}

PseudoLabel sample_pseudo_label(const ClassCountStats& count_stats, const BoxAttrStats& box_stats,
                                int height, int width, int max_total, Rng& rng) {
    PseudoLabel label;
    label.height = height;
    label.width = width;
    std::vector<int> counts = sample_object_counts(count_stats, max_total, rng);
    for (int c = 0; c < static_cast<int>(counts.size()); ++c) {
        if (c < static_cast<int>(box_stats.per_category.size()) &&
            !box_stats.per_category[c].fitted) {
            continue;  // category never observed; emit nothing
        }
        for (int i = 0; i < counts[c]; ++i) {
            label.annotations.push_back({c, sample_bbox(box_stats, c, height, width, rng)});
        }
    }
    std::stable_sort(label.annotations.begin(), label.annotations.end(),
                     [](const Annotation& a, const Annotation& b) {
                         return a.bbox.area() > b.bbox.area();
                     });
    return label;
}

void save_stats(const std::string& path, const ClassCountStats& counts,
                const BoxAttrStats& boxes) {
    json j;
    j["count"]["mu"] = std::vector<double>(counts.mu.data(), counts.mu.data() + counts.mu.size());
    json rows = json::array();
    for (int r = 0; r < counts.sigma.rows(); ++r) {
        rows.push_back(std::vector<double>(counts.sigma.row(r).begin(), counts.sigma.row(r).end()));
    }
    j["count"]["sigma"] = rows;
    j["boxes"] = json::array();
    for (size_t c = 0; c < boxes.per_category.size(); ++c) {
        const CategoryBoxStats& s = boxes.per_category[c];
        j["boxes"].push_back({{"category", c},
                              {"fitted", s.fitted},
                              {"sample_count", s.sample_count},
                              {"mu_x", s.mu_x},
                              {"var_x", s.var_x},
                              {"mu_y", s.mu_y},
                              {"var_y", s.var_y},
                              {"mu_area", s.mu_area},
                              {"var_area", s.var_area},
                              {"mu_ratio", s.mu_ratio},
                              {"var_ratio", s.var_ratio}});
    }
    j["missing_categories"] = boxes.missing_categories;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write stats file " + path);
    out << j.dump(2) << "\n";
}

void load_stats(const std::string& path, ClassCountStats& counts, BoxAttrStats& boxes) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open stats file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError(strfmt("malformed stats file %s: %s", path.c_str(), e.what()));
    }
    const auto mu = j.at("count").at("mu").get<std::vector<double>>();
    counts.mu = Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<long>(mu.size()));
    const auto rows = j.at("count").at("sigma").get<std::vector<std::vector<double>>>();
    counts.sigma.resize(static_cast<long>(rows.size()), static_cast<long>(rows.size()));
    for (size_t r = 0; r < rows.size(); ++r) {
        for (size_t c = 0; c < rows[r].size(); ++c) counts.sigma(r, c) = rows[r][c];
    }
    boxes.per_category.clear();
    boxes.missing_categories = j.value("missing_categories", std::vector<int>{});
    for (const auto& e : j.at("boxes")) {
        CategoryBoxStats s;
        s.fitted = e.at("fitted").get<bool>();
        s.sample_count = e.value("sample_count", 0L);
        s.mu_x = e.value("mu_x", 0.0);
        s.var_x = e.value("var_x", 0.0);
        s.mu_y = e.value("mu_y", 0.0);
        s.var_y = e.value("var_y", 0.0);
        s.mu_area = e.value("mu_area", 0.0);
        s.var_area = e.value("var_area", 0.0);
        s.mu_ratio = e.value("mu_ratio", 0.0);
        s.var_ratio = e.value("var_ratio", 0.0);
        boxes.per_category.push_back(s);
    }
}

}  // namespace odgen
