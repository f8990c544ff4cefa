#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "odgen/core/dataset.hpp"
#include "odgen/core/rng.hpp"

namespace odgen {

// Per-image object-count model: joint normal over the K-dim count vector.
struct ClassCountStats {
    Eigen::VectorXd mu;     // K, componentwise >= 0
    Eigen::MatrixXd sigma;  // K x K, symmetric, regularized to be PSD
};

// Per-category box attribute normals in normalized units: x, y are the
// top-left corner divided by image width/height, area is box area divided by
// the image area, ratio is normalized width over normalized height.
struct CategoryBoxStats {
    bool fitted = false;
    long sample_count = 0;
    double mu_x = 0.0, var_x = 0.0;
    double mu_y = 0.0, var_y = 0.0;
    double mu_area = 0.0, var_area = 0.0;
    double mu_ratio = 0.0, var_ratio = 0.0;
};

struct BoxAttrStats {
    std::vector<CategoryBoxStats> per_category;   // size K
    std::vector<int> missing_categories;          // categories with no boxes
};

// One sampled annotation set for an image about to be synthesized.
struct PseudoLabel {
    std::vector<Annotation> annotations;
    int height = 0;
    int width = 0;
};

inline constexpr double kCovarianceEpsilon = 1e-6;
inline constexpr int kBoxSampleRetries = 20;

// Sample mean + unbiased (n-1) covariance of per-image count vectors, plus
// epsilon*I so Cholesky sampling stays well-posed.
// Throws InsufficientDataError when the dataset has fewer than 2 images.
ClassCountStats estimate_count_stats(const DetectionDataset& dataset);

// Per-category normals over normalized box attributes. Unbiased variance for
// n >= 2, zero variance for a single box. Categories absent from the dataset
// are flagged in missing_categories; the sampler emits zero objects for them.
BoxAttrStats estimate_box_stats(const DetectionDataset& dataset);

// Draw from N(mu, sigma), round to nearest integer, clamp at zero. When the
// total exceeds max_total, entries are dropped uniformly at random.
std::vector<int> sample_object_counts(const ClassCountStats& stats, int max_total, Rng& rng);

// Draw x, y, area, ratio from the per-category normals; up to
// kBoxSampleRetries redraws on non-positive area/ratio or an empty clipped
// box, then a mean-box fallback, so a box is always produced.
BBox sample_bbox(const BoxAttrStats& stats, int category, int height, int width, Rng& rng);

// Counts then boxes; annotations ordered by pixel area descending.
PseudoLabel sample_pseudo_label(const ClassCountStats& count_stats, const BoxAttrStats& box_stats,
                                int height, int width, int max_total, Rng& rng);

// Human-readable JSON serialization (field names documented in the README).
void save_stats(const std::string& path, const ClassCountStats& counts, const BoxAttrStats& boxes);
void load_stats(const std::string& path, ClassCountStats& counts, BoxAttrStats& boxes);

}  // namespace odgen
