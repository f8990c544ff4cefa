#pragma once

#include <string>
#include <vector>

#include "odgen/core/bbox.hpp"
#include "odgen/core/image.hpp"

namespace odgen {

enum class Split { kTrain, kVal, kTest };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

struct LabeledImage {
    ImageU8 pixels;
    std::vector<Annotation> annotations;
};

struct DetectionDataset {
    std::vector<std::string> categories;  // K unique class names
    std::string scene_name;
    Split split = Split::kTrain;
    std::vector<LabeledImage> items;

    int num_categories() const { return static_cast<int>(categories.size()); }
    size_t num_annotations() const;
    // Largest per-image annotation count; the default condition list length.
    int max_objects_per_image() const;
    void validate() const;  // class names unique & non-empty, boxes in bounds
};

// On-disk layout (see README for the schema):
//   root/dataset.json                     manifest: scene, categories, split dirs
//   root/<split>/images/<name>.png
//   root/<split>/labels/<name>.txt        lines "class cx cy w h", normalized
DetectionDataset parse_yolo_dataset(const std::string& root, Split split = Split::kTrain);
void export_yolo_dataset(const DetectionDataset& dataset, const std::string& root);

}  // namespace odgen
