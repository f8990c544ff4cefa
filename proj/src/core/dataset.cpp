#include "odgen/core/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "odgen/core/error.hpp"
#include "odgen/core/log.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace odgen {

const char* split_name(Split s) {
    switch (s) {
        case Split::kTrain: return "train";
        case Split::kVal: return "val";
        case Split::kTest: return "test";
    }
    return "train";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::kTrain;
    if (name == "val" || name == "valid") return Split::kVal;
    if (name == "test") return Split::kTest;
    throw ConfigError("unknown split name: " + name);
}

size_t DetectionDataset::num_annotations() const {
    size_t n = 0;
    for (const auto& item : items) n += item.annotations.size();
    return n;
}

int DetectionDataset::max_objects_per_image() const {
    size_t n = 0;
    for (const auto& item : items) n = std::max(n, item.annotations.size());
    return static_cast<int>(n);
}

void DetectionDataset::validate() const {
    if (categories.empty()) {
        throw ConfigError("dataset has no categories");
    }
    if (scene_name.empty()) {
        throw ConfigError("dataset has an empty scene name");
    }
    std::set<std::string> seen(categories.begin(), categories.end());
    if (seen.size() != categories.size()) {
        throw ConfigError("dataset class names are not unique");
    }
    for (const auto& item : items) {
        for (const auto& ann : item.annotations) {
            if (ann.category_id < 0 || ann.category_id >= num_categories()) {
                throw ConfigError(strfmt("annotation category %d out of range", ann.category_id));
            }
            const BBox& b = ann.bbox;
            if (b.w <= 0.0 || b.h <= 0.0 || b.x < 0.0 || b.y < 0.0 ||
                b.x2() > item.pixels.width + 1e-6 || b.y2() > item.pixels.height + 1e-6) {
                throw ConfigError(strfmt("annotation box (%.3f,%.3f,%.3f,%.3f) violates bounds of %dx%d",
                                         b.x, b.y, b.w, b.h, item.pixels.width, item.pixels.height));
            }
        }
    }
}

namespace {

constexpr const char* kManifestName = "dataset.json";

json load_manifest(const fs::path& root) {
    std::ifstream in(root / kManifestName);
    if (!in) {
        throw IoError("cannot open manifest " + (root / kManifestName).string());
    }
    json m;
    try {
        in >> m;
    } catch (const json::exception& e) {
        throw IoError(strfmt("malformed manifest %s: %s", (root / kManifestName).c_str(), e.what()));
    }
    return m;
}

double parse_label_field(const std::string& token, const std::string& context) {
    size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(token, &pos);
    } catch (const std::exception&) {
        throw MalformedLabelError("non-numeric field '" + token + "' in " + context);
    }
    if (pos != token.size() || !std::isfinite(v)) {
        throw MalformedLabelError("non-numeric field '" + token + "' in " + context);
    }
    return v;
}

std::vector<Annotation> parse_label_file(const fs::path& path, int img_w, int img_h, int num_classes) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open label file " + path.string());
    }
    std::vector<Annotation> anns;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::vector<std::string> tokens;
        std::string tok;
        while (ss >> tok) tokens.push_back(tok);
        if (tokens.empty()) continue;
        const std::string ctx = strfmt("%s:%d", path.c_str(), line_no);
        if (tokens.size() != 5) {
            throw MalformedLabelError(strfmt("expected 5 fields, got %zu in %s", tokens.size(), ctx.c_str()));
        }
        const double cls = parse_label_field(tokens[0], ctx);
        if (cls != std::floor(cls) || cls < 0 || cls >= num_classes) {
            throw MalformedLabelError("class id '" + tokens[0] + "' out of range in " + ctx);
        }
        const double cx = parse_label_field(tokens[1], ctx);
        const double cy = parse_label_field(tokens[2], ctx);
        const double w = parse_label_field(tokens[3], ctx);
        const double h = parse_label_field(tokens[4], ctx);
        if (cx < 0.0 || cx > 1.0 || cy < 0.0 || cy > 1.0 || w <= 0.0 || w > 1.0 || h <= 0.0 || h > 1.0) {
            throw MalformedLabelError("normalized field out of range in " + ctx);
        }
        BBox box{(cx - w / 2.0) * img_w, (cy - h / 2.0) * img_h, w * img_w, h * img_h};
        BBox clipped;
        try {
            clipped = clip_bbox(box, img_w, img_h);
        } catch (const EmptyBoxError&) {
            LOG_WARN("dropping empty box in %s", ctx.c_str());
            continue;
        }
        if (clipped.area() < 1.0) {
            LOG_WARN("dropping box with clipped area %.4f px^2 in %s", clipped.area(), ctx.c_str());
            continue;
        }
        anns.push_back({static_cast<int>(cls), clipped});
    }
    return anns;
}

}  // namespace

DetectionDataset parse_yolo_dataset(const std::string& root_str, Split split) {
    const fs::path root(root_str);
    const json manifest = load_manifest(root);

    DetectionDataset ds;
    ds.split = split;
    try {
        ds.scene_name = manifest.at("scene_name").get<std::string>();
        ds.categories = manifest.at("categories").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw IoError(strfmt("manifest missing required field: %s", e.what()));
    }
    const json& splits = manifest.value("splits", json::object());
    const std::string split_dir = splits.value(split_name(split), std::string(split_name(split)));
    const fs::path images_dir = root / split_dir / "images";
    const fs::path labels_dir = root / split_dir / "labels";
    if (!fs::is_directory(images_dir)) {
        throw IoError("missing images directory " + images_dir.string());
    }

    std::vector<fs::path> image_files;
    for (const auto& entry : fs::directory_iterator(images_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            image_files.push_back(entry.path());
        }
    }
    std::sort(image_files.begin(), image_files.end());

    // a label file without a matching image is an error
    if (fs::is_directory(labels_dir)) {
        for (const auto& entry : fs::directory_iterator(labels_dir)) {
            if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
            fs::path expected = images_dir / entry.path().stem();
            expected += ".png";
            if (!fs::exists(expected)) {
                throw MissingImageError("label " + entry.path().string() + " has no image " +
                                        expected.string());
            }
        }
    }

    for (const auto& img_path : image_files) {
        LabeledImage item;
        item.pixels = load_png(img_path.string());
        fs::path label_path = labels_dir / img_path.stem();
        label_path += ".txt";
        if (fs::exists(label_path)) {
            item.annotations = parse_label_file(label_path, item.pixels.width, item.pixels.height,
                                                ds.num_categories());
        }
        ds.items.push_back(std::move(item));
    }
    ds.validate();
    return ds;
}

void export_yolo_dataset(const DetectionDataset& dataset, const std::string& root_str) {
    dataset.validate();
    const fs::path root(root_str);
    const std::string split_dir = split_name(dataset.split);
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) {
        throw IoError("cannot create " + root.string() + ": " + ec.message());
    }

    // Merge this split into an existing manifest when one is present.
    json manifest;
    if (fs::exists(root / kManifestName)) {
        manifest = load_manifest(root);
        if (manifest.value("scene_name", "") != dataset.scene_name ||
            manifest.value("categories", json::array()) != json(dataset.categories)) {
            throw ConfigError("existing manifest at " + root.string() +
                              " disagrees on scene or categories");
        }
    } else {
        manifest["scene_name"] = dataset.scene_name;
        manifest["categories"] = dataset.categories;
        manifest["splits"] = json::object();
    }
    manifest["splits"][split_dir] = split_dir;

    const fs::path images_dir = root / split_dir / "images";
    const fs::path labels_dir = root / split_dir / "labels";
    fs::remove_all(root / split_dir, ec);
    fs::create_directories(images_dir, ec);
    fs::create_directories(labels_dir, ec);
    if (ec) {
        throw IoError("cannot create split directories under " + root.string());
    }

    for (size_t i = 0; i < dataset.items.size(); ++i) {
        const LabeledImage& item = dataset.items[i];
        const std::string stem = strfmt("%06zu", i);
        save_png(item.pixels, (images_dir / (stem + ".png")).string());
        std::ofstream out(labels_dir / (stem + ".txt"));
        if (!out) {
            throw IoError("cannot write label file for " + stem);
        }
        for (const auto& ann : item.annotations) {
            const double cx = (ann.bbox.x + ann.bbox.w / 2.0) / item.pixels.width;
            const double cy = (ann.bbox.y + ann.bbox.h / 2.0) / item.pixels.height;
            const double w = ann.bbox.w / item.pixels.width;
            const double h = ann.bbox.h / item.pixels.height;
            out << strfmt("%d %.8f %.8f %.8f %.8f\n", ann.category_id, cx, cy, w, h);
        }
    }

    std::ofstream mf(root / kManifestName);
    if (!mf) {
        throw IoError("cannot write manifest under " + root.string());
    }
    mf << manifest.dump(2) << "\n";
}

}  // namespace odgen
