#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "odgen/cond/encoders.hpp"
#include "odgen/core/rng.hpp"

using namespace odgen;

namespace {

PseudoLabel make_pseudo(std::vector<Annotation> anns, int h = 64, int w = 64) {
    PseudoLabel p;
    p.annotations = std::move(anns);
    p.height = h;
    p.width = w;
    return p;
}

ImageU8 solid_patch(int h, int w, uint8_t r, uint8_t g, uint8_t b) {
    ImageU8 img(h, w);
    for (int i = 0; i < h * w; ++i) {
        img.data[i * 3] = r;
        img.data[i * 3 + 1] = g;
        img.data[i * 3 + 2] = b;
    }
    return img;
}

// per-pixel brute force counterpart of boxes_to_mask
FloatImage brute_force_mask(const std::vector<Annotation>& anns, int h, int w, int k) {
    FloatImage mask(k, h, w);
    for (int c = 0; c < k; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                int count = 0;
                for (const auto& ann : anns) {
                    if (ann.category_id != c) continue;
                    const auto [x0, x1] = pixel_range(ann.bbox.x, ann.bbox.w, w);
                    const auto [y0, y1] = pixel_range(ann.bbox.y, ann.bbox.h, h);
                    if (x >= x0 && x < x1 && y >= y0 && y < y1) ++count;
                }
                mask.at(c, y, x) = static_cast<float>(count);
            }
        }
    }
    return mask;
}

}  // namespace

TEST_CASE("build_text_list applies the object template") {
    const std::vector<std::string> cats = {"cat", "dog"};
    auto list = build_text_list(make_pseudo({{0, {0, 0, 8, 8}}, {1, {8, 8, 8, 8}}}), cats, 4);
    REQUIRE(list.entries.size() == 4);
    CHECK(list.entries[0] == "a cat");
    CHECK(list.entries[1] == "a dog");
    CHECK(list.entries[2] == "");
    CHECK(list.entries[3] == "");
    CHECK(list.object_count() == 2);

    auto empty = build_text_list(make_pseudo({}), cats, 3);
    CHECK(empty.entries == std::vector<std::string>{"", "", ""});

    std::vector<Annotation> five(5, {0, {0, 0, 4, 4}});
    CHECK_THROWS_AS(build_text_list(make_pseudo(five), cats, 4), OverflowError);
}

TEST_CASE("build_global_prompt golden strings") {
    const std::vector<std::string> cats = {"cat", "dog", "fish"};
    CHECK(build_global_prompt(
              make_pseudo({{0, {0, 0, 4, 4}}, {0, {4, 4, 4, 4}}, {1, {8, 8, 4, 4}}}), cats,
              "park") == "a cat and a dog in a park");
    CHECK(build_global_prompt(make_pseudo({}), cats, "park") == "a park");
    CHECK(build_global_prompt(make_pseudo({{2, {0, 0, 4, 4}}}), cats, "aquarium") ==
          "a fish in a aquarium");
}

TEST_CASE("paste_on_canvas geometry") {
    Rng rng(1);
    FloatImage patch(3, 8, 8);
    for (auto& v : patch.data) v = static_cast<float>(rng.uniform(-1, 1));

    // full-canvas box: canvas equals the resized patch everywhere
    FloatImage full = paste_on_canvas(patch, {0, 0, 16, 16}, 16, 16);
    FloatImage resized = resize_bilinear(patch, 16, 16);
    for (size_t i = 0; i < full.data.size(); ++i) {
        CHECK(full.data[i] == doctest::Approx(resized.data[i]));
    }

    // single-pixel box
    FloatImage one = paste_on_canvas(patch, {3, 5, 1, 1}, 16, 16);
    int nonzero_positions = 0;
    for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) {
            bool any = false;
            for (int c = 0; c < 3; ++c) any |= one.at(c, y, x) != 0.0f;
            if (any) {
                ++nonzero_positions;
                CHECK(x == 3);
                CHECK(y == 5);
            }
        }
    }
    CHECK(nonzero_positions <= 1);

    // everything outside the box stays zero
    for (int trial = 0; trial < 20; ++trial) {
        BBox box{rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(1, 20), rng.uniform(1, 20)};
        box = clip_bbox(box, 64, 64);
        FloatImage canvas = paste_on_canvas(patch, box, 64, 64);
        const auto [x0, x1] = pixel_range(box.x, box.w, 64);
        const auto [y0, y1] = pixel_range(box.y, box.h, 64);
        for (int c = 0; c < 3; ++c) {
            for (int y = 0; y < 64; ++y) {
                for (int x = 0; x < 64; ++x) {
                    if (x < x0 || x >= x1 || y < y0 || y >= y1) {
                        REQUIRE(canvas.at(c, y, x) == 0.0f);
                    }
                }
            }
        }
    }

    CHECK_THROWS_AS(paste_on_canvas(patch, {10.2, 10.4, 0.2, 4}, 64, 64), EmptyBoxError);
}

TEST_CASE("build_image_list keeps overlapping objects on separate canvases") {
    ForegroundPool pool(2);
    pool.add(0, solid_patch(8, 8, 255, 0, 0));
    pool.add(1, solid_patch(8, 8, 0, 0, 255));
    Rng rng(2);

    // zero objects: all canvases stay zero
    ImageList empty = build_image_list(make_pseudo({}), pool, 3, rng);
    REQUIRE(empty.canvases.size() == 3);
    for (const auto& canvas : empty.canvases) {
        for (float v : canvas.data) REQUIRE(v == 0.0f);
    }

    // two heavily overlapping boxes
    PseudoLabel pseudo = make_pseudo({{0, {10, 10, 20, 20}}, {1, {15, 15, 20, 20}}});
    ImageList list = build_image_list(pseudo, pool, 4, rng);
    REQUIRE(list.canvases.size() == 4);
    for (int i = 0; i < 2; ++i) {
        const auto& ann = pseudo.annotations[static_cast<size_t>(i)];
        const auto [x0, x1] = pixel_range(ann.bbox.x, ann.bbox.w, 64);
        const auto [y0, y1] = pixel_range(ann.bbox.y, ann.bbox.h, 64);
        // the full box region of canvas i carries its own patch, unclipped by
        // the other object (solid patches map to +/-1 in float space)
        const float expect_r = i == 0 ? 1.0f : -1.0f;
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                REQUIRE(list.canvases[static_cast<size_t>(i)].at(0, y, x) ==
                        doctest::Approx(expect_r).epsilon(0.02));
            }
        }
    }

    // deterministic under a fixed seed
    Rng r1(7), r2(7);
    ImageList a = build_image_list(pseudo, pool, 4, r1);
    ImageList b = build_image_list(pseudo, pool, 4, r2);
    for (size_t i = 0; i < a.canvases.size(); ++i) {
        REQUIRE(a.canvases[i].data == b.canvases[i].data);
    }

    PseudoLabel bad = make_pseudo({{1, {0, 0, 8, 8}}});
    ForegroundPool sparse(2);
    sparse.add(0, solid_patch(8, 8, 1, 2, 3));
    CHECK_THROWS_AS(build_image_list(bad, sparse, 4, rng), PoolMissError);
}

TEST_CASE("foreground pool save/load round trip") {
    ForegroundPool pool(2);
    pool.add(0, solid_patch(8, 8, 10, 20, 30));
    pool.add(0, solid_patch(8, 8, 40, 50, 60));
    pool.add(1, solid_patch(8, 8, 70, 80, 90));
    const std::string root = "/tmp/odgen_test_pool";
    std::filesystem::remove_all(root);
    pool.save(root, {"circle", "square"});
    ForegroundPool back = ForegroundPool::load(root, {"circle", "square"});
    CHECK(back.count(0) == 2);
    CHECK(back.count(1) == 1);
    Rng rng(3);
    CHECK(back.sample(1, rng).data == pool.sample(1, rng).data);
}

TEST_CASE("boxes_to_mask counts overlaps per class") {
    std::vector<Annotation> anns = {{0, {2, 2, 4, 4}}};
    FloatImage mask = boxes_to_mask(anns, 8, 8, 2);
    CHECK(mask.at(0, 3, 3) == 1.0f);
    CHECK(mask.at(0, 1, 1) == 0.0f);
    CHECK(mask.at(1, 3, 3) == 0.0f);

    anns.push_back({0, {4, 4, 4, 4}});
    mask = boxes_to_mask(anns, 16, 16, 1);
    CHECK(mask.at(0, 5, 5) == 2.0f);  // intersection counted twice
    CHECK(mask.at(0, 2, 2) == 1.0f);
    CHECK(mask.at(0, 7, 7) == 1.0f);
}

TEST_CASE("boxes_to_mask equals the per-pixel oracle on fuzzed instances") {
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        const int h = rng.uniform_int(4, 24);
        const int w = rng.uniform_int(4, 24);
        const int k = rng.uniform_int(1, 5);
        std::vector<Annotation> anns;
        const int n = rng.uniform_int(0, 6);
        for (int i = 0; i < n; ++i) {
            BBox box{rng.uniform(0, w - 1.0), rng.uniform(0, h - 1.0), rng.uniform(0.5, w / 1.5),
                     rng.uniform(0.5, h / 1.5)};
            try {
                box = clip_bbox(box, w, h);
            } catch (const EmptyBoxError&) {
                continue;
            }
            anns.push_back({rng.uniform_int(0, k - 1), box});
        }
        FloatImage fast = boxes_to_mask(anns, h, w, k);
        FloatImage slow = brute_force_mask(anns, h, w, k);
        REQUIRE(fast.data == slow.data);
    }
}

TEST_CASE("rasterize_foreground_mask union semantics") {
    CHECK(rasterize_foreground_mask({}, 64, 64, 16, 16).data ==
          FloatImage(1, 16, 16).data);  // all zeros

    FloatImage full = rasterize_foreground_mask({{0, {0, 0, 64, 64}}}, 64, 64, 16, 16);
    for (float v : full.data) CHECK(v == 1.0f);

    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        Annotation a{0, clip_bbox({rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(1, 30),
                                   rng.uniform(1, 30)},
                                  64, 64)};
        Annotation b{0, clip_bbox({rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(1, 30),
                                   rng.uniform(1, 30)},
                                  64, 64)};
        FloatImage both = rasterize_foreground_mask({a, b}, 64, 64, 32, 32);
        FloatImage ma = rasterize_foreground_mask({a}, 64, 64, 32, 32);
        FloatImage mb = rasterize_foreground_mask({b}, 64, 64, 32, 32);
        for (size_t i = 0; i < both.data.size(); ++i) {
            REQUIRE(both.data[i] == std::max(ma.data[i], mb.data[i]));
        }
    }
}

TEST_CASE("image encoder channel presets and ladder rule") {
    CHECK(image_encoder_channels(2) == std::array<int, 4>{16, 32, 96, 256});
    CHECK(image_encoder_channels(6) == std::array<int, 4>{32, 96, 128, 256});
    CHECK(image_encoder_channels(17) == std::array<int, 4>{64, 96, 128, 256});
    CHECK(image_encoder_channels(27) == std::array<int, 4>{96, 128, 192, 256});
    CHECK(image_encoder_channels(56) == std::array<int, 4>{168, 192, 224, 256});
    CHECK(image_encoder_channels(79) == std::array<int, 4>{237, 256, 256, 256});
    CHECK(image_encoder_channels(93) == std::array<int, 4>{297, 256, 256, 256});
    // non-preset sizes follow the ladder
    CHECK(image_encoder_channels(5) == std::array<int, 4>{16, 32, 64, 256});
    CHECK(image_encoder_channels(30) == std::array<int, 4>{96, 128, 168, 256});
    CHECK(image_encoder_channels(3)[0] == 16);  // floor at 16

    CHECK(text_encoder_channels(16) == std::array<int, 4>{8, 4, 2, 1});
    CHECK(text_encoder_channels(8) == std::array<int, 4>{4, 2, 1, 1});
    CHECK(text_encoder_channels(3) == std::array<int, 4>{1, 1, 1, 1});
}

TEST_CASE("hash embedder is deterministic and order sensitive") {
    HashEmbedder emb(8, 64, 1234);
    auto a = emb.embed("a cat");
    auto b = emb.embed("a cat");
    CHECK(a == b);
    CHECK(a.size() == 8 * 64);
    CHECK(emb.embed("a dog") != a);
    CHECK(emb.embed("cat a") != a);
    auto null1 = emb.embed("");
    auto null2 = emb.embed("");
    CHECK(null1 == null2);
}

TEST_CASE("image list encoder shapes match the presets") {
    Rng rng(6);
    for (int n : {2, 6}) {
        ImageListEncoder<float> enc;
        enc.init(n, rng);
        nn::Graph<float> g(false);
        nn::Tensor<float> x = nn::Tensor<float>::zeros({1, 3 * n, 64, 64});
        for (int64_t i = 0; i < x.numel(); ++i) x.val()[i] = static_cast<float>(rng.uniform(-1, 1));
        nn::Tensor<float> y = enc.forward(g, x);
        CHECK(y.shape() == std::vector<int>{1, 256, 8, 8});
    }

    // spatial reduction is /8 across input sizes
    ImageListEncoder<float> enc;
    enc.init(2, rng);
    nn::Graph<float> g(false);
    nn::Tensor<float> big = nn::Tensor<float>::zeros({1, 6, 128, 128});
    CHECK(enc.forward(g, big).shape() == std::vector<int>{1, 256, 16, 16});

    // all-zero input gives the deterministic bias-only response
    nn::Tensor<float> z1 = enc.forward(g, nn::Tensor<float>::zeros({1, 6, 64, 64}));
    nn::Tensor<float> z2 = enc.forward(g, nn::Tensor<float>::zeros({1, 6, 64, 64}));
    for (int64_t i = 0; i < z1.numel(); ++i) REQUIRE(z1.val()[i] == z2.val()[i]);

    nn::Tensor<float> bad = nn::Tensor<float>::zeros({1, 9, 64, 64});
    CHECK_THROWS_AS(enc.forward(g, bad), ShapeMismatchError);
}

TEST_CASE("text list encoder fuses the stack to one embedding") {
    Rng rng(7);
    HashEmbedder emb(8, 64, 99);
    for (int n : {8, 16}) {
        TextListEncoder<float> enc;
        enc.init(n, rng);
        PseudoLabel pseudo = make_pseudo({{0, {0, 0, 8, 8}}, {1, {8, 8, 8, 8}}});
        TextList list = build_text_list(pseudo, {"cat", "dog"}, n);
        nn::Tensor<float> stacked = stack_text_list<float>(list, emb);
        CHECK(stacked.shape() == std::vector<int>{1, n, 8, 64});
        nn::Graph<float> g(false);
        nn::Tensor<float> fused = enc.forward(g, stacked);
        CHECK(fused.shape() == std::vector<int>{1, 1, 8, 64});
    }
}

TEST_CASE("object slots stay separate before fusion") {
    HashEmbedder emb(8, 64, 99);
    const std::vector<std::string> cats = {"cat", "dog", "fish"};
    PseudoLabel p1 = make_pseudo({{0, {0, 0, 8, 8}}, {1, {8, 8, 8, 8}}});
    PseudoLabel p2 = make_pseudo({{0, {0, 0, 8, 8}}, {2, {8, 8, 8, 8}}});
    nn::Tensor<float> s1 = stack_text_list<float>(build_text_list(p1, cats, 4), emb);
    nn::Tensor<float> s2 = stack_text_list<float>(build_text_list(p2, cats, 4), emb);
    const int64_t slot = 8 * 64;
    for (int i = 0; i < 4; ++i) {
        bool differs = false;
        for (int64_t j = 0; j < slot; ++j) {
            if (s1.val()[i * slot + j] != s2.val()[i * slot + j]) differs = true;
        }
        CHECK(differs == (i == 1));  // only the changed object's slot moves
    }
}

TEST_CASE("permuting identical padding slots leaves the fused output unchanged") {
    Rng rng(8);
    HashEmbedder emb(8, 64, 99);
    TextListEncoder<float> enc;
    enc.init(8, rng);
    PseudoLabel pseudo = make_pseudo({{0, {0, 0, 8, 8}}});
    TextList list = build_text_list(pseudo, {"cat"}, 8);
    nn::Tensor<float> stacked = stack_text_list<float>(list, emb);
    nn::Tensor<float> permuted = nn::Tensor<float>::zeros(stacked.shape());
    std::copy(stacked.val(), stacked.val() + stacked.numel(), permuted.val());
    // swap padding slots 3 and 6
    const int64_t slot = 8 * 64;
    for (int64_t j = 0; j < slot; ++j) {
        std::swap(permuted.val()[3 * slot + j], permuted.val()[6 * slot + j]);
    }
    nn::Graph<float> g(false);
    nn::Tensor<float> a = enc.forward(g, stacked);
    nn::Tensor<float> b = enc.forward(g, permuted);
    for (int64_t i = 0; i < a.numel(); ++i) REQUIRE(a.val()[i] == b.val()[i]);
}

TEST_CASE("stack_text_list validates the embedder shape") {
    struct BrokenEmbedder : TextEmbedder {
        int rows() const override { return 8; }
        int dim() const override { return 64; }
        std::vector<float> embed(const std::string&) const override {
            return std::vector<float>(13);
        }
        std::string name() const override { return "broken"; }
    };
    BrokenEmbedder bad;
    TextList list;
    list.entries = {"a cat"};
    CHECK_THROWS_AS(stack_text_list<float>(list, bad), BadEmbedderShapeError);
}
