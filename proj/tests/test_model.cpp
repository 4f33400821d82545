#include "support.hpp"

#include "xrdl/kernels.hpp"
#include "xrdl/model.hpp"
#include "xrdl/model_zoo.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace xrdl;
using xrdl::testing::random_tensor;

namespace {

// Weight + bias count for a 3x3 conv and a dense layer, summed by hand.
std::size_t conv3(std::size_t in, std::size_t out) { return out * in * 9 + out; }
std::size_t dense(std::size_t in, std::size_t out) { return in * out + out; }

std::vector<layer_kind> kinds_after(const model_spec& spec, std::size_t skip) {
    std::vector<layer_kind> out;
    for (std::size_t i = skip; i < spec.layers.size(); ++i) out.push_back(spec.layers[i].kind);
    return out;
}

}  // namespace

TEST(ReferenceCnn, ParameterCountMatchesHandSum) {
    const auto m = build_reference_cnn({1, 32, 32}, 2, 0);
    const std::size_t expected =
        conv3(1, 32) + conv3(32, 64) + conv3(64, 128) + dense(128 * 4 * 4, 128) + dense(128, 2);
    EXPECT_EQ(expected, 355202u);
    EXPECT_EQ(parameter_count(m.spec), expected);
    EXPECT_EQ(m.params.element_count(), expected);
    EXPECT_EQ(m.params.element_count(true), expected);
    EXPECT_EQ(output_shape(m.spec), (shape_t{2}));
}

TEST(ReferenceCnn, ZeroImageGivesNormalizedScores) {
    const auto m = build_reference_cnn({3, 224, 224}, 3, 5);
    const tensor32 out = infer(m.spec, m.params, tensor32({1, 3, 224, 224}));
    ASSERT_EQ(out.dims(), (shape_t{1, 3}));
    double s = 0;
    for (const float v : out.values()) s += v;
    EXPECT_NEAR(s, 1.0, 1e-6);
}

TEST(ReferenceCnn, SameSeedSameParameters) {
    const auto a = build_reference_cnn({1, 16, 16}, 2, 77);
    const auto b = build_reference_cnn({1, 16, 16}, 2, 77);
    const auto c = build_reference_cnn({1, 16, 16}, 2, 78);
    EXPECT_TRUE(a.params == b.params);
    EXPECT_FALSE(a.params == c.params);
}

TEST(ReferenceCnn, InitializationFollowsSchemes) {
    const auto m = build_reference_cnn({1, 16, 16}, 2, 3);
    const double he = std::sqrt(6.0 / 9.0);
    for (const float v : m.params.value("block1.conv.w").values()) EXPECT_LE(std::abs(v), he);
    const double glorot = std::sqrt(6.0 / (128.0 + 2.0));
    for (const float v : m.params.value("logits.w").values()) EXPECT_LE(std::abs(v), glorot);
    for (const float v : m.params.value("fc1.b").values()) EXPECT_EQ(v, 0.0f);
}

TEST(ReferenceCnn, IndivisibleExtentsRejected) {
    EXPECT_THROW(build_reference_cnn({1, 30, 32}, 2, 0), shape_error);
    EXPECT_THROW(build_reference_cnn({1, 32, 12}, 2, 0), shape_error);
}

TEST(Vgg16, FeatureShapes) {
    EXPECT_EQ(build_vgg16_backbone({3, 224, 224}).output_shape(), (shape_t{512, 7, 7}));
    EXPECT_EQ(build_vgg16_backbone({3, 64, 64}).output_shape(), (shape_t{512, 2, 2}));
}

TEST(Vgg16, ConvolutionalStackParameterCount) {
    const std::size_t widths[] = {3, 64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512};
    std::size_t expected = 0;
    for (int i = 0; i < 13; ++i) expected += conv3(widths[i], widths[i + 1]);
    EXPECT_EQ(expected, 14714688u);
    const auto b = build_vgg16_backbone({3, 32, 32});
    EXPECT_EQ(b.params.element_count(), expected);
    EXPECT_EQ(b.params.element_count(true), 0u);
}

TEST(Vgg16, Preconditions) {
    EXPECT_THROW(build_vgg16_backbone({1, 224, 224}), shape_error);
    EXPECT_THROW(build_vgg16_backbone({3, 100, 224}), shape_error);
}

TEST(Vgg16, ForwardMatchesOutputShape) {
    const auto b = build_vgg16_backbone({3, 32, 32}, 4);
    rng gen(1);
    const tensor32 f = b.features(random_tensor<float>({2, 3, 32, 32}, gen, 0, 1));
    EXPECT_EQ(f.dims(), (shape_t{2, 512, 1, 1}));
}

TEST(TransferHeads, Vgg16HeadTrainableCount) {
    const auto base = build_vgg16_backbone({3, 224, 224});
    const auto m = build_transfer_model(transfer_head::vgg16, base, 4, 1);
    EXPECT_EQ(m.params.element_count(true), 25088u * 4 + 4);
    EXPECT_EQ(m.params.element_count(true), 100356u);
    EXPECT_EQ(m.params.element_count(), 100356u + 14714688u);
    const std::size_t n = base.spec.layers.size();
    EXPECT_EQ(kinds_after(m.spec, n), (std::vector<layer_kind>{layer_kind::flatten, layer_kind::dropout,
                                                               layer_kind::dense, layer_kind::sigmoid}));
    EXPECT_DOUBLE_EQ(m.spec.layers[n + 1].rate, 0.25);
    EXPECT_EQ(m.spec.layers[n + 2].units, 4u);
    EXPECT_EQ(m.spec.head, head_activation::sigmoid);
}

TEST(TransferHeads, InceptionHeadLayers) {
    const auto base = build_test_backbone({3, 32, 32});
    const auto m = build_transfer_model(transfer_head::inception_v3, base, 4, 1);
    const std::size_t n = base.spec.layers.size();
    EXPECT_EQ(kinds_after(m.spec, n),
              (std::vector<layer_kind>{layer_kind::flatten, layer_kind::dense, layer_kind::relu, layer_kind::dropout,
                                       layer_kind::dense, layer_kind::sigmoid}));
    std::vector<std::size_t> widths;
    for (const auto& l : m.spec.layers) {
        if (l.kind == layer_kind::dense) widths.push_back(l.units);
    }
    EXPECT_EQ(widths, (std::vector<std::size_t>{1024, 4}));
    EXPECT_DOUBLE_EQ(m.spec.layers[n + 3].rate, 0.2);
}

TEST(TransferHeads, EfficientNetHeadLayersAndNormalization) {
    const auto base = build_test_backbone({3, 32, 32}, 2);
    const auto m = build_transfer_model(transfer_head::efficientnet_b0, base, 4, 3);
    const std::size_t n = base.spec.layers.size();
    EXPECT_EQ(kinds_after(m.spec, n), (std::vector<layer_kind>{layer_kind::global_average_pool, layer_kind::dropout,
                                                               layer_kind::dense, layer_kind::softmax}));
    EXPECT_DOUBLE_EQ(m.spec.layers[n + 1].rate, 0.5);
    rng gen(8);
    const tensor32 out = infer(m.spec, m.params, random_tensor<float>({5, 3, 32, 32}, gen, 0, 1));
    ASSERT_EQ(out.dims(), (shape_t{5, 4}));
    for (std::size_t i = 0; i < 5; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < 4; ++j) s += out[i * 4 + j];
        EXPECT_NEAR(s, 1.0, 1e-6);
    }
}

TEST(TransferHeads, SigmoidOutputsBoundedButNotNormalized) {
    const auto base = build_test_backbone({3, 32, 32}, 2);
    const auto m = build_transfer_model(transfer_head::vgg16, base, 4, 9);
    rng gen(10);
    const tensor32 out = infer(m.spec, m.params, random_tensor<float>({6, 3, 32, 32}, gen, 0, 1));
    bool some_row_off_one = false;
    for (std::size_t i = 0; i < 6; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < 4; ++j) {
            const float v = out[i * 4 + j];
            EXPECT_GT(v, 0.0f);
            EXPECT_LT(v, 1.0f);
            s += v;
        }
        some_row_off_one = some_row_off_one || std::abs(s - 1.0) > 1e-3;
    }
    EXPECT_TRUE(some_row_off_one);
}

TEST(TransferHeads, BackboneFrozenHeadTrainable) {
    const auto base = build_test_backbone({3, 16, 16}, 1);
    const auto m = build_transfer_model(transfer_head::inception_v3, base, 4, 2);
    for (const auto& [name, e] : m.params) {
        EXPECT_EQ(e.trainable, name.rfind("head.", 0) == 0) << name;
        if (base.params.contains(name)) {
            EXPECT_TRUE(bit_identical(e.value, base.params.value(name))) << name;
        }
    }
}

TEST(TransferHeads, UnknownHeadName) {
    EXPECT_THROW(transfer_head_from_string("resnet50"), parameter_error);
    EXPECT_EQ(transfer_head_from_string("efficientnet_b0"), transfer_head::efficientnet_b0);
}

TEST(ForwardModel, InferIsDeterministic) {
    const auto m = build_reference_cnn({1, 16, 16}, 3, 4);
    rng gen(2);
    const tensor32 x = random_tensor<float>({4, 1, 16, 16}, gen, 0, 1);
    rng g1(1), g2(99);
    const auto a = forward_model(m.spec, m.params, x, run_mode::infer, g1);
    const auto b = forward_model(m.spec, m.params, x, run_mode::infer, g2);
    EXPECT_TRUE(bit_identical(a.output, b.output));
    EXPECT_EQ(a.graph, nullptr);
    EXPECT_EQ(a.output.dims(), (shape_t{4, 3}));
}

TEST(ForwardModel, TrainModeRecordsTapeAndDropsUnits) {
    const auto m = build_reference_cnn({1, 16, 16}, 3, 4);
    rng gen(2);
    const tensor32 x = random_tensor<float>({4, 1, 16, 16}, gen, 0, 1);
    rng g(5);
    const auto train = forward_model(m.spec, m.params, x, run_mode::train, g);
    ASSERT_NE(train.graph, nullptr);
    EXPECT_EQ(train.output.dims(), (shape_t{4, 3}));
    EXPECT_FALSE(bit_identical(train.output, infer(m.spec, m.params, x)));
}

TEST(ForwardModel, WrongBatchShapeIsShapeError) {
    const auto m = build_reference_cnn({1, 16, 16}, 2, 0);
    rng g(0);
    EXPECT_THROW(forward_model(m.spec, m.params, tensor32({1, 1, 16, 8}), run_mode::infer, g), shape_error);
}

TEST(ForwardModel, LayerShapeErrorNamesLayer) {
    model_spec spec{"broken", {1, 4, 4}, {}, 2, head_activation::softmax};
    spec.layers = {layer_spec::simple(layer_kind::flatten, "flat"), layer_spec::dense("fc", 2),
                   layer_spec::simple(layer_kind::softmax, "sm")};
    param_store<float> p;
    p.add("fc.w", tensor32({8, 2}), true);
    p.add("fc.b", tensor32({2}), true);
    try {
        (void)infer(spec, p, tensor32({1, 1, 4, 4}));
        FAIL() << "expected shape_error";
    } catch (const shape_error& e) {
        EXPECT_NE(std::string(e.what()).find("'fc'"), std::string::npos) << e.what();
    }
}

TEST(ModelSpec, ValidateRejectsBadSpecs) {
    model_spec spec{"bad", {1, 4, 4}, {}, 3, head_activation::softmax};
    spec.layers = {layer_spec::simple(layer_kind::flatten, "f"), layer_spec::dense("d", 2),
                   layer_spec::simple(layer_kind::softmax, "s")};
    EXPECT_THROW(validate(spec), shape_error);
    spec.num_classes = 2;
    EXPECT_NO_THROW(validate(spec));
    spec.layers.insert(spec.layers.begin() + 1, layer_spec::dropout("drop", 1.0));
    EXPECT_THROW(validate(spec), parameter_error);
    spec.layers[1].rate = 0.3;
    spec.layers[2].name = "f";
    EXPECT_THROW(validate(spec), parameter_error);
}

TEST(ModelSpec, JsonRoundTrip) {
    const auto base = build_test_backbone({3, 32, 32});
    for (const auto head : {transfer_head::vgg16, transfer_head::inception_v3, transfer_head::efficientnet_b0}) {
        const auto m = build_transfer_model(head, base, 4, 0);
        EXPECT_EQ(spec_from_json(to_json(m.spec)), m.spec);
    }
    const auto ref = build_reference_cnn({1, 32, 32}, 2, 0);
    EXPECT_EQ(spec_from_json(nlohmann::json::parse(to_json(ref.spec).dump())), ref.spec);
}

TEST(PredictClasses, Examples) {
    EXPECT_EQ(predict_classes(tensor32({1, 3}, std::vector<float>{0.1f, 0.7f, 0.2f})), std::vector<std::size_t>{1});
    EXPECT_EQ(predict_classes(tensor32({1, 2}, std::vector<float>{0.5f, 0.5f})), std::vector<std::size_t>{0});
    EXPECT_THROW(predict_classes(tensor32({2, 1})), shape_error);
}

TEST(PredictClasses, InvariantUnderIncreasingTransforms) {
    rng gen(21);
    const tensor32 x = random_tensor<float>({1000, 5}, gen, -4, 4);
    const auto base = predict_classes(x);
    EXPECT_EQ(predict_classes(softmax(x, -1)), base);
    tensor32 scaled = x;
    for (auto& v : scaled.values()) v = 2.5f * v + 7.0f;
    EXPECT_EQ(predict_classes(scaled), base);
    // Loop oracle for the argmax itself.
    for (std::size_t i = 0; i < 1000; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < 5; ++j) {
            if (x[i * 5 + j] > x[i * 5 + best]) best = j;
        }
        ASSERT_EQ(base[i], best);
    }
}
