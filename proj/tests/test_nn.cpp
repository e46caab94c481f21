#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "diffuseraw/nn/checkpoint.hpp"
#include "diffuseraw/nn/layers.hpp"
#include "diffuseraw/nn/ops.hpp"
#include "diffuseraw/nn/optim.hpp"
#include "gradcheck.hpp"

using namespace diffuseraw;
using namespace diffuseraw::nn;
using diffuseraw::testing::gradcheck;

namespace {

using TD = Tensor<double>;

TD rnd(Shape s, rng_t& rng, double sd = 1.0) { return TD::randn(std::move(s), rng, sd); }

// sum(y * w) with a fixed random projection w.
TD project(const TD& y, std::uint64_t seed) {
    rng_t rng(seed);
    auto w = TD::randn(y.shape(), rng);
    return sum(mul(y, w));
}

constexpr int kInstances = 10;
constexpr double kTol = 1e-4;

} // namespace

TEST(GradCheck, AddSubMulScale) {
    rng_t rng(1);
    for (int i = 0; i < kInstances; ++i) {
        Shape s{1 + i % 3, 2, 3};
        auto r = gradcheck({rnd(s, rng), rnd(s, rng)}, [&](auto& in) {
            auto y = add(mul(in[0], in[1]), scale(sub(in[0], in[1]), 0.7));
            return project(y, 11 + i);
        });
        EXPECT_LT(r.max_rel_error, kTol) << "instance " << i;
    }
}

TEST(GradCheck, Matmul) {
    rng_t rng(2);
    for (int i = 0; i < kInstances; ++i) {
        auto r = gradcheck({rnd({2 + i % 3, 4}, rng), rnd({4, 3 + i % 2}, rng)},
                           [&](auto& in) { return project(matmul(in[0], in[1]), 20 + i); });
        EXPECT_LT(r.max_rel_error, kTol) << "instance " << i;
    }
}

TEST(GradCheck, Linear) {
    rng_t rng(3);
    for (int i = 0; i < kInstances; ++i) {
        auto r = gradcheck({rnd({3, 5}, rng), rnd({4, 5}, rng), rnd({4}, rng)},
                           [&](auto& in) { return project(linear(in[0], in[1], &in[2]), 30 + i); });
        EXPECT_LT(r.max_rel_error, kTol) << "instance " << i;
    }
}

TEST(GradCheck, Conv2d) {
    rng_t rng(4);
    for (int i = 0; i < kInstances; ++i) {
        const int stride = 1 + i % 2, pad = i % 3 == 0 ? 0 : 1, k = i % 4 == 3 ? 1 : 3;
        auto r = gradcheck({rnd({2, 3, 6, 5}, rng), rnd({4, 3, k, k}, rng), rnd({4}, rng)}, [&](auto& in) {
            return project(conv2d(in[0], in[1], &in[2], stride, pad), 40 + i);
        });
        EXPECT_LT(r.max_rel_error, kTol) << "instance " << i;
    }
}

TEST(GradCheck, ConvTranspose2d) {
    rng_t rng(5);
    for (int i = 0; i < kInstances; ++i) {
        const int stride = 1 + i % 2, pad = i % 2, k = 3 + (i % 3 == 2 ? 1 : 0);
        auto r = gradcheck({rnd({2, 3, 4, 3}, rng), rnd({3, 2, k, k}, rng), rnd({2}, rng)}, [&](auto& in) {
            return project(conv_transpose2d(in[0], in[1], &in[2], stride, pad), 50 + i);
        });
        EXPECT_LT(r.max_rel_error, kTol) << "instance " << i;
    }
}

TEST(GradCheck, GroupNorm) {
    rng_t rng(6);
    for (int i = 0; i < kInstances; ++i) {
        const int g = std::array{1, 2, 4}[i % 3];
        auto r = gradcheck({rnd({2, 4, 3, 3}, rng), rnd({4}, rng), rnd({4}, rng)}, [&](auto& in) {
            return project(group_norm(in[0], g, in[1], in[2]), 60 + i);
        });
        EXPECT_LT(r.max_rel_error, kTol) << "instance " << i;
    }
}

TEST(GradCheck, Silu) {
    rng_t rng(7);
    for (int i = 0; i < kInstances; ++i) {
        auto r = gradcheck({rnd({2, 3, 4}, rng, 2.0)}, [&](auto& in) { return project(silu(in[0]), 70 + i); });
        EXPECT_LT(r.max_rel_error, kTol) << "instance " << i;
    }
}

TEST(GradCheck, AvgPoolAndNearestUpsample) {
    rng_t rng(8);
    for (int i = 0; i < kInstances; ++i) {
        auto r = gradcheck({rnd({2, 2, 4, 6}, rng)}, [&](auto& in) {
            return add(project(avg_pool2d(in[0], 2), 80 + i), project(upsample_nearest2d(in[0], 2), 90 + i));
        });
        EXPECT_LT(r.max_rel_error, kTol) << "instance " << i;
    }
}

TEST(GradCheck, EmbeddingLookup) {
    rng_t rng(9);
    for (int i = 0; i < kInstances; ++i) {
        std::vector<int> ids{i % 5, (i + 2) % 5, i % 5};
        auto r = gradcheck({rnd({5, 3}, rng)}, [&](auto& in) { return project(embedding(in[0], ids), 100 + i); });
        EXPECT_LT(r.max_rel_error, kTol) << "instance " << i;
    }
}

TEST(GradCheck, ConcatAndChannelBias) {
    rng_t rng(10);
    for (int i = 0; i < kInstances; ++i) {
        auto r = gradcheck({rnd({2, 2, 3, 3}, rng), rnd({2, 3, 3, 3}, rng), rnd({2, 5}, rng)}, [&](auto& in) {
            return project(add_channel_bias(concat_channels(in[0], in[1]), in[2]), 110 + i);
        });
        EXPECT_LT(r.max_rel_error, kTol) << "instance " << i;
    }
}

TEST(GradCheck, MseLossAndScaleSamples) {
    rng_t rng(11);
    for (int i = 0; i < kInstances; ++i) {
        std::vector<double> f{0.0, 1.5};
        auto r = gradcheck({rnd({2, 3, 2}, rng), rnd({2, 3, 2}, rng)},
                           [&](auto& in) { return mse_loss(scale_samples(in[0], f), in[1]); });
        EXPECT_LT(r.max_rel_error, kTol) << "instance " << i;
    }
}

TEST(Ops, ShapeMismatchNamesBothShapes) {
    TD a({2, 3}), b({3, 2});
    try {
        add(a, b);
        FAIL();
    } catch (const dimension_error& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("[2, 3]"), std::string::npos);
        EXPECT_NE(msg.find("[3, 2]"), std::string::npos);
    }
    EXPECT_THROW(conv2d(TD({1, 2, 4, 4}), TD({1, 3, 3, 3}), nullptr), dimension_error);
    EXPECT_THROW(matmul(TD({2, 3}), TD({2, 3})), dimension_error);
}

TEST(Ops, DeltaKernelConvIsIdentity) {
    rng_t rng(12);
    auto x = Tensor<float>::randn({2, 3, 5, 5}, rng);
    Tensor<float> w({3, 3, 3, 3}, 0.0f);
    for (int c = 0; c < 3; ++c) w.data()[((c * 3 + c) * 3 + 1) * 3 + 1] = 1.0f;
    auto y = conv2d(x, w, nullptr, 1, 1);
    ASSERT_EQ(y.shape(), x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Ops, Conv2dMatchesNaiveLoops) {
    rng_t rng(13);
    for (int trial = 0; trial < 5; ++trial) {
        const int stride = 1 + trial % 2, pad = trial % 2;
        auto x = Tensor<float>::randn({2, 3, 8, 8}, rng);
        auto w = Tensor<float>::randn({4, 3, 3, 3}, rng);
        auto b = Tensor<float>::randn({4}, rng);
        auto y = conv2d(x, w, &b, stride, pad);
        const int Ho = y.dim(2), Wo = y.dim(3);
        double max_err = 0;
        for (int n = 0; n < 2; ++n)
            for (int co = 0; co < 4; ++co)
                for (int oy = 0; oy < Ho; ++oy)
                    for (int ox = 0; ox < Wo; ++ox) {
                        double acc = b.data()[co];
                        for (int ci = 0; ci < 3; ++ci)
                            for (int ky = 0; ky < 3; ++ky)
                                for (int kx = 0; kx < 3; ++kx) {
                                    int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                                    if (iy < 0 || iy >= 8 || ix < 0 || ix >= 8) continue;
                                    acc += static_cast<double>(x.data()[((n * 3 + ci) * 8 + iy) * 8 + ix]) *
                                           w.data()[((co * 3 + ci) * 3 + ky) * 3 + kx];
                                }
                        max_err = std::max(max_err,
                                           std::abs(acc - y.data()[((n * 4 + co) * Ho + oy) * Wo + ox]));
                    }
        // float32 accumulation of 27 unit-variance products
        EXPECT_LT(max_err, 1e-5);
    }
}

TEST(Ops, Conv2dMatchesNaiveLoopsDouble) {
    rng_t rng(14);
    auto x = TD::randn({1, 2, 8, 8}, rng);
    auto w = TD::randn({3, 2, 3, 3}, rng);
    auto y = conv2d(x, w, nullptr, 1, 1);
    double max_err = 0;
    for (int co = 0; co < 3; ++co)
        for (int oy = 0; oy < 8; ++oy)
            for (int ox = 0; ox < 8; ++ox) {
                double acc = 0;
                for (int ci = 0; ci < 2; ++ci)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            int iy = oy - 1 + ky, ix = ox - 1 + kx;
                            if (iy < 0 || iy >= 8 || ix < 0 || ix >= 8) continue;
                            acc += x.data()[(ci * 8 + iy) * 8 + ix] * w.data()[((co * 2 + ci) * 3 + ky) * 3 + kx];
                        }
                max_err = std::max(max_err, std::abs(acc - y.data()[(co * 8 + oy) * 8 + ox]));
            }
    EXPECT_LT(max_err, 1e-6);
}

TEST(Ops, MseOfIdenticalInputsIsZeroWithZeroGradient) {
    rng_t rng(15);
    auto x = Tensor<float>::randn({2, 4}, rng, 1.0f, true);
    auto loss = mse_loss(x, x);
    EXPECT_EQ(loss.item(), 0.0f);
    loss.backward();
    for (float g : x.grad()) EXPECT_EQ(g, 0.0f);
}

TEST(Ops, NoGradGuardSkipsGraph) {
    auto x = Tensor<float>({2}, 1.0f, true);
    {
        no_grad_guard ng;
        auto y = scale(x, 2.0f);
        EXPECT_FALSE(y.requires_grad());
    }
    EXPECT_TRUE(scale(x, 2.0f).requires_grad());
}

TEST(Schedule, WarmupEndpointsAndCosineTail) {
    LrSchedule s{5e-5, 500, 5000};
    EXPECT_EQ(s(0), 0.0);
    EXPECT_DOUBLE_EQ(s(500), 5e-5);
    EXPECT_DOUBLE_EQ(s(250), 2.5e-5);
    EXPECT_LT(s(5000), 1e-9 * 5e-5);
    double peak = 0;
    long argmax = -1;
    for (long t = 0; t <= 5000; ++t) {
        if (s(t) > peak) {
            peak = s(t);
            argmax = t;
        }
        if (t > 0) EXPECT_LE(std::abs(s(t) - s(t - 1)), 1.0001 * 5e-5 / 500) << t;
        EXPECT_GE(s(t), 0.0);
    }
    EXPECT_EQ(argmax, 500);
}

TEST(Adam, ZeroGradientAndZeroDecayLeavesParams) {
    Tensor<float> p({3}, std::vector<float>{1.0f, -2.0f, 0.5f}, true);
    AdamConfig cfg;
    cfg.weight_decay = 0.0;
    cfg.schedule = {1e-2, 0, 100};
    AdamW<float> opt({{"p", p}}, cfg);
    p.grad();  // allocate zeros
    for (int i = 0; i < 5; ++i) opt.step();
    EXPECT_EQ(p.data()[0], 1.0f);
    EXPECT_EQ(p.data()[1], -2.0f);
    EXPECT_EQ(p.data()[2], 0.5f);
}

TEST(Adam, StepOnSquareDecreasesMagnitude) {
    Tensor<double> w({1}, 1.0, true);
    AdamConfig cfg;
    cfg.schedule = {1e-2, 0, 100};
    AdamW<double> opt({{"w", w}}, cfg);
    auto loss = mul(w, w);
    loss.backward();
    opt.step();
    EXPECT_LT(std::abs(w.item()), 1.0);
    EXPECT_NEAR(w.item(), 1.0 - 1e-2 * (1.0 + 1e-2), 1e-6);
}

TEST(Adam, FirstScheduledStepHasZeroLr) {
    Tensor<double> w({1}, 1.0, true);
    AdamConfig cfg;  // 5e-5, 500 warmup
    AdamW<double> opt({{"w", w}}, cfg);
    mul(w, w).backward();
    EXPECT_EQ(opt.step(), 0.0);
    EXPECT_EQ(w.item(), 1.0);
}

TEST(Adam, NanGradientNamesParameter) {
    Tensor<float> p({2}, 1.0f, true);
    AdamW<float> opt({{"unet.conv.weight", p}}, AdamConfig{});
    p.grad()[1] = std::nanf("");
    try {
        opt.step();
        FAIL();
    } catch (const training_error& e) {
        EXPECT_NE(std::string(e.what()).find("unet.conv.weight"), std::string::npos);
    }
}

TEST(Checkpoint, RoundtripIsBitExact) {
    rng_t rng(16);
    for (int trial = 0; trial < 5; ++trial) {
        Conv2d<float> conv(3, 4, 3, 1, 1, rng);
        Linear<float> lin(5, 2, rng);
        NamedTensors<float> params;
        conv.collect("conv", params);
        lin.collect("lin", params);
        params.emplace_back("scalar", Tensor<float>({1}, std::vector<float>{std::nextafter(1.0f, 2.0f)}));

        std::stringstream ss;
        write_checkpoint(ss, params);
        auto loaded = read_checkpoint(ss);
        ASSERT_EQ(loaded.size(), params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            EXPECT_EQ(loaded[i].first, params[i].first);
            EXPECT_EQ(loaded[i].second.shape(), params[i].second.shape());
            EXPECT_EQ(0, std::memcmp(loaded[i].second.data().data(), params[i].second.data().data(),
                                     params[i].second.numel() * sizeof(float)));
        }
    }
}

TEST(Checkpoint, WrongVersionIsRejected) {
    std::stringstream ss;
    ss.write("DRCK", 4);
    io::write_le<std::uint16_t>(ss, 7);
    io::write_le<std::uint32_t>(ss, 0);
    try {
        read_checkpoint(ss);
        FAIL();
    } catch (const format_error& e) {
        EXPECT_NE(std::string(e.what()).find("version 7"), std::string::npos);
    }
}

TEST(Checkpoint, TruncatedFileIsRejected) {
    rng_t rng(17);
    NamedTensors<float> params{{"w", Tensor<float>::randn({4, 4}, rng)}};
    std::stringstream ss;
    write_checkpoint(ss, params);
    std::string bytes = ss.str();
    std::stringstream cut(bytes.substr(0, bytes.size() - 3));
    EXPECT_THROW(read_checkpoint(cut), format_error);
}

TEST(Checkpoint, MissingAndUnknownNamesAreReported) {
    NamedTensors<float> live{{"a", Tensor<float>({2})}, {"b", Tensor<float>({2})}};
    NamedTensors<float> only_a{{"a", Tensor<float>({2})}};
    try {
        assign_state(live, only_a);
        FAIL();
    } catch (const format_error& e) {
        EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
    }
    NamedTensors<float> extra{{"a", Tensor<float>({2})}, {"b", Tensor<float>({2})}, {"c", Tensor<float>({1})}};
    try {
        assign_state(live, extra);
        FAIL();
    } catch (const format_error& e) {
        EXPECT_NE(std::string(e.what()).find("'c'"), std::string::npos);
    }
    NamedTensors<float> wrong_shape{{"a", Tensor<float>({3})}, {"b", Tensor<float>({2})}};
    EXPECT_THROW(assign_state(live, wrong_shape), format_error);
}
