#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "diffuseraw/error.hpp"
#include "diffuseraw/nn/layers.hpp"

namespace diffuseraw::nn {

// Linear warmup 0 -> lr_base over warmup_steps, then cosine decay to 0 at
// total_steps.
struct LrSchedule {
    double lr_base = 5e-5;
    long warmup_steps = 500;
    long total_steps = 2000;

    double operator()(long step) const {
        if (step < 0) return 0.0;
        if (step < warmup_steps) return lr_base * static_cast<double>(step) / static_cast<double>(warmup_steps);
        if (total_steps <= warmup_steps) return lr_base;
        double progress = static_cast<double>(step - warmup_steps) /
                          static_cast<double>(total_steps - warmup_steps);
        progress = std::clamp(progress, 0.0, 1.0);
        return lr_base * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    }
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;
    LrSchedule schedule;
};

// Adam with decoupled weight decay: p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p).
template <typename T>
class AdamW {
public:
    AdamW(NamedTensors<T> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
        for (auto& [name, p] : params_) {
            m_.emplace_back(p.numel(), 0.0);
            v_.emplace_back(p.numel(), 0.0);
        }
    }

    void zero_grad() {
        for (auto& [name, p] : params_) p.zero_grad();
    }

    // Applies one update with lr = schedule(step_count()), then advances the
    // step counter. Returns the learning rate used.
    double step() {
        for (auto& [name, p] : params_) {
            if (!p.has_grad()) continue;
            for (T g : p.grad()) {
                if (!std::isfinite(static_cast<double>(g))) {
                    throw training_error("non-finite gradient in parameter '" + name + "' at step " +
                                         std::to_string(step_));
                }
            }
        }
        const double lr = cfg_.schedule(step_);
        const long t = step_ + 1;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto& p = params_[k].second;
            auto data = p.data();
            const bool has = p.has_grad();
            auto& m = m_[k];
            auto& v = v_[k];
            for (std::size_t i = 0; i < data.size(); ++i) {
                const double g = has ? static_cast<double>(p.grad()[i]) : 0.0;
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
                const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps) +
                                      cfg_.weight_decay * static_cast<double>(data[i]);
                data[i] = static_cast<T>(data[i] - lr * update);
            }
        }
        ++step_;
        return lr;
    }

    long step_count() const { return step_; }
    const AdamConfig& config() const { return cfg_; }
    const NamedTensors<T>& parameters() const { return params_; }

private:
    NamedTensors<T> params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    long step_ = 0;
};

} // namespace diffuseraw::nn
