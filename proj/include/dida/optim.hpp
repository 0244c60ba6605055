#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "dida/autodiff.hpp"

namespace dida {

/// Named trainable leaf. `trainable` gates both gradient flow and updates;
/// a frozen parameter is bitwise untouched by any optimizer step.
struct Parameter {
    std::string name;
    Var var;

    Parameter() = default;
    Parameter(std::string n, Tensor value, bool trainable = true)
        : name(std::move(n)), var(Var::leaf(std::move(value), trainable)) {}

    bool trainable() const { return var.node()->requires_grad; }
    void set_trainable(bool t) { var.node()->requires_grad = t; }
    Tensor& value() { return var.node()->value; }
    const Tensor& value() const { return var.node()->value; }
    Tensor& grad() { return var.node()->grad; }
    const Tensor& grad() const { return var.node()->grad; }
    bool has_grad() const { return !var.node()->grad.empty(); }
    void zero_grad() { var.node()->zero_grad(); }
};

enum class OptKind { SgdMomentum, Adam };

inline const char* to_string(OptKind k) { return k == OptKind::SgdMomentum ? "sgd" : "adam"; }

struct OptConfig {
    OptKind kind = OptKind::SgdMomentum;
    float lr = 0.01f;
    float momentum = 0.9f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

/// Per-parameter moment buffers plus the shared step counter.
class Optimizer {
public:
    explicit Optimizer(OptConfig cfg) : cfg_(cfg) {}

    const OptConfig& config() const { return cfg_; }
    int64_t step_count() const { return step_; }

    /// One update over the given parameters. Frozen parameters are skipped;
    /// a trainable parameter with no populated gradient is an error. All
    /// gradients of the given set are zeroed afterwards.
    void step(const std::vector<Parameter*>& params) {
        ++step_;
        for (Parameter* p : params) {
            if (!p->trainable()) continue;
            if (!p->has_grad())
                throw std::logic_error("optimizer: uninitialized gradient for parameter '" + p->name + "'");
            Slot& slot = slot_for(p);
            float* w = p->value().data();
            const float* g = p->grad().data();
            const int64_t n = p->value().size();
            if (cfg_.kind == OptKind::SgdMomentum) {
                float* m = slot.m.data();
                for (int64_t i = 0; i < n; ++i) {
                    m[i] = cfg_.momentum * m[i] + g[i];
                    w[i] -= cfg_.lr * m[i];
                }
            } else {
                float* m = slot.m.data();
                float* v = slot.v.data();
                const float b1 = cfg_.beta1, b2 = cfg_.beta2;
                const float bc1 = 1.0f - std::pow(b1, static_cast<float>(step_));
                const float bc2 = 1.0f - std::pow(b2, static_cast<float>(step_));
                for (int64_t i = 0; i < n; ++i) {
                    m[i] = b1 * m[i] + (1.0f - b1) * g[i];
                    v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
                    float mhat = m[i] / bc1;
                    float vhat = v[i] / bc2;
                    w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
                }
            }
        }
        for (Parameter* p : params) p->zero_grad();
    }

private:
    struct Slot {
        Tensor m, v;
    };
    Slot& slot_for(Parameter* p) {
        auto it = slots_.find(p->var.node().get());
        if (it == slots_.end()) {
            Slot s;
            s.m = Tensor(p->value().shape());
            if (cfg_.kind == OptKind::Adam) s.v = Tensor(p->value().shape());
            it = slots_.emplace(p->var.node().get(), std::move(s)).first;
        }
        return it->second;
    }

    OptConfig cfg_;
    std::unordered_map<Node*, Slot> slots_;
    int64_t step_ = 0;
};

}  // namespace dida
