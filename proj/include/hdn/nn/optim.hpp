#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hdn/nn/graph.hpp"

namespace hdn::nn {

// Adamax (infinity-norm Adam variant) plus plain Adam and SGD. One writer;
// state tensors are exposed for checkpointing so training can resume.
template <typename T>
class Optimizer {
  public:
    Optimizer(std::string method, std::vector<Var<T>> params, T lr)
        : method_(std::move(method)), params_(std::move(params)), lr_(lr) {
        if (method_ != "adamax" && method_ != "adam" && method_ != "sgd")
            throw ConfigError("optimizer: unknown method '" + method_ + "'");
        m_.reserve(params_.size());
        u_.reserve(params_.size());
        for (auto& p : params_) {
            m_.emplace_back(p.value().shape);
            u_.emplace_back(p.value().shape);
        }
    }

    void zero_grad() {
        for (auto& p : params_)
            if (p.grad().shape == p.value().shape) p.grad().zero();
    }

    // Returns the pre-clip global gradient norm.
    double clip_global_norm(double max_norm) {
        double sq = 0;
        for (auto& p : params_) {
            if (p.grad().shape != p.value().shape) continue;
            for (T g : p.grad().v) sq += static_cast<double>(g) * g;
        }
        const double norm = std::sqrt(sq);
        if (max_norm > 0 && norm > max_norm) {
            const T s = static_cast<T>(max_norm / norm);
            for (auto& p : params_) {
                if (p.grad().shape != p.value().shape) continue;
                for (T& g : p.grad().v) g *= s;
            }
        }
        return norm;
    }

    void step() {
        ++t_;
        const T b1 = T(0.9), b2 = T(0.999), eps = T(1e-8);
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto& p = params_[k];
            if (p.grad().shape != p.value().shape) continue; // never touched by loss
            auto& val = p.value().v;
            auto& g = p.grad().v;
            auto& m = m_[k].v;
            auto& u = u_[k].v;
            if (method_ == "sgd") {
                for (std::size_t i = 0; i < val.size(); ++i) val[i] -= lr_ * g[i];
            } else if (method_ == "adamax") {
                const T bias = T(1) - std::pow(b1, static_cast<T>(t_));
                for (std::size_t i = 0; i < val.size(); ++i) {
                    m[i] = b1 * m[i] + (T(1) - b1) * g[i];
                    u[i] = std::max(b2 * u[i], std::abs(g[i]));
                    val[i] -= (lr_ / bias) * m[i] / (u[i] + eps);
                }
            } else { // adam
                const T bias1 = T(1) - std::pow(b1, static_cast<T>(t_));
                const T bias2 = T(1) - std::pow(b2, static_cast<T>(t_));
                for (std::size_t i = 0; i < val.size(); ++i) {
                    m[i] = b1 * m[i] + (T(1) - b1) * g[i];
                    u[i] = b2 * u[i] + (T(1) - b2) * g[i] * g[i];
                    val[i] -= lr_ * (m[i] / bias1) / (std::sqrt(u[i] / bias2) + eps);
                }
            }
        }
    }

    const std::string& method() const { return method_; }
    T learning_rate() const { return lr_; }
    void set_learning_rate(T lr) { lr_ = lr; }
    std::int64_t step_count() const { return t_; }
    void set_step_count(std::int64_t t) { t_ = t; }
    std::vector<Tensor<T>>& moment1() { return m_; }
    std::vector<Tensor<T>>& moment2() { return u_; }

  private:
    std::string method_;
    std::vector<Var<T>> params_;
    T lr_;
    std::int64_t t_ = 0;
    std::vector<Tensor<T>> m_;
    std::vector<Tensor<T>> u_;
};

} // namespace hdn::nn
