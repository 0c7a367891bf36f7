#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pgnas/errors.hpp"
#include "pgnas/nn_ops.hpp"
#include "pgnas/tensor.hpp"

namespace pgnas {

// Reverse-mode tape. Nodes are appended in construction order, which is a
// topological order by definition, so backward() is one reverse sweep that
// visits each node exactly once. A graph is built, differentiated once and
// discarded; parameters are registered by name and their gradients read back
// through the registry.
class Graph {
  public:
    using NodeId = int;

    NodeId constant(Tensor value) { return push(std::move(value), {}, nullptr); }

    NodeId param(const std::string& id, Tensor value) {
        if (params_.count(id)) throw ConfigError("duplicate parameter id '" + id + "'");
        NodeId n = push(std::move(value), {}, nullptr);
        nodes_.back().needs_grad = true;
        params_.emplace(id, n);
        return n;
    }

    const Tensor& value(NodeId n) const { return nodes_[static_cast<size_t>(n)].value; }

    // ---- ops ------------------------------------------------------------

    NodeId dense(NodeId x, NodeId w, NodeId b) {
        Tensor y = nn::dense_forward(value(x), value(w), value(b));
        return push(std::move(y), {x, w, b}, [](Graph& g, NodeId self) {
            const auto& in = g.node(self).inputs;
            nn::dense_backward(g.value(in[0]), g.value(in[1]), g.grad_ref(self),
                               g.grad_sink(in[0]), g.grad_sink(in[1]), g.grad_sink(in[2]));
        });
    }

    NodeId conv2d(NodeId x, NodeId kernel, int stride, int pad) {
        Tensor y = nn::conv2d_forward(value(x), value(kernel), stride, pad);
        return push(std::move(y), {x, kernel}, [stride, pad](Graph& g, NodeId self) {
            const auto& in = g.node(self).inputs;
            nn::conv2d_backward(g.value(in[0]), g.value(in[1]), stride, pad, g.grad_ref(self),
                                g.grad_sink(in[0]), g.grad_sink(in[1]));
        });
    }

    NodeId mask_mul(NodeId x, NodeId mask) {
        Tensor y = nn::mask_mul_forward(value(x), value(mask));
        return push(std::move(y), {x, mask}, [](Graph& g, NodeId self) {
            const auto& in = g.node(self).inputs;
            nn::mask_mul_backward(g.value(in[0]), g.value(in[1]), g.grad_ref(self),
                                  g.grad_sink(in[0]), g.grad_sink(in[1]));
        });
    }

    NodeId relu(NodeId x) {
        Tensor y = nn::relu_forward(value(x));
        return push(std::move(y), {x}, [](Graph& g, NodeId self) {
            const auto& in = g.node(self).inputs;
            nn::relu_backward(g.value(in[0]), g.grad_ref(self), g.grad_sink(in[0]));
        });
    }

    NodeId global_avg_pool(NodeId x) {
        Tensor y = nn::global_avg_pool_forward(value(x));
        return push(std::move(y), {x}, [](Graph& g, NodeId self) {
            const auto& in = g.node(self).inputs;
            nn::global_avg_pool_backward(g.value(in[0]), g.grad_ref(self), g.grad_sink(in[0]));
        });
    }

    NodeId softmax_cross_entropy(NodeId logits, std::vector<int> labels) {
        double loss = nn::softmax_cross_entropy_forward(value(logits), labels);
        return push(Tensor::scalar(loss), {logits},
                    [labels = std::move(labels)](Graph& g, NodeId self) {
                        const auto& in = g.node(self).inputs;
                        nn::softmax_cross_entropy_backward(g.value(in[0]), labels,
                                                           g.grad_ref(self)[0],
                                                           g.grad_sink(in[0]));
                    });
    }

    NodeId add(NodeId a, NodeId b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        if (!ta.same_shape(tb)) {
            throw ShapeError("add shape mismatch: " + ta.shape_str() + " vs " + tb.shape_str());
        }
        Tensor y = ta;
        for (size_t i = 0; i < y.numel(); ++i) y[i] += tb[i];
        return push(std::move(y), {a, b}, [](Graph& g, NodeId self) {
            const auto& in = g.node(self).inputs;
            const Tensor& gy = g.grad_ref(self);
            for (NodeId src : in) {
                Tensor* gs = g.grad_sink(src);
                if (!gs) continue;
                for (size_t i = 0; i < gy.numel(); ++i) (*gs)[i] += gy[i];
            }
        });
    }

    NodeId mul(NodeId a, NodeId b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        if (!ta.same_shape(tb)) {
            throw ShapeError("mul shape mismatch: " + ta.shape_str() + " vs " + tb.shape_str());
        }
        Tensor y = ta;
        for (size_t i = 0; i < y.numel(); ++i) y[i] *= tb[i];
        return push(std::move(y), {a, b}, [](Graph& g, NodeId self) {
            const auto& in = g.node(self).inputs;
            const Tensor& gy = g.grad_ref(self);
            const Tensor& ta = g.value(in[0]);
            const Tensor& tb = g.value(in[1]);
            if (Tensor* ga = g.grad_sink(in[0]))
                for (size_t i = 0; i < gy.numel(); ++i) (*ga)[i] += gy[i] * tb[i];
            if (Tensor* gb = g.grad_sink(in[1]))
                for (size_t i = 0; i < gy.numel(); ++i) (*gb)[i] += gy[i] * ta[i];
        });
    }

    // scale * x + shift, elementwise.
    NodeId affine(NodeId x, double scale, double shift) {
        Tensor y = value(x);
        for (double& v : y.values()) v = scale * v + shift;
        return push(std::move(y), {x}, [scale](Graph& g, NodeId self) {
            const auto& in = g.node(self).inputs;
            const Tensor& gy = g.grad_ref(self);
            if (Tensor* gx = g.grad_sink(in[0]))
                for (size_t i = 0; i < gy.numel(); ++i) (*gx)[i] += scale * gy[i];
        });
    }

    NodeId sigmoid(NodeId x) {
        Tensor y = value(x);
        for (double& v : y.values()) v = nn::sigmoid(v);
        return push(std::move(y), {x}, [](Graph& g, NodeId self) {
            const auto& in = g.node(self).inputs;
            const Tensor& gy = g.grad_ref(self);
            const Tensor& y = g.value(self);
            if (Tensor* gx = g.grad_sink(in[0]))
                for (size_t i = 0; i < gy.numel(); ++i) (*gx)[i] += gy[i] * y[i] * (1.0 - y[i]);
        });
    }

    NodeId log(NodeId x) {
        Tensor y = value(x);
        for (double& v : y.values()) {
            if (v <= 0.0) throw NumericError("log of non-positive value " + double_to_text(v));
            v = std::log(v);
        }
        return push(std::move(y), {x}, [](Graph& g, NodeId self) {
            const auto& in = g.node(self).inputs;
            const Tensor& gy = g.grad_ref(self);
            const Tensor& x = g.value(in[0]);
            if (Tensor* gx = g.grad_sink(in[0]))
                for (size_t i = 0; i < gy.numel(); ++i) (*gx)[i] += gy[i] / x[i];
        });
    }

    NodeId sum(NodeId x) {
        double acc = 0.0;
        for (double v : value(x).values()) acc += v;
        return push(Tensor::scalar(acc), {x}, [](Graph& g, NodeId self) {
            const auto& in = g.node(self).inputs;
            const double gy = g.grad_ref(self)[0];
            if (Tensor* gx = g.grad_sink(in[0]))
                for (size_t i = 0; i < gx->numel(); ++i) (*gx)[i] += gy;
        });
    }

    NodeId sum_squares(NodeId x) {
        double acc = 0.0;
        for (double v : value(x).values()) acc += v * v;
        return push(Tensor::scalar(acc), {x}, [](Graph& g, NodeId self) {
            const auto& in = g.node(self).inputs;
            const double gy = g.grad_ref(self)[0];
            const Tensor& x = g.value(in[0]);
            if (Tensor* gx = g.grad_sink(in[0]))
                for (size_t i = 0; i < x.numel(); ++i) (*gx)[i] += 2.0 * x[i] * gy;
        });
    }

    // Sum of squares over each leading-axis block: [K x ...] -> [K].
    NodeId sum_squares_rows(NodeId x) {
        const Tensor& t = value(x);
        const int rows = t.dim(0);
        const size_t block = t.numel() / static_cast<size_t>(rows);
        Tensor y({rows});
        for (int r = 0; r < rows; ++r) {
            double acc = 0.0;
            const double* p = t.data() + static_cast<size_t>(r) * block;
            for (size_t i = 0; i < block; ++i) acc += p[i] * p[i];
            y[static_cast<size_t>(r)] = acc;
        }
        return push(std::move(y), {x}, [block](Graph& g, NodeId self) {
            const auto& in = g.node(self).inputs;
            const Tensor& gy = g.grad_ref(self);
            const Tensor& x = g.value(in[0]);
            if (Tensor* gx = g.grad_sink(in[0])) {
                for (size_t r = 0; r < gy.numel(); ++r) {
                    for (size_t i = 0; i < block; ++i) {
                        (*gx)[r * block + i] += 2.0 * x[r * block + i] * gy[r];
                    }
                }
            }
        });
    }

    // Relaxed Bernoulli draw with frozen logistic noise:
    //   eps_i = sigmoid((rho_{i mod |rho|} + noise_i) / tau)
    // The pathwise derivative w.r.t. rho is eps (1 - eps) / tau. rho may be a
    // single logit shared by all entries or one logit per entry.
    NodeId binary_concrete(NodeId rho, Tensor logit_noise, double tau) {
        const Tensor& r = value(rho);
        if (tau <= 0.0) throw NumericError("temperature must be positive");
        if (r.numel() != 1 && r.numel() != logit_noise.numel()) {
            throw ShapeError("rho " + r.shape_str() + " does not broadcast over noise " +
                             logit_noise.shape_str());
        }
        Tensor y = logit_noise;
        const bool shared = r.numel() == 1;
        for (size_t i = 0; i < y.numel(); ++i) {
            y[i] = nn::sigmoid((r[shared ? 0 : i] + logit_noise[i]) / tau);
        }
        return push(std::move(y), {rho}, [tau, shared](Graph& g, NodeId self) {
            const auto& in = g.node(self).inputs;
            const Tensor& gy = g.grad_ref(self);
            const Tensor& y = g.value(self);
            if (Tensor* gr = g.grad_sink(in[0])) {
                for (size_t i = 0; i < y.numel(); ++i) {
                    (*gr)[shared ? 0 : i] += gy[i] * y[i] * (1.0 - y[i]) / tau;
                }
            }
        });
    }

    // ---- backward --------------------------------------------------------

    void backward(NodeId loss) {
        if (ran_backward_) {
            throw NumericError("backward called twice on the same graph without reset");
        }
        ran_backward_ = true;
        const Tensor& lv = value(loss);
        if (!lv.is_scalar()) {
            throw ShapeError("backward requires a scalar loss, got " + lv.shape_str());
        }
        if (!std::isfinite(lv[0])) throw NumericError("loss is not finite");
        grads_.assign(nodes_.size(), Tensor());
        for (const auto& [id, n] : params_) {
            grads_[static_cast<size_t>(n)] = Tensor::zeros(value(n).shape());
        }
        grads_[static_cast<size_t>(loss)] = Tensor::scalar(1.0);
        for (NodeId n = loss; n >= 0; --n) {
            const Node& nd = nodes_[static_cast<size_t>(n)];
            if (!nd.backward_fn || grads_[static_cast<size_t>(n)].empty()) continue;
            nd.backward_fn(*this, n);
        }
    }

    void reset() {
        ran_backward_ = false;
        grads_.clear();
    }

    // Gradient of a node; zero tensor if the node never received one.
    const Tensor& grad(NodeId n) {
        require_backward();
        Tensor& g = grads_[static_cast<size_t>(n)];
        if (g.empty()) g = Tensor::zeros(value(n).shape());
        return g;
    }

    const Tensor& param_grad(const std::string& id) {
        auto it = params_.find(id);
        if (it == params_.end()) throw ConfigError("unknown parameter id '" + id + "'");
        return grad(it->second);
    }

    const std::map<std::string, NodeId>& params() const { return params_; }

    size_t num_nodes() const { return nodes_.size(); }

  private:
    struct Node {
        Tensor value;
        std::vector<NodeId> inputs;
        std::function<void(Graph&, NodeId)> backward_fn;
        bool needs_grad = false;
    };

    const Node& node(NodeId n) const { return nodes_[static_cast<size_t>(n)]; }

    NodeId push(Tensor value, std::vector<NodeId> inputs,
                std::function<void(Graph&, NodeId)> backward_fn) {
        bool needs = false;
        for (NodeId in : inputs) needs = needs || nodes_[static_cast<size_t>(in)].needs_grad;
        nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(backward_fn), needs});
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    // Accumulation target for a node's gradient, allocated on first touch.
    // Nodes with no parameter upstream return nullptr so backward skips them.
    Tensor* grad_sink(NodeId n) {
        if (!nodes_[static_cast<size_t>(n)].needs_grad) return nullptr;
        Tensor& g = grads_[static_cast<size_t>(n)];
        if (g.empty()) g = Tensor::zeros(value(n).shape());
        return &g;
    }

    const Tensor& grad_ref(NodeId n) const { return grads_[static_cast<size_t>(n)]; }

    void require_backward() const {
        if (!ran_backward_) throw NumericError("gradients requested before backward");
    }

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    std::map<std::string, NodeId> params_;
    bool ran_backward_ = false;
};

// Parameter-name -> tensor map with deterministic iteration order.
using ParamMap = std::map<std::string, Tensor>;

// Max over all parameter coordinates of
//   |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
// where numeric is the central difference of build_loss at the given step.
// build_loss must register every entry of params on the graph it is given and
// return the loss node; it must be deterministic (fix any noise beforehand).
inline double grad_check(const std::function<Graph::NodeId(Graph&, const ParamMap&)>& build_loss,
                         const ParamMap& params, double step) {
    Graph g;
    Graph::NodeId loss = build_loss(g, params);
    if (!std::isfinite(g.value(loss).scalar_value())) throw NumericError("loss is not finite");
    g.backward(loss);
    ParamMap analytic;
    for (const auto& [id, t] : params) analytic.emplace(id, g.param_grad(id));

    auto eval = [&](const ParamMap& p) {
        Graph h;
        Graph::NodeId l = build_loss(h, p);
        double v = h.value(l).scalar_value();
        if (!std::isfinite(v)) throw NumericError("loss is not finite");
        return v;
    };

    double max_rel = 0.0;
    ParamMap probe = params;
    for (auto& [id, t] : probe) {
        for (size_t i = 0; i < t.numel(); ++i) {
            const double saved = t[i];
            t[i] = saved + step;
            const double up = eval(probe);
            t[i] = saved - step;
            const double down = eval(probe);
            t[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic.at(id)[i];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
        }
    }
    return max_rel;
}

}  // namespace pgnas
