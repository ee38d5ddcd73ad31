#include "convsim/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace convsim {

namespace {
void require(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}
}  // namespace

Graph::Ref Graph::make(Tensor v) {
    nodes_.push_back(Node{std::move(v), Tensor(), nullptr});
    Node& n = nodes_.back();
    n.grad = Tensor(n.value.shape());
    return &n;
}

Graph::Ref Graph::input(Tensor v) {
    check_finite(v, "input");
    return make(std::move(v));
}

Graph::Ref Graph::param(ParameterStore& store, const std::string& name) {
    Param& p = store.at(name);
    Ref n = make(p.value);
    bindings_.push_back(Binding{n, &p});
    return n;
}

Graph::Ref Graph::add(Ref a, Ref b) {
    require(a->value.same_shape(b->value), "add: shape mismatch " +
            shape_str(a->value.shape()) + " vs " + shape_str(b->value.shape()));
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
    Ref n = make(std::move(out));
    n->backprop = [n, a, b] {
        for (std::size_t i = 0; i < n->grad.size(); ++i) {
            a->grad[i] += n->grad[i];
            b->grad[i] += n->grad[i];
        }
    };
    return n;
}

Graph::Ref Graph::sub(Ref a, Ref b) {
    require(a->value.same_shape(b->value), "sub: shape mismatch");
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
    Ref n = make(std::move(out));
    n->backprop = [n, a, b] {
        for (std::size_t i = 0; i < n->grad.size(); ++i) {
            a->grad[i] += n->grad[i];
            b->grad[i] -= n->grad[i];
        }
    };
    return n;
}

Graph::Ref Graph::mul(Ref a, Ref b) {
    require(a->value.same_shape(b->value), "mul: shape mismatch");
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
    Ref n = make(std::move(out));
    n->backprop = [n, a, b] {
        for (std::size_t i = 0; i < n->grad.size(); ++i) {
            a->grad[i] += n->grad[i] * b->value[i];
            b->grad[i] += n->grad[i] * a->value[i];
        }
    };
    return n;
}

Graph::Ref Graph::div(Ref a, Ref b) {
    require(a->value.same_shape(b->value), "div: shape mismatch");
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] / b->value[i];
    check_finite(out, "div");
    Ref n = make(std::move(out));
    n->backprop = [n, a, b] {
        for (std::size_t i = 0; i < n->grad.size(); ++i) {
            double inv = 1.0 / b->value[i];
            a->grad[i] += n->grad[i] * inv;
            b->grad[i] -= n->grad[i] * a->value[i] * inv * inv;
        }
    };
    return n;
}

Graph::Ref Graph::scale(Ref a, double c) {
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * c;
    Ref n = make(std::move(out));
    n->backprop = [n, a, c] {
        for (std::size_t i = 0; i < n->grad.size(); ++i) a->grad[i] += n->grad[i] * c;
    };
    return n;
}

Graph::Ref Graph::add_const(Ref a, double c) {
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + c;
    Ref n = make(std::move(out));
    n->backprop = [n, a] {
        for (std::size_t i = 0; i < n->grad.size(); ++i) a->grad[i] += n->grad[i];
    };
    return n;
}

Graph::Ref Graph::tanh_op(Ref a) {
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a->value[i]);
    Ref n = make(std::move(out));
    n->backprop = [n, a] {
        for (std::size_t i = 0; i < n->grad.size(); ++i) {
            a->grad[i] += n->grad[i] * (1.0 - n->value[i] * n->value[i]);
        }
    };
    return n;
}

Graph::Ref Graph::relu(Ref a) {
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, a->value[i]);
    Ref n = make(std::move(out));
    n->backprop = [n, a] {
        for (std::size_t i = 0; i < n->grad.size(); ++i) {
            if (a->value[i] > 0.0) a->grad[i] += n->grad[i];
        }
    };
    return n;
}

Graph::Ref Graph::abs_op(Ref a) {
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(a->value[i]);
    Ref n = make(std::move(out));
    n->backprop = [n, a] {
        for (std::size_t i = 0; i < n->grad.size(); ++i) {
            if (a->value[i] > 0.0) {
                a->grad[i] += n->grad[i];
            } else if (a->value[i] < 0.0) {
                a->grad[i] -= n->grad[i];
            }
        }
    };
    return n;
}

Graph::Ref Graph::arccos_clamped(Ref a) {
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::acos(std::clamp(a->value[i], -1.0, 1.0));
    }
    Ref n = make(std::move(out));
    n->backprop = [n, a] {
        for (std::size_t i = 0; i < n->grad.size(); ++i) {
            double x = a->value[i];
            if (x > -1.0 && x < 1.0) {
                a->grad[i] += n->grad[i] * (-1.0 / std::sqrt(1.0 - x * x));
            }
        }
    };
    return n;
}

Graph::Ref Graph::sqrt_eps(Ref a, double eps) {
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(a->value[i] + eps);
    check_finite(out, "sqrt_eps");
    Ref n = make(std::move(out));
    n->backprop = [n, a] {
        for (std::size_t i = 0; i < n->grad.size(); ++i) {
            a->grad[i] += n->grad[i] * 0.5 / n->value[i];
        }
    };
    return n;
}

Graph::Ref Graph::matmul(Ref a, Ref b) {
    const std::size_t m = a->value.rows(), k = a->value.cols();
    const std::size_t k2 = b->value.rows(), p = b->value.cols();
    require(k == k2, "matmul: inner dims disagree " + shape_str(a->value.shape()) + " * " +
            shape_str(b->value.shape()));
    Tensor out({m, p});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            double aij = a->value.at(i, j);
            for (std::size_t c = 0; c < p; ++c) out.at(i, c) += aij * b->value.at(j, c);
        }
    }
    check_finite(out, "matmul");
    Ref n = make(std::move(out));
    n->backprop = [n, a, b, m, k, p] {
        // dA += G B^T ; dB += A^T G
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t c = 0; c < p; ++c) {
                double g = n->grad.at(i, c);
                if (g == 0.0) continue;
                for (std::size_t j = 0; j < k; ++j) {
                    a->grad.at(i, j) += g * b->value.at(j, c);
                    b->grad.at(j, c) += g * a->value.at(i, j);
                }
            }
        }
    };
    return n;
}

Graph::Ref Graph::transpose(Ref a) {
    const std::size_t m = a->value.rows(), c = a->value.cols();
    Tensor out({c, m});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < c; ++j) out.at(j, i) = a->value.at(i, j);
    }
    Ref n = make(std::move(out));
    n->backprop = [n, a, m, c] {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < c; ++j) a->grad.at(i, j) += n->grad.at(j, i);
        }
    };
    return n;
}

Graph::Ref Graph::add_row(Ref x, Ref b) {
    const std::size_t m = x->value.rows(), c = x->value.cols();
    require(b->value.rows() == 1 && b->value.cols() == c, "add_row: bias shape mismatch");
    Tensor out({m, c});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < c; ++j) out.at(i, j) = x->value.at(i, j) + b->value[j];
    }
    Ref n = make(std::move(out));
    n->backprop = [n, x, b, m, c] {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                double g = n->grad.at(i, j);
                x->grad.at(i, j) += g;
                b->grad[j] += g;
            }
        }
    };
    return n;
}

Graph::Ref Graph::affine(Ref x, Ref w, Ref b) { return add_row(matmul(x, w), b); }

Graph::Ref Graph::concat_rows(const std::vector<Ref>& xs) {
    require(!xs.empty(), "concat_rows: empty list");
    const std::size_t c = xs[0]->value.cols();
    std::size_t total = 0;
    for (Ref x : xs) {
        require(x->value.cols() == c, "concat_rows: column mismatch");
        total += x->value.rows();
    }
    Tensor out({total, c});
    std::size_t r = 0;
    for (Ref x : xs) {
        for (std::size_t i = 0; i < x->value.rows(); ++i, ++r) {
            for (std::size_t j = 0; j < c; ++j) out.at(r, j) = x->value.at(i, j);
        }
    }
    Ref n = make(std::move(out));
    auto parts = xs;
    n->backprop = [n, parts, c] {
        std::size_t r = 0;
        for (Ref x : parts) {
            for (std::size_t i = 0; i < x->value.rows(); ++i, ++r) {
                for (std::size_t j = 0; j < c; ++j) x->grad.at(i, j) += n->grad.at(r, j);
            }
        }
    };
    return n;
}

Graph::Ref Graph::concat_cols(const std::vector<Ref>& xs) {
    require(!xs.empty(), "concat_cols: empty list");
    const std::size_t m = xs[0]->value.rows();
    std::size_t total = 0;
    for (Ref x : xs) {
        require(x->value.rows() == m, "concat_cols: row mismatch");
        total += x->value.cols();
    }
    Tensor out({m, total});
    std::size_t off = 0;
    for (Ref x : xs) {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < x->value.cols(); ++j) {
                out.at(i, off + j) = x->value.at(i, j);
            }
        }
        off += x->value.cols();
    }
    Ref n = make(std::move(out));
    auto parts = xs;
    n->backprop = [n, parts, m] {
        std::size_t off = 0;
        for (Ref x : parts) {
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < x->value.cols(); ++j) {
                    x->grad.at(i, j) += n->grad.at(i, off + j);
                }
            }
            off += x->value.cols();
        }
    };
    return n;
}

Graph::Ref Graph::col_slice(Ref x, std::size_t begin, std::size_t count) {
    const std::size_t m = x->value.rows(), c = x->value.cols();
    require(begin + count <= c, "col_slice: out of range");
    Tensor out({m, count});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < count; ++j) out.at(i, j) = x->value.at(i, begin + j);
    }
    Ref n = make(std::move(out));
    n->backprop = [n, x, begin, count, m] {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < count; ++j) x->grad.at(i, begin + j) += n->grad.at(i, j);
        }
    };
    return n;
}

Graph::Ref Graph::mean_rows(Ref x) {
    const std::size_t m = x->value.rows(), c = x->value.cols();
    require(m >= 1, "mean_rows: empty");
    Tensor out({1, c});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[j] += x->value.at(i, j);
    }
    for (std::size_t j = 0; j < c; ++j) out[j] /= static_cast<double>(m);
    Ref n = make(std::move(out));
    n->backprop = [n, x, m, c] {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                x->grad.at(i, j) += n->grad[j] / static_cast<double>(m);
            }
        }
    };
    return n;
}

Graph::Ref Graph::rowwise_sum(Ref x) {
    const std::size_t m = x->value.rows(), c = x->value.cols();
    Tensor out({m, 1});
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += x->value.at(i, j);
        out[i] = s;
    }
    Ref n = make(std::move(out));
    n->backprop = [n, x, m, c] {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < c; ++j) x->grad.at(i, j) += n->grad[i];
        }
    };
    return n;
}

Graph::Ref Graph::mean_all(Ref x) {
    const std::size_t total = x->value.size();
    require(total >= 1, "mean_all: empty");
    double s = 0.0;
    for (std::size_t i = 0; i < total; ++i) s += x->value[i];
    Ref n = make(Tensor::scalar(s / static_cast<double>(total)));
    n->backprop = [n, x, total] {
        double g = n->grad[0] / static_cast<double>(total);
        for (std::size_t i = 0; i < total; ++i) x->grad[i] += g;
    };
    return n;
}

Graph::Ref Graph::embed_bag(Ref table, std::span<const std::int32_t> ids) {
    const std::size_t v = table->value.rows(), d = table->value.cols();
    Tensor out({1, d});
    std::vector<std::int32_t> idv(ids.begin(), ids.end());
    for (std::int32_t id : idv) {
        require(id >= 0 && static_cast<std::size_t>(id) < v, "embed_bag: id out of range");
        for (std::size_t j = 0; j < d; ++j) out[j] += table->value.at(id, j);
    }
    Ref n = make(std::move(out));
    n->backprop = [n, table, idv = std::move(idv), d] {
        for (std::int32_t id : idv) {
            for (std::size_t j = 0; j < d; ++j) table->grad.at(id, j) += n->grad[j];
        }
    };
    return n;
}

Graph::Ref Graph::embed_rows(Ref table, std::span<const std::int32_t> ids) {
    const std::size_t v = table->value.rows(), d = table->value.cols();
    require(!ids.empty(), "embed_rows: empty id list");
    Tensor out({ids.size(), d});
    std::vector<std::int32_t> idv(ids.begin(), ids.end());
    for (std::size_t i = 0; i < idv.size(); ++i) {
        require(idv[i] >= 0 && static_cast<std::size_t>(idv[i]) < v,
                "embed_rows: id out of range");
        for (std::size_t j = 0; j < d; ++j) out.at(i, j) = table->value.at(idv[i], j);
    }
    Ref n = make(std::move(out));
    n->backprop = [n, table, idv = std::move(idv), d] {
        for (std::size_t i = 0; i < idv.size(); ++i) {
            for (std::size_t j = 0; j < d; ++j) table->grad.at(idv[i], j) += n->grad.at(i, j);
        }
    };
    return n;
}

Graph::Ref Graph::l2_normalize_rows(Ref x, double eps) {
    const std::size_t m = x->value.rows(), c = x->value.cols();
    Tensor out({m, c});
    std::vector<double> norms(m);
    for (std::size_t i = 0; i < m; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < c; ++j) sq += x->value.at(i, j) * x->value.at(i, j);
        double norm = std::sqrt(sq);
        if (norm <= eps) throw NumericError("degenerate_norm: cannot l2-normalize");
        norms[i] = norm;
        for (std::size_t j = 0; j < c; ++j) out.at(i, j) = x->value.at(i, j) / norm;
    }
    Ref n = make(std::move(out));
    n->backprop = [n, x, norms = std::move(norms), m, c] {
        // dx = (g - (g.u) u) / ||x||
        for (std::size_t i = 0; i < m; ++i) {
            double gu = 0.0;
            for (std::size_t j = 0; j < c; ++j) gu += n->grad.at(i, j) * n->value.at(i, j);
            for (std::size_t j = 0; j < c; ++j) {
                x->grad.at(i, j) += (n->grad.at(i, j) - gu * n->value.at(i, j)) / norms[i];
            }
        }
    };
    return n;
}

Graph::Ref Graph::softmax_rows(Ref x) {
    const std::size_t m = x->value.rows(), c = x->value.cols();
    Tensor out({m, c});
    for (std::size_t i = 0; i < m; ++i) {
        double mx = x->value.at(i, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x->value.at(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            out.at(i, j) = std::exp(x->value.at(i, j) - mx);
            z += out.at(i, j);
        }
        for (std::size_t j = 0; j < c; ++j) out.at(i, j) /= z;
    }
    Ref n = make(std::move(out));
    n->backprop = [n, x, m, c] {
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += n->grad.at(i, j) * n->value.at(i, j);
            for (std::size_t j = 0; j < c; ++j) {
                x->grad.at(i, j) += n->value.at(i, j) * (n->grad.at(i, j) - dot);
            }
        }
    };
    return n;
}

Graph::Ref Graph::layer_norm_rows(Ref x, Ref gain, Ref bias, double eps) {
    const std::size_t m = x->value.rows(), c = x->value.cols();
    require(gain->value.rows() == 1 && gain->value.cols() == c, "layer_norm: gain shape");
    require(bias->value.rows() == 1 && bias->value.cols() == c, "layer_norm: bias shape");
    Tensor out({m, c});
    Tensor xhat({m, c});
    std::vector<double> inv_std(m);
    for (std::size_t i = 0; i < m; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < c; ++j) mean += x->value.at(i, j);
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            double dv = x->value.at(i, j) - mean;
            var += dv * dv;
        }
        var /= static_cast<double>(c);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < c; ++j) {
            xhat.at(i, j) = (x->value.at(i, j) - mean) * inv_std[i];
            out.at(i, j) = gain->value[j] * xhat.at(i, j) + bias->value[j];
        }
    }
    Ref n = make(std::move(out));
    n->backprop = [n, x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), m,
                   c] {
        for (std::size_t i = 0; i < m; ++i) {
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                double g = n->grad.at(i, j);
                gain->grad[j] += g * xhat.at(i, j);
                bias->grad[j] += g;
                double dxhat = g * gain->value[j];
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * xhat.at(i, j);
            }
            for (std::size_t j = 0; j < c; ++j) {
                double dxhat = n->grad.at(i, j) * gain->value[j];
                x->grad.at(i, j) += inv_std[i] / static_cast<double>(c) *
                                    (static_cast<double>(c) * dxhat - sum_dxhat -
                                     xhat.at(i, j) * sum_dxhat_xhat);
            }
        }
    };
    return n;
}

Graph::Ref Graph::softmax_xent(Ref logits, std::span<const std::int32_t> targets,
                               Tensor* probs_out) {
    const std::size_t k = logits->value.rows(), c = logits->value.cols();
    require(c >= 2, "softmax_xent: need at least 2 classes");
    require(targets.size() == k, "softmax_xent: one target per row required");
    std::vector<std::int32_t> tgt(targets.begin(), targets.end());
    for (std::int32_t t : tgt) {
        if (t < 0 || static_cast<std::size_t>(t) >= c) {
            throw Error("softmax_xent: target index out of range");
        }
    }
    Tensor probs({k, c});
    double loss = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        double mx = logits->value.at(i, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits->value.at(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(logits->value.at(i, j) - mx);
        double log_z = std::log(z);
        loss += -(logits->value.at(i, tgt[i]) - mx - log_z);
        for (std::size_t j = 0; j < c; ++j) {
            probs.at(i, j) = std::exp(logits->value.at(i, j) - mx - log_z);
        }
    }
    loss /= static_cast<double>(k);
    if (probs_out) *probs_out = probs;
    Ref n = make(Tensor::scalar(loss));
    n->backprop = [n, logits, probs = std::move(probs), tgt = std::move(tgt), k, c] {
        double g = n->grad[0] / static_cast<double>(k);
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                double onehot = (static_cast<std::int32_t>(j) == tgt[i]) ? 1.0 : 0.0;
                logits->grad.at(i, j) += g * (probs.at(i, j) - onehot);
            }
        }
    };
    return n;
}

void Graph::backward(Ref loss) {
    require(loss->value.size() == 1, "backward: loss must be scalar");
    loss->grad[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->backprop) it->backprop();
    }
    for (const Binding& b : bindings_) {
        for (std::size_t i = 0; i < b.param->grad.size(); ++i) {
            b.param->grad[i] += b.node->grad[i];
        }
        check_finite(b.param->grad, "backward");
    }
}

GradCheckReport grad_check(const std::function<double(bool)>& eval, ParameterStore& store,
                           double h, std::size_t coords_per_tensor, std::uint64_t seed) {
    store.zero_grads();
    eval(true);

    std::map<std::string, Tensor> analytic;
    for (const auto& [name, p] : store) analytic.emplace(name, p.grad);

    GradCheckReport report;
    Rng rng(seed ^ 0x6772616463686bULL);
    for (auto& [name, p] : store) {
        if (!p.trainable) continue;
        std::size_t n = p.value.size();
        std::size_t probes = std::min(coords_per_tensor, n);
        for (std::size_t k = 0; k < probes; ++k) {
            std::size_t i = rng.index(n);
            double v0 = p.value[i];
            // central difference at a perturbation; values stay f32-representable
            // and the realized step is the denominator
            auto central = [&](double step) {
                double plus = static_cast<double>(static_cast<float>(v0 + step));
                double minus = static_cast<double>(static_cast<float>(v0 - step));
                p.value[i] = plus;
                double f_plus = eval(false);
                p.value[i] = minus;
                double f_minus = eval(false);
                p.value[i] = v0;
                return (f_plus - f_minus) / (plus - minus);
            };
            // Richardson extrapolation of the central differences at h and h/2
            // cancels the O(h^2) truncation term
            double numeric = (4.0 * central(h / 2.0) - central(h)) / 3.0;
            double a = analytic.at(name)[i];
            // relative error with an absolute floor so near-zero gradients
            // are compared absolutely
            double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
            double rel = std::abs(a - numeric) / denom;
            ++report.coords_checked;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst = GradCheckEntry{name, i, a, numeric, rel};
            }
        }
    }
    store.zero_grads();
    return report;
}

}  // namespace convsim
