#include "lns/core/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <omp.h>

#include "lns/core/blas.hpp"

namespace lns::ag {

namespace {

thread_local bool t_grad_enabled = true;

constexpr int64_t kParallelCutoff = 1 << 14;

template <typename F>
void par_for(int64_t n, F&& f) {
#pragma omp parallel for schedule(static) if (n >= kParallelCutoff)
    for (int64_t i = 0; i < n; ++i) f(i);
}

void axpy(Tensor& dst, const double* src, int64_t n, double alpha = 1.0) {
    double* d = dst.data();
    par_for(n, [&](int64_t i) { d[i] += alpha * src[i]; });
}

} // namespace

Var::Var(Tensor value, bool requires_grad) {
    node_ = std::make_shared<Node>();
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : prev(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = prev; }

Var make_op(Tensor value, std::vector<NodePtr> parents,
            std::function<void(Node&)> backward_fn) {
    bool need = false;
    if (t_grad_enabled) {
        for (const auto& p : parents)
            if (p && p->requires_grad) need = true;
    }
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = need;
    if (need) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return Var::from_node(std::move(n));
}

void backward(const Var& root) {
    check(root.defined() && root.value().size() == 1, ErrorCode::InvalidArgument,
          "backward: root must be a defined scalar");
    // iterative post-order DFS
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            Node* p = n->parents[i++].get();
            if (p && p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    root.node()->ensure_grad();
    root.node()->grad.fill(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad.defined()) n->backward_fn(*n);
    }
}

// ---------------- elementwise ----------------

namespace {

Var binary_ew(const Var& a, const Var& b, double (*fwd)(double, double), int mode) {
    check(a.value().same_shape(b.value()), ErrorCode::ShapeMismatch,
          "elementwise op: shape mismatch " + a.value().shape_str() + " vs " +
              b.value().shape_str());
    int64_t n = a.value().size();
    Tensor out(a.value().shape());
    const double* pa = a.value().data();
    const double* pb = b.value().data();
    double* po = out.data();
    par_for(n, [&](int64_t i) { po[i] = fwd(pa[i], pb[i]); });
    Tensor av = a.value(), bv = b.value();
    return make_op(std::move(out), {a.node(), b.node()}, [n, mode, av, bv](Node& self) {
        const double* g = self.grad.data();
        Node* A = self.parents[0].get();
        Node* B = self.parents[1].get();
        if (A->requires_grad) {
            A->ensure_grad();
            double* da = A->grad.data();
            const double* pb2 = bv.data();
            par_for(n, [&](int64_t i) {
                da[i] += (mode == 2) ? g[i] * pb2[i] : g[i];
            });
        }
        if (B->requires_grad) {
            B->ensure_grad();
            double* db = B->grad.data();
            const double* pa2 = av.data();
            par_for(n, [&](int64_t i) {
                if (mode == 0) db[i] += g[i];
                else if (mode == 1) db[i] -= g[i];
                else db[i] += g[i] * pa2[i];
            });
        }
    });
}

} // namespace

Var add(const Var& a, const Var& b) {
    return binary_ew(a, b, [](double x, double y) { return x + y; }, 0);
}
Var sub(const Var& a, const Var& b) {
    return binary_ew(a, b, [](double x, double y) { return x - y; }, 1);
}
Var mul(const Var& a, const Var& b) {
    return binary_ew(a, b, [](double x, double y) { return x * y; }, 2);
}

Var add_scalar(const Var& a, double s) {
    int64_t n = a.value().size();
    Tensor out(a.value().shape());
    const double* pa = a.value().data();
    double* po = out.data();
    par_for(n, [&](int64_t i) { po[i] = pa[i] + s; });
    return make_op(std::move(out), {a.node()}, [n](Node& self) {
        Node* A = self.parents[0].get();
        A->ensure_grad();
        axpy(A->grad, self.grad.data(), n);
    });
}

Var mul_scalar(const Var& a, double s) {
    int64_t n = a.value().size();
    Tensor out(a.value().shape());
    const double* pa = a.value().data();
    double* po = out.data();
    par_for(n, [&](int64_t i) { po[i] = pa[i] * s; });
    return make_op(std::move(out), {a.node()}, [n, s](Node& self) {
        Node* A = self.parents[0].get();
        A->ensure_grad();
        axpy(A->grad, self.grad.data(), n, s);
    });
}

Var neg(const Var& a) { return mul_scalar(a, -1.0); }

Var gelu(const Var& a) {
    int64_t n = a.value().size();
    Tensor out(a.value().shape());
    const double* pa = a.value().data();
    double* po = out.data();
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    par_for(n, [&](int64_t i) { po[i] = 0.5 * pa[i] * (1.0 + std::erf(pa[i] * inv_sqrt2)); });
    Tensor av = a.value();
    return make_op(std::move(out), {a.node()}, [n, av, inv_sqrt2](Node& self) {
        Node* A = self.parents[0].get();
        A->ensure_grad();
        const double* g = self.grad.data();
        const double* x = av.data();
        double* da = A->grad.data();
        const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
        par_for(n, [&](int64_t i) {
            double cdf = 0.5 * (1.0 + std::erf(x[i] * inv_sqrt2));
            double pdf = inv_sqrt2pi * std::exp(-0.5 * x[i] * x[i]);
            da[i] += g[i] * (cdf + x[i] * pdf);
        });
    });
}

Var square(const Var& a) { return mul(a, a); }

Var sqrt_elem(const Var& a) {
    int64_t n = a.value().size();
    Tensor out(a.value().shape());
    const double* pa = a.value().data();
    double* po = out.data();
    par_for(n, [&](int64_t i) { po[i] = std::sqrt(pa[i]); });
    Tensor ov = out;
    return make_op(std::move(out), {a.node()}, [n, ov](Node& self) {
        Node* A = self.parents[0].get();
        A->ensure_grad();
        const double* g = self.grad.data();
        const double* y = ov.data();
        double* da = A->grad.data();
        par_for(n, [&](int64_t i) { da[i] += g[i] * 0.5 / std::max(y[i], 1e-300); });
    });
}

Var div_scalarvar(const Var& a, const Var& b) {
    check(a.value().size() == 1 && b.value().size() == 1, ErrorCode::ShapeMismatch,
          "div_scalarvar expects scalars");
    Tensor out({1});
    double bv = b.value()[0];
    out[0] = a.value()[0] / bv;
    double av = a.value()[0];
    return make_op(std::move(out), {a.node(), b.node()}, [av, bv](Node& self) {
        double g = self.grad[0];
        Node* A = self.parents[0].get();
        Node* B = self.parents[1].get();
        if (A->requires_grad) {
            A->ensure_grad();
            A->grad[0] += g / bv;
        }
        if (B->requires_grad) {
            B->ensure_grad();
            B->grad[0] -= g * av / (bv * bv);
        }
    });
}

// ---------------- linear algebra ----------------

Var matmul(const Var& a, const Var& b) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    check(A.ndim() == 2 && B.ndim() == 2 && A.shape(1) == B.shape(0),
          ErrorCode::ShapeMismatch, "matmul: bad shapes");
    int64_t m = A.shape(0), k = A.shape(1), n = B.shape(1);
    Tensor out({m, n});
    blas::gemm(false, false, m, n, k, 1.0, A.data(), k, B.data(), n, 0.0, out.data(), n);
    Tensor av = A, bv = B;
    return make_op(std::move(out), {a.node(), b.node()}, [m, n, k, av, bv](Node& self) {
        const Tensor& G = self.grad;
        Node* An = self.parents[0].get();
        Node* Bn = self.parents[1].get();
        if (An->requires_grad) {
            An->ensure_grad();
            blas::gemm(false, true, m, k, n, 1.0, G.data(), n, bv.data(), n, 1.0,
                       An->grad.data(), k);
        }
        if (Bn->requires_grad) {
            Bn->ensure_grad();
            blas::gemm(true, false, k, n, m, 1.0, av.data(), k, G.data(), n, 1.0,
                       Bn->grad.data(), n);
        }
    });
}

Var bmm(const Var& a, const Var& b, bool trans_a, bool trans_b) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    check(A.ndim() == 3 && B.ndim() == 3 && A.shape(0) == B.shape(0),
          ErrorCode::ShapeMismatch, "bmm: bad ranks");
    int64_t nb = A.shape(0);
    int64_t m = trans_a ? A.shape(2) : A.shape(1);
    int64_t k = trans_a ? A.shape(1) : A.shape(2);
    int64_t k2 = trans_b ? B.shape(2) : B.shape(1);
    int64_t n = trans_b ? B.shape(1) : B.shape(2);
    check(k == k2, ErrorCode::ShapeMismatch, "bmm: inner dim mismatch");
    Tensor out({nb, m, n});
    int64_t sa = A.shape(1) * A.shape(2), sb = B.shape(1) * B.shape(2), so = m * n;
    int64_t lda = A.shape(2), ldb = B.shape(2);
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < nb; ++i) {
        blas::gemm(trans_a, trans_b, m, n, k, 1.0, A.data() + i * sa, lda,
                   B.data() + i * sb, ldb, 0.0, out.data() + i * so, n);
    }
    Tensor av = A, bv = B;
    return make_op(std::move(out), {a.node(), b.node()},
                   [=](Node& self) {
                       const Tensor& G = self.grad;
                       Node* An = self.parents[0].get();
                       Node* Bn = self.parents[1].get();
                       if (An->requires_grad) An->ensure_grad();
                       if (Bn->requires_grad) Bn->ensure_grad();
#pragma omp parallel for schedule(static)
                       for (int64_t i = 0; i < nb; ++i) {
                           const double* g = G.data() + i * so;
                           const double* pa = av.data() + i * sa;
                           const double* pb = bv.data() + i * sb;
                           if (An->requires_grad) {
                               double* da = An->grad.data() + i * sa;
                               if (!trans_a && !trans_b)
                                   blas::gemm(false, true, m, k, n, 1.0, g, n, pb, ldb, 1.0, da, lda);
                               else if (!trans_a && trans_b)
                                   blas::gemm(false, false, m, k, n, 1.0, g, n, pb, ldb, 1.0, da, lda);
                               else if (trans_a && !trans_b)
                                   blas::gemm(false, true, k, m, n, 1.0, pb, ldb, g, n, 1.0, da, lda);
                               else
                                   blas::gemm(true, true, k, m, n, 1.0, pb, ldb, g, n, 1.0, da, lda);
                           }
                           if (Bn->requires_grad) {
                               double* db = Bn->grad.data() + i * sb;
                               if (!trans_b && !trans_a)
                                   blas::gemm(true, false, k, n, m, 1.0, pa, lda, g, n, 1.0, db, ldb);
                               else if (!trans_b && trans_a)
                                   blas::gemm(false, false, k, n, m, 1.0, pa, lda, g, n, 1.0, db, ldb);
                               else if (trans_b && !trans_a)
                                   blas::gemm(true, false, n, k, m, 1.0, g, n, pa, lda, 1.0, db, ldb);
                               else
                                   blas::gemm(true, true, n, k, m, 1.0, g, n, pa, lda, 1.0, db, ldb);
                           }
                       }
                   });
}

Var linear(const Var& x, const Var& W, const Var& b) {
    const Tensor& X = x.value();
    const Tensor& Wv = W.value();
    check(Wv.ndim() == 2, ErrorCode::ShapeMismatch, "linear: W must be 2-D");
    int64_t kdim = Wv.shape(1), ndim = Wv.shape(0);
    check(X.shape(X.ndim() - 1) == kdim, ErrorCode::ShapeMismatch,
          "linear: input feature dim mismatch");
    int64_t rows = X.size() / kdim;
    std::vector<int64_t> out_shape = X.shape();
    out_shape.back() = ndim;
    Tensor out(out_shape);
    blas::gemm(false, true, rows, ndim, kdim, 1.0, X.data(), kdim, Wv.data(), kdim, 0.0,
               out.data(), ndim);
    bool has_bias = b.defined();
    if (has_bias) {
        check(b.value().size() == ndim, ErrorCode::ShapeMismatch, "linear: bias size");
        const double* pb = b.value().data();
        double* po = out.data();
        par_for(rows, [&](int64_t r) {
            for (int64_t j = 0; j < ndim; ++j) po[r * ndim + j] += pb[j];
        });
    }
    std::vector<NodePtr> parents = {x.node(), W.node()};
    if (has_bias) parents.push_back(b.node());
    Tensor xv = X, wv = Wv;
    return make_op(std::move(out), std::move(parents),
                   [rows, ndim, kdim, xv, wv, has_bias](Node& self) {
                       const Tensor& G = self.grad;
                       Node* Xn = self.parents[0].get();
                       Node* Wn = self.parents[1].get();
                       if (Xn->requires_grad) {
                           Xn->ensure_grad();
                           blas::gemm(false, false, rows, kdim, ndim, 1.0, G.data(), ndim,
                                      wv.data(), kdim, 1.0, Xn->grad.data(), kdim);
                       }
                       if (Wn->requires_grad) {
                           Wn->ensure_grad();
                           blas::gemm(true, false, ndim, kdim, rows, 1.0, G.data(), ndim,
                                      xv.data(), kdim, 1.0, Wn->grad.data(), kdim);
                       }
                       if (has_bias) {
                           Node* Bn = self.parents[2].get();
                           if (Bn->requires_grad) {
                               Bn->ensure_grad();
                               double* db = Bn->grad.data();
                               const double* g = G.data();
                               for (int64_t r = 0; r < rows; ++r)
                                   for (int64_t j = 0; j < ndim; ++j) db[j] += g[r * ndim + j];
                           }
                       }
                   });
}

Var pointwise_linear(const Var& x, const Var& W, const Var& b) {
    const Tensor& X = x.value();
    const Tensor& Wv = W.value();
    check(X.ndim() == 4 && Wv.ndim() == 2 && Wv.shape(1) == X.shape(1),
          ErrorCode::ShapeMismatch, "pointwise_linear: bad shapes");
    int64_t nb = X.shape(0), cin = X.shape(1), hw = X.shape(2) * X.shape(3);
    int64_t cout = Wv.shape(0);
    Tensor out({nb, cout, X.shape(2), X.shape(3)});
    bool has_bias = b.defined();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < nb; ++i) {
        blas::gemm(false, false, cout, hw, cin, 1.0, Wv.data(), cin,
                   X.data() + i * cin * hw, hw, 0.0, out.data() + i * cout * hw, hw);
        if (has_bias) {
            double* po = out.data() + i * cout * hw;
            const double* pb = b.value().data();
            for (int64_t c = 0; c < cout; ++c)
                for (int64_t s = 0; s < hw; ++s) po[c * hw + s] += pb[c];
        }
    }
    std::vector<NodePtr> parents = {x.node(), W.node()};
    if (has_bias) parents.push_back(b.node());
    Tensor xv = X, wv = Wv;
    return make_op(std::move(out), std::move(parents),
                   [nb, cin, cout, hw, xv, wv, has_bias](Node& self) {
                       const Tensor& G = self.grad;
                       Node* Xn = self.parents[0].get();
                       Node* Wn = self.parents[1].get();
                       if (Xn->requires_grad) {
                           Xn->ensure_grad();
#pragma omp parallel for schedule(static)
                           for (int64_t i = 0; i < nb; ++i)
                               blas::gemm(true, false, cin, hw, cout, 1.0, wv.data(), cin,
                                          G.data() + i * cout * hw, hw, 1.0,
                                          Xn->grad.data() + i * cin * hw, hw);
                       }
                       if (Wn->requires_grad) {
                           Wn->ensure_grad();
                           int nthreads = omp_get_max_threads();
                           std::vector<Tensor> bufs;
                           for (int t = 0; t < nthreads; ++t)
                               bufs.push_back(Tensor::zeros({cout, cin}));
#pragma omp parallel for schedule(static)
                           for (int64_t i = 0; i < nb; ++i) {
                               Tensor& buf = bufs[omp_get_thread_num()];
                               blas::gemm(false, true, cout, cin, hw, 1.0,
                                          G.data() + i * cout * hw, hw,
                                          xv.data() + i * cin * hw, hw, 1.0, buf.data(), cin);
                           }
                           for (auto& buf : bufs) axpy(Wn->grad, buf.data(), cout * cin);
                       }
                       if (has_bias) {
                           Node* Bn = self.parents[2].get();
                           if (Bn->requires_grad) {
                               Bn->ensure_grad();
                               double* db = Bn->grad.data();
                               const double* g = G.data();
#pragma omp parallel for schedule(static)
                               for (int64_t c = 0; c < cout; ++c) {
                                   double acc = 0.0;
                                   for (int64_t i = 0; i < nb; ++i)
                                       for (int64_t s = 0; s < hw; ++s)
                                           acc += g[(i * cout + c) * hw + s];
                                   db[c] += acc;
                               }
                           }
                       }
                   });
}

// ---------------- shape ops ----------------

Var reshape(const Var& x, std::vector<int64_t> shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    int64_t n = out.size();
    return make_op(std::move(out), {x.node()}, [n](Node& self) {
        Node* X = self.parents[0].get();
        X->ensure_grad();
        axpy(X->grad, self.grad.data(), n);
    });
}

namespace {
std::vector<int64_t> strides_of(const std::vector<int64_t>& shape) {
    std::vector<int64_t> st(shape.size());
    int64_t acc = 1;
    for (int64_t i = static_cast<int64_t>(shape.size()) - 1; i >= 0; --i) {
        st[static_cast<size_t>(i)] = acc;
        acc *= shape[static_cast<size_t>(i)];
    }
    return st;
}
} // namespace

Var permute(const Var& x, std::vector<int> perm) {
    const Tensor& X = x.value();
    check(static_cast<int64_t>(perm.size()) == X.ndim(), ErrorCode::ShapeMismatch,
          "permute: rank mismatch");
    std::vector<int64_t> oshape(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) oshape[i] = X.shape(perm[i]);
    Tensor out(oshape);
    auto in_strides = strides_of(X.shape());
    std::vector<int64_t> gather(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) gather[i] = in_strides[static_cast<size_t>(perm[i])];
    auto out_strides = strides_of(oshape);
    int64_t n = X.size();
    const double* px = X.data();
    double* po = out.data();
    int rank = static_cast<int>(perm.size());
    par_for(n, [&](int64_t o) {
        int64_t rem = o, src = 0;
        for (int d = 0; d < rank; ++d) {
            int64_t q = rem / out_strides[static_cast<size_t>(d)];
            rem -= q * out_strides[static_cast<size_t>(d)];
            src += q * gather[static_cast<size_t>(d)];
        }
        po[o] = px[src];
    });
    return make_op(std::move(out), {x.node()},
                   [n, out_strides, gather, rank](Node& self) {
                       Node* X = self.parents[0].get();
                       X->ensure_grad();
                       const double* g = self.grad.data();
                       double* dx = X->grad.data();
                       par_for(n, [&](int64_t o) {
                           int64_t rem = o, src = 0;
                           for (int d = 0; d < rank; ++d) {
                               int64_t q = rem / out_strides[static_cast<size_t>(d)];
                               rem -= q * out_strides[static_cast<size_t>(d)];
                               src += q * gather[static_cast<size_t>(d)];
                           }
#pragma omp atomic
                           dx[src] += g[o];
                       });
                   });
}

Var concat_channel(const Var& a, const Var& b) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    check(A.ndim() == 4 && B.ndim() == 4 && A.shape(0) == B.shape(0) &&
              A.shape(2) == B.shape(2) && A.shape(3) == B.shape(3),
          ErrorCode::ShapeMismatch, "concat_channel: incompatible shapes");
    int64_t nb = A.shape(0), ca = A.shape(1), cb = B.shape(1);
    int64_t hw = A.shape(2) * A.shape(3);
    Tensor out({nb, ca + cb, A.shape(2), A.shape(3)});
    par_for(nb * (ca + cb), [&](int64_t i) {
        int64_t bidx = i / (ca + cb), c = i % (ca + cb);
        double* po = out.data() + i * hw;
        const double* src = (c < ca) ? A.data() + (bidx * ca + c) * hw
                                     : B.data() + (bidx * cb + (c - ca)) * hw;
        std::memcpy(po, src, sizeof(double) * static_cast<size_t>(hw));
    });
    return make_op(std::move(out), {a.node(), b.node()}, [nb, ca, cb, hw](Node& self) {
        Node* An = self.parents[0].get();
        Node* Bn = self.parents[1].get();
        const double* g = self.grad.data();
        if (An->requires_grad) {
            An->ensure_grad();
            double* da = An->grad.data();
            par_for(nb * ca, [&](int64_t i) {
                int64_t bidx = i / ca, c = i % ca;
                const double* gs = g + ((bidx * (ca + cb)) + c) * hw;
                for (int64_t s = 0; s < hw; ++s) da[i * hw + s] += gs[s];
            });
        }
        if (Bn->requires_grad) {
            Bn->ensure_grad();
            double* db = Bn->grad.data();
            par_for(nb * cb, [&](int64_t i) {
                int64_t bidx = i / cb, c = i % cb;
                const double* gs = g + ((bidx * (ca + cb)) + ca + c) * hw;
                for (int64_t s = 0; s < hw; ++s) db[i * hw + s] += gs[s];
            });
        }
    });
}

Var slice_channel(const Var& x, int64_t c0, int64_t c1) {
    const Tensor& X = x.value();
    check(X.ndim() == 4 && c0 >= 0 && c1 <= X.shape(1) && c0 < c1,
          ErrorCode::ShapeMismatch, "slice_channel: bad range");
    int64_t nb = X.shape(0), c = X.shape(1), hw = X.shape(2) * X.shape(3);
    int64_t cs = c1 - c0;
    Tensor out({nb, cs, X.shape(2), X.shape(3)});
    par_for(nb * cs, [&](int64_t i) {
        int64_t bidx = i / cs, cc = i % cs;
        std::memcpy(out.data() + i * hw, X.data() + ((bidx * c) + c0 + cc) * hw,
                    sizeof(double) * static_cast<size_t>(hw));
    });
    return make_op(std::move(out), {x.node()}, [nb, c, cs, c0, hw](Node& self) {
        Node* Xn = self.parents[0].get();
        Xn->ensure_grad();
        double* dx = Xn->grad.data();
        const double* g = self.grad.data();
        par_for(nb * cs, [&](int64_t i) {
            int64_t bidx = i / cs, cc = i % cs;
            double* d = dx + ((bidx * c) + c0 + cc) * hw;
            for (int64_t s = 0; s < hw; ++s) d[s] += g[i * hw + s];
        });
    });
}

// ---------------- reductions / misc ----------------

Var sum_all(const Var& x) {
    const Tensor& X = x.value();
    double acc = 0.0;
    const double* px = X.data();
    for (int64_t i = 0; i < X.size(); ++i) acc += px[i];
    Tensor out({1});
    out[0] = acc;
    int64_t n = X.size();
    return make_op(std::move(out), {x.node()}, [n](Node& self) {
        Node* Xn = self.parents[0].get();
        Xn->ensure_grad();
        double g = self.grad[0];
        double* dx = Xn->grad.data();
        par_for(n, [&](int64_t i) { dx[i] += g; });
    });
}

Var mean_all(const Var& x) {
    return mul_scalar(sum_all(x), 1.0 / static_cast<double>(x.value().size()));
}

Var softmax_lastdim(const Var& x) {
    const Tensor& X = x.value();
    int64_t last = X.shape(X.ndim() - 1);
    int64_t rows = X.size() / last;
    Tensor out(X.shape());
    const double* px = X.data();
    double* po = out.data();
    par_for(rows, [&](int64_t r) {
        const double* in = px + r * last;
        double* o = po + r * last;
        double mx = in[0];
        for (int64_t j = 1; j < last; ++j) mx = std::max(mx, in[j]);
        double s = 0.0;
        for (int64_t j = 0; j < last; ++j) {
            o[j] = std::exp(in[j] - mx);
            s += o[j];
        }
        double inv = 1.0 / s;
        for (int64_t j = 0; j < last; ++j) o[j] *= inv;
    });
    Tensor ov = out;
    return make_op(std::move(out), {x.node()}, [rows, last, ov](Node& self) {
        Node* Xn = self.parents[0].get();
        Xn->ensure_grad();
        const double* g = self.grad.data();
        const double* y = ov.data();
        double* dx = Xn->grad.data();
        par_for(rows, [&](int64_t r) {
            const double* gr = g + r * last;
            const double* yr = y + r * last;
            double dot = 0.0;
            for (int64_t j = 0; j < last; ++j) dot += gr[j] * yr[j];
            for (int64_t j = 0; j < last; ++j) dx[r * last + j] += yr[j] * (gr[j] - dot);
        });
    });
}

namespace {
void channel_gate_shapes(const Tensor& X, const Tensor& gate, int64_t& nb, int64_t& c,
                         int64_t& hw, bool& per_batch) {
    check(X.ndim() == 4, ErrorCode::ShapeMismatch, "channel op: x must be (B,C,H,W)");
    nb = X.shape(0);
    c = X.shape(1);
    hw = X.shape(2) * X.shape(3);
    if (gate.ndim() == 2) {
        check(gate.shape(0) == nb && gate.shape(1) == c, ErrorCode::ShapeMismatch,
              "channel op: gate (B,C) mismatch");
        per_batch = true;
    } else {
        check(gate.size() == c, ErrorCode::ShapeMismatch, "channel op: gate (C) mismatch");
        per_batch = false;
    }
}
} // namespace

Var scale_channels(const Var& x, const Var& gate) {
    int64_t nb, c, hw;
    bool per_batch;
    channel_gate_shapes(x.value(), gate.value(), nb, c, hw, per_batch);
    Tensor out(x.value().shape());
    const double* px = x.value().data();
    const double* pg = gate.value().data();
    double* po = out.data();
    par_for(nb * c, [&](int64_t i) {
        double gv = per_batch ? pg[i] : pg[i % c];
        for (int64_t s = 0; s < hw; ++s) po[i * hw + s] = px[i * hw + s] * gv;
    });
    Tensor xv = x.value(), gv = gate.value();
    return make_op(std::move(out), {x.node(), gate.node()},
                   [nb, c, hw, per_batch, xv, gv](Node& self) {
                       Node* Xn = self.parents[0].get();
                       Node* Gn = self.parents[1].get();
                       const double* g = self.grad.data();
                       if (Xn->requires_grad) {
                           Xn->ensure_grad();
                           double* dx = Xn->grad.data();
                           const double* pg = gv.data();
                           par_for(nb * c, [&](int64_t i) {
                               double gg = per_batch ? pg[i] : pg[i % c];
                               for (int64_t s = 0; s < hw; ++s) dx[i * hw + s] += g[i * hw + s] * gg;
                           });
                       }
                       if (Gn->requires_grad) {
                           Gn->ensure_grad();
                           double* dg = Gn->grad.data();
                           const double* px = xv.data();
                           if (per_batch) {
                               par_for(nb * c, [&](int64_t i) {
                                   double acc = 0.0;
                                   for (int64_t s = 0; s < hw; ++s) acc += g[i * hw + s] * px[i * hw + s];
                                   dg[i] += acc;
                               });
                           } else {
                               par_for(c, [&](int64_t cc) {
                                   double acc = 0.0;
                                   for (int64_t b = 0; b < nb; ++b)
                                       for (int64_t s = 0; s < hw; ++s)
                                           acc += g[(b * c + cc) * hw + s] * px[(b * c + cc) * hw + s];
                                   dg[cc] += acc;
                               });
                           }
                       }
                   });
}

Var add_channel_bias(const Var& x, const Var& bias) {
    int64_t nb, c, hw;
    bool per_batch;
    channel_gate_shapes(x.value(), bias.value(), nb, c, hw, per_batch);
    Tensor out(x.value().shape());
    const double* px = x.value().data();
    const double* pb = bias.value().data();
    double* po = out.data();
    par_for(nb * c, [&](int64_t i) {
        double bv = per_batch ? pb[i] : pb[i % c];
        for (int64_t s = 0; s < hw; ++s) po[i * hw + s] = px[i * hw + s] + bv;
    });
    return make_op(std::move(out), {x.node(), bias.node()},
                   [nb, c, hw, per_batch](Node& self) {
                       Node* Xn = self.parents[0].get();
                       Node* Bn = self.parents[1].get();
                       const double* g = self.grad.data();
                       if (Xn->requires_grad) {
                           Xn->ensure_grad();
                           axpy(Xn->grad, g, nb * c * hw);
                       }
                       if (Bn->requires_grad) {
                           Bn->ensure_grad();
                           double* db = Bn->grad.data();
                           if (per_batch) {
                               par_for(nb * c, [&](int64_t i) {
                                   double acc = 0.0;
                                   for (int64_t s = 0; s < hw; ++s) acc += g[i * hw + s];
                                   db[i] += acc;
                               });
                           } else {
                               par_for(c, [&](int64_t cc) {
                                   double acc = 0.0;
                                   for (int64_t b = 0; b < nb; ++b)
                                       for (int64_t s = 0; s < hw; ++s) acc += g[(b * c + cc) * hw + s];
                                   db[cc] += acc;
                               });
                           }
                       }
                   });
}

// ---------------- losses ----------------

Var mse_loss(const Var& pred, const Tensor& target) {
    const Tensor& P = pred.value();
    check(P.same_shape(target), ErrorCode::ShapeMismatch, "mse_loss: shape mismatch");
    int64_t n = P.size();
    double acc = 0.0;
    const double* pp = P.data();
    const double* pt = target.data();
    for (int64_t i = 0; i < n; ++i) {
        double d = pp[i] - pt[i];
        acc += d * d;
    }
    Tensor out({1});
    out[0] = acc / static_cast<double>(n);
    Tensor pv = P, tv = target;
    return make_op(std::move(out), {pred.node()}, [n, pv, tv](Node& self) {
        Node* Pn = self.parents[0].get();
        Pn->ensure_grad();
        double g = self.grad[0] * 2.0 / static_cast<double>(n);
        double* dp = Pn->grad.data();
        const double* pp = pv.data();
        const double* pt = tv.data();
        par_for(n, [&](int64_t i) { dp[i] += g * (pp[i] - pt[i]); });
    });
}

Var rel_l2_loss(const Var& pred, const Tensor& ref) {
    const Tensor& P = pred.value();
    check(P.same_shape(ref), ErrorCode::ShapeMismatch, "rel_l2_loss: shape mismatch");
    check(P.ndim() >= 1, ErrorCode::ShapeMismatch, "rel_l2_loss: rank");
    int64_t nb = P.shape(0);
    int64_t per = P.size() / nb;
    std::vector<double> err(static_cast<size_t>(nb)), den(static_cast<size_t>(nb));
    const double* pp = P.data();
    const double* pr = ref.data();
    double total = 0.0;
    for (int64_t b = 0; b < nb; ++b) {
        double num = 0.0, dd = 0.0;
        for (int64_t i = 0; i < per; ++i) {
            double d = pp[b * per + i] - pr[b * per + i];
            num += d * d;
            dd += pr[b * per + i] * pr[b * per + i];
        }
        check(dd > 0.0, ErrorCode::NumericError, "rel_l2_loss: reference is all-zero");
        err[static_cast<size_t>(b)] = std::sqrt(num / dd);
        den[static_cast<size_t>(b)] = dd;
        total += err[static_cast<size_t>(b)];
    }
    Tensor out({1});
    out[0] = total / static_cast<double>(nb);
    Tensor pv = P, rv = ref;
    return make_op(std::move(out), {pred.node()}, [nb, per, pv, rv, err, den](Node& self) {
        Node* Pn = self.parents[0].get();
        Pn->ensure_grad();
        double g = self.grad[0] / static_cast<double>(nb);
        double* dp = Pn->grad.data();
        const double* pp = pv.data();
        const double* pr = rv.data();
        par_for(nb, [&](int64_t b) {
            double e = std::max(err[static_cast<size_t>(b)], 1e-30);
            double scale = g / (e * den[static_cast<size_t>(b)]);
            for (int64_t i = 0; i < per; ++i)
                dp[b * per + i] += scale * (pp[b * per + i] - pr[b * per + i]);
        });
    });
}

} // namespace lns::ag
