#include "led/tape.hpp"

#include <algorithm>
#include <cmath>

#include "led/errors.hpp"

namespace led {

void Tape::backward(VarId loss) {
    auto& ln = nodes_[static_cast<std::size_t>(loss)];
    if (!ln.value.is_scalar()) {
        throw ContractError("backward: loss must be scalar, got shape " + ln.value.shape_str());
    }
    for (auto& n : nodes_) n.grad = Array::zeros_like(n.value);
    nodes_[static_cast<std::size_t>(loss)].grad[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        if (nodes_[i].backward) nodes_[i].backward(*this);
    }
}

namespace {

// Appends a node whose backward closure knows its own id.
template <class F>
VarId emit(Tape& t, Array out, F&& bw) {
    VarId id = static_cast<VarId>(t.node_count());
    return t.push(std::move(out), [id, bw = std::forward<F>(bw)](Tape& tp) { bw(tp, id); });
}

void require_2d(const Array& a, const char* op) {
    if (a.ndim() != 2) throw ShapeError(std::string(op) + ": expected 2-d array, got " + a.shape_str());
}

}  // namespace

VarId add(Tape& t, VarId a, VarId b) {
    require_same_shape(t.val(a), t.val(b), "add");
    Array out = t.val(a);
    const double* pb = t.val(b).data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += pb[i];
    return emit(t, std::move(out), [a, b](Tape& tp, VarId self) {
        const Array& g = tp.grad(self);
        double* ga = tp.grad(a).data();
        double* gb = tp.grad(b).data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
    });
}

VarId sub(Tape& t, VarId a, VarId b) {
    require_same_shape(t.val(a), t.val(b), "sub");
    Array out = t.val(a);
    const double* pb = t.val(b).data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= pb[i];
    return emit(t, std::move(out), [a, b](Tape& tp, VarId self) {
        const Array& g = tp.grad(self);
        double* ga = tp.grad(a).data();
        double* gb = tp.grad(b).data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] -= g[i];
        }
    });
}

VarId mul(Tape& t, VarId a, VarId b) {
    require_same_shape(t.val(a), t.val(b), "mul");
    Array out = t.val(a);
    const double* pb = t.val(b).data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= pb[i];
    return emit(t, std::move(out), [a, b](Tape& tp, VarId self) {
        const Array& g = tp.grad(self);
        const Array& va = tp.val(a);
        const Array& vb = tp.val(b);
        double* ga = tp.grad(a).data();
        double* gb = tp.grad(b).data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * vb[i];
            gb[i] += g[i] * va[i];
        }
    });
}

VarId div_elem(Tape& t, VarId a, VarId b) {
    require_same_shape(t.val(a), t.val(b), "div");
    Array out = t.val(a);
    const double* pb = t.val(b).data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= pb[i];
    return emit(t, std::move(out), [a, b](Tape& tp, VarId self) {
        const Array& g = tp.grad(self);
        const Array& va = tp.val(a);
        const Array& vb = tp.val(b);
        double* ga = tp.grad(a).data();
        double* gb = tp.grad(b).data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] / vb[i];
            gb[i] -= g[i] * va[i] / (vb[i] * vb[i]);
        }
    });
}

VarId scale(Tape& t, VarId a, double c) {
    Array out = t.val(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
    return emit(t, std::move(out), [a, c](Tape& tp, VarId self) {
        const Array& g = tp.grad(self);
        double* ga = tp.grad(a).data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    });
}

VarId neg(Tape& t, VarId a) { return scale(t, a, -1.0); }

VarId matmul(Tape& t, VarId a, VarId b) {
    const Array& va = t.val(a);
    const Array& vb = t.val(b);
    require_2d(va, "matmul");
    require_2d(vb, "matmul");
    if (va.dim(1) != vb.dim(0)) {
        throw ShapeError("matmul: inner dimensions disagree, " + va.shape_str() + " vs " +
                         vb.shape_str());
    }
    const int m = va.dim(0), k = va.dim(1), n = vb.dim(1);
    Array out({m, n});
    // ikj ordering keeps the inner loop contiguous in both B and the output.
    for (int i = 0; i < m; ++i) {
        const double* arow = va.data() + static_cast<std::size_t>(i) * k;
        double* orow = out.data() + static_cast<std::size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const double* brow = vb.data() + static_cast<std::size_t>(kk) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return emit(t, std::move(out), [a, b, m, k, n](Tape& tp, VarId self) {
        const Array& g = tp.grad(self);
        const Array& va2 = tp.val(a);
        const Array& vb2 = tp.val(b);
        Array& ga = tp.grad(a);
        Array& gb = tp.grad(b);
        // ga += g * B^T
        for (int i = 0; i < m; ++i) {
            const double* grow = g.data() + static_cast<std::size_t>(i) * n;
            double* garow = ga.data() + static_cast<std::size_t>(i) * k;
            for (int kk = 0; kk < k; ++kk) {
                const double* brow = vb2.data() + static_cast<std::size_t>(kk) * n;
                double acc = 0.0;
                for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                garow[kk] += acc;
            }
        }
        // gb += A^T * g
        for (int kk = 0; kk < k; ++kk) {
            double* gbrow = gb.data() + static_cast<std::size_t>(kk) * n;
            for (int i = 0; i < m; ++i) {
                const double av = va2.data()[static_cast<std::size_t>(i) * k + kk];
                const double* grow = g.data() + static_cast<std::size_t>(i) * n;
                for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
            }
        }
    });
}

VarId transpose(Tape& t, VarId a) {
    const Array& va = t.val(a);
    require_2d(va, "transpose");
    const int m = va.dim(0), n = va.dim(1);
    Array out({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(j, i) = va.at(i, j);
    return emit(t, std::move(out), [a, m, n](Tape& tp, VarId self) {
        const Array& g = tp.grad(self);
        Array& ga = tp.grad(a);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) ga.at(i, j) += g.at(j, i);
    });
}

namespace {

VarId affine_impl(Tape& t, VarId w, VarId x, VarId b, bool has_bias) {
    const Array& vw = t.val(w);
    const Array& vx = t.val(x);
    require_2d(vw, "affine");
    if (vx.ndim() != 1) throw ShapeError("affine: x must be 1-d, got " + vx.shape_str());
    const int o = vw.dim(0), in = vw.dim(1);
    if (in != vx.dim(0)) {
        throw ShapeError("affine: W " + vw.shape_str() + " does not accept x " + vx.shape_str());
    }
    if (has_bias && (t.val(b).ndim() != 1 || t.val(b).dim(0) != o)) {
        throw ShapeError("affine: bias " + t.val(b).shape_str() + " does not match W " +
                         vw.shape_str());
    }
    Array out({o});
    for (int i = 0; i < o; ++i) {
        const double* wrow = vw.data() + static_cast<std::size_t>(i) * in;
        double acc = has_bias ? t.val(b)[static_cast<std::size_t>(i)] : 0.0;
        for (int j = 0; j < in; ++j) acc += wrow[j] * vx[static_cast<std::size_t>(j)];
        out[static_cast<std::size_t>(i)] = acc;
    }
    return emit(t, std::move(out), [w, x, b, has_bias, o, in](Tape& tp, VarId self) {
        const Array& g = tp.grad(self);
        const Array& vw2 = tp.val(w);
        const Array& vx2 = tp.val(x);
        Array& gw = tp.grad(w);
        Array& gx = tp.grad(x);
        for (int i = 0; i < o; ++i) {
            const double gi = g[static_cast<std::size_t>(i)];
            double* gwrow = gw.data() + static_cast<std::size_t>(i) * in;
            const double* wrow = vw2.data() + static_cast<std::size_t>(i) * in;
            for (int j = 0; j < in; ++j) {
                gwrow[j] += gi * vx2[static_cast<std::size_t>(j)];
                gx[static_cast<std::size_t>(j)] += gi * wrow[j];
            }
        }
        if (has_bias) {
            Array& gb = tp.grad(b);
            for (int i = 0; i < o; ++i) gb[static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(i)];
        }
    });
}

}  // namespace

VarId affine(Tape& t, VarId w, VarId x, VarId b) { return affine_impl(t, w, x, b, true); }
VarId affine(Tape& t, VarId w, VarId x) { return affine_impl(t, w, x, x, false); }

VarId add_rowvec(Tape& t, VarId m, VarId v) {
    const Array& vm = t.val(m);
    const Array& vv = t.val(v);
    require_2d(vm, "add_rowvec");
    if (vv.ndim() != 1 || vv.dim(0) != vm.dim(1)) {
        throw ShapeError("add_rowvec: v " + vv.shape_str() + " does not match rows of " +
                         vm.shape_str());
    }
    const int r = vm.dim(0), n = vm.dim(1);
    Array out = vm;
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) += vv[static_cast<std::size_t>(j)];
    return emit(t, std::move(out), [m, v, r, n](Tape& tp, VarId self) {
        const Array& g = tp.grad(self);
        Array& gm = tp.grad(m);
        Array& gv = tp.grad(v);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < n; ++j) {
                gm.at(i, j) += g.at(i, j);
                gv[static_cast<std::size_t>(j)] += g.at(i, j);
            }
    });
}

VarId mul_scalar(Tape& t, VarId m, VarId s) {
    if (!t.val(s).is_scalar()) {
        throw ShapeError("mul_scalar: scale must be scalar, got " + t.val(s).shape_str());
    }
    const double sv = t.val(s)[0];
    Array out = t.val(m);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= sv;
    return emit(t, std::move(out), [m, s](Tape& tp, VarId self) {
        const Array& g = tp.grad(self);
        const Array& vm = tp.val(m);
        const double sv2 = tp.val(s)[0];
        Array& gm = tp.grad(m);
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            gm[i] += sv2 * g[i];
            acc += g[i] * vm[i];
        }
        tp.grad(s)[0] += acc;
    });
}

namespace {

template <class Fwd, class Bwd>
VarId unary_elemwise(Tape& t, VarId a, Fwd fwd, Bwd bwd_factor_from_out_and_in) {
    Array out = t.val(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(out[i]);
    return emit(t, std::move(out), [a, bwd_factor_from_out_and_in](Tape& tp, VarId self) {
        const Array& g = tp.grad(self);
        const Array& y = tp.val(self);
        const Array& x = tp.val(a);
        Array& ga = tp.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bwd_factor_from_out_and_in(y[i], x[i]);
    });
}

}  // namespace

VarId sigmoid(Tape& t, VarId a) {
    return unary_elemwise(
        t, a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double y, double) { return y * (1.0 - y); });
}

VarId tanh_op(Tape& t, VarId a) {
    return unary_elemwise(
        t, a, [](double x) { return std::tanh(x); }, [](double y, double) { return 1.0 - y * y; });
}

VarId relu(Tape& t, VarId a) {
    return unary_elemwise(
        t, a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double, double x) { return x > 0.0 ? 1.0 : 0.0; });
}

VarId exp_op(Tape& t, VarId a) {
    return unary_elemwise(
        t, a, [](double x) { return std::exp(x); }, [](double y, double) { return y; });
}

VarId log_op(Tape& t, VarId a) {
    return unary_elemwise(
        t, a, [](double x) { return std::log(x); }, [](double, double x) { return 1.0 / x; });
}

namespace {

void softmax_row(const double* x, double* y, int n) {
    double mx = x[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    double z = 0.0;
    for (int i = 0; i < n; ++i) {
        y[i] = std::exp(x[i] - mx);
        z += y[i];
    }
    for (int i = 0; i < n; ++i) y[i] /= z;
}

}  // namespace

VarId softmax(Tape& t, VarId a) {
    const Array& va = t.val(a);
    const int ndim = va.ndim();
    if (ndim != 1 && ndim != 2) {
        throw ShapeError("softmax: expected 1-d or 2-d array, got " + va.shape_str());
    }
    const int rows = ndim == 2 ? va.dim(0) : 1;
    const int n = ndim == 2 ? va.dim(1) : va.dim(0);
    Array out(va.shape());
    for (int r = 0; r < rows; ++r) {
        softmax_row(va.data() + static_cast<std::size_t>(r) * n,
                    out.data() + static_cast<std::size_t>(r) * n, n);
    }
    return emit(t, std::move(out), [a, rows, n](Tape& tp, VarId self) {
        const Array& g = tp.grad(self);
        const Array& y = tp.val(self);
        Array& ga = tp.grad(a);
        for (int r = 0; r < rows; ++r) {
            const double* gr = g.data() + static_cast<std::size_t>(r) * n;
            const double* yr = y.data() + static_cast<std::size_t>(r) * n;
            double* gar = ga.data() + static_cast<std::size_t>(r) * n;
            double dot = 0.0;
            for (int i = 0; i < n; ++i) dot += gr[i] * yr[i];
            for (int i = 0; i < n; ++i) gar[i] += yr[i] * (gr[i] - dot);
        }
    });
}

VarId sum(Tape& t, VarId a) {
    double acc = 0.0;
    const Array& va = t.val(a);
    for (std::size_t i = 0; i < va.size(); ++i) acc += va[i];
    return emit(t, Array::scalar(acc), [a](Tape& tp, VarId self) {
        const double g = tp.grad(self)[0];
        Array& ga = tp.grad(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
}

VarId frob_norm(Tape& t, VarId a) {
    const Array& va = t.val(a);
    double acc = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) acc += va[i] * va[i];
    const double norm = std::sqrt(acc);
    return emit(t, Array::scalar(norm), [a](Tape& tp, VarId self) {
        const double f = tp.val(self)[0];
        if (f == 0.0) return;  // subgradient 0 at the kink
        const double g = tp.grad(self)[0] / f;
        const Array& x = tp.val(a);
        Array& ga = tp.grad(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * x[i];
    });
}

VarId reshape(Tape& t, VarId a, std::vector<int> shape) {
    Array out = t.val(a).reshaped(std::move(shape));
    return emit(t, std::move(out), [a](Tape& tp, VarId self) {
        const Array& g = tp.grad(self);
        Array& ga = tp.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

VarId concat1d(Tape& t, const std::vector<VarId>& parts) {
    if (parts.empty()) throw ContractError("concat1d: no parts");
    int total = 0;
    for (VarId p : parts) {
        if (t.val(p).ndim() != 1) {
            throw ShapeError("concat1d: expected 1-d parts, got " + t.val(p).shape_str());
        }
        total += t.val(p).dim(0);
    }
    Array out({total});
    std::size_t off = 0;
    for (VarId p : parts) {
        const Array& vp = t.val(p);
        for (std::size_t i = 0; i < vp.size(); ++i) out[off + i] = vp[i];
        off += vp.size();
    }
    return emit(t, std::move(out), [parts](Tape& tp, VarId self) {
        const Array& g = tp.grad(self);
        std::size_t off2 = 0;
        for (VarId p : parts) {
            Array& gp = tp.grad(p);
            for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off2 + i];
            off2 += gp.size();
        }
    });
}

VarId slice1d(Tape& t, VarId a, int i0, int i1) {
    const Array& va = t.val(a);
    if (va.ndim() != 1 || i0 < 0 || i1 > va.dim(0) || i0 >= i1) {
        throw ShapeError("slice1d: bad range on " + va.shape_str());
    }
    Array out({i1 - i0});
    for (int i = i0; i < i1; ++i) out[static_cast<std::size_t>(i - i0)] = va[static_cast<std::size_t>(i)];
    return emit(t, std::move(out), [a, i0](Tape& tp, VarId self) {
        const Array& g = tp.grad(self);
        Array& ga = tp.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[static_cast<std::size_t>(i0) + i] += g[i];
    });
}

VarId row(Tape& t, VarId m, int r) {
    const Array& vm = t.val(m);
    require_2d(vm, "row");
    if (r < 0 || r >= vm.dim(0)) throw ShapeError("row: index out of range on " + vm.shape_str());
    const int n = vm.dim(1);
    Array out({n});
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j)] = vm.at(r, j);
    return emit(t, std::move(out), [m, r, n](Tape& tp, VarId self) {
        const Array& g = tp.grad(self);
        Array& gm = tp.grad(m);
        for (int j = 0; j < n; ++j) gm.at(r, j) += g[static_cast<std::size_t>(j)];
    });
}

VarId col_slice(Tape& t, VarId m, int c0, int c1) {
    const Array& vm = t.val(m);
    require_2d(vm, "col_slice");
    if (c0 < 0 || c1 > vm.dim(1) || c0 >= c1) {
        throw ShapeError("col_slice: bad range on " + vm.shape_str());
    }
    const int r = vm.dim(0), n = c1 - c0;
    Array out({r, n});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) = vm.at(i, c0 + j);
    return emit(t, std::move(out), [m, c0, r, n](Tape& tp, VarId self) {
        const Array& g = tp.grad(self);
        Array& gm = tp.grad(m);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < n; ++j) gm.at(i, c0 + j) += g.at(i, j);
    });
}

VarId stack_rows(Tape& t, const std::vector<VarId>& rows) {
    if (rows.empty()) throw ContractError("stack_rows: no rows");
    const int n = t.val(rows[0]).dim(0);
    for (VarId r : rows) {
        if (t.val(r).ndim() != 1 || t.val(r).dim(0) != n) {
            throw ShapeError("stack_rows: inconsistent row shapes");
        }
    }
    const int k = static_cast<int>(rows.size());
    Array out({k, n});
    for (int i = 0; i < k; ++i) {
        const Array& vr = t.val(rows[static_cast<std::size_t>(i)]);
        for (int j = 0; j < n; ++j) out.at(i, j) = vr[static_cast<std::size_t>(j)];
    }
    return emit(t, std::move(out), [rows, n](Tape& tp, VarId self) {
        const Array& g = tp.grad(self);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            Array& gr = tp.grad(rows[i]);
            for (int j = 0; j < n; ++j) gr[static_cast<std::size_t>(j)] += g.at(static_cast<int>(i), j);
        }
    });
}

VarId conv1d(Tape& t, VarId x, VarId w, VarId b) {
    const Array& vx = t.val(x);
    const Array& vw = t.val(w);
    const Array& vb = t.val(b);
    require_2d(vx, "conv1d");
    if (vw.ndim() != 3) throw ShapeError("conv1d: kernel must be 3-d, got " + vw.shape_str());
    const int tn = vx.dim(0), cin = vx.dim(1);
    const int k = vw.dim(0), cout = vw.dim(2);
    if (k % 2 == 0) throw ConfigError("conv1d: kernel width must be odd, got " + std::to_string(k));
    if (vw.dim(1) != cin) {
        throw ShapeError("conv1d: kernel " + vw.shape_str() + " does not match input " +
                         vx.shape_str());
    }
    if (vb.ndim() != 1 || vb.dim(0) != cout) {
        throw ShapeError("conv1d: bias " + vb.shape_str() + " does not match kernel " +
                         vw.shape_str());
    }
    const int pad = (k - 1) / 2;
    Array out({tn, cout});
    for (int ti = 0; ti < tn; ++ti) {
        for (int o = 0; o < cout; ++o) out.at(ti, o) = vb[static_cast<std::size_t>(o)];
        for (int dt = 0; dt < k; ++dt) {
            const int src = ti + dt - pad;
            if (src < 0 || src >= tn) continue;
            for (int ci = 0; ci < cin; ++ci) {
                const double xv = vx.at(src, ci);
                for (int o = 0; o < cout; ++o) out.at(ti, o) += xv * vw.at(dt, ci, o);
            }
        }
    }
    return emit(t, std::move(out), [x, w, b, tn, cin, k, cout, pad](Tape& tp, VarId self) {
        const Array& g = tp.grad(self);
        const Array& vx2 = tp.val(x);
        const Array& vw2 = tp.val(w);
        Array& gx = tp.grad(x);
        Array& gw = tp.grad(w);
        Array& gb = tp.grad(b);
        for (int ti = 0; ti < tn; ++ti) {
            for (int o = 0; o < cout; ++o) gb[static_cast<std::size_t>(o)] += g.at(ti, o);
            for (int dt = 0; dt < k; ++dt) {
                const int src = ti + dt - pad;
                if (src < 0 || src >= tn) continue;
                for (int ci = 0; ci < cin; ++ci) {
                    double gx_acc = 0.0;
                    for (int o = 0; o < cout; ++o) {
                        gw.at(dt, ci, o) += g.at(ti, o) * vx2.at(src, ci);
                        gx_acc += g.at(ti, o) * vw2.at(dt, ci, o);
                    }
                    gx.at(src, ci) += gx_acc;
                }
            }
        }
    });
}

VarId gru_cell(Tape& t, VarId x, VarId h_prev, const GruParams& p) {
    VarId z = sigmoid(t, add(t, affine(t, p.wz, x, p.bz), affine(t, p.uz, h_prev)));
    VarId r = sigmoid(t, add(t, affine(t, p.wr, x, p.br), affine(t, p.ur, h_prev)));
    VarId hc = tanh_op(t, add(t, affine(t, p.wh, x, p.bh), affine(t, p.uh, mul(t, r, h_prev))));
    // h' = h + z*(hc - h) == (1-z)*h + z*hc
    return add(t, h_prev, mul(t, z, sub(t, hc, h_prev)));
}

}  // namespace led
