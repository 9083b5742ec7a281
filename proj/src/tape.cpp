#include "transfuse/tape.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>

namespace transfuse {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;

MatMap as_mat(Tensor& t, int r, int c) { return MatMap(t.data.data(), r, c); }
CMatMap as_mat(const Tensor& t, int r, int c) { return CMatMap(t.data.data(), r, c); }

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void im2col(const double* x, int ci, int h, int w, int kh, int kw, int pad, int ho, int wo,
            double* col) {
    for (int c = 0; c < ci; ++c) {
        for (int dy = 0; dy < kh; ++dy) {
            for (int dx = 0; dx < kw; ++dx) {
                double* dst = col + static_cast<std::size_t>((c * kh + dy) * kw + dx) *
                                        (static_cast<std::size_t>(ho) * wo);
                for (int oy = 0; oy < ho; ++oy) {
                    const int sy = oy + dy - pad;
                    double* drow = dst + static_cast<std::size_t>(oy) * wo;
                    if (sy < 0 || sy >= h) {
                        std::memset(drow, 0, sizeof(double) * static_cast<std::size_t>(wo));
                        continue;
                    }
                    const double* srow = x + (static_cast<std::size_t>(c) * h + sy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int sx = ox + dx - pad;
                        drow[ox] = (sx < 0 || sx >= w) ? 0.0 : srow[sx];
                    }
                }
            }
        }
    }
}

void col2im_add(const double* col, int ci, int h, int w, int kh, int kw, int pad, int ho, int wo,
                double* x) {
    for (int c = 0; c < ci; ++c) {
        for (int dy = 0; dy < kh; ++dy) {
            for (int dx = 0; dx < kw; ++dx) {
                const double* src = col + static_cast<std::size_t>((c * kh + dy) * kw + dx) *
                                              (static_cast<std::size_t>(ho) * wo);
                for (int oy = 0; oy < ho; ++oy) {
                    const int sy = oy + dy - pad;
                    if (sy < 0 || sy >= h) continue;
                    const double* srow = src + static_cast<std::size_t>(oy) * wo;
                    double* drow = x + (static_cast<std::size_t>(c) * h + sy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int sx = ox + dx - pad;
                        if (sx >= 0 && sx < w) drow[sx] += srow[ox];
                    }
                }
            }
        }
    }
}

// Valid separable filter with a symmetric kernel; out is [h-2r, w-2r].
void separable_valid(const double* x, int h, int w, const std::vector<double>& k, double* out) {
    const int taps = static_cast<int>(k.size());
    const int r = (taps - 1) / 2;
    const int wo = w - 2 * r;
    const int ho = h - 2 * r;
    std::vector<double> tmp(static_cast<std::size_t>(h) * wo);
    for (int y = 0; y < h; ++y) {
        const double* row = x + static_cast<std::size_t>(y) * w;
        double* trow = tmp.data() + static_cast<std::size_t>(y) * wo;
        for (int ox = 0; ox < wo; ++ox) {
            double acc = 0.0;
            for (int t = 0; t < taps; ++t) acc += k[static_cast<std::size_t>(t)] * row[ox + t];
            trow[ox] = acc;
        }
    }
    for (int oy = 0; oy < ho; ++oy) {
        double* orow = out + static_cast<std::size_t>(oy) * wo;
        for (int ox = 0; ox < wo; ++ox) {
            double acc = 0.0;
            for (int t = 0; t < taps; ++t)
                acc += k[static_cast<std::size_t>(t)] *
                       tmp[static_cast<std::size_t>(oy + t) * wo + ox];
            orow[ox] = acc;
        }
    }
}

}  // namespace

Tape::Var Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&)> back) {
    nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, std::move(back)});
    return static_cast<Var>(nodes_.size()) - 1;
}

Tape::Var Tape::leaf(Tensor value, bool requires_grad) {
    return push(std::move(value), requires_grad, nullptr);
}

void Tape::backward(Var root) {
    if (val(root).numel() != 1) throw ShapeError("backward: root must be scalar");
    for (Node& n : nodes_) n.grad = Tensor(n.value.shape);
    nodes_[static_cast<std::size_t>(root)].grad[0] = 1.0;
    for (int i = root; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.requires_grad && n.back) n.back(*this);
    }
}

Tape::Var Tape::add(Var a, Var b) {
    require_same_shape(val(a), val(b), "add");
    Tensor out = val(a);
    const Tensor& vb = val(b);
    for (int i = 0; i < out.numel(); ++i) out[i] += vb[i];
    const Var o = size();
    return push(std::move(out), requires_grad(a) || requires_grad(b), [o, a, b](Tape& t) {
        const Tensor& g = t.grad(o);
        Tensor& ga = t.gmut(a);
        Tensor& gb = t.gmut(b);
        for (int i = 0; i < g.numel(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
    });
}

Tape::Var Tape::sub(Var a, Var b) {
    require_same_shape(val(a), val(b), "sub");
    Tensor out = val(a);
    const Tensor& vb = val(b);
    for (int i = 0; i < out.numel(); ++i) out[i] -= vb[i];
    const Var o = size();
    return push(std::move(out), requires_grad(a) || requires_grad(b), [o, a, b](Tape& t) {
        const Tensor& g = t.grad(o);
        Tensor& ga = t.gmut(a);
        Tensor& gb = t.gmut(b);
        for (int i = 0; i < g.numel(); ++i) {
            ga[i] += g[i];
            gb[i] -= g[i];
        }
    });
}

Tape::Var Tape::mul(Var a, Var b) {
    require_same_shape(val(a), val(b), "mul");
    Tensor out = val(a);
    const Tensor& vb = val(b);
    for (int i = 0; i < out.numel(); ++i) out[i] *= vb[i];
    const Var o = size();
    return push(std::move(out), requires_grad(a) || requires_grad(b), [o, a, b](Tape& t) {
        const Tensor& g = t.grad(o);
        const Tensor& va = t.val(a);
        const Tensor& vb2 = t.val(b);
        Tensor& ga = t.gmut(a);
        Tensor& gb = t.gmut(b);
        for (int i = 0; i < g.numel(); ++i) {
            ga[i] += g[i] * vb2[i];
            gb[i] += g[i] * va[i];
        }
    });
}

Tape::Var Tape::div(Var a, Var b) {
    require_same_shape(val(a), val(b), "div");
    Tensor out = val(a);
    const Tensor& vb = val(b);
    for (int i = 0; i < out.numel(); ++i) out[i] /= vb[i];
    const Var o = size();
    return push(std::move(out), requires_grad(a) || requires_grad(b), [o, a, b](Tape& t) {
        const Tensor& g = t.grad(o);
        const Tensor& va = t.val(a);
        const Tensor& vb2 = t.val(b);
        Tensor& ga = t.gmut(a);
        Tensor& gb = t.gmut(b);
        for (int i = 0; i < g.numel(); ++i) {
            const double inv = 1.0 / vb2[i];
            ga[i] += g[i] * inv;
            gb[i] -= g[i] * va[i] * inv * inv;
        }
    });
}

Tape::Var Tape::scale(Var a, double s) {
    Tensor out = val(a);
    for (double& v : out.data) v *= s;
    const Var o = size();
    return push(std::move(out), requires_grad(a), [o, a, s](Tape& t) {
        const Tensor& g = t.grad(o);
        Tensor& ga = t.gmut(a);
        for (int i = 0; i < g.numel(); ++i) ga[i] += g[i] * s;
    });
}

Tape::Var Tape::add_scalar(Var a, double s) {
    Tensor out = val(a);
    for (double& v : out.data) v += s;
    const Var o = size();
    return push(std::move(out), requires_grad(a), [o, a](Tape& t) {
        const Tensor& g = t.grad(o);
        Tensor& ga = t.gmut(a);
        for (int i = 0; i < g.numel(); ++i) ga[i] += g[i];
    });
}

Tape::Var Tape::matmul(Var a, Var b) {
    const Tensor& va = val(a);
    const Tensor& vb = val(b);
    if (va.ndim() != 2 || vb.ndim() != 2 || va.cols() != vb.rows())
        throw ShapeError("matmul: incompatible shapes");
    const int m = va.rows(), k = va.cols(), n = vb.cols();
    Tensor out({m, n});
    as_mat(out, m, n).noalias() = as_mat(va, m, k) * as_mat(vb, k, n);
    const Var o = size();
    return push(std::move(out), requires_grad(a) || requires_grad(b),
                [o, a, b, m, k, n](Tape& t) {
                    CMatMap g = as_mat(t.grad(o), m, n);
                    CMatMap va2 = as_mat(t.val(a), m, k);
                    CMatMap vb2 = as_mat(t.val(b), k, n);
                    as_mat(t.gmut(a), m, k).noalias() += g * vb2.transpose();
                    as_mat(t.gmut(b), k, n).noalias() += va2.transpose() * g;
                });
}

Tape::Var Tape::add_row_bias(Var a, Var bias) {
    const Tensor& va = val(a);
    const Tensor& vbias = val(bias);
    if (va.ndim() != 2 || vbias.numel() != va.cols())
        throw ShapeError("add_row_bias: shape mismatch");
    const int n = va.rows(), d = va.cols();
    Tensor out = va;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) out.at2(r, c) += vbias[c];
    const Var o = size();
    return push(std::move(out), requires_grad(a) || requires_grad(bias),
                [o, a, bias, n, d](Tape& t) {
                    const Tensor& g = t.grad(o);
                    Tensor& ga = t.gmut(a);
                    Tensor& gb = t.gmut(bias);
                    for (int r = 0; r < n; ++r) {
                        for (int c = 0; c < d; ++c) {
                            const double gv = g.at2(r, c);
                            ga.at2(r, c) += gv;
                            gb[c] += gv;
                        }
                    }
                });
}

Tape::Var Tape::add_row_cycled(Var a, Var table) {
    const Tensor& va = val(a);
    const Tensor& vt = val(table);
    if (va.ndim() != 2 || vt.ndim() != 2 || va.cols() != vt.cols() || va.rows() % vt.rows() != 0)
        throw ShapeError("add_row_cycled: shape mismatch");
    const int n = va.rows(), d = va.cols(), s = vt.rows();
    Tensor out = va;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) out.at2(r, c) += vt.at2(r % s, c);
    const Var o = size();
    return push(std::move(out), requires_grad(a) || requires_grad(table),
                [o, a, table, n, d, s](Tape& t) {
                    const Tensor& g = t.grad(o);
                    Tensor& ga = t.gmut(a);
                    Tensor& gt = t.gmut(table);
                    for (int r = 0; r < n; ++r) {
                        for (int c = 0; c < d; ++c) {
                            const double gv = g.at2(r, c);
                            ga.at2(r, c) += gv;
                            gt.at2(r % s, c) += gv;
                        }
                    }
                });
}

Tape::Var Tape::relu(Var a) {
    Tensor out = val(a);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    const Var o = size();
    return push(std::move(out), requires_grad(a), [o, a](Tape& t) {
        const Tensor& g = t.grad(o);
        const Tensor& x = t.val(a);
        Tensor& ga = t.gmut(a);
        for (int i = 0; i < g.numel(); ++i)
            if (x[i] > 0.0) ga[i] += g[i];
    });
}

Tape::Var Tape::gelu(Var a) {
    Tensor out = val(a);
    for (double& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    const Var o = size();
    return push(std::move(out), requires_grad(a), [o, a](Tape& t) {
        const Tensor& g = t.grad(o);
        const Tensor& x = t.val(a);
        Tensor& ga = t.gmut(a);
        for (int i = 0; i < g.numel(); ++i) {
            const double cdf = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x[i] * x[i]);
            ga[i] += g[i] * (cdf + x[i] * pdf);
        }
    });
}

Tape::Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
    const Tensor& vx = val(x);
    if (vx.ndim() != 2) throw ShapeError("layer_norm: expected 2-d input");
    const int n = vx.rows(), d = vx.cols();
    if (val(gamma).numel() != d || val(beta).numel() != d)
        throw ShapeError("layer_norm: parameter width mismatch");

    auto xhat = std::make_shared<Tensor>(Tensor({n, d}));
    auto istd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n));
    Tensor out({n, d});
    const Tensor& vg = val(gamma);
    const Tensor& vb = val(beta);
    for (int r = 0; r < n; ++r) {
        double mean = 0.0;
        for (int c = 0; c < d; ++c) mean += vx.at2(r, c);
        mean /= d;
        double var = 0.0;
        for (int c = 0; c < d; ++c) {
            const double dv = vx.at2(r, c) - mean;
            var += dv * dv;
        }
        var /= d;
        const double is = 1.0 / std::sqrt(var + eps);
        (*istd)[static_cast<std::size_t>(r)] = is;
        for (int c = 0; c < d; ++c) {
            const double xh = (vx.at2(r, c) - mean) * is;
            xhat->at2(r, c) = xh;
            out.at2(r, c) = vg[c] * xh + vb[c];
        }
    }
    const Var o = size();
    return push(std::move(out), requires_grad(x) || requires_grad(gamma) || requires_grad(beta),
                [o, x, gamma, beta, n, d, xhat, istd](Tape& t) {
                    const Tensor& g = t.grad(o);
                    const Tensor& vg = t.val(gamma);
                    Tensor& gx = t.gmut(x);
                    Tensor& gg = t.gmut(gamma);
                    Tensor& gb = t.gmut(beta);
                    for (int r = 0; r < n; ++r) {
                        double sum_dxhat = 0.0;
                        double sum_dxhat_xhat = 0.0;
                        for (int c = 0; c < d; ++c) {
                            const double gv = g.at2(r, c);
                            const double xh = xhat->at2(r, c);
                            gg[c] += gv * xh;
                            gb[c] += gv;
                            const double dxh = gv * vg[c];
                            sum_dxhat += dxh;
                            sum_dxhat_xhat += dxh * xh;
                        }
                        const double is = (*istd)[static_cast<std::size_t>(r)];
                        for (int c = 0; c < d; ++c) {
                            const double dxh = g.at2(r, c) * vg[c];
                            gx.at2(r, c) += is * (dxh - sum_dxhat / d -
                                                  xhat->at2(r, c) * sum_dxhat_xhat / d);
                        }
                    }
                });
}

Tape::Var Tape::self_attention(Var q, Var k, Var v, int heads, int group_size) {
    const Tensor& vq = val(q);
    const Tensor& vk = val(k);
    const Tensor& vv = val(v);
    if (vq.ndim() != 2 || !vq.same_shape(vk) || !vq.same_shape(vv))
        throw ShapeError("attention: q/k/v must share a 2-d shape");
    const int n = vq.rows(), d = vq.cols();
    if (d % heads != 0) throw ShapeError("attention: dim not divisible by heads");
    if (group_size < 1 || n % group_size != 0)
        throw ShapeError("attention: token count not divisible by group size");
    const int dh = d / heads;
    const int groups = n / group_size;
    const int gs = group_size;
    const double sc = 1.0 / std::sqrt(static_cast<double>(dh));

    auto probs = std::make_shared<Tensor>(Tensor({groups * heads, gs, gs}));
    Tensor out({n, d});
    {
        CMatMap Q = as_mat(vq, n, d);
        CMatMap K = as_mat(vk, n, d);
        CMatMap V = as_mat(vv, n, d);
        MatMap O = as_mat(out, n, d);
        for (int g = 0; g < groups; ++g) {
            for (int h = 0; h < heads; ++h) {
                RowMat S = Q.block(g * gs, h * dh, gs, dh) *
                           K.block(g * gs, h * dh, gs, dh).transpose() * sc;
                for (int r = 0; r < gs; ++r) {
                    const double mx = S.row(r).maxCoeff();
                    double sum = 0.0;
                    for (int c = 0; c < gs; ++c) {
                        const double e = std::exp(S(r, c) - mx);
                        S(r, c) = e;
                        sum += e;
                    }
                    S.row(r) /= sum;
                }
                MatMap A(probs->data.data() +
                             static_cast<std::size_t>(g * heads + h) * gs * gs,
                         gs, gs);
                A = S;
                O.block(g * gs, h * dh, gs, dh).noalias() =
                    S * V.block(g * gs, h * dh, gs, dh);
            }
        }
    }
    if (attn_capture) attn_capture->push_back(*probs);

    const Var o = size();
    return push(std::move(out), requires_grad(q) || requires_grad(k) || requires_grad(v),
                [o, q, k, v, heads, gs, n, d, dh, sc, probs](Tape& t) {
                    const int groups = n / gs;
                    CMatMap G = as_mat(t.grad(o), n, d);
                    CMatMap Q = as_mat(t.val(q), n, d);
                    CMatMap K = as_mat(t.val(k), n, d);
                    CMatMap V = as_mat(t.val(v), n, d);
                    MatMap GQ = as_mat(t.gmut(q), n, d);
                    MatMap GK = as_mat(t.gmut(k), n, d);
                    MatMap GV = as_mat(t.gmut(v), n, d);
                    for (int g = 0; g < groups; ++g) {
                        for (int h = 0; h < heads; ++h) {
                            CMatMap A(probs->data.data() +
                                          static_cast<std::size_t>(g * heads + h) * gs * gs,
                                      gs, gs);
                            auto Gb = G.block(g * gs, h * dh, gs, dh);
                            auto Vb = V.block(g * gs, h * dh, gs, dh);
                            GV.block(g * gs, h * dh, gs, dh).noalias() += A.transpose() * Gb;
                            RowMat dA = Gb * Vb.transpose();
                            RowMat dS(gs, gs);
                            for (int r = 0; r < gs; ++r) {
                                double dot = 0.0;
                                for (int c = 0; c < gs; ++c) dot += dA(r, c) * A(r, c);
                                for (int c = 0; c < gs; ++c)
                                    dS(r, c) = A(r, c) * (dA(r, c) - dot);
                            }
                            GQ.block(g * gs, h * dh, gs, dh).noalias() +=
                                dS * K.block(g * gs, h * dh, gs, dh) * sc;
                            GK.block(g * gs, h * dh, gs, dh).noalias() +=
                                dS.transpose() * Q.block(g * gs, h * dh, gs, dh) * sc;
                        }
                    }
                });
}

Tape::Var Tape::conv2d(Var x, Var w, Var b, int pad) {
    const Tensor& vx = val(x);
    const Tensor& vw = val(w);
    const Tensor& vb = val(b);
    if (vx.ndim() != 3 || vw.ndim() != 4) throw ShapeError("conv2d: bad input rank");
    const int ci = vx.dim(0), h = vx.dim(1), ww = vx.dim(2);
    const int co = vw.dim(0), kh = vw.dim(2), kw = vw.dim(3);
    if (vw.dim(1) != ci) throw ShapeError("conv2d: channel mismatch");
    if (vb.numel() != co) throw ShapeError("conv2d: bias size mismatch");
    const int ho = h + 2 * pad - kh + 1;
    const int wo = ww + 2 * pad - kw + 1;
    if (ho <= 0 || wo <= 0) throw ShapeError("conv2d: kernel larger than padded input");
    const int ckk = ci * kh * kw;
    const int hw = ho * wo;

    Tensor col({ckk, hw});
    im2col(vx.data.data(), ci, h, ww, kh, kw, pad, ho, wo, col.data.data());
    Tensor out({co, ho, wo});
    as_mat(out, co, hw).noalias() = as_mat(vw, co, ckk) * as_mat(col, ckk, hw);
    for (int c = 0; c < co; ++c) {
        double* row = out.data.data() + static_cast<std::size_t>(c) * hw;
        for (int i = 0; i < hw; ++i) row[i] += vb[c];
    }

    const Var o = size();
    return push(std::move(out), requires_grad(x) || requires_grad(w) || requires_grad(b),
                [o, x, w, b, pad, ci, h, ww, co, kh, kw, ho, wo, ckk, hw](Tape& t) {
                    CMatMap G = as_mat(t.grad(o), co, hw);
                    // Recompute the unrolled input instead of caching it.
                    Tensor col({ckk, hw});
                    im2col(t.val(x).data.data(), ci, h, ww, kh, kw, pad, ho, wo,
                           col.data.data());
                    as_mat(t.gmut(w), co, ckk).noalias() += G * as_mat(col, ckk, hw).transpose();
                    Tensor& gb = t.gmut(b);
                    for (int c = 0; c < co; ++c) {
                        const double* row =
                            t.grad(o).data.data() + static_cast<std::size_t>(c) * hw;
                        double acc = 0.0;
                        for (int i = 0; i < hw; ++i) acc += row[i];
                        gb[c] += acc;
                    }
                    Tensor dcol({ckk, hw});
                    as_mat(dcol, ckk, hw).noalias() =
                        as_mat(t.val(w), co, ckk).transpose() * G;
                    col2im_add(dcol.data.data(), ci, h, ww, kh, kw, pad, ho, wo,
                               t.gmut(x).data.data());
                });
}

Tape::Var Tape::gauss_valid(Var x, std::shared_ptr<const std::vector<double>> k1d) {
    const Tensor& vx = val(x);
    if (vx.ndim() != 2) throw ShapeError("gauss_valid: expected 2-d input");
    const int h = vx.rows(), w = vx.cols();
    const int taps = static_cast<int>(k1d->size());
    const int r = (taps - 1) / 2;
    if (h < taps || w < taps) throw ConfigError("gauss_valid: image smaller than window");
    Tensor out({h - 2 * r, w - 2 * r});
    separable_valid(vx.data.data(), h, w, *k1d, out.data.data());
    const Var o = size();
    return push(std::move(out), requires_grad(x), [o, x, h, w, r, k1d](Tape& t) {
        // Adjoint of a valid filter with a symmetric kernel: zero-pad the
        // output gradient by the full kernel extent and filter again.
        const Tensor& g = t.grad(o);
        const int gh = g.rows(), gw = g.cols();
        Tensor padded({gh + 4 * r, gw + 4 * r});
        for (int y = 0; y < gh; ++y)
            std::memcpy(padded.data.data() +
                            static_cast<std::size_t>(y + 2 * r) * (gw + 4 * r) + 2 * r,
                        g.data.data() + static_cast<std::size_t>(y) * gw,
                        sizeof(double) * static_cast<std::size_t>(gw));
        Tensor dx({h, w});
        separable_valid(padded.data.data(), gh + 4 * r, gw + 4 * r, *k1d, dx.data.data());
        Tensor& gx = t.gmut(x);
        for (int i = 0; i < gx.numel(); ++i) gx[i] += dx[i];
    });
}

Tape::Var Tape::reshape(Var a, std::vector<int> s) {
    const Tensor& va = val(a);
    if (Tensor::numel_of(s) != va.numel()) throw ShapeError("reshape: element count mismatch");
    Tensor out;
    out.shape = std::move(s);
    out.data = va.data;
    const Var o = size();
    return push(std::move(out), requires_grad(a), [o, a](Tape& t) {
        const Tensor& g = t.grad(o);
        Tensor& ga = t.gmut(a);
        for (int i = 0; i < g.numel(); ++i) ga[i] += g[i];
    });
}

Tape::Var Tape::concat_channels(Var a, Var b) {
    const Tensor& va = val(a);
    const Tensor& vb = val(b);
    if (va.ndim() != 3 || vb.ndim() != 3 || va.dim(1) != vb.dim(1) || va.dim(2) != vb.dim(2))
        throw ShapeError("concat_channels: spatial mismatch");
    const int c1 = va.dim(0), c2 = vb.dim(0), h = va.dim(1), w = va.dim(2);
    Tensor out({c1 + c2, h, w});
    std::memcpy(out.data.data(), va.data.data(), sizeof(double) * va.data.size());
    std::memcpy(out.data.data() + va.data.size(), vb.data.data(),
                sizeof(double) * vb.data.size());
    const Var o = size();
    return push(std::move(out), requires_grad(a) || requires_grad(b),
                [o, a, b, c1, c2, h, w](Tape& t) {
                    const Tensor& g = t.grad(o);
                    Tensor& ga = t.gmut(a);
                    Tensor& gb = t.gmut(b);
                    const std::size_t na = static_cast<std::size_t>(c1) * h * w;
                    const std::size_t nb = static_cast<std::size_t>(c2) * h * w;
                    for (std::size_t i = 0; i < na; ++i) ga.data[i] += g.data[i];
                    for (std::size_t i = 0; i < nb; ++i) gb.data[i] += g.data[na + i];
                });
}

Tape::Var Tape::fold_tokens(Var tokens, int channels, int patch, int grid_h, int grid_w) {
    const Tensor& vt = val(tokens);
    const int ng = grid_h * grid_w;
    const int tok_len = channels * patch * patch;
    if (vt.ndim() != 2 || vt.rows() != ng || vt.cols() != tok_len)
        throw ShapeError("fold_tokens: token shape mismatch");
    const int h = grid_h * patch;
    const int w = grid_w * patch;
    Tensor out({channels, h, w});
    for (int j = 0; j < ng; ++j) {
        const int gy = j / grid_w, gx = j % grid_w;
        const double* tok = vt.data.data() + static_cast<std::size_t>(j) * tok_len;
        for (int c = 0; c < channels; ++c) {
            for (int py = 0; py < patch; ++py) {
                double* dst = out.data.data() +
                              (static_cast<std::size_t>(c) * h + gy * patch + py) * w +
                              gx * patch;
                const double* src = tok + (static_cast<std::size_t>(c) * patch + py) * patch;
                std::memcpy(dst, src, sizeof(double) * static_cast<std::size_t>(patch));
            }
        }
    }
    const Var o = size();
    return push(std::move(out), requires_grad(tokens),
                [o, tokens, channels, patch, grid_h, grid_w, h, w, tok_len](Tape& t) {
                    const Tensor& g = t.grad(o);
                    Tensor& gt = t.gmut(tokens);
                    const int ng = grid_h * grid_w;
                    for (int j = 0; j < ng; ++j) {
                        const int gy = j / grid_w, gx = j % grid_w;
                        double* tok = gt.data.data() + static_cast<std::size_t>(j) * tok_len;
                        for (int c = 0; c < channels; ++c) {
                            for (int py = 0; py < patch; ++py) {
                                const double* src =
                                    g.data.data() +
                                    (static_cast<std::size_t>(c) * h + gy * patch + py) * w +
                                    gx * patch;
                                double* dst =
                                    tok + (static_cast<std::size_t>(c) * patch + py) * patch;
                                for (int px = 0; px < patch; ++px) dst[px] += src[px];
                            }
                        }
                    }
                });
}

Tape::Var Tape::mean_all(Var a) {
    const Tensor& va = val(a);
    double acc = 0.0;
    for (const double v : va.data) acc += v;
    Tensor out({1});
    out[0] = acc / va.numel();
    const Var o = size();
    return push(std::move(out), requires_grad(a), [o, a](Tape& t) {
        const double g = t.grad(o)[0];
        Tensor& ga = t.gmut(a);
        const double s = g / ga.numel();
        for (double& v : ga.data) v += s;
    });
}

Tape::Var Tape::sum_all(Var a) {
    const Tensor& va = val(a);
    double acc = 0.0;
    for (const double v : va.data) acc += v;
    Tensor out({1});
    out[0] = acc;
    const Var o = size();
    return push(std::move(out), requires_grad(a), [o, a](Tape& t) {
        const double g = t.grad(o)[0];
        Tensor& ga = t.gmut(a);
        for (double& v : ga.data) v += g;
    });
}

Tape::Var Tape::mse_loss(Var a, Var b) {
    require_same_shape(val(a), val(b), "mse_loss");
    const Tensor& va = val(a);
    const Tensor& vb = val(b);
    double acc = 0.0;
    for (int i = 0; i < va.numel(); ++i) {
        const double d = va[i] - vb[i];
        acc += d * d;
    }
    Tensor out({1});
    out[0] = acc / va.numel();
    const Var o = size();
    return push(std::move(out), requires_grad(a) || requires_grad(b), [o, a, b](Tape& t) {
        const double g = t.grad(o)[0];
        const Tensor& va2 = t.val(a);
        const Tensor& vb2 = t.val(b);
        Tensor& ga = t.gmut(a);
        Tensor& gb = t.gmut(b);
        const double s = 2.0 * g / va2.numel();
        for (int i = 0; i < va2.numel(); ++i) {
            const double d = s * (va2[i] - vb2[i]);
            ga[i] += d;
            gb[i] -= d;
        }
    });
}

Tape::Var Tape::tv_sum(Var r, bool normalize) {
    const Tensor& vr = val(r);
    if (vr.ndim() != 2) throw ShapeError("tv_sum: expected 2-d residual");
    const int h = vr.rows(), w = vr.cols();
    double acc = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x + 1 < w; ++x) acc += std::abs(vr.at2(y, x + 1) - vr.at2(y, x));
    for (int y = 0; y + 1 < h; ++y)
        for (int x = 0; x < w; ++x) acc += std::abs(vr.at2(y + 1, x) - vr.at2(y, x));
    const double norm = normalize ? 1.0 / (static_cast<double>(h) * w) : 1.0;
    Tensor out({1});
    out[0] = acc * norm;
    const Var o = size();
    return push(std::move(out), requires_grad(r), [o, r, h, w, norm](Tape& t) {
        const double g = t.grad(o)[0] * norm;
        const Tensor& vr2 = t.val(r);
        Tensor& gr = t.gmut(r);
        auto sgn = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x + 1 < w; ++x) {
                const double s = sgn(vr2.at2(y, x + 1) - vr2.at2(y, x)) * g;
                gr.at2(y, x + 1) += s;
                gr.at2(y, x) -= s;
            }
        }
        for (int y = 0; y + 1 < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double s = sgn(vr2.at2(y + 1, x) - vr2.at2(y, x)) * g;
                gr.at2(y + 1, x) += s;
                gr.at2(y, x) -= s;
            }
        }
    });
}

}  // namespace transfuse
