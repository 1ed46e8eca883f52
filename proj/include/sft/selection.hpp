#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "sft/graph.hpp"
#include "sft/network.hpp"
#include "sft/parallel.hpp"
#include "sft/tensor.hpp"

// Top-down selection: a parameter-free walk from a class one-hot signal down
// to the input layer. At every layer each active gating unit runs three
// stages over its receptive-field contributions (hidden activity times kernel
// weight): (1) adaptive pruning keeps the smallest descending-value prefix of
// positive contributions reaching a zeta fraction of the positive mass,
// (2) survivors are grouped into spatially connected components and the
// best-scoring group is kept, (3) the group is normalized to sum one and the
// parent's gating value is distributed proportionally.
//
// Every tie breaks to the lowest index and parents are visited in flat
// row-major order, so the pass is a pure function of its inputs.

namespace sft {

struct SelectionParams {
    float zeta = 0.9f;        // cumulative-contribution fraction, (0,1]
    float lambda_mix = 0.5f;  // group score: size weight vs activity weight
    int connectivity = 8;     // 4 or 8

    void validate() const {
        if (!(zeta > 0.0f && zeta <= 1.0f))
            throw std::invalid_argument("selection: zeta must be in (0,1]");
        if (!(lambda_mix >= 0.0f && lambda_mix <= 1.0f))
            throw std::invalid_argument("selection: lambda must be in [0,1]");
        if (connectivity != 4 && connectivity != 8)
            throw std::invalid_argument("selection: connectivity must be 4 or 8");
    }
};

// Inclusive pixel box.
struct Box {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    std::int64_t area() const {
        return static_cast<std::int64_t>(x1 - x0 + 1) * (y1 - y0 + 1);
    }
    bool operator==(const Box&) const = default;
};

template <class T>
Tensor4<T> init_signal(int cls, int K) {
    if (cls < 0 || cls >= K)
        throw std::invalid_argument("init_signal: class " + std::to_string(cls) +
                                    " out of range [0," + std::to_string(K) + ")");
    Tensor4<T> d(1, K, 1, 1);
    d.data[cls] = T(1);
    return d;
}

namespace td {

// One receptive-field contribution of an active parent.
template <class T>
struct Entry {
    T value;
    std::int32_t order;  // enumeration index, ascending tie-break key
    std::int32_t child;  // flat (c,y,x) index in the lower layer
    std::int16_t iy, ix; // child site (spatial grid)
};

// Reusable per-sample scratch space.
template <class T>
struct Workspace {
    std::vector<Entry<T>> entries;
    std::vector<Entry<T>> survivors;
    std::vector<std::int32_t> grid;       // local site grid -> component label
    std::vector<std::int32_t> site_stack;
};

// Stage 1 on `entries` (all contributions of one parent, enumeration order):
// sorts the positive subset descending (ties to lower enumeration index) and
// truncates to the smallest prefix whose sum reaches zeta * total positive
// mass. Returns survivors in descending-value order.
template <class T>
void stage1_prune(const std::vector<Entry<T>>& entries, T zeta,
                  std::vector<Entry<T>>& survivors) {
    survivors.clear();
    T total_pos(0);
    for (const auto& e : entries) {
        if (e.value > T(0)) {
            survivors.push_back(e);
            total_pos += e.value;
        }
    }
    if (survivors.empty()) return;
    std::sort(survivors.begin(), survivors.end(), [](const Entry<T>& a, const Entry<T>& b) {
        if (a.value != b.value) return a.value > b.value;
        return a.order < b.order;
    });
    const T threshold = zeta * total_pos;
    T cum(0);
    std::size_t keep = survivors.size();
    for (std::size_t i = 0; i < survivors.size(); ++i) {
        cum += survivors[i].value;
        if (cum >= threshold) {
            keep = i + 1;
            break;
        }
    }
    survivors.resize(keep);
}

// Stage 2: spatial connected components over survivor sites (channels
// unioned), scored lambda*size-share + (1-lambda)*activity-share; keeps the
// argmax component's entries (score ties -> component holding the
// lexicographically smallest site). Survivor order is preserved.
template <class T>
void stage2_group_select(std::vector<Entry<T>>& survivors, const SelectionParams& params,
                         Workspace<T>& ws) {
    if (survivors.empty()) return;
    int miny = survivors[0].iy, maxy = survivors[0].iy;
    int minx = survivors[0].ix, maxx = survivors[0].ix;
    for (const auto& e : survivors) {
        miny = std::min<int>(miny, e.iy);
        maxy = std::max<int>(maxy, e.iy);
        minx = std::min<int>(minx, e.ix);
        maxx = std::max<int>(maxx, e.ix);
    }
    const int gh = maxy - miny + 1, gw = maxx - minx + 1;
    ws.grid.assign(static_cast<std::size_t>(gh) * gw, -1);
    auto cell = [&](int y, int x) -> std::int32_t& {
        return ws.grid[static_cast<std::size_t>(y - miny) * gw + (x - minx)];
    };
    for (const auto& e : survivors) cell(e.iy, e.ix) = 0;  // occupied, unlabeled

    // label components over occupied cells, scanning row-major so component
    // ids are ordered by their lexicographically smallest site
    int ncomp = 0;
    for (int y = miny; y <= maxy; ++y) {
        for (int x = minx; x <= maxx; ++x) {
            if (cell(y, x) != 0) continue;  // empty (-1) or already labeled
            const std::int32_t label = ++ncomp;
            ws.site_stack.clear();
            cell(y, x) = label;
            ws.site_stack.push_back((y - miny) * gw + (x - minx));
            while (!ws.site_stack.empty()) {
                const int s = ws.site_stack.back();
                ws.site_stack.pop_back();
                const int sy = miny + s / gw, sx = minx + s % gw;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dy == 0 && dx == 0) continue;
                        if (params.connectivity == 4 && dy != 0 && dx != 0) continue;
                        const int ny = sy + dy, nx = sx + dx;
                        if (ny < miny || ny > maxy || nx < minx || nx > maxx) continue;
                        if (cell(ny, nx) == 0) {
                            cell(ny, nx) = label;
                            ws.site_stack.push_back((ny - miny) * gw + (nx - minx));
                        }
                    }
                }
            }
        }
    }
    if (ncomp <= 1) return;  // single group: everything survives

    // score components; sums accumulate in survivor (descending-value) order
    std::vector<int> comp_sites(ncomp + 1, 0);
    std::vector<T> comp_act(ncomp + 1, T(0));
    int total_sites = 0;
    T total_act(0);
    for (int y = miny; y <= maxy; ++y)
        for (int x = minx; x <= maxx; ++x)
            if (cell(y, x) > 0) {
                ++comp_sites[cell(y, x)];
                ++total_sites;
            }
    for (const auto& e : survivors) {
        comp_act[cell(e.iy, e.ix)] += e.value;
        total_act += e.value;
    }
    int best = 1;
    T best_score(-1);
    for (int c = 1; c <= ncomp; ++c) {
        const T score = T(params.lambda_mix) * static_cast<T>(comp_sites[c]) / static_cast<T>(total_sites) +
                        T(1 - params.lambda_mix) * comp_act[c] / total_act;
        // strict >: ties keep the earlier label, which owns the
        // lexicographically smallest site by construction
        if (score > best_score) {
            best_score = score;
            best = c;
        }
    }
    std::size_t w = 0;
    for (std::size_t i = 0; i < survivors.size(); ++i)
        if (cell(survivors[i].iy, survivors[i].ix) == best) survivors[w++] = survivors[i];
    survivors.resize(w);
}

// Stage 3: distribute parent_gate over the selected entries proportionally to
// their values; increments accumulate across parents.
template <class T>
void stage3_normalize_propagate(const std::vector<Entry<T>>& selected, T parent_gate,
                                T* child_gating) {
    T sum(0);
    for (const auto& e : selected) sum += e.value;
    for (const auto& e : selected) child_gating[e.child] += parent_gate * (e.value / sum);
}

}  // namespace td

// TD step through a convolution, single sample. g_upper: (OC,OH,OW) flat;
// h_lower: (IC,IH,IW) flat; returns gating increments in g_lower.
template <class T>
void td_layer_conv(const T* g_upper, int oc_n, int oh, int ow, const T* h_lower,
                   int ic_n, int ih, int iw, const Tensor4<T>& weight, int stride,
                   int pad, const SelectionParams& params, T* g_lower,
                   td::Workspace<T>& ws) {
    const int kh = weight.h(), kw = weight.w();
    for (int oc = 0; oc < oc_n; ++oc) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const T gate = g_upper[(oc * oh + oy) * ow + ox];
                if (!(gate > T(0))) continue;
                ws.entries.clear();
                std::int32_t order = 0;
                for (int ic = 0; ic < ic_n; ++ic) {
                    for (int ky = 0; ky < kh; ++ky) {
                        const int iy = oy * stride - pad + ky;
                        for (int kx = 0; kx < kw; ++kx, ++order) {
                            const int ix = ox * stride - pad + kx;
                            if (iy < 0 || iy >= ih || ix < 0 || ix >= iw) continue;
                            const T v = h_lower[(ic * ih + iy) * iw + ix] *
                                        weight.data[((oc * ic_n + ic) * kh + ky) * kw + kx];
                            if (v > T(0))
                                ws.entries.push_back({v, order,
                                                      (ic * ih + iy) * iw + ix,
                                                      static_cast<std::int16_t>(iy),
                                                      static_cast<std::int16_t>(ix)});
                        }
                    }
                }
                td::stage1_prune(ws.entries, T(params.zeta), ws.survivors);
                if (ws.survivors.empty()) continue;
                td::stage2_group_select(ws.survivors, params, ws);
                td::stage3_normalize_propagate(ws.survivors, gate, g_lower);
            }
        }
    }
}

// TD step through a fully connected layer: the receptive field is the whole
// input, there is no spatial grid, so grouping is skipped and the stage-1
// survivors form one group.
template <class T>
void td_layer_fc(const T* g_upper, int of_n, const T* h_lower, int f_n,
                 const Tensor4<T>& weight, const SelectionParams& params,
                 T* g_lower, td::Workspace<T>& ws) {
    for (int o = 0; o < of_n; ++o) {
        const T gate = g_upper[o];
        if (!(gate > T(0))) continue;
        ws.entries.clear();
        for (int f = 0; f < f_n; ++f) {
            const T v = h_lower[f] * weight.data[static_cast<std::size_t>(o) * f_n + f];
            if (v > T(0)) ws.entries.push_back({v, f, f, 0, 0});
        }
        td::stage1_prune(ws.entries, T(params.zeta), ws.survivors);
        if (ws.survivors.empty()) continue;
        td::stage3_normalize_propagate(ws.survivors, gate, g_lower);
    }
}

// TD step through max pooling: each parent's gate routes to its recorded
// window winner.
template <class T>
void td_layer_pool(const T* g_upper, std::int64_t upper_n,
                   const std::int32_t* argmax, T* g_lower) {
    for (std::int64_t u = 0; u < upper_n; ++u)
        if (g_upper[u] > T(0)) g_lower[argmax[u]] += g_upper[u];
}

// TD step through ReLU: gating passes where the pre-activation is positive
// and is dropped elsewhere (the only mass-losing rule besides empty
// selections).
template <class T>
void td_layer_relu(const T* g_upper, const T* h_lower, std::int64_t n, T* g_lower) {
    for (std::int64_t i = 0; i < n; ++i)
        g_lower[i] = h_lower[i] > T(0) ? g_upper[i] : T(0);
}

// Full TD pass for one sample of a recorded forward tape. d is the top
// initialization signal (length K); the result fills gating tensors for every
// boundary of `out` at batch slot b.
template <class T>
void td_pass_sample(const Network<T>& net, const Tape<T>& tape, int b,
                    const Tensor4<T>& d, const SelectionParams& params,
                    GatingTrace<T>& out) {
    params.validate();
    if (d.numel() != net.num_classes)
        throw std::invalid_argument("td_pass: init signal length " +
                                    std::to_string(d.numel()) + " != num_classes");
    td::Workspace<T> ws;
    // top boundary gets the init signal
    {
        T* gl = out.g[net.layer_count()].sample_ptr(b);
        std::copy(d.data.begin(), d.data.end(), gl);
    }
    for (int li = net.layer_count() - 1; li >= 0; --li) {
        const LayerDesc& l = net.layers[li];
        const Tensor4<T>& h_lo = tape.h(li);
        const Tensor4<T>& g_up_t = out.g[li + 1];
        const T* g_up = g_up_t.sample_ptr(b);
        T* g_lo = out.g[li].sample_ptr(b);
        std::fill(g_lo, g_lo + out.g[li].sample_size(), T(0));
        switch (l.kind) {
            case LayerKind::Conv:
                td_layer_conv(g_up, g_up_t.c(), g_up_t.h(), g_up_t.w(),
                              h_lo.sample_ptr(b), h_lo.c(), h_lo.h(), h_lo.w(),
                              net.params[l.weight_idx].value, l.stride, l.pad, params,
                              g_lo, ws);
                break;
            case LayerKind::Linear:
                td_layer_fc(g_up, g_up_t.c(), h_lo.sample_ptr(b),
                            static_cast<int>(h_lo.sample_size()),
                            net.params[l.weight_idx].value, params, g_lo, ws);
                break;
            case LayerKind::Pool: {
                const auto& am = tape.pool_argmax(li);
                td_layer_pool(g_up, g_up_t.sample_size(),
                              am.data() + static_cast<std::int64_t>(b) * g_up_t.sample_size(),
                              g_lo);
                break;
            }
            case LayerKind::Relu:
                td_layer_relu(g_up, h_lo.sample_ptr(b), h_lo.sample_size(), g_lo);
                break;
            case LayerKind::Flatten:
                std::copy(g_up, g_up + g_up_t.sample_size(), g_lo);
                break;
        }
    }
}

// Allocates a gating trace shaped like the tape's boundaries.
template <class T>
GatingTrace<T> make_gating_trace(const Network<T>& net, const Tape<T>& tape) {
    GatingTrace<T> gt;
    gt.g.reserve(net.layer_count() + 1);
    for (int i = 0; i <= net.layer_count(); ++i) {
        const auto& s = tape.h(i).shape;
        gt.g.emplace_back(s[0], s[1], s[2], s[3]);
    }
    return gt;
}

// Batch TD pass; samples are independent and run in parallel. classes[b] < 0
// marks a sample to skip (its gating stays zero).
template <class T>
GatingTrace<T> td_pass(const Network<T>& net, const Tape<T>& tape,
                       const std::vector<int>& classes, const SelectionParams& params) {
    const int B = tape.h(0).n();
    if (static_cast<int>(classes.size()) != B)
        throw std::invalid_argument("td_pass: class count does not match batch");
    GatingTrace<T> gt = make_gating_trace(net, tape);
    parallel_for(B, [&](std::int64_t b) {
        if (classes[b] < 0) return;
        const Tensor4<T> d = init_signal<T>(classes[b], net.num_classes);
        td_pass_sample(net, tape, static_cast<int>(b), d, params, gt);
    });
    return gt;
}

// Tight inclusive box around nonzero input-layer gating for sample b; empty
// gating yields nullopt (scored as a localization miss).
template <class T>
std::optional<Box> extract_bbox(const Tensor4<T>& g0, int b) {
    const int C = g0.c(), H = g0.h(), W = g0.w();
    Box box{W, H, -1, -1};
    const T* g = g0.sample_ptr(b);
    for (int c = 0; c < C; ++c) {
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                if (g[(c * H + y) * W + x] > T(0)) {
                    box.x0 = std::min(box.x0, x);
                    box.y0 = std::min(box.y0, y);
                    box.x1 = std::max(box.x1, x);
                    box.y1 = std::max(box.y1, y);
                }
            }
        }
    }
    if (box.x1 < 0) return std::nullopt;
    return box;
}

}  // namespace sft
