//! Building blocks of the network, each with a cached forward pass and the
//! matching backward pass.
//!
//! Hidden states are `steps x nodes x channels`, row-major. A window of `K`
//! steps is therefore a contiguous `(K * N) x C` matrix whose row `t * N + l`
//! holds node `l` at window step `t`, which is the row order of the fusion
//! graph.

use super::params::{ConvParams, GluParams, LayerParams};
use super::sparse::SparseGraph;
use super::tensor::{add_bias, col_sum_acc, matmul, matmul_nt_acc, matmul_tn_acc, sigmoid, Scalar, Tensor};

/// Per-step, per-node affine map `d -> C` followed by a rectifier.
pub fn input_head<T: Scalar>(x: &[T], weight: &Tensor<T>, bias: &Tensor<T>) -> Vec<T> {
    let (d, c) = (weight.dims()[0], weight.dims()[1]);
    let rows = x.len() / d;
    let mut out = vec![T::zero(); rows * c];
    matmul(x, weight.data(), &mut out, rows, d, c);
    add_bias(&mut out, bias.data());
    out.iter_mut().for_each(|v| *v = v.max(T::zero()));
    out
}

pub(crate) fn input_head_backward<T: Scalar>(
    x: &[T],
    out: &[T],
    dout: &[T],
    dweight: &mut Tensor<T>,
    dbias: &mut Tensor<T>,
) {
    let (d, c) = (dweight.dims()[0], dweight.dims()[1]);
    let dpre: Vec<T> = out
        .iter()
        .zip(dout)
        .map(|(&o, &g)| if o > T::zero() { g } else { T::zero() })
        .collect();
    matmul_tn_acc(x, &dpre, dweight.data_mut(), x.len() / d, d, c);
    col_sum_acc(&dpre, dbias.data_mut());
}

/// One gated graph multiplication, without the residual:
/// `(A h W1 + b1) * sigmoid(A h W2 + b2)`.
pub fn glu_block<T: Scalar>(graph: &SparseGraph<T>, h: &[T], params: &GluParams<T>) -> Vec<T> {
    let c = params.b1.len();
    let cache = glu_forward(graph, h, params, c);
    cache.u.iter().zip(&cache.s).map(|(&u, &s)| u * s).collect()
}

pub(crate) struct GluCache<T> {
    a: Vec<T>,
    u: Vec<T>,
    s: Vec<T>,
}

fn glu_forward<T: Scalar>(graph: &SparseGraph<T>, h: &[T], g: &GluParams<T>, c: usize) -> GluCache<T> {
    let rows = graph.size();
    let mut a = vec![T::zero(); rows * c];
    graph.mul(h, c, &mut a);
    let mut u = vec![T::zero(); rows * c];
    matmul(&a, g.w1.data(), &mut u, rows, c, c);
    add_bias(&mut u, g.b1.data());
    let mut s = vec![T::zero(); rows * c];
    matmul(&a, g.w2.data(), &mut s, rows, c, c);
    add_bias(&mut s, g.b2.data());
    s.iter_mut().for_each(|v| *v = sigmoid(*v));
    GluCache { a, u, s }
}

pub(crate) struct ModuleCache<T> {
    blocks: Vec<GluCache<T>>,
    argmax: Vec<u8>,
}

/// Window module: `L` residual gated blocks, elementwise max over their
/// outputs, and the middle step `floor(K/2)` of the result. `window` is
/// `(K * N) x C`; the return value is `N x C`.
pub fn stfgn_module<T: Scalar>(
    graph: &SparseGraph<T>,
    window: &[T],
    blocks: &[GluParams<T>],
    window_len: usize,
) -> Vec<T> {
    module_forward(graph, window, blocks, window_len).0
}

pub(crate) fn module_forward<T: Scalar>(
    graph: &SparseGraph<T>,
    window: &[T],
    blocks: &[GluParams<T>],
    k: usize,
) -> (Vec<T>, ModuleCache<T>) {
    let rows = graph.size();
    let n = rows / k;
    let c = window.len() / rows;
    let mid = (k / 2) * n * c..(k / 2 + 1) * n * c;
    let mut z = window.to_vec();
    let mut pooled = vec![T::neg_infinity(); n * c];
    let mut argmax = vec![0u8; n * c];
    let mut caches = Vec::with_capacity(blocks.len());
    for (b, g) in blocks.iter().enumerate() {
        let cache = glu_forward(graph, &z, g, c);
        for ((zv, &u), &s) in z.iter_mut().zip(&cache.u).zip(&cache.s) {
            *zv += u * s;
        }
        for (i, &v) in z[mid.clone()].iter().enumerate() {
            if v > pooled[i] {
                pooled[i] = v;
                argmax[i] = b as u8;
            }
        }
        caches.push(cache);
    }
    (
        pooled,
        ModuleCache {
            blocks: caches,
            argmax,
        },
    )
}

/// Returns the gradient w.r.t. the window and accumulates block gradients.
pub(crate) fn module_backward<T: Scalar>(
    graph: &SparseGraph<T>,
    blocks: &[GluParams<T>],
    grads: &mut [GluParams<T>],
    cache: &ModuleCache<T>,
    dout: &[T],
    k: usize,
) -> Vec<T> {
    let rows = graph.size();
    let n = rows / k;
    let c = dout.len() / n;
    let mid_off = (k / 2) * n * c;
    let mut carry = vec![T::zero(); rows * c];
    let mut du = vec![T::zero(); rows * c];
    let mut dg = vec![T::zero(); rows * c];
    let mut da = vec![T::zero(); rows * c];
    for b in (0..blocks.len()).rev() {
        for (i, (&which, &g)) in cache.argmax.iter().zip(dout).enumerate() {
            if which as usize == b {
                carry[mid_off + i] += g;
            }
        }
        let bc = &cache.blocks[b];
        for i in 0..rows * c {
            let s = bc.s[i];
            du[i] = carry[i] * s;
            dg[i] = carry[i] * bc.u[i] * s * (T::one() - s);
        }
        let gr = &mut grads[b];
        matmul_tn_acc(&bc.a, &du, gr.w1.data_mut(), rows, c, c);
        col_sum_acc(&du, gr.b1.data_mut());
        matmul_tn_acc(&bc.a, &dg, gr.w2.data_mut(), rows, c, c);
        col_sum_acc(&dg, gr.b2.data_mut());
        da.iter_mut().for_each(|v| *v = T::zero());
        matmul_nt_acc(&du, blocks[b].w1.data(), &mut da, rows, c, c);
        matmul_nt_acc(&dg, blocks[b].w2.data(), &mut da, rows, c, c);
        graph.mul_transpose_acc(&da, c, &mut carry);
    }
    carry
}

pub(crate) struct ConvCache<T> {
    th: Vec<T>,
    sg: Vec<T>,
}

/// Gated dilated convolution along time, kernel 2:
/// `tanh(x[t] T1_0 + x[t+dil] T1_1 + a) * sigmoid(x[t] T2_0 + x[t+dil] T2_1 + b)`.
/// `x` is `steps x N x C`; the output has `steps - dilation` steps.
pub fn gated_conv<T: Scalar>(
    x: &[T],
    conv: &ConvParams<T>,
    steps: usize,
    nodes: usize,
    dilation: usize,
) -> Vec<T> {
    let (y, _) = conv_forward(x, conv, steps, nodes, dilation);
    y
}

pub(crate) fn conv_forward<T: Scalar>(
    x: &[T],
    conv: &ConvParams<T>,
    steps: usize,
    nodes: usize,
    dilation: usize,
) -> (Vec<T>, ConvCache<T>) {
    assert!(
        steps > dilation,
        "gated convolution needs more steps than its dilation"
    );
    let c = conv.a.len();
    let rows = (steps - dilation) * nodes;
    let x0 = &x[..rows * c];
    let x1 = &x[dilation * nodes * c..];
    let branch = |theta: &Tensor<T>, bias: &Tensor<T>| {
        let mut out = vec![T::zero(); rows * c];
        matmul(x0, &theta.data()[..c * c], &mut out, rows, c, c);
        super::tensor::matmul_acc(x1, &theta.data()[c * c..], &mut out, rows, c, c);
        add_bias(&mut out, bias.data());
        out
    };
    let mut th = branch(&conv.theta1, &conv.a);
    th.iter_mut().for_each(|v| *v = v.tanh());
    let mut sg = branch(&conv.theta2, &conv.b);
    sg.iter_mut().for_each(|v| *v = sigmoid(*v));
    let y = th.iter().zip(&sg).map(|(&t, &s)| t * s).collect();
    (y, ConvCache { th, sg })
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<T: Scalar>(
    x: &[T],
    conv: &ConvParams<T>,
    grads: &mut ConvParams<T>,
    cache: &ConvCache<T>,
    dy: &[T],
    dx: &mut [T],
    nodes: usize,
    dilation: usize,
) {
    let c = conv.a.len();
    let rows = dy.len() / c;
    let split = dilation * nodes * c;
    let dp: Vec<T> = (0..dy.len())
        .map(|i| dy[i] * (T::one() - cache.th[i] * cache.th[i]) * cache.sg[i])
        .collect();
    let dq: Vec<T> = (0..dy.len())
        .map(|i| dy[i] * cache.th[i] * cache.sg[i] * (T::one() - cache.sg[i]))
        .collect();
    let x0 = &x[..rows * c];
    let x1 = &x[split..];
    for (dbranch, theta, dtheta, dbias) in [
        (&dp, &conv.theta1, &mut grads.theta1, &mut grads.a),
        (&dq, &conv.theta2, &mut grads.theta2, &mut grads.b),
    ] {
        let (g0, g1) = dtheta.data_mut().split_at_mut(c * c);
        matmul_tn_acc(x0, dbranch, g0, rows, c, c);
        matmul_tn_acc(x1, dbranch, g1, rows, c, c);
        col_sum_acc(dbranch, dbias.data_mut());
        matmul_nt_acc(dbranch, &theta.data()[..c * c], &mut dx[..rows * c], rows, c, c);
        matmul_nt_acc(dbranch, &theta.data()[c * c..], &mut dx[split..], rows, c, c);
    }
}

pub(crate) struct LayerCache<T> {
    input: Vec<T>,
    steps: usize,
    modules: Vec<ModuleCache<T>>,
    conv: Option<ConvCache<T>>,
}

/// One layer: a window module at every start position, outputs concatenated
/// along time, plus the gated convolution when present. `h` is
/// `steps x N x C`; the result has `steps - K + 1` steps.
pub fn layer_forward<T: Scalar>(
    graph: &SparseGraph<T>,
    h: &[T],
    layer: &LayerParams<T>,
    steps: usize,
    window_len: usize,
) -> Vec<T> {
    layer_forward_cached(graph, h, layer, steps, window_len).0
}

pub(crate) fn layer_forward_cached<T: Scalar>(
    graph: &SparseGraph<T>,
    h: &[T],
    layer: &LayerParams<T>,
    steps: usize,
    k: usize,
) -> (Vec<T>, LayerCache<T>) {
    assert!(steps >= k, "layer input shorter than the window");
    let n = graph.size() / k;
    let c = h.len() / (steps * n);
    let step = n * c;
    let windows = steps - k + 1;
    let mut out = Vec::with_capacity(windows * step);
    let mut modules = Vec::with_capacity(windows);
    for w in 0..windows {
        let (o, cache) = module_forward(graph, &h[w * step..(w + k) * step], layer.window(w), k);
        out.extend_from_slice(&o);
        modules.push(cache);
    }
    let conv = layer.conv.as_ref().map(|conv| {
        let (y, cache) = conv_forward(h, conv, steps, n, k - 1);
        for (o, v) in out.iter_mut().zip(y) {
            *o += v;
        }
        cache
    });
    (
        out,
        LayerCache {
            input: h.to_vec(),
            steps,
            modules,
            conv,
        },
    )
}

pub(crate) fn layer_backward<T: Scalar>(
    graph: &SparseGraph<T>,
    layer: &LayerParams<T>,
    grads: &mut LayerParams<T>,
    cache: &LayerCache<T>,
    dout: &[T],
    k: usize,
) -> Vec<T> {
    let n = graph.size() / k;
    let step = dout.len() / (cache.steps - k + 1);
    let mut dh = vec![T::zero(); cache.steps * step];
    if let (Some(conv), Some(cc)) = (&layer.conv, &cache.conv) {
        let gconv = grads.conv.as_mut().expect("gradient layout matches parameters");
        conv_backward(&cache.input, conv, gconv, cc, dout, &mut dh, n, k - 1);
    }
    for (w, mc) in cache.modules.iter().enumerate() {
        let dwin = module_backward(
            graph,
            layer.window(w),
            grads.window_mut(w),
            mc,
            &dout[w * step..(w + 1) * step],
            k,
        );
        for (d, v) in dh[w * step..(w + k) * step].iter_mut().zip(dwin) {
            *d += v;
        }
    }
    dh
}

pub(crate) struct HeadCache<T> {
    pub(crate) flat: Vec<T>,
    hidden: Vec<T>,
}

/// Output head: flatten `steps x C` per node, affine to `out_hidden`,
/// rectifier, affine to `horizon * d`. Returns `horizon x N x d`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn head_forward<T: Scalar>(
    h: &[T],
    w1: &Tensor<T>,
    b1: &Tensor<T>,
    w2: &Tensor<T>,
    b2: &Tensor<T>,
    steps: usize,
    nodes: usize,
    features: usize,
) -> (Vec<T>, HeadCache<T>) {
    let c = h.len() / (steps * nodes);
    let f = steps * c;
    let hidden_dim = w1.dims()[1];
    let out_dim = w2.dims()[1];
    let horizon = out_dim / features;
    let mut flat = vec![T::zero(); nodes * f];
    for t in 0..steps {
        for l in 0..nodes {
            flat[l * f + t * c..l * f + (t + 1) * c]
                .copy_from_slice(&h[(t * nodes + l) * c..(t * nodes + l + 1) * c]);
        }
    }
    let mut hidden = vec![T::zero(); nodes * hidden_dim];
    matmul(&flat, w1.data(), &mut hidden, nodes, f, hidden_dim);
    add_bias(&mut hidden, b1.data());
    hidden.iter_mut().for_each(|v| *v = v.max(T::zero()));
    let mut y = vec![T::zero(); nodes * out_dim];
    matmul(&hidden, w2.data(), &mut y, nodes, hidden_dim, out_dim);
    add_bias(&mut y, b2.data());
    let mut pred = vec![T::zero(); out_dim * nodes];
    for l in 0..nodes {
        for p in 0..horizon {
            for k in 0..features {
                pred[(p * nodes + l) * features + k] = y[l * out_dim + p * features + k];
            }
        }
    }
    (pred, HeadCache { flat, hidden })
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn head_backward<T: Scalar>(
    w1: &Tensor<T>,
    w2: &Tensor<T>,
    grads: [&mut Tensor<T>; 4],
    cache: &HeadCache<T>,
    dpred: &[T],
    steps: usize,
    nodes: usize,
    features: usize,
) -> Vec<T> {
    let [dw1, db1, dw2, db2] = grads;
    let hidden_dim = w1.dims()[1];
    let f = w1.dims()[0];
    let c = f / steps;
    let out_dim = w2.dims()[1];
    let horizon = out_dim / features;
    let mut dy = vec![T::zero(); nodes * out_dim];
    for l in 0..nodes {
        for p in 0..horizon {
            for k in 0..features {
                dy[l * out_dim + p * features + k] = dpred[(p * nodes + l) * features + k];
            }
        }
    }
    matmul_tn_acc(&cache.hidden, &dy, dw2.data_mut(), nodes, hidden_dim, out_dim);
    col_sum_acc(&dy, db2.data_mut());
    let mut dhidden = vec![T::zero(); nodes * hidden_dim];
    matmul_nt_acc(&dy, w2.data(), &mut dhidden, nodes, out_dim, hidden_dim);
    for (g, &v) in dhidden.iter_mut().zip(&cache.hidden) {
        if v <= T::zero() {
            *g = T::zero();
        }
    }
    matmul_tn_acc(&cache.flat, &dhidden, dw1.data_mut(), nodes, f, hidden_dim);
    col_sum_acc(&dhidden, db1.data_mut());
    let mut dflat = vec![T::zero(); nodes * f];
    matmul_nt_acc(&dhidden, w1.data(), &mut dflat, nodes, hidden_dim, f);
    let mut dh = vec![T::zero(); steps * nodes * c];
    for t in 0..steps {
        for l in 0..nodes {
            dh[(t * nodes + l) * c..(t * nodes + l + 1) * c]
                .copy_from_slice(&dflat[l * f + t * c..l * f + (t + 1) * c]);
        }
    }
    dh
}

/// Smallest max-pool decision margin of a module: for each pooled element,
/// the summed block updates separating the two largest candidates, divided
/// by the largest gate value among those blocks. Dividing by the gate keeps
/// saturated gates, whose updates vanish below rounding, from counting as
/// ties.
pub(crate) fn module_pool_margin<T: Scalar>(
    graph: &SparseGraph<T>,
    window: &[T],
    blocks: &[GluParams<T>],
    k: usize,
) -> f64 {
    if blocks.len() < 2 {
        return f64::INFINITY;
    }
    let rows = graph.size();
    let n = rows / k;
    let c = window.len() / rows;
    let mid = (k / 2) * n * c..(k / 2 + 1) * n * c;
    let mut z = window.to_vec();
    let mut values = Vec::with_capacity(blocks.len());
    let mut updates = Vec::with_capacity(blocks.len());
    let mut gates = Vec::with_capacity(blocks.len());
    for g in blocks {
        let cache = glu_forward(graph, &z, g, c);
        for ((zv, &u), &s) in z.iter_mut().zip(&cache.u).zip(&cache.s) {
            *zv += u * s;
        }
        values.push(
            z[mid.clone()]
                .iter()
                .map(|v| v.to_f64_lossy())
                .collect::<Vec<_>>(),
        );
        updates.push(
            cache.u[mid.clone()]
                .iter()
                .zip(&cache.s[mid.clone()])
                .map(|(&u, &s)| (u * s).to_f64_lossy())
                .collect::<Vec<_>>(),
        );
        gates.push(
            cache.s[mid.clone()]
                .iter()
                .map(|v| v.to_f64_lossy())
                .collect::<Vec<_>>(),
        );
    }
    let mut margin = f64::INFINITY;
    for i in 0..n * c {
        let mut order: Vec<usize> = (0..blocks.len()).collect();
        order.sort_by(|&a, &b| values[b][i].total_cmp(&values[a][i]));
        let (lo, hi) = (order[0].min(order[1]), order[0].max(order[1]));
        let gap: f64 = (lo + 1..=hi).map(|b| updates[b][i]).sum();
        let gate = (lo + 1..=hi).map(|b| gates[b][i]).fold(0.0, f64::max);
        margin = margin.min(gap.abs() / gate);
    }
    margin
}
