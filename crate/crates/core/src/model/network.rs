//! Full forward pass, the training objective and its gradient.

use super::config::ModelConfig;
use super::loss::{huber, huber_grad};
use super::ops::module_pool_margin;
use super::ops::{
    head_backward, head_forward, input_head, input_head_backward, layer_backward, layer_forward_cached,
    HeadCache, LayerCache,
};
use super::params::ModelParams;
use super::sparse::SparseGraph;
use super::tensor::{add_bias, matmul, Scalar};
use crate::data::Normalizer;
use crate::error::{Error, Result};
use crate::graph::AdjacencyMatrix;

/// Converts a fusion graph into the network's sparse form, applying the
/// configured normalization.
pub fn prepare_graph<T: Scalar>(config: &ModelConfig, a: &AdjacencyMatrix) -> Result<SparseGraph<T>> {
    if a.size() == 0 || !a.size().is_multiple_of(config.window) {
        return Err(Error::Usage(format!(
            "fusion graph of size {} is not a multiple of window {}",
            a.size(),
            config.window
        )));
    }
    Ok(SparseGraph::from_adjacency(a, config.normalize_adj))
}

/// Node count implied by the graph, after checking the input length.
fn check_input<T: Scalar>(config: &ModelConfig, graph: &SparseGraph<T>, len: usize) -> Result<usize> {
    config.validate()?;
    let n = graph.size() / config.window;
    if n * config.window != graph.size() {
        return Err(Error::Usage(format!(
            "graph size {} is not a multiple of window {}",
            graph.size(),
            config.window
        )));
    }
    let expected = config.history * n * config.features;
    if len != expected {
        return Err(Error::Usage(format!(
            "input has {len} values, expected history {} x nodes {n} x features {} = {expected}",
            config.history, config.features
        )));
    }
    Ok(n)
}

pub(crate) struct ForwardCache<T> {
    x: Vec<T>,
    head_in: Vec<T>,
    layers: Vec<LayerCache<T>>,
    head: HeadCache<T>,
}

/// Normalized-scale prediction `horizon x N x d` for one input window
/// `history x N x d`.
pub fn model_forward<T: Scalar>(
    config: &ModelConfig,
    params: &ModelParams<T>,
    graph: &SparseGraph<T>,
    x: &[T],
) -> Result<Vec<T>> {
    Ok(forward_cached(config, params, graph, x)?.0)
}

pub(crate) fn forward_cached<T: Scalar>(
    config: &ModelConfig,
    params: &ModelParams<T>,
    graph: &SparseGraph<T>,
    x: &[T],
) -> Result<(Vec<T>, ForwardCache<T>)> {
    let n = check_input(config, graph, x.len())?;
    let head_in = input_head(x, &params.input_w, &params.input_b);
    let mut h = head_in.clone();
    let mut layers = Vec::with_capacity(config.layers);
    for (l, layer) in params.layers.iter().enumerate() {
        let (out, cache) = layer_forward_cached(graph, &h, layer, config.layer_input_len(l), config.window);
        layers.push(cache);
        h = out;
    }
    let (pred, head) = head_forward(
        &h,
        &params.out_w1,
        &params.out_b1,
        &params.out_w2,
        &params.out_b2,
        config.final_len(),
        n,
        config.features,
    );
    Ok((
        pred,
        ForwardCache {
            x: x.to_vec(),
            head_in,
            layers,
            head,
        },
    ))
}

/// Accumulates into `grads` the gradient of a scalar whose derivative with
/// respect to the prediction is `dpred`.
pub(crate) fn backward<T: Scalar>(
    config: &ModelConfig,
    params: &ModelParams<T>,
    graph: &SparseGraph<T>,
    cache: &ForwardCache<T>,
    dpred: &[T],
    grads: &mut ModelParams<T>,
) {
    let n = graph.size() / config.window;
    let mut dh = head_backward(
        &params.out_w1,
        &params.out_w2,
        [
            &mut grads.out_w1,
            &mut grads.out_b1,
            &mut grads.out_w2,
            &mut grads.out_b2,
        ],
        &cache.head,
        dpred,
        config.final_len(),
        n,
        config.features,
    );
    for l in (0..params.layers.len()).rev() {
        dh = layer_backward(
            graph,
            &params.layers[l],
            &mut grads.layers[l],
            &cache.layers[l],
            &dh,
            config.window,
        );
    }
    input_head_backward(
        &cache.x,
        &cache.head_in,
        &dh,
        &mut grads.input_w,
        &mut grads.input_b,
    );
}

/// Original-scale prediction for one normalized input window.
pub fn predict<T: Scalar>(
    config: &ModelConfig,
    params: &ModelParams<T>,
    graph: &SparseGraph<T>,
    x: &[f32],
    normalizer: &Normalizer,
) -> Result<Vec<f32>> {
    let xt: Vec<T> = x.iter().map(|&v| T::of(v as f64)).collect();
    let y = model_forward(config, params, graph, &xt)?;
    let d = config.features;
    Ok(y.iter()
        .enumerate()
        .map(|(i, v)| normalizer.denormalize(i % d, v.to_f64_lossy() as f32))
        .collect())
}

/// Huber loss of one sample on the original scale, averaged over observed
/// target elements, with its gradient accumulated into `grads`.
#[allow(clippy::too_many_arguments)]
pub fn sample_gradient<T: Scalar>(
    config: &ModelConfig,
    params: &ModelParams<T>,
    graph: &SparseGraph<T>,
    x: &[T],
    target: &[f32],
    mask: Option<&[bool]>,
    normalizer: &Normalizer,
    grads: &mut ModelParams<T>,
) -> Result<T> {
    let (y, cache) = forward_cached(config, params, graph, x)?;
    if target.len() != y.len() {
        return Err(Error::Usage(format!(
            "target has {} values, prediction has {}",
            target.len(),
            y.len()
        )));
    }
    let d = config.features;
    let delta = T::of(config.delta);
    let observed = |i: usize| mask.is_none_or(|m| m[i]);
    let count = (0..y.len()).filter(|&i| observed(i)).count();
    if count == 0 {
        return Ok(T::zero());
    }
    let scale = T::one() / T::of(count as f64);
    let mut loss = T::zero();
    let mut dpred = vec![T::zero(); y.len()];
    for (i, (&yi, &ti)) in y.iter().zip(target).enumerate() {
        if !observed(i) {
            continue;
        }
        let std = T::of(normalizer.std[i % d] as f64);
        let mean = T::of(normalizer.mean[i % d] as f64);
        let e = yi * std + mean - T::of(ti as f64);
        loss += huber(e, delta);
        dpred[i] = huber_grad(e, delta) * std * scale;
    }
    backward(config, params, graph, &cache, &dpred, grads);
    Ok(loss * scale)
}

/// Smallest distance of any rectifier input, Huber error magnitude or
/// max-pool winner gap from its kink, in that order of the returned tuple:
/// `(rectifier_and_huber, pool)`.
pub(crate) fn kink_margins<T: Scalar>(
    config: &ModelConfig,
    params: &ModelParams<T>,
    graph: &SparseGraph<T>,
    x: &[T],
    target: &[f32],
    normalizer: &Normalizer,
) -> Result<(f64, f64)> {
    let n = check_input(config, graph, x.len())?;
    let c = config.channels;
    let mut margin = f64::INFINITY;
    let mut pre = vec![T::zero(); x.len() / config.features * c];
    matmul(
        x,
        params.input_w.data(),
        &mut pre,
        x.len() / config.features,
        config.features,
        c,
    );
    add_bias(&mut pre, params.input_b.data());
    for v in &pre {
        margin = margin.min(v.to_f64_lossy().abs());
    }
    let mut pool = f64::INFINITY;
    let mut h = input_head(x, &params.input_w, &params.input_b);
    for (l, layer) in params.layers.iter().enumerate() {
        let steps = config.layer_input_len(l);
        let step = n * c;
        for w in 0..config.windows_in_layer(l) {
            let window = &h[w * step..(w + config.window) * step];
            pool = pool.min(module_pool_margin(graph, window, layer.window(w), config.window));
        }
        h = layer_forward_cached(graph, &h, layer, steps, config.window).0;
    }
    let (y, head) = head_forward(
        &h,
        &params.out_w1,
        &params.out_b1,
        &params.out_w2,
        &params.out_b2,
        config.final_len(),
        n,
        config.features,
    );
    let hidden = config.out_hidden;
    let mut pre = vec![T::zero(); n * hidden];
    matmul(
        &head.flat,
        params.out_w1.data(),
        &mut pre,
        n,
        config.final_len() * c,
        hidden,
    );
    add_bias(&mut pre, params.out_b1.data());
    for v in &pre {
        margin = margin.min(v.to_f64_lossy().abs());
    }
    let d = config.features;
    for (i, (&yi, &ti)) in y.iter().zip(target).enumerate() {
        let e = yi.to_f64_lossy() * normalizer.std[i % d] as f64 + normalizer.mean[i % d] as f64 - ti as f64;
        margin = margin.min((e.abs() - config.delta).abs());
    }
    Ok((margin, pool))
}
