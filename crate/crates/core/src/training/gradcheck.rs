use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::Normalizer;
use crate::error::{Error, Result};
use crate::graph::{fusion_graph, AdjacencyMatrix, FusionLayout};
use crate::model::{
    huber_loss, kink_margins, model_forward, prepare_graph, sample_gradient, ModelConfig, ModelParams,
    SparseGraph,
};

/// Node count of the gradient-check problem.
pub const GRADCHECK_NODES: usize = 6;
/// Central-difference step.
const STEP: f64 = 1e-5;
/// Required distance of every rectifier input and Huber error from its kink.
const KINK_MARGIN: f64 = 1e-3;
/// Required gate-scaled gap between the winning and runner-up block in every
/// max-pool.
const POOL_MARGIN: f64 = 1e-4;
/// Denominator floor of the relative error, as a fraction of the largest
/// numeric gradient magnitude. Keeps round-off in the difference quotient
/// of near-zero components from dominating the error.
const REL_FLOOR_FRACTION: f64 = 1e-3;
const MAX_DRAWS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    /// `1e-3` times the largest numeric gradient magnitude.
    pub floor: f64,
    pub worst_parameter: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// Scalar parameters compared.
    pub checked: usize,
    /// Random points drawn until one cleared every kink.
    pub draws: usize,
}

struct Problem {
    graph: SparseGraph<f64>,
    params: ModelParams<f64>,
    x: Vec<f64>,
    target: Vec<f32>,
    normalizer: Normalizer,
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> AdjacencyMatrix {
    let mut e = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                e[i * n + j] = 1.0;
                e[j * n + i] = 1.0;
            }
        }
    }
    AdjacencyMatrix::from_dense(n, e).expect("valid random graph")
}

fn draw(config: &ModelConfig, nodes: usize, rng: &mut ChaCha8Rng) -> Result<Problem> {
    let sg = random_graph(rng, nodes, 0.4);
    let tg = random_graph(rng, nodes, 0.3);
    let fusion = fusion_graph(&sg, &tg, &FusionLayout::default_for(config.window)?)?;
    let graph = prepare_graph(config, &fusion)?;
    let mut params = ModelParams::<f64>::glorot(config, rng.next_u64());
    for t in params.tensors_mut() {
        if t.dims().len() == 1 {
            for v in t.data_mut() {
                *v = rng.random_range(-0.1..0.1);
            }
        }
    }
    let d = config.features;
    let x = (0..config.history * nodes * d)
        .map(|_| rng.random_range(-1.5..1.5))
        .collect();
    let target = (0..config.horizon * nodes * d)
        .map(|_| rng.random_range(-3.0f32..4.0))
        .collect();
    let normalizer = Normalizer {
        mean: vec![0.5; d],
        std: vec![2.0; d],
    };
    Ok(Problem {
        graph,
        params,
        x,
        target,
        normalizer,
    })
}

fn loss(config: &ModelConfig, p: &Problem, params: &ModelParams<f64>) -> Result<f64> {
    let y = model_forward(config, params, &p.graph, &p.x)?;
    let d = config.features;
    let denorm: Vec<f64> = y
        .iter()
        .enumerate()
        .map(|(i, &v)| v * p.normalizer.std[i % d] as f64 + p.normalizer.mean[i % d] as f64)
        .collect();
    let target: Vec<f64> = p.target.iter().map(|&v| v as f64).collect();
    Ok(huber_loss(&denorm, &target, config.delta))
}

/// Compares analytic gradients with central differences at 64-bit precision
/// on a random problem with [`GRADCHECK_NODES`] nodes.
pub fn gradient_check(config: &ModelConfig, seed: u64) -> Result<GradCheckReport> {
    gradient_check_with(config, GRADCHECK_NODES, seed, |_| {})
}

/// As [`gradient_check`], with `tamper` applied to the analytic gradients
/// before comparison.
pub fn gradient_check_with(
    config: &ModelConfig,
    nodes: usize,
    seed: u64,
    tamper: impl Fn(&mut ModelParams<f64>),
) -> Result<GradCheckReport> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = 0;
    let mut problem = loop {
        draws += 1;
        let p = draw(config, nodes, &mut rng)?;
        let (kink, pool) = kink_margins(config, &p.params, &p.graph, &p.x, &p.target, &p.normalizer)?;
        if kink >= KINK_MARGIN && pool >= POOL_MARGIN {
            break p;
        }
        if draws == MAX_DRAWS {
            return Err(Error::Usage(format!(
                "no kink-free point found in {MAX_DRAWS} draws"
            )));
        }
    };
    let mut analytic = ModelParams::zeros(config);
    sample_gradient(
        config,
        &problem.params,
        &problem.graph,
        &problem.x,
        &problem.target,
        None,
        &problem.normalizer,
        &mut analytic,
    )?;
    tamper(&mut analytic);
    let names: Vec<String> = analytic.named().into_iter().map(|(n, _)| n).collect();
    let grads: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.data().to_vec()).collect();
    let mut params = std::mem::replace(&mut problem.params, ModelParams::zeros(config));
    let mut numeric: Vec<Vec<f64>> = Vec::with_capacity(grads.len());
    for (ti, g) in grads.iter().enumerate() {
        let mut row = Vec::with_capacity(g.len());
        for j in 0..g.len() {
            let orig = params.tensors()[ti].data()[j];
            params.tensors_mut()[ti].data_mut()[j] = orig + STEP;
            let up = loss(config, &problem, &params)?;
            params.tensors_mut()[ti].data_mut()[j] = orig - STEP;
            let down = loss(config, &problem, &params)?;
            params.tensors_mut()[ti].data_mut()[j] = orig;
            row.push((up - down) / (2.0 * STEP));
        }
        numeric.push(row);
    }
    let scale = numeric.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (REL_FLOOR_FRACTION * scale).max(f64::MIN_POSITIVE);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        floor,
        worst_parameter: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
        draws,
    };
    for (ti, name) in names.iter().enumerate() {
        for (j, (&a, &n)) in grads[ti].iter().zip(&numeric[ti]).enumerate() {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(floor);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst_parameter.is_empty() {
                report.max_rel_error = rel;
                report.worst_parameter = name.clone();
                report.worst_index = j;
                report.analytic = a;
                report.numeric = n;
            }
        }
    }
    Ok(report)
}
