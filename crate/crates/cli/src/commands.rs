//! Command implementations. Each returns the JSON summary printed as the
//! last line of standard output.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use stfgnn::data::{
    load_signal, synth_traffic, write_binary, write_csv, write_labels, Dataset, SignalFormat, SignalTensor,
};
use stfgnn::eval::{evaluate, EvalReport};
use stfgnn::graph::{
    fusion_graph, load_spatial_graph, sparsity, temporal_graph, AdjacencyMatrix, FusionLayout, SparsityTarget,
};
use stfgnn::model::{load_checkpoint, prepare_graph, ModelConfig};
use stfgnn::similarity::{pairwise_distances, Band};
use stfgnn::training::{gradient_check, train};

use crate::config::{FusionVariant, RunConfig};
use crate::error::{CliError, CliResult};

/// Gradient-check pass threshold.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Names the file in I/O errors raised while reading `path`.
fn reading<T>(path: &Path, r: stfgnn::Result<T>) -> CliResult<T> {
    r.map_err(|e| match e {
        stfgnn::Error::Io(io) => CliError::Data(format!("cannot read {}: {io}", path.display())),
        other => other.into(),
    })
}

fn edge_list_bytes(a: &AdjacencyMatrix) -> Vec<u8> {
    let mut buf = Vec::new();
    a.write_edge_list(&mut buf).expect("writing to memory");
    buf
}

fn report_bytes(r: &EvalReport) -> Vec<u8> {
    let mut buf = Vec::new();
    r.write_csv(&mut buf).expect("writing to memory");
    buf
}

fn metrics_json(r: &EvalReport) -> Value {
    json!({
        "mae": r.overall.mae,
        "mape": r.overall.mape,
        "rmse": r.overall.rmse,
        "samples": r.samples,
    })
}

/// Temporal graph over `range` of `signal` with its selection statistics.
pub struct TemporalGraph {
    pub graph: AdjacencyMatrix,
    pub k_per_node: usize,
    pub sparsity: f64,
}

pub fn temporal_graph_of(
    signal: &SignalTensor,
    range: std::ops::Range<usize>,
    band: usize,
    alpha: f64,
) -> CliResult<TemporalGraph> {
    let target = SparsityTarget::new(alpha)?;
    let series = signal.all_series(range)?;
    let dist = pairwise_distances(&series, Band::Width(band))?;
    let graph = temporal_graph(&dist, target)?;
    Ok(TemporalGraph {
        k_per_node: target.k_per_node(signal.nodes()),
        sparsity: sparsity(&graph),
        graph,
    })
}

fn load_run_signal(cfg: &RunConfig) -> CliResult<SignalTensor> {
    let path = cfg
        .data
        .signal
        .as_ref()
        .ok_or_else(|| CliError::Config("data.signal is required".into()))?;
    let format = cfg
        .data
        .format
        .map(SignalFormat::from)
        .unwrap_or_else(|| SignalFormat::from_path(path));
    reading(path, load_signal(path, format, cfg.model.features))
}

fn layout_for(cfg: &RunConfig) -> CliResult<FusionLayout> {
    let k = cfg.model.window;
    let base = match &cfg.graph.layout {
        Some(blocks) => FusionLayout::new(k, blocks.clone(), cfg.graph.self_loops)?,
        None if cfg.graph.self_loops => FusionLayout::default_for(k)?,
        None => {
            let d = FusionLayout::default_for(k)?;
            let blocks = (0..k * k).map(|i| d.kind(i / k, i % k)).collect();
            FusionLayout::new(k, blocks, false)?
        }
    };
    Ok(match cfg.graph.fusion {
        FusionVariant::Full => base,
        FusionVariant::TemporalOnly => base.temporal_only(),
        FusionVariant::ConnectivityOnly => base.connectivity_only(),
    })
}

/// Dataset, graphs and fusion graph of a run.
pub struct Prepared {
    pub dataset: Dataset,
    pub spatial: AdjacencyMatrix,
    pub temporal: TemporalGraph,
    pub fusion: AdjacencyMatrix,
}

/// Loads the signal, splits and normalizes it, and builds the fusion graph.
/// The temporal graph only sees the training range.
pub fn prepare(cfg: &RunConfig) -> CliResult<Prepared> {
    let signal = load_run_signal(cfg)?;
    if signal.features() != cfg.model.features {
        return Err(CliError::Data(format!(
            "signal has {} features, model expects {}",
            signal.features(),
            cfg.model.features
        )));
    }
    let n = signal.nodes();
    let spatial = match &cfg.graph.spatial {
        Some(p) => reading(
            p,
            load_spatial_graph(p, n, cfg.graph.spatial_directed, cfg.graph.binarize),
        )?,
        None => AdjacencyMatrix::zeros(n),
    };
    let dataset = Dataset::prepare(
        signal,
        cfg.model.history,
        cfg.model.horizon,
        &cfg.data.split,
        cfg.data.normalization,
    )
    .map_err(|e| match e {
        stfgnn::Error::Usage(m) => CliError::Data(m),
        other => other.into(),
    })?;
    let temporal = temporal_graph_of(
        &dataset.raw,
        dataset.train_range(),
        cfg.graph.band_width,
        cfg.graph.alpha,
    )?;
    let spatial_for_fusion = if spatial.is_binary() {
        spatial.clone()
    } else {
        binarized(&spatial)
    };
    let fusion = fusion_graph(&spatial_for_fusion, &temporal.graph, &layout_for(cfg)?)?;
    Ok(Prepared {
        dataset,
        spatial,
        temporal,
        fusion,
    })
}

fn binarized(a: &AdjacencyMatrix) -> AdjacencyMatrix {
    let entries = a
        .entries()
        .iter()
        .map(|&v| if v > 0.0 { 1.0 } else { 0.0 })
        .collect();
    AdjacencyMatrix::from_dense(a.size(), entries).expect("binary copy of a valid graph")
}

pub struct TemporalArgs {
    pub data: PathBuf,
    pub format: Option<SignalFormat>,
    pub features: usize,
    pub band: usize,
    pub alpha: f64,
    pub out: PathBuf,
}

pub fn build_temporal_graph(args: &TemporalArgs) -> CliResult<Value> {
    let started = Instant::now();
    let format = args.format.unwrap_or_else(|| SignalFormat::from_path(&args.data));
    let signal = reading(&args.data, load_signal(&args.data, format, args.features))?;
    let tg = temporal_graph_of(&signal, 0..signal.steps(), args.band, args.alpha)?;
    write_file(&args.out, &edge_list_bytes(&tg.graph))?;
    Ok(json!({
        "command": "build-temporal-graph",
        "nodes": signal.nodes(),
        "k_per_node": tg.k_per_node,
        "edges": tg.graph.nonzero_count() / 2,
        "sparsity": tg.sparsity,
        "band": args.band,
        "out": args.out,
        "seconds": started.elapsed().as_secs_f64(),
    }))
}

pub struct FusionArgs {
    pub spatial: PathBuf,
    pub temporal: PathBuf,
    pub nodes: usize,
    pub window: usize,
    pub fusion: FusionVariant,
    pub out: PathBuf,
}

pub fn build_fusion_graph(args: &FusionArgs) -> CliResult<Value> {
    let sg = reading(
        &args.spatial,
        load_spatial_graph(&args.spatial, args.nodes, false, true),
    )?;
    let tg = reading(
        &args.temporal,
        load_spatial_graph(&args.temporal, args.nodes, false, true),
    )?;
    let cfg = RunConfig {
        model: ModelConfig {
            window: args.window,
            ..ModelConfig::default()
        },
        graph: crate::config::GraphSection {
            fusion: args.fusion,
            ..Default::default()
        },
        ..RunConfig::default()
    };
    let fusion = fusion_graph(&sg, &tg, &layout_for(&cfg)?)?;
    write_file(&args.out, &edge_list_bytes(&fusion))?;
    Ok(json!({
        "command": "build-fusion-graph",
        "size": fusion.size(),
        "nonzeros": fusion.nonzero_count(),
        "symmetric": fusion.is_symmetric(),
        "out": args.out,
    }))
}

fn load_config(path: &Path) -> CliResult<RunConfig> {
    let cfg = RunConfig::load(path)?;
    cfg.validate()?;
    Ok(cfg.resolved())
}

/// Trains from a resolved configuration and writes every artifact into the
/// output directory.
pub fn train_run(cfg: &RunConfig) -> CliResult<Value> {
    let started = Instant::now();
    let out = &cfg.output.directory;
    fs::create_dir_all(out)?;
    write_file(&out.join("effective_config.json"), cfg.to_json().as_bytes())?;
    let prep = prepare(cfg)?;
    write_file(
        &out.join("temporal_graph.csv"),
        &edge_list_bytes(&prep.temporal.graph),
    )?;
    let outcome = train(&cfg.model, &cfg.train, &prep.dataset, &prep.fusion).map_err(|f| {
        let epochs = f.history.len();
        match f.error {
            stfgnn::Error::NonFinite { name } => CliError::Runtime(format!(
                "training diverged after {epochs} epochs: non-finite value in {name}"
            )),
            other => other.into(),
        }
    })?;
    let graph = prepare_graph::<f32>(&cfg.model, &prep.fusion)?;
    let report = evaluate(
        &cfg.model,
        &outcome.best,
        &graph,
        &prep.dataset.test,
        &prep.dataset.normalizer,
        cfg.eval.epsilon_mask,
    )?;
    write_file(&out.join("report.csv"), &report_bytes(&report))?;
    write_file(&out.join("report.txt"), report.summary_text().as_bytes())?;
    let last = outcome.history.epochs.last();
    Ok(json!({
        "command": "train",
        "epochs": outcome.history.len(),
        "best_epoch": outcome.best_epoch,
        "final_train_loss": last.map(|r| r.train_loss),
        "parameters": outcome.best.parameter_count(),
        "k_per_node": prep.temporal.k_per_node,
        "fusion_nonzeros": prep.fusion.nonzero_count(),
        "test": metrics_json(&report),
        "out": out,
        "seconds": started.elapsed().as_secs_f64(),
    }))
}

pub fn train_cmd(config: &Path) -> CliResult<Value> {
    train_run(&load_config(config)?)
}

pub fn evaluate_cmd(config: &Path, checkpoint: &Path) -> CliResult<Value> {
    let cfg = load_config(config)?;
    let ckpt = reading(checkpoint, load_checkpoint(checkpoint))?;
    if ckpt.config.resolved() != cfg.model {
        return Err(CliError::Config(
            "checkpoint model configuration differs from the model section".into(),
        ));
    }
    let prep = prepare(&cfg)?;
    let graph = prepare_graph::<f32>(&cfg.model, &prep.fusion)?;
    let report = evaluate(
        &cfg.model,
        &ckpt.params,
        &graph,
        &prep.dataset.test,
        &prep.dataset.normalizer,
        cfg.eval.epsilon_mask,
    )?;
    let out = &cfg.output.directory;
    write_file(&out.join("eval_report.csv"), &report_bytes(&report))?;
    print!("{}", report.summary_text());
    Ok(json!({
        "command": "evaluate",
        "checkpoint": checkpoint,
        "test": metrics_json(&report),
        "horizon_mae": report.horizons.iter().map(|m| m.mae).collect::<Vec<_>>(),
        "out": out,
    }))
}

pub fn gradcheck_cmd(config: Option<&Path>, seed: u64) -> CliResult<Value> {
    let model = match config {
        Some(p) => load_config(p)?.model,
        None => ModelConfig::tiny(),
    };
    let started = Instant::now();
    let r = gradient_check(&model, seed)?;
    let summary = json!({
        "command": "gradcheck",
        "max_rel_error": r.max_rel_error,
        "worst_parameter": r.worst_parameter,
        "worst_index": r.worst_index,
        "checked": r.checked,
        "passed": r.max_rel_error <= GRADCHECK_TOLERANCE,
        "seconds": started.elapsed().as_secs_f64(),
    });
    if r.max_rel_error > GRADCHECK_TOLERANCE {
        return Err(CliError::Runtime(format!(
            "gradient check failed: max relative error {:e} in {} > {GRADCHECK_TOLERANCE:e}; {summary}",
            r.max_rel_error, r.worst_parameter
        )));
    }
    Ok(summary)
}

pub struct SynthArgs {
    pub nodes: usize,
    pub clusters: usize,
    pub steps: usize,
    pub sigma: f64,
    pub seed: u64,
    pub format: SignalFormat,
    pub out: PathBuf,
}

/// Writes `signal.stfd` (or `signal.csv`), `labels.csv` and `spatial.csv`.
pub fn synth_cmd(args: &SynthArgs) -> CliResult<Value> {
    let data = synth_traffic(args.nodes, args.clusters, args.steps, args.sigma, args.seed)?;
    fs::create_dir_all(&args.out)?;
    let mut signal = Vec::new();
    let name = match args.format {
        SignalFormat::Binary => {
            write_binary(&data.signal, &mut signal)?;
            "signal.stfd"
        }
        SignalFormat::Csv => {
            write_csv(&data.signal, &mut signal)?;
            "signal.csv"
        }
    };
    write_file(&args.out.join(name), &signal)?;
    let mut labels = Vec::new();
    write_labels(&data.labels, &mut labels)?;
    write_file(&args.out.join("labels.csv"), &labels)?;
    write_file(&args.out.join("spatial.csv"), &edge_list_bytes(&data.spatial))?;
    Ok(json!({
        "command": "synth",
        "nodes": args.nodes,
        "clusters": args.clusters,
        "steps": args.steps,
        "sigma": args.sigma,
        "seed": args.seed,
        "signal": args.out.join(name),
    }))
}

/// One ablation variant, named `<layout><K>_sp<percent>_<conv|noconv>` with
/// layout `ST` (spatial and temporal), `T` (temporal only) or `TC`
/// (connectivity only), e.g. `ST4_sp1_conv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variant {
    pub fusion: FusionVariant,
    pub window: usize,
    pub alpha: f64,
    pub gated_conv: bool,
}

impl Variant {
    pub fn parse(name: &str) -> CliResult<Self> {
        let bad = || CliError::Config(format!("malformed variant `{name}`"));
        let parts: Vec<&str> = name.split('_').collect();
        let [graph, sp, conv] = parts.as_slice() else {
            return Err(bad());
        };
        let digits = graph.find(|c: char| c.is_ascii_digit()).ok_or_else(bad)?;
        let fusion = match &graph[..digits] {
            "ST" => FusionVariant::Full,
            "T" => FusionVariant::TemporalOnly,
            "TC" => FusionVariant::ConnectivityOnly,
            _ => return Err(bad()),
        };
        let window: usize = graph[digits..].parse().map_err(|_| bad())?;
        let percent: f64 = sp
            .strip_prefix("sp")
            .ok_or_else(bad)?
            .parse()
            .map_err(|_| bad())?;
        let gated_conv = match *conv {
            "conv" => true,
            "noconv" => false,
            _ => return Err(bad()),
        };
        Ok(Self {
            fusion,
            window,
            alpha: percent / 100.0,
            gated_conv,
        })
    }

    /// `base` with this variant's graph, window and convolution settings.
    pub fn apply(&self, base: &RunConfig, out: PathBuf) -> RunConfig {
        let mut cfg = base.clone();
        cfg.graph.fusion = self.fusion;
        cfg.graph.alpha = self.alpha;
        cfg.graph.window = Some(self.window);
        if self.window != base.model.window {
            cfg.graph.layout = None;
        }
        cfg.model.window = self.window;
        cfg.model.dilation = None;
        cfg.model.gated_conv = self.gated_conv;
        cfg.output.directory = out.clone();
        cfg.train.checkpoint_dir = Some(out);
        cfg
    }
}

/// Trains every variant with the base seed; failures are recorded in the
/// CSV and the remaining variants still run.
pub fn ablate_cmd(config: &Path, variants: &[String]) -> CliResult<Value> {
    let base = load_config(config)?;
    if variants.is_empty() {
        return Err(CliError::Config("no variants given".into()));
    }
    let root = base.output.directory.join("ablation");
    let mut csv = String::from("variant,mae,mape,rmse,status\n");
    let mut failures = 0;
    for name in variants {
        let result = Variant::parse(name).and_then(|v| {
            let cfg = v.apply(&base, root.join(name));
            cfg.validate()?;
            train_run(&cfg.resolved())
        });
        match result {
            Ok(summary) => {
                let t = &summary["test"];
                csv.push_str(&format!("{name},{},{},{},ok\n", t["mae"], t["mape"], t["rmse"]));
            }
            Err(e) => {
                failures += 1;
                let msg = e.to_string().replace([',', '\n'], ";");
                csv.push_str(&format!("{name},,,,failed: {msg}\n"));
            }
        }
    }
    let path = base.output.directory.join("ablation.csv");
    write_file(&path, csv.as_bytes())?;
    Ok(json!({
        "command": "ablate",
        "variants": variants.len(),
        "failures": failures,
        "out": path,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names() {
        let v = Variant::parse("ST4_sp1_conv").unwrap();
        assert_eq!(v.fusion, FusionVariant::Full);
        assert_eq!(v.window, 4);
        assert!((v.alpha - 0.01).abs() < 1e-12);
        assert!(v.gated_conv);
        let v = Variant::parse("T4_sp5_noconv").unwrap();
        assert_eq!(v.fusion, FusionVariant::TemporalOnly);
        assert!((v.alpha - 0.05).abs() < 1e-12);
        assert!(!v.gated_conv);
        assert_eq!(
            Variant::parse("TC3_sp1_conv").unwrap().fusion,
            FusionVariant::ConnectivityOnly
        );
        for bad in [
            "ST4",
            "X4_sp1_conv",
            "ST4_p1_conv",
            "ST4_sp1_maybe",
            "STx_sp1_conv",
        ] {
            assert!(Variant::parse(bad).is_err(), "{bad}");
        }
    }
}
