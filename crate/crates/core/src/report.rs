//! Layer, model and sweep experiments and their JSON/CSV reports.
//!
//! Every record satisfies `op_per_cycle = 2 * macs / cycles_used`,
//! `utilization = op_per_cycle / peak_op_per_cycle` and
//! `gops = op_per_cycle * freq_mhz / 1000`.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dataflow::{default_shift, execute, plan_both, DataflowError, LayerSpec, Strategy};
use crate::isa::{DataflowMode, Precision};
use crate::vcore::MachineConfig;
use crate::workloads::{conv2d_ref, gen_tensor, gen_weights, model_layers, WorkloadError};

/// Reference ratios of mixed over FF-only and CF-only on GoogLeNet at
/// 16 bits. They compare area efficiency of synthesized hardware and are
/// printed for context only.
pub const REFERENCE_FF_RATIO: f64 = 1.88;
pub const REFERENCE_CF_RATIO: f64 = 1.38;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("layer {layer}: {source}")]
    Layer {
        layer: String,
        #[source]
        source: DataflowError,
    },
    #[error("layer {layer}: output mismatch at index {index} (expected {expected}, got {got})")]
    Verification {
        layer: String,
        index: usize,
        expected: i16,
        got: i16,
    },
    #[error("layer {layer}: {count} broadcast loads left lanes inconsistent")]
    Broadcast { layer: String, count: u64 },
    #[error("layer {layer}: simulated {simulated} cycles, planned {planned}")]
    CycleMismatch {
        layer: String,
        planned: u64,
        simulated: u64,
    },
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("{0}")]
    Config(String),
}

impl ReportError {
    /// Process exit code: 1 for a wrong result, 2 for anything that kept
    /// the experiment from running.
    pub fn exit_code(&self) -> i32 {
        match self {
            ReportError::Verification { .. } | ReportError::Broadcast { .. } | ReportError::CycleMismatch { .. } => 1,
            _ => 2,
        }
    }
}

pub fn peak_ops_per_cycle(cfg: &MachineConfig, p: Precision) -> u64 {
    (2 * cfg.lanes * cfg.tile_r * cfg.tile_c * p.ic_par()) as u64
}

/// `2 * lanes * tile_r * tile_c * ic_par * freq_mhz / 1000` GOPS.
pub fn theoretical_peak(cfg: &MachineConfig, p: Precision) -> f64 {
    peak_ops_per_cycle(cfg, p) as f64 * cfg.freq_mhz / 1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Execute the lowered program; otherwise report planner estimates.
    pub simulate: bool,
    /// Compare against the reference convolution (implies `simulate`).
    pub verify: bool,
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            simulate: true,
            verify: false,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerReport {
    pub name: String,
    pub k: usize,
    pub stride: usize,
    pub precision: u32,
    pub strategy: DataflowMode,
    pub cycles_ff: Option<u64>,
    pub cycles_cf: Option<u64>,
    pub cycles_used: u64,
    pub macs: u64,
    pub op_per_cycle: f64,
    pub utilization: f64,
    pub gops: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gops_per_mm2: Option<f64>,
    pub simulated: bool,
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub total_cycles: u64,
    pub total_macs: u64,
    /// `2 * total_macs / total_cycles`.
    pub op_per_cycle: f64,
    pub mean_op_per_cycle: f64,
    pub peak_gops: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak_gops_per_mm2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleReport {
    pub model: String,
    pub precision: u32,
    pub strategy: Strategy,
    pub theoretical_peak_gops: f64,
    pub config: MachineConfig,
    pub layers: Vec<LayerReport>,
    pub aggregate: Aggregate,
}

fn seed_for(seed: u64, name: &str) -> u64 {
    // FNV-1a, so layer data does not depend on its position in a model
    name.bytes().fold(0xcbf2_9ce4_8422_2325 ^ seed, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100_0000_01b3)
    })
}

pub fn run_layer(
    layer: &LayerSpec,
    cfg: &MachineConfig,
    strategy: Strategy,
    opts: RunOptions,
) -> Result<LayerReport, ReportError> {
    let wrap = |source: DataflowError| ReportError::Layer {
        layer: layer.name.clone(),
        source,
    };
    let (sel, chosen, other) = plan_both(layer, cfg).map_err(wrap)?;
    let schedule = match (strategy, sel.chosen) {
        (Strategy::Mixed, _) => chosen,
        (Strategy::Ff, DataflowMode::FF) | (Strategy::Cf, DataflowMode::CF) => chosen,
        (Strategy::Ff, _) | (Strategy::Cf, _) => other.ok_or_else(|| {
            let mode = if strategy == Strategy::Ff {
                DataflowMode::FF
            } else {
                DataflowMode::CF
            };
            wrap(DataflowError::Infeasible {
                layer: layer.name.clone(),
                strategy: mode,
                reason: "does not fit".into(),
            })
        })?,
    };
    let mut cycles = schedule.est_cycles;
    let simulated = opts.simulate || opts.verify;
    if simulated {
        let seed = seed_for(opts.seed, &layer.name);
        let input = gen_tensor(seed, (layer.cin, layer.h, layer.w), layer.precision);
        let weights = gen_weights(seed.rotate_left(17), layer.cout, layer.cin, layer.k, layer.precision);
        let shift = default_shift(layer);
        let run = execute(&schedule, &input, &weights, shift, false).map_err(wrap)?;
        if run.cycles != schedule.est_cycles {
            return Err(ReportError::CycleMismatch {
                layer: layer.name.clone(),
                planned: schedule.est_cycles,
                simulated: run.cycles,
            });
        }
        if run.stats.broadcast_mismatches > 0 {
            return Err(ReportError::Broadcast {
                layer: layer.name.clone(),
                count: run.stats.broadcast_mismatches,
            });
        }
        if opts.verify {
            let expect = conv2d_ref(&input, &weights, layer, shift)?;
            if let Some(i) = run.output.first_mismatch(&expect) {
                return Err(ReportError::Verification {
                    layer: layer.name.clone(),
                    index: i,
                    expected: expect.values.get(i).copied().unwrap_or(0),
                    got: run.output.values.get(i).copied().unwrap_or(0),
                });
            }
        }
        cycles = run.cycles;
    }
    let macs = layer.macs();
    let opc = 2.0 * macs as f64 / cycles as f64;
    let gops = opc * cfg.freq_mhz / 1000.0;
    Ok(LayerReport {
        name: layer.name.clone(),
        k: layer.k,
        stride: layer.stride,
        precision: layer.precision.bits(),
        strategy: schedule.strategy,
        cycles_ff: sel.ff_cycles,
        cycles_cf: sel.cf_cycles,
        cycles_used: cycles,
        macs,
        op_per_cycle: opc,
        utilization: opc / peak_ops_per_cycle(cfg, layer.precision) as f64,
        gops,
        gops_per_mm2: cfg.area_mm2.map(|a| gops / a),
        simulated,
        verified: opts.verify,
    })
}

pub fn aggregate(layers: &[LayerReport], cfg: &MachineConfig) -> Aggregate {
    let total_cycles: u64 = layers.iter().map(|l| l.cycles_used).sum();
    let total_macs: u64 = layers.iter().map(|l| l.macs).sum();
    let peak_gops = layers.iter().map(|l| l.gops).fold(0.0, f64::max);
    Aggregate {
        total_cycles,
        total_macs,
        op_per_cycle: if total_cycles == 0 {
            0.0
        } else {
            2.0 * total_macs as f64 / total_cycles as f64
        },
        mean_op_per_cycle: if layers.is_empty() {
            0.0
        } else {
            layers.iter().map(|l| l.op_per_cycle).sum::<f64>() / layers.len() as f64
        },
        peak_gops,
        peak_gops_per_mm2: cfg.area_mm2.map(|a| peak_gops / a),
    }
}

/// Runs a list of layers in parallel; the report keeps input order.
pub fn run_layers(
    model: &str,
    layers: &[LayerSpec],
    cfg: &MachineConfig,
    precision: Precision,
    strategy: Strategy,
    opts: RunOptions,
) -> Result<CycleReport, ReportError> {
    cfg.validate().map_err(|e| ReportError::Config(e.to_string()))?;
    let recs = layers
        .par_iter()
        .map(|l| run_layer(l, cfg, strategy, opts))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CycleReport {
        model: model.to_string(),
        precision: precision.bits(),
        strategy,
        theoretical_peak_gops: theoretical_peak(cfg, precision),
        config: cfg.clone(),
        aggregate: aggregate(&recs, cfg),
        layers: recs,
    })
}

pub fn run_model(
    name: &str,
    cfg: &MachineConfig,
    strategy: Strategy,
    precision: Precision,
    opts: RunOptions,
) -> Result<CycleReport, ReportError> {
    let m = model_layers(name, precision)?;
    run_layers(&m.name, &m.layers, cfg, precision, strategy, opts)
}

/// FF-only, CF-only and mixed totals from one mixed report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub model: String,
    pub precision: u32,
    pub ff_total: Option<u64>,
    pub cf_total: Option<u64>,
    pub mixed_total: u64,
    pub ff_over_mixed: Option<f64>,
    pub cf_over_mixed: Option<f64>,
    pub reference_ff_over_mixed: f64,
    pub reference_cf_over_mixed: f64,
    pub layers_ff: usize,
    pub layers_cf: usize,
}

pub fn compare(report: &CycleReport) -> Comparison {
    let total = |f: fn(&LayerReport) -> Option<u64>| report.layers.iter().map(f).sum::<Option<u64>>();
    let ff_total = total(|l| l.cycles_ff);
    let cf_total = total(|l| l.cycles_cf);
    let mixed = report.aggregate.total_cycles;
    let ratio = |t: Option<u64>| t.map(|t| t as f64 / mixed as f64);
    Comparison {
        model: report.model.clone(),
        precision: report.precision,
        ff_total,
        cf_total,
        mixed_total: mixed,
        ff_over_mixed: ratio(ff_total),
        cf_over_mixed: ratio(cf_total),
        reference_ff_over_mixed: REFERENCE_FF_RATIO,
        reference_cf_over_mixed: REFERENCE_CF_RATIO,
        layers_ff: report.layers.iter().filter(|l| l.strategy == DataflowMode::FF).count(),
        layers_cf: report.layers.iter().filter(|l| l.strategy == DataflowMode::CF).count(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepGrid {
    pub lanes: Vec<usize>,
    pub tile_r: Vec<usize>,
    pub tile_c: Vec<usize>,
    pub precision: Vec<Precision>,
}

impl SweepGrid {
    pub fn len(&self) -> usize {
        self.lanes.len() * self.tile_r.len() * self.tile_c.len() * self.precision.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub lanes: usize,
    pub tile_r: usize,
    pub tile_c: usize,
    pub precision: u32,
    pub total_cycles: Option<u64>,
    pub total_macs: Option<u64>,
    pub op_per_cycle: Option<f64>,
    pub mean_op_per_cycle: Option<f64>,
    pub peak_gops: Option<f64>,
    pub theoretical_peak_gops: f64,
    pub error: Option<String>,
}

/// One row per grid point, in `lanes, tile_r, tile_c, precision` order.
/// Register length per lane is held fixed, so `vlen_bits` scales with
/// `lanes`. A failing cell records its error and the sweep continues.
pub fn sweep(
    grid: &SweepGrid,
    model: &str,
    base: &MachineConfig,
    strategy: Strategy,
    opts: RunOptions,
) -> Result<Vec<SweepRow>, ReportError> {
    if grid.is_empty() {
        return Err(ReportError::Config("empty sweep grid".into()));
    }
    let reg_bits = base.reg_bits();
    let mut rows = Vec::with_capacity(grid.len());
    for &lanes in &grid.lanes {
        for &tile_r in &grid.tile_r {
            for &tile_c in &grid.tile_c {
                for &p in &grid.precision {
                    let cfg = MachineConfig {
                        lanes,
                        tile_r,
                        tile_c,
                        vlen_bits: reg_bits * lanes,
                        ..base.clone()
                    };
                    let r = run_model(model, &cfg, strategy, p, opts);
                    if let Err(ReportError::Workload(WorkloadError::UnknownModel(_))) = &r {
                        return Err(r.unwrap_err());
                    }
                    let agg = r.as_ref().ok().map(|r| &r.aggregate);
                    rows.push(SweepRow {
                        lanes,
                        tile_r,
                        tile_c,
                        precision: p.bits(),
                        total_cycles: agg.map(|a| a.total_cycles),
                        total_macs: agg.map(|a| a.total_macs),
                        op_per_cycle: agg.map(|a| a.op_per_cycle),
                        mean_op_per_cycle: agg.map(|a| a.mean_op_per_cycle),
                        peak_gops: agg.map(|a| a.peak_gops),
                        theoretical_peak_gops: theoretical_peak(&cfg, p),
                        error: r.err().map(|e| e.to_string()),
                    });
                }
            }
        }
    }
    Ok(rows)
}

pub fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn f(v: f64) -> String {
    format!("{v:.6}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub const LAYER_CSV_HEADER: [&str; 16] = [
    "model",
    "layer",
    "k",
    "stride",
    "precision",
    "strategy",
    "cycles_ff",
    "cycles_cf",
    "cycles_used",
    "macs",
    "op_per_cycle",
    "utilization",
    "gops",
    "gops_per_mm2",
    "simulated",
    "verified",
];

/// One row per layer; floats with six decimals.
pub fn layers_csv(report: &CycleReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(LAYER_CSV_HEADER).unwrap();
    for l in &report.layers {
        w.write_record([
            report.model.clone(),
            l.name.clone(),
            l.k.to_string(),
            l.stride.to_string(),
            l.precision.to_string(),
            format!("{:?}", l.strategy),
            opt(l.cycles_ff),
            opt(l.cycles_cf),
            l.cycles_used.to_string(),
            l.macs.to_string(),
            f(l.op_per_cycle),
            f(l.utilization),
            f(l.gops),
            l.gops_per_mm2.map(f).unwrap_or_default(),
            l.simulated.to_string(),
            l.verified.to_string(),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

pub const SWEEP_CSV_HEADER: [&str; 11] = [
    "lanes",
    "tile_r",
    "tile_c",
    "precision",
    "total_cycles",
    "total_macs",
    "op_per_cycle",
    "mean_op_per_cycle",
    "peak_gops",
    "theoretical_peak_gops",
    "error",
];

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_CSV_HEADER).unwrap();
    for r in rows {
        w.write_record([
            r.lanes.to_string(),
            r.tile_r.to_string(),
            r.tile_c.to_string(),
            r.precision.to_string(),
            opt(r.total_cycles),
            opt(r.total_macs),
            r.op_per_cycle.map(f).unwrap_or_default(),
            r.mean_op_per_cycle.map(f).unwrap_or_default(),
            r.peak_gops.map(f).unwrap_or_default(),
            f(r.theoretical_peak_gops),
            r.error.clone().unwrap_or_default(),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}
