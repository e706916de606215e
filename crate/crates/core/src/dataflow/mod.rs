//! Packing, FF/CF planning, lowering to instructions, per-layer strategy
//! selection, and execution of a planned layer on the machine.

mod exec;
mod layer;
mod pack;
mod plan;
mod schedule;

pub use exec::{collect_acc, execute, stage_memory, LayerRun};
pub use layer::{default_shift, parse_layer_records, parse_layers, requantize, LayerError, LayerRecord, LayerSpec};
pub use pack::{pack_tensor, unpack, PackedGrid};
pub use plan::{lower, plan_cf, plan_ff, ADDR_XREG};
pub use schedule::{
    Geometry, LoadDesc, LoadMode, MemoryLayout, OutTile, RegAlloc, RegionKind, ReuseKind, Schedule, Stage, StageId,
    StoreDesc, TileDesc, VrfRegion, Writeback,
};

use serde::Serialize;
use thiserror::Error;

use crate::isa::DataflowMode;
use crate::sau::SauError;
use crate::vcore::{ExecError, MachineConfig, RunError};

#[derive(Debug, Error)]
pub enum DataflowError {
    #[error("layer {layer}: {strategy:?} infeasible: {reason}")]
    Infeasible {
        layer: String,
        strategy: DataflowMode,
        reason: String,
    },
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error("config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Sau(#[from] SauError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Run(#[from] RunError),
}

impl DataflowError {
    pub fn is_infeasible(&self) -> bool {
        matches!(self, DataflowError::Infeasible { .. })
    }
}

/// Strategy to plan a layer with; `Mixed` picks per layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Ff,
    Cf,
    Mixed,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Ff, Strategy::Cf, Strategy::Mixed];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Ff => "ff",
            Strategy::Cf => "cf",
            Strategy::Mixed => "mixed",
        }
    }

    pub fn from_name(s: &str) -> Option<Strategy> {
        Strategy::ALL.into_iter().find(|v| v.name().eq_ignore_ascii_case(s))
    }
}

pub fn plan(layer: &LayerSpec, cfg: &MachineConfig, mode: DataflowMode) -> Result<Schedule, DataflowError> {
    match mode {
        DataflowMode::FF => plan_ff(layer, cfg),
        DataflowMode::CF => plan_cf(layer, cfg),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Selection {
    pub chosen: DataflowMode,
    /// `None` when that strategy is infeasible.
    pub ff_cycles: Option<u64>,
    pub cf_cycles: Option<u64>,
}

impl Selection {
    pub fn cycles(&self) -> u64 {
        match self.chosen {
            DataflowMode::FF => self.ff_cycles.unwrap(),
            DataflowMode::CF => self.cf_cycles.unwrap(),
        }
    }
}

fn choose(
    layer: &LayerSpec,
    ff: &Result<Schedule, DataflowError>,
    cf: &Result<Schedule, DataflowError>,
) -> Result<Selection, DataflowError> {
    let ff_cycles = ff.as_ref().ok().map(|s| s.est_cycles);
    let cf_cycles = cf.as_ref().ok().map(|s| s.est_cycles);
    let chosen = match (ff_cycles, cf_cycles) {
        (Some(f), Some(c)) if f < c => DataflowMode::FF,
        (Some(_), None) => DataflowMode::FF,
        (_, Some(_)) => DataflowMode::CF,
        (None, None) => {
            return Err(DataflowError::Infeasible {
                layer: layer.name.clone(),
                strategy: DataflowMode::CF,
                reason: "neither FF nor CF fits".into(),
            })
        }
    };
    Ok(Selection {
        chosen,
        ff_cycles,
        cf_cycles,
    })
}

/// Argmin of estimated cycles; ties go to CF. Non-infeasibility errors
/// propagate.
pub fn select_strategy(layer: &LayerSpec, cfg: &MachineConfig) -> Result<Selection, DataflowError> {
    Ok(plan_both(layer, cfg)?.0)
}

/// Both plans plus the selection; the chosen plan is returned first.
pub fn plan_both(
    layer: &LayerSpec,
    cfg: &MachineConfig,
) -> Result<(Selection, Schedule, Option<Schedule>), DataflowError> {
    let ff = match plan_ff(layer, cfg) {
        Err(e) if !e.is_infeasible() => return Err(e),
        r => r,
    };
    let cf = match plan_cf(layer, cfg) {
        Err(e) if !e.is_infeasible() => return Err(e),
        r => r,
    };
    let sel = choose(layer, &ff, &cf)?;
    let (chosen, other) = match sel.chosen {
        DataflowMode::FF => (ff.unwrap(), cf.ok()),
        DataflowMode::CF => (cf.unwrap(), ff.ok()),
    };
    Ok((sel, chosen, other))
}
