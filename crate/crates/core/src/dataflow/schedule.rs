use std::fmt::Write as _;

use serde::Serialize;

use super::{DataflowError, LayerSpec};
use crate::isa::{DataflowMode, Precision, MAX_STEPS};
use crate::sau::AddrGen;
use crate::vcore::MachineConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RegionKind {
    Input,
    Weight,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LoadMode {
    /// `VSALD`: every lane receives the same bytes.
    Broadcast,
    /// `VLE`: element `i` goes to lane `i % lanes`.
    Ordered,
}

/// One single-register load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LoadDesc {
    pub kind: RegionKind,
    pub mode: LoadMode,
    pub reg: u8,
    pub addr: u64,
    pub count: u16,
}

/// One `VSAM` with the cursor state it must see at issue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TileDesc {
    pub vs1: u8,
    pub vs2: u8,
    pub acc: u8,
    pub steps: u16,
    pub addr: AddrGen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StoreDesc {
    pub reg: u8,
    pub addr: u64,
    pub count: u16,
}

/// An output tile inside a writeback: `tile_r x tile_c` words starting at
/// `word` of the stored register group, rows `rt * tile_r ..`, column `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OutTile {
    pub word: u32,
    pub ob: u32,
    pub rt: u32,
    pub x: u32,
}

/// Stores of consecutive registers starting at `stores[0].reg`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Writeback {
    pub stores: Vec<StoreDesc>,
    pub tiles: Vec<OutTile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReuseKind {
    /// Input columns shared with the previous window.
    InputOverlap,
    Weights,
    Partials,
}

/// VRF contents a stage uses without loading them. `len` counts elements
/// (words for partial sums); `regs` is the inclusive register span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VrfRegion {
    pub kind: ReuseKind,
    pub regs: (u8, u8),
    pub offset: u32,
    pub len: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StageId {
    Ff {
        ob: u32,
        rt: u32,
        x: u32,
        g: u32,
    },
    Cf {
        ob: u32,
        rt: u32,
        x: u32,
        g0: u32,
        groups: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Stage {
    pub id: StageId,
    pub prefetch: Vec<LoadDesc>,
    pub compute: Vec<TileDesc>,
    pub writeback: Option<Writeback>,
    pub reuse_from_prev: Vec<VrfRegion>,
}

impl Stage {
    pub(crate) fn new(id: StageId) -> Self {
        Stage {
            id,
            prefetch: Vec::new(),
            compute: Vec::new(),
            writeback: None,
            reuse_from_prev: Vec::new(),
        }
    }
}

/// Per-lane register allocation: `[first, first + count)` for each class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RegAlloc {
    pub acc: (u8, u8),
    pub input: (u8, u8),
    pub weight: (u8, u8),
}

impl RegAlloc {
    pub fn total(&self) -> usize {
        (self.acc.1 + self.input.1 + self.weight.1) as usize
    }
}

/// Byte addresses of the staged regions in external memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MemoryLayout {
    pub weights: u64,
    pub inputs: u64,
    pub zero: u64,
    pub output: u64,
    pub total: u64,
}

/// Loop bounds and tiling derived from a layer and a machine.
///
/// Output channel `oc = ob * lanes * tile_c + lane * tile_c + c`; output
/// row `oy = rt * tile_r + r`. An input column block holds `l_col` rows
/// starting at input row `rt * tile_r * stride - pad`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Geometry {
    pub precision: Precision,
    pub lanes: usize,
    pub tile_r: usize,
    pub tile_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
    pub ob_count: usize,
    pub rt_count: usize,
    pub oh: usize,
    pub ow: usize,
    pub l_col: usize,
    /// Padded input columns touched by the full output width.
    pub cols_total: usize,
    /// Elements per register per lane.
    pub reg_elems: usize,
    /// 32-bit words per register per lane.
    pub reg_words: usize,
    pub elem_bytes: usize,
}

impl Geometry {
    pub fn new(layer: &LayerSpec, cfg: &MachineConfig) -> Result<Self, DataflowError> {
        layer.validate()?;
        cfg.validate().map_err(|e| DataflowError::Config(e.to_string()))?;
        let p = layer.precision;
        let oh = layer.out_h();
        let ow = layer.out_w();
        let per_ob = cfg.lanes * cfg.tile_c;
        Ok(Geometry {
            precision: p,
            lanes: cfg.lanes,
            tile_r: cfg.tile_r,
            tile_c: cfg.tile_c,
            k: layer.k,
            stride: layer.stride,
            pad: layer.pad,
            groups: layer.groups(),
            ob_count: layer.cout.div_ceil(per_ob),
            rt_count: oh.div_ceil(cfg.tile_r),
            oh,
            ow,
            l_col: (cfg.tile_r - 1) * layer.stride + layer.k,
            cols_total: (ow - 1) * layer.stride + layer.k,
            reg_elems: cfg.reg_elems(p),
            reg_words: cfg.reg_bytes() / 4,
            elem_bytes: p.element_bytes(),
        })
    }

    pub fn regs_for_elems(&self, n: usize) -> usize {
        n.div_ceil(self.reg_elems)
    }

    pub fn regs_for_words(&self, n: usize) -> usize {
        n.div_ceil(self.reg_words)
    }

    pub fn tile_words(&self) -> usize {
        self.tile_r * self.tile_c
    }

    /// Weight elements of one packed input channel of one output block.
    pub fn weight_block(&self) -> usize {
        self.k * self.k * self.tile_c * self.lanes
    }

    /// Longest `VSAM` that covers whole kernel columns.
    pub fn max_steps(&self) -> usize {
        (MAX_STEPS as usize / self.k) * self.k
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Schedule {
    pub layer: LayerSpec,
    pub cfg: MachineConfig,
    pub strategy: DataflowMode,
    pub tile_h: usize,
    pub geometry: Geometry,
    pub regs: RegAlloc,
    pub layout: MemoryLayout,
    pub stages: Vec<Stage>,
    pub est_cycles: u64,
    pub vrf_peak_bits: usize,
}

impl Schedule {
    fn load_bytes(&self, kind: RegionKind) -> u64 {
        let eb = self.geometry.elem_bytes as u64;
        self.stages
            .iter()
            .flat_map(|s| &s.prefetch)
            .filter(|l| l.kind == kind)
            .map(|l| l.count as u64 * eb)
            .sum()
    }

    pub fn input_load_bytes(&self) -> u64 {
        self.load_bytes(RegionKind::Input)
    }

    pub fn weight_load_bytes(&self) -> u64 {
        self.load_bytes(RegionKind::Weight)
    }

    /// Input bytes a plan that loads every window separately would move.
    pub fn no_reuse_input_bytes(&self) -> u64 {
        let g = &self.geometry;
        (g.ob_count * g.rt_count * g.ow * g.groups * g.k * g.l_col * g.elem_bytes) as u64
    }

    pub fn writeback_count(&self) -> usize {
        self.stages.iter().filter(|s| s.writeback.is_some()).count()
    }

    /// Human-readable stage listing.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let g = &self.geometry;
        let _ = writeln!(out, "layer {}", self.layer);
        let _ = writeln!(
            out,
            "strategy {:?} tile_h {} stages {} est_cycles {} vrf_peak_bits {}",
            self.strategy,
            self.tile_h,
            self.stages.len(),
            self.est_cycles,
            self.vrf_peak_bits
        );
        let _ = writeln!(
            out,
            "groups {} ob {} rt {} out {}x{} l_col {} regs acc {:?} input {:?} weight {:?}",
            g.groups, g.ob_count, g.rt_count, g.oh, g.ow, g.l_col, self.regs.acc, self.regs.input, self.regs.weight
        );
        for (i, s) in self.stages.iter().enumerate() {
            let _ = writeln!(out, "stage {i} {:?}", s.id);
            for l in &s.prefetch {
                let _ = writeln!(
                    out,
                    "  load {:?} {:?} v{} <- {:#x} x{}",
                    l.kind, l.mode, l.reg, l.addr, l.count
                );
            }
            for r in &s.reuse_from_prev {
                let _ = writeln!(
                    out,
                    "  reuse {:?} v{}..=v{} +{} len {}",
                    r.kind, r.regs.0, r.regs.1, r.offset, r.len
                );
            }
            for t in &s.compute {
                let _ = writeln!(
                    out,
                    "  vsam v{} v{} v{} steps {} in {} w {} acc {}",
                    t.vs1, t.vs2, t.acc, t.steps, t.addr.in_off, t.addr.w_off, t.addr.acc_off
                );
            }
            if let Some(wb) = &s.writeback {
                for st in &wb.stores {
                    let _ = writeln!(out, "  store v{} -> {:#x} x{}", st.reg, st.addr, st.count);
                }
            }
        }
        out
    }
}
