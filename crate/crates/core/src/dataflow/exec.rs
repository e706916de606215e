use super::schedule::{Schedule, Writeback};
use super::{pack_tensor, requantize, DataflowError, PackedGrid};
use crate::isa::DataflowMode;
use crate::sau::PackedElement;
use crate::vcore::{run, ExternalMemory, MachineState, Stats, Trace};
use crate::workloads::Tensor;

fn put(img: &mut [u8], at: usize, e: &PackedElement, eb: usize) {
    e.write_bytes(&mut img[at * eb..(at + 1) * eb]);
}

/// Builds the memory image a lowered schedule expects: packed weights,
/// the input in the strategy's column-block layout with padding
/// synthesized as zeros, a zero block and an empty output region.
pub fn stage_memory(s: &Schedule, input: &Tensor, weights: &[Tensor]) -> Result<ExternalMemory, DataflowError> {
    let l = &s.layer;
    if input.dims() != (l.cin, l.h, l.w) {
        return Err(DataflowError::ShapeMismatch(format!("input {:?}", input.dims())));
    }
    if weights.len() != l.cout || weights.iter().any(|w| w.dims() != (l.cin, l.k, l.k)) {
        return Err(DataflowError::ShapeMismatch("weights".into()));
    }
    let g = &s.geometry;
    let p = g.precision;
    let eb = g.elem_bytes;
    let zero = PackedElement::zero(p);
    let mut img = vec![0u8; s.layout.total as usize];

    let kern: Vec<PackedGrid> = weights.iter().map(|w| pack_tensor(w, p)).collect::<Result<_, _>>()?;
    let wbase = s.layout.weights as usize / eb;
    let kk = g.k * g.k;
    for ob in 0..g.ob_count {
        for ch in 0..g.groups {
            for st in 0..kk {
                let (kx, ky) = (st / g.k, st % g.k);
                for c in 0..g.tile_c {
                    for lane in 0..g.lanes {
                        let oc = ob * g.lanes * g.tile_c + lane * g.tile_c + c;
                        let e = if oc < l.cout { kern[oc].get(ch, ky, kx) } else { &zero };
                        let i = (((ob * g.groups + ch) * kk + st) * g.tile_c + c) * g.lanes + lane;
                        put(&mut img, wbase + i, e, eb);
                    }
                }
            }
        }
    }

    let grid = pack_tensor(input, p)?;
    let ibase = s.layout.inputs as usize / eb;
    let row0 = |rt: usize, j: usize| (rt * g.tile_r * g.stride + j) as isize - g.pad as isize;
    match s.strategy {
        DataflowMode::FF => {
            for rt in 0..g.rt_count {
                for ch in 0..g.groups {
                    for col in 0..g.cols_total {
                        for j in 0..g.l_col {
                            let e = grid.get_padded(ch, row0(rt, j), col as isize - g.pad as isize);
                            let i = ((rt * g.groups + ch) * g.cols_total + col) * g.l_col + j;
                            put(&mut img, ibase + i, &e, eb);
                        }
                    }
                }
            }
        }
        DataflowMode::CF => {
            for rt in 0..g.rt_count {
                for x in 0..g.ow {
                    for ch in 0..g.groups {
                        for kx in 0..g.k {
                            let ix = (x * g.stride + kx) as isize - g.pad as isize;
                            for j in 0..g.l_col {
                                let e = grid.get_padded(ch, row0(rt, j), ix);
                                let i = (((rt * g.ow + x) * g.groups + ch) * g.k + kx) * g.l_col + j;
                                put(&mut img, ibase + i, &e, eb);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(ExternalMemory::from_image(0, &img))
}

fn collect_one(s: &Schedule, wb: &Writeback, mem: &ExternalMemory, out: &mut [i32]) -> Result<(), DataflowError> {
    let g = &s.geometry;
    let eb = g.elem_bytes;
    let reg_bytes = g.reg_words * 4;
    let (oh, ow, cout) = (g.oh, g.ow, s.layer.cout);
    let mut lanes = vec![vec![0u8; wb.stores.len() * reg_bytes]; g.lanes];
    for (j, st) in wb.stores.iter().enumerate() {
        let bytes = mem.read(st.addr, st.count as usize * eb)?;
        for (i, e) in bytes.chunks_exact(eb).enumerate() {
            let (lane, slot) = (i % g.lanes, i / g.lanes);
            let at = j * reg_bytes + slot * eb;
            lanes[lane][at..at + eb].copy_from_slice(e);
        }
    }
    for t in &wb.tiles {
        for (lane, buf) in lanes.iter().enumerate() {
            for r in 0..g.tile_r {
                let oy = t.rt as usize * g.tile_r + r;
                if oy >= oh {
                    continue;
                }
                for c in 0..g.tile_c {
                    let oc = t.ob as usize * g.lanes * g.tile_c + lane * g.tile_c + c;
                    if oc >= cout {
                        continue;
                    }
                    let w = (t.word as usize + r * g.tile_c + c) * 4;
                    let v = i32::from_le_bytes(buf[w..w + 4].try_into().unwrap());
                    out[(oc * oh + oy) * ow + t.x as usize] = v;
                }
            }
        }
    }
    Ok(())
}

/// Reads every written-back tile into `[cout][oh][ow]` accumulators.
pub fn collect_acc(s: &Schedule, mem: &ExternalMemory) -> Result<Vec<i32>, DataflowError> {
    let g = &s.geometry;
    let mut out = vec![0i32; s.layer.cout * g.oh * g.ow];
    for wb in s.stages.iter().filter_map(|st| st.writeback.as_ref()) {
        collect_one(s, wb, mem, &mut out)?;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct LayerRun {
    pub acc: Vec<i32>,
    pub output: Tensor,
    pub cycles: u64,
    pub stats: Stats,
    pub trace: Trace,
}

/// Stages memory, runs the lowered program and requantizes the result.
pub fn execute(
    s: &Schedule,
    input: &Tensor,
    weights: &[Tensor],
    shift: u32,
    trace: bool,
) -> Result<LayerRun, DataflowError> {
    let mut mem = stage_memory(s, input, weights)?;
    let program = super::lower(s)?;
    let mut state = MachineState::new(s.cfg.clone());
    if trace {
        state = state.with_trace();
    }
    let (state, trace) = run(&program, state, &mut mem)?;
    let acc = collect_acc(s, &mem)?;
    let g = &s.geometry;
    let p = s.layer.precision;
    let output = Tensor {
        c: s.layer.cout,
        h: g.oh,
        w: g.ow,
        precision: p,
        values: acc.iter().map(|&a| requantize(a, p, shift)).collect(),
    };
    Ok(LayerRun {
        acc,
        output,
        cycles: state.cycle,
        stats: state.stats,
        trace,
    })
}
