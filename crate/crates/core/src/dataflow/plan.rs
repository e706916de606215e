//! FF and CF planners and the lowering to instructions.
//!
//! Step `s` of a `VSAM` walks kernel columns: within one packed input
//! channel, `kx = s / k` and `ky = s % k`; consecutive channels follow each
//! other. Input elements sit column-major in blocks of `l_col` rows, so the
//! address generator is programmed with `ksize = k`, `col_pitch = l_col`,
//! `row_step = stride`. Weights sit `[s][c]` per lane.
//!
//! FF loops `ob -> rt -> column chunk -> channel -> output column`, one
//! stage per output column. Each chunk's partial sums live in the VRF
//! across channel stages. A chunk's input strip is loaded once per channel
//! and shared by adjacent windows. Weights stay resident while
//! `(ob, channel)` is unchanged.
//!
//! CF loops `ob -> rt -> output column -> channel chunk`. The tile stays
//! in the array across chunks and is written back once per column. The
//! chunk's operand registers are capped at the FF operand allocation for
//! the same layer, so CF never needs more VRF than FF.

use super::schedule::*;
use super::{DataflowError, LayerSpec};
use crate::isa::{CfgReg, DataflowMode, Instruction, MAX_CFG_VALUE};
use crate::sau::AddrGen;
use crate::vcore::{estimate_cycles, Issue, MachineConfig};

/// x-register carrying load/store addresses; its value travels in
/// [`Issue::scalar`].
pub const ADDR_XREG: u8 = 10;

struct FfAlloc {
    wt: usize,
    acc: usize,
    strip: usize,
    weight: usize,
}

fn ff_alloc(g: &Geometry, num_vregs: usize) -> Option<FfAlloc> {
    let weight = g.regs_for_elems(g.k * g.k * g.tile_c);
    let fits = |wt: usize| {
        let acc = g.regs_for_words(wt * g.tile_words());
        let strip = g.regs_for_elems(((wt - 1) * g.stride + g.k) * g.l_col);
        (acc + strip + weight <= num_vregs).then_some(FfAlloc { wt, acc, strip, weight })
    };
    (1..=g.ow).rev().find_map(fits)
}

fn infeasible(layer: &LayerSpec, strategy: DataflowMode, reason: impl Into<String>) -> DataflowError {
    DataflowError::Infeasible {
        layer: layer.name.clone(),
        strategy,
        reason: reason.into(),
    }
}

/// Splits `steps` kernel steps into `VSAM`s covering whole kernel columns.
fn push_tiles(st: &mut Stage, g: &Geometry, regs: &RegAlloc, base: AddrGen, steps: usize) {
    let mut done = 0;
    while done < steps {
        let n = (steps - done).min(g.max_steps());
        let mut addr = base;
        addr.in_off += ((done / g.k) * g.l_col) as u32;
        addr.w_off += (done * g.tile_c) as u32;
        st.compute.push(TileDesc {
            vs1: regs.input.0,
            vs2: regs.weight.0,
            acc: regs.acc.0,
            steps: n as u16,
            addr,
        });
        done += n;
    }
}

/// Chooses each tile's advance so the next tile needs no cursor writes
/// when it lies ahead; otherwise keeps the previous advance.
fn assign_advances(stages: &mut [Stage]) {
    let mut idx: Vec<(usize, usize)> = Vec::new();
    for (si, s) in stages.iter().enumerate() {
        for ti in 0..s.compute.len() {
            idx.push((si, ti));
        }
    }
    let mut prev = AddrGen::default();
    for i in 0..idx.len() {
        let (si, ti) = idx[i];
        let next = idx.get(i + 1).map(|&(a, b)| stages[a].compute[b].addr);
        let t = &mut stages[si].compute[ti].addr;
        let pick = |cur: u32, nxt: Option<u32>, keep: u32| match nxt {
            Some(n) if n >= cur => n - cur,
            _ => keep,
        };
        t.in_adv = pick(t.in_off, next.map(|n| n.in_off), prev.in_adv);
        t.w_adv = pick(t.w_off, next.map(|n| n.w_off), prev.w_adv);
        t.acc_adv = pick(t.acc_off, next.map(|n| n.acc_off), prev.acc_adv);
        prev = *t;
    }
}

#[allow(clippy::too_many_arguments)]
fn push_loads(
    st: &mut Stage,
    kind: RegionKind,
    mode: LoadMode,
    first_reg: u8,
    addr: u64,
    elems: usize,
    per_reg: usize,
    elem_bytes: usize,
) {
    let mut done = 0;
    let mut reg = first_reg;
    while done < elems {
        let n = (elems - done).min(per_reg);
        st.prefetch.push(LoadDesc {
            kind,
            mode,
            reg,
            addr: addr + (done * elem_bytes) as u64,
            count: n as u16,
        });
        done += n;
        reg += 1;
    }
}

fn writeback(g: &Geometry, regs: &RegAlloc, out: &mut u64, words: usize, tiles: Vec<OutTile>) -> Writeback {
    let mut stores = Vec::new();
    let mut left = words;
    let mut reg = regs.acc.0;
    while left > 0 {
        let w = left.min(g.reg_words);
        let count = (w * 4).div_ceil(g.elem_bytes) * g.lanes;
        stores.push(StoreDesc {
            reg,
            addr: *out,
            count: count as u16,
        });
        *out += (count * g.elem_bytes) as u64;
        left -= w;
        reg += 1;
    }
    Writeback { stores, tiles }
}

fn base_addr(g: &Geometry, in_off: usize, acc_off: usize) -> AddrGen {
    AddrGen {
        ksize: g.k as u32,
        col_pitch: g.l_col as u32,
        row_step: g.stride as u32,
        in_off: in_off as u32,
        w_off: 0,
        acc_off: acc_off as u32,
        ..AddrGen::default()
    }
}

fn check_limits(g: &Geometry, layer: &LayerSpec, strategy: DataflowMode) -> Result<(), DataflowError> {
    if g.k > crate::isa::MAX_STEPS as usize {
        return Err(infeasible(layer, strategy, "kernel column longer than a VSAM"));
    }
    if g.reg_elems * g.lanes > crate::isa::MAX_COUNT as usize {
        return Err(infeasible(
            layer,
            strategy,
            "register slice exceeds the load count field",
        ));
    }
    Ok(())
}

pub fn plan_ff(layer: &LayerSpec, cfg: &MachineConfig) -> Result<Schedule, DataflowError> {
    let mode = DataflowMode::FF;
    let g = Geometry::new(layer, cfg)?;
    check_limits(&g, layer, mode)?;
    let a = ff_alloc(&g, cfg.num_vregs).ok_or_else(|| infeasible(layer, mode, "one window does not fit in the VRF"))?;
    let regs = RegAlloc {
        acc: (0, a.acc as u8),
        input: (a.acc as u8, a.strip as u8),
        weight: ((a.acc + a.strip) as u8, a.weight as u8),
    };
    let eb = g.elem_bytes;
    let weights = 0u64;
    let inputs = weights + (g.ob_count * g.groups * g.weight_block() * eb) as u64;
    let zero = inputs + (g.rt_count * g.groups * g.cols_total * g.l_col * eb) as u64;
    let output = zero + (g.reg_elems * eb) as u64;
    let mut out = output;

    let mut stages = Vec::new();
    let mut prev_w: Option<(usize, usize)> = None;
    let (s, k, l) = (g.stride, g.k, g.l_col);
    for ob in 0..g.ob_count {
        for rt in 0..g.rt_count {
            for x0 in (0..g.ow).step_by(a.wt) {
                let wn = a.wt.min(g.ow - x0);
                let words = wn * g.tile_words();
                let acc_regs = g.regs_for_words(words);
                for ch in 0..g.groups {
                    let strip_elems = ((wn - 1) * s + k) * l;
                    let strip_addr = inputs + (((rt * g.groups + ch) * g.cols_total + x0 * s) * l * eb) as u64;
                    let mut loaded = 0;
                    for xi in 0..wn {
                        let mut st = Stage::new(StageId::Ff {
                            ob: ob as u32,
                            rt: rt as u32,
                            x: (x0 + xi) as u32,
                            g: ch as u32,
                        });
                        if xi == 0 && ch == 0 {
                            for r in 0..acc_regs {
                                st.prefetch.push(LoadDesc {
                                    kind: RegionKind::Zero,
                                    mode: LoadMode::Broadcast,
                                    reg: regs.acc.0 + r as u8,
                                    addr: zero,
                                    count: g.reg_elems as u16,
                                });
                            }
                        } else {
                            st.reuse_from_prev.push(VrfRegion {
                                kind: ReuseKind::Partials,
                                regs: (regs.acc.0, regs.acc.0 + acc_regs as u8 - 1),
                                offset: 0,
                                len: words as u32,
                            });
                        }
                        if prev_w == Some((ob, ch)) {
                            st.reuse_from_prev.push(VrfRegion {
                                kind: ReuseKind::Weights,
                                regs: (regs.weight.0, regs.weight.0 + regs.weight.1 - 1),
                                offset: 0,
                                len: (k * k * g.tile_c) as u32,
                            });
                        } else {
                            let addr = weights + ((ob * g.groups + ch) * g.weight_block() * eb) as u64;
                            push_loads(
                                &mut st,
                                RegionKind::Weight,
                                LoadMode::Ordered,
                                regs.weight.0,
                                addr,
                                g.weight_block(),
                                g.reg_elems * g.lanes,
                                eb,
                            );
                            prev_w = Some((ob, ch));
                        }
                        let need = g.regs_for_elems((xi * s + k) * l);
                        if need > loaded {
                            let from = loaded * g.reg_elems;
                            let to = (need * g.reg_elems).min(strip_elems);
                            push_loads(
                                &mut st,
                                RegionKind::Input,
                                LoadMode::Broadcast,
                                regs.input.0 + loaded as u8,
                                strip_addr + (from * eb) as u64,
                                to - from,
                                g.reg_elems,
                                eb,
                            );
                            loaded = need;
                        }
                        if xi > 0 && k > s {
                            let off = xi * s * l;
                            let len = (k - s) * l;
                            st.reuse_from_prev.push(VrfRegion {
                                kind: ReuseKind::InputOverlap,
                                regs: (
                                    regs.input.0 + (off / g.reg_elems) as u8,
                                    regs.input.0 + ((off + len - 1) / g.reg_elems) as u8,
                                ),
                                offset: off as u32,
                                len: len as u32,
                            });
                        }
                        let base = base_addr(&g, xi * s * l, xi * g.tile_words());
                        push_tiles(&mut st, &g, &regs, base, k * k);
                        if ch == g.groups - 1 && xi == wn - 1 {
                            let tiles = (0..wn)
                                .map(|i| OutTile {
                                    word: (i * g.tile_words()) as u32,
                                    ob: ob as u32,
                                    rt: rt as u32,
                                    x: (x0 + i) as u32,
                                })
                                .collect();
                            st.writeback = Some(writeback(&g, &regs, &mut out, words, tiles));
                        }
                        stages.push(st);
                    }
                }
            }
        }
    }
    assign_advances(&mut stages);
    finish(layer, cfg, mode, g, regs, weights, inputs, zero, output, out, stages)
}

/// Operand-register budget of a CF chunk.
fn cf_budget(g: &Geometry, num_vregs: usize, acc_regs: usize) -> usize {
    let free = num_vregs.saturating_sub(acc_regs);
    match ff_alloc(g, num_vregs) {
        Some(a) => (a.strip + a.weight).min(free),
        None => free,
    }
}

pub fn plan_cf(layer: &LayerSpec, cfg: &MachineConfig) -> Result<Schedule, DataflowError> {
    let mode = DataflowMode::CF;
    let g = Geometry::new(layer, cfg)?;
    check_limits(&g, layer, mode)?;
    let (k, l) = (g.k, g.l_col);
    let acc_regs = g.regs_for_words(g.tile_words());
    let budget = cf_budget(&g, cfg.num_vregs, acc_regs);
    let cost = |gc: usize| (g.regs_for_elems(gc * k * l), g.regs_for_elems(gc * k * k * g.tile_c));
    let gc = (1..=g.groups)
        .rev()
        .find(|&gc| {
            let (i, w) = cost(gc);
            i + w <= budget
        })
        .ok_or_else(|| infeasible(layer, mode, "one channel window does not fit in the VRF"))?;
    let (in_regs, w_regs) = cost(gc);
    let regs = RegAlloc {
        acc: (0, acc_regs as u8),
        input: (acc_regs as u8, in_regs as u8),
        weight: ((acc_regs + in_regs) as u8, w_regs as u8),
    };
    let eb = g.elem_bytes;
    let weights = 0u64;
    let inputs = weights + (g.ob_count * g.groups * g.weight_block() * eb) as u64;
    let zero = inputs + (g.rt_count * g.ow * g.groups * k * l * eb) as u64;
    let output = zero + (g.reg_elems * eb) as u64;
    let mut out = output;

    let mut stages = Vec::new();
    for ob in 0..g.ob_count {
        for rt in 0..g.rt_count {
            for x in 0..g.ow {
                for g0 in (0..g.groups).step_by(gc) {
                    let n = gc.min(g.groups - g0);
                    let mut st = Stage::new(StageId::Cf {
                        ob: ob as u32,
                        rt: rt as u32,
                        x: x as u32,
                        g0: g0 as u32,
                        groups: n as u32,
                    });
                    let waddr = weights + ((ob * g.groups + g0) * g.weight_block() * eb) as u64;
                    push_loads(
                        &mut st,
                        RegionKind::Weight,
                        LoadMode::Ordered,
                        regs.weight.0,
                        waddr,
                        n * g.weight_block(),
                        g.reg_elems * g.lanes,
                        eb,
                    );
                    let iaddr = inputs + ((((rt * g.ow + x) * g.groups + g0) * k * l) * eb) as u64;
                    push_loads(
                        &mut st,
                        RegionKind::Input,
                        LoadMode::Broadcast,
                        regs.input.0,
                        iaddr,
                        n * k * l,
                        g.reg_elems,
                        eb,
                    );
                    push_tiles(&mut st, &g, &regs, base_addr(&g, 0, 0), n * k * k);
                    if g0 + n == g.groups {
                        let tile = OutTile {
                            word: 0,
                            ob: ob as u32,
                            rt: rt as u32,
                            x: x as u32,
                        };
                        st.writeback = Some(writeback(&g, &regs, &mut out, g.tile_words(), vec![tile]));
                    }
                    stages.push(st);
                }
            }
        }
    }
    assign_advances(&mut stages);
    finish(layer, cfg, mode, g, regs, weights, inputs, zero, output, out, stages)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    layer: &LayerSpec,
    cfg: &MachineConfig,
    strategy: DataflowMode,
    geometry: Geometry,
    regs: RegAlloc,
    weights: u64,
    inputs: u64,
    zero: u64,
    output: u64,
    end: u64,
    stages: Vec<Stage>,
) -> Result<Schedule, DataflowError> {
    let mut s = Schedule {
        layer: layer.clone(),
        cfg: cfg.clone(),
        strategy,
        tile_h: cfg.tile_r,
        geometry,
        regs,
        layout: MemoryLayout {
            weights,
            inputs,
            zero,
            output,
            total: end,
        },
        stages,
        est_cycles: 0,
        vrf_peak_bits: regs.total() * cfg.reg_bits(),
    };
    let program = lower(&s)?;
    s.est_cycles = estimate_cycles(cfg, program.iter().map(|i| &i.instr))?;
    Ok(s)
}

fn set_cfg(prog: &mut Vec<Issue>, s: &Schedule, reg: CfgReg, value: u32) -> Result<(), DataflowError> {
    if value > MAX_CFG_VALUE as u32 {
        return Err(infeasible(
            &s.layer,
            s.strategy,
            format!("{} value {value} exceeds the VSETCFG field", reg.mnemonic()),
        ));
    }
    prog.push(Issue::new(Instruction::VSetCfg {
        reg,
        value: value as u16,
    }));
    Ok(())
}

/// Emits `VSACFG`, then each stage's loads, computes and stores. Cursor
/// registers are written only where the auto-advanced value differs.
pub fn lower(s: &Schedule) -> Result<Vec<Issue>, DataflowError> {
    let mut prog = vec![Issue::new(Instruction::VsaCfg {
        precision: s.layer.precision,
        dataflow: s.strategy,
    })];
    let mut cur = AddrGen::default();
    for st in &s.stages {
        for l in &st.prefetch {
            let instr = match l.mode {
                LoadMode::Broadcast => Instruction::VsaLd {
                    vd: l.reg,
                    base: ADDR_XREG,
                    count: l.count,
                },
                LoadMode::Ordered => Instruction::Vle {
                    vd: l.reg,
                    base: ADDR_XREG,
                    count: l.count,
                },
            };
            prog.push(Issue::with_scalar(instr, l.addr));
        }
        for t in &st.compute {
            let want = t.addr;
            let fields = [
                (CfgReg::KernelSize, cur.ksize, want.ksize),
                (CfgReg::ColPitch, cur.col_pitch, want.col_pitch),
                (CfgReg::RowStep, cur.row_step, want.row_step),
                (CfgReg::InOff, cur.in_off, want.in_off),
                (CfgReg::InAdv, cur.in_adv, want.in_adv),
                (CfgReg::WOff, cur.w_off, want.w_off),
                (CfgReg::WAdv, cur.w_adv, want.w_adv),
                (CfgReg::AccOff, cur.acc_off, want.acc_off),
                (CfgReg::AccAdv, cur.acc_adv, want.acc_adv),
            ];
            for (reg, have, need) in fields {
                if have != need {
                    set_cfg(&mut prog, s, reg, need)?;
                }
            }
            prog.push(Issue::new(Instruction::VsaM {
                vs1: t.vs1,
                vs2: t.vs2,
                acc: t.acc,
                steps: t.steps,
            }));
            cur = want;
            cur.advance();
        }
        if let Some(wb) = &st.writeback {
            for sd in &wb.stores {
                prog.push(Issue::with_scalar(
                    Instruction::Vse {
                        vs: sd.reg,
                        base: ADDR_XREG,
                        count: sd.count,
                    },
                    sd.addr,
                ));
            }
        }
    }
    Ok(prog)
}
