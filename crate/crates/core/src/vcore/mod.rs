//! Vector core: configuration state, external memory, per-lane register
//! files and SAUs, and the in-order dispatch loop.

mod config;
mod memory;
pub mod timing;
mod vrf;

pub use config::{ConfigError, MachineConfig};
pub use memory::ExternalMemory;
pub use timing::{estimate_cycles, AccTag, Control, Csr, StepPlan};
pub use vrf::Vrf;

use serde::Serialize;
use thiserror::Error;

use crate::isa::{DataflowMode, Instruction, Precision};
use crate::sau::{PackedElement, SauError, SauState};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("memory access out of bounds: {len} bytes at {addr:#x}")]
    OutOfBounds { addr: u64, len: usize },
    #[error("register v{reg} overflow: {bytes} bytes into a {capacity}-byte slice")]
    RegisterOverflow { reg: usize, bytes: usize, capacity: usize },
    #[error("VRF read out of range: {len} bytes at v{reg}+{offset}")]
    VrfRange { reg: usize, offset: usize, len: usize },
    #[error("no VSACFG executed since reset")]
    UnconfiguredPrecision,
    #[error(transparent)]
    Sau(#[from] SauError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("pc {pc}: {source}")]
pub struct RunError {
    pub pc: usize,
    #[source]
    pub source: ExecError,
}

/// An instruction as dispatched by the scalar core, together with the
/// value of its scalar operand (`x[base]` for loads and stores).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Issue {
    pub instr: Instruction,
    pub scalar: u64,
}

impl Issue {
    pub fn new(instr: Instruction) -> Self {
        Issue { instr, scalar: 0 }
    }

    pub fn with_scalar(instr: Instruction, scalar: u64) -> Self {
        Issue { instr, scalar }
    }
}

impl From<Instruction> for Issue {
    fn from(instr: Instruction) -> Self {
        Issue::new(instr)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub pc: usize,
    pub instr: Instruction,
    pub start: u64,
    pub cycles: u64,
    pub mem_read_bytes: u64,
    pub mem_write_bytes: u64,
    /// For `VSALD`: whether every lane's destination register matched.
    pub broadcast_identical: Option<bool>,
}

pub type Trace = Vec<TraceEvent>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Stats {
    pub instructions: u64,
    pub mem_read_bytes: u64,
    pub mem_write_bytes: u64,
    pub vsam_count: u64,
    /// MAC slots issued across all lanes (padding included).
    pub mac_slots: u64,
    pub flushes: u64,
    pub broadcast_loads: u64,
    pub broadcast_mismatches: u64,
}

#[derive(Debug, Clone)]
pub struct MachineState {
    pub cfg: MachineConfig,
    pub ctl: Control,
    pub vrf: Vec<Vrf>,
    pub sau: Vec<SauState>,
    pub cycle: u64,
    pub stats: Stats,
    pub trace: Option<Trace>,
    in_feeds: Vec<Vec<PackedElement>>,
    w_feeds: Vec<Vec<PackedElement>>,
}

impl MachineState {
    pub fn new(cfg: MachineConfig) -> Self {
        let vrf = (0..cfg.lanes)
            .map(|_| Vrf::new(cfg.num_vregs, cfg.reg_bytes()))
            .collect();
        let sau = (0..cfg.lanes).map(|_| SauState::new(cfg.sau())).collect();
        MachineState {
            ctl: Control::default(),
            vrf,
            sau,
            cycle: 0,
            stats: Stats::default(),
            trace: None,
            in_feeds: vec![Vec::new(); cfg.tile_r],
            w_feeds: vec![Vec::new(); cfg.tile_c],
            cfg,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn csr(&self) -> &Csr {
        &self.ctl.csr
    }

    /// Executes one instruction; returns the cycles it was charged.
    pub fn exec(&mut self, issue: &Issue, mem: &mut ExternalMemory) -> Result<u64, ExecError> {
        let plan = self.ctl.step(&self.cfg, &issue.instr)?;
        if let Some(tag) = plan.flush {
            self.flush(tag)?;
        }
        let mut ev = TraceEvent {
            pc: self.stats.instructions as usize,
            instr: issue.instr,
            start: self.cycle,
            cycles: plan.cycles,
            mem_read_bytes: 0,
            mem_write_bytes: 0,
            broadcast_identical: None,
        };
        match issue.instr {
            Instruction::VsaCfg { .. } | Instruction::VSetCfg { .. } => {}
            Instruction::VsaLd { vd, count, .. } => {
                let same = self.exec_vsald(vd, issue.scalar, count, mem)?;
                ev.mem_read_bytes = self.bytes_of(count);
                ev.broadcast_identical = Some(same);
                self.stats.broadcast_loads += 1;
                if !same {
                    self.stats.broadcast_mismatches += 1;
                }
            }
            Instruction::Vle { vd, count, .. } => {
                self.exec_vle(vd, issue.scalar, count, mem)?;
                ev.mem_read_bytes = self.bytes_of(count);
            }
            Instruction::Vse { vs, count, .. } => {
                self.exec_vse(vs, issue.scalar, count, mem)?;
                ev.mem_write_bytes = self.bytes_of(count);
            }
            Instruction::VsaM { vs1, vs2, steps, .. } => {
                self.exec_vsam(vs1, vs2, steps as usize, &plan)?;
            }
        }
        self.cycle += plan.cycles;
        self.stats.instructions += 1;
        self.stats.mem_read_bytes += ev.mem_read_bytes;
        self.stats.mem_write_bytes += ev.mem_write_bytes;
        if let Some(t) = self.trace.as_mut() {
            t.push(ev);
        }
        Ok(plan.cycles)
    }

    /// Writes back a resident tile at the end of a program. Its cycles are
    /// charged to the last traced instruction.
    pub fn finish(&mut self) -> Result<u64, ExecError> {
        let plan = self.ctl.finish(&self.cfg);
        if let Some(tag) = plan.flush {
            self.flush(tag)?;
        }
        self.cycle += plan.cycles;
        if let Some(last) = self.trace.as_mut().and_then(|t| t.last_mut()) {
            last.cycles += plan.cycles;
        }
        Ok(plan.cycles)
    }

    fn bytes_of(&self, count: u16) -> u64 {
        let p = self.ctl.csr.precision.unwrap_or(Precision::P16);
        count as u64 * p.element_bytes() as u64
    }

    fn flush(&mut self, tag: AccTag) -> Result<(), ExecError> {
        self.stats.flushes += 1;
        for (sau, vrf) in self.sau.iter_mut().zip(self.vrf.iter_mut()) {
            for (i, a) in sau.drain().iter().enumerate() {
                vrf.write_group_word(tag.reg as usize, tag.word as usize + i, a.0)?;
            }
        }
        Ok(())
    }

    fn exec_vsald(&mut self, vd: u8, addr: u64, count: u16, mem: &ExternalMemory) -> Result<bool, ExecError> {
        let p = self.ctl.precision()?;
        let n = count as usize * p.element_bytes();
        let cap = self.cfg.reg_bytes();
        if n > cap {
            return Err(ExecError::RegisterOverflow {
                reg: vd as usize,
                bytes: n,
                capacity: cap,
            });
        }
        let data = mem.read(addr, n)?;
        for vrf in self.vrf.iter_mut() {
            vrf.write(vd as usize, 0, data)?;
        }
        let first = &self.vrf[0].reg(vd as usize)[..n];
        Ok(self.vrf.iter().all(|v| &v.reg(vd as usize)[..n] == first))
    }

    fn exec_vle(&mut self, vd: u8, addr: u64, count: u16, mem: &ExternalMemory) -> Result<(), ExecError> {
        let p = self.ctl.precision()?;
        let eb = p.element_bytes();
        let lanes = self.cfg.lanes;
        let per_lane = (count as usize).div_ceil(lanes) * eb;
        if per_lane > self.cfg.reg_bytes() {
            return Err(ExecError::RegisterOverflow {
                reg: vd as usize,
                bytes: per_lane,
                capacity: self.cfg.reg_bytes(),
            });
        }
        let data = mem.read(addr, count as usize * eb)?;
        let mut bufs = vec![Vec::with_capacity(per_lane); lanes];
        for (i, chunk) in data.chunks_exact(eb).enumerate() {
            bufs[i % lanes].extend_from_slice(chunk);
        }
        for (vrf, buf) in self.vrf.iter_mut().zip(&bufs) {
            vrf.write(vd as usize, 0, buf)?;
        }
        Ok(())
    }

    fn exec_vse(&mut self, vs: u8, addr: u64, count: u16, mem: &mut ExternalMemory) -> Result<(), ExecError> {
        let p = self.ctl.precision()?;
        let eb = p.element_bytes();
        let lanes = self.cfg.lanes;
        let per_lane = (count as usize).div_ceil(lanes) * eb;
        if per_lane > self.cfg.reg_bytes() {
            return Err(ExecError::RegisterOverflow {
                reg: vs as usize,
                bytes: per_lane,
                capacity: self.cfg.reg_bytes(),
            });
        }
        let mut out = Vec::with_capacity(count as usize * eb);
        for i in 0..count as usize {
            let slot = i / lanes * eb;
            out.extend_from_slice(&self.vrf[i % lanes].reg(vs as usize)[slot..slot + eb]);
        }
        mem.write(addr, &out)
    }

    fn exec_vsam(&mut self, vs1: u8, vs2: u8, steps: usize, plan: &StepPlan) -> Result<(), ExecError> {
        let p = self.ctl.precision()?;
        let eb = p.element_bytes();
        let tag = plan.tag.expect("VSAM plan carries its tile");
        let ag = plan.addr;
        let (tr, tc) = (self.cfg.tile_r, self.cfg.tile_c);
        let dataflow = self.ctl.csr.dataflow;
        for lane in 0..self.cfg.lanes {
            let vrf = &self.vrf[lane];
            for (r, feed) in self.in_feeds.iter_mut().enumerate() {
                feed.clear();
                for s in 0..steps as u32 {
                    let a = ag.input_addr(s, r as u32) as usize * eb;
                    feed.push(PackedElement::from_bytes(p, vrf.read_group(vs1 as usize, a, eb)?));
                }
            }
            for (c, feed) in self.w_feeds.iter_mut().enumerate() {
                feed.clear();
                for s in 0..steps as u32 {
                    let a = ag.weight_addr(s, c as u32, tc as u32) as usize * eb;
                    feed.push(PackedElement::from_bytes(p, vrf.read_group(vs2 as usize, a, eb)?));
                }
            }
            let sau = &mut self.sau[lane];
            sau.requester = ag;
            match dataflow {
                DataflowMode::FF => {
                    let mut grid = Vec::with_capacity(tr * tc);
                    for i in 0..tr * tc {
                        grid.push(crate::sau::Accumulator(
                            vrf.read_group_word(tag.reg as usize, tag.word as usize + i)?,
                        ));
                    }
                    sau.refill(&grid);
                    sau.run_tile(&self.in_feeds, &self.w_feeds, steps)?;
                    let out = sau.drain();
                    let vrf = &mut self.vrf[lane];
                    for (i, a) in out.iter().enumerate() {
                        vrf.write_group_word(tag.reg as usize, tag.word as usize + i, a.0)?;
                    }
                }
                DataflowMode::CF => {
                    if plan.open_chain {
                        sau.clear();
                    }
                    sau.run_tile(&self.in_feeds, &self.w_feeds, steps)?;
                }
            }
        }
        self.stats.vsam_count += 1;
        self.stats.mac_slots += (steps * tr * tc * p.ic_par() * self.cfg.lanes) as u64;
        Ok(())
    }
}

/// Executes `program` in order and flushes any resident tile at the end.
pub fn run(
    program: &[Issue],
    mut state: MachineState,
    mem: &mut ExternalMemory,
) -> Result<(MachineState, Trace), RunError> {
    for (pc, issue) in program.iter().enumerate() {
        state.exec(issue, mem).map_err(|source| RunError { pc, source })?;
    }
    state.finish().map_err(|source| RunError {
        pc: program.len(),
        source,
    })?;
    let trace = state.trace.take().unwrap_or_default();
    Ok((state, trace))
}
