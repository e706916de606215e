//! Control state and the cycle cost of every instruction.
//!
//! The executor and the planners both drive [`Control::step`], so a
//! schedule's estimate and its simulation cannot drift apart.
//!
//! Instructions issue back to back with no overlap. Costs:
//!
//! | instruction | cycles |
//! |---|---|
//! | `VSACFG`, `VSETCFG` | 1 |
//! | `VSALD`, `VLE`, `VSE` | `mem_latency + ceil(count * element_bits / mem_bw_bits)` |
//! | `VSAM` under FF | `tile_c` refill + `tile_r + tile_c - 1 + steps` + `tile_c` drain |
//! | `VSAM` under CF | `tile_r + tile_c - 1 + steps` |
//!
//! Under CF the accumulator tile stays resident in the array. It is
//! flushed (`tile_c` cycles, charged to the instruction that forces it) by
//! a `VSAM` targeting another tile, a `VSE`, a `VSACFG`, a load into a
//! register holding the tile, or the end of the program.

use serde::{Deserialize, Serialize};

use super::{ExecError, MachineConfig};
use crate::isa::{CfgReg, DataflowMode, Instruction, Precision};
use crate::sau::AddrGen;

/// Location of an accumulator tile: register group and 32-bit word offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AccTag {
    pub reg: u8,
    pub word: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Csr {
    pub precision: Option<Precision>,
    pub dataflow: DataflowMode,
    pub vl: u16,
    pub addr: AddrGen,
}

impl Default for Csr {
    fn default() -> Self {
        Csr {
            precision: None,
            dataflow: DataflowMode::FF,
            vl: 0,
            addr: AddrGen::default(),
        }
    }
}

/// What the data path has to do for one instruction, and what it costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepPlan {
    pub cycles: u64,
    /// Resident CF tile to write back before executing.
    pub flush: Option<AccTag>,
    /// For `VSAM`: cursor snapshot at issue and the tile it accumulates into.
    pub addr: AddrGen,
    pub tag: Option<AccTag>,
    /// For `VSAM` under CF: the array starts a new chain from zero.
    pub open_chain: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Control {
    pub csr: Csr,
    pub resident: Option<AccTag>,
    prev_vsam_cycles: u64,
}

impl Control {
    pub fn precision(&self) -> Result<Precision, ExecError> {
        self.csr.precision.ok_or(ExecError::UnconfiguredPrecision)
    }

    fn take_flush(&mut self, cfg: &MachineConfig) -> (Option<AccTag>, u64) {
        match self.resident.take() {
            Some(t) => (Some(t), cfg.tile_c as u64),
            None => (None, 0),
        }
    }

    fn tile_regs(&self, cfg: &MachineConfig, tag: AccTag) -> std::ops::RangeInclusive<usize> {
        let words = (cfg.tile_r * cfg.tile_c) as u32;
        let rb = cfg.reg_bytes() as u32;
        let first = tag.reg as u32 + tag.word * 4 / rb;
        let last = tag.reg as u32 + ((tag.word + words) * 4 - 1) / rb;
        first as usize..=last as usize
    }

    pub fn step(&mut self, cfg: &MachineConfig, instr: &Instruction) -> Result<StepPlan, ExecError> {
        let mut plan = StepPlan {
            cycles: 0,
            flush: None,
            addr: self.csr.addr,
            tag: None,
            open_chain: false,
        };
        let prev_vsam = std::mem::take(&mut self.prev_vsam_cycles);
        match *instr {
            Instruction::VsaCfg { precision, dataflow } => {
                let (f, c) = self.take_flush(cfg);
                plan.flush = f;
                plan.cycles = 1 + c;
                self.csr.precision = Some(precision);
                self.csr.dataflow = dataflow;
            }
            Instruction::VSetCfg { reg, value } => {
                let v = value as u32;
                let a = &mut self.csr.addr;
                match reg {
                    CfgReg::Vl => self.csr.vl = value,
                    CfgReg::KernelSize => a.ksize = v,
                    CfgReg::ColPitch => a.col_pitch = v,
                    CfgReg::RowStep => a.row_step = v,
                    CfgReg::InOff => a.in_off = v,
                    CfgReg::InAdv => a.in_adv = v,
                    CfgReg::WOff => a.w_off = v,
                    CfgReg::WAdv => a.w_adv = v,
                    CfgReg::AccOff => a.acc_off = v,
                    CfgReg::AccAdv => a.acc_adv = v,
                }
                plan.cycles = 1;
            }
            Instruction::VsaLd { vd, count, .. } | Instruction::Vle { vd, count, .. } => {
                let p = self.precision()?;
                let mut extra = 0;
                if let Some(tag) = self.resident {
                    if self.tile_regs(cfg, tag).contains(&(vd as usize)) {
                        let (f, c) = self.take_flush(cfg);
                        plan.flush = f;
                        extra = c;
                    }
                }
                let mut load = cfg.transfer_cycles(count as u64 * p.element_bits() as u64);
                if cfg.overlap_load_compute {
                    load = load.saturating_sub(prev_vsam);
                }
                plan.cycles = load + extra;
            }
            Instruction::Vse { count, .. } => {
                let p = self.precision()?;
                let (f, c) = self.take_flush(cfg);
                plan.flush = f;
                plan.cycles = c + cfg.transfer_cycles(count as u64 * p.element_bits() as u64);
            }
            Instruction::VsaM { acc, steps, .. } => {
                self.precision()?;
                let sau = cfg.sau();
                let tag = AccTag {
                    reg: acc,
                    word: self.csr.addr.acc_off,
                };
                plan.tag = Some(tag);
                let tile = sau.tile_cycles(steps as usize);
                plan.cycles = match self.csr.dataflow {
                    DataflowMode::FF => tile + 2 * sau.drain_cycles(),
                    DataflowMode::CF => {
                        let mut c = tile;
                        if self.resident != Some(tag) {
                            let (f, fc) = self.take_flush(cfg);
                            plan.flush = f;
                            c += fc;
                            plan.open_chain = true;
                            self.resident = Some(tag);
                        }
                        c
                    }
                };
                self.prev_vsam_cycles = plan.cycles;
                self.csr.addr.advance();
            }
        }
        Ok(plan)
    }

    /// End of program: write back a resident tile.
    pub fn finish(&mut self, cfg: &MachineConfig) -> StepPlan {
        let (flush, cycles) = self.take_flush(cfg);
        StepPlan {
            cycles,
            flush,
            addr: self.csr.addr,
            tag: None,
            open_chain: false,
        }
    }
}

/// Cycle count of a program without executing its data path.
pub fn estimate_cycles<'a, I>(cfg: &MachineConfig, program: I) -> Result<u64, ExecError>
where
    I: IntoIterator<Item = &'a Instruction>,
{
    let mut ctl = Control::default();
    let mut total = 0;
    for instr in program {
        total += ctl.step(cfg, instr)?.cycles;
    }
    Ok(total + ctl.finish(cfg).cycles)
}
