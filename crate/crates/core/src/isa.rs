//! Binary encoding of the customized vector instructions.
//!
//! Every instruction lives on the custom-0 major opcode and is selected by
//! `funct3`. The normative bit layout is `docs/encoding.md`; the constants in
//! this module mirror that table one-to-one.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// custom-0 major opcode, bits [6:0].
pub const OPCODE_CUSTOM0: u32 = 0b000_1011;

pub const FUNCT3_VSACFG: u32 = 0b000;
pub const FUNCT3_VSALD: u32 = 0b001;
pub const FUNCT3_VSAM: u32 = 0b010;
pub const FUNCT3_VSETCFG: u32 = 0b011;
pub const FUNCT3_VLE: u32 = 0b100;
pub const FUNCT3_VSE: u32 = 0b101;

/// Largest element count a load/store can carry (12-bit field).
pub const MAX_COUNT: u16 = 0xFFF;
/// Largest immediate a `VSETCFG` can carry (12-bit field).
pub const MAX_CFG_VALUE: u16 = 0xFFF;
/// `VSAM.steps` is stored as `steps - 1` in 7 bits.
pub const MAX_STEPS: u16 = 128;
pub const NUM_REGS: u8 = 32;

/// Reserved-zero mask of `VSACFG` (bits [31:23], [19:15], [11:7]).
pub const VSACFG_RESERVED_MASK: u32 = (0x1FF << 23) | (0x1F << 15) | (0x1F << 7);
/// Reserved-zero mask of `VSETCFG` (bits [19:15]).
pub const VSETCFG_RESERVED_MASK: u32 = 0x1F << 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Precision {
    P4,
    P8,
    P16,
}

impl Precision {
    pub const ALL: [Precision; 3] = [Precision::P4, Precision::P8, Precision::P16];

    /// Operand width in bits.
    pub const fn bits(self) -> u32 {
        match self {
            Precision::P4 => 4,
            Precision::P8 => 8,
            Precision::P16 => 16,
        }
    }

    /// Operands fused into one unified element along the input channels.
    pub const fn ic_par(self) -> usize {
        match self {
            Precision::P4 => 16,
            Precision::P8 => 4,
            Precision::P16 => 1,
        }
    }

    /// Width of one unified element: `ic_par * bits`.
    pub const fn element_bits(self) -> u32 {
        self.ic_par() as u32 * self.bits()
    }

    pub const fn element_bytes(self) -> usize {
        self.element_bits() as usize / 8
    }

    pub const fn min_value(self) -> i32 {
        -(1 << (self.bits() - 1))
    }

    pub const fn max_value(self) -> i32 {
        (1 << (self.bits() - 1)) - 1
    }

    pub fn contains(self, v: i32) -> bool {
        (self.min_value()..=self.max_value()).contains(&v)
    }

    pub fn from_bits(bits: u32) -> Option<Precision> {
        match bits {
            4 => Some(Precision::P4),
            8 => Some(Precision::P8),
            16 => Some(Precision::P16),
            _ => None,
        }
    }

    const fn code(self) -> u32 {
        match self {
            Precision::P4 => 0b00,
            Precision::P8 => 0b01,
            Precision::P16 => 0b10,
        }
    }

    fn from_code(code: u32) -> Option<Precision> {
        match code {
            0b00 => Some(Precision::P4),
            0b01 => Some(Precision::P8),
            0b10 => Some(Precision::P16),
            _ => None,
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.bits())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DataflowMode {
    /// Feature-map first: partial sums live in the VRF between channel stages.
    FF,
    /// Channel first: partial sums stay inside the systolic array.
    CF,
}

impl fmt::Display for DataflowMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataflowMode::FF => f.write_str("ff"),
            DataflowMode::CF => f.write_str("cf"),
        }
    }
}

/// Configuration registers writable through `VSETCFG`.
///
/// Apart from `Vl`, these program the operand requester's address
/// generator: stream geometry and post-incremented operand cursors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CfgReg {
    Vl,
    KernelSize,
    ColPitch,
    RowStep,
    InOff,
    InAdv,
    WOff,
    WAdv,
    AccOff,
    AccAdv,
}

impl CfgReg {
    pub const ALL: [CfgReg; 10] = [
        CfgReg::Vl,
        CfgReg::KernelSize,
        CfgReg::ColPitch,
        CfgReg::RowStep,
        CfgReg::InOff,
        CfgReg::InAdv,
        CfgReg::WOff,
        CfgReg::WAdv,
        CfgReg::AccOff,
        CfgReg::AccAdv,
    ];

    pub const fn index(self) -> u32 {
        self as u32
    }

    pub fn from_index(i: u32) -> Option<CfgReg> {
        CfgReg::ALL.get(i as usize).copied()
    }

    pub const fn mnemonic(self) -> &'static str {
        match self {
            CfgReg::Vl => "vl",
            CfgReg::KernelSize => "ksize",
            CfgReg::ColPitch => "pitch",
            CfgReg::RowStep => "rowstep",
            CfgReg::InOff => "inoff",
            CfgReg::InAdv => "inadv",
            CfgReg::WOff => "woff",
            CfgReg::WAdv => "wadv",
            CfgReg::AccOff => "accoff",
            CfgReg::AccAdv => "accadv",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<CfgReg> {
        CfgReg::ALL.into_iter().find(|r| r.mnemonic() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Instruction {
    VsaCfg {
        precision: Precision,
        dataflow: DataflowMode,
    },
    /// Broadcast load: the same bytes land in register `vd` of every lane.
    VsaLd {
        vd: u8,
        base: u8,
        count: u16,
    },
    VsaM {
        vs1: u8,
        vs2: u8,
        acc: u8,
        steps: u16,
    },
    VSetCfg {
        reg: CfgReg,
        value: u16,
    },
    /// Ordered-allocation load: element `i` goes to lane `i % lanes`.
    Vle {
        vd: u8,
        base: u8,
        count: u16,
    },
    Vse {
        vs: u8,
        base: u8,
        count: u16,
    },
}

impl Instruction {
    pub const fn mnemonic(&self) -> &'static str {
        match self {
            Instruction::VsaCfg { .. } => "vsacfg",
            Instruction::VsaLd { .. } => "vsald",
            Instruction::VsaM { .. } => "vsam",
            Instruction::VSetCfg { .. } => "vsetcfg",
            Instruction::Vle { .. } => "vle",
            Instruction::Vse { .. } => "vse",
        }
    }

    /// `VSALD` always broadcasts; no other instruction does.
    pub const fn is_broadcast(&self) -> bool {
        matches!(self, Instruction::VsaLd { .. })
    }

    pub const fn is_memory(&self) -> bool {
        matches!(
            self,
            Instruction::VsaLd { .. } | Instruction::Vle { .. } | Instruction::Vse { .. }
        )
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Instruction::VsaCfg { precision, dataflow } => write!(f, "vsacfg {precision}, {dataflow}"),
            Instruction::VsaLd { vd, base, count } => write!(f, "vsald v{vd}, x{base}, {count}"),
            Instruction::VsaM { vs1, vs2, acc, steps } => write!(f, "vsam v{vs1}, v{vs2}, v{acc}, {steps}"),
            Instruction::VSetCfg { reg, value } => write!(f, "vsetcfg {}, {value}", reg.mnemonic()),
            Instruction::Vle { vd, base, count } => write!(f, "vle v{vd}, x{base}, {count}"),
            Instruction::Vse { vs, base, count } => write!(f, "vse v{vs}, x{base}, {count}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IsaError {
    #[error("field `{field}` value {value} exceeds its encoding range")]
    FieldOverflow { field: &'static str, value: u32 },
    #[error("illegal instruction word {0:#010x}")]
    IllegalInstruction(u32),
    #[error("reserved bits set in instruction word {word:#010x} (mask {mask:#010x})")]
    ReservedField { word: u32, mask: u32 },
}

fn check_reg(field: &'static str, r: u8) -> Result<u32, IsaError> {
    if r < NUM_REGS {
        Ok(r as u32)
    } else {
        Err(IsaError::FieldOverflow { field, value: r as u32 })
    }
}

fn check_count(field: &'static str, c: u16, max: u16) -> Result<u32, IsaError> {
    if c <= max {
        Ok(c as u32)
    } else {
        Err(IsaError::FieldOverflow { field, value: c as u32 })
    }
}

fn mem_word(funct3: u32, reg: u8, base: u8, count: u16) -> Result<u32, IsaError> {
    let reg = check_reg("vd", reg)?;
    let base = check_reg("base", base)?;
    let count = check_count("count", count, MAX_COUNT)?;
    Ok(OPCODE_CUSTOM0 | reg << 7 | funct3 << 12 | base << 15 | count << 20)
}

pub fn encode(instr: &Instruction) -> Result<u32, IsaError> {
    match *instr {
        Instruction::VsaCfg { precision, dataflow } => {
            let df = match dataflow {
                DataflowMode::FF => 0,
                DataflowMode::CF => 1,
            };
            Ok(OPCODE_CUSTOM0 | FUNCT3_VSACFG << 12 | precision.code() << 20 | df << 22)
        }
        Instruction::VsaLd { vd, base, count } => mem_word(FUNCT3_VSALD, vd, base, count),
        Instruction::Vle { vd, base, count } => mem_word(FUNCT3_VLE, vd, base, count),
        Instruction::Vse { vs, base, count } => mem_word(FUNCT3_VSE, vs, base, count),
        Instruction::VsaM { vs1, vs2, acc, steps } => {
            let vs1 = check_reg("vs1", vs1)?;
            let vs2 = check_reg("vs2", vs2)?;
            let acc = check_reg("acc", acc)?;
            if steps == 0 || steps > MAX_STEPS {
                return Err(IsaError::FieldOverflow {
                    field: "steps",
                    value: steps as u32,
                });
            }
            let steps = (steps - 1) as u32;
            Ok(OPCODE_CUSTOM0 | acc << 7 | FUNCT3_VSAM << 12 | vs1 << 15 | vs2 << 20 | steps << 25)
        }
        Instruction::VSetCfg { reg, value } => {
            let value = check_count("value", value, MAX_CFG_VALUE)?;
            Ok(OPCODE_CUSTOM0 | reg.index() << 7 | FUNCT3_VSETCFG << 12 | value << 20)
        }
    }
}

#[inline]
fn bits(word: u32, lo: u32, width: u32) -> u32 {
    (word >> lo) & ((1 << width) - 1)
}

/// Strict decode: unknown opcodes/functs are illegal, reserved bits must be zero.
pub fn decode(word: u32) -> Result<Instruction, IsaError> {
    if bits(word, 0, 7) != OPCODE_CUSTOM0 {
        return Err(IsaError::IllegalInstruction(word));
    }
    let rd = bits(word, 7, 5) as u8;
    let rs1 = bits(word, 15, 5) as u8;
    let hi12 = bits(word, 20, 12) as u16;
    match bits(word, 12, 3) {
        FUNCT3_VSACFG => {
            if word & VSACFG_RESERVED_MASK != 0 {
                return Err(IsaError::ReservedField {
                    word,
                    mask: VSACFG_RESERVED_MASK,
                });
            }
            let precision =
                Precision::from_code(bits(word, 20, 2)).ok_or(IsaError::ReservedField { word, mask: 0b11 << 20 })?;
            let dataflow = if bits(word, 22, 1) == 0 {
                DataflowMode::FF
            } else {
                DataflowMode::CF
            };
            Ok(Instruction::VsaCfg { precision, dataflow })
        }
        FUNCT3_VSALD => Ok(Instruction::VsaLd {
            vd: rd,
            base: rs1,
            count: hi12,
        }),
        FUNCT3_VSAM => Ok(Instruction::VsaM {
            acc: rd,
            vs1: rs1,
            vs2: bits(word, 20, 5) as u8,
            steps: bits(word, 25, 7) as u16 + 1,
        }),
        FUNCT3_VSETCFG => {
            if word & VSETCFG_RESERVED_MASK != 0 {
                return Err(IsaError::ReservedField {
                    word,
                    mask: VSETCFG_RESERVED_MASK,
                });
            }
            let reg = CfgReg::from_index(rd as u32).ok_or(IsaError::IllegalInstruction(word))?;
            Ok(Instruction::VSetCfg { reg, value: hi12 })
        }
        FUNCT3_VLE => Ok(Instruction::Vle {
            vd: rd,
            base: rs1,
            count: hi12,
        }),
        FUNCT3_VSE => Ok(Instruction::Vse {
            vs: rd,
            base: rs1,
            count: hi12,
        }),
        _ => Err(IsaError::IllegalInstruction(word)),
    }
}
