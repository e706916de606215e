//! Line-oriented assembly for the custom instruction set.
//!
//! ```text
//! # comment
//! vsacfg e8, cf
//! vsald  v4, x10, 64
//! vsam   v1, v2, v3, 16     # vs1, vs2, acc, steps
//! vsetcfg inoff, 12
//! ```

use thiserror::Error;

use crate::isa::{self, CfgReg, DataflowMode, Instruction, IsaError, Precision};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: {source}")]
    Encode {
        line: usize,
        #[source]
        source: IsaError,
    },
}

fn err(line: usize, reason: impl Into<String>) -> AsmError {
    AsmError::Parse {
        line,
        reason: reason.into(),
    }
}

fn reg(tok: &str, prefix: char, line: usize) -> Result<u8, AsmError> {
    let n = tok
        .strip_prefix(prefix)
        .and_then(|d| d.parse::<u8>().ok())
        .ok_or_else(|| err(line, format!("expected {prefix}-register, found `{tok}`")))?;
    if n >= isa::NUM_REGS {
        return Err(err(line, format!("register `{tok}` out of range")));
    }
    Ok(n)
}

fn imm(tok: &str, line: usize) -> Result<u16, AsmError> {
    let parsed = match tok.strip_prefix("0x") {
        Some(hex) => u16::from_str_radix(hex, 16),
        None => tok.parse::<u16>(),
    };
    parsed.map_err(|_| err(line, format!("bad immediate `{tok}`")))
}

/// Parses one source line. Returns `None` for blank and comment-only lines.
pub fn parse_line(text: &str, line: usize) -> Result<Option<Instruction>, AsmError> {
    let code = text.split('#').next().unwrap_or("").trim();
    if code.is_empty() {
        return Ok(None);
    }
    let (mnemonic, rest) = code.split_once(char::is_whitespace).unwrap_or((code, ""));
    let ops: Vec<&str> = if rest.trim().is_empty() {
        Vec::new()
    } else {
        rest.split(',').map(str::trim).collect()
    };
    let arity = |n: usize| {
        if ops.len() == n {
            Ok(())
        } else {
            Err(err(
                line,
                format!("`{mnemonic}` takes {n} operands, found {}", ops.len()),
            ))
        }
    };
    let instr = match mnemonic.to_ascii_lowercase().as_str() {
        "vsacfg" => {
            arity(2)?;
            let precision = match ops[0] {
                "e4" => Precision::P4,
                "e8" => Precision::P8,
                "e16" => Precision::P16,
                t => return Err(err(line, format!("unknown precision `{t}`"))),
            };
            let dataflow = match ops[1] {
                "ff" => DataflowMode::FF,
                "cf" => DataflowMode::CF,
                t => return Err(err(line, format!("unknown dataflow `{t}`"))),
            };
            Instruction::VsaCfg { precision, dataflow }
        }
        m @ ("vsald" | "vle" | "vse") => {
            arity(3)?;
            let r = reg(ops[0], 'v', line)?;
            let base = reg(ops[1], 'x', line)?;
            let count = imm(ops[2], line)?;
            match m {
                "vsald" => Instruction::VsaLd { vd: r, base, count },
                "vle" => Instruction::Vle { vd: r, base, count },
                _ => Instruction::Vse { vs: r, base, count },
            }
        }
        "vsam" => {
            arity(4)?;
            Instruction::VsaM {
                vs1: reg(ops[0], 'v', line)?,
                vs2: reg(ops[1], 'v', line)?,
                acc: reg(ops[2], 'v', line)?,
                steps: imm(ops[3], line)?,
            }
        }
        "vsetcfg" => {
            arity(2)?;
            let reg = CfgReg::from_mnemonic(ops[0])
                .ok_or_else(|| err(line, format!("unknown config register `{}`", ops[0])))?;
            Instruction::VSetCfg {
                reg,
                value: imm(ops[1], line)?,
            }
        }
        m => return Err(err(line, format!("unknown mnemonic `{m}`"))),
    };
    Ok(Some(instr))
}

/// Parses a whole source into instructions (no encoding).
pub fn parse(text: &str) -> Result<Vec<Instruction>, AsmError> {
    let mut out = Vec::new();
    for (i, l) in text.lines().enumerate() {
        if let Some(instr) = parse_line(l, i + 1)? {
            out.push(instr);
        }
    }
    Ok(out)
}

pub fn assemble(text: &str) -> Result<Vec<u32>, AsmError> {
    let mut words = Vec::new();
    for (i, l) in text.lines().enumerate() {
        if let Some(instr) = parse_line(l, i + 1)? {
            let w = isa::encode(&instr).map_err(|source| AsmError::Encode { line: i + 1, source })?;
            words.push(w);
        }
    }
    Ok(words)
}

/// One instruction per line, in the canonical form `assemble` accepts.
pub fn disassemble(words: &[u32]) -> Result<String, IsaError> {
    let mut out = String::new();
    for &w in words {
        out.push_str(&isa::decode(w)?.to_string());
        out.push('\n');
    }
    Ok(out)
}
