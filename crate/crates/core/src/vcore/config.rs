use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::Precision;
use crate::sau::SauConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Machine parameters. The text form is one `key = value` per line, keys
/// exactly as the field names; omitted keys keep their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MachineConfig {
    pub lanes: usize,
    pub vlen_bits: usize,
    pub num_vregs: usize,
    pub mem_bw_bits: usize,
    pub mem_latency: u64,
    pub freq_mhz: f64,
    pub tile_r: usize,
    pub tile_c: usize,
    pub queue_depth: usize,
    /// Hide a load behind the immediately preceding `VSAM`.
    pub overlap_load_compute: bool,
    /// Optional user-supplied die area; enables GOPS/mm^2 columns.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub area_mm2: Option<f64>,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            lanes: 4,
            vlen_bits: 4096,
            num_vregs: 32,
            mem_bw_bits: 128,
            mem_latency: 4,
            freq_mhz: 500.0,
            tile_r: 4,
            tile_c: 4,
            queue_depth: 8,
            overlap_load_compute: false,
            area_mm2: None,
        }
    }
}

impl MachineConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: MachineConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.lanes == 0 {
            return bad("lanes must be >= 1");
        }
        if self.tile_r == 0 || self.tile_c == 0 {
            return bad("tile_r and tile_c must be >= 1");
        }
        if self.mem_bw_bits < 8 {
            return bad("mem_bw_bits must be >= 8");
        }
        if self.num_vregs == 0 || self.num_vregs > 32 {
            return bad("num_vregs must be in 1..=32");
        }
        if self.queue_depth == 0 {
            return bad("queue_depth must be >= 1");
        }
        if !self.vlen_bits.is_multiple_of(self.lanes) {
            return bad("vlen_bits must be divisible by lanes");
        }
        let reg_bits = self.reg_bits();
        if !reg_bits.is_multiple_of(64) || reg_bits == 0 {
            return bad("per-lane register slice must be a non-zero multiple of 64 bits");
        }
        // NaN fails too
        if !self.freq_mhz.is_finite() || self.freq_mhz <= 0.0 {
            return bad("freq_mhz must be positive");
        }
        if matches!(self.area_mm2, Some(a) if !a.is_finite() || a <= 0.0) {
            return bad("area_mm2 must be positive");
        }
        Ok(())
    }

    /// Bits of one vector register held by one lane.
    pub fn reg_bits(&self) -> usize {
        self.vlen_bits / self.lanes
    }

    pub fn reg_bytes(&self) -> usize {
        self.reg_bits() / 8
    }

    /// Unified elements one lane's slice of a register can hold.
    pub fn reg_elems(&self, p: Precision) -> usize {
        self.reg_bits() / p.element_bits() as usize
    }

    pub fn vrf_bits_per_lane(&self) -> usize {
        self.num_vregs * self.reg_bits()
    }

    pub fn sau(&self) -> SauConfig {
        SauConfig {
            tile_r: self.tile_r,
            tile_c: self.tile_c,
            queue_depth: self.queue_depth,
        }
    }

    /// Cycles of one burst moving `bits` over the memory interface.
    pub fn transfer_cycles(&self, bits: u64) -> u64 {
        self.mem_latency + bits.div_ceil(self.mem_bw_bits as u64)
    }
}
