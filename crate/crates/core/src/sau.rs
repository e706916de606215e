//! Systolic array unit: one per lane.
//!
//! A `tile_r x tile_c` grid of PEs, each fusing sixteen 4-bit multipliers
//! into 1, 4 or 16 MACs per cycle. Rows map output-feature-map rows,
//! columns map output channels, and each PE reduces along input channels.
//! Accumulators are output-stationary and wrap modulo 2^32.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::Precision;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SauError {
    #[error("precision mismatch: {0:?} vs {1:?}")]
    PrecisionMismatch(Precision, Precision),
    #[error("operand {value} out of range for {precision:?}")]
    OperandRange { value: i32, precision: Precision },
    #[error("expected {expected} operands for {precision:?}, got {got}")]
    OperandCount {
        precision: Precision,
        expected: usize,
        got: usize,
    },
    #[error("{feed} feed lane {lane} ran dry after {available} of {steps} steps")]
    StreamUnderrun {
        feed: &'static str,
        lane: usize,
        available: usize,
        steps: usize,
    },
    #[error("expected {expected} {feed} feed lanes, got {got}")]
    FeedShape {
        feed: &'static str,
        expected: usize,
        got: usize,
    },
}

/// 1, 4 or 16 signed operands packed along the input-channel dimension.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PackedElement {
    precision: Precision,
    operands: [i16; 16],
}

impl std::fmt::Debug for PackedElement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}{:?}", self.precision, self.operands())
    }
}

impl PackedElement {
    pub fn new(precision: Precision, operands: &[i32]) -> Result<Self, SauError> {
        if operands.len() != precision.ic_par() {
            return Err(SauError::OperandCount {
                precision,
                expected: precision.ic_par(),
                got: operands.len(),
            });
        }
        let mut ops = [0i16; 16];
        for (slot, &v) in ops.iter_mut().zip(operands) {
            if !precision.contains(v) {
                return Err(SauError::OperandRange { value: v, precision });
            }
            *slot = v as i16;
        }
        Ok(PackedElement {
            precision,
            operands: ops,
        })
    }

    pub fn zero(precision: Precision) -> Self {
        PackedElement {
            precision,
            operands: [0; 16],
        }
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn operands(&self) -> &[i16] {
        &self.operands[..self.precision.ic_par()]
    }

    /// Decodes from `element_bytes` little-endian bytes. 4-bit operand `i`
    /// sits in byte `i / 2`, low nibble first.
    pub fn from_bytes(precision: Precision, bytes: &[u8]) -> Self {
        let mut ops = [0i16; 16];
        match precision {
            Precision::P16 => ops[0] = i16::from_le_bytes([bytes[0], bytes[1]]),
            Precision::P8 => {
                for (o, &b) in ops.iter_mut().zip(&bytes[..4]) {
                    *o = b as i8 as i16;
                }
            }
            Precision::P4 => {
                for (i, &b) in bytes[..8].iter().enumerate() {
                    ops[2 * i] = (((b << 4) as i8) >> 4) as i16;
                    ops[2 * i + 1] = ((b as i8) >> 4) as i16;
                }
            }
        }
        PackedElement {
            precision,
            operands: ops,
        }
    }

    pub fn write_bytes(&self, out: &mut [u8]) {
        match self.precision {
            Precision::P16 => out[..2].copy_from_slice(&self.operands[0].to_le_bytes()),
            Precision::P8 => {
                for (b, &o) in out[..4].iter_mut().zip(&self.operands) {
                    *b = o as i8 as u8;
                }
            }
            Precision::P4 => {
                for (i, b) in out[..8].iter_mut().enumerate() {
                    let lo = (self.operands[2 * i] as u8) & 0xF;
                    let hi = (self.operands[2 * i + 1] as u8) & 0xF;
                    *b = lo | hi << 4;
                }
            }
        }
    }
}

/// 32-bit two's-complement accumulator, wrapping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Accumulator(pub i32);

/// One PE cycle: `acc + sum(a[i] * w[i])`, wrapped to 32 bits.
pub fn pe_dot(a: &PackedElement, w: &PackedElement, acc: Accumulator) -> Result<Accumulator, SauError> {
    if a.precision != w.precision {
        return Err(SauError::PrecisionMismatch(a.precision, w.precision));
    }
    Ok(Accumulator(acc.0.wrapping_add(dot_unchecked(a, w))))
}

#[inline]
fn dot_unchecked(a: &PackedElement, w: &PackedElement) -> i32 {
    // |a*w| <= 2^30 at 16-bit; the sum of 16 4-bit products cannot overflow
    a.operands()
        .iter()
        .zip(w.operands())
        .fold(0i32, |s, (&x, &y)| s.wrapping_add(x as i32 * y as i32))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SauConfig {
    pub tile_r: usize,
    pub tile_c: usize,
    pub queue_depth: usize,
}

impl Default for SauConfig {
    fn default() -> Self {
        SauConfig {
            tile_r: 4,
            tile_c: 4,
            queue_depth: 8,
        }
    }
}

impl SauConfig {
    /// Systolic skew before the first result column is valid.
    pub fn pipeline_fill(&self) -> u64 {
        (self.tile_r + self.tile_c - 1) as u64
    }

    /// Extra cycles per step when a feed needs more entries than its queue holds.
    pub fn stall_per_step(&self) -> u64 {
        let need = self.tile_r.max(self.tile_c);
        (need.div_ceil(self.queue_depth.max(1)) - 1) as u64
    }

    /// Cycles of one `run_tile` with `steps` element pairs.
    pub fn tile_cycles(&self, steps: usize) -> u64 {
        if steps == 0 {
            0
        } else {
            self.pipeline_fill() + steps as u64 * (1 + self.stall_per_step())
        }
    }

    /// Draining (or refilling) the accumulator grid moves one PE column per cycle.
    pub fn drain_cycles(&self) -> u64 {
        self.tile_c as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelDims {
    pub ic: usize,
    pub oc: usize,
    pub fh: usize,
}

impl ParallelDims {
    pub fn macs_per_cycle(&self) -> usize {
        self.ic * self.oc * self.fh
    }
}

/// Input-channel, output-channel and feature-map-height parallelism of one lane.
pub fn parallelism_dims(cfg: &SauConfig, precision: Precision) -> ParallelDims {
    ParallelDims {
        ic: precision.ic_par(),
        oc: cfg.tile_c,
        fh: cfg.tile_r,
    }
}

/// Bounded FIFO occupancy counter. Pushes beyond depth are refused (the
/// producer stalls); nothing is ever dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperandQueue {
    pub depth: usize,
    pub occupancy: usize,
    pub pushed: u64,
    pub popped: u64,
    pub high_water: usize,
}

impl OperandQueue {
    pub fn new(depth: usize) -> Self {
        OperandQueue {
            depth,
            ..Default::default()
        }
    }

    /// Pushes up to `n` entries; returns how many were accepted.
    pub fn push(&mut self, n: usize) -> usize {
        let accepted = n.min(self.depth - self.occupancy);
        self.occupancy += accepted;
        self.pushed += accepted as u64;
        self.high_water = self.high_water.max(self.occupancy);
        accepted
    }

    pub fn pop(&mut self, n: usize) -> usize {
        let taken = n.min(self.occupancy);
        self.occupancy -= taken;
        self.popped += taken as u64;
        taken
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Queues {
    pub input: OperandQueue,
    pub weight: OperandQueue,
    pub acc: OperandQueue,
    pub output: OperandQueue,
}

/// Operand classes in arbiter priority order (highest first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OperandClass {
    Acc,
    Weight,
    Input,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub cycle: u64,
    pub class: OperandClass,
    pub addr: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Demand {
    pub acc: Vec<u32>,
    pub weights: Vec<u32>,
    pub inputs: Vec<u32>,
}

impl Demand {
    pub fn len(&self) -> usize {
        self.acc.len() + self.weights.len() + self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Fixed-priority arbitration (acc > weight > input), `ports` grants per cycle.
pub fn request_operands(demand: &Demand, ports: usize) -> Vec<Request> {
    let ports = ports.max(1);
    let classes = [
        (OperandClass::Acc, &demand.acc),
        (OperandClass::Weight, &demand.weights),
        (OperandClass::Input, &demand.inputs),
    ];
    let mut out = Vec::with_capacity(demand.len());
    let mut cycle = 0;
    let mut granted = 0;
    for (class, addrs) in classes {
        for &addr in addrs.iter() {
            out.push(Request { cycle, class, addr });
            granted += 1;
            if granted == ports {
                granted = 0;
                cycle += 1;
            }
        }
    }
    out
}

/// Operand address generator.
///
/// Step `s` of a stream touches input element
/// `in_off + (s / ksize) * col_pitch + s % ksize + r * row_step` for PE row
/// `r`, and weight element `w_off + s * tile_c + c` for PE column `c`. The
/// accumulator tile starts at 32-bit word `acc_off`. After each `VSAM` the
/// three cursors advance by their `*_adv` amounts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddrGen {
    pub ksize: u32,
    pub col_pitch: u32,
    pub row_step: u32,
    pub in_off: u32,
    pub in_adv: u32,
    pub w_off: u32,
    pub w_adv: u32,
    pub acc_off: u32,
    pub acc_adv: u32,
}

impl AddrGen {
    #[inline]
    pub fn input_addr(&self, step: u32, row: u32) -> u32 {
        let k = self.ksize.max(1);
        self.in_off + (step / k) * self.col_pitch + step % k + row * self.row_step
    }

    #[inline]
    pub fn weight_addr(&self, step: u32, col: u32, tile_c: u32) -> u32 {
        self.w_off + step * tile_c + col
    }

    pub fn tile_demand(&self, steps: u32, cfg: &SauConfig) -> Demand {
        let mut d = Demand::default();
        for s in 0..steps {
            for c in 0..cfg.tile_c as u32 {
                d.weights.push(self.weight_addr(s, c, cfg.tile_c as u32));
            }
            for r in 0..cfg.tile_r as u32 {
                d.inputs.push(self.input_addr(s, r));
            }
        }
        d
    }

    pub fn advance(&mut self) {
        self.in_off += self.in_adv;
        self.w_off += self.w_adv;
        self.acc_off += self.acc_adv;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SauState {
    pub config: SauConfig,
    /// Row-major `tile_r x tile_c`.
    pub acc_grid: Vec<Accumulator>,
    pub queues: Queues,
    pub requester: AddrGen,
}

impl SauState {
    pub fn new(config: SauConfig) -> Self {
        let q = || OperandQueue::new(config.queue_depth);
        SauState {
            config,
            acc_grid: vec![Accumulator::default(); config.tile_r * config.tile_c],
            queues: Queues {
                input: q(),
                weight: q(),
                acc: q(),
                output: q(),
            },
            requester: AddrGen::default(),
        }
    }

    pub fn acc(&self, r: usize, c: usize) -> Accumulator {
        self.acc_grid[r * self.config.tile_c + c]
    }

    pub fn clear(&mut self) {
        self.acc_grid.fill(Accumulator::default());
    }

    /// Streams `steps` element pairs through the array:
    /// `acc[r][c] += sum_s dot(inputs[r][s], weights[c][s])`.
    ///
    /// Returns `tile_r + tile_c - 1 + steps` cycles (0 when `steps == 0`),
    /// plus queue stalls if a queue is shallower than its feed.
    pub fn run_tile<I, W>(&mut self, inputs: &[I], weights: &[W], steps: usize) -> Result<u64, SauError>
    where
        I: AsRef<[PackedElement]>,
        W: AsRef<[PackedElement]>,
    {
        let (tr, tc) = (self.config.tile_r, self.config.tile_c);
        check_feeds("input", inputs, tr, steps)?;
        check_feeds("weight", weights, tc, steps)?;
        for s in 0..steps {
            // each step streams one element per feed lane through the queues
            let mut need_in = tr;
            while need_in > 0 {
                need_in -= self.queues.input.push(need_in);
                self.queues.input.pop(self.queues.input.occupancy);
            }
            let mut need_w = tc;
            while need_w > 0 {
                need_w -= self.queues.weight.push(need_w);
                self.queues.weight.pop(self.queues.weight.occupancy);
            }
            for (r, feed) in inputs.iter().enumerate() {
                let a = &feed.as_ref()[s];
                for (c, wfeed) in weights.iter().enumerate() {
                    let w = &wfeed.as_ref()[s];
                    if a.precision != w.precision {
                        return Err(SauError::PrecisionMismatch(a.precision, w.precision));
                    }
                    let slot = &mut self.acc_grid[r * tc + c];
                    slot.0 = slot.0.wrapping_add(dot_unchecked(a, w));
                }
            }
        }
        Ok(self.config.tile_cycles(steps))
    }

    /// Moves the grid out through the output queue.
    pub fn drain(&mut self) -> Vec<Accumulator> {
        let n = self.acc_grid.len();
        let mut left = n;
        while left > 0 {
            left -= self.queues.output.push(left);
            self.queues.output.pop(self.queues.output.occupancy);
        }
        self.acc_grid.clone()
    }

    /// Loads the grid through the accumulator queue.
    pub fn refill(&mut self, values: &[Accumulator]) {
        let mut left = values.len();
        while left > 0 {
            left -= self.queues.acc.push(left);
            self.queues.acc.pop(self.queues.acc.occupancy);
        }
        self.acc_grid.copy_from_slice(values);
    }
}

fn check_feeds<T: AsRef<[PackedElement]>>(
    feed: &'static str,
    lanes: &[T],
    expected: usize,
    steps: usize,
) -> Result<(), SauError> {
    if lanes.len() != expected {
        return Err(SauError::FeedShape {
            feed,
            expected,
            got: lanes.len(),
        });
    }
    for (lane, l) in lanes.iter().enumerate() {
        let available = l.as_ref().len();
        if available < steps {
            return Err(SauError::StreamUnderrun {
                feed,
                lane,
                available,
                steps,
            });
        }
    }
    Ok(())
}
