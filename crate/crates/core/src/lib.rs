//! Functional and cycle-approximate simulator of a scalable RISC-V vector
//! processor whose lanes carry multi-precision systolic arrays.
//!
//! * [`isa`] / [`asm`]: custom instruction encoding and assembly text.
//! * [`vcore`]: machine state, memory, VRFs, dispatch and cycle model.
//! * [`sau`]: the per-lane systolic array unit.
//! * [`dataflow`]: element packing, FF/CF planners, lowering, strategy choice.
//! * [`workloads`]: tensors, the reference convolution, benchmark layer tables.
//! * [`report`]: layer/model/sweep experiments and their JSON/CSV reports.

pub mod asm;
pub mod dataflow;
pub mod isa;
pub mod report;
pub mod sau;
pub mod vcore;
pub mod workloads;
