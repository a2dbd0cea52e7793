use std::fmt;

use crate::isa::{InstrClass, Instruction, Reg, RegKind};
use crate::program::{Program, DATA_BASE};

use super::config::MachineConfig;
use super::queue::HwQueue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StallCause {
    I2fFull,
    I2fEmpty,
    F2iFull,
    F2iEmpty,
    OffloadBackpressure,
    /// Source operand not yet written back.
    Operand,
}

impl StallCause {
    pub fn name(self) -> &'static str {
        match self {
            StallCause::I2fFull => "i2f_full",
            StallCause::I2fEmpty => "i2f_empty",
            StallCause::F2iFull => "f2i_full",
            StallCause::F2iEmpty => "f2i_empty",
            StallCause::OffloadBackpressure => "offload_backpressure",
            StallCause::Operand => "operand",
        }
    }

    pub fn is_queue(self) -> bool {
        matches!(
            self,
            StallCause::I2fFull | StallCause::I2fEmpty | StallCause::F2iFull | StallCause::F2iEmpty
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StallCounters {
    pub i2f_full: u64,
    pub i2f_empty: u64,
    pub f2i_full: u64,
    pub f2i_empty: u64,
    pub offload_backpressure: u64,
    pub operand: u64,
}

impl StallCounters {
    pub fn bump(&mut self, cause: StallCause) {
        *match cause {
            StallCause::I2fFull => &mut self.i2f_full,
            StallCause::I2fEmpty => &mut self.i2f_empty,
            StallCause::F2iFull => &mut self.f2i_full,
            StallCause::F2iEmpty => &mut self.f2i_empty,
            StallCause::OffloadBackpressure => &mut self.offload_backpressure,
            StallCause::Operand => &mut self.operand,
        } += 1;
    }

    pub fn total(&self) -> u64 {
        self.i2f_full
            + self.i2f_empty
            + self.f2i_full
            + self.f2i_empty
            + self.offload_backpressure
            + self.operand
    }
}

/// Dynamic instruction count per class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassHistogram(pub [u64; InstrClass::ALL.len()]);

impl ClassHistogram {
    pub fn get(&self, class: InstrClass) -> u64 {
        self.0[class.index()]
    }

    pub fn add(&mut self, class: InstrClass) {
        self.0[class.index()] += 1;
    }

    pub fn iter(&self) -> impl Iterator<Item = (InstrClass, u64)> + '_ {
        InstrClass::ALL.iter().map(|&c| (c, self.get(c)))
    }
}

/// The FP subsystem's hardware-loop sequencer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrepState {
    pub active: bool,
    /// Captured `(pc, instruction)` pairs.
    pub buffer: Vec<(usize, Instruction)>,
    pub body_len: usize,
    pub remaining_iters: u32,
    pub issue_cursor: usize,
}

impl FrepState {
    pub fn capturing(&self) -> bool {
        self.active && self.buffer.len() < self.body_len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineState {
    pub pc: usize,
    pub int_rf: [u32; 32],
    pub fp_rf: [f64; 32],
    pub mem: Vec<u8>,
    pub i2f: HwQueue,
    pub f2i: HwQueue,
    pub en_copift_queues: bool,
    pub frep: FrepState,
    pub cycle: u64,
    pub retired_int: u64,
    pub retired_fp: u64,
    pub stalls: StallCounters,
    pub histogram: ClassHistogram,
}

impl MachineState {
    pub fn new(memory_size: usize) -> Self {
        MachineState {
            pc: 0,
            int_rf: [0; 32],
            fp_rf: [0.0; 32],
            mem: vec![0; memory_size],
            i2f: HwQueue::default(),
            f2i: HwQueue::default(),
            en_copift_queues: false,
            frep: FrepState::default(),
            cycle: 0,
            retired_int: 0,
            retired_fp: 0,
            stalls: StallCounters::default(),
            histogram: ClassHistogram::default(),
        }
    }

    /// Fresh state with the program's data image loaded and pc at entry.
    pub fn for_program(p: &Program, cfg: &MachineConfig) -> Result<Self, String> {
        let mut s = MachineState::new(cfg.memory_size);
        s.pc = p.entry;
        s.write_bytes(DATA_BASE, &p.data)
            .ok_or_else(|| format!("data segment ({} bytes) does not fit in memory", p.data.len()))?;
        Ok(s)
    }

    pub fn read_bytes(&self, addr: u32, len: usize) -> Option<&[u8]> {
        let start = addr as usize;
        self.mem.get(start..start.checked_add(len)?)
    }

    pub fn write_bytes(&mut self, addr: u32, bytes: &[u8]) -> Option<()> {
        let start = addr as usize;
        let dst = self.mem.get_mut(start..start.checked_add(bytes.len())?)?;
        dst.copy_from_slice(bytes);
        Some(())
    }

    pub fn read_u32(&self, addr: u32) -> Option<u32> {
        Some(u32::from_le_bytes(self.read_bytes(addr, 4)?.try_into().ok()?))
    }

    pub fn read_f64(&self, addr: u32) -> Option<f64> {
        Some(f64::from_le_bytes(self.read_bytes(addr, 8)?.try_into().ok()?))
    }

    pub fn reg_bits(&self, r: Reg) -> u64 {
        match r.kind {
            RegKind::Int => self.int_rf[r.index as usize] as u64,
            RegKind::Fp => self.fp_rf[r.index as usize].to_bits(),
        }
    }
}

/// Timing and work counters of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics {
    pub cycles: u64,
    pub retired_int: u64,
    pub retired_fp: u64,
    /// Work items reported by the kernel harness (0 when unknown).
    pub samples: u64,
    pub stalls: StallCounters,
    pub histogram: ClassHistogram,
}

impl Metrics {
    pub fn retired(&self) -> u64 {
        self.retired_int + self.retired_fp
    }

    pub fn ipc(&self) -> f64 {
        if self.cycles == 0 {
            0.0
        } else {
            self.retired() as f64 / self.cycles as f64
        }
    }

    pub fn throughput(&self) -> f64 {
        if self.cycles == 0 {
            0.0
        } else {
            self.samples as f64 / self.cycles as f64
        }
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "cycles = {}", self.cycles)?;
        writeln!(f, "retired_int = {}", self.retired_int)?;
        writeln!(f, "retired_fp = {}", self.retired_fp)?;
        writeln!(f, "ipc = {:.4}", self.ipc())?;
        if self.samples > 0 {
            writeln!(f, "samples = {}", self.samples)?;
            writeln!(f, "throughput = {:.6}", self.throughput())?;
        }
        let s = &self.stalls;
        writeln!(f, "stall_i2f_full = {}", s.i2f_full)?;
        writeln!(f, "stall_i2f_empty = {}", s.i2f_empty)?;
        writeln!(f, "stall_f2i_full = {}", s.f2i_full)?;
        writeln!(f, "stall_f2i_empty = {}", s.f2i_empty)?;
        writeln!(f, "stall_offload_backpressure = {}", s.offload_backpressure)?;
        write!(f, "stall_operand = {}", s.operand)
    }
}

/// First difference found by [`compare_state`].
#[derive(Debug, Clone, PartialEq)]
pub enum Divergence {
    MemorySize { a: usize, b: usize },
    Memory { addr: u32, a: u8, b: u8 },
    OutOfBounds { addr: u32, len: u32 },
    Register { reg: Reg, a: u64, b: u64 },
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Divergence::MemorySize { a, b } => write!(f, "memory sizes differ ({a} vs {b})"),
            Divergence::Memory { addr, a, b } => {
                write!(f, "memory byte at {addr:#x} differs ({a:#04x} vs {b:#04x})")
            }
            Divergence::OutOfBounds { addr, len } => {
                write!(f, "region {addr:#x}+{len} is outside memory")
            }
            Divergence::Register { reg, a, b } => {
                write!(f, "register {reg} differs ({a:#x} vs {b:#x})")
            }
        }
    }
}

/// Byte-exact comparison of memory regions `(addr, len)` and both register
/// files. `x31` is never compared; `exclude` names further scratch registers.
pub fn compare_state(
    a: &MachineState,
    b: &MachineState,
    regions: &[(u32, u32)],
    exclude: &[Reg],
) -> Result<(), Divergence> {
    if a.mem.len() != b.mem.len() {
        return Err(Divergence::MemorySize { a: a.mem.len(), b: b.mem.len() });
    }
    for &(addr, len) in regions {
        let (Some(ra), Some(rb)) = (a.read_bytes(addr, len as usize), b.read_bytes(addr, len as usize))
        else {
            return Err(Divergence::OutOfBounds { addr, len });
        };
        if let Some(i) = ra.iter().zip(rb).position(|(x, y)| x != y) {
            return Err(Divergence::Memory { addr: addr + i as u32, a: ra[i], b: rb[i] });
        }
    }
    let regs = (0..32).map(Reg::x).chain((0..32).map(Reg::f));
    for reg in regs {
        if reg.is_queue_port() || exclude.contains(&reg) {
            continue;
        }
        let (va, vb) = (a.reg_bits(reg), b.reg_bits(reg));
        if va != vb {
            return Err(Divergence::Register { reg, a: va, b: vb });
        }
    }
    Ok(())
}
