//! Cycle-level execution model.
//!
//! Two timing modes share one set of architectural semantics:
//!
//! * **Sequential**: a single issue slot per cycle; FP instructions are
//!   forwarded one per slot and `frep` bodies are replayed in line. Queue
//!   rules are inactive, so `x31` is an ordinary register.
//! * **Dual**: the integer core issues at most one instruction per cycle and
//!   forwards `frep` bodies into the FP subsystem's loop buffer; the FP
//!   subsystem then replays them, at most one per cycle, concurrently with
//!   the integer core. While `EnCopiftQueues` is set, `x31` and integer
//!   operands of FP instructions are queue ports.
//!
//! Register results and queue pushes become visible at writeback (issue
//! cycle + class latency). Pops happen at issue. Memory is accessed at issue.

pub mod config;
pub mod queue;
pub mod state;
pub mod trace;

use std::fmt;

use crate::isa::{Format, InstrClass, Instruction, Opcode, Reg, CSR_EN_COPIFT_QUEUES};
use crate::program::Program;

pub use config::{ConfigError, Latencies, MachineConfig};
pub use queue::HwQueue;
pub use state::{
    compare_state, ClassHistogram, Divergence, FrepState, MachineState, Metrics, StallCause,
    StallCounters,
};
pub use trace::{CsvTrace, TraceEvent, TraceRecord, TraceSink, Unit, TRACE_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sequential,
    Dual,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrapInfo {
    pub pc: usize,
    pub cause: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockedUnit {
    pub pc: Option<usize>,
    pub cause: Option<StallCause>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeadlockInfo {
    pub int: BlockedUnit,
    pub fp: BlockedUnit,
}

impl DeadlockInfo {
    /// The queue condition that blocks progress, preferring the integer side.
    pub fn blocking_queue(&self) -> Option<StallCause> {
        [self.int.cause, self.fp.cause].into_iter().flatten().find(|c| c.is_queue())
    }
}

impl fmt::Display for BlockedUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.pc, self.cause) {
            (Some(pc), Some(cause)) => write!(f, "pc {pc} blocked on {}", describe(cause)),
            (Some(pc), None) => write!(f, "pc {pc}"),
            _ => f.write_str("idle"),
        }
    }
}

fn describe(cause: StallCause) -> &'static str {
    match cause {
        StallCause::I2fFull => "I2F queue full",
        StallCause::I2fEmpty => "I2F queue empty",
        StallCause::F2iFull => "F2I queue full",
        StallCause::F2iEmpty => "F2I queue empty",
        StallCause::OffloadBackpressure => "FP subsystem busy",
        StallCause::Operand => "operand",
    }
}

impl fmt::Display for DeadlockInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "deadlock: integer core {}; FP subsystem {}", self.int, self.fp)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Termination {
    Halted,
    Deadlock(DeadlockInfo),
    CycleLimit,
    Trap(TrapInfo),
}

#[derive(Debug, Clone)]
pub struct ExecReport {
    pub final_state: MachineState,
    pub metrics: Metrics,
    pub termination: Termination,
}

impl ExecReport {
    pub fn halted(&self) -> bool {
        self.termination == Termination::Halted
    }
}

pub fn run_sequential(p: &Program, cfg: &MachineConfig, init: MachineState) -> ExecReport {
    run(p, cfg, init, Mode::Sequential, None)
}

pub fn run_dual(p: &Program, cfg: &MachineConfig, init: MachineState) -> ExecReport {
    run(p, cfg, init, Mode::Dual, None)
}

/// Dual-issue run that reports every pipeline's activity each cycle.
pub fn trace(
    p: &Program,
    cfg: &MachineConfig,
    init: MachineState,
    sink: &mut dyn TraceSink,
) -> ExecReport {
    run(p, cfg, init, Mode::Dual, Some(sink))
}

pub fn run(
    p: &Program,
    cfg: &MachineConfig,
    init: MachineState,
    mode: Mode,
    sink: Option<&mut dyn TraceSink>,
) -> ExecReport {
    let early_trap = |state: MachineState, cause: String| ExecReport {
        metrics: Metrics::default(),
        termination: Termination::Trap(TrapInfo { pc: state.pc, cause }),
        final_state: state,
    };
    if let Err(e) = cfg.validate() {
        return early_trap(init, e.to_string());
    }
    let targets = match p.branch_targets() {
        Ok(t) => t,
        Err(e) => return early_trap(init, e),
    };
    if let Some(bad) = p.instructions.iter().position(|i| i.validate().is_err()) {
        let cause = p.instructions[bad].validate().unwrap_err().to_string();
        return early_trap(MachineState { pc: bad, ..init }, cause);
    }
    let mut engine = Engine {
        prog: p,
        targets,
        cfg,
        mode,
        s: init,
        int_ready: [0; 32],
        fp_ready: [0; 32],
        int_busy_until: 0,
        seq_frep: None,
    };
    let termination = engine.run(sink);
    let s = engine.s;
    let metrics = Metrics {
        cycles: s.cycle,
        retired_int: s.retired_int,
        retired_fp: s.retired_fp,
        samples: 0,
        stalls: s.stalls,
        histogram: s.histogram,
    };
    ExecReport { final_state: s, metrics, termination }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Attempt {
    Issued,
    Offload,
    Stalled(StallCause),
    Idle,
}

#[derive(Debug, Clone, Copy)]
struct Step {
    attempt: Attempt,
    pc: Option<usize>,
    mnemonic: Option<&'static str>,
}

impl Step {
    const IDLE: Step = Step { attempt: Attempt::Idle, pc: None, mnemonic: None };

    fn at(attempt: Attempt, pc: usize, instr: &Instruction) -> Step {
        Step { attempt, pc: Some(pc), mnemonic: Some(instr.op.mnemonic()) }
    }

    fn active(&self) -> bool {
        matches!(self.attempt, Attempt::Issued | Attempt::Offload)
    }

    fn blocked(&self) -> BlockedUnit {
        match self.attempt {
            Attempt::Stalled(c) => BlockedUnit { pc: self.pc, cause: Some(c) },
            _ => BlockedUnit { pc: None, cause: None },
        }
    }
}

struct SeqFrep {
    start: usize,
    len: usize,
    remaining: u32,
}

type Trap = String;

struct Engine<'a> {
    prog: &'a Program,
    targets: Vec<Option<usize>>,
    cfg: &'a MachineConfig,
    mode: Mode,
    s: MachineState,
    int_ready: [u64; 32],
    fp_ready: [u64; 32],
    int_busy_until: u64,
    seq_frep: Option<SeqFrep>,
}

const SIGN: u64 = 1 << 63;

fn fcvt_w_d(v: f64) -> u32 {
    if v.is_nan() {
        return i32::MAX as u32;
    }
    let r = v.round_ties_even();
    if r >= i32::MAX as f64 {
        i32::MAX as u32
    } else if r <= i32::MIN as f64 {
        i32::MIN as u32
    } else {
        r as i32 as u32
    }
}

impl<'a> Engine<'a> {
    fn queue_mode(&self) -> bool {
        self.mode == Mode::Dual && self.s.en_copift_queues
    }

    fn run(&mut self, mut sink: Option<&mut dyn TraceSink>) -> Termination {
        loop {
            let c = self.s.cycle;
            if self.finished(c) {
                return Termination::Halted;
            }
            if c >= self.cfg.cycle_limit {
                return Termination::CycleLimit;
            }
            let pc_before = self.s.pc;
            let steps = match self.mode {
                Mode::Dual => self.fpss_step(c).and_then(|fp| Ok((fp, self.int_step_dual(c)?))),
                Mode::Sequential => self.seq_step(c).map(|int| (Step::IDLE, int)),
            };
            let (fp, int) = match steps {
                Ok(s) => s,
                Err(cause) => {
                    let pc = if self.s.pc == pc_before { pc_before } else { self.s.pc };
                    return Termination::Trap(TrapInfo { pc, cause });
                }
            };
            for st in [fp, int] {
                if let Attempt::Stalled(cause) = st.attempt {
                    self.s.stalls.bump(cause);
                }
            }
            debug_assert!(self.s.i2f.occupancy() <= self.cfg.queue_depth);
            debug_assert!(self.s.f2i.occupancy() <= self.cfg.queue_depth);
            if let Some(sink) = sink.as_deref_mut() {
                for (unit, st) in [(Unit::Int, int), (Unit::Fp, fp)] {
                    let event = match st.attempt {
                        Attempt::Issued => TraceEvent::Issue,
                        Attempt::Offload => TraceEvent::Offload,
                        Attempt::Stalled(c) => TraceEvent::Stall(c),
                        Attempt::Idle => TraceEvent::Idle,
                    };
                    sink.record(&TraceRecord {
                        cycle: c,
                        unit,
                        pc: st.pc,
                        mnemonic: st.mnemonic,
                        event,
                        i2f_occ: self.s.i2f.occupancy(),
                        f2i_occ: self.s.f2i.occupancy(),
                    });
                }
            }
            if !fp.active() && !int.active() && !self.future_event(c) {
                self.s.cycle += 1;
                return Termination::Deadlock(DeadlockInfo { int: int.blocked(), fp: fp.blocked() });
            }
            self.s.cycle += 1;
        }
    }

    fn inflight(&self, c: u64) -> bool {
        self.int_ready.iter().chain(&self.fp_ready).any(|&t| t > c)
    }

    fn finished(&self, c: u64) -> bool {
        self.s.pc >= self.prog.len()
            && !self.s.frep.active
            && self.seq_frep.is_none()
            && self.int_busy_until <= c
            && !self.inflight(c)
    }

    fn future_event(&self, c: u64) -> bool {
        self.inflight(c)
            || self.int_busy_until > c + 1
            || self.s.i2f.next_event_after(c).is_some()
            || self.s.f2i.next_event_after(c).is_some()
    }

    fn trap_addr(&self, addr: u32, size: u32) -> Result<(), Trap> {
        if addr % size != 0 {
            return Err(format!("misaligned {size}-byte access at {addr:#x}"));
        }
        if (addr as usize).checked_add(size as usize).is_none_or(|end| end > self.s.mem.len()) {
            return Err(format!("access at {addr:#x} outside memory"));
        }
        Ok(())
    }

    fn frep_bounds(&self, instr: &Instruction, pc: usize) -> Result<(), Trap> {
        if instr.imm < 1 || instr.body_len < 1 {
            return Err("frep needs at least one iteration and one instruction".into());
        }
        if pc + 1 + instr.body_len as usize > self.prog.len() {
            return Err("frep body runs past the end of the program".into());
        }
        Ok(())
    }

    fn int_step_dual(&mut self, c: u64) -> Result<Step, Trap> {
        if c < self.int_busy_until {
            return Ok(Step { attempt: Attempt::Offload, pc: None, mnemonic: None });
        }
        let prog = self.prog;
        let pc = self.s.pc;
        if self.s.frep.capturing() {
            let instr = prog
                .instructions
                .get(pc)
                .ok_or_else(|| "frep body runs past the end of the program".to_string())?;
            if !instr.class().is_fp() {
                return Err(format!("non-FP instruction `{instr}` inside frep body"));
            }
            self.s.frep.buffer.push((pc, instr.clone()));
            self.s.pc += 1;
            self.int_busy_until = c + self.cfg.offload_cost as u64;
            return Ok(Step::at(Attempt::Offload, pc, instr));
        }
        let Some(instr) = prog.instructions.get(pc) else {
            return Ok(Step::IDLE);
        };
        let class = instr.class();
        let attempt = if class == InstrClass::Frep {
            if self.s.frep.active {
                Attempt::Stalled(StallCause::OffloadBackpressure)
            } else {
                self.frep_bounds(instr, pc)?;
                if instr.body_len as usize > self.cfg.frep_buffer_depth {
                    return Err(format!(
                        "frep body of {} exceeds buffer depth {}",
                        instr.body_len, self.cfg.frep_buffer_depth
                    ));
                }
                self.s.frep = FrepState {
                    active: true,
                    buffer: Vec::with_capacity(instr.body_len as usize),
                    body_len: instr.body_len as usize,
                    remaining_iters: instr.imm as u32,
                    issue_cursor: 0,
                };
                self.retire(instr);
                self.s.pc += 1;
                Attempt::Issued
            }
        } else if class.is_fp() {
            if self.s.frep.active {
                Attempt::Stalled(StallCause::OffloadBackpressure)
            } else {
                let a = self.issue_fp(instr, c)?;
                if a == Attempt::Issued {
                    self.s.pc += 1;
                    self.int_busy_until = c + self.cfg.offload_cost as u64;
                }
                a
            }
        } else {
            self.issue_int(instr, pc, c)?
        };
        Ok(Step::at(attempt, pc, instr))
    }

    fn fpss_step(&mut self, c: u64) -> Result<Step, Trap> {
        let f = &self.s.frep;
        if !f.active || f.issue_cursor >= f.buffer.len() {
            return Ok(Step::IDLE);
        }
        let pc = f.buffer[f.issue_cursor].0;
        let prog = self.prog;
        let instr = &prog.instructions[pc];
        let attempt = self.issue_fp(instr, c)?;
        if attempt == Attempt::Issued {
            let f = &mut self.s.frep;
            f.issue_cursor += 1;
            if f.issue_cursor == f.body_len {
                f.issue_cursor = 0;
                f.remaining_iters -= 1;
                if f.remaining_iters == 0 {
                    f.active = false;
                    f.buffer.clear();
                }
            }
        }
        Ok(Step::at(attempt, pc, instr))
    }

    fn seq_step(&mut self, c: u64) -> Result<Step, Trap> {
        if c < self.int_busy_until {
            return Ok(Step { attempt: Attempt::Offload, pc: None, mnemonic: None });
        }
        let prog = self.prog;
        let pc = self.s.pc;
        let Some(instr) = prog.instructions.get(pc) else {
            return Ok(Step::IDLE);
        };
        let class = instr.class();
        if let Some(f) = &self.seq_frep {
            if (f.start..f.start + f.len).contains(&pc) && !class.is_fp() {
                return Err(format!("non-FP instruction `{instr}` inside frep body"));
            }
        }
        let attempt = if class == InstrClass::Frep {
            self.frep_bounds(instr, pc)?;
            if self.seq_frep.is_some() {
                return Err("nested frep".into());
            }
            self.seq_frep = Some(SeqFrep {
                start: pc + 1,
                len: instr.body_len as usize,
                remaining: instr.imm as u32,
            });
            self.retire(instr);
            self.s.pc += 1;
            Attempt::Issued
        } else if class.is_fp() {
            let a = self.issue_fp(instr, c)?;
            if a == Attempt::Issued {
                self.int_busy_until = c + self.cfg.offload_cost as u64;
                let mut next = pc + 1;
                if let Some(f) = &mut self.seq_frep {
                    if next == f.start + f.len {
                        if f.remaining > 1 {
                            f.remaining -= 1;
                            next = f.start;
                        } else {
                            self.seq_frep = None;
                        }
                    }
                }
                self.s.pc = next;
            }
            a
        } else {
            self.issue_int(instr, pc, c)?
        };
        Ok(Step::at(attempt, pc, instr))
    }

    fn retire(&mut self, instr: &Instruction) {
        let class = instr.class();
        if class.is_fp() {
            self.s.retired_fp += 1;
        } else {
            self.s.retired_int += 1;
        }
        self.s.histogram.add(class);
    }

    fn read_int(&mut self, r: Reg, queue: bool) -> u32 {
        if queue && r.is_queue_port() {
            self.s.f2i.pop().expect("F2I readiness checked before issue")
        } else {
            self.s.int_rf[r.index as usize]
        }
    }

    fn issue_int(&mut self, instr: &Instruction, pc: usize, c: u64) -> Result<Attempt, Trap> {
        let q = self.queue_mode();
        let mut pops = 0;
        for src in instr.sources() {
            if q && src.is_queue_port() {
                pops += 1;
            } else if self.int_ready[src.index as usize] > c {
                return Ok(Attempt::Stalled(StallCause::Operand));
            }
        }
        if pops > 0 && !self.s.f2i.ready(c, pops) {
            return Ok(Attempt::Stalled(StallCause::F2iEmpty));
        }
        let pushes = q && instr.rd == Some(Reg::QUEUE);
        if pushes && !self.s.i2f.has_space(self.cfg.queue_depth) {
            return Ok(Attempt::Stalled(StallCause::I2fFull));
        }
        let is_csr = instr.class() == InstrClass::Csr;
        if is_csr && instr.imm as u32 != CSR_EN_COPIFT_QUEUES {
            return Err(format!("unknown CSR {:#x}", instr.imm));
        }
        // Toggling the queue CSR waits for the FP subsystem to drain.
        if is_csr
            && self.mode == Mode::Dual
            && (self.s.frep.active || self.fp_ready.iter().any(|&t| t > c))
        {
            return Ok(Attempt::Stalled(StallCause::OffloadBackpressure));
        }

        let a = instr.rs1.map(|r| self.read_int(r, q)).unwrap_or(0);
        let b = instr.rs2.map(|r| self.read_int(r, q)).unwrap_or(0);
        let imm = instr.imm as u32;
        let mut next_pc = pc + 1;
        let result = match instr.op {
            Opcode::Add => Some(a.wrapping_add(b)),
            Opcode::Sub => Some(a.wrapping_sub(b)),
            Opcode::And => Some(a & b),
            Opcode::Or => Some(a | b),
            Opcode::Xor => Some(a ^ b),
            Opcode::Sll => Some(a << (b & 31)),
            Opcode::Srl => Some(a >> (b & 31)),
            Opcode::Mul => Some(a.wrapping_mul(b)),
            Opcode::Addi => Some(a.wrapping_add(imm)),
            Opcode::Andi => Some(a & imm),
            Opcode::Ori => Some(a | imm),
            Opcode::Xori => Some(a ^ imm),
            Opcode::Slli => Some(a << (imm & 31)),
            Opcode::Srli => Some(a >> (imm & 31)),
            Opcode::Srai => Some(((a as i32) >> (imm & 31)) as u32),
            Opcode::Lui => Some(imm << 12),
            Opcode::Lw => {
                let addr = a.wrapping_add(imm);
                self.trap_addr(addr, 4)?;
                Some(self.s.read_u32(addr).unwrap_or(0))
            }
            Opcode::Sw => {
                let addr = a.wrapping_add(imm);
                self.trap_addr(addr, 4)?;
                self.s.write_bytes(addr, &b.to_le_bytes());
                None
            }
            Opcode::Beq | Opcode::Bne | Opcode::Blt | Opcode::Bge => {
                let taken = match instr.op {
                    Opcode::Beq => a == b,
                    Opcode::Bne => a != b,
                    Opcode::Blt => (a as i32) < (b as i32),
                    _ => (a as i32) >= (b as i32),
                };
                if taken {
                    next_pc = self.targets[pc].expect("targets resolved");
                }
                None
            }
            Opcode::Jal => {
                next_pc = self.targets[pc].expect("targets resolved");
                Some(pc as u32 + 1)
            }
            Opcode::Csrrw | Opcode::Csrrs => {
                let old = u32::from(self.s.en_copift_queues);
                let new = if instr.op == Opcode::Csrrw { a } else { old | a };
                self.s.en_copift_queues = new & 1 != 0;
                Some(old)
            }
            _ => unreachable!("FP opcode on the integer path"),
        };
        let lat = self.cfg.latencies.of(instr.class()) as u64;
        if let (Some(v), Some(rd)) = (result, instr.rd) {
            if q && rd.is_queue_port() {
                self.s.i2f.push(v, c + lat);
            } else if rd.index != 0 {
                self.s.int_rf[rd.index as usize] = v;
                self.int_ready[rd.index as usize] = c + lat;
            }
        }
        self.s.pc = next_pc;
        self.retire(instr);
        Ok(Attempt::Issued)
    }

    fn issue_fp(&mut self, instr: &Instruction, c: u64) -> Result<Attempt, Trap> {
        let q = self.queue_mode();
        let format = instr.op.format();
        let int_src = match format {
            Format::IntToFp | Format::FpLoad | Format::FpStore => instr.rs1,
            _ => None,
        };
        let int_dst = if format == Format::FpToInt { instr.rd } else { None };
        for src in instr.sources().filter(|r| r.is_fp()) {
            if self.fp_ready[src.index as usize] > c {
                return Ok(Attempt::Stalled(StallCause::Operand));
            }
        }
        if let Some(r) = int_src {
            if q {
                if !self.s.i2f.ready(c, 1) {
                    return Ok(Attempt::Stalled(StallCause::I2fEmpty));
                }
            } else if self.int_ready[r.index as usize] > c {
                return Ok(Attempt::Stalled(StallCause::Operand));
            }
        }
        if int_dst.is_some() && q && !self.s.f2i.has_space(self.cfg.queue_depth) {
            return Ok(Attempt::Stalled(StallCause::F2iFull));
        }

        let ival = match int_src {
            Some(_) if q => self.s.i2f.pop().expect("I2F readiness checked before issue"),
            Some(r) => self.s.int_rf[r.index as usize],
            None => 0,
        };
        let fr = |r: Option<Reg>| r.map(|r| self.s.fp_rf[r.index as usize]).unwrap_or(0.0);
        let (x, y, z) = match format {
            Format::FpStore => (fr(instr.rs2), 0.0, 0.0),
            _ => (fr(instr.rs1), fr(instr.rs2), fr(instr.rs3)),
        };
        let lat = self.cfg.latencies.of(instr.class()) as u64;
        let mut fp_result = None;
        let mut int_result = None;
        match instr.op {
            Opcode::Fld => {
                let addr = ival.wrapping_add(instr.imm as u32);
                self.trap_addr(addr, 8)?;
                fp_result = self.s.read_f64(addr);
            }
            Opcode::Fsd => {
                let addr = ival.wrapping_add(instr.imm as u32);
                self.trap_addr(addr, 8)?;
                self.s.write_bytes(addr, &x.to_le_bytes());
            }
            Opcode::FaddD => fp_result = Some(x + y),
            Opcode::FsubD => fp_result = Some(x - y),
            Opcode::FmulD => fp_result = Some(x * y),
            Opcode::FmaddD => fp_result = Some(x.mul_add(y, z)),
            Opcode::FcvtDW => fp_result = Some(ival as i32 as f64),
            Opcode::FcvtDWu => fp_result = Some(ival as f64),
            Opcode::FmvDX => fp_result = Some(f64::from_bits(ival as u64)),
            Opcode::FsgnjD => {
                fp_result = Some(f64::from_bits((x.to_bits() & !SIGN) | (y.to_bits() & SIGN)))
            }
            Opcode::FcvtWD => int_result = Some(fcvt_w_d(x)),
            Opcode::FmvXD => int_result = Some(x.to_bits() as u32),
            _ => unreachable!("integer opcode on the FP path"),
        }
        if let (Some(v), Some(rd)) = (fp_result, instr.rd) {
            self.s.fp_rf[rd.index as usize] = v;
            self.fp_ready[rd.index as usize] = c + lat;
        }
        if let (Some(v), Some(rd)) = (int_result, int_dst) {
            if q {
                self.s.f2i.push(v, c + lat);
            } else if rd.index != 0 {
                self.s.int_rf[rd.index as usize] = v;
                self.int_ready[rd.index as usize] = c + lat;
            }
        }
        self.retire(instr);
        Ok(Attempt::Issued)
    }
}
