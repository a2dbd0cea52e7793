//! Mini-ISA: an RV32I integer subset, an FP64 subset, `frep` and CSR access,
//! plus the queue-port classification rules that apply while the
//! `EnCopiftQueues` CSR is set.

use std::fmt;

use thiserror::Error;

/// CSR number of `EnCopiftQueues` (custom read/write space).
pub const CSR_EN_COPIFT_QUEUES: u32 = 0x7C0;

/// Integer register index that doubles as the queue port.
pub const QUEUE_PORT: u8 = 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegKind {
    Int,
    Fp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Reg {
    pub kind: RegKind,
    pub index: u8,
}

const INT_ABI: [&str; 32] = [
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0", "a1", "a2", "a3", "a4",
    "a5", "a6", "a7", "s2", "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11", "t3", "t4",
    "t5", "t6",
];

const FP_ABI: [&str; 32] = [
    "ft0", "ft1", "ft2", "ft3", "ft4", "ft5", "ft6", "ft7", "fs0", "fs1", "fa0", "fa1", "fa2",
    "fa3", "fa4", "fa5", "fa6", "fa7", "fs2", "fs3", "fs4", "fs5", "fs6", "fs7", "fs8", "fs9",
    "fs10", "fs11", "ft8", "ft9", "ft10", "ft11",
];

impl Reg {
    pub const ZERO: Reg = Reg::x(0);
    pub const QUEUE: Reg = Reg::x(QUEUE_PORT);

    pub const fn x(index: u8) -> Reg {
        Reg { kind: RegKind::Int, index }
    }

    pub const fn f(index: u8) -> Reg {
        Reg { kind: RegKind::Fp, index }
    }

    pub fn is_int(self) -> bool {
        self.kind == RegKind::Int
    }

    pub fn is_fp(self) -> bool {
        self.kind == RegKind::Fp
    }

    pub fn is_queue_port(self) -> bool {
        self == Reg::QUEUE
    }

    /// Parses `x5`, `f3`, or an ABI alias (`t0`, `fa1`, `fp`, ...).
    pub fn parse(name: &str) -> Option<Reg> {
        let name = name.trim();
        if let Some(pos) = INT_ABI.iter().position(|n| *n == name) {
            return Some(Reg::x(pos as u8));
        }
        if name == "fp" {
            return Some(Reg::x(8));
        }
        if let Some(pos) = FP_ABI.iter().position(|n| *n == name) {
            return Some(Reg::f(pos as u8));
        }
        let numbered = |prefix: char| -> Option<u8> {
            let rest = name.strip_prefix(prefix)?;
            if rest.is_empty() || (rest.len() > 1 && rest.starts_with('0')) {
                return None;
            }
            let idx: u8 = rest.parse().ok()?;
            (idx < 32).then_some(idx)
        };
        if let Some(i) = numbered('x') {
            return Some(Reg::x(i));
        }
        numbered('f').map(Reg::f)
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            // x0 and x31 keep their numeric names; x31 is the queue port.
            RegKind::Int if self.index == 0 || self.index == QUEUE_PORT => {
                write!(f, "x{}", self.index)
            }
            RegKind::Int => f.write_str(INT_ABI[self.index as usize]),
            RegKind::Fp => f.write_str(FP_ABI[self.index as usize]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InstrClass {
    IntAlu,
    IntMul,
    IntLoad,
    IntStore,
    Branch,
    Csr,
    FpCompute,
    FpLoad,
    FpStore,
    FpMove,
    Frep,
}

impl InstrClass {
    pub const ALL: [InstrClass; 11] = [
        InstrClass::IntAlu,
        InstrClass::IntMul,
        InstrClass::IntLoad,
        InstrClass::IntStore,
        InstrClass::Branch,
        InstrClass::Csr,
        InstrClass::FpCompute,
        InstrClass::FpLoad,
        InstrClass::FpStore,
        InstrClass::FpMove,
        InstrClass::Frep,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_fp(self) -> bool {
        matches!(
            self,
            InstrClass::FpCompute | InstrClass::FpLoad | InstrClass::FpStore | InstrClass::FpMove
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            InstrClass::IntAlu => "int_alu",
            InstrClass::IntMul => "int_mul",
            InstrClass::IntLoad => "int_load",
            InstrClass::IntStore => "int_store",
            InstrClass::Branch => "branch",
            InstrClass::Csr => "csr",
            InstrClass::FpCompute => "fp_compute",
            InstrClass::FpLoad => "fp_load",
            InstrClass::FpStore => "fp_store",
            InstrClass::FpMove => "fp_move",
            InstrClass::Frep => "frep",
        }
    }
}

/// Operand layout of an opcode, used by the parser, printer and validator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// `op rd, rs1, rs2` over integer registers.
    IntR,
    /// `op rd, rs1, imm`.
    IntI,
    /// `lui rd, imm`.
    Upper,
    /// `lw rd, imm(rs1)`.
    IntLoad,
    /// `sw rs2, imm(rs1)`.
    IntStore,
    /// `beq rs1, rs2, label`.
    Branch,
    /// `jal rd, label`.
    Jump,
    /// `csrrw rd, csr, rs1`.
    Csr,
    /// `fadd.d frd, frs1, frs2`.
    FpR,
    /// `fmadd.d frd, frs1, frs2, frs3`.
    FpR4,
    /// `fcvt.d.w frd, rs1`: integer source, FP destination.
    IntToFp,
    /// `fcvt.w.d rd, frs1`: FP source, integer destination.
    FpToInt,
    /// `fld frd, imm(rs1)`.
    FpLoad,
    /// `fsd frs2, imm(rs1)`.
    FpStore,
    /// `frep iterations, body_len`.
    Frep,
}

macro_rules! opcodes {
    ($($variant:ident => $mnemonic:literal, $format:ident, $class:ident;)*) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Opcode {
            $($variant,)*
        }

        impl Opcode {
            pub const ALL: &'static [Opcode] = &[$(Opcode::$variant,)*];

            pub fn mnemonic(self) -> &'static str {
                match self {
                    $(Opcode::$variant => $mnemonic,)*
                }
            }

            pub fn format(self) -> Format {
                match self {
                    $(Opcode::$variant => Format::$format,)*
                }
            }

            pub fn class(self) -> InstrClass {
                match self {
                    $(Opcode::$variant => InstrClass::$class,)*
                }
            }

            pub fn from_mnemonic(s: &str) -> Option<Opcode> {
                match s {
                    $($mnemonic => Some(Opcode::$variant),)*
                    _ => None,
                }
            }
        }
    };
}

opcodes! {
    Add => "add", IntR, IntAlu;
    Sub => "sub", IntR, IntAlu;
    And => "and", IntR, IntAlu;
    Or => "or", IntR, IntAlu;
    Xor => "xor", IntR, IntAlu;
    Sll => "sll", IntR, IntAlu;
    Srl => "srl", IntR, IntAlu;
    Mul => "mul", IntR, IntMul;
    Addi => "addi", IntI, IntAlu;
    Andi => "andi", IntI, IntAlu;
    Ori => "ori", IntI, IntAlu;
    Xori => "xori", IntI, IntAlu;
    Slli => "slli", IntI, IntAlu;
    Srli => "srli", IntI, IntAlu;
    Srai => "srai", IntI, IntAlu;
    Lui => "lui", Upper, IntAlu;
    Lw => "lw", IntLoad, IntLoad;
    Sw => "sw", IntStore, IntStore;
    Beq => "beq", Branch, Branch;
    Bne => "bne", Branch, Branch;
    Blt => "blt", Branch, Branch;
    Bge => "bge", Branch, Branch;
    Jal => "jal", Jump, Branch;
    Csrrw => "csrrw", Csr, Csr;
    Csrrs => "csrrs", Csr, Csr;
    Fld => "fld", FpLoad, FpLoad;
    Fsd => "fsd", FpStore, FpStore;
    FaddD => "fadd.d", FpR, FpCompute;
    FsubD => "fsub.d", FpR, FpCompute;
    FmulD => "fmul.d", FpR, FpCompute;
    FmaddD => "fmadd.d", FpR4, FpCompute;
    FcvtDW => "fcvt.d.w", IntToFp, FpCompute;
    FcvtDWu => "fcvt.d.wu", IntToFp, FpCompute;
    FcvtWD => "fcvt.w.d", FpToInt, FpCompute;
    FmvDX => "fmv.d.x", IntToFp, FpMove;
    FmvXD => "fmv.x.d", FpToInt, FpMove;
    FsgnjD => "fsgnj.d", FpR, FpMove;
    Frep => "frep", Frep, Frep;
}

/// Execution thread an instruction belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Thread {
    IntThread,
    FpThread,
}

/// Queue traffic an instruction generates under the current CSR setting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueueAction {
    pub pops_i2f: u8,
    pub pops_f2i: u8,
    pub pushes_i2f: u8,
    pub pushes_f2i: u8,
}

impl QueueAction {
    pub fn is_empty(&self) -> bool {
        *self == QueueAction::default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed `{mnemonic}`: {reason}")]
pub struct ClassifyError {
    pub mnemonic: &'static str,
    pub reason: String,
}

/// A decoded instruction. `imm` holds the immediate, CSR number, or `frep`
/// iteration count; `body_len` is only meaningful for `frep`. `target` names
/// the label of branches and jumps. `sym` remembers a symbolic immediate so
/// that printing reproduces the source spelling.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub op: Opcode,
    pub rd: Option<Reg>,
    pub rs1: Option<Reg>,
    pub rs2: Option<Reg>,
    pub rs3: Option<Reg>,
    pub imm: i32,
    pub body_len: u32,
    pub target: Option<String>,
    pub sym: Option<String>,
}

impl Instruction {
    fn bare(op: Opcode) -> Self {
        Instruction {
            op,
            rd: None,
            rs1: None,
            rs2: None,
            rs3: None,
            imm: 0,
            body_len: 0,
            target: None,
            sym: None,
        }
    }

    /// Register-register form (integer or FP, per opcode).
    pub fn r(op: Opcode, rd: Reg, rs1: Reg, rs2: Reg) -> Self {
        Instruction { rd: Some(rd), rs1: Some(rs1), rs2: Some(rs2), ..Self::bare(op) }
    }

    pub fn r4(op: Opcode, rd: Reg, rs1: Reg, rs2: Reg, rs3: Reg) -> Self {
        Instruction {
            rd: Some(rd),
            rs1: Some(rs1),
            rs2: Some(rs2),
            rs3: Some(rs3),
            ..Self::bare(op)
        }
    }

    /// `op rd, rs1, imm`; also loads (`lw rd, imm(rs1)`).
    pub fn i(op: Opcode, rd: Reg, rs1: Reg, imm: i32) -> Self {
        Instruction { rd: Some(rd), rs1: Some(rs1), imm, ..Self::bare(op) }
    }

    pub fn lui(rd: Reg, imm: i32) -> Self {
        Instruction { rd: Some(rd), imm, ..Self::bare(Opcode::Lui) }
    }

    /// Stores: `op data, imm(base)`.
    pub fn store(op: Opcode, data: Reg, base: Reg, imm: i32) -> Self {
        Instruction { rs1: Some(base), rs2: Some(data), imm, ..Self::bare(op) }
    }

    /// Unary register forms (`fcvt.d.w`, `fmv.x.d`, ...).
    pub fn unary(op: Opcode, rd: Reg, rs1: Reg) -> Self {
        Instruction { rd: Some(rd), rs1: Some(rs1), ..Self::bare(op) }
    }

    pub fn branch(op: Opcode, rs1: Reg, rs2: Reg, target: &str) -> Self {
        Instruction {
            rs1: Some(rs1),
            rs2: Some(rs2),
            target: Some(target.to_string()),
            ..Self::bare(op)
        }
    }

    pub fn jal(rd: Reg, target: &str) -> Self {
        Instruction { rd: Some(rd), target: Some(target.to_string()), ..Self::bare(Opcode::Jal) }
    }

    pub fn csr(op: Opcode, rd: Reg, csr: u32, rs1: Reg) -> Self {
        Instruction { rd: Some(rd), rs1: Some(rs1), imm: csr as i32, ..Self::bare(op) }
    }

    pub fn frep(iterations: u32, body_len: u32) -> Self {
        Instruction { imm: iterations as i32, body_len, ..Self::bare(Opcode::Frep) }
    }

    pub fn class(&self) -> InstrClass {
        self.op.class()
    }

    pub fn thread(&self) -> Thread {
        if self.class().is_fp() {
            Thread::FpThread
        } else {
            Thread::IntThread
        }
    }

    pub fn is_branch(&self) -> bool {
        matches!(self.op.format(), Format::Branch | Format::Jump)
    }

    pub fn is_store(&self) -> bool {
        matches!(self.op, Opcode::Sw | Opcode::Fsd)
    }

    pub fn is_load(&self) -> bool {
        matches!(self.op, Opcode::Lw | Opcode::Fld)
    }

    pub fn is_mem(&self) -> bool {
        self.is_load() || self.is_store()
    }

    /// Width in bytes of a memory access.
    pub fn access_size(&self) -> u32 {
        match self.op {
            Opcode::Lw | Opcode::Sw => 4,
            Opcode::Fld | Opcode::Fsd => 8,
            _ => 0,
        }
    }

    /// Source registers in operand order (rs1, rs2, rs3).
    pub fn sources(&self) -> impl Iterator<Item = Reg> + '_ {
        [self.rs1, self.rs2, self.rs3].into_iter().flatten()
    }

    /// Checks operand arity and register kinds against the opcode format.
    pub fn validate(&self) -> Result<(), ClassifyError> {
        use RegKind::{Fp, Int};
        let err = |reason: &str| ClassifyError {
            mnemonic: self.op.mnemonic(),
            reason: reason.to_string(),
        };
        let want = |slot: Option<Reg>, kind: Option<RegKind>, name: &str| match (slot, kind) {
            (None, None) => Ok(()),
            (Some(r), Some(k)) if r.kind == k && r.index < 32 => Ok(()),
            (Some(_), Some(_)) => Err(err(&format!("{name} has the wrong register kind"))),
            (None, Some(_)) => Err(err(&format!("missing {name}"))),
            (Some(_), None) => Err(err(&format!("unexpected {name}"))),
        };
        let (rd, rs1, rs2, rs3) = match self.op.format() {
            Format::IntR => (Some(Int), Some(Int), Some(Int), None),
            Format::IntI | Format::IntLoad => (Some(Int), Some(Int), None, None),
            Format::Upper => (Some(Int), None, None, None),
            Format::IntStore => (None, Some(Int), Some(Int), None),
            Format::Branch => (None, Some(Int), Some(Int), None),
            Format::Jump => (Some(Int), None, None, None),
            Format::Csr => (Some(Int), Some(Int), None, None),
            Format::FpR => (Some(Fp), Some(Fp), Some(Fp), None),
            Format::FpR4 => (Some(Fp), Some(Fp), Some(Fp), Some(Fp)),
            Format::IntToFp => (Some(Fp), Some(Int), None, None),
            Format::FpToInt => (Some(Int), Some(Fp), None, None),
            Format::FpLoad => (Some(Fp), Some(Int), None, None),
            Format::FpStore => (None, Some(Int), Some(Fp), None),
            Format::Frep => (None, None, None, None),
        };
        want(self.rd, rd, "rd")?;
        want(self.rs1, rs1, "rs1")?;
        want(self.rs2, rs2, "rs2")?;
        want(self.rs3, rs3, "rs3")?;
        let needs_target = matches!(self.op.format(), Format::Branch | Format::Jump);
        if needs_target != self.target.is_some() {
            return Err(err(if needs_target { "missing label" } else { "unexpected label" }));
        }
        if self.op == Opcode::Frep && (self.imm < 1 || self.body_len < 1) {
            return Err(err("iteration count and body length must be at least 1"));
        }
        if matches!(self.op, Opcode::Slli | Opcode::Srli | Opcode::Srai)
            && !(0..32).contains(&self.imm)
        {
            return Err(err("shift amount out of range"));
        }
        Ok(())
    }
}

/// Assigns the instruction to a thread and derives its queue traffic.
///
/// With the CSR set: integer `rs = x31` pops F2I (once per such source, rs1
/// first), integer `rd = x31` pushes I2F, FP integer sources pop I2F and FP
/// integer destinations push F2I. With the CSR clear there is no traffic.
pub fn classify(
    instr: &Instruction,
    csr_enabled: bool,
) -> Result<(Thread, QueueAction), ClassifyError> {
    instr.validate()?;
    let thread = instr.thread();
    let mut action = QueueAction::default();
    if csr_enabled {
        match thread {
            Thread::IntThread => {
                action.pops_f2i = instr.sources().filter(|r| r.is_queue_port()).count() as u8;
                action.pushes_i2f = u8::from(instr.rd == Some(Reg::QUEUE));
            }
            Thread::FpThread => {
                action.pops_i2f = instr.sources().filter(|r| r.is_int()).count() as u8;
                action.pushes_f2i = u8::from(instr.rd.is_some_and(Reg::is_int));
            }
        }
    }
    Ok((thread, action))
}

/// True for instructions executed by the FP subsystem.
pub fn is_fp_boundary(instr: &Instruction) -> bool {
    instr.thread() == Thread::FpThread
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.op.mnemonic();
        let reg = |r: Option<Reg>| r.map(|r| r.to_string()).unwrap_or_else(|| "?".into());
        let imm = match &self.sym {
            Some(s) => s.clone(),
            None => self.imm.to_string(),
        };
        let target = self.target.as_deref().unwrap_or("?");
        match self.op.format() {
            Format::IntR | Format::FpR => {
                write!(f, "{m} {}, {}, {}", reg(self.rd), reg(self.rs1), reg(self.rs2))
            }
            Format::FpR4 => write!(
                f,
                "{m} {}, {}, {}, {}",
                reg(self.rd),
                reg(self.rs1),
                reg(self.rs2),
                reg(self.rs3)
            ),
            Format::IntI => write!(f, "{m} {}, {}, {imm}", reg(self.rd), reg(self.rs1)),
            Format::Upper => write!(f, "{m} {}, {imm}", reg(self.rd)),
            Format::IntLoad | Format::FpLoad => {
                write!(f, "{m} {}, {imm}({})", reg(self.rd), reg(self.rs1))
            }
            Format::IntStore | Format::FpStore => {
                write!(f, "{m} {}, {imm}({})", reg(self.rs2), reg(self.rs1))
            }
            Format::Branch => write!(f, "{m} {}, {}, {target}", reg(self.rs1), reg(self.rs2)),
            Format::Jump => write!(f, "{m} {}, {target}", reg(self.rd)),
            Format::Csr => {
                let csr = if self.imm as u32 == CSR_EN_COPIFT_QUEUES {
                    "EnCopiftQueues".to_string()
                } else {
                    format!("{:#x}", self.imm)
                };
                write!(f, "{m} {}, {csr}, {}", reg(self.rd), reg(self.rs1))
            }
            Format::IntToFp | Format::FpToInt => {
                write!(f, "{m} {}, {}", reg(self.rd), reg(self.rs1))
            }
            Format::Frep => write!(f, "{m} {}, {}", self.imm, self.body_len),
        }
    }
}
