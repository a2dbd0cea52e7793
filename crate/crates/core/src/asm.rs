//! Two-pass assembler and printer for the text format.
//!
//! Pass one collects labels, constants, data and loop markers; pass two
//! builds instructions, resolving symbolic immediates and checking that
//! every branch target exists.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::isa::{Format, Instruction, Opcode, Reg, RegKind, CSR_EN_COPIFT_QUEUES};
use crate::program::{IterCount, LoopRegion, Program, DATA_BASE};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmErrorKind {
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("unresolved label `{0}`")]
    UnresolvedLabel(String),
    #[error("malformed operand: {0}")]
    MalformedOperand(String),
    #[error("duplicate symbol `{0}`")]
    DuplicateSymbol(String),
    #[error("unknown CSR `{0}`")]
    UnknownCsr(String),
    #[error("bad directive: {0}")]
    Directive(String),
    #[error("bad pragma: {0}")]
    Pragma(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct AsmError {
    pub line: usize,
    pub kind: AsmErrorKind,
}

type Result<T> = std::result::Result<T, AsmError>;

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Text,
    Data,
}

struct PendingInstr {
    line: usize,
    mnemonic: String,
    operands: Vec<String>,
}

struct Assembler {
    section: Section,
    pending: Vec<PendingInstr>,
    labels: BTreeMap<String, usize>,
    data_labels: BTreeMap<String, u32>,
    constants: BTreeMap<String, i64>,
    data: Vec<u8>,
    open_loops: Vec<(usize, usize, Option<IterCount>)>,
    loops: Vec<LoopRegion>,
    clobbers: Vec<Reg>,
}

fn err(line: usize, kind: AsmErrorKind) -> AsmError {
    AsmError { line, kind }
}

fn malformed(line: usize, msg: impl Into<String>) -> AsmError {
    err(line, AsmErrorKind::MalformedOperand(msg.into()))
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn parse_number(s: &str) -> Option<i64> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let v = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(hex, 16).ok()?
    } else if !body.is_empty() && body.bytes().all(|b| b.is_ascii_digit()) {
        body.parse::<i64>().ok()?
    } else {
        return None;
    };
    Some(if neg { -v } else { v })
}

fn to_i32(v: i64) -> Option<i32> {
    if (i32::MIN as i64..=u32::MAX as i64).contains(&v) {
        Some(v as u32 as i32)
    } else {
        None
    }
}

fn split_operands(s: &str) -> Vec<String> {
    if s.trim().is_empty() {
        return Vec::new();
    }
    s.split(',').map(|p| p.trim().to_string()).collect()
}

impl Assembler {
    fn new() -> Self {
        Assembler {
            section: Section::Text,
            pending: Vec::new(),
            labels: BTreeMap::new(),
            data_labels: BTreeMap::new(),
            constants: BTreeMap::new(),
            data: Vec::new(),
            open_loops: Vec::new(),
            loops: Vec::new(),
            clobbers: Vec::new(),
        }
    }

    fn symbol_taken(&self, name: &str) -> bool {
        self.labels.contains_key(name)
            || self.data_labels.contains_key(name)
            || self.constants.contains_key(name)
    }

    fn define_label(&mut self, line: usize, name: &str) -> Result<()> {
        if !is_ident(name) {
            return Err(malformed(line, format!("bad label name `{name}`")));
        }
        if self.symbol_taken(name) {
            return Err(err(line, AsmErrorKind::DuplicateSymbol(name.into())));
        }
        match self.section {
            Section::Text => {
                self.labels.insert(name.into(), self.pending.len());
            }
            Section::Data => {
                self.data_labels.insert(name.into(), DATA_BASE + self.data.len() as u32);
            }
        }
        Ok(())
    }

    fn pragma(&mut self, line: usize, text: &str) -> Result<()> {
        let bad = |m: &str| err(line, AsmErrorKind::Pragma(m.into()));
        let mut words = text.split_whitespace();
        match words.next() {
            Some("copift_loop") => match words.next() {
                Some("begin") => {
                    let count = match words.next() {
                        None => None,
                        Some(w) => Some(match parse_number(w) {
                            Some(n) if (1..=u32::MAX as i64).contains(&n) => {
                                IterCount::Literal(n as u32)
                            }
                            Some(_) => return Err(bad("iteration count must be positive")),
                            None if is_ident(w) => IterCount::Symbol(w.into()),
                            None => return Err(bad("bad iteration count")),
                        }),
                    };
                    if words.next().is_some() {
                        return Err(bad("trailing tokens"));
                    }
                    self.open_loops.push((line, self.pending.len(), count));
                    Ok(())
                }
                Some("end") => {
                    let (_, start, count) =
                        self.open_loops.pop().ok_or_else(|| bad("`end` without `begin`"))?;
                    self.loops.push(LoopRegion { start, end: self.pending.len(), count });
                    Ok(())
                }
                _ => Err(bad("expected `begin` or `end`")),
            },
            Some("copift_clobber") => {
                let rest: String = words.collect::<Vec<_>>().join(" ");
                for name in split_operands(&rest) {
                    let reg = Reg::parse(&name)
                        .ok_or_else(|| bad(&format!("unknown register `{name}`")))?;
                    self.clobbers.push(reg);
                }
                Ok(())
            }
            Some(other) => Err(bad(&format!("unknown pragma `{other}`"))),
            None => Err(bad("empty pragma")),
        }
    }

    fn directive(&mut self, line: usize, name: &str, args: &str) -> Result<()> {
        let bad = |m: String| err(line, AsmErrorKind::Directive(m));
        match name {
            ".text" => self.section = Section::Text,
            ".data" => self.section = Section::Data,
            ".equ" | ".set" => {
                let ops = split_operands(args);
                if ops.len() != 2 || !is_ident(&ops[0]) {
                    return Err(bad(format!("{name} expects `name, value`")));
                }
                let v = self.eval(&ops[1]).ok_or_else(|| bad(format!("bad value `{}`", ops[1])))?;
                if self.symbol_taken(&ops[0]) {
                    return Err(err(line, AsmErrorKind::DuplicateSymbol(ops[0].clone())));
                }
                self.constants.insert(ops[0].clone(), v);
            }
            ".word" | ".byte" | ".double" | ".zero" | ".align" if self.section != Section::Data => {
                return Err(bad(format!("{name} outside .data")));
            }
            ".word" | ".byte" => {
                for op in split_operands(args) {
                    let v = self.eval(&op).ok_or_else(|| bad(format!("bad value `{op}`")))?;
                    if name == ".word" {
                        let w = to_i32(v).ok_or_else(|| bad(format!("`{op}` out of range")))?;
                        self.data.extend_from_slice(&w.to_le_bytes());
                    } else {
                        if !(-128..=255).contains(&v) {
                            return Err(bad(format!("`{op}` out of byte range")));
                        }
                        self.data.push(v as u8);
                    }
                }
            }
            ".double" => {
                for op in split_operands(args) {
                    let v: f64 = op.parse().map_err(|_| bad(format!("bad double `{op}`")))?;
                    self.data.extend_from_slice(&v.to_le_bytes());
                }
            }
            ".zero" => {
                let n = self.eval(args).filter(|n| *n >= 0).ok_or_else(|| bad("bad size".into()))?;
                self.data.resize(self.data.len() + n as usize, 0);
            }
            ".align" => {
                let n = self.eval(args).filter(|n| (0..16).contains(n)).ok_or_else(|| bad("bad alignment".into()))?;
                let align = 1usize << n;
                let addr = DATA_BASE as usize + self.data.len();
                let pad = (align - addr % align) % align;
                self.data.resize(self.data.len() + pad, 0);
            }
            _ => return Err(bad(format!("unknown directive `{name}`"))),
        }
        Ok(())
    }

    /// Evaluates a number or an already-defined constant / data label.
    fn eval(&self, s: &str) -> Option<i64> {
        let s = s.trim();
        parse_number(s)
            .or_else(|| self.constants.get(s).copied())
            .or_else(|| self.data_labels.get(s).map(|&a| a as i64))
    }

    fn first_pass(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if let Some(rest) = trimmed.strip_prefix("#pragma") {
                self.pragma(line, rest)?;
                continue;
            }
            let code = match trimmed.find(['#', ';']) {
                Some(pos) => &trimmed[..pos],
                None => trimmed,
            };
            let mut rest = code.trim();
            // leading `label:` prefixes
            while let Some(colon) = rest.find(':') {
                let head = rest[..colon].trim();
                if head.is_empty() || head.contains(char::is_whitespace) || head.contains(',') {
                    break;
                }
                self.define_label(line, head)?;
                rest = rest[colon + 1..].trim();
            }
            if rest.is_empty() {
                continue;
            }
            let (word, args) = match rest.find(char::is_whitespace) {
                Some(pos) => (&rest[..pos], rest[pos..].trim()),
                None => (rest, ""),
            };
            if word.starts_with('.') {
                self.directive(line, word, args)?;
                continue;
            }
            if self.section != Section::Text {
                return Err(malformed(line, "instruction in .data section"));
            }
            self.pending.push(PendingInstr {
                line,
                mnemonic: word.to_ascii_lowercase(),
                operands: split_operands(args),
            });
        }
        if let Some((line, _, _)) = self.open_loops.first() {
            return Err(err(*line, AsmErrorKind::Pragma("unterminated copift_loop".into())));
        }
        Ok(())
    }

    fn reg(&self, line: usize, s: &str, kind: RegKind) -> Result<Reg> {
        let r = Reg::parse(s).ok_or_else(|| malformed(line, format!("unknown register `{s}`")))?;
        if r.kind != kind {
            let want = if kind == RegKind::Int { "integer" } else { "FP" };
            return Err(malformed(line, format!("`{s}` is not an {want} register")));
        }
        Ok(r)
    }

    /// Immediate: number, `.equ` constant, or data label (remembered in `sym`).
    fn imm(&self, line: usize, s: &str) -> Result<(i32, Option<String>)> {
        let s = s.trim();
        if let Some(v) = parse_number(s) {
            let v = to_i32(v).ok_or_else(|| malformed(line, format!("immediate `{s}` out of range")))?;
            return Ok((v, None));
        }
        if is_ident(s) {
            if let Some(v) = self.constants.get(s).copied().or_else(|| self.data_labels.get(s).map(|&a| a as i64)) {
                let v = to_i32(v).ok_or_else(|| malformed(line, format!("`{s}` out of range")))?;
                return Ok((v, Some(s.to_string())));
            }
            return Err(err(line, AsmErrorKind::UnresolvedLabel(s.into())));
        }
        Err(malformed(line, format!("bad immediate `{s}`")))
    }

    /// `imm(reg)` memory operand.
    fn mem(&self, line: usize, s: &str) -> Result<(i32, Option<String>, Reg)> {
        let open = s.find('(').ok_or_else(|| malformed(line, format!("expected imm(reg), got `{s}`")))?;
        let close = s
            .rfind(')')
            .filter(|&c| c > open && s[c + 1..].trim().is_empty())
            .ok_or_else(|| malformed(line, format!("unbalanced parentheses in `{s}`")))?;
        let imm_text = s[..open].trim();
        let (imm, sym) = if imm_text.is_empty() { (0, None) } else { self.imm(line, imm_text)? };
        let base = self.reg(line, &s[open + 1..close], RegKind::Int)?;
        Ok((imm, sym, base))
    }

    fn label_ref(&self, line: usize, s: &str) -> Result<String> {
        if !is_ident(s) {
            return Err(malformed(line, format!("bad label `{s}`")));
        }
        if !self.labels.contains_key(s) {
            return Err(err(line, AsmErrorKind::UnresolvedLabel(s.into())));
        }
        Ok(s.to_string())
    }

    fn csr(&self, line: usize, s: &str) -> Result<u32> {
        if s == "EnCopiftQueues" {
            return Ok(CSR_EN_COPIFT_QUEUES);
        }
        match parse_number(s) {
            Some(v) if (0..4096).contains(&v) => Ok(v as u32),
            _ => Err(err(line, AsmErrorKind::UnknownCsr(s.into()))),
        }
    }

    fn build(&self, p: &PendingInstr) -> Result<Instruction> {
        use RegKind::{Fp, Int};
        let line = p.line;
        let ops = &p.operands;
        let arity = |n: usize| {
            if ops.len() == n {
                Ok(())
            } else {
                Err(malformed(line, format!("`{}` expects {n} operands, got {}", p.mnemonic, ops.len())))
            }
        };
        // pseudo-instructions
        match p.mnemonic.as_str() {
            "nop" => {
                arity(0)?;
                return Ok(Instruction::i(Opcode::Addi, Reg::ZERO, Reg::ZERO, 0));
            }
            "li" | "la" => {
                arity(2)?;
                let rd = self.reg(line, &ops[0], Int)?;
                let (imm, sym) = self.imm(line, &ops[1])?;
                return Ok(Instruction { sym, ..Instruction::i(Opcode::Addi, rd, Reg::ZERO, imm) });
            }
            "mv" => {
                arity(2)?;
                let rd = self.reg(line, &ops[0], Int)?;
                let rs = self.reg(line, &ops[1], Int)?;
                return Ok(Instruction::i(Opcode::Addi, rd, rs, 0));
            }
            "j" => {
                arity(1)?;
                return Ok(Instruction::jal(Reg::ZERO, &self.label_ref(line, &ops[0])?));
            }
            "beqz" | "bnez" => {
                arity(2)?;
                let rs = self.reg(line, &ops[0], Int)?;
                let op = if p.mnemonic == "beqz" { Opcode::Beq } else { Opcode::Bne };
                return Ok(Instruction::branch(op, rs, Reg::ZERO, &self.label_ref(line, &ops[1])?));
            }
            "fmv.d" => {
                arity(2)?;
                let rd = self.reg(line, &ops[0], Fp)?;
                let rs = self.reg(line, &ops[1], Fp)?;
                return Ok(Instruction::r(Opcode::FsgnjD, rd, rs, rs));
            }
            _ => {}
        }
        let op = Opcode::from_mnemonic(&p.mnemonic)
            .ok_or_else(|| err(line, AsmErrorKind::UnknownMnemonic(p.mnemonic.clone())))?;
        let instr = match op.format() {
            Format::IntR => {
                arity(3)?;
                Instruction::r(op, self.reg(line, &ops[0], Int)?, self.reg(line, &ops[1], Int)?, self.reg(line, &ops[2], Int)?)
            }
            Format::FpR => {
                arity(3)?;
                Instruction::r(op, self.reg(line, &ops[0], Fp)?, self.reg(line, &ops[1], Fp)?, self.reg(line, &ops[2], Fp)?)
            }
            Format::FpR4 => {
                arity(4)?;
                Instruction::r4(
                    op,
                    self.reg(line, &ops[0], Fp)?,
                    self.reg(line, &ops[1], Fp)?,
                    self.reg(line, &ops[2], Fp)?,
                    self.reg(line, &ops[3], Fp)?,
                )
            }
            Format::IntI => {
                arity(3)?;
                let (imm, sym) = self.imm(line, &ops[2])?;
                Instruction { sym, ..Instruction::i(op, self.reg(line, &ops[0], Int)?, self.reg(line, &ops[1], Int)?, imm) }
            }
            Format::Upper => {
                arity(2)?;
                let (imm, sym) = self.imm(line, &ops[1])?;
                Instruction { sym, ..Instruction::lui(self.reg(line, &ops[0], Int)?, imm) }
            }
            Format::IntLoad | Format::FpLoad => {
                arity(2)?;
                let kind = if op.format() == Format::IntLoad { Int } else { Fp };
                let rd = self.reg(line, &ops[0], kind)?;
                let (imm, sym, base) = self.mem(line, &ops[1])?;
                Instruction { sym, ..Instruction::i(op, rd, base, imm) }
            }
            Format::IntStore | Format::FpStore => {
                arity(2)?;
                let kind = if op.format() == Format::IntStore { Int } else { Fp };
                let data = self.reg(line, &ops[0], kind)?;
                let (imm, sym, base) = self.mem(line, &ops[1])?;
                Instruction { sym, ..Instruction::store(op, data, base, imm) }
            }
            Format::Branch => {
                arity(3)?;
                Instruction::branch(op, self.reg(line, &ops[0], Int)?, self.reg(line, &ops[1], Int)?, &self.label_ref(line, &ops[2])?)
            }
            Format::Jump => match ops.len() {
                1 => Instruction::jal(Reg::x(1), &self.label_ref(line, &ops[0])?),
                _ => {
                    arity(2)?;
                    Instruction::jal(self.reg(line, &ops[0], Int)?, &self.label_ref(line, &ops[1])?)
                }
            },
            Format::Csr => {
                arity(3)?;
                Instruction::csr(op, self.reg(line, &ops[0], Int)?, self.csr(line, &ops[1])?, self.reg(line, &ops[2], Int)?)
            }
            Format::IntToFp => {
                arity(2)?;
                Instruction::unary(op, self.reg(line, &ops[0], Fp)?, self.reg(line, &ops[1], Int)?)
            }
            Format::FpToInt => {
                arity(2)?;
                Instruction::unary(op, self.reg(line, &ops[0], Int)?, self.reg(line, &ops[1], Fp)?)
            }
            Format::Frep => {
                arity(2)?;
                let iters = parse_number(&ops[0]).filter(|v| (1..=i32::MAX as i64).contains(v));
                let len = parse_number(&ops[1]).filter(|v| (1..=u32::MAX as i64).contains(v));
                match (iters, len) {
                    (Some(i), Some(l)) => Instruction::frep(i as u32, l as u32),
                    _ => return Err(malformed(line, "frep expects positive `iterations, length`")),
                }
            }
        };
        instr.validate().map_err(|e| malformed(line, e.to_string()))?;
        Ok(instr)
    }
}

/// Assembles source text into a [`Program`].
pub fn parse_program(text: &str) -> Result<Program> {
    let mut asm = Assembler::new();
    asm.first_pass(text)?;
    let instructions = asm.pending.iter().map(|p| asm.build(p)).collect::<Result<Vec<_>>>()?;
    for region in &asm.loops {
        if let Some(IterCount::Symbol(s)) = &region.count {
            if !asm.constants.contains_key(s) && !asm.data_labels.contains_key(s) {
                let line = asm.pending.get(region.start).map_or(0, |p| p.line);
                return Err(err(line, AsmErrorKind::UnresolvedLabel(s.clone())));
            }
        }
    }
    let mut loops = asm.loops;
    loops.sort_by_key(|l| (l.start, std::cmp::Reverse(l.end)));
    let entry = asm.labels.get("_start").copied().unwrap_or(0);
    Ok(Program {
        instructions,
        labels: asm.labels,
        data_labels: asm.data_labels,
        constants: asm.constants,
        data: asm.data,
        loops,
        clobbers: asm.clobbers,
        entry,
    })
}

fn print_count(c: &Option<IterCount>) -> String {
    match c {
        None => String::new(),
        Some(IterCount::Literal(n)) => format!(" {n}"),
        Some(IterCount::Symbol(s)) => format!(" {s}"),
    }
}

/// Prints a program in the same text format [`parse_program`] accepts.
pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for (name, value) in &p.constants {
        let _ = writeln!(out, ".equ {name}, {value}");
    }
    if !p.clobbers.is_empty() {
        let regs: Vec<String> = p.clobbers.iter().map(|r| r.to_string()).collect();
        let _ = writeln!(out, "#pragma copift_clobber {}", regs.join(", "));
    }
    for i in 0..=p.instructions.len() {
        for _ in p.loops.iter().filter(|l| l.end == i && l.start < i) {
            out.push_str("#pragma copift_loop end\n");
        }
        for region in p.loops.iter().filter(|l| l.start == i) {
            let _ = writeln!(out, "#pragma copift_loop begin{}", print_count(&region.count));
            if region.end == i {
                out.push_str("#pragma copift_loop end\n");
            }
        }
        for label in p.labels_at(i) {
            let _ = writeln!(out, "{label}:");
        }
        if let Some(instr) = p.instructions.get(i) {
            let _ = writeln!(out, "    {instr}");
        }
    }
    if !p.data.is_empty() || !p.data_labels.is_empty() {
        out.push_str(".data\n");
        let end = DATA_BASE + p.data.len() as u32;
        let mut cuts: Vec<u32> = p.data_labels.values().copied().filter(|&a| a <= end).collect();
        cuts.push(DATA_BASE);
        cuts.push(end);
        cuts.sort_unstable();
        cuts.dedup();
        for w in cuts.windows(2).map(|w| (w[0], w[1])).chain(std::iter::once((end, end))) {
            let (from, to) = w;
            for (name, _) in p.data_labels.iter().filter(|(_, &a)| a == from) {
                let _ = writeln!(out, "{name}:");
            }
            let bytes = &p.data[(from - DATA_BASE) as usize..(to - DATA_BASE) as usize];
            let mut words = bytes.chunks_exact(4);
            for chunk in &mut words {
                let w = u32::from_le_bytes(chunk.try_into().unwrap());
                let _ = writeln!(out, "    .word {w:#010x}");
            }
            for b in words.remainder() {
                let _ = writeln!(out, "    .byte {b}");
            }
            if from == end {
                break;
            }
        }
    }
    out
}
