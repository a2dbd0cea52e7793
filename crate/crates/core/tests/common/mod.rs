//! Random assembly shared by the property tests.

#![allow(dead_code)]

use proptest::prelude::*;

use copift_core::isa::{Format, Opcode};

/// Raw material for one instruction; `line` renders it.
#[derive(Debug, Clone)]
pub struct Raw {
    pub op: Opcode,
    pub regs: [u8; 4],
    pub imm: i32,
    pub hex: bool,
}

pub fn raw() -> impl Strategy<Value = Raw> {
    let ops: Vec<Opcode> = Opcode::ALL.iter().copied().filter(|&o| o != Opcode::Frep).collect();
    (prop::sample::select(ops), [0u8..32, 0u8..32, 0u8..32, 0u8..32], any::<i32>(), any::<bool>())
        .prop_map(|(op, regs, imm, hex)| Raw { op, regs, imm, hex })
}

fn num(v: i32, hex: bool) -> String {
    if hex && v >= 0 {
        format!("{v:#x}")
    } else {
        v.to_string()
    }
}

/// One source line. Branches and jumps target `label`.
pub fn line(r: &Raw, label: &str) -> String {
    let m = r.op.mnemonic();
    let [a, b, c, d] = r.regs;
    let x = |i: u8| format!("x{i}");
    let f = |i: u8| format!("f{i}");
    let imm12 = r.imm.rem_euclid(4096) - 2048;
    match r.op.format() {
        Format::IntR => format!("{m} {}, {}, {}", x(a), x(b), x(c)),
        Format::IntI if matches!(r.op, Opcode::Slli | Opcode::Srli | Opcode::Srai) => {
            format!("{m} {}, {}, {}", x(a), x(b), r.imm.rem_euclid(32))
        }
        Format::IntI => format!("{m} {}, {}, {}", x(a), x(b), num(imm12, r.hex)),
        Format::Upper => format!("{m} {}, {}", x(a), num(r.imm.rem_euclid(1 << 20), r.hex)),
        Format::IntLoad => format!("{m} {}, {}({})", x(a), num(imm12, r.hex), x(b)),
        Format::IntStore => format!("{m} {}, {}({})", x(a), num(imm12, r.hex), x(b)),
        Format::Branch => format!("{m} {}, {}, {label}", x(a), x(b)),
        Format::Jump => format!("{m} {}, {label}", x(a)),
        Format::Csr => format!("{m} {}, EnCopiftQueues, {}", x(a), x(b)),
        Format::FpR => format!("{m} {}, {}, {}", f(a), f(b), f(c)),
        Format::FpR4 => format!("{m} {}, {}, {}, {}", f(a), f(b), f(c), f(d)),
        Format::IntToFp => format!("{m} {}, {}", f(a), x(b)),
        Format::FpToInt => format!("{m} {}, {}", x(a), f(b)),
        Format::FpLoad => format!("{m} {}, {}({})", f(a), num(imm12, r.hex), x(b)),
        Format::FpStore => format!("{m} {}, {}({})", f(a), num(imm12, r.hex), x(b)),
        Format::Frep => format!("{m} {}, 1", r.imm.rem_euclid(100) + 1),
    }
}

/// `n` cases, no regression files.
pub fn cases(n: u32) -> ProptestConfig {
    ProptestConfig { cases: n, failure_persistence: None, ..ProptestConfig::default() }
}
