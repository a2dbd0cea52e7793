//! IPC ceilings over the kernel suite and over random marked loops.

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use copift_core::bench::{self, seeded_state, Variant};
use copift_core::parse_program;
use copift_core::sim::{run, MachineConfig, Metrics, Mode};
use copift_core::transform::transform_program;

const CASES: u32 = 1000;

#[derive(Debug, Clone)]
struct IntOp {
    kind: u8,
    rd: usize,
    a: usize,
    b: usize,
    imm: u8,
}

#[derive(Debug, Clone)]
struct FpOp {
    kind: u8,
    rd: usize,
    a: usize,
    b: usize,
    c: usize,
}

#[derive(Debug, Clone)]
pub struct Shape {
    pub iters: u32,
    int_ops: Vec<IntOp>,
    cvts: Vec<(bool, usize, usize)>,
    fp_ops: Vec<FpOp>,
    f2i: bool,
    mem: Option<usize>,
    pub seed: u64,
}

const INT_TEMPS: [&str; 7] = ["t0", "t1", "t2", "t3", "t4", "a3", "a4"];
const FP_TEMPS: [&str; 8] = ["ft0", "ft1", "ft2", "ft3", "ft4", "ft5", "ft6", "ft7"];

pub fn shape() -> impl Strategy<Value = Shape> {
    let int_op = (0u8..6, 0usize..7, any::<prop::sample::Index>(), any::<prop::sample::Index>(), 1u8..20)
        .prop_map(|(kind, rd, a, b, imm)| IntOp { kind, rd, a: a.index(64), b: b.index(64), imm });
    let fp_op = (0u8..4, 0usize..8, 0usize..64, 0usize..64, 0usize..64).prop_map(|(kind, rd, a, b, c)| FpOp { kind, rd, a, b, c });
    (
        1u32..40,
        prop::collection::vec(int_op, 0..=5),
        prop::collection::vec((any::<bool>(), 0usize..64, 0usize..8), 1..=3),
        prop::collection::vec(fp_op, 0..=6),
        any::<bool>(),
        prop::option::of(0usize..64),
        any::<u64>(),
    )
        .prop_map(|(iters, int_ops, cvts, fp_ops, f2i, mem, seed)| Shape { iters, int_ops, cvts, fp_ops, f2i, mem, seed })
}

/// Assembly for a shape. Sources are picked among registers already
/// written in the body, so only the accumulator and pointers carry values
/// across iterations.
pub fn render(s: &Shape) -> String {
    let n = s.iters;
    let mut out = format!(
        ".data\ninput: .zero {}\n.align 3\noutput: .zero {}\nscratch: .zero {}\nacc: .word 0\n.text\n",
        4 * n,
        8 * n,
        8 * n
    );
    out += "    la a0, input\n    la a1, output\n    la a2, scratch\n    li a6, ";
    out += &format!("{n}\n    li s1, 0\n    li a5, 3\n    fcvt.d.w fs0, a5\n#pragma copift_loop begin {n}\nloop:\n    lw t0, 0(a0)\n");
    let mut ints = vec!["t0"];
    for op in &s.int_ops {
        let (a, b, rd) = (ints[op.a % ints.len()], ints[op.b % ints.len()], INT_TEMPS[op.rd]);
        out += &match op.kind {
            0 => format!("    add {rd}, {a}, {b}\n"),
            1 => format!("    xor {rd}, {a}, {b}\n"),
            2 => format!("    slli {rd}, {a}, {}\n", op.imm % 12),
            3 => format!("    srli {rd}, {a}, {}\n", op.imm % 12),
            4 => format!("    mul {rd}, {a}, {b}\n"),
            _ => format!("    addi {rd}, {a}, {}\n", op.imm),
        };
        if !ints.contains(&rd) {
            ints.push(rd);
        }
    }
    let mut fps = vec!["fs0"];
    for &(unsigned, src, rd) in &s.cvts {
        let op = if unsigned { "fcvt.d.wu" } else { "fcvt.d.w" };
        out += &format!("    {op} {}, {}\n", FP_TEMPS[rd], ints[src % ints.len()]);
        fps.push(FP_TEMPS[rd]);
    }
    if let Some(src) = s.mem {
        out += &format!("    sw {}, 0(a2)\n    sw x0, 4(a2)\n    fld ft7, 0(a2)\n", ints[src % ints.len()]);
        fps.push("ft7");
    }
    for op in &s.fp_ops {
        let pick = |k: usize| fps[k % fps.len()];
        let (a, b, c, rd) = (pick(op.a), pick(op.b), pick(op.c), FP_TEMPS[op.rd]);
        out += &match op.kind {
            0 => format!("    fadd.d {rd}, {a}, {b}\n"),
            1 => format!("    fmul.d {rd}, {a}, {b}\n"),
            2 => format!("    fsub.d {rd}, {a}, {b}\n"),
            _ => format!("    fmadd.d {rd}, {a}, {b}, {c}\n"),
        };
        fps.push(rd);
    }
    let last = fps[fps.len() - 1];
    out += &format!("    fsd {last}, 0(a1)\n");
    if s.f2i {
        out += &format!("    fcvt.w.d t5, {last}\n    add s1, s1, t5\n");
    }
    out += "    addi a0, a0, 4\n    addi a1, a1, 8\n";
    if s.mem.is_some() {
        out += "    addi a2, a2, 8\n";
    }
    out += "    addi a6, a6, -1\n    bnez a6, loop\n#pragma copift_loop end\n    la a3, acc\n    sw s1, 0(a3)\n";
    out
}

fn within(m: &Metrics, mode: Mode) -> bool {
    let cap = if mode == Mode::Sequential { 1.0 } else { 2.0 };
    m.retired() as f64 <= cap * m.cycles as f64
}

fn random_loop(s: &Shape) -> Result<(), TestCaseError> {
    let cfg = MachineConfig::default();
    let src = render(s);
    let p = parse_program(&src).map_err(|e| TestCaseError::fail(format!("{e}\n{src}")))?;
    let t = transform_program(&p, &cfg).map_err(|e| TestCaseError::fail(format!("{e}\n{src}")))?.program;
    for (prog, mode) in [(&p, Mode::Sequential), (&p, Mode::Dual), (&t, Mode::Dual)] {
        let init = seeded_state(prog, &cfg, s.seed).map_err(TestCaseError::fail)?;
        let r = run(prog, &cfg, init, mode, None);
        prop_assert!(r.halted(), "{:?}: {:?}\n{}", mode, r.termination, src);
        prop_assert!(within(&r.metrics, mode), "{:?} IPC {}\n{}", mode, r.metrics.ipc(), src);
    }
    bench::verify_pair(&p, &t, &cfg, &[s.seed]).map_err(|e| TestCaseError::fail(format!("{e}\n{src}")))?;
    Ok(())
}

pub fn bounds() -> Result<String, String> {
    let cfg = MachineConfig::default();
    let mut peak: f64 = 0.0;
    for k in bench::kernels() {
        for v in Variant::ALL {
            let p = k.program(v, &cfg).map_err(|e| e.to_string())?;
            let modes: &[Mode] = if v == Variant::Baseline { &[Mode::Sequential, Mode::Dual] } else { &[Mode::Dual] };
            for &mode in modes {
                let init = k.init_state(&p, v, &cfg, 0).map_err(|e| e.to_string())?;
                let r = run(&p, &cfg, init, mode, None);
                if !r.halted() || !within(&r.metrics, mode) {
                    return Err(format!("{}/{v} {mode:?}: {:?}, IPC {:.4}", k.name, r.termination, r.metrics.ipc()));
                }
                peak = peak.max(r.metrics.ipc());
            }
        }
    }
    let mut runner = TestRunner::new(Config { cases: CASES, failure_persistence: None, ..Config::default() });
    runner.run(&shape(), |s| random_loop(&s)).map_err(|e| format!("random loops: {e}"))?;
    Ok(format!("suite peak IPC {peak:.4}; {CASES} random loops within bounds and equivalent"))
}
