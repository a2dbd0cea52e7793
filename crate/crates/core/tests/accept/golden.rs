//! Register- and memory-carried handoffs against their hand-written
//! queue listings.

use copift_core::dfg::{build_dfg_with, MemContext};
use copift_core::isa::{Instruction, Opcode};
use copift_core::parse_program;
use copift_core::sim::MachineConfig;
use copift_core::transform::{map_queues, partition, schedule, transform_program};

const CASES: [(&str, &str, &str); 2] = [
    (
        "register",
        "add t0, t0, t1
         fcvt.d.wu ft0, t0",
        "add x31, t0, t1
         fcvt.d.wu ft0, t0",
    ),
    (
        "memory",
        "sw t1,  8(t0)
         sw t2, 12(t0)
         fld ft0, 8(t0)
         fmul.d ft2, ft0, ft1",
        "sw t1,  8(t0)
         sw t2, 12(t0)
         addi x31, t0, 8
         fld ft0, 0(t0)
         fmul.d ft2, ft0, ft1",
    ),
];

fn listing(src: &str) -> Result<Vec<Instruction>, String> {
    parse_program(src).map(|p| p.instructions).map_err(|e| e.to_string())
}

fn texts(v: &[Instruction]) -> Vec<String> {
    v.iter().map(|i| i.to_string()).collect()
}

fn one(name: &str, src: &str, expect: &str) -> Result<(), String> {
    let cfg = MachineConfig::default();
    let body = listing(src)?;
    let want = listing(expect)?;
    let one_pass = MemContext { iterations: Some(1), ..MemContext::default() };
    let g = build_dfg_with(&body, 0, &one_pass).map_err(|e| e.to_string())?;
    let s = schedule(&g, &partition(&g), &cfg, 1).map_err(|e| e.to_string())?;
    let m = map_queues(&s);
    let got: Vec<Instruction> = m.int_body.iter().chain(&m.fp_body).cloned().collect();
    if got != want {
        return Err(format!("{name}: got {:?}, want {:?}", texts(&got), texts(&want)));
    }
    // The full pass emits the same two threads around the hardware loop.
    let marked = format!("#pragma copift_loop begin\n{src}\n#pragma copift_loop end\n");
    let p = parse_program(&marked).map_err(|e| e.to_string())?;
    let out = transform_program(&p, &cfg).map_err(|e| e.to_string())?.program.instructions;
    let f = out.iter().position(|i| i.op == Opcode::Frep).ok_or("no frep emitted")?;
    let len = out[f].body_len as usize;
    let end = out.iter().rposition(|i| i.op == Opcode::Csrrw).ok_or("no closing CSR write")?;
    if out[f + 1..f + 1 + len] != m.fp_body[..] || out[f + 1 + len..end] != m.int_body[..] {
        return Err(format!("{name}: emitted program disagrees with the mapped threads: {:?}", texts(&out)));
    }
    Ok(())
}

pub fn check() -> Result<String, String> {
    for (name, src, expect) in CASES {
        one(name, src, expect)?;
    }
    Ok(format!("{} listings match instruction for instruction", CASES.len()))
}
