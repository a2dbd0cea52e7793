//! Every body of up to eight instructions over a fixed pool, scheduled and
//! compared with all legal integer-thread orders.

use rayon::prelude::*;

use copift_core::dfg::{build_dfg, check_topological, DepKind};
use copift_core::isa::{Instruction, Reg};
use copift_core::parse_program;
use copift_core::sim::MachineConfig;
use copift_core::transform::{partition, schedule, static_dual, Queue, Schedule};

const MAX_LEN: usize = 8;
const POOL: usize = 5;
const ITERS: u32 = 2;

const INT_DST: [&str; 8] = ["t0", "t1", "t2", "t3", "t4", "t5", "s2", "s3"];
const FP_DST: [&str; 8] = ["ft0", "ft1", "ft2", "ft3", "ft4", "ft5", "ft6", "ft7"];

/// Body number `code` of length `len`: digit k picks the template of node k.
fn body(len: usize, mut code: usize) -> String {
    let (mut ints, mut fps) = (vec!["a0"], vec!["fa1", "fa0"]);
    let mut out = String::new();
    for k in 0..len {
        let t = code % POOL;
        code /= POOL;
        let (rd_i, rd_f) = (INT_DST[k], FP_DST[k]);
        let (ri, rf, rf2) = (ints[ints.len() - 1], fps[fps.len() - 1], fps[fps.len() - 2]);
        match t {
            0 => out += &format!("addi {rd_i}, {ri}, 1\n"),
            1 => out += &format!("addi {rd_i}, a1, 7\n"),
            2 => out += &format!("fcvt.d.w {rd_f}, {ri}\n"),
            3 => out += &format!("fadd.d {rd_f}, {rf}, {rf2}\n"),
            _ => out += &format!("fcvt.w.d {rd_i}, {rf}\n"),
        }
        if matches!(t, 0 | 1 | 4) {
            ints.push(rd_i);
        } else {
            fps.push(rd_f);
        }
    }
    out
}

/// Precedence pairs `(a, b)`: item a must come before item b. Register
/// hazards among integer items (the queue port excepted) plus FIFO order
/// of pushes and of pops.
fn precedence(s: &Schedule) -> Vec<(usize, usize)> {
    let items: Vec<&Instruction> = s.int_items.iter().map(|i| &i.instr).collect();
    let writes = |i: &Instruction| i.rd.filter(|&r| r != Reg::QUEUE && r != Reg::ZERO);
    let reads = |i: &Instruction, r: Reg| i.sources().any(|x| x == r);
    let mut out = Vec::new();
    for a in 0..items.len() {
        for b in a + 1..items.len() {
            let raw = writes(items[a]).is_some_and(|r| reads(items[b], r));
            let war = writes(items[b]).is_some_and(|r| reads(items[a], r));
            let waw = writes(items[a]).is_some() && writes(items[a]) == writes(items[b]);
            if raw || war || waw {
                out.push((a, b));
            }
        }
    }
    for q in [Queue::I2f, Queue::F2i] {
        let mut chain: Vec<(usize, usize)> =
            s.bindings.iter().filter(|b| b.queue == q).map(|b| (b.slot, b.int_item)).collect();
        chain.sort();
        out.extend(chain.windows(2).map(|w| (w[0].1, w[1].1)));
    }
    out
}

fn respects(order: &[usize], prec: &[(usize, usize)]) -> bool {
    let mut pos = vec![0; order.len()];
    for (k, &i) in order.iter().enumerate() {
        pos[i] = k;
    }
    prec.iter().all(|&(a, b)| pos[a] < pos[b])
}

/// Calls `visit` on every linear extension of `prec` over `n` items.
fn extensions(n: usize, preds: &[Vec<usize>], prefix: &mut Vec<usize>, placed: &mut [bool], visit: &mut dyn FnMut(&[usize])) {
    if prefix.len() == n {
        visit(prefix);
        return;
    }
    for k in 0..n {
        if !placed[k] && preds[k].iter().all(|&a| placed[a]) {
            placed[k] = true;
            prefix.push(k);
            extensions(n, preds, prefix, placed, visit);
            prefix.pop();
            placed[k] = false;
        }
    }
}

/// Pairs of interchangeable items: same opcode and operands, no queue
/// binding, result read by nobody. Swapping two leaves every timing
/// unchanged, so the enumeration keeps only one of the two orders.
fn symmetry(s: &Schedule) -> Vec<(usize, usize)> {
    let items: Vec<&Instruction> = s.int_items.iter().map(|i| &i.instr).collect();
    let bound = |k: usize| s.bindings.iter().any(|b| b.int_item == k);
    let dead = |k: usize| {
        let rd = items[k].rd;
        !bound(k) && rd.is_some_and(|r| r != Reg::QUEUE && items.iter().all(|i| !i.sources().any(|x| x == r)))
    };
    let same = |a: &Instruction, b: &Instruction| a.op == b.op && a.rs1 == b.rs1 && a.rs2 == b.rs2 && a.imm == b.imm;
    let mut out = Vec::new();
    for a in 0..items.len() {
        if let Some(b) = (a + 1..items.len()).find(|&b| dead(a) && dead(b) && same(items[a], items[b])) {
            out.push((a, b));
        }
    }
    out
}

#[derive(Default)]
struct Tally {
    bodies: usize,
    scheduled: usize,
    optimal: usize,
    orders: usize,
}

fn one(len: usize, code: usize, cfg: &MachineConfig) -> Result<Tally, String> {
    let src = body(len, code);
    let instrs = parse_program(&src).map_err(|e| e.to_string())?.instructions;
    let g = build_dfg(&instrs).map_err(|e| format!("{e}\n{src}"))?;
    let mut t = Tally { bodies: 1, ..Tally::default() };
    let Ok(s) = schedule(&g, &partition(&g), cfg, ITERS) else { return Ok(t) };
    t.scheduled = 1;
    let fail = |m: String| Err(format!("{m}\n{src}"));

    let item_instrs: Vec<Instruction> = s.int_items.iter().map(|i| i.instr.clone()).collect();
    let mut ig = build_dfg(&item_instrs).map_err(|e| e.to_string())?;
    ig.edges.retain(|e| !matches!(e.kind, DepKind::RegRaw(r) | DepKind::RegWar(r) | DepKind::RegWaw(r) if r == Reg::QUEUE));
    if !check_topological(&ig, &s.int_order) {
        return fail(format!("order {:?} is not topological", s.int_order));
    }
    let prec = precedence(&s);
    if !respects(&s.int_order, &prec) {
        return fail(format!("order {:?} breaks a hazard or FIFO order", s.int_order));
    }
    let fp_sorted = s.fp_order.windows(2).all(|w| w[0] < w[1]);
    if !fp_sorted {
        return fail(format!("FP order {:?} differs from source order", s.fp_order));
    }

    let lat = &cfg.latencies;
    let cycles = |order: &[usize]| {
        let b: Vec<Instruction> = order.iter().map(|&k| item_instrs[k].clone()).collect();
        static_dual(&b, &s.fp_instrs, ITERS, lat, cfg.queue_depth).map(|t| t.cycles)
    };
    let chosen = cycles(&s.int_order).ok_or_else(|| format!("chosen order deadlocks\n{src}"))?;
    if chosen != s.timeline.cycles {
        return fail(format!("reported {} cycles, model gives {chosen}", s.timeline.cycles));
    }
    let original: Vec<usize> = (0..item_instrs.len()).collect();
    if let Some(o) = cycles(&original) {
        if chosen > o {
            return fail(format!("schedule {chosen} cycles worse than original order {o}"));
        }
    }
    let n = item_instrs.len();
    let mut preds = vec![Vec::new(); n];
    for &(a, b) in prec.iter().chain(&symmetry(&s)) {
        preds[b].push(a);
    }
    let (mut best, mut worst, mut count) = (u64::MAX, 0, 0);
    let mut buf: Vec<Instruction> = Vec::with_capacity(n);
    extensions(n, &preds, &mut Vec::with_capacity(n), &mut vec![false; n], &mut |order| {
        count += 1;
        buf.clear();
        buf.extend(order.iter().map(|&k| item_instrs[k].clone()));
        if let Some(tl) = static_dual(&buf, &s.fp_instrs, ITERS, lat, cfg.queue_depth) {
            best = best.min(tl.cycles);
            worst = worst.max(tl.cycles);
        }
    });
    if chosen < best || chosen > worst {
        return fail(format!("{chosen} cycles outside brute-force range [{best}, {worst}]"));
    }
    t.optimal = usize::from(chosen == best);
    t.orders = count;
    Ok(t)
}

pub fn check() -> Result<String, String> {
    let cfg = MachineConfig::default();
    let jobs: Vec<(usize, usize)> = (1..=MAX_LEN).flat_map(|len| (0..POOL.pow(len as u32)).map(move |c| (len, c))).collect();
    let total = jobs
        .par_iter()
        .map(|&(len, code)| one(len, code, &cfg))
        .try_reduce(Tally::default, |a, b| {
            Ok(Tally {
                bodies: a.bodies + b.bodies,
                scheduled: a.scheduled + b.scheduled,
                optimal: a.optimal + b.optimal,
                orders: a.orders + b.orders,
            })
        })?;
    Ok(format!(
        "{} bodies, {} scheduled, {} orders enumerated, greedy optimal on {}",
        total.bodies, total.scheduled, total.orders, total.optimal
    ))
}
