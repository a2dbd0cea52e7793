//! Splits a marked loop into an integer thread and an FP thread that talk
//! through the hardware queues, and wraps the FP thread in `frep`.
//!
//! The pipeline is `build_dfg` -> [`partition`] -> [`schedule`] ->
//! [`map_queues`] -> [`wrap_frep`], composed by [`transform_loop`].

mod timeline;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::dfg::{build_dfg_with, cross_deps, Carrier, DepKind, Dfg, Direction, MemContext};
use crate::isa::{Format, Instruction, Opcode, Reg, Thread, CSR_EN_COPIFT_QUEUES};
use crate::program::{LoopRegion, Program};
use crate::sim::MachineConfig;

pub use timeline::{dual as static_dual, list_schedule, serial as static_serial, Timeline};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Dfg = 1,
    Partition = 2,
    Schedule = 3,
    MapQueues = 4,
    WrapFrep = 5,
}

impl Step {
    pub fn name(self) -> &'static str {
        match self {
            Step::Dfg => "dataflow graph",
            Step::Partition => "partition",
            Step::Schedule => "schedule",
            Step::MapQueues => "queue mapping",
            Step::WrapFrep => "hardware loop",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("step {} ({}): {message}", *.step as u8, .step.name())]
pub struct TransformError {
    pub step: Step,
    pub message: String,
}

fn fail<T>(step: Step, message: impl Into<String>) -> Result<T, TransformError> {
    Err(TransformError { step, message: message.into() })
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Partition {
    pub int_nodes: Vec<usize>,
    pub fp_nodes: Vec<usize>,
}

/// Splits nodes by thread. Address arithmetic stays integer.
pub fn partition(g: &Dfg) -> Partition {
    let mut p = Partition::default();
    for (k, n) in g.nodes.iter().enumerate() {
        match n.thread() {
            Thread::IntThread => p.int_nodes.push(k),
            Thread::FpThread => p.fp_nodes.push(k),
        }
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Queue {
    I2f,
    F2i,
}

/// Where an integer-thread instruction comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    /// A body node, possibly with `rd` or one source rewritten to `x31`.
    Node(usize),
    /// `addi x31, r, 0` feeding FP node `fp`.
    PushCopy { fp: usize },
    /// `addi x31, base, off` carrying the address of FP memory node `fp`.
    AddrPush { fp: usize },
    /// `addi r, x31, 0` receiving the integer result of FP node `fp`.
    PopCopy { fp: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadItem {
    pub instr: Instruction,
    pub origin: Origin,
}

/// Queue slot `slot` (per iteration) connecting an integer-thread item and
/// an FP node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Binding {
    pub queue: Queue,
    pub slot: usize,
    pub int_item: usize,
    pub fp_node: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    /// Integer-thread instructions in program order of their origin.
    pub int_items: Vec<ThreadItem>,
    /// Emission order, as positions in `int_items`.
    pub int_order: Vec<usize>,
    /// FP nodes in emission order.
    pub fp_order: Vec<usize>,
    /// FP node instructions after rewriting (memory offsets folded away).
    pub fp_instrs: Vec<Instruction>,
    pub bindings: Vec<Binding>,
    /// Registers whose final value the transformed loop no longer produces.
    pub clobbers: Vec<Reg>,
    /// Static timing of the chosen order over a few iterations.
    pub timeline: Timeline,
    /// Peak queue occupancy if queues were unbounded.
    pub unbounded: Timeline,
    /// True when list scheduling beat the original order.
    pub reordered: bool,
    pub warnings: Vec<String>,
}

/// Iterations the static model simulates when ranking orders.
const MODEL_ITERS: u32 = 8;

/// Checks the cross-thread dependencies the queues can carry.
fn check_cross(g: &Dfg) -> Result<(), TransformError> {
    for c in cross_deps(g) {
        let e = g.edges[c.edge];
        let (s, d) = (&g.nodes[e.src], &g.nodes[e.dst]);
        match (c.direction, c.carrier) {
            (Direction::FpToInt, Carrier::Memory) => {
                return fail(
                    Step::Partition,
                    format!("`{}` reaches integer access `{}` through memory", s.instr, d.instr),
                );
            }
            (Direction::FpToInt, Carrier::Register(r)) if e.loop_carried => {
                return fail(
                    Step::Partition,
                    format!("{r} carries `{}` into the next iteration's `{}`", s.instr, d.instr),
                );
            }
            _ => {}
        }
    }
    for e in &g.edges {
        if let DepKind::RegRaw(r) = e.kind {
            let (s, d) = (&g.nodes[e.src], &g.nodes[e.dst]);
            if r.is_int() && s.thread() == Thread::FpThread && d.thread() == Thread::FpThread {
                return fail(
                    Step::Partition,
                    format!("FP instructions `{}` and `{}` communicate through {r}", s.instr, d.instr),
                );
            }
        }
    }
    Ok(())
}

struct Plan {
    items: Vec<ThreadItem>,
    fp_instrs: Vec<Instruction>,
    bindings: Vec<Binding>,
    clobbers: BTreeSet<Reg>,
    warnings: Vec<String>,
}

/// Decides which value each queue slot carries and builds the integer
/// thread in original order.
fn plan(g: &Dfg) -> Plan {
    let n = g.len();
    let is_fp = |k: usize| g.nodes[k].thread() == Thread::FpThread;
    let consumes_i2f = |k: usize| is_fp(k) && g.nodes[k].instr.rs1.is_some_and(|r| r.is_int());
    let produces_f2i = |k: usize| is_fp(k) && g.nodes[k].instr.op.format() == Format::FpToInt;
    let branch_reads = |r: Reg| g.closing_branch.as_ref().is_some_and(|b| b.sources().any(|s| s == r));
    let raw_readers = |k: usize, r: Reg| -> Vec<(usize, bool)> {
        g.edges
            .iter()
            .filter(|e| e.src == k && e.kind == DepKind::RegRaw(r))
            .map(|e| (e.dst, e.loop_carried))
            .collect()
    };

    let mut i2f_slot_of = vec![0; n];
    let mut f2i_slot_of = vec![0; n];
    let (mut a, mut b) = (0, 0);
    for k in 0..n {
        if consumes_i2f(k) {
            i2f_slot_of[k] = a;
            a += 1;
        }
        if produces_f2i(k) {
            f2i_slot_of[k] = b;
            b += 1;
        }
    }

    // push_owner[p] = f: producer p writes x31 instead of a register and FP
    // node f pops it. pop_by_src[q] = (r, f): reader q pops f's result in
    // place of r.
    let mut push_owner = vec![None; n];
    let mut pop_by_src: Vec<Option<(Reg, usize)>> = vec![None; n];
    let mut fed_by_rd = vec![false; n];
    let mut read_by_src = vec![false; n];
    let mut clobbers = BTreeSet::new();
    let mut warnings = Vec::new();
    // Doubled original-order position of the latest planned push: a rewrite
    // pushes at 2p, a copy or address push at 2f - 1, just before its
    // consumer. Pushes must appear in consumer order.
    let mut last_push: i64 = -1;

    for f in 0..n {
        if consumes_i2f(f) && !g.nodes[f].instr.is_mem() {
            let r = g.nodes[f].instr.rs1.unwrap();
            let producer = g
                .edges
                .iter()
                .find(|e| e.dst == f && e.kind == DepKind::RegRaw(r) && !e.loop_carried)
                .map(|e| e.src);
            if let Some(p) = producer {
                let sole = raw_readers(p, r) == vec![(f, false)];
                if sole && 2 * p as i64 > last_push && !branch_reads(r) {
                    last_push = 2 * p as i64;
                    push_owner[p] = Some(f);
                    fed_by_rd[f] = true;
                    clobbers.insert(r);
                }
            }
        }
        if consumes_i2f(f) && !fed_by_rd[f] {
            last_push = 2 * f as i64 - 1;
        }
        if produces_f2i(f) {
            let r = g.nodes[f].instr.rd.unwrap();
            if g.nodes[f].instr.op == Opcode::FmvXD {
                warnings.push(format!("`{}` passes only the low 32 bits through F2I", g.nodes[f].instr));
            }
            if let [(q, false)] = raw_readers(f, r).as_slice() {
                let q = *q;
                let single_slot = g.nodes[q].instr.sources().filter(|&s| s == r).count() == 1;
                let adjacent = !(f + 1..q).any(produces_f2i);
                if r != Reg::ZERO && single_slot && adjacent && !branch_reads(r) && pop_by_src[q].is_none() {
                    pop_by_src[q] = Some((r, f));
                    read_by_src[f] = true;
                    clobbers.insert(r);
                }
            }
        }
    }

    let mut items = Vec::new();
    let mut fp_instrs = Vec::new();
    let mut bindings = Vec::new();
    for k in 0..n {
        let mut instr = g.nodes[k].instr.clone();
        if !is_fp(k) {
            if let Some(f) = push_owner[k] {
                instr.rd = Some(Reg::QUEUE);
                bindings.push(Binding { queue: Queue::I2f, slot: i2f_slot_of[f], int_item: items.len(), fp_node: f });
            }
            if let Some((r, f)) = pop_by_src[k] {
                for s in [&mut instr.rs1, &mut instr.rs2] {
                    if *s == Some(r) {
                        *s = Some(Reg::QUEUE);
                    }
                }
                bindings.push(Binding { queue: Queue::F2i, slot: f2i_slot_of[f], int_item: items.len(), fp_node: f });
            }
            items.push(ThreadItem { instr, origin: Origin::Node(k) });
            continue;
        }
        if consumes_i2f(k) && !fed_by_rd[k] {
            let r = instr.rs1.unwrap();
            let (push, origin) = if instr.is_mem() {
                let push = Instruction { sym: instr.sym.take(), ..Instruction::i(Opcode::Addi, Reg::QUEUE, r, instr.imm) };
                instr.imm = 0;
                (push, Origin::AddrPush { fp: k })
            } else {
                (Instruction::i(Opcode::Addi, Reg::QUEUE, r, 0), Origin::PushCopy { fp: k })
            };
            bindings.push(Binding { queue: Queue::I2f, slot: i2f_slot_of[k], int_item: items.len(), fp_node: k });
            items.push(ThreadItem { instr: push, origin });
        }
        if produces_f2i(k) && !read_by_src[k] {
            let r = instr.rd.unwrap();
            bindings.push(Binding { queue: Queue::F2i, slot: f2i_slot_of[k], int_item: items.len(), fp_node: k });
            items.push(ThreadItem { instr: Instruction::i(Opcode::Addi, r, Reg::QUEUE, 0), origin: Origin::PopCopy { fp: k } });
        }
        fp_instrs.push(instr);
    }
    bindings.sort_by_key(|b| (b.queue == Queue::F2i, b.slot));
    Plan { items, fp_instrs, bindings, clobbers, warnings }
}

fn reach(n: usize, edges: &[(usize, usize, u64)], seeds: &[bool], forward: bool) -> Vec<bool> {
    let mut mark = seeds.to_vec();
    let mut changed = true;
    while changed {
        changed = false;
        for &(s, d, _) in edges {
            let (from, to) = if forward { (s, d) } else { (d, s) };
            if mark[from] && !mark[to] {
                mark[to] = true;
                changed = true;
            }
        }
    }
    debug_assert_eq!(mark.len(), n);
    mark
}

/// Orders the integer thread: cross-thread producers as early as their
/// inputs allow, consumers of F2I values as late as possible, ties by
/// original order. The FP thread keeps its original order, which fixes the
/// FIFO order of both queues. The list schedule is kept only if the static
/// two-thread model runs it faster than the original order.
pub fn schedule(g: &Dfg, part: &Partition, cfg: &MachineConfig, iterations: u32) -> Result<Schedule, TransformError> {
    for n in &g.nodes {
        let uses_port = n.instr.rd == Some(Reg::QUEUE) || n.instr.sources().any(|r| r == Reg::QUEUE);
        if uses_port {
            return fail(Step::Schedule, format!("`{}` uses x31, which the queues reserve", n.instr));
        }
    }
    check_cross(g)?;
    let plan = plan(g);
    let n = plan.items.len();
    let instrs: Vec<Instruction> = plan.items.iter().map(|i| i.instr.clone()).collect();
    let ig = build_dfg_with(&instrs, 0, &MemContext { iterations: Some(1), ..MemContext::default() })
        .map_err(|e| TransformError { step: Step::Schedule, message: e.to_string() })?;
    let lat = &cfg.latencies;
    let mut edges: Vec<(usize, usize, u64)> = ig
        .edges
        .iter()
        .filter(|e| !matches!(e.kind, DepKind::RegRaw(r) | DepKind::RegWar(r) | DepKind::RegWaw(r) if r == Reg::QUEUE))
        .map(|e| {
            let l = match e.kind {
                DepKind::RegRaw(_) => lat.of(instrs[e.src].class()) as u64,
                _ => 1,
            };
            (e.src, e.dst, l)
        })
        .collect();
    let on = |q: Queue| plan.bindings.iter().filter(move |b| b.queue == q);
    for q in [Queue::I2f, Queue::F2i] {
        let chain: Vec<&Binding> = on(q).collect();
        for w in chain.windows(2) {
            edges.push((w[0].int_item, w[1].int_item, 1));
        }
    }
    for push in on(Queue::I2f) {
        for pop in on(Queue::F2i) {
            if push.fp_node < pop.fp_node {
                edges.push((push.int_item, pop.int_item, 1));
            }
        }
    }
    let item_of_node = |k: usize| plan.items.iter().position(|i| i.origin == Origin::Node(k));
    for e in g.edges.iter().filter(|e| e.kind == DepKind::MemOrder && !e.loop_carried) {
        if g.nodes[e.src].thread() == Thread::IntThread && g.nodes[e.dst].thread() == Thread::FpThread {
            let addr = plan.items.iter().position(|i| i.origin == Origin::AddrPush { fp: e.dst });
            if let (Some(a), Some(b)) = (item_of_node(e.src), addr) {
                edges.push((a, b, 1));
            }
        }
    }

    let pushes: Vec<bool> = (0..n).map(|k| plan.bindings.iter().any(|b| b.queue == Queue::I2f && b.int_item == k)).collect();
    let pops: Vec<bool> = (0..n).map(|k| plan.bindings.iter().any(|b| b.queue == Queue::F2i && b.int_item == k)).collect();
    let feeds = reach(n, &edges, &pushes, false);
    let fed = reach(n, &edges, &pops, true);
    let prio: Vec<u8> = (0..n).map(|k| if feeds[k] { 0 } else if fed[k] { 2 } else { 1 }).collect();
    let listed = list_schedule(n, &edges, &prio);
    let original: Vec<usize> = (0..n).collect();

    let fp_instrs = plan.fp_instrs.clone();
    let body_of = |order: &[usize]| -> Vec<Instruction> {
        let mut v: Vec<Instruction> = order.iter().map(|&k| instrs[k].clone()).collect();
        v.extend(g.closing_branch.clone());
        v
    };
    let k = iterations.min(MODEL_ITERS);
    let depth = cfg.queue_depth;
    let t_orig = static_dual(&body_of(&original), &fp_instrs, k, lat, depth);
    let t_list = static_dual(&body_of(&listed), &fp_instrs, k, lat, depth);
    let (int_order, timeline, reordered) = match (t_list, t_orig) {
        (Some(l), Some(o)) if l.cycles < o.cycles => (listed, l, true),
        (_, Some(o)) => (original, o, false),
        (Some(l), None) => (listed, l, true),
        (None, None) => {
            return fail(Step::Schedule, format!("integer and FP threads deadlock with queue depth {depth}"));
        }
    };
    let unbounded = static_dual(&body_of(&int_order), &fp_instrs, k, lat, usize::MAX).unwrap_or_default();
    let mut warnings = plan.warnings;
    for (q, peak) in [("I2F", unbounded.max_i2f), ("F2I", unbounded.max_f2i)] {
        if peak > depth {
            warnings.push(format!(
                "up to {peak} values in flight on {q} exceed queue depth {depth}; the producer will stall on a full queue (deadlock risk if it also waits on the consumer)"
            ));
        }
    }
    Ok(Schedule {
        int_items: plan.items,
        int_order,
        fp_order: part.fp_nodes.clone(),
        fp_instrs,
        bindings: plan.bindings,
        clobbers: plan.clobbers.into_iter().collect(),
        timeline,
        unbounded,
        reordered,
        warnings,
    })
}

/// The two thread bodies of a schedule: the integer thread in emission order
/// (closing branch not included) and the FP thread.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappedLoop {
    pub int_body: Vec<Instruction>,
    pub fp_body: Vec<Instruction>,
}

pub fn map_queues(s: &Schedule) -> MappedLoop {
    MappedLoop {
        int_body: s.int_order.iter().map(|&k| s.int_items[k].instr.clone()).collect(),
        fp_body: s.fp_instrs.clone(),
    }
}

/// Prefixes the FP thread with `frep iterations, len`.
pub fn wrap_frep(fp_body: &[Instruction], iterations: u32, buffer_depth: usize) -> Result<Vec<Instruction>, TransformError> {
    if fp_body.is_empty() {
        return fail(Step::WrapFrep, "empty FP thread");
    }
    if iterations == 0 {
        return fail(Step::WrapFrep, "zero iterations");
    }
    if let Some(i) = fp_body.iter().find(|i| !i.class().is_fp()) {
        return fail(Step::WrapFrep, format!("`{i}` is not an FP instruction"));
    }
    if fp_body.len() > buffer_depth {
        return fail(
            Step::WrapFrep,
            format!(
                "FP thread has {} instructions but the loop buffer holds {buffer_depth}; split the loop body",
                fp_body.len()
            ),
        );
    }
    let mut out = vec![Instruction::frep(iterations, fp_body.len() as u32)];
    out.extend_from_slice(fp_body);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LoopStats {
    /// Program index of the loop head in the input.
    pub start: usize,
    pub iterations: u32,
    pub int_instrs: usize,
    pub fp_instrs: usize,
    pub i2f_per_iter: usize,
    pub f2i_per_iter: usize,
    pub max_inflight_i2f: usize,
    pub max_inflight_f2i: usize,
    /// Iterations the static figures below cover.
    pub model_iterations: u32,
    pub static_cycles: u64,
    pub serial_cycles: u64,
    pub reordered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformReport {
    pub program: Program,
    pub loops: Vec<LoopStats>,
    pub warnings: Vec<String>,
}

impl fmt::Display for TransformReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        for s in &self.loops {
            writeln!(f, "loop = {}", s.start)?;
            writeln!(f, "iterations = {}", s.iterations)?;
            writeln!(f, "int_instrs = {}", s.int_instrs)?;
            writeln!(f, "fp_instrs = {}", s.fp_instrs)?;
            writeln!(f, "i2f_per_iter = {}", s.i2f_per_iter)?;
            writeln!(f, "f2i_per_iter = {}", s.f2i_per_iter)?;
            writeln!(f, "max_inflight_i2f = {}", s.max_inflight_i2f)?;
            writeln!(f, "max_inflight_f2i = {}", s.max_inflight_f2i)?;
            writeln!(f, "model_iterations = {}", s.model_iterations)?;
            writeln!(f, "static_cycles = {}", s.static_cycles)?;
            writeln!(f, "serial_cycles = {}", s.serial_cycles)?;
            writeln!(f, "reordered = {}", s.reordered)?;
        }
        Ok(())
    }
}

/// Register values known on entry to `start`, by constant propagation over
/// a straight-line prefix. Unknown when control flow can reach the prefix
/// from elsewhere.
fn entry_values(p: &Program, start: usize) -> [Option<u32>; 32] {
    let mut v: [Option<u32>; 32] = [None; 32];
    v[0] = Some(0);
    let prefix = &p.instructions[..start];
    let targets = p.branch_targets().unwrap_or_default();
    let jumps_in = targets.iter().flatten().any(|&t| t > 0 && t < start);
    if prefix.iter().any(|i| i.is_branch()) || jumps_in {
        return [None; 32];
    }
    for i in prefix {
        let Some(rd) = i.rd.filter(|r| r.is_int() && r.index != 0) else { continue };
        let src = |r: Option<Reg>| r.and_then(|r| v[r.index as usize]);
        let val = match i.op {
            Opcode::Addi => src(i.rs1).map(|a| a.wrapping_add(i.imm as u32)),
            Opcode::Lui => Some((i.imm as u32) << 12),
            Opcode::Add => src(i.rs1).zip(src(i.rs2)).map(|(a, b)| a.wrapping_add(b)),
            _ => None,
        };
        v[rd.index as usize] = val;
    }
    v
}

fn shape_error<T>(msg: impl Into<String>) -> Result<T, TransformError> {
    fail(Step::Dfg, msg)
}

/// Transforms one marked loop. Code outside `[region.start, region.end)` is
/// copied unchanged; labels after the loop shift with it.
pub fn transform_loop(p: &Program, region: &LoopRegion, cfg: &MachineConfig) -> Result<TransformReport, TransformError> {
    let (start, end) = (region.start, region.end);
    if start >= end || end > p.len() {
        return shape_error(format!("empty or out-of-range loop region {start}..{end}"));
    }
    let targets = p.branch_targets().or_else(shape_error)?;
    let body = &p.instructions[start..end];
    let closing = body.last().filter(|i| i.op.format() == Format::Branch);
    if let Some(b) = closing {
        if targets[end - 1] != Some(start) {
            return shape_error(format!("closing branch `{b}` does not return to the loop head"));
        }
    }
    if let Some((name, _)) = p.labels.iter().find(|(_, &i)| i > start && i < end) {
        return shape_error(format!("label `{name}` inside the loop body"));
    }
    for (k, t) in targets.iter().enumerate() {
        let inside = (start..end).contains(&k);
        if !inside && t.is_some_and(|t| (start..end).contains(&t)) && closing.is_some() {
            return shape_error(format!("instruction {k} jumps into the loop"));
        }
    }
    let iterations = match (closing, &region.count) {
        (None, _) => 1,
        (Some(_), Some(c)) => p
            .resolve_count(c)
            .ok_or_else(|| TransformError { step: Step::Dfg, message: format!("cannot resolve iteration count {c:?}") })?,
        (Some(_), None) => return shape_error("loop marker gives no iteration count"),
    };
    if iterations == 0 {
        return shape_error("iteration count is zero");
    }
    let ctx = MemContext { iterations: Some(iterations), base_values: entry_values(p, start) };
    let g = build_dfg_with(body, start, &ctx).map_err(|e| TransformError { step: Step::Dfg, message: e.to_string() })?;
    let part = partition(&g);
    let model_iterations = iterations.min(MODEL_ITERS);
    let serial_cycles = static_serial(body, model_iterations, &cfg.latencies);
    if part.fp_nodes.is_empty() {
        let stats = LoopStats {
            start,
            iterations,
            int_instrs: part.int_nodes.len(),
            model_iterations,
            static_cycles: serial_cycles,
            serial_cycles,
            ..LoopStats::default()
        };
        return Ok(TransformReport {
            program: p.clone(),
            loops: vec![stats],
            warnings: vec![format!("loop at {start}: nothing to overlap (no FP instructions)")],
        });
    }
    let s = schedule(&g, &part, cfg, iterations)?;
    let mapped = map_queues(&s);
    let fp_block = wrap_frep(&mapped.fp_body, iterations, cfg.frep_buffer_depth)?;

    let mut instrs: Vec<Instruction> = p.instructions[..start].to_vec();
    instrs.push(Instruction::i(Opcode::Addi, Reg::QUEUE, Reg::ZERO, 1));
    instrs.push(Instruction::csr(Opcode::Csrrs, Reg::ZERO, CSR_EN_COPIFT_QUEUES, Reg::QUEUE));
    instrs.extend(fp_block);
    let head = instrs.len();
    instrs.extend(mapped.int_body.iter().cloned());
    instrs.extend(closing.cloned());
    instrs.push(Instruction::csr(Opcode::Csrrw, Reg::ZERO, CSR_EN_COPIFT_QUEUES, Reg::ZERO));
    let delta = instrs.len() as isize - end as isize;
    instrs.extend_from_slice(&p.instructions[end..]);

    let shift = |i: usize| (i as isize + delta) as usize;
    let mut out = p.clone();
    out.instructions = instrs;
    for idx in out.labels.values_mut() {
        if *idx == start && closing.is_some() {
            *idx = head;
        } else if *idx >= end {
            *idx = shift(*idx);
        }
    }
    out.loops.retain(|l| l.start != start);
    for l in &mut out.loops {
        if l.start >= end {
            l.start = shift(l.start);
            l.end = shift(l.end);
        }
    }
    let mut clobbers: BTreeSet<Reg> = p.clobbers.iter().copied().collect();
    clobbers.extend(s.clobbers.iter().copied());
    out.clobbers = clobbers.into_iter().collect();

    let count = |q: Queue| s.bindings.iter().filter(|b| b.queue == q).count();
    let stats = LoopStats {
        start,
        iterations,
        int_instrs: mapped.int_body.len() + closing.is_some() as usize,
        fp_instrs: mapped.fp_body.len(),
        i2f_per_iter: count(Queue::I2f),
        f2i_per_iter: count(Queue::F2i),
        max_inflight_i2f: s.unbounded.max_i2f,
        max_inflight_f2i: s.unbounded.max_f2i,
        model_iterations,
        static_cycles: s.timeline.cycles,
        serial_cycles,
        reordered: s.reordered,
    };
    let warnings = s.warnings.iter().map(|w| format!("loop at {start}: {w}")).collect();
    Ok(TransformReport { program: out, loops: vec![stats], warnings })
}

/// Transforms every marked loop, last first so earlier indices stay valid.
pub fn transform_program(p: &Program, cfg: &MachineConfig) -> Result<TransformReport, TransformError> {
    let mut regions = p.loops.clone();
    regions.sort_by_key(|l| std::cmp::Reverse(l.start));
    let mut report = TransformReport { program: p.clone(), loops: Vec::new(), warnings: Vec::new() };
    if regions.is_empty() {
        report.warnings.push("no marked loops".into());
    }
    for region in &regions {
        let r = transform_loop(&report.program, region, cfg)?;
        report.program = r.program;
        report.loops.splice(0..0, r.loops);
        report.warnings.splice(0..0, r.warnings);
    }
    Ok(report)
}
