//! Dataflow graph of a loop body.
//!
//! Nodes are the body's instructions in program order. Register edges come
//! from a def-use scan; memory edges order every pair of accesses where at
//! least one is a store unless the addresses are provably disjoint. Edges
//! that cross the back-edge are flagged `loop_carried`.

use std::fmt;

use thiserror::Error;

use crate::isa::{Instruction, InstrClass, Opcode, Reg, Thread};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DepKind {
    RegRaw(Reg),
    RegWar(Reg),
    RegWaw(Reg),
    MemOrder,
}

impl fmt::Display for DepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DepKind::RegRaw(r) => write!(f, "raw {r}"),
            DepKind::RegWar(r) => write!(f, "war {r}"),
            DepKind::RegWaw(r) => write!(f, "waw {r}"),
            DepKind::MemOrder => f.write_str("mem"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub kind: DepKind,
    pub loop_carried: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    /// Index of the instruction in the enclosing program.
    pub index: usize,
    pub instr: Instruction,
}

impl Node {
    pub fn thread(&self) -> Thread {
        self.instr.thread()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dfg {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    /// The loop-closing branch, kept out of the node set.
    pub closing_branch: Option<Instruction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DfgError {
    #[error("unsupported loop shape at instruction {index} (`{instr}`): {reason}")]
    UnsupportedShape { index: usize, instr: String, reason: String },
}

/// Facts about the loop's surroundings used to disambiguate memory accesses
/// through different base registers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MemContext {
    /// Trip count; `Some(1)` suppresses loop-carried edges.
    pub iterations: Option<u32>,
    /// Integer register values known on loop entry.
    pub base_values: [Option<u32>; 32],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    IntToFp,
    FpToInt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Carrier {
    Register(Reg),
    Memory,
}

/// Integer register and in-body producers that compute a memory address.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressChain {
    pub base: Reg,
    pub producers: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossDep {
    /// Position in [`Dfg::edges`].
    pub edge: usize,
    pub direction: Direction,
    pub carrier: Carrier,
    /// For memory carriers: how the FP-side access computes its address.
    pub address: Option<AddressChain>,
}

fn reads(i: &Instruction) -> Vec<Reg> {
    let mut v: Vec<Reg> = Vec::new();
    for r in i.sources() {
        if r != Reg::ZERO && !v.contains(&r) {
            v.push(r);
        }
    }
    v
}

fn writes(i: &Instruction) -> Option<Reg> {
    i.rd.filter(|&r| r != Reg::ZERO)
}

pub fn build_dfg(body: &[Instruction]) -> Result<Dfg, DfgError> {
    build_dfg_with(body, 0, &MemContext::default())
}

/// Builds the graph of `body`, whose first instruction sits at program index
/// `base_index`. A trailing branch is taken as the loop-closing branch.
pub fn build_dfg_with(
    body: &[Instruction],
    base_index: usize,
    ctx: &MemContext,
) -> Result<Dfg, DfgError> {
    let (nodes_src, closing) = match body.split_last() {
        Some((last, rest)) if last.op.format() == crate::isa::Format::Branch => {
            (rest, Some(last.clone()))
        }
        _ => (body, None),
    };
    for (k, instr) in nodes_src.iter().enumerate() {
        let reason = if instr.is_branch() {
            Some("control flow inside the loop body")
        } else {
            match instr.class() {
                InstrClass::Frep => Some("frep inside the loop body"),
                InstrClass::Csr => Some("CSR access inside the loop body"),
                _ => None,
            }
        };
        if let Some(reason) = reason {
            return Err(DfgError::UnsupportedShape {
                index: base_index + k,
                instr: instr.to_string(),
                reason: reason.into(),
            });
        }
    }
    let nodes: Vec<Node> = nodes_src
        .iter()
        .enumerate()
        .map(|(k, instr)| Node { index: base_index + k, instr: instr.clone() })
        .collect();
    let carried = ctx.iterations.is_none_or(|n| n > 1);
    let mut edges = register_edges(&nodes, carried);
    edges.extend(memory_edges(&nodes, ctx, carried));
    edges.sort_by_key(|e| (e.loop_carried, e.src, e.dst));
    Ok(Dfg { nodes, edges, closing_branch: closing })
}

fn register_edges(nodes: &[Node], carried: bool) -> Vec<Edge> {
    let n = nodes.len();
    let rd: Vec<Option<Reg>> = nodes.iter().map(|x| writes(&x.instr)).collect();
    let mut edges = Vec::new();
    let mut add = |src: usize, dst: usize, kind: DepKind, loop_carried: bool| {
        if carried || !loop_carried {
            edges.push(Edge { src, dst, kind, loop_carried });
        }
    };
    for i in 0..n {
        for r in reads(&nodes[i].instr) {
            if let Some(w) = (0..i).rev().find(|&j| rd[j] == Some(r)) {
                add(w, i, DepKind::RegRaw(r), false);
            } else if let Some(w) = (i..n).rev().find(|&j| rd[j] == Some(r)) {
                add(w, i, DepKind::RegRaw(r), true);
            }
            if let Some(w) = (i + 1..n).find(|&j| rd[j] == Some(r)) {
                add(i, w, DepKind::RegWar(r), false);
            } else if let Some(w) = (0..i).find(|&j| rd[j] == Some(r)) {
                add(i, w, DepKind::RegWar(r), true);
            }
        }
        if let Some(r) = rd[i] {
            if let Some(j) = (i + 1..n).find(|&j| rd[j] == Some(r)) {
                add(i, j, DepKind::RegWaw(r), false);
            } else if let Some(j) = (0..i).find(|&j| rd[j] == Some(r)) {
                add(i, j, DepKind::RegWaw(r), true);
            }
        }
    }
    edges
}

struct Access {
    node: usize,
    store: bool,
    base: Reg,
    off: i64,
    size: i64,
    /// Writes to `base` earlier in the body.
    version: usize,
    /// `(stride, offset relative to the base at iteration start)` when the
    /// base is a simple induction variable.
    induction: Option<(i64, i64)>,
    /// The base register is never written in the body.
    invariant: bool,
    /// Byte range covered over all iterations.
    absolute: Option<(i64, i64)>,
}

fn overlap(a: (i64, i64), b: (i64, i64)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

fn accesses(nodes: &[Node], ctx: &MemContext) -> Vec<Access> {
    let mut out = Vec::new();
    for (k, node) in nodes.iter().enumerate() {
        let instr = &node.instr;
        if !instr.is_mem() {
            continue;
        }
        let base = instr.rs1.expect("memory operations have a base");
        let off = instr.imm as i64;
        let size = instr.access_size() as i64;
        let writers: Vec<usize> =
            (0..nodes.len()).filter(|&j| writes(&nodes[j].instr) == Some(base)).collect();
        let version = writers.iter().filter(|&&j| j < k).count();
        let induction = match writers.as_slice() {
            [w] => {
                let wi = &nodes[*w].instr;
                (wi.op == Opcode::Addi && wi.rs1 == Some(base) && wi.imm != 0).then(|| {
                    let stride = wi.imm as i64;
                    (stride, off + if *w < k { stride } else { 0 })
                })
            }
            _ => None,
        };
        let invariant = writers.is_empty() || base == Reg::ZERO;
        let entry = if base == Reg::ZERO { Some(0) } else { ctx.base_values[base.index as usize] };
        let absolute = match (entry, ctx.iterations) {
            (Some(v), _) if invariant => Some((v as i64 + off, v as i64 + off + size)),
            (Some(v), Some(n)) if n > 0 => induction.map(|(s, eo)| {
                let first = v as i64 + eo;
                let last = first + s * (n as i64 - 1);
                (first.min(last), first.max(last) + size)
            }),
            _ => None,
        };
        out.push(Access { node: k, store: instr.is_store(), base, off, size, version, induction, invariant, absolute });
    }
    out
}

/// Same base register advanced by its single `addi`: the distance between
/// the two accesses is exact whatever the base holds on entry.
fn shared_induction(a: &Access, b: &Access) -> Option<(i64, i64, i64)> {
    match (a.induction, b.induction) {
        (Some((s, ea)), Some((_, eb))) if a.base == b.base => Some((s, ea, eb)),
        _ => None,
    }
}

fn may_alias_same_iteration(a: &Access, b: &Access) -> bool {
    if a.base == b.base && a.version == b.version {
        return overlap((a.off, a.off + a.size), (b.off, b.off + b.size));
    }
    if let Some((_, ea, eb)) = shared_induction(a, b) {
        return overlap((ea, ea + a.size), (eb, eb + b.size));
    }
    match (a.absolute, b.absolute) {
        (Some(x), Some(y)) => overlap(x, y),
        _ => true,
    }
}

/// `a` in some iteration against `b` in any later one.
fn may_alias_later_iteration(a: &Access, b: &Access) -> bool {
    if a.base == b.base && a.invariant {
        return overlap((a.off, a.off + a.size), (b.off, b.off + b.size));
    }
    match shared_induction(a, b) {
        Some((s, ea, eb)) if s > 0 => return eb + s < ea + a.size,
        Some((s, ea, eb)) => return eb + s + b.size > ea,
        None => {}
    }
    match (a.absolute, b.absolute) {
        (Some(x), Some(y)) => overlap(x, y),
        _ => true,
    }
}

fn memory_edges(nodes: &[Node], ctx: &MemContext, carried: bool) -> Vec<Edge> {
    let acc = accesses(nodes, ctx);
    let mut edges = Vec::new();
    for a in &acc {
        for b in &acc {
            if !(a.store || b.store) || a.node == b.node {
                continue;
            }
            if a.node < b.node && may_alias_same_iteration(a, b) {
                edges.push(Edge { src: a.node, dst: b.node, kind: DepKind::MemOrder, loop_carried: false });
            }
            if carried && may_alias_later_iteration(a, b) {
                edges.push(Edge { src: a.node, dst: b.node, kind: DepKind::MemOrder, loop_carried: true });
            }
        }
    }
    edges
}

impl Dfg {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node positions whose same-iteration edges point into `node`.
    pub fn preds(&self, node: usize) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter().filter(move |e| e.dst == node && !e.loop_carried)
    }

    /// Graphviz rendering.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph dfg {\n");
        for (k, n) in self.nodes.iter().enumerate() {
            let shape = if n.thread() == Thread::FpThread { "box" } else { "ellipse" };
            s += &format!("  n{k} [label=\"{}: {}\", shape={shape}];\n", n.index, n.instr);
        }
        for e in &self.edges {
            let style = if e.loop_carried { ", style=dashed" } else { "" };
            s += &format!("  n{} -> n{} [label=\"{}\"{style}];\n", e.src, e.dst, e.kind);
        }
        s + "}\n"
    }
}

/// One line per edge: `src_idx -> dst_idx [kind]`, with `, carried` on
/// loop-carried edges.
impl fmt::Display for Dfg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.edges {
            let carried = if e.loop_carried { ", carried" } else { "" };
            writeln!(f, "{} -> {} [{}{carried}]", self.nodes[e.src].index, self.nodes[e.dst].index, e.kind)?;
        }
        Ok(())
    }
}

/// Integer producers (transitively, same iteration) of the value in `reg`
/// as read by `node`.
fn address_chain(g: &Dfg, node: usize, reg: Reg) -> AddressChain {
    let mut producers = Vec::new();
    let mut work: Vec<(usize, Reg)> = vec![(node, reg)];
    while let Some((n, r)) = work.pop() {
        for e in g.preds(n) {
            if e.kind == DepKind::RegRaw(r) && g.nodes[e.src].thread() == Thread::IntThread && !producers.contains(&e.src) {
                producers.push(e.src);
                for r2 in reads(&g.nodes[e.src].instr) {
                    work.push((e.src, r2));
                }
            }
        }
    }
    producers.sort_unstable();
    AddressChain { base: reg, producers }
}

/// True data dependencies (register RAW and memory order) whose endpoints
/// run on different threads.
pub fn cross_deps(g: &Dfg) -> Vec<CrossDep> {
    let mut out = Vec::new();
    for (k, e) in g.edges.iter().enumerate() {
        let (ts, td) = (g.nodes[e.src].thread(), g.nodes[e.dst].thread());
        if ts == td {
            continue;
        }
        let direction = if ts == Thread::IntThread { Direction::IntToFp } else { Direction::FpToInt };
        let (carrier, address) = match e.kind {
            DepKind::RegRaw(r) => (Carrier::Register(r), None),
            DepKind::MemOrder => {
                let fp_side = if ts == Thread::FpThread { e.src } else { e.dst };
                let base = g.nodes[fp_side].instr.rs1.expect("memory operations have a base");
                (Carrier::Memory, Some(address_chain(g, fp_side, base)))
            }
            _ => continue,
        };
        out.push(CrossDep { edge: k, direction, carrier, address });
    }
    out
}

/// True iff `order` lists distinct node positions and respects every
/// same-iteration edge between nodes it contains.
pub fn check_topological(g: &Dfg, order: &[usize]) -> bool {
    let mut pos = vec![usize::MAX; g.len()];
    for (k, &n) in order.iter().enumerate() {
        if n >= g.len() || pos[n] != usize::MAX {
            return false;
        }
        pos[n] = k;
    }
    g.edges.iter().filter(|e| !e.loop_carried).all(|e| {
        pos[e.src] == usize::MAX || pos[e.dst] == usize::MAX || pos[e.src] < pos[e.dst]
    })
}

#[cfg(test)]
mod tests;
