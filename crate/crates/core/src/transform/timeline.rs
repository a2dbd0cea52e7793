//! Value-free timing model of the two threads a transformed loop runs as,
//! and the list scheduler that orders the integer thread against it.

use std::collections::VecDeque;

use crate::isa::{Format, Instruction, Reg};
use crate::sim::Latencies;

/// Outcome of a static run: total cycles and peak queue occupancies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Timeline {
    pub cycles: u64,
    pub max_i2f: usize,
    pub max_f2i: usize,
}

struct Thread<'a> {
    body: &'a [Instruction],
    pos: usize,
    iters_left: u32,
}

impl Thread<'_> {
    fn current(&self) -> Option<&Instruction> {
        (self.iters_left > 0).then(|| &self.body[self.pos])
    }

    fn advance(&mut self) {
        self.pos += 1;
        if self.pos == self.body.len() {
            self.pos = 0;
            self.iters_left -= 1;
        }
    }
}

struct Model<'a> {
    lat: &'a Latencies,
    depth: usize,
    int_ready: [u64; 32],
    fp_ready: [u64; 32],
    i2f: VecDeque<u64>,
    f2i: VecDeque<u64>,
    t: Timeline,
}

fn fp_int_source(i: &Instruction) -> bool {
    matches!(i.op.format(), Format::IntToFp | Format::FpLoad | Format::FpStore)
}

impl Model<'_> {
    fn try_int(&mut self, i: &Instruction, c: u64) -> bool {
        let mut pops = 0;
        for r in i.sources() {
            if r.is_queue_port() {
                pops += 1;
            } else if self.int_ready[r.index as usize] > c {
                return false;
            }
        }
        if self.f2i.iter().take(pops).filter(|&&t| t <= c).count() < pops {
            return false;
        }
        let push = i.rd == Some(Reg::QUEUE);
        if push && self.i2f.len() >= self.depth {
            return false;
        }
        self.f2i.drain(..pops);
        let done = c + self.lat.of(i.class()) as u64;
        match i.rd {
            Some(r) if r.is_queue_port() => {
                self.i2f.push_back(done);
                self.t.max_i2f = self.t.max_i2f.max(self.i2f.len());
            }
            Some(r) if r.index != 0 => self.int_ready[r.index as usize] = done,
            _ => {}
        }
        true
    }

    fn try_fp(&mut self, i: &Instruction, c: u64) -> bool {
        if i.sources().filter(|r| r.is_fp()).any(|r| self.fp_ready[r.index as usize] > c) {
            return false;
        }
        let pops = fp_int_source(i);
        if pops && self.i2f.front().is_none_or(|&t| t > c) {
            return false;
        }
        let pushes = i.op.format() == Format::FpToInt;
        if pushes && self.f2i.len() >= self.depth {
            return false;
        }
        if pops {
            self.i2f.pop_front();
        }
        let done = c + self.lat.of(i.class()) as u64;
        if pushes {
            self.f2i.push_back(done);
            self.t.max_f2i = self.t.max_f2i.max(self.f2i.len());
        } else if let Some(r) = i.rd {
            self.fp_ready[r.index as usize] = done;
        }
        true
    }

    fn pending(&self, c: u64) -> bool {
        self.int_ready.iter().chain(&self.fp_ready).chain(&self.i2f).chain(&self.f2i).any(|&t| t > c)
    }
}

/// Runs `iters` iterations of the integer body (closing branch included)
/// against `iters` replays of the FP body with queue semantics active.
/// `None` when the threads deadlock.
pub fn dual(int_body: &[Instruction], fp_body: &[Instruction], iters: u32, lat: &Latencies, depth: usize) -> Option<Timeline> {
    let mut m = Model {
        lat,
        depth,
        int_ready: [0; 32],
        fp_ready: [0; 32],
        i2f: VecDeque::new(),
        f2i: VecDeque::new(),
        t: Timeline::default(),
    };
    let mut int = Thread { body: int_body, pos: 0, iters_left: if int_body.is_empty() { 0 } else { iters } };
    let mut fp = Thread { body: fp_body, pos: 0, iters_left: if fp_body.is_empty() { 0 } else { iters } };
    let mut c = 0;
    loop {
        let fp_instr = fp.current();
        let int_instr = int.current();
        if fp_instr.is_none() && int_instr.is_none() {
            let last = m.int_ready.iter().chain(&m.fp_ready).copied().max().unwrap_or(0);
            m.t.cycles = c.max(last);
            return Some(m.t);
        }
        let fp_went = fp_instr.is_some_and(|i| m.try_fp(i, c));
        if fp_went {
            fp.advance();
        }
        let int_went = int_instr.is_some_and(|i| m.try_int(i, c));
        if int_went {
            int.advance();
        }
        if !fp_went && !int_went && !m.pending(c) {
            return None;
        }
        c += 1;
    }
}

/// Single-slot in-order execution of `body`, `iters` times, with no queues.
pub fn serial(body: &[Instruction], iters: u32, lat: &Latencies) -> u64 {
    let mut ready = [[0u64; 32]; 2];
    let mut c = 0;
    let mut last = 0;
    for _ in 0..iters {
        for i in body {
            let start = i
                .sources()
                .map(|r| ready[r.is_fp() as usize][r.index as usize])
                .fold(c, u64::max);
            let done = start + lat.of(i.class()) as u64;
            if let Some(r) = i.rd.filter(|&r| r != Reg::ZERO) {
                ready[r.is_fp() as usize][r.index as usize] = done;
            }
            last = last.max(done);
            c = start + 1;
        }
    }
    c.max(last)
}

/// Greedy list schedule of `n` nodes under same-iteration `edges`
/// `(src, dst, latency)`. Among nodes whose inputs are ready, the lowest
/// `priority` wins, then the lowest index.
pub fn list_schedule(n: usize, edges: &[(usize, usize, u64)], priority: &[u8]) -> Vec<usize> {
    let mut preds: Vec<Vec<(usize, u64)>> = vec![Vec::new(); n];
    for &(s, d, l) in edges {
        preds[d].push((s, l));
    }
    let mut at: Vec<Option<u64>> = vec![None; n];
    let mut order = Vec::with_capacity(n);
    let mut t = 0;
    while order.len() < n {
        let best = (0..n)
            .filter(|&k| at[k].is_none() && preds[k].iter().all(|&(s, _)| at[s].is_some()))
            .map(|k| {
                let earliest = preds[k].iter().map(|&(s, l)| at[s].unwrap() + l).fold(t, u64::max);
                (earliest, priority[k], k)
            })
            .min_by_key(|&(e, p, k)| (e.max(t) > t, p, e, k))
            .expect("edges form a DAG");
        at[best.2] = Some(best.0);
        t = best.0 + 1;
        order.push(best.2);
    }
    order
}
