//! Queue FIFO behaviour against a reference model, and whole programs with
//! mismatched push/pop counts.

use std::collections::VecDeque;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use copift_core::parse_program;
use copift_core::sim::{run, HwQueue, MachineConfig, MachineState, Mode, Termination};

const CASES: u32 = 10_000;

#[derive(Debug, Clone)]
enum Op {
    Push { value: u32, latency: u64 },
    Pop,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (any::<u32>(), 0u64..4).prop_map(|(value, latency)| Op::Push { value, latency }),
        Just(Op::Pop),
    ]
}

/// Drives `HwQueue` the way the pipelines do (push only with space, pop only
/// a visible head), one op per cycle, next to a plain deque.
fn fifo_model(depth: usize, ops: &[Op]) -> Result<(), TestCaseError> {
    let mut q = HwQueue::default();
    let mut model: VecDeque<(u32, u64)> = VecDeque::new();
    for (now, op) in ops.iter().enumerate() {
        let now = now as u64;
        match *op {
            Op::Push { value, latency } => {
                let model_full = model.len() >= depth;
                prop_assert_eq!(q.has_space(depth), !model_full);
                if !model_full {
                    q.push(value, now + latency);
                    model.push_back((value, now + latency));
                }
            }
            Op::Pop => {
                let visible = model.front().is_some_and(|&(_, t)| t <= now);
                prop_assert_eq!(q.ready(now, 1), visible);
                if visible {
                    prop_assert_eq!(q.pop(), model.pop_front().map(|(v, _)| v));
                }
            }
        }
        prop_assert!(q.occupancy() <= depth);
        prop_assert_eq!(q.occupancy(), model.len());
        prop_assert!(q.values().eq(model.iter().map(|&(v, _)| v)));
    }
    Ok(())
}

/// `pushes` integer pushes and `pops` FP pops interleaved as `order`
/// (true = push), then the popped values stored to `out`.
fn program(pushes: usize, pops: usize, order: &[bool]) -> String {
    let mut s = String::from(".data\nout: .zero 64\n.text\n    la a0, out\n    addi x31, x0, 1\n    csrrs x0, EnCopiftQueues, x31\n");
    let (mut i, mut j) = (0, 0);
    let rest = std::iter::repeat(true).take(pushes).chain(std::iter::repeat(false).take(pops));
    for push in order.iter().copied().chain(rest) {
        if push && i < pushes {
            i += 1;
            s += &format!("    addi x31, x0, {i}\n");
        } else if !push && j < pops {
            s += &format!("    fcvt.d.w ft{j}, x31\n");
            j += 1;
        }
    }
    s += "    csrrw x0, EnCopiftQueues, x0\n";
    for k in 0..pops {
        s += &format!("    fsd ft{k}, {}(a0)\n", 8 * k);
    }
    s
}

fn mismatched(pushes: usize, pops: usize, order: &[bool], depth: usize) -> Result<(), TestCaseError> {
    let p = parse_program(&program(pushes, pops, order)).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let cfg = MachineConfig { queue_depth: depth, cycle_limit: 100_000, ..MachineConfig::default() };
    let init = MachineState::for_program(&p, &cfg).map_err(TestCaseError::fail)?;
    let r = run(&p, &cfg, init, Mode::Dual, None);
    match &r.termination {
        Termination::Halted => {
            prop_assert!(pops <= pushes, "halted with {} pops for {} pushes", pops, pushes);
            let (out, _) = p.data_region("out").unwrap();
            for k in 0..pops {
                prop_assert_eq!(r.final_state.read_f64(out + 8 * k as u32), Some((k + 1) as f64));
            }
        }
        Termination::Deadlock(d) => {
            prop_assert!(d.blocking_queue().is_some(), "deadlock without a queue cause: {}", d);
        }
        other => prop_assert!(false, "unexpected termination {:?}", other),
    }
    if pops > pushes {
        prop_assert!(matches!(r.termination, Termination::Deadlock(_)));
    }
    Ok(())
}

pub fn check() -> Result<String, String> {
    let mut runner = TestRunner::new(Config { cases: CASES, failure_persistence: None, ..Config::default() });
    let fifo = (1usize..=6, prop::collection::vec(op(), 0..64));
    runner.run(&fifo, |(depth, ops)| fifo_model(depth, &ops)).map_err(|e| format!("FIFO model: {e}"))?;

    let mut runner = TestRunner::new(Config { cases: CASES, failure_persistence: None, ..Config::default() });
    let progs = (0usize..=8, 0usize..=8, prop::collection::vec(any::<bool>(), 16), 1usize..=4);
    runner
        .run(&progs, |(pushes, pops, order, depth)| mismatched(pushes, pops, &order, depth))
        .map_err(|e| format!("push/pop programs: {e}"))?;
    Ok(format!("{CASES} FIFO schedules and {CASES} push/pop programs"))
}
