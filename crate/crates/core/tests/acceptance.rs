//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use copift_core::bench::{self, default_seeds, EnergyModel, ResultRow, Summary, Variant};
use copift_core::isa::InstrClass;
use copift_core::sim::MachineConfig;

mod accept;

use accept::{golden, ipc, queues, scheduler};

type Check = fn() -> Result<String, String>;

fn cfg() -> MachineConfig {
    MachineConfig::default()
}

/// Every kernel in every variant over the default 100 seeds, computed once.
fn suite() -> Result<&'static [ResultRow], String> {
    static ROWS: OnceLock<Result<Vec<ResultRow>, String>> = OnceLock::new();
    ROWS.get_or_init(|| {
        bench::run_suite(&bench::kernels(), &Variant::ALL, &cfg(), &default_seeds(), &EnergyModel::default())
            .map_err(|e| e.to_string())
    })
    .as_deref()
    .map_err(Clone::clone)
}

fn row<'a>(rows: &'a [ResultRow], kernel: &str, v: Variant) -> &'a ResultRow {
    rows.iter().find(|r| r.kernel == kernel && r.variant == v).expect("suite covers every kernel and variant")
}

fn oracle_equivalence() -> Result<String, String> {
    let c = cfg();
    let seeds = default_seeds();
    for k in bench::kernels() {
        let orig = k.program(Variant::Baseline, &c).map_err(|e| e.to_string())?;
        let v2 = k.program(Variant::Copiftv2, &c).map_err(|e| e.to_string())?;
        bench::verify_pair(&orig, &v2, &c, &seeds).map_err(|e| format!("{}: {e}", k.name))?;
        for &seed in &seeds {
            let (_, a) = k.execute(&orig, Variant::Baseline, &c, seed).map_err(|e| e.to_string())?;
            let (_, b) = k.execute(&v2, Variant::Copiftv2, &c, seed).map_err(|e| e.to_string())?;
            if a != b {
                return Err(format!("{} seed {seed}: output regions differ", k.name));
            }
        }
    }
    Ok(format!("{} kernels x {} seeds byte-identical", bench::kernel_names().len(), seeds.len()))
}

fn peak_ipc() -> Result<String, String> {
    let k = bench::kernel("cvt_stream").map_err(|e| e.to_string())?;
    let base = k.program(Variant::Baseline, &cfg()).map_err(|e| e.to_string())?;
    let report = copift_core::transform::transform_program(&base, &cfg()).map_err(|e| e.to_string())?;
    let iters = report.loops[0].iterations;
    if iters < 1000 {
        return Err(format!("only {iters} loop iterations"));
    }
    let (m, _) = k.execute(&report.program, Variant::Copiftv2, &cfg(), 0).map_err(|e| e.to_string())?;
    let ipc = m.ipc();
    if ipc >= 1.7 {
        Ok(format!("cvt_stream dual IPC {ipc:.4} over {iters} iterations"))
    } else {
        Err(format!("cvt_stream dual IPC {ipc:.4} < 1.7"))
    }
}

fn throughput_dominance() -> Result<String, String> {
    let rows = suite()?;
    let mut parts = Vec::new();
    for name in bench::kernel_names() {
        let v2 = row(rows, name, Variant::Copiftv2);
        let mem = row(rows, name, Variant::CopiftMem);
        if v2.throughput < mem.throughput {
            return Err(format!("{name}: copiftv2 {:.6} < copift_mem {:.6} samples/cycle", v2.throughput, mem.throughput));
        }
        parts.push(format!("{name} {:.4}>={:.4} (ipc {:.3} vs {:.3})", v2.throughput, mem.throughput, v2.ipc, mem.ipc));
    }
    Ok(parts.join(", "))
}

fn speedup_range() -> Result<String, String> {
    let s = Summary::from_rows(suite()?);
    let c = s.vs_mem.ok_or("no copiftv2/copift_mem pairs")?;
    let detail = format!("max {:.3}x, geomean {:.3}x", c.max_speedup, c.geomean_speedup);
    let ok = (1.2..=1.8).contains(&c.max_speedup) && (1.05..=1.4).contains(&c.geomean_speedup);
    if ok {
        Ok(detail)
    } else {
        Err(format!("{detail} outside max [1.2, 1.8] / geomean [1.05, 1.4]"))
    }
}

const LOAD_STORE: [InstrClass; 4] = [InstrClass::IntLoad, InstrClass::IntStore, InstrClass::FpLoad, InstrClass::FpStore];

/// Random models with load/store weight >= ALU weight and load/store > 0,
/// plus corner models that zero everything else.
fn energy_models(n: usize) -> Vec<EnergyModel> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let mut out = Vec::with_capacity(n + 3);
    for alu in [0.0, 1.0] {
        let mut m = EnergyModel::zero();
        m.set(InstrClass::IntAlu, alu);
        m.set_load_store(1.0);
        out.push(m);
    }
    out.push(EnergyModel::default());
    for _ in 0..n {
        let mut m = EnergyModel::zero();
        for c in InstrClass::ALL {
            m.set(c, rng.gen_range(0.0..10.0));
        }
        let alu = if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..10.0) };
        m.set(InstrClass::IntAlu, alu);
        m.set_load_store(alu + rng.gen_range(1e-3..10.0));
        m.idle = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..2.0) };
        out.push(m);
    }
    out
}

fn energy_trend() -> Result<String, String> {
    let rows = suite()?;
    let models = energy_models(10_000);
    for name in bench::kernel_names() {
        let v2 = row(rows, name, Variant::Copiftv2);
        let mem = row(rows, name, Variant::CopiftMem);
        for (i, m) in models.iter().enumerate() {
            assert!(m.is_valid() && LOAD_STORE.iter().all(|&c| m.weight(c) >= m.weight(InstrClass::IntAlu) && m.weight(c) > 0.0));
            let (a, b) = (v2.energy_per_sample(m), mem.energy_per_sample(m));
            if a >= b {
                return Err(format!("{name}, model {i}: copiftv2 {a:.4} >= copift_mem {b:.4} per sample"));
            }
        }
    }
    let ratios: Vec<String> = Summary::from_rows(rows)
        .vs_mem
        .map(|c| c.ratios.iter().map(|r| format!("{} {:.3}x", r.kernel, r.energy_eff)).collect())
        .unwrap_or_default();
    Ok(format!("{} models, default-model efficiency {}", models.len(), ratios.join(", ")))
}

fn main() -> ExitCode {
    let checks: [(&str, Check); 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("IPC bounds", ipc::bounds),
        ("peak IPC", peak_ipc),
        ("throughput dominance", throughput_dominance),
        ("speedup range", speedup_range),
        ("energy trend", energy_trend),
        ("queue semantics", queues::check),
        ("scheduler soundness", scheduler::check),
        ("golden transform", golden::check),
    ];
    // Bare arguments select criteria by number or name fragment.
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected = |n: usize, name: &str| {
        filters.is_empty() || filters.iter().any(|f| *f == n.to_string() || name.contains(f.as_str()))
    };
    let (mut failed, mut ran) = (0, 0);
    for (n, (name, check)) in checks.iter().enumerate() {
        if !selected(n + 1, name) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let r = check();
        let secs = t.elapsed().as_secs_f64();
        match r {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail}) [{secs:.1}s]", n + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail}) [{secs:.1}s]", n + 1);
            }
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
