//! Kernel suite and measurement harness: sequential baseline, hand-written
//! memory-communication variant, and the queue-based variant produced by the
//! transformer, with IPC, throughput, energy and speedup aggregation.

mod energy;

use std::fmt;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::asm::{parse_program, AsmError};
use crate::program::Program;
use crate::sim::{run, MachineConfig, MachineState, Metrics, Mode, Termination};
use crate::transform::{transform_program, TransformError};

pub use energy::{energy, EnergyModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Baseline,
    CopiftMem,
    Copiftv2,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Baseline, Variant::CopiftMem, Variant::Copiftv2];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::CopiftMem => "copift_mem",
            Variant::Copiftv2 => "copiftv2",
        }
    }

    pub fn from_name(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.name() == s)
    }

    /// Timing mode the variant is measured in.
    pub fn mode(self) -> Mode {
        match self {
            Variant::Baseline => Mode::Sequential,
            _ => Mode::Dual,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),
    #[error("{kernel}/{variant}: {source}")]
    Asm { kernel: String, variant: Variant, source: AsmError },
    #[error("{kernel}: {source}")]
    Transform { kernel: String, source: TransformError },
    #[error("{kernel}/{variant}: missing data label `{label}`")]
    MissingLabel { kernel: String, variant: Variant, label: String },
    #[error("{kernel}/{variant} seed {seed}: run ended with {termination}")]
    Run { kernel: String, variant: Variant, seed: u64, termination: String },
    #[error("{kernel}/{variant} seed {seed}: output differs from baseline: {detail}")]
    Mismatch { kernel: String, variant: Variant, seed: u64, detail: String },
    #[error("geomean needs a non-empty list of positive values")]
    Geomean,
    #[error("no seeds given")]
    NoSeeds,
}

struct Bundled {
    name: &'static str,
    baseline: &'static str,
    copift_mem: &'static str,
    samples: u64,
    input_words: usize,
}

const BUNDLED: &[Bundled] = &[
    Bundled {
        name: "exp",
        baseline: include_str!("../../kernels/exp/baseline.s"),
        copift_mem: include_str!("../../kernels/exp/copift_mem.s"),
        samples: 1024,
        input_words: 1024,
    },
    Bundled {
        name: "poly_lcg",
        baseline: include_str!("../../kernels/poly_lcg/baseline.s"),
        copift_mem: include_str!("../../kernels/poly_lcg/copift_mem.s"),
        samples: 1024,
        input_words: 1024,
    },
    Bundled {
        name: "cvt_stream",
        baseline: include_str!("../../kernels/cvt_stream/baseline.s"),
        copift_mem: include_str!("../../kernels/cvt_stream/copift_mem.s"),
        samples: 2048,
        input_words: 2048,
    },
];

pub const INPUT_LABEL: &str = "input";
pub const OUTPUT_LABEL: &str = "output";

/// A benchmark kernel. Every variant reads `input_words` words at data label
/// `input` and writes its results to data label `output`.
#[derive(Debug, Clone)]
pub struct Kernel {
    pub name: String,
    pub baseline_src: String,
    pub copift_mem_src: String,
    pub samples: u64,
    pub input_words: usize,
}

pub fn kernel_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|b| b.name).collect()
}

pub fn kernels() -> Vec<Kernel> {
    BUNDLED
        .iter()
        .map(|b| Kernel {
            name: b.name.to_string(),
            baseline_src: b.baseline.to_string(),
            copift_mem_src: b.copift_mem.to_string(),
            samples: b.samples,
            input_words: b.input_words,
        })
        .collect()
}

pub fn kernel(name: &str) -> Result<Kernel, BenchError> {
    kernels().into_iter().find(|k| k.name == name).ok_or_else(|| BenchError::UnknownKernel(name.to_string()))
}

/// `n` input words drawn uniformly from `[0, 65536)`.
pub fn input_words(seed: u64, n: usize) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(0..65536)).collect()
}

impl Kernel {
    fn parse(&self, variant: Variant, src: &str) -> Result<Program, BenchError> {
        parse_program(src).map_err(|source| BenchError::Asm { kernel: self.name.clone(), variant, source })
    }

    /// Assembled program of a variant; `copiftv2` is transformed from the
    /// baseline under `cfg`.
    pub fn program(&self, variant: Variant, cfg: &MachineConfig) -> Result<Program, BenchError> {
        match variant {
            Variant::Baseline => self.parse(variant, &self.baseline_src),
            Variant::CopiftMem => self.parse(variant, &self.copift_mem_src),
            Variant::Copiftv2 => {
                let base = self.parse(Variant::Baseline, &self.baseline_src)?;
                transform_program(&base, cfg)
                    .map(|r| r.program)
                    .map_err(|source| BenchError::Transform { kernel: self.name.clone(), source })
            }
        }
    }

    fn label(&self, p: &Program, variant: Variant, label: &str) -> Result<(u32, u32), BenchError> {
        p.data_region(label).ok_or_else(|| BenchError::MissingLabel {
            kernel: self.name.clone(),
            variant,
            label: label.to_string(),
        })
    }

    /// Initial state with the seeded input written at `input`.
    pub fn init_state(&self, p: &Program, variant: Variant, cfg: &MachineConfig, seed: u64) -> Result<MachineState, BenchError> {
        let (addr, _) = self.label(p, variant, INPUT_LABEL)?;
        let mut s = MachineState::for_program(p, cfg).map_err(|e| BenchError::Run {
            kernel: self.name.clone(),
            variant,
            seed,
            termination: e,
        })?;
        let bytes: Vec<u8> = input_words(seed, self.input_words).iter().flat_map(|w| w.to_le_bytes()).collect();
        s.write_bytes(addr, &bytes).ok_or_else(|| BenchError::Run {
            kernel: self.name.clone(),
            variant,
            seed,
            termination: "input does not fit in memory".into(),
        })?;
        Ok(s)
    }

    /// Runs one seed; returns metrics (with samples filled in) and the bytes
    /// of the output region.
    pub fn execute(&self, p: &Program, variant: Variant, cfg: &MachineConfig, seed: u64) -> Result<(Metrics, Vec<u8>), BenchError> {
        let init = self.init_state(p, variant, cfg, seed)?;
        let r = run(p, cfg, init, variant.mode(), None);
        if r.termination != Termination::Halted {
            let termination = describe_termination(&r.termination);
            return Err(BenchError::Run { kernel: self.name.clone(), variant, seed, termination });
        }
        let (addr, len) = self.label(p, variant, OUTPUT_LABEL)?;
        let out = r.final_state.read_bytes(addr, len as usize).unwrap_or_default().to_vec();
        let mut m = r.metrics;
        m.samples = self.samples;
        Ok((m, out))
    }
}

/// Geometric mean of a non-empty list of positive values.
pub fn geomean(values: &[f64]) -> Result<f64, BenchError> {
    if values.is_empty() || values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(BenchError::Geomean);
    }
    Ok((values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp())
}

/// One kernel/variant measurement averaged over a seed set.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub kernel: String,
    pub variant: Variant,
    pub cycles: f64,
    pub retired_int: f64,
    pub retired_fp: f64,
    pub ipc: f64,
    pub samples: u64,
    pub throughput: f64,
    pub energy: f64,
    pub speedup: f64,
    pub energy_eff: f64,
    /// Mean retired count per instruction class.
    pub class_counts: [f64; crate::isa::InstrClass::ALL.len()],
}

impl ResultRow {
    /// Energy of the averaged run under another model.
    pub fn energy_with(&self, em: &EnergyModel) -> f64 {
        let work: f64 = self.class_counts.iter().zip(&em.weights).map(|(n, w)| n * w).sum();
        work + 2.0 * self.cycles * em.idle
    }

    pub fn energy_per_sample(&self, em: &EnergyModel) -> f64 {
        self.energy_with(em) / self.samples as f64
    }
}

struct Mean {
    cycles: f64,
    retired_int: f64,
    retired_fp: f64,
    classes: [f64; crate::isa::InstrClass::ALL.len()],
}

fn mean(ms: &[Metrics]) -> Mean {
    let n = ms.len() as f64;
    let mut m = Mean { cycles: 0.0, retired_int: 0.0, retired_fp: 0.0, classes: [0.0; crate::isa::InstrClass::ALL.len()] };
    for x in ms {
        m.cycles += x.cycles as f64 / n;
        m.retired_int += x.retired_int as f64 / n;
        m.retired_fp += x.retired_fp as f64 / n;
        for (c, k) in x.histogram.iter() {
            m.classes[c.index()] += k as f64 / n;
        }
    }
    m
}

fn first_difference(want: &[u8], got: &[u8]) -> String {
    if want.len() != got.len() {
        return format!("output sizes {} and {}", want.len(), got.len());
    }
    let i = want.iter().zip(got).position(|(a, b)| a != b).unwrap_or(0);
    let w = i & !7;
    let word = |b: &[u8]| {
        let mut x = [0u8; 8];
        let end = (w + 8).min(b.len());
        x[..end - w].copy_from_slice(&b[w..end]);
        u64::from_le_bytes(x)
    };
    let count = want.iter().zip(got).filter(|(a, b)| a != b).count();
    format!(
        "{count} bytes differ; first at offset {i}: expected {:#018x} got {:#018x}",
        word(want),
        word(got)
    )
}

/// Measures one variant over `seeds`. Each seed's output is checked against
/// the sequential baseline before any timing is reported.
pub fn run_benchmark(k: &Kernel, variant: Variant, cfg: &MachineConfig, seeds: &[u64], em: &EnergyModel) -> Result<ResultRow, BenchError> {
    if seeds.is_empty() {
        return Err(BenchError::NoSeeds);
    }
    let base = k.program(Variant::Baseline, cfg)?;
    let prog = k.program(variant, cfg)?;
    let runs: Vec<(Metrics, Metrics)> = seeds
        .par_iter()
        .map(|&seed| {
            let (bm, want) = k.execute(&base, Variant::Baseline, cfg, seed)?;
            if variant == Variant::Baseline {
                return Ok((bm.clone(), bm));
            }
            let (vm, got) = k.execute(&prog, variant, cfg, seed)?;
            if got != want {
                return Err(BenchError::Mismatch {
                    kernel: k.name.clone(),
                    variant,
                    seed,
                    detail: first_difference(&want, &got),
                });
            }
            Ok((bm, vm))
        })
        .collect::<Result<_, _>>()?;
    let (bms, vms): (Vec<Metrics>, Vec<Metrics>) = runs.into_iter().unzip();
    let b = mean(&bms);
    let v = mean(&vms);
    let e = |m: &Mean| {
        let work: f64 = m.classes.iter().zip(&em.weights).map(|(n, w)| n * w).sum();
        work + 2.0 * m.cycles * em.idle
    };
    let samples = k.samples;
    let throughput = samples as f64 / v.cycles;
    let (eb, ev) = (e(&b), e(&v));
    Ok(ResultRow {
        kernel: k.name.clone(),
        variant,
        cycles: v.cycles,
        retired_int: v.retired_int,
        retired_fp: v.retired_fp,
        ipc: (v.retired_int + v.retired_fp) / v.cycles,
        samples,
        throughput,
        energy: ev,
        speedup: throughput / (samples as f64 / b.cycles),
        energy_eff: if ev > 0.0 { eb / ev } else { 1.0 },
        class_counts: v.classes,
    })
}

/// Rows for every kernel and variant, ordered by kernel then variant.
pub fn run_suite(ks: &[Kernel], variants: &[Variant], cfg: &MachineConfig, seeds: &[u64], em: &EnergyModel) -> Result<Vec<ResultRow>, BenchError> {
    let jobs: Vec<(&Kernel, Variant)> = ks.iter().flat_map(|k| variants.iter().map(move |&v| (k, v))).collect();
    jobs.par_iter().map(|&(k, v)| run_benchmark(k, v, cfg, seeds, em)).collect()
}

pub const CSV_HEADER: &str = "kernel,variant,cycles,retired_int,retired_fp,ipc,samples,throughput,energy,speedup,energy_eff";

pub fn emit_csv<W: Write>(rows: &[ResultRow], mut w: W) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:.2},{:.2},{:.2},{:.4},{},{:.6},{:.2},{:.4},{:.4}",
            r.kernel, r.variant, r.cycles, r.retired_int, r.retired_fp, r.ipc, r.samples, r.throughput, r.energy, r.speedup, r.energy_eff
        )?;
    }
    Ok(())
}

/// Per-kernel ratio of copiftv2 over another variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Ratio {
    pub kernel: String,
    pub speedup: f64,
    pub energy_eff: f64,
}

/// Max and geomean of per-kernel ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub against: Variant,
    pub ratios: Vec<Ratio>,
    pub max_speedup: f64,
    pub geomean_speedup: f64,
    pub max_energy_eff: f64,
    pub geomean_energy_eff: f64,
}

impl Comparison {
    /// copiftv2 against `against`; `None` unless some kernel has both rows.
    pub fn from_rows(rows: &[ResultRow], against: Variant) -> Option<Comparison> {
        let per_sample = |r: &ResultRow| r.energy / r.samples as f64;
        let ratios: Vec<Ratio> = rows
            .iter()
            .filter(|r| r.variant == Variant::Copiftv2)
            .filter_map(|r| {
                let o = rows.iter().find(|o| o.kernel == r.kernel && o.variant == against)?;
                Some(Ratio {
                    kernel: r.kernel.clone(),
                    speedup: r.throughput / o.throughput,
                    energy_eff: per_sample(o) / per_sample(r),
                })
            })
            .collect();
        let s: Vec<f64> = ratios.iter().map(|r| r.speedup).collect();
        let e: Vec<f64> = ratios.iter().map(|r| r.energy_eff).collect();
        Some(Comparison {
            against,
            max_speedup: s.iter().copied().reduce(f64::max)?,
            geomean_speedup: geomean(&s).ok()?,
            max_energy_eff: e.iter().copied().reduce(f64::max)?,
            geomean_energy_eff: geomean(&e).ok()?,
            ratios,
        })
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "copiftv2 vs {}", self.against)?;
        for r in &self.ratios {
            writeln!(f, "  {:<12} speedup {:.3}x  energy efficiency {:.3}x", r.kernel, r.speedup, r.energy_eff)?;
        }
        writeln!(f, "  speedup: max {:.3}x, geomean {:.3}x", self.max_speedup, self.geomean_speedup)?;
        write!(f, "  energy efficiency: max {:.3}x, geomean {:.3}x", self.max_energy_eff, self.geomean_energy_eff)
    }
}

/// Suite summary: copiftv2 against copift_mem and against the baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub vs_mem: Option<Comparison>,
    pub vs_baseline: Option<Comparison>,
}

impl Summary {
    pub fn from_rows(rows: &[ResultRow]) -> Summary {
        Summary {
            vs_mem: Comparison::from_rows(rows, Variant::CopiftMem),
            vs_baseline: Comparison::from_rows(rows, Variant::Baseline),
        }
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = [&self.vs_mem, &self.vs_baseline].into_iter().flatten().map(|c| c.to_string()).collect();
        if parts.is_empty() {
            return f.write_str("no copiftv2 comparison available");
        }
        f.write_str(&parts.join("\n"))
    }
}

/// Why a [`verify_pair`] check failed.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("seed {seed}: {which} program did not halt: {termination}")]
    Run { seed: u64, which: &'static str, termination: String },
    #[error("seed {seed}: {divergence}")]
    Mismatch { seed: u64, divergence: crate::sim::Divergence },
}

fn describe_termination(t: &Termination) -> String {
    match t {
        Termination::Halted => "halted".into(),
        Termination::Deadlock(d) => d.to_string(),
        Termination::Trap(t) => format!("trap at {}: {}", t.pc, t.cause),
        Termination::CycleLimit => "cycle limit reached".into(),
    }
}

/// Seeded initial state: when the program has an `input` label, its region
/// is filled with the words of [`input_words`].
pub fn seeded_state(p: &Program, cfg: &MachineConfig, seed: u64) -> Result<MachineState, String> {
    let mut s = MachineState::for_program(p, cfg)?;
    if let Some((addr, len)) = p.data_region(INPUT_LABEL) {
        let bytes: Vec<u8> = input_words(seed, len as usize / 4).iter().flat_map(|w| w.to_le_bytes()).collect();
        s.write_bytes(addr, &bytes).ok_or("input does not fit in memory")?;
    }
    Ok(s)
}

/// Runs `orig` sequentially and `transformed` dual-issue for every seed and
/// compares the data image and every register except the transformed
/// program's clobbers. Seeds run in order; the first failure is returned.
pub fn verify_pair(orig: &Program, transformed: &Program, cfg: &MachineConfig, seeds: &[u64]) -> Result<(), VerifyError> {
    let region = [(crate::program::DATA_BASE, orig.data.len().max(transformed.data.len()) as u32)];
    for &seed in seeds {
        let init = |p: &Program, which| {
            seeded_state(p, cfg, seed).map_err(|termination| VerifyError::Run { seed, which, termination })
        };
        let a = run(orig, cfg, init(orig, "original")?, Mode::Sequential, None);
        if a.termination != Termination::Halted {
            return Err(VerifyError::Run { seed, which: "original", termination: describe_termination(&a.termination) });
        }
        let b = run(transformed, cfg, init(transformed, "transformed")?, Mode::Dual, None);
        if b.termination != Termination::Halted {
            return Err(VerifyError::Run { seed, which: "transformed", termination: describe_termination(&b.termination) });
        }
        crate::sim::compare_state(&a.final_state, &b.final_state, &region, &transformed.clobbers)
            .map_err(|divergence| VerifyError::Mismatch { seed, divergence })?;
    }
    Ok(())
}

pub fn default_seeds() -> Vec<u64> {
    (0..100).collect()
}
