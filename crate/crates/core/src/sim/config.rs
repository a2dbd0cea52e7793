use std::fmt;

use thiserror::Error;

use crate::isa::InstrClass;

/// Issue-to-writeback latency per instruction class, in cycles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Latencies {
    pub int_alu: u32,
    pub int_mul: u32,
    pub int_load: u32,
    pub int_store: u32,
    pub branch: u32,
    pub csr: u32,
    pub fp_compute: u32,
    pub fp_load: u32,
    pub fp_store: u32,
    pub fp_move: u32,
}

impl Default for Latencies {
    fn default() -> Self {
        Latencies {
            int_alu: 1,
            int_mul: 2,
            int_load: 2,
            int_store: 1,
            branch: 1,
            csr: 1,
            fp_compute: 3,
            fp_load: 2,
            fp_store: 1,
            fp_move: 1,
        }
    }
}

impl Latencies {
    pub fn of(&self, class: InstrClass) -> u32 {
        match class {
            InstrClass::IntAlu => self.int_alu,
            InstrClass::IntMul => self.int_mul,
            InstrClass::IntLoad => self.int_load,
            InstrClass::IntStore => self.int_store,
            InstrClass::Branch => self.branch,
            InstrClass::Csr => self.csr,
            InstrClass::FpCompute => self.fp_compute,
            InstrClass::FpLoad => self.fp_load,
            InstrClass::FpStore => self.fp_store,
            InstrClass::FpMove => self.fp_move,
            InstrClass::Frep => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineConfig {
    pub queue_depth: usize,
    pub frep_buffer_depth: usize,
    pub latencies: Latencies,
    /// Integer-core issue cycles spent forwarding one FP instruction.
    pub offload_cost: u32,
    pub memory_size: usize,
    pub cycle_limit: u64,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            queue_depth: 4,
            frep_buffer_depth: 16,
            latencies: Latencies::default(),
            offload_cost: 1,
            memory_size: 1 << 20,
            cycle_limit: 100_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

const KEYS: [&str; 15] = [
    "queue_depth",
    "frep_buffer_depth",
    "offload_cost",
    "memory_size",
    "cycle_limit",
    "latency_int_alu",
    "latency_int_mul",
    "latency_int_load",
    "latency_int_store",
    "latency_branch",
    "latency_csr",
    "latency_fp_compute",
    "latency_fp_load",
    "latency_fp_store",
    "latency_fp_move",
];

impl MachineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.queue_depth < 1 {
            return Err(ConfigError::Invalid("queue_depth must be >= 1".into()));
        }
        if self.frep_buffer_depth < 1 {
            return Err(ConfigError::Invalid("frep_buffer_depth must be >= 1".into()));
        }
        if self.offload_cost < 1 {
            return Err(ConfigError::Invalid("offload_cost must be >= 1".into()));
        }
        if InstrClass::ALL.iter().any(|&c| self.latencies.of(c) < 1) {
            return Err(ConfigError::Invalid("all latencies must be >= 1".into()));
        }
        Ok(())
    }

    fn field_mut(&mut self, key: &str) -> Option<FieldMut<'_>> {
        let l = &mut self.latencies;
        Some(match key {
            "queue_depth" => FieldMut::Usize(&mut self.queue_depth),
            "frep_buffer_depth" => FieldMut::Usize(&mut self.frep_buffer_depth),
            "memory_size" => FieldMut::Usize(&mut self.memory_size),
            "cycle_limit" => FieldMut::U64(&mut self.cycle_limit),
            "offload_cost" => FieldMut::U32(&mut self.offload_cost),
            "latency_int_alu" => FieldMut::U32(&mut l.int_alu),
            "latency_int_mul" => FieldMut::U32(&mut l.int_mul),
            "latency_int_load" => FieldMut::U32(&mut l.int_load),
            "latency_int_store" => FieldMut::U32(&mut l.int_store),
            "latency_branch" => FieldMut::U32(&mut l.branch),
            "latency_csr" => FieldMut::U32(&mut l.csr),
            "latency_fp_compute" => FieldMut::U32(&mut l.fp_compute),
            "latency_fp_load" => FieldMut::U32(&mut l.fp_load),
            "latency_fp_store" => FieldMut::U32(&mut l.fp_store),
            "latency_fp_move" => FieldMut::U32(&mut l.fp_move),
            _ => return None,
        })
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let field = self.field_mut(key).ok_or_else(|| format!("unknown key `{key}`"))?;
        let bad = || format!("bad value `{value}` for `{key}`");
        match field {
            FieldMut::Usize(f) => *f = value.parse().map_err(|_| bad())?,
            FieldMut::U32(f) => *f = value.parse().map_err(|_| bad())?,
            FieldMut::U64(f) => *f = value.parse().map_err(|_| bad())?,
        }
        Ok(())
    }

    /// Parses line-oriented `key = value` text on top of the defaults.
    /// `#` starts a comment.
    pub fn parse(text: &str) -> Result<MachineConfig, ConfigError> {
        let mut cfg = MachineConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let code = raw.split('#').next().unwrap_or("").trim();
            if code.is_empty() {
                continue;
            }
            let (key, value) = code.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                msg: "expected `key = value`".into(),
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|msg| ConfigError::Syntax { line, msg })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn keys() -> &'static [&'static str] {
        &KEYS
    }
}

enum FieldMut<'a> {
    Usize(&'a mut usize),
    U32(&'a mut u32),
    U64(&'a mut u64),
}

impl fmt::Display for MachineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = &self.latencies;
        writeln!(f, "queue_depth = {}", self.queue_depth)?;
        writeln!(f, "frep_buffer_depth = {}", self.frep_buffer_depth)?;
        writeln!(f, "offload_cost = {}", self.offload_cost)?;
        writeln!(f, "memory_size = {}", self.memory_size)?;
        writeln!(f, "cycle_limit = {}", self.cycle_limit)?;
        for (name, v) in [
            ("int_alu", l.int_alu),
            ("int_mul", l.int_mul),
            ("int_load", l.int_load),
            ("int_store", l.int_store),
            ("branch", l.branch),
            ("csr", l.csr),
            ("fp_compute", l.fp_compute),
            ("fp_load", l.fp_load),
            ("fp_store", l.fp_store),
            ("fp_move", l.fp_move),
        ] {
            writeln!(f, "latency_{name} = {v}")?;
        }
        Ok(())
    }
}
