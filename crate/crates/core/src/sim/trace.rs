use std::io::{self, Write};

use super::state::StallCause;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Int,
    Fp,
}

impl Unit {
    pub fn name(self) -> &'static str {
        match self {
            Unit::Int => "int",
            Unit::Fp => "fp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEvent {
    Issue,
    /// Integer core forwarding an instruction into the hardware-loop buffer.
    Offload,
    Stall(StallCause),
    Idle,
}

/// One pipeline's activity in one cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub cycle: u64,
    pub unit: Unit,
    pub pc: Option<usize>,
    pub mnemonic: Option<&'static str>,
    pub event: TraceEvent,
    pub i2f_occ: usize,
    pub f2i_occ: usize,
}

impl TraceRecord {
    pub fn is_issue(&self) -> bool {
        self.event == TraceEvent::Issue
    }

    fn stall_field(&self) -> &'static str {
        match self.event {
            TraceEvent::Issue => "",
            TraceEvent::Offload => "offload",
            TraceEvent::Stall(c) => c.name(),
            TraceEvent::Idle => "idle",
        }
    }
}

pub trait TraceSink {
    fn record(&mut self, rec: &TraceRecord);
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, rec: &TraceRecord) {
        self.push(rec.clone());
    }
}

pub const TRACE_HEADER: &str = "cycle,unit,pc,mnemonic,stall,i2f_occ,f2i_occ";

/// Writes records as CSV. I/O errors are kept and reported by `finish`.
pub struct CsvTrace<W: Write> {
    out: W,
    error: Option<io::Error>,
}

impl<W: Write> CsvTrace<W> {
    pub fn new(mut out: W) -> Self {
        let error = writeln!(out, "{TRACE_HEADER}").err();
        CsvTrace { out, error }
    }

    pub fn finish(mut self) -> io::Result<W> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> TraceSink for CsvTrace<W> {
    fn record(&mut self, r: &TraceRecord) {
        if self.error.is_some() {
            return;
        }
        let pc = r.pc.map(|p| p.to_string()).unwrap_or_default();
        let res = writeln!(
            self.out,
            "{},{},{},{},{},{},{}",
            r.cycle,
            r.unit.name(),
            pc,
            r.mnemonic.unwrap_or(""),
            r.stall_field(),
            r.i2f_occ,
            r.f2i_occ
        );
        if let Err(e) = res {
            self.error = Some(e);
        }
    }
}
