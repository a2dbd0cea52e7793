use std::collections::BTreeMap;

use crate::isa::{Instruction, Reg};

/// Byte address where the data segment is placed in simulated memory.
pub const DATA_BASE: u32 = 0x1000;

/// Iteration count attached to a `copift_loop` marker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IterCount {
    Literal(u32),
    /// A `.equ` constant or the first word stored at a data label.
    Symbol(String),
}

/// A `#pragma copift_loop begin ... end` region over instruction indices
/// `start..end`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopRegion {
    pub start: usize,
    pub end: usize,
    pub count: Option<IterCount>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Program {
    pub instructions: Vec<Instruction>,
    /// Text labels: name -> instruction index (may equal `instructions.len()`).
    pub labels: BTreeMap<String, usize>,
    /// Data labels: name -> byte address.
    pub data_labels: BTreeMap<String, u32>,
    /// `.equ` constants.
    pub constants: BTreeMap<String, i64>,
    /// Initialized data image starting at [`DATA_BASE`].
    pub data: Vec<u8>,
    pub loops: Vec<LoopRegion>,
    /// Registers a transformed program no longer keeps up to date.
    pub clobbers: Vec<Reg>,
    pub entry: usize,
}

impl Program {
    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Resolved branch/jump target index per instruction.
    pub fn branch_targets(&self) -> Result<Vec<Option<usize>>, String> {
        self.instructions
            .iter()
            .map(|i| match &i.target {
                None => Ok(None),
                Some(name) => self
                    .labels
                    .get(name)
                    .copied()
                    .map(Some)
                    .ok_or_else(|| format!("unresolved label `{name}`")),
            })
            .collect()
    }

    /// Little-endian word stored at a data address.
    pub fn data_word(&self, addr: u32) -> Option<u32> {
        let off = addr.checked_sub(DATA_BASE)? as usize;
        let bytes = self.data.get(off..off + 4)?;
        Some(u32::from_le_bytes(bytes.try_into().ok()?))
    }

    /// Resolves an iteration-count marker to a number.
    pub fn resolve_count(&self, count: &IterCount) -> Option<u32> {
        match count {
            IterCount::Literal(n) => Some(*n),
            IterCount::Symbol(s) => {
                if let Some(v) = self.constants.get(s) {
                    return u32::try_from(*v).ok();
                }
                self.data_word(*self.data_labels.get(s)?)
            }
        }
    }

    /// Byte range `[start, end)` covered by a data label: up to the next
    /// label at a higher address or the end of the image.
    pub fn data_region(&self, label: &str) -> Option<(u32, u32)> {
        let start = *self.data_labels.get(label)?;
        let end = self
            .data_labels
            .values()
            .copied()
            .filter(|&a| a > start)
            .min()
            .unwrap_or(DATA_BASE + self.data.len() as u32);
        Some((start, end - start))
    }

    /// Text labels that point at `index`, sorted by name.
    pub fn labels_at(&self, index: usize) -> Vec<&str> {
        self.labels
            .iter()
            .filter(|(_, &i)| i == index)
            .map(|(n, _)| n.as_str())
            .collect()
    }
}
