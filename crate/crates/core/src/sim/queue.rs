use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Entry {
    value: u32,
    ready_at: u64,
}

/// Bounded blocking FIFO of 32-bit words between the two pipelines.
///
/// A slot is taken when the producer issues; the value becomes visible to
/// the consumer at the producer's writeback cycle (`ready_at`). Pops free
/// their slot immediately.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HwQueue {
    entries: VecDeque<Entry>,
    pub pushes: u64,
    pub pops: u64,
}

impl HwQueue {
    pub fn occupancy(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn has_space(&self, depth: usize) -> bool {
        self.entries.len() < depth
    }

    /// True when the first `n` entries are visible at cycle `now`.
    pub fn ready(&self, now: u64, n: usize) -> bool {
        self.entries.len() >= n && self.entries.iter().take(n).all(|e| e.ready_at <= now)
    }

    pub fn push(&mut self, value: u32, ready_at: u64) {
        self.pushes += 1;
        self.entries.push_back(Entry { value, ready_at });
    }

    pub fn pop(&mut self) -> Option<u32> {
        let e = self.entries.pop_front()?;
        self.pops += 1;
        Some(e.value)
    }

    /// Earliest visibility time strictly after `now`, if any entry is still
    /// in flight.
    pub fn next_event_after(&self, now: u64) -> Option<u64> {
        self.entries.iter().map(|e| e.ready_at).filter(|&t| t > now).min()
    }

    pub fn values(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|e| e.value)
    }
}
