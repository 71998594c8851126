use crate::error::IndexError;

/// Tracks accounted index bytes against a hard cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryAccountant {
    current: u64,
    peak: u64,
    cap: u64,
}

/// Point-in-time view of a [`MemoryAccountant`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryReport {
    pub current_bytes: u64,
    pub peak_bytes: u64,
    pub cap_bytes: u64,
}

impl MemoryAccountant {
    pub fn new(cap: u64) -> Self {
        MemoryAccountant { current: 0, peak: 0, cap }
    }

    pub fn current(&self) -> u64 {
        self.current
    }

    pub fn peak(&self) -> u64 {
        self.peak
    }

    pub fn cap(&self) -> u64 {
        self.cap
    }

    /// Fails if `bytes` more would pass the cap. Never mutates.
    pub fn check(&self, bytes: u64) -> Result<(), IndexError> {
        match self.current.checked_add(bytes) {
            Some(total) if total <= self.cap => Ok(()),
            _ => Err(IndexError::CapExceeded { cap: self.cap, current: self.current, requested: bytes }),
        }
    }

    pub fn allocate(&mut self, bytes: u64) -> Result<(), IndexError> {
        self.check(bytes)?;
        self.current += bytes;
        self.peak = self.peak.max(self.current);
        Ok(())
    }

    pub fn release(&mut self, bytes: u64) {
        debug_assert!(bytes <= self.current);
        self.current -= bytes;
    }

    pub fn report(&self) -> MemoryReport {
        MemoryReport { current_bytes: self.current, peak_bytes: self.peak, cap_bytes: self.cap }
    }
}
