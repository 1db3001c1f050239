use crate::error::{Error, Result};

/// Ring buffer of the most recent `capacity` state vectors.
#[derive(Debug, Clone)]
pub struct BlockWindow {
    n: usize,
    capacity: usize,
    data: Vec<usize>,
    /// Number of vectors pushed so far; the newest one is at time `pushed - 1`.
    pushed: u64,
}

impl BlockWindow {
    pub fn new(n: usize, capacity: usize) -> Self {
        assert!(n > 0 && capacity > 0);
        Self {
            n,
            capacity,
            data: vec![0; n * capacity],
            pushed: 0,
        }
    }

    /// Builds a window whose last vector sits at time `vectors.len() - 1`.
    pub fn from_vectors(vectors: &[Vec<usize>]) -> Result<Self> {
        let n = vectors.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(Error::Structure("window needs non-empty vectors".into()));
        }
        let mut w = Self::new(n, vectors.len());
        for v in vectors {
            w.push(v)?;
        }
        Ok(w)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of vectors currently held.
    pub fn len(&self) -> usize {
        (self.pushed as usize).min(self.capacity)
    }

    pub fn is_empty(&self) -> bool {
        self.pushed == 0
    }

    /// Time of the newest vector. Panics when empty.
    pub fn current_time(&self) -> u64 {
        self.pushed.checked_sub(1).expect("empty window")
    }

    pub fn push(&mut self, v: &[usize]) -> Result<()> {
        if v.len() != self.n {
            return Err(Error::Structure(format!(
                "state vector of length {}, expected {}",
                v.len(),
                self.n
            )));
        }
        let slot = (self.pushed % self.capacity as u64) as usize;
        self.data[slot * self.n..(slot + 1) * self.n].copy_from_slice(v);
        self.pushed += 1;
        Ok(())
    }

    /// The vector observed `back` steps before the newest one.
    #[inline]
    pub fn back(&self, back: usize) -> &[usize] {
        assert!(back < self.len(), "time outside window");
        let slot = ((self.pushed - 1 - back as u64) % self.capacity as u64) as usize;
        &self.data[slot * self.n..(slot + 1) * self.n]
    }

    /// The vector observed at absolute time `t`.
    pub fn at(&self, t: u64) -> Option<&[usize]> {
        let now = self.pushed.checked_sub(1)?;
        let back = now.checked_sub(t)?;
        ((back as usize) < self.len()).then(|| self.back(back as usize))
    }
}
