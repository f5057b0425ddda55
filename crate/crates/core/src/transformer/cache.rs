use crate::error::{Error, Result};
use crate::model::ArchConfig;

/// Key/value history for every attention sublayer.
///
/// Rows `[0, committed)` hold accepted tokens and are never rewritten. Rows
/// past that are tentative (drafts, verification trees) and are discarded by
/// [`KvCache::rollback`] or compacted by [`KvCache::commit_path`]. A row
/// written while its attention sublayer was skipped is marked invalid for that
/// sublayer and is invisible to it.
#[derive(Debug, Clone)]
pub struct KvCache {
    d_model: usize,
    capacity: usize,
    layers: Vec<LayerCache>,
    positions: Vec<usize>,
    rows: usize,
    chain_len: usize,
    committed: usize,
    marks: Vec<(u64, usize)>,
    next_mark: u64,
}

#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    pub(crate) k: Vec<f32>,
    pub(crate) v: Vec<f32>,
    pub(crate) valid: Vec<bool>,
}

/// Opaque checkpoint returned by [`KvCache::checkpoint`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheMark {
    id: u64,
    len: usize,
}

impl CacheMark {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl KvCache {
    /// Room for `max_seq` committed rows plus 256 tentative ones.
    pub fn new(config: &ArchConfig) -> Self {
        Self::with_capacity(config, config.max_seq + 256)
    }

    pub fn with_capacity(config: &ArchConfig, capacity: usize) -> Self {
        let layer = LayerCache {
            k: vec![0.0; capacity * config.d_model],
            v: vec![0.0; capacity * config.d_model],
            valid: vec![false; capacity],
        };
        KvCache {
            d_model: config.d_model,
            capacity,
            layers: vec![layer; config.n_blocks],
            positions: vec![0; capacity],
            rows: 0,
            chain_len: 0,
            committed: 0,
            marks: Vec::new(),
            next_mark: 0,
        }
    }

    pub fn committed_len(&self) -> usize {
        self.committed
    }

    /// Rows present, committed or tentative.
    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    /// Rows forming a linear sequence from position 0.
    pub fn chain_len(&self) -> usize {
        self.chain_len
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn d_model(&self) -> usize {
        self.d_model
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn position(&self, row: usize) -> usize {
        self.positions[row]
    }

    /// Whether `row` holds an entry for the attention sublayer of `block`.
    pub fn is_valid(&self, block: usize, row: usize) -> bool {
        row < self.rows && self.layers[block].valid[row]
    }

    pub fn key(&self, block: usize, row: usize) -> &[f32] {
        let d = self.d_model;
        &self.layers[block].k[row * d..(row + 1) * d]
    }

    pub fn value(&self, block: usize, row: usize) -> &[f32] {
        let d = self.d_model;
        &self.layers[block].v[row * d..(row + 1) * d]
    }

    /// Number of rows valid for `block` (holes are not counted).
    pub fn valid_len(&self, block: usize) -> usize {
        self.layers[block].valid[..self.rows].iter().filter(|&&v| v).count()
    }

    pub fn checkpoint(&mut self) -> CacheMark {
        let id = self.next_mark;
        self.next_mark += 1;
        self.marks.push((id, self.rows));
        CacheMark { id, len: self.rows }
    }

    /// Restores the state at `mark`. Marks taken after it are invalidated;
    /// the mark itself stays live, so rolling back twice is a no-op.
    pub fn rollback(&mut self, mark: CacheMark) -> Result<()> {
        let idx = self
            .marks
            .iter()
            .position(|&(id, _)| id == mark.id)
            .ok_or(Error::StaleMark)?;
        if mark.len < self.committed || mark.len > self.rows {
            return Err(Error::StaleMark);
        }
        self.marks.truncate(idx + 1);
        self.truncate_rows(mark.len);
        Ok(())
    }

    /// Drops every tentative row.
    pub fn discard_tentative(&mut self) {
        let c = self.committed;
        self.truncate_rows(c);
        self.marks.retain(|&(_, len)| len <= c);
    }

    fn truncate_rows(&mut self, len: usize) {
        self.rows = len;
        self.chain_len = self.chain_len.min(len);
    }

    /// Commits the tentative rows at `slots` (in order) as the next committed
    /// positions, discarding every other tentative row. Each slot must have
    /// been written at the position it will occupy.
    pub fn commit_path(&mut self, slots: &[usize]) -> Result<()> {
        let base = self.committed;
        let mut prev = None;
        for (i, &s) in slots.iter().enumerate() {
            if s < base || s >= self.rows || prev.is_some_and(|p| s <= p) {
                return Err(Error::InvalidCommit(format!("slot {s} is not an ordered tentative row")));
            }
            if self.positions[s] != base + i {
                return Err(Error::InvalidCommit(format!(
                    "slot {s} was written at position {}, needs {}",
                    self.positions[s],
                    base + i
                )));
            }
            prev = Some(s);
        }
        let d = self.d_model;
        for (i, &s) in slots.iter().enumerate() {
            let dst = base + i;
            if dst == s {
                continue;
            }
            for layer in &mut self.layers {
                layer.k.copy_within(s * d..(s + 1) * d, dst * d);
                layer.v.copy_within(s * d..(s + 1) * d, dst * d);
                layer.valid[dst] = layer.valid[s];
            }
            self.positions[dst] = self.positions[s];
        }
        let new_len = base + slots.len();
        self.rows = new_len;
        self.chain_len = new_len;
        self.committed = new_len;
        self.marks.retain(|&(_, len)| len == new_len);
        Ok(())
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [LayerCache] {
        &mut self.layers
    }

    /// Reserves `n` rows after the current ones, returning the first slot.
    pub(crate) fn append_rows(&mut self, positions: &[usize], chained: bool, commit: bool) -> usize {
        let base = self.rows;
        for (i, &p) in positions.iter().enumerate() {
            self.positions[base + i] = p;
        }
        self.rows += positions.len();
        if chained && self.chain_len == base {
            self.chain_len = self.rows;
        }
        if commit {
            self.committed = self.rows;
        }
        base
    }
}

/// Content equality: committed length, row layout and every valid K/V entry,
/// compared bitwise. Capacity and stale buffer contents are ignored.
impl PartialEq for KvCache {
    fn eq(&self, other: &Self) -> bool {
        if self.d_model != other.d_model
            || self.layers.len() != other.layers.len()
            || self.rows != other.rows
            || self.committed != other.committed
            || self.chain_len != other.chain_len
            || self.positions[..self.rows] != other.positions[..other.rows]
        {
            return false;
        }
        let d = self.d_model;
        let bits_eq = |a: &[f32], b: &[f32]| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
        self.layers.iter().zip(&other.layers).all(|(a, b)| {
            (0..self.rows).all(|r| {
                a.valid[r] == b.valid[r]
                    && (!a.valid[r]
                        || (bits_eq(&a.k[r * d..(r + 1) * d], &b.k[r * d..(r + 1) * d])
                            && bits_eq(&a.v[r * d..(r + 1) * d], &b.v[r * d..(r + 1) * d])))
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cache() -> KvCache {
        KvCache::with_capacity(&ArchConfig::new(2, 4, 1, 8, 8, 16), 24)
    }

    #[test]
    fn marks_nest_lifo() {
        let mut c = cache();
        c.append_rows(&[0, 1, 2, 3, 4], true, true);
        let m1 = c.checkpoint();
        c.append_rows(&[5, 6, 7], true, false);
        let m2 = c.checkpoint();
        c.append_rows(&[8, 9], true, false);
        c.rollback(m2).unwrap();
        assert_eq!(c.len(), 8);
        c.rollback(m1).unwrap();
        assert_eq!(c.len(), 5);
        assert_eq!(c.committed_len(), 5);
        assert!(matches!(c.rollback(m2), Err(Error::StaleMark)));
        c.rollback(m1).unwrap();
        assert_eq!(c.len(), 5);
    }

    #[test]
    fn cannot_roll_back_committed_rows() {
        let mut c = cache();
        let m = c.checkpoint();
        c.append_rows(&[0, 1], true, true);
        assert!(matches!(c.rollback(m), Err(Error::StaleMark)));
    }

    #[test]
    fn commit_path_checks_positions() {
        let mut c = cache();
        c.append_rows(&[0, 1], true, true);
        // two siblings at position 2, one child at 3
        c.append_rows(&[2, 2, 3], false, false);
        assert!(c.commit_path(&[4]).is_err());
        assert!(c.commit_path(&[3, 2]).is_err());
        c.commit_path(&[3]).unwrap();
        assert_eq!(c.committed_len(), 3);
        assert_eq!(c.chain_len(), 3);
        assert_eq!(c.position(2), 2);
    }
}
