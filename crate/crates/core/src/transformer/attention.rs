use crate::error::{Error, Result};

/// Where a new position hangs in the attention graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parent {
    /// Continues the cache's linear prefix (every chained row present).
    Root,
    /// Continues the first `n` cache rows only.
    Prefix(usize),
    /// Child of an earlier position in the same input batch.
    Node(usize),
}

/// Visibility rule for a batch of new positions.
///
/// A position sees the prefix its root chain attaches to, its ancestors in the
/// batch, and itself; never its siblings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttentionMaskSpec {
    Causal,
    Tree(Vec<Parent>),
}

/// Resolved visibility for one new position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Visibility {
    /// Cache rows `[0, prefix_len)` are visible.
    pub prefix_len: usize,
    /// Batch indices of proper ancestors, ascending.
    pub ancestors: Vec<usize>,
    /// Rotary position index (prefix length plus depth).
    pub position: usize,
}

impl AttentionMaskSpec {
    pub fn parents(&self, n: usize) -> Vec<Parent> {
        match self {
            AttentionMaskSpec::Causal => (0..n)
                .map(|i| if i == 0 { Parent::Root } else { Parent::Node(i - 1) })
                .collect(),
            AttentionMaskSpec::Tree(p) => p.clone(),
        }
    }

    /// Resolves every position against a cache whose linear prefix holds
    /// `chain_len` rows.
    pub fn resolve(&self, n: usize, chain_len: usize) -> Result<Vec<Visibility>> {
        let parents = self.parents(n);
        if parents.len() != n {
            return Err(Error::DanglingAncestor { node: parents.len().min(n) });
        }
        let mut out: Vec<Visibility> = Vec::with_capacity(n);
        for (i, p) in parents.iter().enumerate() {
            let v = match *p {
                Parent::Root => Visibility {
                    prefix_len: chain_len,
                    ancestors: Vec::new(),
                    position: chain_len,
                },
                Parent::Prefix(len) => {
                    if len > chain_len {
                        return Err(Error::DanglingAncestor { node: i });
                    }
                    Visibility {
                        prefix_len: len,
                        ancestors: Vec::new(),
                        position: len,
                    }
                }
                Parent::Node(j) => {
                    if j >= i {
                        return Err(Error::DanglingAncestor { node: i });
                    }
                    let parent = &out[j];
                    let mut ancestors = parent.ancestors.clone();
                    ancestors.push(j);
                    Visibility {
                        prefix_len: parent.prefix_len,
                        ancestors,
                        position: parent.position + 1,
                    }
                }
            };
            out.push(v);
        }
        Ok(out)
    }

    /// Dense `n x (chain_len + n)` visibility matrix over cache rows followed
    /// by batch positions.
    pub fn dense(&self, n: usize, chain_len: usize) -> Result<Vec<Vec<bool>>> {
        let vis = self.resolve(n, chain_len)?;
        Ok(vis
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let mut row = vec![false; chain_len + n];
                row[..v.prefix_len].iter_mut().for_each(|b| *b = true);
                for &a in &v.ancestors {
                    row[chain_len + a] = true;
                }
                row[chain_len + i] = true;
                row
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn causal_is_chain() {
        let vis = AttentionMaskSpec::Causal.resolve(3, 5).unwrap();
        assert_eq!(vis[2].ancestors, vec![0, 1]);
        assert_eq!(vis[2].position, 7);
        assert_eq!(vis[0].prefix_len, 5);
    }

    #[test]
    fn siblings_share_position() {
        let spec = AttentionMaskSpec::Tree(vec![Parent::Root, Parent::Node(0), Parent::Node(0), Parent::Node(1)]);
        let vis = spec.resolve(4, 2).unwrap();
        assert_eq!(vis[1].position, vis[2].position);
        assert_eq!(vis[3].ancestors, vec![0, 1]);
        let dense = spec.dense(4, 2).unwrap();
        assert_eq!(dense[2], vec![true, true, true, false, true, false]);
    }

    #[test]
    fn forward_references_rejected() {
        let spec = AttentionMaskSpec::Tree(vec![Parent::Node(0)]);
        assert!(matches!(spec.resolve(1, 0), Err(Error::DanglingAncestor { node: 0 })));
        let spec = AttentionMaskSpec::Tree(vec![Parent::Prefix(9)]);
        assert!(spec.resolve(1, 3).is_err());
    }
}
