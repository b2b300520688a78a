//! Named parameter blocks over a flat sampling vector.
//!
//! Every model samples on an unconstrained scale. A [`Block`] records which
//! index range it occupies and how its sampling coordinates map back to the
//! natural scale (positive parameters are sampled as logs, unit-interval
//! parameters through the logistic map).

use serde::{Deserialize, Serialize};
use std::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// natural = exp(sampled)
    Log,
    /// natural = 1 / (1 + exp(-sampled))
    Logistic,
}

impl Transform {
    pub fn to_natural(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log => x.exp(),
            Transform::Logistic => logistic(x),
        }
    }

    pub fn to_sampling(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log => x.ln(),
            Transform::Logistic => (x / (1.0 - x)).ln(),
        }
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub start: usize,
    pub len: usize,
    pub transform: Transform,
}

impl Block {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len
    }
}

/// Ordered block table. Blocks are contiguous and partition `[0, dim)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    blocks: Vec<Block>,
}

impl Layout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a block after the last one.
    pub fn push(mut self, name: impl Into<String>, len: usize, transform: Transform) -> Self {
        let start = self.dim();
        self.blocks.push(Block {
            name: name.into(),
            start,
            len,
            transform,
        });
        self
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.start + b.len)
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn range(&self, name: &str) -> Option<Range<usize>> {
        self.block(name).map(Block::range)
    }

    /// Column names `name[i]` (or bare `name` for scalar blocks).
    pub fn column_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dim());
        for b in &self.blocks {
            if b.len == 1 {
                out.push(b.name.clone());
            } else {
                out.extend((0..b.len).map(|i| format!("{}[{}]", b.name, i)));
            }
        }
        out
    }

    pub fn to_natural(&self, theta: &[f64]) -> Vec<f64> {
        let mut out = theta.to_vec();
        for b in &self.blocks {
            for v in &mut out[b.range()] {
                *v = b.transform.to_natural(*v);
            }
        }
        out
    }

    pub fn to_sampling(&self, natural: &[f64]) -> Vec<f64> {
        let mut out = natural.to_vec();
        for b in &self.blocks {
            for v in &mut out[b.range()] {
                *v = b.transform.to_sampling(*v);
            }
        }
        out
    }

    /// True when the blocks tile `[0, dim)` without gaps or overlaps.
    pub fn is_partition(&self) -> bool {
        let mut next = 0;
        for b in &self.blocks {
            if b.start != next {
                return false;
            }
            next += b.len;
        }
        true
    }

    /// Same block structure with every start shifted by `offset`.
    pub fn shifted(&self, offset: usize) -> Layout {
        Layout {
            blocks: self
                .blocks
                .iter()
                .map(|b| Block {
                    start: b.start + offset,
                    ..b.clone()
                })
                .collect(),
        }
    }

    /// Blocks starting at or after `offset`, re-based to start at zero.
    pub fn suffix(&self, offset: usize) -> Layout {
        Layout {
            blocks: self
                .blocks
                .iter()
                .filter(|b| b.start >= offset)
                .map(|b| Block {
                    start: b.start - offset,
                    ..b.clone()
                })
                .collect(),
        }
    }

    pub fn concat(&self, other: &Layout) -> Layout {
        let mut blocks = self.blocks.clone();
        blocks.extend(other.shifted(self.dim()).blocks);
        Layout { blocks }
    }
}

/// A flat parameter vector together with its layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    pub values: Vec<f64>,
    pub layout: Layout,
}

impl ParameterState {
    pub fn new(values: Vec<f64>, layout: Layout) -> Self {
        assert_eq!(values.len(), layout.dim(), "state length does not match layout");
        Self { values, layout }
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.layout.range(name).map(|r| &self.values[r])
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let r = self.layout.range(name)?;
        Some(&mut self.values[r])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_partitions_and_names() {
        let l = Layout::new()
            .push("beta", 2, Transform::Log)
            .push("sigma2", 1, Transform::Log)
            .push("z", 3, Transform::Identity);
        assert_eq!(l.dim(), 6);
        assert!(l.is_partition());
        assert_eq!(l.range("z"), Some(3..6));
        assert_eq!(
            l.column_names(),
            vec!["beta[0]", "beta[1]", "sigma2", "z[0]", "z[1]", "z[2]"]
        );
    }

    #[test]
    fn transforms_round_trip() {
        for t in [Transform::Identity, Transform::Log, Transform::Logistic] {
            for x in [-3.0, -0.2, 0.0, 1.5, 7.0] {
                let back = t.to_sampling(t.to_natural(x));
                assert!((back - x).abs() < 1e-9, "{t:?} {x} {back}");
            }
        }
    }

    #[test]
    fn concat_shifts_second_layout() {
        let a = Layout::new().push("a", 2, Transform::Identity);
        let b = Layout::new().push("b", 3, Transform::Log);
        let c = a.concat(&b);
        assert_eq!(c.range("b"), Some(2..5));
        assert!(c.is_partition());
    }
}
