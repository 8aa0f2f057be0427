//! Multilevel family of residual networks built by halving the depth and
//! doubling the time step per level, plus the restriction and prolongation
//! operators that move flattened parameter or gradient vectors between
//! neighboring levels.
//!
//! Level 0 is the coarsest network, level `L` the finest. Every level covers
//! the same time horizon `T = depth * dt`. Blocks at even indices are the
//! C-nodes: restriction copies them verbatim to the coarser level, and
//! prolongation copies them back while interpolating the odd blocks between
//! their neighbors. Input and output maps have the same shape on every level
//! and transfer by identity.

use crate::network::NetSpec;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("fine depth {fine_depth} is not divisible by 2^{required_halvings} (level {level} would need depth {fine_depth}/{divisor})")]
    IndivisibleDepth {
        fine_depth: usize,
        required_halvings: u32,
        level: usize,
        divisor: usize,
    },
    #[error("hierarchy needs at least one level")]
    NoLevels,
}

/// One level of the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSpec {
    /// Level index; 0 is coarsest.
    pub level: usize,
    /// Number of residual blocks at this level.
    pub depth: usize,
    /// Time step at this level.
    pub dt: f64,
    /// Pre-smoothing steps.
    pub pre_smooth: usize,
    /// Post-smoothing steps.
    pub post_smooth: usize,
}

/// Ordered family of network levels sharing input/output shapes.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    levels: Vec<LevelSpec>,
    input_dim: usize,
    width: usize,
    num_classes: usize,
    horizon: f64,
}

impl Hierarchy {
    /// Builds `num_levels` levels with the finest at `fine_depth` blocks.
    /// Each coarser level halves the depth and doubles the time step;
    /// `fine_depth` must be divisible by `2^(num_levels-1)`.
    ///
    /// `smoothing[l]` gives `(pre, post)` smoothing steps for level `l`
    /// (index 0 = coarsest); it must have exactly `num_levels` entries.
    pub fn build(
        fine_depth: usize,
        num_levels: usize,
        input_dim: usize,
        width: usize,
        num_classes: usize,
        horizon: f64,
        smoothing: &[(usize, usize)],
    ) -> Result<Self, HierarchyError> {
        if num_levels == 0 {
            return Err(HierarchyError::NoLevels);
        }
        assert_eq!(
            smoothing.len(),
            num_levels,
            "need one (pre, post) smoothing pair per level"
        );
        assert!(horizon > 0.0, "horizon must be positive");
        let halvings = (num_levels - 1) as u32;
        let divisor = 1usize << halvings;
        if !fine_depth.is_multiple_of(divisor) {
            // name the coarsest level that cannot be formed
            return Err(HierarchyError::IndivisibleDepth {
                fine_depth,
                required_halvings: halvings,
                level: 0,
                divisor,
            });
        }
        let levels = (0..num_levels)
            .map(|l| {
                let depth = fine_depth >> (halvings - l as u32);
                LevelSpec {
                    level: l,
                    depth,
                    dt: horizon / depth as f64,
                    pre_smooth: smoothing[l].0,
                    post_smooth: smoothing[l].1,
                }
            })
            .collect();
        Ok(Hierarchy {
            levels,
            input_dim,
            width,
            num_classes,
            horizon,
        })
    }

    /// Index of the finest level (`L`).
    pub fn finest(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, l: usize) -> &LevelSpec {
        &self.levels[l]
    }

    pub fn levels(&self) -> &[LevelSpec] {
        &self.levels
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Network architecture at level `l`.
    pub fn net_spec(&self, l: usize) -> NetSpec {
        let level = &self.levels[l];
        NetSpec::new(
            self.input_dim,
            self.width,
            self.num_classes,
            level.depth,
            level.dt,
        )
    }

    /// Parameter-vector length at level `l`.
    pub fn param_len(&self, l: usize) -> usize {
        self.net_spec(l).param_len()
    }

    /// Restriction: maps a flattened parameter or gradient vector at level
    /// `l` to level `l-1` by copying every even-indexed (C-node) block; the
    /// input and output maps copy unchanged.
    pub fn restrict(&self, l: usize, fine: &[f64]) -> Vec<f64> {
        assert!(l >= 1, "cannot restrict below level 0");
        let fine_spec = self.net_spec(l);
        let coarse_spec = self.net_spec(l - 1);
        assert_eq!(
            fine.len(),
            fine_spec.param_len(),
            "restriction input length mismatch at level {l}"
        );
        let stride = fine_spec.block_stride();
        let mut coarse = Vec::with_capacity(coarse_spec.param_len());
        coarse.extend_from_slice(&fine[..fine_spec.head_len()]);
        for i in 0..coarse_spec.depth {
            let off = fine_spec.block_offset(2 * i);
            coarse.extend_from_slice(&fine[off..off + stride]);
        }
        coarse.extend_from_slice(&fine[fine_spec.tail_offset()..]);
        debug_assert_eq!(coarse.len(), coarse_spec.param_len());
        coarse
    }

    /// Prolongation: maps a flattened vector at level `l-1` to level `l`.
    /// Even fine blocks copy their coarse counterpart, odd fine blocks take
    /// the mean of the two neighboring coarse blocks, and the last odd block
    /// (which has no right neighbor) copies the last coarse block.
    pub fn prolong(&self, l: usize, coarse: &[f64]) -> Vec<f64> {
        assert!(l >= 1, "prolongation targets level >= 1");
        let fine_spec = self.net_spec(l);
        let coarse_spec = self.net_spec(l - 1);
        assert_eq!(
            coarse.len(),
            coarse_spec.param_len(),
            "prolongation input length mismatch at level {}",
            l - 1
        );
        let stride = fine_spec.block_stride();
        let nc = coarse_spec.depth;
        let mut fine = Vec::with_capacity(fine_spec.param_len());
        fine.extend_from_slice(&coarse[..coarse_spec.head_len()]);
        for i in 0..nc {
            let here = &coarse[coarse_spec.block_offset(i)..coarse_spec.block_offset(i) + stride];
            fine.extend_from_slice(here);
            if i + 1 < nc {
                let right = &coarse
                    [coarse_spec.block_offset(i + 1)..coarse_spec.block_offset(i + 1) + stride];
                fine.extend(here.iter().zip(right).map(|(a, b)| 0.5 * (a + b)));
            } else {
                fine.extend_from_slice(here);
            }
        }
        fine.extend_from_slice(&coarse[coarse_spec.tail_offset()..]);
        debug_assert_eq!(fine.len(), fine_spec.param_len());
        fine
    }

    /// The transfer operators between levels `l` and `l-1` as linear maps.
    /// They are never materialized as dense matrices.
    pub fn transfer(&self, l: usize) -> TransferOps<'_> {
        assert!(l >= 1 && l <= self.finest());
        TransferOps {
            hierarchy: self,
            fine_level: l,
        }
    }
}

/// Restriction/prolongation pair between one level and the next coarser one,
/// applied matrix-free.
#[derive(Debug, Clone, Copy)]
pub struct TransferOps<'a> {
    hierarchy: &'a Hierarchy,
    fine_level: usize,
}

impl TransferOps<'_> {
    /// Applies the restriction operator (fine to coarse).
    pub fn restrict(&self, fine: &[f64]) -> Vec<f64> {
        self.hierarchy.restrict(self.fine_level, fine)
    }

    /// Applies the prolongation operator (coarse to fine).
    pub fn prolong(&self, coarse: &[f64]) -> Vec<f64> {
        self.hierarchy.prolong(self.fine_level, coarse)
    }

    pub fn fine_len(&self) -> usize {
        self.hierarchy.param_len(self.fine_level)
    }

    pub fn coarse_len(&self) -> usize {
        self.hierarchy.param_len(self.fine_level - 1)
    }
}
