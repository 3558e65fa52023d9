//! Angular neighborhoods on the sphere and the 4D block layout they induce.

use crate::error::{NlsamError, Result};
use crate::volume::GradientTable;

/// Volumes stacked into one block: the b0, the DWI being denoised, then its
/// angular neighbors from closest to farthest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AngularSubset {
    target: usize,
    members: Vec<usize>,
}

impl AngularSubset {
    /// `members` must start with the b0 index, contain `target` exactly once
    /// and hold no duplicates.
    pub fn new(target: usize, members: Vec<usize>) -> Result<Self> {
        if members.len() < 2 {
            return Err(NlsamError::InvalidParameter("a subset needs a b0 and a target".into()));
        }
        let mut sorted = members.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != members.len() {
            return Err(NlsamError::InvalidParameter(format!("duplicate members in {members:?}")));
        }
        if members[0] == target || !members.contains(&target) {
            return Err(NlsamError::InvalidParameter(format!(
                "target {target} must appear once after the b0 in {members:?}"
            )));
        }
        Ok(Self { target, members })
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn b0(&self) -> usize {
        self.members[0]
    }

    /// Diffusion-weighted members (everything but the b0).
    pub fn dwis(&self) -> &[usize] {
        &self.members[1..]
    }
}

/// Angle between two gradient axes, ignoring polarity: `arccos |g1·g2|`.
pub fn angular_distance(g1: [f64; 3], g2: [f64; 3]) -> Result<f64> {
    let n1 = norm(g1);
    let n2 = norm(g2);
    if n1 == 0.0 || n2 == 0.0 {
        return Err(NlsamError::Gradients("angular distance of a zero vector".into()));
    }
    let dot = (g1[0] * g2[0] + g1[1] * g2[1] + g1[2] * g2[2]) / (n1 * n2);
    Ok(dot.abs().min(1.0).acos())
}

fn norm(g: [f64; 3]) -> f64 {
    (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt()
}

/// The `an` DWIs closest in angle to `target`, searched across all shells.
/// Ties go to the lower volume index; the block's b0 is the table's first.
pub fn find_neighbors(table: &GradientTable, target: usize, an: usize) -> Result<AngularSubset> {
    if target >= table.len() {
        return Err(NlsamError::InvalidParameter(format!("volume {target} out of range")));
    }
    if table.is_b0(target) {
        return Err(NlsamError::InvalidParameter(format!("volume {target} is a b0")));
    }
    let g = table.bvecs()[target];
    let mut candidates = Vec::new();
    for idx in table.dwi_indices() {
        if idx != target {
            candidates.push((angular_distance(g, table.bvecs()[idx])?, idx));
        }
    }
    if candidates.len() < an {
        return Err(NlsamError::NotEnoughNeighbors { needed: an, available: candidates.len() });
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let b0 = table.b0_indices()[0];
    let mut members = vec![b0, target];
    members.extend(candidates.iter().take(an).map(|&(_, idx)| idx));
    AngularSubset::new(target, members)
}

/// One subset per DWI, in volume order.
pub fn all_subsets(table: &GradientTable, an: usize) -> Result<Vec<AngularSubset>> {
    table.dwi_indices().into_iter().map(|t| find_neighbors(table, t, an)).collect()
}

/// Greedy cover of every DWI appearing in `subsets`: repeatedly takes the
/// subset covering the most still-uncovered DWIs, ties going to the lowest
/// target. Returns indices into `subsets` in selection order.
pub fn greedy_set_cover(subsets: &[AngularSubset]) -> Vec<usize> {
    let mut universe: Vec<usize> = subsets.iter().flat_map(|s| s.dwis().iter().copied()).collect();
    universe.sort_unstable();
    universe.dedup();
    let mut covered = std::collections::HashSet::new();
    let mut chosen = Vec::new();
    while covered.len() < universe.len() {
        let mut best: Option<(usize, usize)> = None;
        for (i, s) in subsets.iter().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            let gain = s.dwis().iter().filter(|d| !covered.contains(*d)).count();
            let better = match best {
                None => gain > 0,
                Some((bi, bg)) => gain > bg || (gain == bg && s.target() < subsets[bi].target()),
            };
            if better {
                best = Some((i, gain));
            }
        }
        let Some((i, _)) = best else { break };
        covered.extend(subsets[i].dwis().iter().copied());
        chosen.push(i);
    }
    chosen
}

/// Near-uniform unit directions on the upper hemisphere (Fibonacci lattice).
pub fn hemisphere_directions(n: usize) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn distances() {
        assert_eq!(angular_distance([1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!((angular_distance([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]).unwrap() - PI / 2.0).abs() < 1e-15);
        let d = angular_distance([1.0, 0.0, 0.0], [3f64.sqrt() / 2.0, 0.5, 0.0]).unwrap();
        assert!((d - PI / 6.0).abs() < 1e-12);
        assert!(angular_distance([0.0; 3], [1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn subset_invariants() {
        assert!(AngularSubset::new(1, vec![0, 1, 1]).is_err());
        assert!(AngularSubset::new(1, vec![1, 0]).is_err());
        assert!(AngularSubset::new(3, vec![0, 1, 2]).is_err());
        assert!(AngularSubset::new(2, vec![0, 2, 1]).is_ok());
    }
}
