//! Label-switching resolution: permute component labels draw-by-draw so each
//! draw's allocation vector agrees as closely as possible with a pivot
//! allocation (the highest-posterior draw among those retained).

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;

use crate::draws::{PosteriorDraws, RelabelProvenance};
use crate::model::LatentState;
use crate::{Error, Result};

/// Per-draw label permutations against a pivot.
#[derive(Debug, Clone, PartialEq)]
pub struct Relabeling {
    pub pivot_index: usize,
    /// `permutations[d][old] = new` for draw `d`.
    pub permutations: Vec<Vec<usize>>,
    /// Allocation mismatches against the pivot after applying each permutation.
    pub mismatches: Vec<usize>,
}

impl Relabeling {
    pub fn provenance(&self) -> RelabelProvenance {
        RelabelProvenance {
            pivot_index: self.pivot_index,
            permutations: self.permutations.clone(),
            mismatches: self.mismatches.clone(),
        }
    }
}

/// Allocation labels of a state flattened in period-major (catalog) order.
pub fn flatten_allocations(state: &LatentState) -> Vec<usize> {
    state.z.iter().flatten().copied().collect()
}

/// Index and flattened allocation of the draw with the highest stored log
/// posterior; ties break toward the lowest draw index.
pub fn select_pivot(draws: &PosteriorDraws) -> Result<(usize, Vec<usize>)> {
    if draws.draws.is_empty() {
        return Err(Error::Data("no draws to select a pivot from".into()));
    }
    let mut best = 0;
    for (i, d) in draws.draws.iter().enumerate() {
        if d.log_post > draws.draws[best].log_post {
            best = i;
        }
    }
    Ok((best, flatten_allocations(&draws.draws[best].state)))
}

/// The permutation (`perm[old] = new`) minimizing disagreements between the
/// relabeled draw allocation and the pivot, solved exactly as an assignment
/// problem on the label co-occurrence counts.
pub fn relabel_draw(z_draw: &[usize], pivot: &[usize], components: usize) -> Result<Vec<usize>> {
    if z_draw.len() != pivot.len() {
        return Err(Error::Data(format!(
            "allocation lengths differ: {} vs {}",
            z_draw.len(),
            pivot.len()
        )));
    }
    let mut counts = vec![vec![0i64; components]; components];
    for (&zd, &zp) in z_draw.iter().zip(pivot) {
        counts[zd][zp] += 1;
    }
    let weights = Matrix::from_fn(components, components, |(r, c)| counts[r][c]);
    let (_, assignment) = kuhn_munkres(&weights);
    Ok(assignment)
}

/// Disagreement count between `perm(z_draw)` and the pivot.
pub fn mismatch_count(z_draw: &[usize], pivot: &[usize], perm: &[usize]) -> usize {
    z_draw
        .iter()
        .zip(pivot)
        .filter(|(&zd, &zp)| perm[zd] != zp)
        .count()
}

/// Computes the pivot and the optimal permutation for every draw.
pub fn compute_relabeling(draws: &PosteriorDraws) -> Result<Relabeling> {
    let (pivot_index, pivot) = select_pivot(draws)?;
    let components = draws.header.hyper.components;
    let mut permutations = Vec::with_capacity(draws.draws.len());
    let mut mismatches = Vec::with_capacity(draws.draws.len());
    for d in &draws.draws {
        let z = flatten_allocations(&d.state);
        let perm = relabel_draw(&z, &pivot, components)?;
        mismatches.push(mismatch_count(&z, &pivot, &perm));
        permutations.push(perm);
    }
    Ok(Relabeling {
        pivot_index,
        permutations,
        mismatches,
    })
}

/// Applies per-draw permutations jointly to weights, components, and
/// allocations; posterior values are untouched by construction.
pub fn apply_relabeling(
    draws: &PosteriorDraws,
    relabeling: &Relabeling,
) -> Result<PosteriorDraws> {
    if relabeling.permutations.len() != draws.draws.len() {
        return Err(Error::Data(format!(
            "{} permutations for {} draws",
            relabeling.permutations.len(),
            draws.draws.len()
        )));
    }
    let mut out = draws.clone();
    for (d, perm) in out.draws.iter_mut().zip(&relabeling.permutations) {
        d.state = d.state.permuted(perm);
    }
    out.relabeling = Some(relabeling.provenance());
    Ok(out)
}
