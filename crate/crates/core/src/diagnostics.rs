//! Clustering accuracy, label alignment, variable-selection accuracy,
//! co-clustering and agglomerative clustering.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::smc::ParticleSystem;

/// Largest `K` accepted by the exhaustive alignment search.
pub const MAX_ALIGN_K: usize = 8;

/// Adjusted Rand index (Hubert and Arabie) of two labelings.
pub fn adjusted_rand_index(u: &[usize], v: &[usize]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch { left: u.len(), right: v.len() });
    }
    let n = u.len();
    if n < 2 {
        return Err(Error::InvalidInput("the adjusted Rand index needs at least two items".into()));
    }
    let ru = 1 + *u.iter().max().unwrap();
    let rv = 1 + *v.iter().max().unwrap();
    let mut table = vec![0u64; ru * rv];
    for (&a, &b) in u.iter().zip(v) {
        table[a * rv + b] += 1;
    }
    let pairs = |c: u64| (c * c.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().map(|&c| pairs(c)).sum();
    let rows: f64 = (0..ru).map(|a| pairs(table[a * rv..(a + 1) * rv].iter().sum())).sum();
    let cols: f64 = (0..rv).map(|b| pairs((0..ru).map(|a| table[a * rv + b]).sum())).sum();
    let total = pairs(n as u64);
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if max == expected {
        // Both partitions are trivial (all singletons or one block).
        return Ok(if rows == cols { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

/// Permutation `perm` (sample label `k` becomes `perm[k]`) maximising the
/// number of positions where the relabelled sample equals the reference.
/// Ties go to the lexicographically smallest permutation.
pub fn align_labels(sample: &[usize], reference: &[usize], k: usize) -> Result<Vec<usize>> {
    if sample.len() != reference.len() {
        return Err(Error::LengthMismatch { left: sample.len(), right: reference.len() });
    }
    if k > MAX_ALIGN_K {
        return Err(Error::TooManyComponents { k, max: MAX_ALIGN_K });
    }
    if let Some(&bad) = sample.iter().chain(reference).find(|&&l| l >= k) {
        return Err(Error::InvalidInput(format!("label {} outside 1..={k}", bad + 1)));
    }
    let mut overlap = vec![0usize; k * k];
    for (&a, &b) in sample.iter().zip(reference) {
        overlap[a * k + b] += 1;
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = perm.clone();
    let mut best_score = score(&overlap, &perm, k);
    while next_permutation(&mut perm) {
        let s = score(&overlap, &perm, k);
        if s > best_score {
            best_score = s;
            best.clone_from(&perm);
        }
    }
    Ok(best)
}

/// Number of positions where `perm` applied to `sample` matches `reference`.
pub fn agreement(sample: &[usize], reference: &[usize], perm: &[usize]) -> usize {
    sample.iter().zip(reference).filter(|&(&a, &b)| perm[a] == b).count()
}

fn score(overlap: &[usize], perm: &[usize], k: usize) -> usize {
    (0..k).map(|a| overlap[a * k + perm[a]]).sum()
}

/// Advances to the next permutation in lexicographic order.
fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).unwrap();
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Permutation that orders components by increasing mean response of their
/// members; empty components go last.
pub fn align_by_mean_response(z: &[usize], y: &[f64], k: usize) -> Result<Vec<usize>> {
    if z.len() != y.len() {
        return Err(Error::LengthMismatch { left: z.len(), right: y.len() });
    }
    let mut sums = vec![(0.0, 0usize); k];
    for (&l, &v) in z.iter().zip(y) {
        if l >= k {
            return Err(Error::InvalidInput(format!("label {} outside 1..={k}", l + 1)));
        }
        sums[l].0 += v;
        sums[l].1 += 1;
    }
    let mean = |c: usize| {
        let (s, m) = sums[c];
        if m == 0 { f64::INFINITY } else { s / m as f64 }
    };
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| mean(a).total_cmp(&mean(b)).then(a.cmp(&b)));
    let mut perm = vec![0; k];
    for (rank, &c) in order.iter().enumerate() {
        perm[c] = rank;
    }
    Ok(perm)
}

/// Sensitivity and specificity of estimated inclusion indicators, pooled
/// over components, intercept column excluded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelectionAccuracy {
    /// `None` when the truth has no active covariate.
    pub sensitivity: Option<f64>,
    /// `None` when the truth has no inactive covariate.
    pub specificity: Option<f64>,
}

pub fn gamma_accuracy(estimated: &[Vec<bool>], truth: &[Vec<bool>]) -> Result<SelectionAccuracy> {
    if estimated.len() != truth.len() {
        return Err(Error::LengthMismatch { left: estimated.len(), right: truth.len() });
    }
    let (mut tp, mut fneg, mut tn, mut fp) = (0u32, 0u32, 0u32, 0u32);
    for (e, t) in estimated.iter().zip(truth) {
        if e.len() != t.len() {
            return Err(Error::LengthMismatch { left: e.len(), right: t.len() });
        }
        for (&ev, &tv) in e.iter().zip(t).skip(1) {
            match (tv, ev) {
                (true, true) => tp += 1,
                (true, false) => fneg += 1,
                (false, false) => tn += 1,
                (false, true) => fp += 1,
            }
        }
    }
    let ratio = |a: u32, b: u32| (a + b > 0).then(|| f64::from(a) / f64::from(a + b));
    Ok(SelectionAccuracy {
        sensitivity: ratio(tp, fneg),
        specificity: ratio(tn, fp),
    })
}

/// Per-observation ESS/N and fraction of distinct lineages of a filter run.
#[derive(Clone, Debug, PartialEq)]
pub struct DegeneracyTrace {
    pub ess_over_n: Vec<f64>,
    pub unique_path_fraction: Vec<f64>,
}

pub fn degeneracy_trace(system: &ParticleSystem) -> DegeneracyTrace {
    let n = system.n_particles() as f64;
    DegeneracyTrace {
        ess_over_n: system.ess.iter().map(|e| e / n).collect(),
        unique_path_fraction: system.unique_paths.clone(),
    }
}

/// Same-cluster frequencies over a set of label vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct CoClusterMatrix {
    pub frequency: DMatrix<f64>,
}

impl CoClusterMatrix {
    pub fn dissimilarity(&self) -> DMatrix<f64> {
        self.frequency.map(|f| 1.0 - f)
    }
}

pub fn cocluster<Z: AsRef<[usize]>>(samples: &[Z]) -> Result<CoClusterMatrix> {
    let first = samples.first().ok_or_else(|| Error::InvalidInput("no samples".into()))?;
    let n = first.as_ref().len();
    let mut counts = DMatrix::<u64>::zeros(n, n);
    for z in samples {
        let z = z.as_ref();
        if z.len() != n {
            return Err(Error::LengthMismatch { left: z.len(), right: n });
        }
        for i in 0..n {
            for j in 0..=i {
                if z[i] == z[j] {
                    counts[(i, j)] += 1;
                }
            }
        }
    }
    let m = samples.len() as f64;
    let frequency = DMatrix::from_fn(n, n, |i, j| {
        let (a, b) = if i >= j { (i, j) } else { (j, i) };
        counts[(a, b)] as f64 / m
    });
    Ok(CoClusterMatrix { frequency })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Linkage {
    #[default]
    Average,
    Single,
    Complete,
}

impl std::str::FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(Linkage::Average),
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            other => Err(Error::InvalidInput(format!("unknown linkage {other:?}"))),
        }
    }
}

/// One agglomeration. Items are numbered `1..=n`; the cluster formed by
/// merge `m` (0-based) is numbered `n + 1 + m`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MergeTree {
    pub n: usize,
    pub merges: Vec<Merge>,
}

impl MergeTree {
    /// Hard partition into `k` clusters (labels `0..k`, numbered by first
    /// appearance) obtained by undoing the last `k - 1` merges.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>> {
        if k == 0 || k > self.n {
            return Err(Error::InvalidInput(format!("cannot cut {} items into {k} clusters", self.n)));
        }
        let n = self.n;
        let mut parent: Vec<usize> = (0..2 * n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (m, merge) in self.merges.iter().take(n - k).enumerate() {
            let node = n + m;
            let (ra, rb) = (find(&mut parent, merge.a - 1), find(&mut parent, merge.b - 1));
            parent[ra] = node;
            parent[rb] = node;
        }
        let mut ids = vec![usize::MAX; 2 * n];
        let mut next = 0;
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let r = find(&mut parent, i);
            if ids[r] == usize::MAX {
                ids[r] = next;
                next += 1;
            }
            labels.push(ids[r]);
        }
        Ok(labels)
    }

    /// One line per merge: `a b height`.
    pub fn to_text(&self) -> String {
        self.merges.iter().map(|m| format!("{} {} {}\n", m.a, m.b, m.height)).collect()
    }
}

/// Agglomerative clustering of a symmetric dissimilarity matrix.
pub fn hierarchical_cluster(dissimilarity: &DMatrix<f64>, linkage: Linkage) -> Result<MergeTree> {
    let n = dissimilarity.nrows();
    if n == 0 || dissimilarity.ncols() != n {
        return Err(Error::InvalidInput("dissimilarity must be a non-empty square matrix".into()));
    }
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (dissimilarity[(i, j)], dissimilarity[(j, i)]);
            if !a.is_finite() || (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                return Err(Error::InvalidInput(format!(
                    "dissimilarity is not symmetric at ({}, {})",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    let mut d = dissimilarity.clone();
    let mut active: Vec<Option<(usize, usize)>> = (0..n).map(|i| Some((i + 1, 1))).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for m in 0..n.saturating_sub(1) {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if active[i].is_none() {
                continue;
            }
            for j in i + 1..n {
                if active[j].is_none() {
                    continue;
                }
                if best.is_none_or(|(_, _, h)| d[(i, j)] < h) {
                    best = Some((i, j, d[(i, j)]));
                }
            }
        }
        let (i, j, height) = best.expect("two active clusters remain");
        let (id_i, size_i) = active[i].unwrap();
        let (id_j, size_j) = active[j].unwrap();
        let (lo, hi) = if id_i < id_j { (id_i, id_j) } else { (id_j, id_i) };
        merges.push(Merge { a: lo, b: hi, height });
        for c in 0..n {
            if c == i || c == j || active[c].is_none() {
                continue;
            }
            let (di, dj) = (d[(i, c)], d[(j, c)]);
            let v = match linkage {
                Linkage::Single => di.min(dj),
                Linkage::Complete => di.max(dj),
                Linkage::Average => (size_i as f64 * di + size_j as f64 * dj) / (size_i + size_j) as f64,
            };
            d[(i, c)] = v;
            d[(c, i)] = v;
        }
        active[i] = Some((n + 1 + m, size_i + size_j));
        active[j] = None;
    }
    Ok(MergeTree { n, merges })
}

/// Mean inclusion indicators over sampled `gamma` tables after relabelling
/// each sample with its permutation (sample label `k` becomes `perms[s][k]`).
pub fn selection_frequency<G: AsRef<[Vec<bool>]>>(gammas: &[G], perms: &[Vec<usize>]) -> Result<DMatrix<f64>> {
    let first = gammas.first().ok_or_else(|| Error::InvalidInput("no samples".into()))?.as_ref();
    if perms.len() != gammas.len() {
        return Err(Error::LengthMismatch { left: perms.len(), right: gammas.len() });
    }
    let k = first.len();
    let p = first.first().map_or(0, Vec::len);
    let mut table = DMatrix::zeros(k, p);
    for (gamma, perm) in gammas.iter().zip(perms) {
        let gamma = gamma.as_ref();
        if gamma.len() != k || perm.len() != k {
            return Err(Error::LengthMismatch { left: gamma.len().max(perm.len()), right: k });
        }
        for (c, row) in gamma.iter().enumerate() {
            if row.len() != p {
                return Err(Error::LengthMismatch { left: row.len(), right: p });
            }
            for (d, &g) in row.iter().enumerate() {
                if g {
                    table[(perm[c], d)] += 1.0;
                }
            }
        }
    }
    Ok(table / gammas.len() as f64)
}

/// Majority-vote inclusion (`frequency > 0.5`) per component and column.
pub fn median_model(frequency: &DMatrix<f64>) -> Vec<Vec<bool>> {
    (0..frequency.nrows())
        .map(|c| (0..frequency.ncols()).map(|d| frequency[(c, d)] > 0.5).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ari_hand_example() {
        let ari = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert!((ari + 0.5).abs() < 1e-15);
        assert_eq!(adjusted_rand_index(&[2, 2, 0, 1], &[2, 2, 0, 1]).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 0, 0], &[1, 1, 1]).unwrap(), 1.0);
        assert!(adjusted_rand_index(&[0], &[0]).is_err());
        assert!(adjusted_rand_index(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn alignment_swaps() {
        let reference = [0, 0, 1, 1, 2];
        assert_eq!(align_labels(&reference, &reference, 3).unwrap(), vec![0, 1, 2]);
        assert_eq!(align_labels(&[1, 1, 0, 0, 2], &reference, 3).unwrap(), vec![1, 0, 2]);
        assert!(matches!(align_labels(&[0], &[0], 9), Err(Error::TooManyComponents { .. })));
    }

    #[test]
    fn lexicographic_order() {
        let mut v = vec![0, 1, 2];
        let mut all = vec![v.clone()];
        while next_permutation(&mut v) {
            all.push(v.clone());
        }
        assert_eq!(all.len(), 6);
        assert_eq!(all[1], vec![0, 2, 1]);
        assert_eq!(all[5], vec![2, 1, 0]);
    }

    #[test]
    fn accuracy_counting() {
        let truth = vec![vec![true, true, false, true, false]];
        let est = vec![vec![true, true, true, false, false]];
        let acc = gamma_accuracy(&est, &truth).unwrap();
        assert_eq!(acc.sensitivity, Some(0.5));
        assert_eq!(acc.specificity, Some(0.5));
        let none = gamma_accuracy(&[vec![true, false]], &[vec![true, false]]).unwrap();
        assert_eq!(none.sensitivity, None);
        assert_eq!(none.specificity, Some(1.0));
    }

    #[test]
    fn two_item_tree() {
        let d = DMatrix::from_row_slice(2, 2, &[0.0, 0.4, 0.4, 0.0]);
        let tree = hierarchical_cluster(&d, Linkage::Average).unwrap();
        assert_eq!(tree.merges, vec![Merge { a: 1, b: 2, height: 0.4 }]);
        assert_eq!(tree.cut(1).unwrap(), vec![0, 0]);
        assert_eq!(tree.cut(2).unwrap(), vec![0, 1]);
        assert_eq!(tree.to_text(), "1 2 0.4\n");
    }

    #[test]
    fn asymmetric_rejected() {
        let d = DMatrix::from_row_slice(2, 2, &[0.0, 0.4, 0.3, 0.0]);
        assert!(hierarchical_cluster(&d, Linkage::Single).is_err());
    }

    #[test]
    fn mean_response_order() {
        let perm = align_by_mean_response(&[0, 0, 1, 2], &[5.0, 7.0, -1.0, 2.0], 4).unwrap();
        assert_eq!(perm, vec![2, 0, 1, 3]);
    }
}
