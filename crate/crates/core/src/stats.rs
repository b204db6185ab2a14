//! Nonparametric test battery and bootstrap mediation.
//!
//! Ranks are average ranks; tie corrections are applied in H, the Dunn z
//! variance and the Mann–Whitney variance. p-values are two-sided unless an
//! alternative is requested explicitly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

use crate::seeds;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {0} groups")]
    TooFewGroups(usize),
    #[error("empty sample")]
    EmptySample,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} observations, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("zero variance in ranked input")]
    ZeroVariance,
    #[error("rank-deficient design matrix")]
    RankDeficient,
}

pub type Result<T> = std::result::Result<T, StatsError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGroup {
    pub label: String,
    pub values: Vec<f64>,
}

impl SampleGroup {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            values,
        }
    }
}

impl AsRef<[f64]> for SampleGroup {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub effect_size: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Alternative {
    #[default]
    TwoSided,
    /// First sample tends to be smaller.
    Less,
    /// First sample tends to be larger.
    Greater,
}

fn check_finite(xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

/// Average ranks (1-based) and the tie-correction sum `Σ (t³ − t)`.
pub fn rank_average(values: &[f64]) -> (Vec<f64>, f64) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    (ranks, ties)
}

fn normal_sf(z: f64) -> f64 {
    Normal::standard().sf(z)
}

struct Pooled {
    ranks: Vec<f64>,
    sizes: Vec<usize>,
    ties: f64,
}

impl Pooled {
    fn new<G: AsRef<[f64]>>(groups: &[G], min_groups: usize) -> Result<Self> {
        if groups.len() < min_groups {
            return Err(StatsError::TooFewGroups(min_groups));
        }
        let mut all = Vec::new();
        let mut sizes = Vec::with_capacity(groups.len());
        for g in groups {
            let g = g.as_ref();
            if g.is_empty() {
                return Err(StatsError::EmptySample);
            }
            check_finite(g)?;
            sizes.push(g.len());
            all.extend_from_slice(g);
        }
        let (ranks, ties) = rank_average(&all);
        Ok(Self { ranks, sizes, ties })
    }

    fn n(&self) -> f64 {
        self.ranks.len() as f64
    }

    fn rank_sums(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.sizes.len());
        let mut start = 0;
        for &s in &self.sizes {
            out.push(self.ranks[start..start + s].iter().sum());
            start += s;
        }
        out
    }
}

/// Kruskal–Wallis H with tie correction; effect size is η² clamped to [0, 1].
pub fn kruskal_wallis<G: AsRef<[f64]>>(groups: &[G]) -> Result<TestResult> {
    let pooled = Pooled::new(groups, 2)?;
    let n = pooled.n();
    let k = groups.len() as f64;
    let correction = 1.0 - pooled.ties / (n * n * n - n);
    let h = if correction <= 0.0 {
        0.0
    } else {
        let s: f64 = pooled
            .rank_sums()
            .iter()
            .zip(&pooled.sizes)
            .map(|(r, &m)| r * r / m as f64)
            .sum();
        let raw = 12.0 / (n * (n + 1.0)) * s - 3.0 * (n + 1.0);
        (raw / correction).max(0.0)
    };
    let p_value = if h == 0.0 {
        1.0
    } else {
        ChiSquared::new(k - 1.0).expect("k >= 2").sf(h)
    };
    let effect_size = (n > k).then(|| ((h - k + 1.0) / (n - k)).clamp(0.0, 1.0));
    Ok(TestResult {
        statistic: h,
        p_value,
        effect_size,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DunnResult {
    /// `z[i][j]` compares mean ranks of group i and group j.
    pub z: Vec<Vec<f64>>,
    pub p_raw: Vec<Vec<f64>>,
    pub p_adjusted: Vec<Vec<f64>>,
    pub comparisons: usize,
}

/// Dunn's pairwise test on pooled mean ranks with Bonferroni adjustment.
pub fn dunn_posthoc<G: AsRef<[f64]>>(groups: &[G]) -> Result<DunnResult> {
    let pooled = Pooled::new(groups, 2)?;
    let n = pooled.n();
    let k = groups.len();
    let comparisons = k * (k - 1) / 2;
    let mean_ranks: Vec<f64> = pooled
        .rank_sums()
        .iter()
        .zip(&pooled.sizes)
        .map(|(r, &m)| r / m as f64)
        .collect();
    let base = n * (n + 1.0) / 12.0 - pooled.ties / (12.0 * (n - 1.0));
    let mut z = vec![vec![0.0; k]; k];
    let mut p_raw = vec![vec![1.0; k]; k];
    let mut p_adjusted = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let var = base * (1.0 / pooled.sizes[i] as f64 + 1.0 / pooled.sizes[j] as f64);
            let zij = if var > 0.0 {
                (mean_ranks[i] - mean_ranks[j]) / var.sqrt()
            } else {
                0.0
            };
            let p = (2.0 * normal_sf(zij.abs())).min(1.0);
            z[i][j] = zij;
            p_raw[i][j] = p;
            p_adjusted[i][j] = (p * comparisons as f64).min(1.0);
        }
    }
    Ok(DunnResult {
        z,
        p_raw,
        p_adjusted,
        comparisons,
    })
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Largest n for which Spearman's p is computed by full enumeration.
pub const SPEARMAN_EXACT_MAX: usize = 8;

/// Spearman rank correlation. The statistic is ρ; p is exact over all
/// permutations for n ≤ 8 and from the t approximation otherwise.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<TestResult> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooShort { need: 3, got: x.len() });
    }
    check_finite(x)?;
    check_finite(y)?;
    let (rx, _) = rank_average(x);
    let (ry, _) = rank_average(y);
    let rho = pearson(&rx, &ry).ok_or(StatsError::ZeroVariance)?;
    let n = x.len();
    let p_value = if n <= SPEARMAN_EXACT_MAX {
        spearman_exact_p(&rx, &ry, rho)
    } else if rho.abs() >= 1.0 {
        0.0
    } else {
        let df = (n - 2) as f64;
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        (2.0 * StudentsT::new(0.0, 1.0, df).expect("df > 0").sf(t.abs())).min(1.0)
    };
    Ok(TestResult {
        statistic: rho,
        p_value,
        effect_size: None,
    })
}

fn spearman_exact_p(rx: &[f64], ry: &[f64], rho: f64) -> f64 {
    let mut perm = ry.to_vec();
    let mut hits = 0u64;
    let mut total = 0u64;
    let target = rho.abs() - 1e-12;
    permutations(&mut perm, 0, &mut |p| {
        total += 1;
        if pearson(rx, p).unwrap_or(0.0).abs() >= target {
            hits += 1;
        }
    });
    hits as f64 / total as f64
}

fn permutations(v: &mut [f64], k: usize, f: &mut impl FnMut(&[f64])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permutations(v, k + 1, f);
        v.swap(k, i);
    }
}

/// Largest pooled size for which the Mann–Whitney p is exact.
pub const MANN_WHITNEY_EXACT_MAX: usize = 16;

/// Mann–Whitney U of the first sample (pairs with `a > b`, ties counting ½).
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<TestResult> {
    mann_whitney_u_with(a, b, Alternative::TwoSided)
}

pub fn mann_whitney_u_with(a: &[f64], b: &[f64], alternative: Alternative) -> Result<TestResult> {
    let pooled = Pooled::new(&[a, b], 2)?;
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let r1: f64 = pooled.ranks[..a.len()].iter().sum();
    let u = r1 - n1 * (n1 + 1.0) / 2.0;
    let p_value = if a.len() + b.len() <= MANN_WHITNEY_EXACT_MAX {
        mann_whitney_exact_p(&pooled.ranks, a.len(), u, alternative)
    } else {
        let n = n1 + n2;
        let mu = n1 * n2 / 2.0;
        let var = n1 * n2 / 12.0 * ((n + 1.0) - pooled.ties / (n * (n - 1.0)));
        if var <= 0.0 {
            1.0
        } else {
            let sd = var.sqrt();
            match alternative {
                Alternative::TwoSided => {
                    let z = ((u - mu).abs() - 0.5).max(0.0) / sd;
                    (2.0 * normal_sf(z)).min(1.0)
                }
                Alternative::Greater => normal_sf((u - mu - 0.5) / sd),
                Alternative::Less => normal_sf((mu - u - 0.5) / sd),
            }
        }
    };
    Ok(TestResult {
        statistic: u,
        p_value,
        effect_size: Some(u / (n1 * n2)),
    })
}

// Exact null distribution of U by counting subsets of the pooled (doubled,
// hence integral) ranks.
fn mann_whitney_exact_p(ranks: &[f64], n1: usize, u: f64, alternative: Alternative) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // counts[size][sum]
    let mut counts = vec![vec![0u64; max_sum + 1]; n1 + 1];
    counts[0][0] = 1;
    for &r in &doubled {
        for size in (1..=n1).rev() {
            for s in (r..=max_sum).rev() {
                let c = counts[size - 1][s - r];
                if c > 0 {
                    counts[size][s] += c;
                }
            }
        }
    }
    let total: u64 = counts[n1].iter().sum();
    let offset = n1 as f64 * (n1 as f64 + 1.0) / 2.0;
    let mu = n1 as f64 * (ranks.len() - n1) as f64 / 2.0;
    let eps = 1e-9;
    let hits: u64 = counts[n1]
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .filter(|(s, _)| {
            let us = *s as f64 / 2.0 - offset;
            match alternative {
                Alternative::TwoSided => (us - mu).abs() >= (u - mu).abs() - eps,
                Alternative::Less => us <= u + eps,
                Alternative::Greater => us >= u - eps,
            }
        })
        .map(|(_, &c)| c)
        .sum();
    (hits as f64 / total as f64).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediationResult {
    /// Season levels in ascending order; the first is the baseline.
    pub levels: Vec<u32>,
    /// Contrast of each non-baseline level against the baseline.
    pub a_paths: Vec<f64>,
    pub b_path: f64,
    /// `a_j · b` per non-baseline level.
    pub ab_levels: Vec<f64>,
    /// Sum of the per-level indirect effects.
    pub indirect_ab: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Replicates that produced an estimate.
    pub n_bootstrap: usize,
    /// Replicates dropped because a resample lost a level.
    pub n_degenerate: usize,
    pub interval: String,
}

struct Paths {
    a: Vec<f64>,
    b: f64,
}

fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    let chol = xtx.clone().cholesky()?;
    let l = chol.l();
    let scale = xtx.diagonal().max().max(1.0);
    if (0..l.nrows()).any(|i| l[(i, i)] * l[(i, i)] < 1e-10 * scale) {
        return None;
    }
    Some(chol.solve(&xty))
}

fn fit_paths(level_idx: &[usize], n_levels: usize, m: &[f64], y: &[f64]) -> Option<Paths> {
    let n = m.len();
    let p = n_levels; // intercept + (n_levels - 1) dummies
    let mut xa = DMatrix::zeros(n, p);
    let mut xb = DMatrix::zeros(n, p + 1);
    for (row, &lvl) in level_idx.iter().enumerate() {
        xa[(row, 0)] = 1.0;
        xb[(row, 0)] = 1.0;
        if lvl > 0 {
            xa[(row, lvl)] = 1.0;
            xb[(row, lvl)] = 1.0;
        }
        xb[(row, p)] = m[row];
    }
    let ca = ols(&xa, &DVector::from_column_slice(m))?;
    let cb = ols(&xb, &DVector::from_column_slice(y))?;
    Some(Paths {
        a: ca.iter().skip(1).copied().collect(),
        b: cb[p],
    })
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile-bootstrap mediation of `seasons → mediator → outcome`.
///
/// The a-paths regress the mediator on dummy-coded season levels (baseline =
/// smallest level); b regresses the outcome on the mediator with the same
/// dummies as controls. Replicate `r` resamples rows with a stream derived
/// from `(seed, r)`, so results do not depend on scheduling.
pub fn bootstrap_mediation(
    seasons: &[u32],
    mediator: &[f64],
    outcome: &[f64],
    n_boot: usize,
    seed: u64,
) -> Result<MediationResult> {
    if seasons.len() != mediator.len() {
        return Err(StatsError::LengthMismatch(seasons.len(), mediator.len()));
    }
    if seasons.len() != outcome.len() {
        return Err(StatsError::LengthMismatch(seasons.len(), outcome.len()));
    }
    check_finite(mediator)?;
    check_finite(outcome)?;
    let mut levels: Vec<u32> = seasons.to_vec();
    levels.sort_unstable();
    levels.dedup();
    if levels.len() < 2 {
        return Err(StatsError::TooFewGroups(2));
    }
    let level_idx: Vec<usize> = seasons
        .iter()
        .map(|s| levels.binary_search(s).expect("level present"))
        .collect();
    let k = levels.len();
    let point = fit_paths(&level_idx, k, mediator, outcome).ok_or(StatsError::RankDeficient)?;
    let ab_levels: Vec<f64> = point.a.iter().map(|a| a * point.b).collect();
    let indirect_ab = ab_levels.iter().sum();

    let replicate = |r: usize| -> Option<f64> {
        use rand::Rng;
        let mut rng = seeds::stream(seed, &[seeds::purpose::BOOTSTRAP, r as u64]);
        let n = seasons.len();
        let mut li = Vec::with_capacity(n);
        let mut m = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let i = rng.random_range(0..n);
            li.push(level_idx[i]);
            m.push(mediator[i]);
            y.push(outcome[i]);
        }
        let paths = fit_paths(&li, k, &m, &y)?;
        Some(paths.a.iter().sum::<f64>() * paths.b)
    };

    #[cfg(feature = "parallel")]
    let draws: Vec<Option<f64>> = {
        use rayon::prelude::*;
        (0..n_boot).into_par_iter().map(replicate).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let draws: Vec<Option<f64>> = (0..n_boot).map(replicate).collect();

    let mut values: Vec<f64> = draws.iter().flatten().copied().collect();
    let n_degenerate = n_boot - values.len();
    values.sort_by(f64::total_cmp);
    let (ci_low, ci_high) = if values.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (quantile_sorted(&values, 0.025), quantile_sorted(&values, 0.975))
    };
    Ok(MediationResult {
        levels,
        a_paths: point.a,
        b_path: point.b,
        ab_levels,
        indirect_ab,
        ci_low,
        ci_high,
        n_bootstrap: values.len(),
        n_degenerate,
        interval: "percentile".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn ranks_with_ties() {
        let (r, t) = rank_average(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(r, vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(t, 6.0);
    }

    #[test]
    fn kruskal_examples() {
        let r = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]]).unwrap();
        assert!((r.statistic - 7.2).abs() < 1e-9);
        assert!((r.p_value - (-3.6f64).exp()).abs() < 1e-9);
        assert!((r.effect_size.unwrap() - 5.2 / 6.0).abs() < 1e-12);

        let same = kruskal_wallis(&[vec![2.0, 2.0], vec![2.0, 2.0], vec![2.0]]).unwrap();
        assert_eq!((same.statistic, same.p_value), (0.0, 1.0));
        let g = vec![1.0, 2.0, 3.0];
        let ident = kruskal_wallis(&[g.clone(), g.clone(), g]).unwrap();
        assert_eq!((ident.statistic, ident.p_value, ident.effect_size), (0.0, 1.0, Some(0.0)));

        assert_eq!(kruskal_wallis(&[vec![1.0]]), Err(StatsError::TooFewGroups(2)));
        assert_eq!(kruskal_wallis(&[vec![1.0], vec![]]), Err(StatsError::EmptySample));
    }

    #[test]
    fn kruskal_two_groups_matches_rank_sum_z() {
        let a = [1.2, 3.4, 2.2, 5.0, 5.0, 0.1];
        let b = [4.4, 6.1, 5.0, 7.3, 2.2];
        let h = kruskal_wallis(&[&a[..], &b[..]]).unwrap().statistic;
        let (n1, n2) = (6.0, 5.0);
        let n = n1 + n2;
        let u = mann_whitney_u(&a, &b).unwrap().statistic;
        let (_, ties) = rank_average(&[&a[..], &b[..]].concat());
        let var = n1 * n2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
        let z = (u - n1 * n2 / 2.0) / var.sqrt();
        assert!((h - z * z).abs() < 1e-9);
    }

    #[test]
    fn dunn_properties() {
        let same = dunn_posthoc(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert!(same.p_adjusted.iter().flatten().all(|&p| p == 1.0));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let groups: Vec<Vec<f64>> = (0..4)
            .map(|g| (0..6).map(|_| rng.random_range(0..5) as f64 + g as f64 * 0.5).collect())
            .collect();
        let d = dunn_posthoc(&groups).unwrap();
        assert_eq!(d.comparisons, 6);
        for i in 0..4 {
            for j in 0..4 {
                assert!(d.p_adjusted[i][j] >= d.p_raw[i][j]);
                assert!(d.p_adjusted[i][j] <= 1.0);
                assert_eq!(d.p_adjusted[i][j], (d.p_raw[i][j] * 6.0).min(1.0));
                assert_eq!(d.z[i][j], -d.z[j][i]);
            }
        }
    }

    #[test]
    fn spearman_examples() {
        let up = spearman(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 8.0, 16.0]).unwrap();
        assert_eq!(up.statistic, 1.0);
        let down = spearman(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]).unwrap();
        assert_eq!(down.statistic, -1.0);
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r.statistic - 0.8).abs() < 1e-12);
        // permutations of 4 with |rho| >= 0.8: identity, reversal and the
        // four single adjacent swaps at the ends or their reversals
        assert!((r.p_value - 8.0 / 24.0).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(StatsError::ZeroVariance));
        assert!(matches!(spearman(&[1.0, 2.0], &[1.0, 2.0]), Err(StatsError::TooShort { .. })));
    }

    #[test]
    fn spearman_large_sample_uses_t() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| (v * 0.7).sin() + v * 0.05).collect();
        let r = spearman(&x, &y).unwrap();
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
        let t = spearman(&x, &x.iter().map(|v| -v.powi(3)).collect::<Vec<_>>()).unwrap();
        assert_eq!((t.statistic, t.p_value), (-1.0, 0.0));
    }

    #[test]
    fn mann_whitney_examples() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 0.1).abs() < 1e-12);
        let same = mann_whitney_u(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(same.p_value >= 0.99);
        let less = mann_whitney_u_with(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], Alternative::Less).unwrap();
        assert!((less.p_value - 0.05).abs() < 1e-12);
        let greater = mann_whitney_u_with(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], Alternative::Greater).unwrap();
        assert_eq!(greater.p_value, 1.0);
    }

    #[test]
    fn mann_whitney_normal_regime() {
        let a: Vec<f64> = (0..12).map(f64::from).collect();
        let b: Vec<f64> = (0..12).map(|v| f64::from(v) + 6.0).collect();
        let two = mann_whitney_u(&a, &b).unwrap();
        let less = mann_whitney_u_with(&a, &b, Alternative::Less).unwrap();
        assert!(less.p_value < two.p_value);
        assert!((2.0 * less.p_value - two.p_value).abs() < 1e-12);
    }

    #[test]
    fn rank_tests_ignore_monotone_transforms() {
        let a = [0.3, 1.7, 2.2, 0.9, 4.1];
        let b = [1.1, 3.3, 5.5, 2.8];
        let f = |v: &f64| v.exp() * 3.0 - 1.0;
        let ta: Vec<f64> = a.iter().map(f).collect();
        let tb: Vec<f64> = b.iter().map(f).collect();
        assert_eq!(mann_whitney_u(&a, &b).unwrap(), mann_whitney_u(&ta, &tb).unwrap());
        assert_eq!(kruskal_wallis(&[&a[..], &b[..]]).unwrap(), kruskal_wallis(&[&ta[..], &tb[..]]).unwrap());
        assert_eq!(spearman(&a[..4], &b).unwrap(), spearman(&ta[..4], &tb).unwrap());
    }

    fn synthetic(seed: u64, b: f64) -> (Vec<u32>, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Vec::new();
        let mut m = Vec::new();
        let mut y = Vec::new();
        for level in 1..=4u32 {
            for _ in 0..20 {
                let e1: f64 = StandardNormal.sample(&mut rng);
                let e2: f64 = StandardNormal.sample(&mut rng);
                let mi = -2.0 * (level - 1) as f64 + e1;
                s.push(level);
                m.push(mi);
                y.push(b * mi + e2);
            }
        }
        (s, m, y)
    }

    #[test]
    fn mediation_recovers_planted_paths() {
        let (s, m, y) = synthetic(11, 10.0);
        let r = bootstrap_mediation(&s, &m, &y, 500, 4).unwrap();
        assert_eq!(r.levels, vec![1, 2, 3, 4]);
        assert_eq!(r.a_paths.len(), 3);
        for (j, a) in r.a_paths.iter().enumerate() {
            assert!((a + 2.0 * (j + 1) as f64).abs() < 1.0, "{a}");
        }
        assert!((r.b_path - 10.0).abs() < 0.5);
        assert!((r.indirect_ab - r.ab_levels.iter().sum::<f64>()).abs() < 1e-9);
        assert!(r.ci_low <= r.indirect_ab && r.indirect_ab <= r.ci_high);
        assert_eq!(r, bootstrap_mediation(&s, &m, &y, 500, 4).unwrap());
    }

    #[test]
    fn mediation_null_b_path() {
        // 95% intervals: nearly every replicate should straddle zero
        let covered = (0..20)
            .filter(|&rep| {
                let (s, m, _) = synthetic(100 + rep, 0.0);
                let mut rng = ChaCha8Rng::seed_from_u64(rep);
                let y: Vec<f64> = (0..m.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
                let r = bootstrap_mediation(&s, &m, &y, 400, rep).unwrap();
                r.ci_low < 0.0 && r.ci_high > 0.0
            })
            .count();
        assert!(covered >= 17, "{covered}");
    }

    #[test]
    fn mediation_errors() {
        assert_eq!(
            bootstrap_mediation(&[1, 1], &[1.0, 2.0], &[1.0, 2.0], 10, 0),
            Err(StatsError::TooFewGroups(2))
        );
        // mediator collinear with the season dummies
        assert_eq!(
            bootstrap_mediation(&[1, 1, 2, 2], &[0.0, 0.0, 1.0, 1.0], &[1.0, 2.0, 3.0, 4.0], 10, 0),
            Err(StatsError::RankDeficient)
        );
    }
}
