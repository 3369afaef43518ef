//! Equi-depth histograms shared by the data-driven estimators.

use serde::{Deserialize, Serialize};

/// Equi-depth histogram over one integer column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquiDepthHist {
    /// (lo, hi, count) per bucket; buckets ordered, hi inclusive.
    pub buckets: Vec<(u64, u64, u64)>,
    pub total: u64,
    pub distinct: u64,
}

impl EquiDepthHist {
    pub fn build(values: &[u64], n_buckets: usize) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_unstable();
        let distinct = {
            let mut d = 0u64;
            let mut prev = None;
            for &v in &sorted {
                if prev != Some(v) {
                    d += 1;
                    prev = Some(v);
                }
            }
            d
        };
        let n = sorted.len();
        let b = n_buckets.max(1).min(n.max(1));
        let mut buckets = Vec::with_capacity(b);
        if n > 0 {
            for i in 0..b {
                let start = i * n / b;
                let end = ((i + 1) * n / b).max(start + 1).min(n);
                if start >= n {
                    break;
                }
                buckets.push((sorted[start], sorted[end - 1], (end - start) as u64));
            }
        }
        EquiDepthHist {
            buckets,
            total: n as u64,
            distinct,
        }
    }

    /// Estimated fraction of rows with value in [lo, hi]. Scans every bucket;
    /// the scan length is the deterministic lookup cost.
    pub fn selectivity(&self, lo: u64, hi: u64) -> (f64, u64) {
        if self.total == 0 {
            return (0.0, self.buckets.len() as u64);
        }
        let mut hit = 0.0;
        for &(blo, bhi, count) in &self.buckets {
            if bhi < lo || blo > hi {
                continue;
            }
            let olo = lo.max(blo);
            let ohi = hi.min(bhi);
            let width = (bhi - blo + 1) as f64;
            let overlap = (ohi - olo + 1) as f64;
            hit += count as f64 * (overlap / width).min(1.0);
        }
        ((hit / self.total as f64).clamp(0.0, 1.0), self.buckets.len() as u64)
    }
}

/// 2D joint histogram over an adjacent column pair, bucketed by each
/// column's own equi-depth boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointHist {
    pub a_bounds: Vec<(u64, u64)>,
    pub b_bounds: Vec<(u64, u64)>,
    /// counts[i * b_bounds.len() + j] = rows with a in bucket i, b in bucket j
    pub counts: Vec<u64>,
    pub total: u64,
}

impl JointHist {
    pub fn build(a: &[u64], b: &[u64], n_buckets: usize) -> Self {
        assert_eq!(a.len(), b.len());
        let ha = EquiDepthHist::build(a, n_buckets);
        let hb = EquiDepthHist::build(b, n_buckets);
        let a_bounds: Vec<(u64, u64)> = ha.buckets.iter().map(|&(l, h, _)| (l, h)).collect();
        let b_bounds: Vec<(u64, u64)> = hb.buckets.iter().map(|&(l, h, _)| (l, h)).collect();
        let mut counts = vec![0u64; a_bounds.len() * b_bounds.len()];
        for (&av, &bv) in a.iter().zip(b) {
            let i = bucket_of(&a_bounds, av);
            let j = bucket_of(&b_bounds, bv);
            counts[i * b_bounds.len() + j] += 1;
        }
        JointHist {
            a_bounds,
            b_bounds,
            counts,
            total: a.len() as u64,
        }
    }

    /// Estimated joint fraction P(a in [alo,ahi], b in [blo,bhi]), assuming
    /// uniform spread within each cell. Cost is the full cell scan.
    pub fn joint_selectivity(&self, alo: u64, ahi: u64, blo: u64, bhi: u64) -> (f64, u64) {
        let cells = self.counts.len() as u64;
        if self.total == 0 {
            return (0.0, cells);
        }
        let mut hit = 0.0;
        for (i, &(bl, bh)) in self.a_bounds.iter().enumerate() {
            let fa = overlap_fraction(bl, bh, alo, ahi);
            if fa == 0.0 {
                continue;
            }
            for (j, &(cl, ch)) in self.b_bounds.iter().enumerate() {
                let fb = overlap_fraction(cl, ch, blo, bhi);
                if fb == 0.0 {
                    continue;
                }
                hit += self.counts[i * self.b_bounds.len() + j] as f64 * fa * fb;
            }
        }
        ((hit / self.total as f64).clamp(0.0, 1.0), cells)
    }
}

fn bucket_of(bounds: &[(u64, u64)], v: u64) -> usize {
    // Equi-depth bounds can overlap on heavy values; first cover wins.
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if v >= lo && v <= hi {
            return i;
        }
    }
    if bounds.is_empty() {
        0
    } else if v < bounds[0].0 {
        0
    } else {
        bounds.len() - 1
    }
}

fn overlap_fraction(blo: u64, bhi: u64, lo: u64, hi: u64) -> f64 {
    if bhi < lo || blo > hi {
        return 0.0;
    }
    let olo = lo.max(blo);
    let ohi = hi.min(bhi);
    ((ohi - olo + 1) as f64 / (bhi - blo + 1) as f64).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equidepth_full_range_selectivity_is_one() {
        let vals: Vec<u64> = (1..=1000).collect();
        let h = EquiDepthHist::build(&vals, 64);
        assert!(h.buckets.len() <= 64);
        let (sel, cost) = h.selectivity(1, 1000);
        assert!((sel - 1.0).abs() < 1e-9);
        assert_eq!(cost, h.buckets.len() as u64);
        assert_eq!(h.distinct, 1000);
    }

    #[test]
    fn equidepth_half_range_on_uniform() {
        let vals: Vec<u64> = (0..10_000).map(|i| i % 100 + 1).collect();
        let h = EquiDepthHist::build(&vals, 64);
        let (sel, _) = h.selectivity(1, 50);
        assert!((sel - 0.5).abs() < 0.05, "sel {sel}");
    }

    #[test]
    fn joint_hist_counts_everything() {
        let a: Vec<u64> = (0..500).map(|i| i % 10).collect();
        let b: Vec<u64> = (0..500).map(|i| i % 7).collect();
        let j = JointHist::build(&a, &b, 8);
        assert_eq!(j.counts.iter().sum::<u64>(), 500);
        let (sel, _) = j.joint_selectivity(0, 9, 0, 6);
        assert!((sel - 1.0).abs() < 1e-9);
    }
}
