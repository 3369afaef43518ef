//! Synthetic dataset generation with controlled skewness, column
//! correlation, and join correlation.
//!
//! Columns are drawn from a bounded Pareto-family density over [0, 1],
//! discretized onto the integer domain. Column correlation is injected by
//! copying values across adjacent columns with a given probability, and join
//! correlation by populating FK columns from a fixed-size subset of the
//! referenced PK column.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ColumnData, Dataset, JoinEdge, Table};
use crate::error::{Error, Result};

/// Number of grid cells used to normalize the skew density numerically.
const CDF_GRID: usize = 4096;
/// Skew values at or above this are clamped: the density develops a
/// non-integrable pole at skew = 1.
const MAX_SKEW: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub n_tables: usize,
    /// Inclusive [min, max] row count per table.
    pub rows_range: (usize, usize),
    /// Inclusive [min, max] non-key column count per table.
    pub cols_range: (usize, usize),
    pub domain_size: u64,
    /// Skewness is drawn per column from this sub-range of [0, 1].
    pub skew_range: (f64, f64),
    /// Adjacent-column equality probability drawn from this sub-range of [0, 1].
    pub corr_range: (f64, f64),
    /// Join correlation p drawn from this sub-range of (0, 1].
    pub join_corr_range: (f64, f64),
    pub n_main_tables: usize,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            n_tables: 3,
            rows_range: (1000, 3000),
            cols_range: (2, 4),
            domain_size: 1000,
            skew_range: (0.0, 0.9),
            corr_range: (0.0, 0.8),
            join_corr_range: (0.2, 1.0),
            n_main_tables: 1,
            seed: 0,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        fn ordered(name: &'static str, lo: f64, hi: f64, min: f64, max: f64) -> Result<()> {
            if lo > hi || lo < min || hi > max {
                return Err(Error::InvalidParam {
                    name,
                    detail: format!("[{lo}, {hi}] must be ordered and within [{min}, {max}]"),
                });
            }
            Ok(())
        }
        if self.n_tables < 1 {
            return Err(Error::InvalidParam {
                name: "n_tables",
                detail: "must be >= 1".into(),
            });
        }
        if self.rows_range.0 > self.rows_range.1 {
            return Err(Error::InvalidParam {
                name: "rows_range",
                detail: "empty range".into(),
            });
        }
        if self.cols_range.0 > self.cols_range.1 || self.cols_range.0 < 1 {
            return Err(Error::InvalidParam {
                name: "cols_range",
                detail: "must be a nonempty range with min >= 1".into(),
            });
        }
        if self.domain_size < 2 {
            return Err(Error::InvalidParam {
                name: "domain_size",
                detail: "must be >= 2".into(),
            });
        }
        ordered("skew_range", self.skew_range.0, self.skew_range.1, 0.0, 1.0)?;
        ordered("corr_range", self.corr_range.0, self.corr_range.1, 0.0, 1.0)?;
        ordered(
            "join_corr_range",
            self.join_corr_range.0,
            self.join_corr_range.1,
            f64::MIN_POSITIVE,
            1.0,
        )?;
        if self.n_main_tables < 1 || self.n_main_tables > self.n_tables {
            return Err(Error::InvalidParam {
                name: "n_main_tables",
                detail: format!("must be in [1, n_tables={}]", self.n_tables),
            });
        }
        Ok(())
    }

    /// RNG for the `index`-th dataset generated from these parameters. Each
    /// dataset gets an independent stream, so corpus generation can fan out.
    pub fn rng_for(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

/// Inverse-CDF sampler for the bounded Pareto-family density
/// `f(x) = (1 - skew * x)^(-1 - 1/skew)` on [0, 1], normalized numerically
/// over a fixed grid.
///
/// The printed form of this density uses the substitution `skew - 1` in both
/// base and exponent, which makes concentration *decrease* as the parameter
/// grows and diverges at 0; that contradicts its own advertised behavior
/// (uniform at 0, more skewed as the parameter grows). We keep the family
/// but orient the parameter so concentration at the top of the domain is
/// monotone increasing in `skew`. `skew = 0` is exactly uniform by special
/// case.
pub struct SkewSampler {
    /// Cumulative mass at the right edge of each grid cell, normalized to 1.
    cdf: Vec<f64>,
    uniform: bool,
}

impl SkewSampler {
    pub fn new(skew: f64) -> Self {
        assert!((0.0..=1.0).contains(&skew), "skew must be in [0,1]");
        if skew == 0.0 {
            return SkewSampler {
                cdf: Vec::new(),
                uniform: true,
            };
        }
        let s = skew.min(MAX_SKEW);
        let expo = -1.0 - 1.0 / s;
        let mut cdf = Vec::with_capacity(CDF_GRID);
        let mut acc = 0.0;
        for i in 0..CDF_GRID {
            let x = (i as f64 + 0.5) / CDF_GRID as f64;
            acc += (1.0 - s * x).powf(expo);
            cdf.push(acc);
        }
        let total = acc;
        for v in &mut cdf {
            *v /= total;
        }
        SkewSampler {
            cdf,
            uniform: false,
        }
    }

    /// Draw one value from the integer domain [1, domain].
    pub fn sample(&self, domain: u64, rng: &mut impl Rng) -> u64 {
        if self.uniform {
            return rng.gen_range(1..=domain);
        }
        let u: f64 = rng.gen();
        let cell = self.cdf.partition_point(|&c| c < u);
        let cell = cell.min(CDF_GRID - 1);
        let lo = if cell == 0 { 0.0 } else { self.cdf[cell - 1] };
        let hi = self.cdf[cell];
        let frac = if hi > lo { (u - lo) / (hi - lo) } else { 0.5 };
        let x = (cell as f64 + frac) / CDF_GRID as f64;
        let v = 1 + (x * domain as f64) as u64;
        v.min(domain)
    }
}

/// Sample a column of `rows` values over [1, domain] with the given skew.
pub fn sample_skewed_column(
    rows: usize,
    domain: u64,
    skew: f64,
    rng: &mut impl Rng,
) -> ColumnData {
    assert!(domain >= 2, "domain must be >= 2");
    let sampler = SkewSampler::new(skew);
    let values = (0..rows).map(|_| sampler.sample(domain, rng)).collect();
    ColumnData::new("", values)
}

/// Return b' where, independently per row, b'[i] = a[i] with probability `r`
/// and b[i] otherwise. Keeps b's name.
pub fn inject_column_correlation(
    a: &ColumnData,
    b: &ColumnData,
    r: f64,
    rng: &mut impl Rng,
) -> Result<ColumnData> {
    if a.values.len() != b.values.len() {
        return Err(Error::DimMismatch {
            expected: a.values.len(),
            actual: b.values.len(),
            context: "inject_column_correlation",
        });
    }
    let values = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(&av, &bv)| if rng.gen::<f64>() < r { av } else { bv })
        .collect();
    Ok(ColumnData {
        name: b.name.clone(),
        values,
        dict: None,
    })
}

fn gen_table(name: &str, params: &GenParams, rng: &mut impl Rng) -> Table {
    let rows = rng.gen_range(params.rows_range.0..=params.rows_range.1);
    let cols = rng.gen_range(params.cols_range.0..=params.cols_range.1);
    let mut columns: Vec<ColumnData> = (0..cols)
        .map(|i| {
            let skew = rng.gen_range(params.skew_range.0..=params.skew_range.1);
            let mut c = sample_skewed_column(rows, params.domain_size, skew, rng);
            c.name = format!("c{i}");
            c
        })
        .collect();
    for i in 1..columns.len() {
        let r = rng.gen_range(params.corr_range.0..=params.corr_range.1);
        let merged = inject_column_correlation(&columns[i - 1], &columns[i], r, rng)
            .expect("adjacent columns share the row count");
        columns[i] = merged;
    }
    Table::new(name, columns)
}

/// Generate a single table (no keys, no joins).
pub fn gen_single_table(params: &GenParams, rng: &mut impl Rng) -> Table {
    gen_table("t0", params, rng)
}

/// Populate FK values referencing `pk_values`: take `ceil(p * |PK|)`
/// distinct PK values without replacement, then sample uniformly from that
/// subset.
pub fn sample_fk_values(pk_values: &[u64], p: f64, rows: usize, rng: &mut impl Rng) -> Vec<u64> {
    let take = ((p * pk_values.len() as f64).ceil() as usize).clamp(1, pk_values.len());
    let subset: Vec<u64> = rand::seq::index::sample(rng, pk_values.len(), take)
        .into_iter()
        .map(|i| pk_values[i])
        .collect();
    (0..rows)
        .map(|_| subset[rng.gen_range(0..subset.len())])
        .collect()
}

fn gen_fk_column(
    name: &str,
    rows: usize,
    pk_values: &[u64],
    p: f64,
    rng: &mut impl Rng,
) -> ColumnData {
    ColumnData::new(name, sample_fk_values(pk_values, p, rows, rng))
}

fn add_join(
    tables: &mut [Table],
    joins: &mut Vec<JoinEdge>,
    from: usize,
    to_main: usize,
    params: &GenParams,
    rng: &mut impl Rng,
) {
    let p = rng.gen_range(params.join_corr_range.0..=params.join_corr_range.1);
    let pk_values: Vec<u64> = tables[to_main]
        .column("id")
        .expect("main tables carry an id column")
        .values
        .clone();
    let fk_name = format!("fk_{}", tables[to_main].name);
    let rows = tables[from].row_count();
    let fk = gen_fk_column(&fk_name, rows, &pk_values, p, rng);
    joins.push(JoinEdge {
        pk_table: tables[to_main].name.clone(),
        pk_column: "id".into(),
        fk_table: tables[from].name.clone(),
        fk_column: fk_name,
    });
    tables[from].columns.push(fk);
}

/// Generate a multi-table dataset with PK-FK joins.
///
/// Main tables are the first `n_main_tables` indices after a seeded shuffle;
/// each gets a sequential-ID PK column. Every non-main table references one
/// uniformly chosen main table, and each main table additionally references
/// another main table with probability 0.5.
pub fn gen_multi_table(id: &str, params: &GenParams, rng: &mut impl Rng) -> Result<Dataset> {
    params.validate()?;
    let n = params.n_tables;
    let mut tables: Vec<Table> = (0..n)
        .map(|i| gen_table(&format!("t{i}"), params, rng))
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_main = params.n_main_tables.min(n);
    let mains: Vec<usize> = order[..n_main].to_vec();

    for &mi in &mains {
        let rows = tables[mi].row_count();
        let pk = ColumnData::new("id", (0..rows as u64).collect());
        tables[mi].columns.push(pk);
        tables[mi].pk = Some("id".into());
    }

    let mut joins = Vec::new();
    if n > 1 {
        for i in 0..n {
            if mains.contains(&i) {
                continue;
            }
            let target = mains[rng.gen_range(0..mains.len())];
            add_join(&mut tables, &mut joins, i, target, params, rng);
        }
        if mains.len() > 1 {
            for pos in 0..mains.len() {
                if rng.gen::<f64>() < 0.5 {
                    let others: Vec<usize> = mains
                        .iter()
                        .copied()
                        .filter(|&m| m != mains[pos])
                        .collect();
                    let target = others[rng.gen_range(0..others.len())];
                    add_join(&mut tables, &mut joins, mains[pos], target, params, rng);
                }
            }
        }
    }

    Ok(Dataset {
        id: id.to_string(),
        tables,
        joins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::validate;
    use std::collections::{HashMap, HashSet};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn skew_zero_is_uniform_within_20_percent() {
        let mut r = rng(1);
        let col = sample_skewed_column(100_000, 100, 0.0, &mut r);
        let mut freq = HashMap::new();
        for v in &col.values {
            *freq.entry(*v).or_insert(0usize) += 1;
        }
        assert_eq!(freq.len(), 100);
        for (&v, &n) in &freq {
            assert!(
                (800..=1200).contains(&n),
                "value {v} frequency {n} outside [800, 1200]"
            );
        }
    }

    #[test]
    fn higher_skew_concentrates_more() {
        // Monte-Carlo oracle: 100k draws per skew, compare modal frequencies.
        let modal = |skew: f64| {
            let mut r = rng(7);
            let col = sample_skewed_column(100_000, 100, skew, &mut r);
            let mut freq = HashMap::new();
            for v in &col.values {
                *freq.entry(*v).or_insert(0usize) += 1;
            }
            freq.values().copied().max().unwrap()
        };
        let low = modal(0.1);
        let high = modal(0.9);
        assert!(
            high > low,
            "modal frequency at skew=0.9 ({high}) must exceed skew=0.1 ({low})"
        );
    }

    #[test]
    fn zero_rows_gives_empty_column() {
        let mut r = rng(2);
        let col = sample_skewed_column(0, 10, 0.5, &mut r);
        assert!(col.values.is_empty());
    }

    #[test]
    fn correlation_extremes() {
        let mut r = rng(3);
        let a = ColumnData::new("a", vec![1, 2, 3, 4, 5]);
        let b = ColumnData::new("b", vec![9, 8, 7, 6, 5]);
        let b0 = inject_column_correlation(&a, &b, 0.0, &mut r).unwrap();
        assert_eq!(b0.values, b.values);
        let b1 = inject_column_correlation(&a, &b, 1.0, &mut r).unwrap();
        assert_eq!(b1.values, a.values);
    }

    #[test]
    fn correlation_half_concentrates() {
        // Disjoint domains so equality only arises from injection.
        let mut r = rng(4);
        let n = 10_000;
        let a = ColumnData::new("a", vec![1; n]);
        let b = ColumnData::new("b", vec![2; n]);
        let b2 = inject_column_correlation(&a, &b, 0.5, &mut r).unwrap();
        let eq = b2.values.iter().filter(|&&v| v == 1).count() as f64 / n as f64;
        assert!((0.45..=0.55).contains(&eq), "equality fraction {eq}");
    }

    #[test]
    fn correlation_recovered_within_5_points() {
        for &target in &[0.25, 0.5, 0.75] {
            let mut r = rng(5);
            let n = 10_000;
            let a = ColumnData::new("a", vec![1; n]);
            let b = ColumnData::new("b", vec![2; n]);
            let b2 = inject_column_correlation(&a, &b, target, &mut r).unwrap();
            let eq = b2.values.iter().filter(|&&v| v == 1).count() as f64 / n as f64;
            assert!(
                (eq - target).abs() <= 0.05,
                "target {target}, measured {eq}"
            );
        }
    }

    #[test]
    fn correlation_rejects_length_mismatch() {
        let mut r = rng(6);
        let a = ColumnData::new("a", vec![1, 2]);
        let b = ColumnData::new("b", vec![1]);
        assert!(inject_column_correlation(&a, &b, 0.5, &mut r).is_err());
    }

    #[test]
    fn single_table_structure() {
        let params = GenParams {
            cols_range: (3, 3),
            rows_range: (100, 100),
            ..GenParams::default()
        };
        let mut r = rng(8);
        let t = gen_single_table(&params, &mut r);
        assert_eq!(t.columns.len(), 3);
        assert_eq!(t.row_count(), 100);
        assert!(t.pk.is_none());
    }

    #[test]
    fn single_table_deterministic() {
        let params = GenParams::default();
        let t1 = gen_single_table(&params, &mut rng(9));
        let t2 = gen_single_table(&params, &mut rng(9));
        assert_eq!(t1, t2);
    }

    #[test]
    fn multi_table_deterministic_and_valid() {
        let params = GenParams {
            n_tables: 4,
            n_main_tables: 2,
            ..GenParams::default()
        };
        let d1 = gen_multi_table("d0", &params, &mut params.rng_for(0)).unwrap();
        let d2 = gen_multi_table("d0", &params, &mut params.rng_for(0)).unwrap();
        assert_eq!(d1, d2);
        assert!(validate(&d1).is_empty(), "{:?}", validate(&d1));
        // every non-main table carries at least one FK edge
        assert!(d1.joins.len() >= 2);
    }

    #[test]
    fn single_table_dataset_has_no_joins() {
        let params = GenParams {
            n_tables: 1,
            ..GenParams::default()
        };
        let d = gen_multi_table("d0", &params, &mut params.rng_for(0)).unwrap();
        assert!(d.joins.is_empty());
        assert_eq!(d.tables.len(), 1);
    }

    #[test]
    fn join_correlation_recovered_within_5_points() {
        // FK rows must dominate the PK subset size for distinct coverage.
        for &p in &[0.2, 0.5, 0.8] {
            let mut r = rng(11);
            let pk_values: Vec<u64> = (0..1000).collect();
            let fk = gen_fk_column("fk", 10_000, &pk_values, p, &mut r);
            let distinct_fk: HashSet<_> = fk.values.iter().collect();
            let measured = distinct_fk.len() as f64 / pk_values.len() as f64;
            assert!(
                (measured - p).abs() <= 0.05,
                "p={p}, measured={measured}"
            );
            assert!(measured <= 1.0);
        }
    }

    #[test]
    fn fk_ratio_never_exceeds_one() {
        let mut r = rng(12);
        let pk_values: Vec<u64> = (0..100).collect();
        let fk = gen_fk_column("fk", 10_000, &pk_values, 1.0, &mut r);
        let distinct_fk: HashSet<_> = fk.values.iter().collect();
        assert!(distinct_fk.len() <= pk_values.len());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        #[test]
        fn generated_datasets_always_valid(
            seed in 0u64..1000,
            n_tables in 1usize..5,
            n_main in 1usize..3,
        ) {
            let params = GenParams {
                n_tables,
                n_main_tables: n_main.min(n_tables),
                rows_range: (50, 120),
                cols_range: (1, 3),
                domain_size: 50,
                seed,
                ..GenParams::default()
            };
            let d = gen_multi_table("p", &params, &mut params.rng_for(0)).unwrap();
            proptest::prop_assert!(validate(&d).is_empty());
        }
    }
}
