//! Sampling estimator: evaluate the query exactly on a Bernoulli row sample
//! and scale the count up by the joint survival probability.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ColumnData, Dataset, Table};
use crate::error::Result;
use crate::workload::{exact_card, Query};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEvalModel {
    pub sample: Dataset,
    pub rate: f64,
}

pub fn train(d: &Dataset, rate: f64, seed: u64) -> SampleEvalModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tables = d
        .tables
        .iter()
        .map(|t| {
            let keep: Vec<usize> = (0..t.row_count())
                .filter(|_| rate >= 1.0 || rng.gen::<f64>() < rate)
                .collect();
            Table {
                name: t.name.clone(),
                columns: t
                    .columns
                    .iter()
                    .map(|c| ColumnData {
                        name: c.name.clone(),
                        values: keep.iter().map(|&i| c.values[i]).collect(),
                        dict: c.dict.clone(),
                    })
                    .collect(),
                pk: t.pk.clone(),
            }
        })
        .collect();
    SampleEvalModel {
        sample: Dataset {
            id: d.id.clone(),
            tables,
            joins: d.joins.clone(),
        },
        rate,
    }
}

pub fn estimate(m: &SampleEvalModel, q: &Query) -> Result<(f64, u64)> {
    let count = exact_card(&m.sample, q)? as f64;
    // An output tuple survives iff every constituent row was sampled.
    let scale = (1.0 / m.rate).powi(q.tables.len() as i32);
    let cost: u64 = q
        .tables
        .iter()
        .map(|t| m.sample.table(t).map_or(0, |t| t.row_count() as u64))
        .sum();
    Ok(((count * scale).max(1.0), cost.max(1)))
}
