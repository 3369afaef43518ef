//! Chain-factorized estimator: joint histograms over adjacent column pairs
//! give conditional selectivities, multiplied along the column chain.
//!
//! `P(c0..cn) ~ P(c0) * prod_i P(c_i | c_{i-1})`, with conditionals read off
//! 2D histograms. This captures exactly the adjacent-pair correlation the
//! generator injects. Joins fall back to distinct-count containment.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::workload::Query;

use super::hist::{EquiDepthHist, JointHist};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainBayesModel {
    pub tables: BTreeMap<String, ChainTable>,
    pub buckets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTable {
    pub rows: u64,
    /// Column order as stored in the table; chain links follow it.
    pub column_order: Vec<String>,
    pub marginals: BTreeMap<String, EquiDepthHist>,
    /// joint histogram per adjacent pair (column i, column i+1)
    pub pairs: Vec<JointHist>,
}

pub fn train(d: &Dataset, buckets: usize) -> ChainBayesModel {
    let tables = d
        .tables
        .iter()
        .map(|t| {
            let column_order: Vec<String> = t.columns.iter().map(|c| c.name.clone()).collect();
            let marginals = t
                .columns
                .iter()
                .map(|c| (c.name.clone(), EquiDepthHist::build(&c.values, buckets)))
                .collect();
            let pairs = t
                .columns
                .windows(2)
                .map(|w| JointHist::build(&w[0].values, &w[1].values, buckets))
                .collect();
            (
                t.name.clone(),
                ChainTable {
                    rows: t.row_count() as u64,
                    column_order,
                    marginals,
                    pairs,
                },
            )
        })
        .collect();
    ChainBayesModel { tables, buckets }
}

pub fn estimate(m: &ChainBayesModel, q: &Query) -> Result<(f64, u64)> {
    let mut cost = 0u64;
    let mut card = 1.0f64;
    for tname in &q.tables {
        let t = m.tables.get(tname).ok_or_else(|| Error::SchemaMismatch {
            detail: format!("unknown table '{tname}'"),
        })?;
        cost += 1;
        // predicate per column position, if any
        let mut pred: Vec<Option<(u64, u64)>> = vec![None; t.column_order.len()];
        for p in q.range_predicates.iter().filter(|p| &p.table == tname) {
            let idx = t
                .column_order
                .iter()
                .position(|c| c == &p.column)
                .ok_or_else(|| Error::SchemaMismatch {
                    detail: format!("unknown column {tname}.{}", p.column),
                })?;
            pred[idx] = Some((p.lo, p.hi));
        }
        let mut sel = 1.0;
        let mut prev_filtered: Option<usize> = None;
        for (i, range) in pred.iter().enumerate() {
            let Some((lo, hi)) = *range else { continue };
            match prev_filtered {
                // chain link only between consecutive filtered columns
                Some(j) if i == j + 1 => {
                    let joint = &t.pairs[j];
                    let (plo, phi) = pred[j].expect("prev filtered");
                    let (p_joint, c1) = joint.joint_selectivity(plo, phi, lo, hi);
                    let (p_prev, c2) = t.marginals[&t.column_order[j]].selectivity(plo, phi);
                    cost += c1 + c2;
                    if p_prev > 0.0 {
                        sel *= (p_joint / p_prev).min(1.0);
                    } else {
                        sel = 0.0;
                    }
                }
                _ => {
                    let (p, c) = t.marginals[&t.column_order[i]].selectivity(lo, hi);
                    cost += c;
                    sel *= p;
                }
            }
            prev_filtered = Some(i);
        }
        card *= t.rows as f64 * sel;
    }
    for j in &q.join_predicates {
        let pk = m
            .tables
            .get(&j.pk_table)
            .and_then(|t| t.marginals.get(&j.pk_column))
            .ok_or_else(|| Error::SchemaMismatch {
                detail: format!("unknown join column {}.{}", j.pk_table, j.pk_column),
            })?;
        let fk = m
            .tables
            .get(&j.fk_table)
            .and_then(|t| t.marginals.get(&j.fk_column))
            .ok_or_else(|| Error::SchemaMismatch {
                detail: format!("unknown join column {}.{}", j.fk_table, j.fk_column),
            })?;
        card /= pk.distinct.max(fk.distinct).max(1) as f64;
        cost += 2;
    }
    Ok((card.max(1.0), cost))
}
