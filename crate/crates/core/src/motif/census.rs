use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{canonical_signature, CanonicalSignature, Digraph, MotifKind, SignatureClass};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensusConfig {
    /// A class is a motif when `count / total` strictly exceeds this.
    pub cutoff: f64,
    /// Networks with more nodes only count towards the oversize group.
    pub max_nodes: usize,
    pub pin_home: bool,
}

impl Default for CensusConfig {
    fn default() -> Self {
        Self {
            cutoff: 0.005,
            max_nodes: 6,
            pin_home: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusEntry {
    pub signature: CanonicalSignature,
    pub count: usize,
    pub percentage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeGroup {
    /// `"1"` .. `"6"`, or `"7+"` for the oversize bucket.
    pub label: String,
    pub count: usize,
    pub percentage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotifCensus {
    pub kind: MotifKind,
    pub total: usize,
    pub one_node_count: usize,
    pub cutoff: f64,
    /// Every multi-node class up to `max_nodes`, by count descending then
    /// signature.
    pub classes: Vec<CensusEntry>,
    pub size_groups: Vec<SizeGroup>,
}

fn pct(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

impl MotifCensus {
    pub fn one_node_percentage(&self) -> f64 {
        pct(self.one_node_count, self.total)
    }

    /// Classes above the frequency cutoff, in rank order.
    pub fn motifs(&self) -> impl Iterator<Item = &CensusEntry> {
        let (total, cutoff) = (self.total, self.cutoff);
        self.classes
            .iter()
            .filter(move |e| total > 0 && (e.count as f64 / total as f64) > cutoff)
    }

    /// Share of all networks covered by the motifs (one-node excluded).
    pub fn motif_coverage(&self) -> f64 {
        pct(self.motifs().map(|e| e.count).sum(), self.total)
    }

    pub fn class_percentage(&self, signature: &str) -> f64 {
        self.classes
            .iter()
            .find(|e| e.signature.signature == signature)
            .map_or(0.0, |e| e.percentage)
    }
}

/// Census over one view of the daily networks. The denominator counts every
/// network passed in, including one-node and oversize networks.
pub fn motif_census(graphs: &[Digraph], kind: MotifKind, cfg: &CensusConfig) -> MotifCensus {
    let total = graphs.len();
    let classes: Vec<Option<SignatureClass>> = graphs
        .par_iter()
        .map(|g| {
            let n = g.node_count();
            (n > 1 && n <= cfg.max_nodes).then(|| canonical_signature(g, kind, cfg.pin_home))
        })
        .collect();

    let mut by_size: BTreeMap<usize, usize> = BTreeMap::new();
    let mut oversize = 0usize;
    for g in graphs {
        let n = g.node_count();
        if n > cfg.max_nodes {
            oversize += 1;
        } else {
            *by_size.entry(n).or_default() += 1;
        }
    }

    let mut counts: BTreeMap<CanonicalSignature, usize> = BTreeMap::new();
    for class in classes.into_iter().flatten() {
        if let SignatureClass::Full(sig) = class {
            *counts.entry(sig).or_default() += 1;
        }
    }
    let mut classes: Vec<CensusEntry> = counts
        .into_iter()
        .map(|(signature, count)| CensusEntry {
            signature,
            count,
            percentage: pct(count, total),
        })
        .collect();
    classes.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.signature.cmp(&b.signature)));

    let mut size_groups: Vec<SizeGroup> = (1..=cfg.max_nodes)
        .map(|n| {
            let count = by_size.get(&n).copied().unwrap_or(0);
            SizeGroup {
                label: n.to_string(),
                count,
                percentage: pct(count, total),
            }
        })
        .collect();
    size_groups.push(SizeGroup {
        label: format!("{}+", cfg.max_nodes + 1),
        count: oversize,
        percentage: pct(oversize, total),
    });

    MotifCensus {
        kind,
        total,
        one_node_count: by_size.get(&1).copied().unwrap_or(0),
        cutoff: cfg.cutoff,
        classes,
        size_groups,
    }
}
