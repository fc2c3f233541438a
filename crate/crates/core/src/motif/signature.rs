use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ActivityLabel, Digraph, MotifKind};

/// Permutation search guard: larger graphs only get a size bucket.
pub const MAX_SIGNATURE_NODES: usize = 12;

/// Permutation-minimal encoding of a network.
///
/// The text form is `n|bits` for LBM and `n|labels|bits` for ABM, where
/// `bits` is the row-major adjacency matrix as `0`/`1` characters and
/// `labels` the dot-separated label sequence in canonical node order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CanonicalSignature {
    pub kind: MotifKind,
    pub node_count: usize,
    pub signature: String,
}

impl fmt::Display for CanonicalSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.signature)
    }
}

impl CanonicalSignature {
    fn bits(&self) -> &str {
        self.signature.rsplit('|').next().unwrap_or("")
    }

    /// Edges of the canonical representative (node 0 is home when pinned).
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.node_count;
        self.bits()
            .bytes()
            .enumerate()
            .filter(|(_, b)| *b == b'1')
            .map(|(k, _)| (k / n, k % n))
            .collect()
    }

    /// Node labels in canonical order (ABM only).
    pub fn labels(&self) -> Option<Vec<ActivityLabel>> {
        match self.kind {
            MotifKind::Lbm => None,
            MotifKind::Abm => self
                .signature
                .split('|')
                .nth(1)
                .map(|s| s.split('.').filter_map(|l| l.parse().ok()).collect()),
        }
    }

    /// Compact name such as `H-W` for an ABM class: the label sequence.
    pub fn label_string(&self) -> Option<String> {
        self.labels()
            .map(|ls| ls.iter().map(|l| l.short()).collect::<Vec<_>>().join("-"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SignatureClass {
    Full(CanonicalSignature),
    /// Too many nodes for the permutation search.
    Oversize { node_count: usize },
}

/// Row-major adjacency bits, most significant first. 12 nodes need 144 bits.
type Encoding = [u64; 3];

fn encode(g: &Digraph, order: &[usize]) -> Encoding {
    let n = order.len();
    let mut enc = [0u64; 3];
    for (i, &a) in order.iter().enumerate() {
        let row = g.out_mask(a);
        for (j, &b) in order.iter().enumerate() {
            if row & (1 << b) != 0 {
                let k = i * n + j;
                enc[k / 64] |= 1 << (63 - (k % 64));
            }
        }
    }
    enc
}

/// Next lexicographic permutation in place; false when wrapped around.
fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        v.reverse();
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Visits every order obtained by permuting within each group
/// independently; groups occupy consecutive positions after `prefix`.
fn for_each_order(prefix: &[usize], groups: &mut [Vec<usize>], visit: &mut impl FnMut(&[usize])) {
    fn rec(order: &mut Vec<usize>, groups: &mut [Vec<usize>], g: usize, visit: &mut impl FnMut(&[usize])) {
        if g == groups.len() {
            visit(order);
            return;
        }
        groups[g].sort_unstable();
        loop {
            let len = order.len();
            order.extend_from_slice(&groups[g]);
            rec(order, groups, g + 1, visit);
            order.truncate(len);
            if !next_permutation(&mut groups[g]) {
                break;
            }
        }
    }
    let mut order = prefix.to_vec();
    rec(&mut order, groups, 0, visit);
}

/// Canonical signature of `g` under the admissible mappings of `kind`:
/// with `pin_home` the home node is fixed at position 0; for ABM only
/// label-preserving permutations are considered.
pub fn canonical_signature(g: &Digraph, kind: MotifKind, pin_home: bool) -> SignatureClass {
    let n = g.node_count();
    if n > MAX_SIGNATURE_NODES {
        return SignatureClass::Oversize { node_count: n };
    }

    let prefix: Vec<usize> = if pin_home { vec![g.home()] } else { Vec::new() };
    let mut rest: Vec<usize> = (0..n).filter(|v| !pin_home || *v != g.home()).collect();
    let mut groups: Vec<Vec<usize>> = match kind {
        MotifKind::Lbm => vec![rest],
        MotifKind::Abm => {
            // sorting by label fixes the canonical label sequence; only
            // within-label permutations remain
            rest.sort_by_key(|v| (g.label(*v), *v));
            let mut groups: Vec<Vec<usize>> = Vec::new();
            for v in rest {
                match groups.last_mut() {
                    Some(last) if g.label(last[0]) == g.label(v) => last.push(v),
                    _ => groups.push(vec![v]),
                }
            }
            groups
        }
    };

    let mut best: Option<(Encoding, Vec<usize>)> = None;
    for_each_order(&prefix, &mut groups, &mut |order| {
        let enc = encode(g, order);
        if best.as_ref().is_none_or(|(b, _)| enc < *b) {
            best = Some((enc, order.to_vec()));
        }
    });
    let (enc, order) = best.expect("at least one ordering");

    let bits: String = (0..n * n)
        .map(|k| if enc[k / 64] & (1 << (63 - (k % 64))) != 0 { '1' } else { '0' })
        .collect();
    let signature = match kind {
        MotifKind::Lbm => format!("{n}|{bits}"),
        MotifKind::Abm => {
            let labels: Vec<&str> = order.iter().map(|v| g.label(*v).short()).collect();
            format!("{n}|{}|{bits}", labels.join("."))
        }
    };
    SignatureClass::Full(CanonicalSignature {
        kind,
        node_count: n,
        signature,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ActivityLabel::*;

    fn sig(g: &Digraph, kind: MotifKind) -> CanonicalSignature {
        match canonical_signature(g, kind, true) {
            SignatureClass::Full(s) => s,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn relabelled_two_cycles_match() {
        let a = Digraph::new(2, 0, [(0, 1), (1, 0)]);
        let b = Digraph::new(2, 1, [(1, 0), (0, 1)]);
        assert_eq!(sig(&a, MotifKind::Lbm), sig(&b, MotifKind::Lbm));
        assert_eq!(sig(&a, MotifKind::Lbm).signature, "2|0110");
    }

    #[test]
    fn triangle_and_reverse_match() {
        let fwd = Digraph::new(3, 0, [(0, 1), (1, 2), (2, 0)]);
        let rev = Digraph::new(3, 0, [(0, 2), (2, 1), (1, 0)]);
        assert_eq!(sig(&fwd, MotifKind::Lbm), sig(&rev, MotifKind::Lbm));
    }

    #[test]
    fn labels_distinguish_abm() {
        let hw = Digraph::with_labels(vec![Home, Work], 0, [(0, 1), (1, 0)]);
        let hs = Digraph::with_labels(vec![Home, School], 0, [(0, 1), (1, 0)]);
        assert_ne!(sig(&hw, MotifKind::Abm), sig(&hs, MotifKind::Abm));
        assert_eq!(sig(&hw, MotifKind::Lbm), sig(&hs, MotifKind::Lbm));
        assert_eq!(sig(&hw, MotifKind::Abm).signature, "2|H.W|0110");
        assert_eq!(sig(&hw, MotifKind::Abm).label_string().as_deref(), Some("H-W"));
    }

    #[test]
    fn pinning_home_matters() {
        // home -> a -> b -> a -> home  vs  home at the middle of a chain
        let chain_from_end = Digraph::new(3, 0, [(0, 1), (1, 0), (1, 2), (2, 1)]);
        let chain_from_mid = Digraph::new(3, 1, [(0, 1), (1, 0), (1, 2), (2, 1)]);
        assert_ne!(sig(&chain_from_end, MotifKind::Lbm), sig(&chain_from_mid, MotifKind::Lbm));
        let unpinned = |g: &Digraph| canonical_signature(g, MotifKind::Lbm, false);
        assert_eq!(unpinned(&chain_from_end), unpinned(&chain_from_mid));
    }

    #[test]
    fn signature_edges_decode() {
        let g = Digraph::new(3, 2, [(2, 0), (0, 1), (1, 2)]);
        let s = sig(&g, MotifKind::Lbm);
        let decoded = Digraph::new(3, 0, s.edges());
        assert_eq!(sig(&decoded, MotifKind::Lbm), s);
    }

    #[test]
    fn oversize_guard() {
        let n = MAX_SIGNATURE_NODES + 1;
        let g = Digraph::new(n, 0, (0..n).map(|i| (i, (i + 1) % n)));
        assert_eq!(canonical_signature(&g, MotifKind::Lbm, true), SignatureClass::Oversize { node_count: n });
    }

    #[test]
    fn permutation_enumeration_counts() {
        let mut count = 0;
        let mut groups = vec![vec![3, 1, 2], vec![5, 4]];
        for_each_order(&[0], &mut groups, &mut |o| {
            assert_eq!(o[0], 0);
            count += 1;
        });
        assert_eq!(count, 12);
    }
}
