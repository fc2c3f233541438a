//! State-space isomorphism matcher in the style of VF2: nodes of the first
//! graph are matched in a connectivity-driven order, and each candidate pair
//! must agree on labels, degrees, adjacency to already-matched nodes and the
//! number of unmatched in/out neighbours.

use super::{Digraph, MotifKind};

struct State<'a> {
    g1: &'a Digraph,
    g2: &'a Digraph,
    kind: MotifKind,
    pin_home: bool,
    order: Vec<usize>,
    core1: Vec<Option<usize>>,
    core2: Vec<Option<usize>>,
    in1: Vec<u16>,
    in2: Vec<u16>,
    mapped1: u16,
    mapped2: u16,
}

impl<'a> State<'a> {
    fn feasible(&self, u: usize, v: usize) -> bool {
        let (g1, g2) = (self.g1, self.g2);
        if self.kind == MotifKind::Abm && g1.label(u) != g2.label(v) {
            return false;
        }
        if self.pin_home && ((u == g1.home()) != (v == g2.home())) {
            return false;
        }
        let (out_u, out_v) = (g1.out_mask(u), g2.out_mask(v));
        let (in_u, in_v) = (self.in1[u], self.in2[v]);
        if out_u.count_ones() != out_v.count_ones() || in_u.count_ones() != in_v.count_ones() {
            return false;
        }
        // adjacency with the matched core must correspond exactly
        let mut m = self.mapped1;
        while m != 0 {
            let u2 = m.trailing_zeros() as usize;
            m &= m - 1;
            let v2 = self.core1[u2].expect("mapped");
            if g1.has_edge(u, u2) != g2.has_edge(v, v2) || g1.has_edge(u2, u) != g2.has_edge(v2, v) {
                return false;
            }
        }
        // look-ahead: unmatched neighbourhoods have equal sizes
        (out_u & !self.mapped1).count_ones() == (out_v & !self.mapped2).count_ones()
            && (in_u & !self.mapped1).count_ones() == (in_v & !self.mapped2).count_ones()
    }

    fn search(&mut self, depth: usize) -> bool {
        if depth == self.order.len() {
            return true;
        }
        let u = self.order[depth];
        for v in 0..self.g2.node_count() {
            if self.core2[v].is_some() || !self.feasible(u, v) {
                continue;
            }
            self.core1[u] = Some(v);
            self.core2[v] = Some(u);
            self.mapped1 |= 1 << u;
            self.mapped2 |= 1 << v;
            if self.search(depth + 1) {
                return true;
            }
            self.core1[u] = None;
            self.core2[v] = None;
            self.mapped1 &= !(1 << u);
            self.mapped2 &= !(1 << v);
        }
        false
    }
}

/// Matching order: home first, then repeatedly the unordered node with the
/// most links into the ordered set.
fn match_order(g: &Digraph, in_masks: &[u16]) -> Vec<usize> {
    let n = g.node_count();
    let degree = |v: usize| (g.out_mask(v) | in_masks[v]).count_ones();
    let mut order = Vec::with_capacity(n);
    let mut placed: u16 = 0;
    let first = g.home();
    order.push(first);
    placed |= 1 << first;
    while order.len() < n {
        let next = (0..n)
            .filter(|v| placed & (1 << v) == 0)
            .max_by_key(|&v| {
                let links = ((g.out_mask(v) | in_masks[v]) & placed).count_ones();
                (links, degree(v), std::cmp::Reverse(v))
            })
            .expect("unplaced node");
        order.push(next);
        placed |= 1 << next;
    }
    order
}

/// True iff some bijection maps the edges of `g1` exactly onto those of
/// `g2`, fixing home when `pin_home` and preserving labels for ABM.
pub fn is_isomorphic(g1: &Digraph, g2: &Digraph, kind: MotifKind, pin_home: bool) -> bool {
    let n = g1.node_count();
    if n != g2.node_count() || g1.edge_count() != g2.edge_count() {
        return false;
    }
    if pin_home && kind == MotifKind::Abm && g1.label(g1.home()) != g2.label(g2.home()) {
        return false;
    }
    if kind == MotifKind::Abm {
        let mut l1 = g1.labels().to_vec();
        let mut l2 = g2.labels().to_vec();
        l1.sort();
        l2.sort();
        if l1 != l2 {
            return false;
        }
    }
    let in1: Vec<u16> = (0..n).map(|v| g1.in_mask(v)).collect();
    let in2: Vec<u16> = (0..n).map(|v| g2.in_mask(v)).collect();
    let degrees = |g: &Digraph, ins: &[u16]| {
        let mut d: Vec<(u32, u32)> = (0..n).map(|v| (g.out_mask(v).count_ones(), ins[v].count_ones())).collect();
        d.sort_unstable();
        d
    };
    if degrees(g1, &in1) != degrees(g2, &in2) {
        return false;
    }
    let order = match_order(g1, &in1);
    let mut state = State {
        g1,
        g2,
        kind,
        pin_home,
        order,
        core1: vec![None; n],
        core2: vec![None; n],
        in1,
        in2,
        mapped1: 0,
        mapped2: 0,
    };
    state.search(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motif::ActivityLabel::*;

    #[test]
    fn identity_and_cardinality() {
        let g = Digraph::new(3, 0, [(0, 1), (1, 2), (2, 0), (1, 0)]);
        assert!(is_isomorphic(&g, &g, MotifKind::Lbm, true));
        let two = Digraph::new(2, 0, [(0, 1), (1, 0)]);
        assert!(!is_isomorphic(&g, &two, MotifKind::Lbm, true));
    }

    #[test]
    fn reversed_triangle() {
        let fwd = Digraph::new(3, 0, [(0, 1), (1, 2), (2, 0)]);
        let rev = Digraph::new(3, 0, [(0, 2), (2, 1), (1, 0)]);
        assert!(is_isomorphic(&fwd, &rev, MotifKind::Lbm, true));
    }

    #[test]
    fn home_pin_and_labels() {
        let end = Digraph::new(3, 0, [(0, 1), (1, 0), (1, 2), (2, 1)]);
        let mid = Digraph::new(3, 1, [(0, 1), (1, 0), (1, 2), (2, 1)]);
        assert!(!is_isomorphic(&end, &mid, MotifKind::Lbm, true));
        assert!(is_isomorphic(&end, &mid, MotifKind::Lbm, false));

        let hw = Digraph::with_labels(vec![Home, Work], 0, [(0, 1), (1, 0)]);
        let hs = Digraph::with_labels(vec![Home, School], 0, [(0, 1), (1, 0)]);
        assert!(!is_isomorphic(&hw, &hs, MotifKind::Abm, true));
        assert!(is_isomorphic(&hw, &hs, MotifKind::Lbm, true));
    }
}
