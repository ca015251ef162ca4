//! Multifrontal LU on the symmetrised sparsity pattern.
//!
//! Unknowns are ordered by geometric nested dissection of the graph of
//! `A + Aᵀ`. Row pivoting is restricted to the fully summed rows of each
//! front, so the factor structure is fixed by the analysis. Unknowns whose
//! diagonal is negligible against their row (pressure rows of a saddle point
//! system) are moved up the tree to the front that eliminates the last of
//! their neighbours, and are eliminated after the other pivots of that front.

use std::sync::Arc;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::lu::partial_pivoting::factor::{lu_in_place, lu_in_place_scratch};
use faer::linalg::matmul::matmul;
use faer::linalg::triangular_solve::{
    solve_lower_triangular_in_place, solve_unit_lower_triangular_in_place, solve_upper_triangular_in_place,
};
use faer::prelude::{IntoConst, Reborrow, ReborrowMut};
use faer::{Accum, Mat, MatMut, MatRef, Par};

use chns_base::sparse::Csr;

/// Largest set that is not dissected further.
const LEAF: usize = 64;
/// `|a_ii| ≤ WEAK · max_j |a_ij|` marks a weak diagonal.
const WEAK: f64 = 1e-6;
/// Candidate cut positions tried per dissection step.
const CUTS: usize = 8;

#[derive(Debug, Clone)]
struct Node {
    /// Elimination position of the first pivot.
    start: usize,
    pivots: Vec<usize>,
    /// Later unknowns coupled to the pivots, by elimination position.
    boundary: Vec<usize>,
    children: Vec<usize>,
    /// Matrix entries owned by this front: local row, local column, index
    /// into the CSR values.
    asm: Vec<(u32, u32, usize)>,
    /// Local positions of `boundary` in the parent front.
    parent_slot: Vec<u32>,
}

/// Ordering, front structure and assembly maps of one sparsity pattern.
#[derive(Debug)]
pub struct Analysis {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    nodes: Vec<Node>,
    /// Row of every stored entry.
    entry_row: Vec<u32>,
}

struct Graph {
    ptr: Vec<usize>,
    adj: Vec<usize>,
}

impl Graph {
    /// Off-diagonal pattern of `A + Aᵀ`.
    fn symmetrised(a: &Csr) -> Self {
        let n = a.nrows;
        let mut deg = vec![0usize; n + 1];
        for i in 0..n {
            for &j in &a.col_idx[a.row_ptr[i]..a.row_ptr[i + 1]] {
                if i != j {
                    deg[i + 1] += 1;
                    deg[j + 1] += 1;
                }
            }
        }
        for i in 0..n {
            deg[i + 1] += deg[i];
        }
        let mut next = deg.clone();
        let mut adj = vec![0usize; deg[n]];
        for i in 0..n {
            for &j in &a.col_idx[a.row_ptr[i]..a.row_ptr[i + 1]] {
                if i != j {
                    adj[next[i]] = j;
                    next[i] += 1;
                    adj[next[j]] = i;
                    next[j] += 1;
                }
            }
        }
        let mut ptr = vec![0usize; n + 1];
        let mut out = Vec::with_capacity(adj.len());
        for i in 0..n {
            let row = &mut adj[deg[i]..deg[i + 1]];
            row.sort_unstable();
            let mut last = usize::MAX;
            for &j in row.iter() {
                if j != last {
                    out.push(j);
                    last = j;
                }
            }
            ptr[i + 1] = out.len();
        }
        Graph { ptr, adj: out }
    }

    fn neighbours(&self, i: usize) -> &[usize] {
        &self.adj[self.ptr[i]..self.ptr[i + 1]]
    }
}

struct Dissector<'a> {
    g: &'a Graph,
    points: &'a [[f64; 2]],
    stamp: Vec<u32>,
    side: Vec<u8>,
    generation: u32,
    /// (pivots, children) in creation order, children first.
    nodes: Vec<(Vec<usize>, Vec<usize>)>,
}

impl Dissector<'_> {
    fn push(&mut self, pivots: Vec<usize>, children: Vec<usize>) -> usize {
        self.nodes.push((pivots, children));
        self.nodes.len() - 1
    }

    /// Cut `set` at `x[axis] < m` and return the left part, the right part
    /// and a minimum vertex cover of the cut edges as separator.
    fn split_at(&mut self, set: &[usize], axis: usize, m: f64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        self.generation += 1;
        let g = self.generation;
        for &i in set {
            self.stamp[i] = g;
            self.side[i] = if self.points[i][axis] < m { 1 } else { 2 };
        }
        // bipartite graph of cut edges, left ends indexed densely
        let mut lefts = Vec::new();
        let mut edges_ptr = vec![0usize];
        let mut edges = Vec::new();
        for &i in set {
            if self.side[i] != 1 {
                continue;
            }
            let before = edges.len();
            edges.extend(self.g.neighbours(i).iter().copied().filter(|&j| self.stamp[j] == g && self.side[j] == 2));
            if edges.len() > before {
                lefts.push(i);
                edges_ptr.push(edges.len());
            }
        }
        let nl = lefts.len();
        // right ends carry their match in `mate_r`, keyed by vertex id
        let mut mate_l = vec![usize::MAX; nl];
        let mut mate_r: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
        let mut seen: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
        for l in 0..nl {
            // greedy first
            if let Some(&r) = edges[edges_ptr[l]..edges_ptr[l + 1]].iter().find(|r| !mate_r.contains_key(r)) {
                mate_l[l] = r;
                mate_r.insert(r, l);
            }
        }
        for l in 0..nl {
            if mate_l[l] != usize::MAX {
                continue;
            }
            // iterative augmenting path search
            let mut stack: Vec<(usize, usize)> = vec![(l, edges_ptr[l])];
            let mut path_r: Vec<usize> = Vec::new();
            let tag = l;
            let mut found = false;
            while let Some(&mut (u, ref mut k)) = stack.last_mut() {
                if *k == edges_ptr[u + 1] {
                    stack.pop();
                    path_r.pop();
                    continue;
                }
                let r = edges[*k];
                *k += 1;
                if seen.get(&r) == Some(&tag) {
                    continue;
                }
                seen.insert(r, tag);
                match mate_r.get(&r) {
                    None => {
                        path_r.push(r);
                        found = true;
                        break;
                    }
                    Some(&u2) => {
                        path_r.push(r);
                        stack.push((u2, edges_ptr[u2]));
                    }
                }
            }
            if found {
                for (depth, &(u, _)) in stack.iter().enumerate() {
                    let r = path_r[depth];
                    mate_l[u] = r;
                    mate_r.insert(r, u);
                }
            }
        }
        // König: alternating reachability from unmatched left ends
        let mut reach_l = vec![false; nl];
        let mut reach_r: std::collections::HashSet<usize> = std::collections::HashSet::new();
        let mut queue: Vec<usize> = (0..nl).filter(|&l| mate_l[l] == usize::MAX).collect();
        for &l in &queue {
            reach_l[l] = true;
        }
        while let Some(l) = queue.pop() {
            for &r in &edges[edges_ptr[l]..edges_ptr[l + 1]] {
                if reach_r.insert(r) {
                    if let Some(&l2) = mate_r.get(&r) {
                        if !reach_l[l2] {
                            reach_l[l2] = true;
                            queue.push(l2);
                        }
                    }
                }
            }
        }
        let mut sep = Vec::new();
        for l in 0..nl {
            if !reach_l[l] {
                sep.push(lefts[l]);
                self.side[lefts[l]] = 0;
            }
        }
        for &r in &reach_r {
            self.side[r] = 0;
        }
        let (mut left, mut right) = (Vec::new(), Vec::new());
        for &i in set {
            match self.side[i] {
                1 => left.push(i),
                2 => right.push(i),
                _ => {}
            }
        }
        let mut rs: Vec<usize> = reach_r.into_iter().collect();
        rs.sort_unstable();
        sep.extend(rs);
        (left, right, sep)
    }

    /// Best cut among the distinct coordinates near the median.
    fn split(&mut self, set: &[usize], axis: usize) -> Option<(Vec<usize>, Vec<usize>, Vec<usize>)> {
        let mut vals: Vec<f64> = set.iter().map(|&i| self.points[i][axis]).collect();
        vals.sort_unstable_by(f64::total_cmp);
        let n = vals.len();
        let (lo, hi) = (n * 2 / 5, n * 3 / 5);
        let mut cands: Vec<f64> = vals[lo..=hi.min(n - 1)].to_vec();
        cands.dedup();
        cands.retain(|&m| m > vals[0]);
        if cands.len() > CUTS {
            let mid = n / 2;
            cands.sort_by(|a, b| (a - vals[mid]).abs().total_cmp(&(b - vals[mid]).abs()));
            cands.truncate(CUTS);
        }
        let mut best: Option<(Vec<usize>, Vec<usize>, Vec<usize>)> = None;
        for m in cands {
            let cut = self.split_at(set, axis, m);
            let score = |c: &(Vec<usize>, Vec<usize>, Vec<usize>)| {
                c.2.len() as f64 + 0.05 * c.0.len().abs_diff(c.1.len()) as f64
            };
            if best.as_ref().is_none_or(|b| score(&cut) < score(b)) {
                best = Some(cut);
            }
        }
        best.filter(|(l, r, _)| !l.is_empty() && !r.is_empty())
    }

    fn dissect(&mut self, set: Vec<usize>) -> usize {
        if set.len() <= LEAF {
            return self.push(set, Vec::new());
        }
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for &i in &set {
            for a in 0..2 {
                lo[a] = lo[a].min(self.points[i][a]);
                hi[a] = hi[a].max(self.points[i][a]);
            }
        }
        let first = if hi[0] - lo[0] >= hi[1] - lo[1] { 0 } else { 1 };
        let parts = self.split(&set, first).or_else(|| self.split(&set, 1 - first));
        let Some((left, right, sep)) = parts else {
            return self.push(set, Vec::new());
        };
        let mut children = Vec::with_capacity(2);
        for part in [left, right] {
            if !part.is_empty() {
                children.push(self.dissect(part));
            }
        }
        self.push(sep, children)
    }
}

impl Analysis {
    /// `points[i]` locates unknown `i`; it only steers the ordering.
    pub fn new(a: &Csr, points: &[[f64; 2]]) -> Self {
        assert_eq!(a.nrows, a.ncols, "square matrix expected");
        assert_eq!(points.len(), a.nrows, "one point per unknown");
        let n = a.nrows;
        let g = Graph::symmetrised(a);
        let mut ds = Dissector { g: &g, points, stamp: vec![0; n], side: vec![0; n], generation: 0, nodes: Vec::new() };
        if n > 0 {
            ds.dissect((0..n).collect());
        }
        let raw = ds.nodes;
        let nn = raw.len();

        let mut parent = vec![usize::MAX; nn];
        for (s, (_, ch)) in raw.iter().enumerate() {
            for &c in ch {
                parent[c] = s;
            }
        }
        let mut depth = vec![0usize; nn];
        for s in (0..nn).rev() {
            if parent[s] != usize::MAX {
                depth[s] = depth[parent[s]] + 1;
            }
        }
        let mut node_of = vec![0usize; n];
        for (s, (piv, _)) in raw.iter().enumerate() {
            for &i in piv {
                node_of[i] = s;
            }
        }

        // weak rows follow their neighbours up the tree; neighbours of an
        // unknown lie in its subtree or on its ancestor path, so the
        // shallowest neighbour is an ancestor
        let weak: Vec<bool> = (0..n)
            .map(|i| {
                let row = a.row_ptr[i]..a.row_ptr[i + 1];
                let big = a.vals[row.clone()].iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let diag = a.col_idx[row.clone()].binary_search(&i).map_or(0.0, |k| a.vals[row.start + k].abs());
                diag <= WEAK * big
            })
            .collect();
        loop {
            let mut moved = false;
            for i in (0..n).filter(|&i| weak[i]) {
                let mut target = node_of[i];
                for &j in g.neighbours(i) {
                    if depth[node_of[j]] < depth[target] {
                        target = node_of[j];
                    }
                }
                if target != node_of[i] {
                    node_of[i] = target;
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
        let mut pivots: Vec<Vec<usize>> = vec![Vec::new(); nn];
        for (piv, _) in &raw {
            for &i in piv {
                if !weak[i] {
                    pivots[node_of[i]].push(i);
                }
            }
        }
        for (piv, _) in &raw {
            for &i in piv {
                if weak[i] {
                    pivots[node_of[i]].push(i);
                }
            }
        }

        let mut pos = vec![0usize; n];
        let mut nodes: Vec<Node> = Vec::with_capacity(nn);
        let mut next = 0;
        for (s, (_, ch)) in raw.into_iter().enumerate() {
            let piv = std::mem::take(&mut pivots[s]);
            for (k, &i) in piv.iter().enumerate() {
                pos[i] = next + k;
            }
            let start = next;
            next += piv.len();
            nodes.push(Node {
                start,
                pivots: piv,
                boundary: Vec::new(),
                children: ch,
                asm: Vec::new(),
                parent_slot: Vec::new(),
            });
        }

        let mut mark = vec![usize::MAX; n];
        for s in 0..nn {
            let end = nodes[s].start + nodes[s].pivots.len();
            let mut b = Vec::new();
            for &v in &nodes[s].pivots {
                for &j in g.neighbours(v) {
                    if pos[j] >= end && mark[j] != s {
                        mark[j] = s;
                        b.push(j);
                    }
                }
            }
            for ci in 0..nodes[s].children.len() {
                let c = nodes[s].children[ci];
                for &j in &nodes[c].boundary {
                    if pos[j] >= end && mark[j] != s {
                        mark[j] = s;
                        b.push(j);
                    }
                }
            }
            b.sort_unstable_by_key(|&j| pos[j]);
            nodes[s].boundary = b;
        }

        // local index of every unknown in the front that currently uses it
        let mut local = vec![u32::MAX; n];
        let mut owner_count = vec![0usize; nn + 1];
        let owner = |i: usize, j: usize| if pos[i] <= pos[j] { node_of[i] } else { node_of[j] };
        let mut entry_row = vec![0u32; a.nnz()];
        for i in 0..n {
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                owner_count[owner(i, a.col_idx[k]) + 1] += 1;
                entry_row[k] = i as u32;
            }
        }
        for s in 0..nn {
            owner_count[s + 1] += owner_count[s];
        }
        let mut by_owner = vec![0usize; a.nnz()];
        let mut fill = owner_count.clone();
        for i in 0..n {
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                let t = owner(i, a.col_idx[k]);
                by_owner[fill[t]] = k;
                fill[t] += 1;
            }
        }
        for s in 0..nn {
            let node = &nodes[s];
            for (l, &i) in node.pivots.iter().chain(&node.boundary).enumerate() {
                local[i] = l as u32;
            }
            let asm: Vec<(u32, u32, usize)> = by_owner[owner_count[s]..owner_count[s + 1]]
                .iter()
                .map(|&k| (local[entry_row[k] as usize], local[a.col_idx[k]], k))
                .collect();
            debug_assert!(asm.iter().all(|&(r, c, _)| r != u32::MAX && c != u32::MAX));
            let slots: Vec<Vec<u32>> =
                node.children.iter().map(|&c| nodes[c].boundary.iter().map(|&j| local[j]).collect()).collect();
            let children = node.children.clone();
            nodes[s].asm = asm;
            for (c, sl) in children.into_iter().zip(slots) {
                debug_assert!(sl.iter().all(|&l| l != u32::MAX));
                nodes[c].parent_slot = sl;
            }
        }

        Analysis { n, row_ptr: a.row_ptr.clone(), col_idx: a.col_idx.clone(), nodes, entry_row }
    }

    pub fn matches(&self, a: &Csr) -> bool {
        a.nrows == self.n && a.row_ptr == self.row_ptr && a.col_idx == self.col_idx
    }

    /// Stored factor entries.
    pub fn factor_entries(&self) -> usize {
        self.nodes.iter().map(|s| s.pivots.len() * (s.pivots.len() + 2 * s.boundary.len())).sum()
    }

    /// Floating point operations of one factorisation.
    pub fn flops(&self) -> f64 {
        self.nodes
            .iter()
            .map(|s| {
                let (k, b) = (s.pivots.len() as f64, s.boundary.len() as f64);
                2.0 / 3.0 * k * k * k + 2.0 * k * k * b + 2.0 * k * b * b
            })
            .sum()
    }

    pub fn largest_front(&self) -> usize {
        self.nodes.iter().map(|s| s.pivots.len() + s.boundary.len()).max().unwrap_or(0)
    }

    /// Numeric factorisation of a matrix with the analysed pattern.
    pub fn factor(self: &Arc<Self>, a: &Csr) -> Factor {
        assert!(self.matches(a), "pattern differs from the analysed one");
        let scale: Vec<f64> = (0..self.n)
            .map(|i| {
                let m = a.vals[a.row_ptr[i]..a.row_ptr[i + 1]].iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if m > 0.0 && m.is_finite() {
                    1.0 / m
                } else {
                    1.0
                }
            })
            .collect();
        let mut fronts = Vec::with_capacity(self.nodes.len());
        let mut stack: Vec<Mat<f64>> = Vec::new();
        let mut perturbed = 0;
        for node in &self.nodes {
            let k = node.pivots.len();
            let f = k + node.boundary.len();
            let mut fm = Mat::<f64>::zeros(f, f);
            for &(r, c, idx) in &node.asm {
                fm[(r as usize, c as usize)] += a.vals[idx] * scale[self.entry_row[idx] as usize];
            }
            let first_child = stack.len() - node.children.len();
            for (cb, &c) in stack.drain(first_child..).zip(&node.children) {
                let slot = &self.nodes[c].parent_slot;
                for (jj, &sj) in slot.iter().enumerate() {
                    let col = cb.col(jj);
                    for (ii, &si) in slot.iter().enumerate() {
                        fm[(si as usize, sj as usize)] += col[ii];
                    }
                }
            }
            let (front, cb, bad) = factor_front(fm, k);
            perturbed += bad;
            fronts.push(front);
            stack.push(cb);
        }
        Factor { analysis: Arc::clone(self), fronts, scale, perturbed }
    }
}

#[derive(Debug)]
struct Front {
    /// Row `i` of the factored pivot block is local row `perm[i]`.
    perm: Vec<usize>,
    lu: Mat<f64>,
    u12: Mat<f64>,
    l21: Mat<f64>,
}

/// Partial LU of the leading `k` columns of a dense front. Returns the
/// factors, the Schur complement and the number of perturbed pivots.
fn factor_front(mut fm: Mat<f64>, k: usize) -> (Front, Mat<f64>, usize) {
    let f = fm.nrows();
    let b = f - k;
    let mut perm = vec![0usize; k];
    let mut perm_inv = vec![0usize; k];
    let mut perturbed = 0;
    {
        let (f11, _f12, _f21, _f22) = fm.as_mut().split_at_mut(k, k);
        let req = lu_in_place_scratch::<usize, f64>(k, k, Par::Seq, Default::default());
        let mut mem = MemBuffer::new(req);
        lu_in_place(f11, &mut perm, &mut perm_inv, Par::Seq, MemStack::new(&mut mem), Default::default());
    }
    let tiny = 1e-14 * (0..k).fold(0.0f64, |m, i| m.max(fm[(i, i)].abs())).max(f64::MIN_POSITIVE);
    for i in 0..k {
        let d = fm[(i, i)];
        if !(d.abs() > tiny) || !d.is_finite() {
            fm[(i, i)] = if d < 0.0 { -tiny } else { tiny };
            perturbed += 1;
        }
    }
    if b > 0 && k > 0 {
        let (f11, mut f12, mut f21, mut f22) = fm.as_mut().split_at_mut(k, k);
        permute_rows(f12.rb_mut(), &perm);
        let f11 = f11.into_const();
        solve_unit_lower_triangular_in_place(f11, f12.rb_mut(), Par::Seq);
        solve_lower_triangular_in_place(f11.transpose(), f21.rb_mut().transpose_mut(), Par::Seq);
        matmul(f22.rb_mut(), Accum::Add, f21.rb(), f12.rb(), -1.0, Par::Seq);
    }
    let lu = fm.submatrix(0, 0, k, k).to_owned();
    let u12 = fm.submatrix(0, k, k, b).to_owned();
    let l21 = fm.submatrix(k, 0, b, k).to_owned();
    let cb = fm.submatrix(k, k, b, b).to_owned();
    (Front { perm, lu, u12, l21 }, cb, perturbed)
}

fn permute_rows(mut m: MatMut<'_, f64>, perm: &[usize]) {
    let mut tmp = vec![0.0; perm.len()];
    for j in 0..m.ncols() {
        for (i, &p) in perm.iter().enumerate() {
            tmp[i] = m[(p, j)];
        }
        for (i, &t) in tmp.iter().enumerate() {
            m[(i, j)] = t;
        }
    }
}

/// Numeric factors of one matrix.
#[derive(Debug)]
pub struct Factor {
    analysis: Arc<Analysis>,
    fronts: Vec<Front>,
    scale: Vec<f64>,
    /// Pivots replaced by a small multiple of the largest pivot of their front.
    pub perturbed: usize,
}

impl Factor {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let an = &*self.analysis;
        assert_eq!(b.len(), an.n);
        let mut w: Vec<f64> = b.iter().zip(&self.scale).map(|(b, s)| b * s).collect();
        let mut y = vec![0.0; an.n];
        let mut z = Vec::new();
        let mut t = Vec::new();
        for (node, fr) in an.nodes.iter().zip(&self.fronts) {
            let k = node.pivots.len();
            if k == 0 {
                continue;
            }
            z.clear();
            z.extend(fr.perm.iter().map(|&p| w[node.pivots[p]]));
            let mut zm = MatMut::from_column_major_slice_mut(&mut z, k, 1);
            solve_unit_lower_triangular_in_place(fr.lu.as_ref(), zm.rb_mut(), Par::Seq);
            let nb = node.boundary.len();
            if nb > 0 {
                t.clear();
                t.resize(nb, 0.0);
                let tm = MatMut::from_column_major_slice_mut(&mut t, nb, 1);
                matmul(tm, Accum::Replace, fr.l21.as_ref(), MatRef::from_column_major_slice(&z, k, 1), 1.0, Par::Seq);
                for (&j, &v) in node.boundary.iter().zip(&t) {
                    w[j] -= v;
                }
            }
            y[node.start..node.start + k].copy_from_slice(&z);
        }
        let mut x = vec![0.0; an.n];
        for (node, fr) in an.nodes.iter().zip(&self.fronts).rev() {
            let k = node.pivots.len();
            if k == 0 {
                continue;
            }
            z.clear();
            z.extend_from_slice(&y[node.start..node.start + k]);
            let nb = node.boundary.len();
            if nb > 0 {
                t.clear();
                t.extend(node.boundary.iter().map(|&j| x[j]));
                let zm = MatMut::from_column_major_slice_mut(&mut z, k, 1);
                matmul(zm, Accum::Add, fr.u12.as_ref(), MatRef::from_column_major_slice(&t, nb, 1), -1.0, Par::Seq);
            }
            let zm = MatMut::from_column_major_slice_mut(&mut z, k, 1);
            solve_upper_triangular_in_place(fr.lu.as_ref(), zm, Par::Seq);
            for (&i, &v) in node.pivots.iter().zip(&z) {
                x[i] = v;
            }
        }
        x
    }
}
