//! Exact discrete optimal transport with squared Euclidean cost.
//!
//! Primal network simplex on the complete bipartite graph between the two
//! supports, following the spanning-tree layout of LEMON's
//! `NetworkSimplex` (thread / reverse-thread lists, subtree sizes, last
//! successors) with block-search pricing. Arcs are implicit: arc
//! `e = s * n2 + t` joins source `s` to target `t` and its cost is
//! recomputed from the coordinates, so memory is one byte per arc.

use super::grid::GridMeasure;
use crate::{Error, Result};

const TREE: i8 = 0;
const LOWER: i8 = 1;
const UP: i8 = 1;
const DOWN: i8 = -1;
const NONE: usize = usize::MAX;
const BALANCE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    /// Optimal value `sum c_st gamma_st`.
    pub cost: f64,
    /// Nonzero entries `(source, target, mass)` of the optimal plan.
    pub flows: Vec<(usize, usize, f64)>,
    /// Dual potentials with `u_s + v_t <= c_st`, tight on the plan.
    pub dual_source: Vec<f64>,
    pub dual_target: Vec<f64>,
    pub pivots: usize,
}

#[inline]
fn sqdist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    dx * dx + dy * dy
}

struct Simplex<'a> {
    xa: &'a [[f64; 2]],
    xb: &'a [[f64; 2]],
    n1: usize,
    n2: usize,
    m: usize,
    art_cost: f64,
    // artificial arc of node u points u -> root when true
    art_up: Vec<bool>,
    state: Vec<i8>,

    parent: Vec<usize>,
    pred: Vec<usize>,
    pred_dir: Vec<i8>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pi: Vec<f64>,
    // flow on the tree arc pred[u]; arcs outside the tree carry none
    flow: Vec<f64>,
    dirty_revs: Vec<usize>,

    block: usize,
    next_arc: usize,
    eps: f64,

    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: f64,
}

impl<'a> Simplex<'a> {
    fn new(a: &[f64], xa: &'a [[f64; 2]], b: &[f64], xb: &'a [[f64; 2]]) -> Self {
        let (n1, n2) = (a.len(), b.len());
        let n = n1 + n2;
        let m = n1 * n2;
        let mut max_cost: f64 = 0.0;
        for p in xa {
            for q in xb {
                max_cost = max_cost.max(sqdist(p, q));
            }
        }
        let art_cost = (max_cost + 1.0) * n as f64;
        let root = n;

        let mut s = Self {
            xa,
            xb,
            n1,
            n2,
            m,
            art_cost,
            art_up: vec![true; n],
            state: vec![LOWER; m],
            parent: vec![root; n + 1],
            pred: vec![NONE; n + 1],
            pred_dir: vec![UP; n + 1],
            thread: vec![0; n + 1],
            rev_thread: vec![0; n + 1],
            succ_num: vec![1; n + 1],
            last_succ: vec![0; n + 1],
            pi: vec![0.0; n + 1],
            flow: vec![0.0; n + 1],
            dirty_revs: Vec::new(),
            // far shorter blocks than LEMON's sqrt(m): on dense grid
            // instances cheap pricing beats the extra pivots it costs
            block: ((0.02 * (m as f64).sqrt()).ceil() as usize).max(10),
            next_arc: 0,
            // well above the rounding noise of potentials of size art_cost
            eps: art_cost * 1e-14,
            in_arc: NONE,
            join: NONE,
            u_in: NONE,
            v_in: NONE,
            u_out: NONE,
            delta: 0.0,
        };

        s.parent[root] = NONE;
        s.thread[root] = 0;
        s.rev_thread[0] = root;
        s.succ_num[root] = n + 1;
        s.last_succ[root] = root - 1;
        for u in 0..n {
            s.thread[u] = u + 1;
            s.rev_thread[u + 1] = u;
            s.last_succ[u] = u;
            s.pred[u] = m + u;
            let supply = if u < n1 { a[u] } else { -b[u - n1] };
            if supply >= 0.0 {
                s.pred_dir[u] = UP;
                s.art_up[u] = true;
                s.pi[u] = 0.0;
                s.flow[u] = supply;
            } else {
                s.pred_dir[u] = DOWN;
                s.art_up[u] = false;
                s.pi[u] = art_cost;
                s.flow[u] = -supply;
            }
        }
        s
    }

    fn root(&self) -> usize {
        self.n1 + self.n2
    }

    fn source(&self, e: usize) -> usize {
        if e < self.m {
            e / self.n2
        } else if self.art_up[e - self.m] {
            e - self.m
        } else {
            self.root()
        }
    }

    fn target(&self, e: usize) -> usize {
        if e < self.m {
            self.n1 + e % self.n2
        } else if self.art_up[e - self.m] {
            self.root()
        } else {
            e - self.m
        }
    }

    fn cost(&self, e: usize) -> f64 {
        if e < self.m {
            sqdist(&self.xa[e / self.n2], &self.xb[e % self.n2])
        } else if self.art_up[e - self.m] {
            0.0
        } else {
            self.art_cost
        }
    }

    fn find_entering_arc(&mut self) -> bool {
        let (m, n1, n2) = (self.m, self.n1, self.n2);
        let mut min = -self.eps;
        let mut best = NONE;
        let mut cnt = self.block;
        let mut e = self.next_arc;
        let (mut s, mut t) = (e / n2, e % n2);
        for _ in 0..m {
            if self.state[e] == LOWER {
                let c = sqdist(&self.xa[s], &self.xb[t]) + self.pi[s] - self.pi[n1 + t];
                if c < min {
                    min = c;
                    best = e;
                }
            }
            e += 1;
            t += 1;
            if t == n2 {
                t = 0;
                s += 1;
                if e == m {
                    e = 0;
                    s = 0;
                }
            }
            cnt -= 1;
            if cnt == 0 {
                if best != NONE {
                    break;
                }
                cnt = self.block;
            }
        }
        self.next_arc = e;
        self.in_arc = best;
        best != NONE
    }

    fn find_join_node(&mut self) {
        let mut u = self.source(self.in_arc);
        let mut v = self.target(self.in_arc);
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    // Entering arcs are always at their lower bound, so the cycle pushes
    // flow along the arc from its source to its target. Only the arcs that
    // the cycle traverses backwards limit the step.
    fn find_leaving_arc(&mut self) -> bool {
        let first = self.source(self.in_arc);
        let second = self.target(self.in_arc);
        let mut delta = f64::INFINITY;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            if self.pred_dir[u] == UP && self.flow[u] < delta {
                delta = self.flow[u];
                self.u_out = u;
                result = 1;
            }
            u = self.parent[u];
        }
        u = second;
        while u != self.join {
            if self.pred_dir[u] == DOWN && self.flow[u] <= delta {
                delta = self.flow[u];
                self.u_out = u;
                result = 2;
            }
            u = self.parent[u];
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        self.delta = delta;
        result != 0
    }

    fn change_flow(&mut self) {
        let val = self.delta;
        if val > 0.0 {
            let mut u = self.source(self.in_arc);
            while u != self.join {
                self.flow[u] -= self.pred_dir[u] as f64 * val;
                u = self.parent[u];
            }
            u = self.target(self.in_arc);
            while u != self.join {
                self.flow[u] += self.pred_dir[u] as f64 * val;
                u = self.parent[u];
            }
        }
        self.state[self.in_arc] = TREE;
        let out = self.pred[self.u_out];
        if out < self.m {
            self.state[out] = LOWER;
        }
        // exact zero on the leaving arc, rounding aside
        self.flow[self.u_out] = 0.0;
    }

    fn update_tree_structure(&mut self) {
        let (u_in, v_in, u_out, join, in_arc) = (self.u_in, self.v_in, self.u_out, self.join, self.in_arc);
        let in_flow = self.delta;
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];
        let in_dir = if u_in == self.source(in_arc) { UP } else { DOWN };

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = in_dir;
            self.flow[u_in] = in_flow;

            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };

            // re-hang the stem u_in .. u_out, reversing parent links
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);

                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;

                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;

            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }

            for i in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[i];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }

            // shift pred arcs (and their flows) one step down the stem
            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                self.flow[u] = self.flow[p];
                tmp_sc = tmp_sc + self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = in_dir;
            self.flow[u_in] = in_flow;
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in { join } else { NONE };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }

        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }

        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let (u_in, v_in) = (self.u_in, self.v_in);
        let sigma = self.pi[v_in] - self.pi[u_in] - self.pred_dir[u_in] as f64 * self.cost(self.in_arc);
        let end = self.thread[self.last_succ[u_in]];
        let mut u = u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    // Rebuild potentials from the tree in thread (preorder) order, which
    // discards drift from the incremental updates.
    fn recompute_potentials(&mut self) {
        let root = self.root();
        self.pi[root] = 0.0;
        let mut u = self.thread[root];
        while u != root {
            let p = self.parent[u];
            let c = self.cost(self.pred[u]);
            self.pi[u] = if self.pred_dir[u] == UP { self.pi[p] - c } else { self.pi[p] + c };
            u = self.thread[u];
        }
    }

    fn run(&mut self) -> usize {
        let mut pivots = 0;
        loop {
            while self.find_entering_arc() {
                self.find_join_node();
                let bounded = self.find_leaving_arc();
                debug_assert!(bounded, "uncapacitated cycle in a balanced problem");
                if !bounded {
                    break;
                }
                self.change_flow();
                self.update_tree_structure();
                self.update_potential();
                pivots += 1;
            }
            self.recompute_potentials();
            if !self.find_entering_arc() {
                return pivots;
            }
            // a pivot was missed only because of drift; resume from here
            self.next_arc = self.in_arc;
        }
    }
}

/// Solve the transport problem between masses `a` at points `xa` and `b`
/// at points `xb`. Both mass vectors must be nonnegative with equal totals.
pub fn transport_plan(a: &[f64], xa: &[[f64; 2]], b: &[f64], xb: &[[f64; 2]]) -> Result<TransportPlan> {
    if a.len() != xa.len() {
        return Err(Error::ShapeMismatch {
            expected: a.len(),
            found: xa.len(),
        });
    }
    if b.len() != xb.len() {
        return Err(Error::ShapeMismatch {
            expected: b.len(),
            found: xb.len(),
        });
    }
    if a.iter().chain(b).any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Format("transport masses must be finite and nonnegative".into()));
    }
    let (ta, tb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if (ta - tb).abs() > BALANCE_TOL * ta.max(tb).max(1.0) {
        return Err(Error::Unnormalized(ta - tb));
    }
    let ia: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
    let ib: Vec<usize> = (0..b.len()).filter(|&j| b[j] > 0.0).collect();
    if ia.is_empty() || ib.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    let pa: Vec<f64> = ia.iter().map(|&i| a[i]).collect();
    let pb: Vec<f64> = ib.iter().map(|&j| b[j]).collect();
    let ca: Vec<[f64; 2]> = ia.iter().map(|&i| xa[i]).collect();
    let cb: Vec<[f64; 2]> = ib.iter().map(|&j| xb[j]).collect();

    let mut sx = Simplex::new(&pa, &ca, &pb, &cb);
    let pivots = sx.run();

    let mut cost = 0.0;
    let mut flows = Vec::new();
    for u in 0..sx.root() {
        let e = sx.pred[u];
        if e < sx.m && sx.flow[u] > 0.0 {
            let (s, t) = (e / sx.n2, e % sx.n2);
            cost += sx.flow[u] * sqdist(&ca[s], &cb[t]);
            flows.push((ia[s], ib[t], sx.flow[u]));
        }
    }
    flows.sort_by_key(|f| (f.0, f.1));

    // pi with reduced cost c + pi_s - pi_t >= 0 gives u = -pi_s, v = pi_t;
    // zero-mass points get the tightest feasible potential
    let mut dual_source = vec![0.0; a.len()];
    let mut dual_target = vec![0.0; b.len()];
    for (k, &i) in ia.iter().enumerate() {
        dual_source[i] = -sx.pi[k];
    }
    for (k, &j) in ib.iter().enumerate() {
        dual_target[j] = sx.pi[sx.n1 + k];
    }
    for i in (0..a.len()).filter(|&i| a[i] == 0.0) {
        dual_source[i] = ib
            .iter()
            .map(|&j| sqdist(&xa[i], &xb[j]) - dual_target[j])
            .fold(f64::INFINITY, f64::min);
    }
    for j in (0..b.len()).filter(|&j| b[j] == 0.0) {
        dual_target[j] = (0..a.len())
            .map(|i| sqdist(&xa[i], &xb[j]) - dual_source[i])
            .fold(f64::INFINITY, f64::min);
    }

    Ok(TransportPlan {
        cost: cost.max(0.0),
        flows,
        dual_source,
        dual_target,
        pivots,
    })
}

/// Wasserstein-2 distance between two measures on the same grid, by exact
/// transport between their nonzero bins.
pub fn wasserstein2_grid(p: &GridMeasure, q: &GridMeasure) -> Result<f64> {
    p.check_compatible(q)?;
    for m in [p, q] {
        let total = m.total_mass();
        if (total - 1.0).abs() > BALANCE_TOL {
            return Err(Error::Unnormalized(total));
        }
    }
    if p.weights() == q.weights() {
        return Ok(0.0);
    }
    // solve in a canonical orientation so that the value is exactly symmetric
    let (p, q) = if p.weights() <= q.weights() { (p, q) } else { (q, p) };
    let spec = p.spec();
    let (ia, a): (Vec<usize>, Vec<f64>) = p.support().unzip();
    let (ib, b): (Vec<usize>, Vec<f64>) = q.support().unzip();
    let xa: Vec<[f64; 2]> = ia.iter().map(|&i| spec.center(i)).collect();
    let xb: Vec<[f64; 2]> = ib.iter().map(|&i| spec.center(i)).collect();
    Ok(transport_plan(&a, &xa, &b, &xb)?.cost.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::GridSpec;
    use crate::RngStream;

    fn random_points(rng: &mut RngStream, n: usize) -> Vec<[f64; 2]> {
        (0..n).map(|_| [rng.normal(), rng.normal()]).collect()
    }

    fn random_masses(rng: &mut RngStream, n: usize, zeros: bool) -> Vec<f64> {
        let mut w: Vec<f64> = (0..n)
            .map(|_| {
                let u = rng.uniform();
                if zeros && u < 0.2 {
                    0.0
                } else {
                    u
                }
            })
            .collect();
        if w.iter().all(|&x| x == 0.0) {
            w[0] = 1.0;
        }
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        w
    }

    // primal feasibility, dual feasibility and complementary slackness
    fn certify(a: &[f64], xa: &[[f64; 2]], b: &[f64], xb: &[[f64; 2]], plan: &TransportPlan) {
        let mut ra = vec![0.0; a.len()];
        let mut rb = vec![0.0; b.len()];
        for &(i, j, f) in &plan.flows {
            assert!(f > 0.0);
            ra[i] += f;
            rb[j] += f;
        }
        for i in 0..a.len() {
            assert!((ra[i] - a[i]).abs() < 1e-12, "row {i}: {} vs {}", ra[i], a[i]);
        }
        for j in 0..b.len() {
            assert!((rb[j] - b[j]).abs() < 1e-12, "col {j}");
        }
        let scale = 1.0 + plan.cost;
        for i in 0..a.len() {
            for j in 0..b.len() {
                let slack = sqdist(&xa[i], &xb[j]) - plan.dual_source[i] - plan.dual_target[j];
                assert!(slack > -1e-8 * scale, "dual violated at ({i},{j}): {slack}");
            }
        }
        let dual: f64 = a.iter().zip(&plan.dual_source).map(|(w, u)| w * u).sum::<f64>()
            + b.iter().zip(&plan.dual_target).map(|(w, v)| w * v).sum::<f64>();
        assert!((dual - plan.cost).abs() < 1e-8 * scale, "gap {} vs {}", dual, plan.cost);
    }

    #[test]
    fn certificates_on_random_instances() {
        let mut rng = RngStream::new(5, 0);
        for trial in 0..200 {
            let n1 = 1 + (rng.uniform() * 30.0) as usize;
            let n2 = 1 + (rng.uniform() * 30.0) as usize;
            let xa = random_points(&mut rng, n1);
            let xb = random_points(&mut rng, n2);
            let a = random_masses(&mut rng, n1, trial % 3 == 0);
            let b = random_masses(&mut rng, n2, trial % 4 == 0);
            let plan = transport_plan(&a, &xa, &b, &xb).unwrap();
            certify(&a, &xa, &b, &xb, &plan);
        }
    }

    #[test]
    fn degenerate_uniform_instances() {
        // equal masses on lattice points: many ties and degenerate pivots
        let mut rng = RngStream::new(8, 0);
        for _ in 0..50 {
            let n = 2 + (rng.uniform() * 25.0) as usize;
            let xa: Vec<[f64; 2]> = (0..n).map(|_| [(rng.uniform() * 4.0).floor(), (rng.uniform() * 4.0).floor()]).collect();
            let xb: Vec<[f64; 2]> = (0..n).map(|_| [(rng.uniform() * 4.0).floor(), (rng.uniform() * 4.0).floor()]).collect();
            let w = vec![1.0 / n as f64; n];
            let plan = transport_plan(&w, &xa, &w, &xb).unwrap();
            certify(&w, &xa, &w, &xb, &plan);
        }
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for k in 0..n {
                let mut q = p.clone();
                q.insert(k, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn uniform_assignment_matches_brute_force() {
        // with equal masses an optimal plan is a permutation (Birkhoff)
        let mut rng = RngStream::new(21, 0);
        for n in 1..=6 {
            let perms = permutations(n);
            for _ in 0..10 {
                let xa = random_points(&mut rng, n);
                let xb = random_points(&mut rng, n);
                let best = perms
                    .iter()
                    .map(|p| (0..n).map(|i| sqdist(&xa[i], &xb[p[i]])).sum::<f64>() / n as f64)
                    .fold(f64::INFINITY, f64::min);
                let w = vec![1.0 / n as f64; n];
                let plan = transport_plan(&w, &xa, &w, &xb).unwrap();
                assert!((plan.cost - best).abs() < 1e-12 * (1.0 + best), "n={n}");
            }
        }
    }

    #[test]
    fn one_dimensional_quantile_coupling() {
        // on a line the monotone (quantile) coupling is optimal
        let mut rng = RngStream::new(2, 0);
        for _ in 0..20 {
            let n1 = 1 + (rng.uniform() * 20.0) as usize;
            let n2 = 1 + (rng.uniform() * 20.0) as usize;
            let mut pa: Vec<f64> = (0..n1).map(|_| rng.normal()).collect();
            let mut pb: Vec<f64> = (0..n2).map(|_| rng.normal() + 1.0).collect();
            pa.sort_by(f64::total_cmp);
            pb.sort_by(f64::total_cmp);
            let a = random_masses(&mut rng, n1, false);
            let b = random_masses(&mut rng, n2, false);
            let (mut i, mut j) = (0, 0);
            let (mut ra, mut rb) = (a[0], b[0]);
            let mut expect = 0.0;
            loop {
                let f = ra.min(rb);
                expect += f * (pa[i] - pb[j]).powi(2);
                ra -= f;
                rb -= f;
                if ra <= 1e-15 {
                    i += 1;
                    if i == n1 {
                        break;
                    }
                    ra += a[i];
                }
                if rb <= 1e-15 {
                    j += 1;
                    if j == n2 {
                        break;
                    }
                    rb += b[j];
                }
            }
            let xa: Vec<[f64; 2]> = pa.iter().map(|&v| [v, 0.0]).collect();
            let xb: Vec<[f64; 2]> = pb.iter().map(|&v| [v, 0.0]).collect();
            let plan = transport_plan(&a, &xa, &b, &xb).unwrap();
            assert!((plan.cost - expect).abs() < 1e-10, "{} vs {expect}", plan.cost);
        }
    }

    #[test]
    fn rejects_bad_masses() {
        let x = [[0.0, 0.0]];
        assert!(matches!(transport_plan(&[1.0], &x, &[0.5], &x), Err(Error::Unnormalized(_))));
        assert!(transport_plan(&[-1.0], &x, &[-1.0], &x).is_err());
        assert!(transport_plan(&[1.0, 0.0], &x, &[1.0], &x).is_err());
        assert!(matches!(transport_plan(&[0.0], &x, &[0.0], &x), Err(Error::EmptyMeasure)));
    }

    #[test]
    fn grid_point_masses() {
        let spec = GridSpec::square(0.0, 10.0, 10).unwrap();
        let p = GridMeasure::point_mass(spec, spec.locate([1.5, 1.5]).0);
        let q = GridMeasure::point_mass(spec, spec.locate([4.5, 1.5]).0);
        assert_eq!(wasserstein2_grid(&p, &q).unwrap(), 3.0);
        assert_eq!(wasserstein2_grid(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn grid_one_bin_translate_is_bin_width() {
        let spec = GridSpec::square(-1.0, 1.0, 20).unwrap();
        let h = spec.width(0);
        let mut rng = RngStream::new(3, 0);
        let mut w = vec![0.0; spec.n_bins()];
        for i in 0..19 {
            for j in 0..20 {
                w[i * 20 + j] = rng.uniform();
            }
        }
        let p = GridMeasure::normalized(spec, w.clone()).unwrap();
        let mut shifted = vec![0.0; spec.n_bins()];
        for i in 0..19 {
            for j in 0..20 {
                shifted[(i + 1) * 20 + j] = w[i * 20 + j];
            }
        }
        let q = GridMeasure::normalized(spec, shifted).unwrap();
        let d = wasserstein2_grid(&p, &q).unwrap();
        assert!((d - h).abs() < 1e-12, "{d} vs {h}");
    }

    #[test]
    fn grid_shifted_gaussians() {
        let spec = GridSpec::square(-1.0, 2.0, 60).unwrap();
        let h = spec.width(0);
        let gauss = |mu: [f64; 2]| {
            let w: Vec<f64> = (0..spec.n_bins())
                .map(|i| {
                    let c = spec.center(i);
                    (-(sqdist(&c, &mu)) / (2.0 * 0.04)).exp()
                })
                .collect();
            GridMeasure::normalized(spec, w).unwrap()
        };
        let d = wasserstein2_grid(&gauss([0.25, 0.5]), &gauss([1.25, 0.5])).unwrap();
        assert!((d - 1.0).abs() < 2.0 * h, "{d}");
    }

    #[test]
    fn grid_mismatch_and_normalization() {
        let a = GridMeasure::point_mass(GridSpec::square(0.0, 1.0, 4).unwrap(), 0);
        let b = GridMeasure::point_mass(GridSpec::square(0.0, 1.0, 5).unwrap(), 0);
        assert!(matches!(wasserstein2_grid(&a, &b), Err(Error::GridMismatch)));
    }
}
