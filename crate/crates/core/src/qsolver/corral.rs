// Wolfe's minimum-norm-point scheme, written for the concave quadratic
//
//     phi(z) = <c, z> - delta * |z|^2
//
// over the convex hull of allocation indicator vectors. The corral is an affinely
// independent set of allocations whose affine maximizer has strictly positive
// barycentric weights; the major cycle adds the linear-oracle vertex, the minor cycle
// restores the corral property.

use crate::error::Result;
use crate::instance::DeterministicSpace;

use super::{linear_oracle, TraceRow};

pub(crate) struct Quadratic<'a> {
    pub space: &'a DeterministicSpace,
    /// Linear coefficients per agent and item.
    pub c: Vec<Vec<f64>>,
    pub delta: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Corral {
    pub atoms: Vec<usize>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct CorralSolution {
    pub corral: Corral,
    pub marginals: Vec<Vec<f64>>,
    pub value: f64,
    pub gap: f64,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
}

impl<'a> Quadratic<'a> {
    pub fn marginals(&self, corral: &Corral) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.space.n_items()]; self.space.n_agents()];
        for (&a, &w) in corral.atoms.iter().zip(&corral.weights) {
            for (j, &item) in self.space.allocation(a).iter().enumerate() {
                m[j][item] += w;
            }
        }
        m
    }

    pub fn value(&self, m: &[Vec<f64>]) -> f64 {
        m.iter()
            .zip(&self.c)
            .map(|(mj, cj)| {
                mj.iter()
                    .zip(cj)
                    .map(|(x, c)| c * x - self.delta * x * x)
                    .sum::<f64>()
            })
            .sum()
    }

    fn gradient(&self, m: &[Vec<f64>]) -> Vec<Vec<f64>> {
        m.iter()
            .zip(&self.c)
            .map(|(mj, cj)| mj.iter().zip(cj).map(|(x, c)| c - 2.0 * self.delta * x).collect())
            .collect()
    }

    fn score(&self, g: &[Vec<f64>], atom: usize) -> f64 {
        self.space
            .allocation(atom)
            .iter()
            .enumerate()
            .map(|(j, &item)| g[j][item])
            .sum()
    }

    fn overlap(&self, a: usize, b: usize) -> f64 {
        let (x, y) = (self.space.allocation(a), self.space.allocation(b));
        x.iter().zip(y).filter(|(p, q)| p == q).count() as f64
    }

    fn linear(&self, atom: usize) -> f64 {
        self.space
            .allocation(atom)
            .iter()
            .enumerate()
            .map(|(j, &item)| self.c[j][item])
            .sum()
    }

    /// Maximizer of phi over the affine hull of `atoms`, as barycentric weights.
    fn affine_maximizer(&self, atoms: &[usize]) -> Option<Vec<f64>> {
        let k = atoms.len();
        let mut mat = vec![vec![0.0; k + 1]; k + 1];
        let mut rhs = vec![0.0; k + 1];
        for (r, &a) in atoms.iter().enumerate() {
            for (s, &b) in atoms.iter().enumerate() {
                mat[r][s] = 2.0 * self.delta * self.overlap(a, b);
            }
            mat[r][k] = 1.0;
            mat[k][r] = 1.0;
            rhs[r] = self.linear(a);
        }
        rhs[k] = 1.0;
        let sol = solve_dense(mat, rhs)?;
        Some(sol[..k].to_vec())
    }

    /// Runs major/minor cycles from `start` until the Frank–Wolfe gap is at most `tol`.
    ///
    /// Returns the last iterate even when `max_iters` is hit; the caller inspects `gap`.
    pub fn solve(&self, start: Corral, tol: f64, max_iters: usize) -> Result<CorralSolution> {
        let mut corral = start;
        let mut trace = Vec::new();
        let mut iterations = 0;
        loop {
            let m = self.marginals(&corral);
            let g = self.gradient(&m);
            let s = linear_oracle(self.space, &g)?;
            let s_score = self.score(&g, s);
            let z_score: f64 = corral
                .atoms
                .iter()
                .zip(&corral.weights)
                .map(|(&a, &w)| w * self.score(&g, a))
                .sum();
            let gap = (s_score - z_score).max(0.0);
            let value = self.value(&m);
            trace.push(TraceRow {
                iter: iterations,
                gap,
                q_value: value,
            });
            if gap <= tol || iterations >= max_iters {
                return Ok(CorralSolution {
                    corral,
                    marginals: m,
                    value,
                    gap,
                    iterations,
                    trace,
                });
            }
            iterations += 1;
            self.insert(&mut corral, s, gap, &m);
        }
    }

    fn insert(&self, corral: &mut Corral, s: usize, gap: f64, m: &[Vec<f64>]) {
        let fresh = !corral.atoms.contains(&s);
        if fresh {
            corral.atoms.push(s);
            corral.weights.push(0.0);
            self.make_independent(corral, s);
        }
        let fresh = fresh && corral.atoms.contains(&s);
        let mut first = fresh;
        for round in 0..=corral.atoms.len() + 1 {
            let Some(beta) = self.affine_maximizer(&corral.atoms) else {
                self.fallback_step(corral, s, gap, m);
                return;
            };
            if beta.iter().all(|&b| b > 0.0) {
                let unchanged = corral
                    .weights
                    .iter()
                    .zip(&beta)
                    .all(|(w, b)| (w - b).abs() <= 1e-15);
                if !fresh && round == 0 && unchanged {
                    // corral already affinely optimal yet the gap persists: rounding noise
                    self.fallback_step(corral, s, gap, m);
                    return;
                }
                corral.weights = beta;
                return;
            }
            // move from the current weights toward beta until a weight hits zero
            let (mut theta, mut drop) = (f64::INFINITY, usize::MAX);
            for (k, (&w, &b)) in corral.weights.iter().zip(&beta).enumerate() {
                if b <= 0.0 {
                    let t = if w - b > 0.0 { w / (w - b) } else { 0.0 };
                    if t < theta {
                        theta = t;
                        drop = k;
                    }
                }
            }
            if drop == usize::MAX {
                // beta is not finite
                self.fallback_step(corral, s, gap, m);
                return;
            }
            let theta = theta.min(1.0);
            if first && corral.atoms[drop] == s && theta == 0.0 {
                // the new vertex is rejected outright; numerically degenerate corral
                self.fallback_step(corral, s, gap, m);
                return;
            }
            first = false;
            for (w, b) in corral.weights.iter_mut().zip(&beta) {
                *w = (1.0 - theta) * *w + theta * b;
            }
            corral.weights[drop] = 0.0;
            let mut k = 0;
            while k < corral.atoms.len() {
                if corral.weights[k] <= 0.0 {
                    corral.atoms.remove(k);
                    corral.weights.remove(k);
                } else {
                    k += 1;
                }
            }
            let total: f64 = corral.weights.iter().sum();
            corral.weights.iter_mut().for_each(|w| *w /= total);
        }
    }

    /// Carathéodory reduction: while the atoms are affinely dependent, shift weight along
    /// the dependency (the point itself does not move) until an atom drops out. Weight is
    /// pushed toward `s` when it takes part in the dependency.
    fn make_independent(&self, corral: &mut Corral, s: usize) {
        while let Some(mut mu) = self.affine_dependency(&corral.atoms) {
            if let Some(pos) = corral.atoms.iter().position(|&a| a == s) {
                if mu[pos] > 0.0 {
                    mu.iter_mut().for_each(|x| *x = -*x);
                }
            }
            if mu.iter().all(|&x| x <= 0.0) {
                mu.iter_mut().for_each(|x| *x = -*x);
            }
            let (mut t, mut drop) = (f64::INFINITY, 0);
            for (k, (&w, &m)) in corral.weights.iter().zip(&mu).enumerate() {
                if m > 0.0 && w / m < t {
                    t = w / m;
                    drop = k;
                }
            }
            for (w, m) in corral.weights.iter_mut().zip(&mu) {
                *w = (*w - t * m).max(0.0);
            }
            corral.atoms.remove(drop);
            corral.weights.remove(drop);
        }
        let total: f64 = corral.weights.iter().sum();
        if total > 0.0 {
            corral.weights.iter_mut().for_each(|w| *w /= total);
        }
    }

    /// A vector `mu` with `Σ mu_a z(a) = 0` and `Σ mu_a = 0`, if the atoms admit one.
    fn affine_dependency(&self, atoms: &[usize]) -> Option<Vec<f64>> {
        let (n, items) = (self.space.n_agents(), self.space.n_items());
        let k = atoms.len();
        // rows: agent-item incidences plus the all-ones row; columns: atoms
        let mut m = vec![vec![0.0f64; k]; n * items + 1];
        for (c, &a) in atoms.iter().enumerate() {
            for (j, &y) in self.space.allocation(a).iter().enumerate() {
                m[j * items + y][c] = 1.0;
            }
            m[n * items][c] = 1.0;
        }
        // reduced row echelon form; the first free column yields the dependency
        let mut pivots: Vec<usize> = Vec::new();
        let mut row = 0;
        for col in 0..k {
            let piv = (row..m.len()).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()));
            match piv {
                Some(p) if m[p][col].abs() > 1e-9 => {
                    m.swap(row, p);
                    let d = m[row][col];
                    m[row].iter_mut().for_each(|x| *x /= d);
                    for r in 0..m.len() {
                        if r != row && m[r][col] != 0.0 {
                            let f = m[r][col];
                            for c in 0..k {
                                m[r][c] -= f * m[row][c];
                            }
                        }
                    }
                    pivots.push(col);
                    row += 1;
                }
                _ => {
                    let mut mu = vec![0.0; k];
                    mu[col] = 1.0;
                    for (r, &pc) in pivots.iter().enumerate() {
                        mu[pc] = -m[r][col];
                    }
                    return Some(mu);
                }
            }
        }
        None
    }

    /// Plain Frank–Wolfe step with exact line search toward vertex `s`.
    fn fallback_step(&self, corral: &mut Corral, s: usize, gap: f64, m: &[Vec<f64>]) {
        if let Some(pos) = corral.atoms.iter().position(|&a| a == s) {
            if corral.weights[pos] == 0.0 {
                corral.atoms.remove(pos);
                corral.weights.remove(pos);
            }
        }
        let dist2: f64 = self
            .space
            .allocation(s)
            .iter()
            .zip(m)
            .map(|(&item, mj)| 1.0 - 2.0 * mj[item] + mj.iter().map(|x| x * x).sum::<f64>())
            .sum();
        let gamma = if dist2 > 0.0 {
            (gap / (2.0 * self.delta * dist2)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        corral.weights.iter_mut().for_each(|w| *w *= 1.0 - gamma);
        match corral.atoms.iter().position(|&a| a == s) {
            Some(pos) => corral.weights[pos] += gamma,
            None => {
                corral.atoms.push(s);
                corral.weights.push(gamma);
            }
        }
        let mut k = 0;
        while k < corral.atoms.len() {
            if corral.weights[k] <= 0.0 {
                corral.atoms.remove(k);
                corral.weights.remove(k);
            } else {
                k += 1;
            }
        }
    }
}

/// Gaussian elimination with partial pivoting; `None` when numerically singular.
pub(crate) fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |acc, x| acc.max(x.abs()))
        .max(1e-300);
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}
