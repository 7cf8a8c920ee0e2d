// Saddle-point form of the maxmin welfare problem.
//
//     max_z Σ_j λ_j min_k <u_jk, m_j> − δ|z|²  =  min_θ φ(θ),
//     φ(θ) = max_z Σ_j λ_j Σ_k θ_jk <u_jk, m_j> − δ|z|²,
//
// with θ_j on the simplex over agent j's indices. Each φ evaluation is an expected-utility
// problem solved by the corral method. φ is convex and piecewise quadratic; on the piece
// belonging to the current corral its gradient is affine in θ, which gives an exact local
// quadratic model. Steps minimize that model over the product of simplices and are
// safeguarded by backtracking on the true φ, with projected-gradient steps as fallback.
//
// The reported gap is certified: best φ upper bound (plus inner gap) minus the best
// primal value actually attained.

use crate::error::Result;
use crate::instance::DeterministicSpace;
use crate::preferences::Preference;

use super::corral::{Corral, CorralSolution, Quadratic};
use super::{linear_oracle, SolverConfig, TraceRow};

pub(crate) struct Outcome {
    pub corral: Corral,
    pub gap: f64,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
}

struct Eval {
    theta: Vec<Vec<f64>>,
    inner: CorralSolution,
    /// φ(θ) upper bound, inner gap included.
    upper: f64,
    /// true objective at the inner maximizer.
    primal: f64,
    grad: Vec<Vec<f64>>,
}

struct Problem<'a> {
    space: &'a DeterministicSpace,
    prefs: &'a [Preference],
    lambda: &'a [f64],
    delta: f64,
    inner_tol: f64,
    max_iters: usize,
    /// Agents whose θ block is free: positive weight and several indices.
    free: Vec<usize>,
}

impl<'a> Problem<'a> {
    fn coefficients(&self, theta: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n_items = self.space.n_items();
        self.prefs
            .iter()
            .enumerate()
            .map(|(j, pref)| {
                let mut c = vec![0.0; n_items];
                for (t, u) in theta[j].iter().zip(pref.indices()) {
                    for (ci, ui) in c.iter_mut().zip(u) {
                        *ci += self.lambda[j] * t * ui;
                    }
                }
                c
            })
            .collect()
    }

    fn primal(&self, m: &[Vec<f64>]) -> f64 {
        let mut v = 0.0;
        for (j, pref) in self.prefs.iter().enumerate() {
            let g: f64 = m[j].iter().map(|x| x * x).sum();
            v -= self.delta * g;
            if self.lambda[j] != 0.0 {
                let u = pref
                    .indices()
                    .iter()
                    .map(|u| u.iter().zip(&m[j]).map(|(a, b)| a * b).sum::<f64>())
                    .fold(f64::INFINITY, f64::min);
                v += self.lambda[j] * u;
            }
        }
        v
    }

    fn evaluate(&self, theta: Vec<Vec<f64>>, start: Corral) -> Result<Eval> {
        let quad = Quadratic {
            space: self.space,
            c: self.coefficients(&theta),
            delta: self.delta,
        };
        let inner = quad.solve(start, self.inner_tol, self.max_iters)?;
        let upper = inner.value + inner.gap;
        let primal = self.primal(&inner.marginals);
        let grad = self
            .prefs
            .iter()
            .enumerate()
            .map(|(j, pref)| {
                pref.indices()
                    .iter()
                    .map(|u| {
                        self.lambda[j] * u.iter().zip(&inner.marginals[j]).map(|(a, b)| a * b).sum::<f64>()
                    })
                    .collect()
            })
            .collect();
        Ok(Eval {
            theta,
            inner,
            upper,
            primal,
            grad,
        })
    }

    /// Quadratic model of φ on the current corral's piece, over the free coordinates:
    /// gradient(θ) = H θ + h.
    fn local_model(&self, inner: &CorralSolution) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
        let atoms = &inner.corral.atoms;
        let k = atoms.len();
        let mut bordered = vec![vec![0.0; k + 1]; k + 1];
        for (r, &a) in atoms.iter().enumerate() {
            for (s, &b) in atoms.iter().enumerate() {
                let overlap = self
                    .space
                    .allocation(a)
                    .iter()
                    .zip(self.space.allocation(b))
                    .filter(|(x, y)| x == y)
                    .count();
                bordered[r][s] = 2.0 * self.delta * overlap as f64;
            }
            bordered[r][k] = 1.0;
            bordered[k][r] = 1.0;
        }
        let inv = invert(bordered)?;
        // W[a][(j,k)] = λ_j u_jk(a_j), restricted to the free coordinates
        let cols: Vec<(usize, usize)> = self
            .free
            .iter()
            .flat_map(|&j| (0..self.prefs[j].indices().len()).map(move |q| (j, q)))
            .collect();
        let w: Vec<Vec<f64>> = atoms
            .iter()
            .map(|&a| {
                cols.iter()
                    .map(|&(j, q)| {
                        self.lambda[j] * self.prefs[j].indices()[q][self.space.allocation(a)[j]]
                    })
                    .collect()
            })
            .collect();
        // constant part from the fixed coordinates enters through the right-hand side
        let fixed_theta = |j: usize| !self.free.contains(&j);
        let c_fixed: Vec<f64> = atoms
            .iter()
            .map(|&a| {
                (0..self.prefs.len())
                    .filter(|&j| fixed_theta(j) && self.lambda[j] != 0.0)
                    .map(|j| self.lambda[j] * self.prefs[j].indices()[0][self.space.allocation(a)[j]])
                    .sum()
            })
            .collect();
        // β(θ) = P (W θ + c_fixed) + q
        let p = |r: usize, s: usize| inv[r][s];
        let q: Vec<f64> = (0..k).map(|r| inv[r][k]).collect();
        let beta0: Vec<f64> = (0..k)
            .map(|r| q[r] + (0..k).map(|s| p(r, s) * c_fixed[s]).sum::<f64>())
            .collect();
        let n = cols.len();
        let pw: Vec<Vec<f64>> = (0..k)
            .map(|r| (0..n).map(|c| (0..k).map(|s| p(r, s) * w[s][c]).sum()).collect())
            .collect();
        let h: Vec<Vec<f64>> = (0..n)
            .map(|c1| (0..n).map(|c2| (0..k).map(|r| w[r][c1] * pw[r][c2]).sum()).collect())
            .collect();
        let lin: Vec<f64> = (0..n).map(|c| (0..k).map(|r| w[r][c] * beta0[r]).sum()).collect();
        Some((h, lin))
    }

    fn blocks(&self) -> Vec<usize> {
        self.free.iter().map(|&j| self.prefs[j].indices().len()).collect()
    }

    fn flatten(&self, theta: &[Vec<f64>]) -> Vec<f64> {
        self.free.iter().flat_map(|&j| theta[j].iter().copied()).collect()
    }

    fn unflatten(&self, base: &[Vec<f64>], flat: &[f64]) -> Vec<Vec<f64>> {
        let mut theta = base.to_vec();
        let mut pos = 0;
        for &j in &self.free {
            let len = theta[j].len();
            theta[j].copy_from_slice(&flat[pos..pos + len]);
            pos += len;
        }
        theta
    }
}

pub(crate) fn solve(
    space: &DeterministicSpace,
    prefs: &[Preference],
    lambda: &[f64],
    cfg: &SolverConfig,
    start: Option<usize>,
) -> Result<Outcome> {
    let free: Vec<usize> = (0..prefs.len())
        .filter(|&j| lambda[j] > 0.0 && prefs[j].indices().len() > 1)
        .collect();
    let problem = Problem {
        space,
        prefs,
        lambda,
        delta: cfg.delta,
        inner_tol: if free.is_empty() {
            cfg.opt_tol
        } else {
            (cfg.opt_tol * 1e-3).max(1e-15)
        },
        max_iters: cfg.max_iters,
        free,
    };
    let theta0: Vec<Vec<f64>> = prefs
        .iter()
        .map(|p| {
            let k = p.indices().len();
            vec![1.0 / k as f64; k]
        })
        .collect();
    let start_vertex = match start {
        Some(s) => s,
        None => {
            let c = problem.coefficients(&theta0);
            linear_oracle(space, &c)?
        }
    };
    let mut cur = problem.evaluate(
        theta0,
        Corral {
            atoms: vec![start_vertex],
            weights: vec![1.0],
        },
    )?;
    let mut iterations = cur.inner.iterations;
    let mut trace = cur.inner.trace.clone();
    if problem.free.is_empty() {
        return Ok(Outcome {
            gap: cur.inner.gap,
            corral: cur.inner.corral,
            iterations,
            trace,
        });
    }

    let mut bounds = Bounds {
        primal: cur.primal,
        corral: cur.inner.corral.clone(),
        upper: cur.upper,
        iterations: 0,
    };
    let blocks = problem.blocks();
    loop {
        iterations += std::mem::take(&mut bounds.iterations);
        let gap = (bounds.upper - bounds.primal).max(0.0);
        trace.push(TraceRow {
            iter: iterations,
            gap,
            q_value: bounds.primal,
        });
        if gap <= cfg.opt_tol || iterations >= cfg.max_iters {
            return Ok(Outcome {
                corral: bounds.corral,
                gap,
                iterations,
                trace,
            });
        }
        iterations += 1;

        let x = problem.flatten(&cur.theta);
        let g = problem.flatten(&cur.grad);
        let mut next = None;
        if let Some((h, lin)) = problem.local_model(&cur.inner) {
            let target = minimize_model(&h, &lin, &x, &blocks);
            next = line_search(&problem, &cur, &x, &target, 30, &mut bounds)?;
        }
        if next.is_none() {
            // projected gradient with backtracking
            let scale = lambda_norm(&problem);
            let mut step = 2.0 * cfg.delta / scale.max(1e-300);
            for _ in 0..60 {
                let y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
                let y = project_blocks(&y, &blocks);
                if let Some(e) = line_search(&problem, &cur, &x, &y, 1, &mut bounds)? {
                    next = Some(e);
                    break;
                }
                step *= 0.5;
            }
        }
        let Some(e) = next else {
            // no descent available at working precision; the failed trials may still
            // have tightened the bounds
            iterations += bounds.iterations;
            return Ok(Outcome {
                gap: (bounds.upper - bounds.primal).max(0.0),
                corral: bounds.corral,
                iterations,
                trace,
            });
        };
        cur = e;
    }
}

fn lambda_norm(p: &Problem) -> f64 {
    p.free
        .iter()
        .map(|&j| {
            let s: f64 = p.prefs[j]
                .indices()
                .iter()
                .map(|u| u.iter().map(|x| x * x).sum::<f64>())
                .sum();
            p.lambda[j] * p.lambda[j] * s
        })
        .sum::<f64>()
        * p.space.n_agents() as f64
}

/// Best bounds seen at any evaluated θ: every φ value bounds the optimum from above and
/// every inner maximizer is a feasible primal point, whether or not the step is taken.
struct Bounds {
    primal: f64,
    corral: Corral,
    upper: f64,
    /// Inner iterations spent since the caller last collected them.
    iterations: usize,
}

/// Tries `x + t (target − x)` for t = 1, 1/2, ... and accepts the first that lowers φ.
fn line_search(
    problem: &Problem,
    cur: &Eval,
    x: &[f64],
    target: &[f64],
    tries: usize,
    bounds: &mut Bounds,
) -> Result<Option<Eval>> {
    let mut t = 1.0;
    for _ in 0..tries {
        let y: Vec<f64> = x.iter().zip(target).map(|(a, b)| a + t * (b - a)).collect();
        if y.iter().zip(x).all(|(a, b)| a == b) {
            return Ok(None);
        }
        let theta = problem.unflatten(&cur.theta, &y);
        let e = problem.evaluate(theta, cur.inner.corral.clone())?;
        bounds.iterations += e.inner.iterations;
        bounds.upper = bounds.upper.min(e.upper);
        if e.primal > bounds.primal {
            bounds.primal = e.primal;
            bounds.corral = e.inner.corral.clone();
        }
        if e.upper < cur.upper {
            return Ok(Some(e));
        }
        t *= 0.5;
    }
    Ok(None)
}

/// Accelerated projected gradient for `½ θᵀHθ + linᵀθ` over a product of simplices.
fn minimize_model(h: &[Vec<f64>], lin: &[f64], x0: &[f64], blocks: &[usize]) -> Vec<f64> {
    let n = x0.len();
    let lip = h
        .iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let grad = |x: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|r| lin[r] + (0..n).map(|c| h[r][c] * x[c]).sum::<f64>())
            .collect()
    };
    if lip <= 0.0 {
        // linear model: the minimizer sits at a vertex of each block
        let g = grad(x0);
        let mut out = vec![0.0; n];
        let mut pos = 0;
        for &len in blocks {
            let best = (pos..pos + len)
                .min_by(|&a, &b| g[a].total_cmp(&g[b]))
                .unwrap_or(pos);
            out[best] = 1.0;
            pos += len;
        }
        return out;
    }
    let step = 1.0 / lip;
    let mut x = x0.to_vec();
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..5000 {
        let g = grad(&y);
        let z: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        let x_new = project_blocks(&z, blocks);
        let t_new = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let moved = x_new
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        y = x_new
            .iter()
            .zip(&x)
            .map(|(a, b)| a + (t - 1.0) / t_new * (a - b))
            .collect();
        x = x_new;
        t = t_new;
        if moved <= 1e-15 {
            break;
        }
    }
    x
}

/// Euclidean projection of each block onto its probability simplex.
fn project_blocks(v: &[f64], blocks: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    let mut pos = 0;
    for &len in blocks {
        out.extend(project_simplex(&v[pos..pos + len]));
        pos += len;
    }
    out
}

fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - 1.0) / (i + 1) as f64;
        if s - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

/// Gauss–Jordan inverse; `None` when numerically singular.
fn invert(mut a: Vec<Vec<f64>>) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |acc, x| acc.max(x.abs()))
        .max(1e-300);
    let mut inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        inv.swap(col, piv);
        let d = a[col][col];
        for c in 0..n {
            a[col][c] /= d;
            inv[col][c] /= d;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r][col];
            if f == 0.0 {
                continue;
            }
            for c in 0..n {
                a[r][c] -= f * a[col][c];
                inv[r][c] -= f * inv[col][c];
            }
        }
    }
    Some(inv)
}
