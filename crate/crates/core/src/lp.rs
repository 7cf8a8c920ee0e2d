//! Dense two-phase tableau simplex, generic over the scalar field.
//!
//! Solves `max c·x  s.t.  A x = b, x >= 0` with Bland's rule, so it terminates on
//! degenerate problems. Sized for the small programs used by the weak-Pareto gap and
//! the verification oracle; not a general-purpose solver.

use std::cmp::Ordering;

use num_traits::{One, Signed, Zero};

use crate::rational::{self, Rational};

pub trait LpScalar: Clone + std::fmt::Debug {
    fn zero() -> Self;
    fn one() -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    /// Sign with the field's notion of zero.
    fn signum_cmp(&self) -> Ordering;
    fn cmp_value(&self, o: &Self) -> Ordering;
}

/// Entries with magnitude below this are treated as zero in floating point.
pub const F64_ZERO: f64 = 1e-11;

impl LpScalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn signum_cmp(&self) -> Ordering {
        if *self > F64_ZERO {
            Ordering::Greater
        } else if *self < -F64_ZERO {
            Ordering::Less
        } else {
            Ordering::Equal
        }
    }
    fn cmp_value(&self, o: &Self) -> Ordering {
        self.partial_cmp(o).unwrap_or(Ordering::Equal)
    }
}

impl LpScalar for Rational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self.clone()
    }
    fn signum_cmp(&self) -> Ordering {
        if self.is_positive() {
            Ordering::Greater
        } else if self.is_negative() {
            Ordering::Less
        } else {
            Ordering::Equal
        }
    }
    fn cmp_value(&self, o: &Self) -> Ordering {
        self.cmp(o)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome<S> {
    Optimal { x: Vec<S>, value: S },
    Infeasible,
    Unbounded,
}

/// `max c·x  s.t.  A x = b, x >= 0`.
#[derive(Debug, Clone)]
pub struct EqualityLp<S> {
    pub a: Vec<Vec<S>>,
    pub b: Vec<S>,
    pub c: Vec<S>,
}

struct Tableau<S> {
    rows: Vec<Vec<S>>,
    rhs: Vec<S>,
    basis: Vec<usize>,
}

impl<S: LpScalar> Tableau<S> {
    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.rows[r][col].clone();
        for x in self.rows[r].iter_mut() {
            *x = x.div(&p);
        }
        self.rhs[r] = self.rhs[r].div(&p);
        let pivot_row = self.rows[r].clone();
        let pivot_rhs = self.rhs[r].clone();
        for k in 0..self.rows.len() {
            if k == r {
                continue;
            }
            let f = self.rows[k][col].clone();
            if f.signum_cmp() == Ordering::Equal {
                continue;
            }
            for (x, y) in self.rows[k].iter_mut().zip(&pivot_row) {
                *x = x.sub(&f.mul(y));
            }
            self.rhs[k] = self.rhs[k].sub(&f.mul(&pivot_rhs));
        }
        self.basis[r] = col;
    }

    /// Maximizes `cost` over the current basis; columns `>= allowed` never enter.
    fn optimize(&mut self, cost: &[S], allowed: usize) -> bool {
        loop {
            // reduced cost c_j - c_B B^-1 A_j
            let entering = (0..allowed).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let mut rc = cost[j].clone();
                for (r, &bv) in self.basis.iter().enumerate() {
                    rc = rc.sub(&cost[bv].mul(&self.rows[r][j]));
                }
                rc.signum_cmp() == Ordering::Greater
            });
            let Some(col) = entering else {
                return true;
            };
            let mut best: Option<(usize, S)> = None;
            for r in 0..self.rows.len() {
                if self.rows[r][col].signum_cmp() != Ordering::Greater {
                    continue;
                }
                let ratio = self.rhs[r].div(&self.rows[r][col]);
                let better = match &best {
                    None => true,
                    Some((br, bratio)) => match ratio.cmp_value(bratio) {
                        Ordering::Less => true,
                        Ordering::Equal => self.basis[r] < self.basis[*br],
                        Ordering::Greater => false,
                    },
                };
                if better {
                    best = Some((r, ratio));
                }
            }
            match best {
                Some((r, _)) => self.pivot(r, col),
                None => return false,
            }
        }
    }
}

impl<S: LpScalar> EqualityLp<S> {
    pub fn solve(&self) -> LpOutcome<S> {
        let m = self.a.len();
        let n = self.c.len();
        let mut rows = Vec::with_capacity(m);
        let mut rhs = Vec::with_capacity(m);
        for (i, row) in self.a.iter().enumerate() {
            assert_eq!(row.len(), n, "constraint row {i} has wrong width");
            let flip = self.b[i].signum_cmp() == Ordering::Less;
            let mut r: Vec<S> = row.iter().map(|x| if flip { x.neg() } else { x.clone() }).collect();
            r.extend((0..m).map(|k| if k == i { S::one() } else { S::zero() }));
            rows.push(r);
            rhs.push(if flip { self.b[i].neg() } else { self.b[i].clone() });
        }
        let mut t = Tableau {
            rows,
            rhs,
            basis: (n..n + m).collect(),
        };

        let mut phase1 = vec![S::zero(); n + m];
        for c in phase1.iter_mut().skip(n) {
            *c = S::one().neg();
        }
        t.optimize(&phase1, n + m);
        let infeas = t
            .basis
            .iter()
            .zip(&t.rhs)
            .filter(|(&bv, _)| bv >= n)
            .any(|(_, v)| v.signum_cmp() == Ordering::Greater);
        if infeas {
            return LpOutcome::Infeasible;
        }
        // drive zero-level artificials out; drop rows that are redundant
        let mut r = 0;
        while r < t.rows.len() {
            if t.basis[r] >= n {
                match (0..n).find(|&j| t.rows[r][j].signum_cmp() != Ordering::Equal) {
                    Some(j) => t.pivot(r, j),
                    None => {
                        t.rows.remove(r);
                        t.rhs.remove(r);
                        t.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }

        let mut cost = self.c.clone();
        cost.extend((0..m).map(|_| S::zero()));
        if !t.optimize(&cost, n) {
            return LpOutcome::Unbounded;
        }
        let mut x = vec![S::zero(); n];
        for (r, &bv) in t.basis.iter().enumerate() {
            if bv < n {
                x[bv] = t.rhs[r].clone();
            }
        }
        let value = x
            .iter()
            .zip(&self.c)
            .fold(S::zero(), |acc, (xi, ci)| acc.add(&xi.mul(ci)));
        LpOutcome::Optimal { x, value }
    }
}

/// Value and an optimal mixed strategy of the column player in `max_w min_r (M w)_r`.
///
/// `payoff[r][x]` is the payoff of column `x` against row `r`.
pub fn maximin_value<S: LpScalar>(payoff: &[Vec<S>]) -> Option<(S, Vec<S>)> {
    let rows = payoff.len();
    let cols = payoff.first()?.len();
    // variables: w (cols), t+, t-, slack (rows)
    let width = cols + 2 + rows;
    let mut a = Vec::with_capacity(rows + 1);
    let mut b = Vec::with_capacity(rows + 1);
    for (r, row) in payoff.iter().enumerate() {
        // sum_x M[r][x] w_x - t+ + t- - s_r = 0
        let mut line = vec![S::zero(); width];
        line[..cols].clone_from_slice(row);
        line[cols] = S::one().neg();
        line[cols + 1] = S::one();
        line[cols + 2 + r] = S::one().neg();
        a.push(line);
        b.push(S::zero());
    }
    let mut simplex = vec![S::zero(); width];
    for v in simplex.iter_mut().take(cols) {
        *v = S::one();
    }
    a.push(simplex);
    b.push(S::one());
    let mut c = vec![S::zero(); width];
    c[cols] = S::one();
    c[cols + 1] = S::one().neg();
    match (EqualityLp { a, b, c }).solve() {
        LpOutcome::Optimal { x, value } => Some((value, x[..cols].to_vec())),
        _ => None,
    }
}

/// Value and an optimal mixed strategy of the row player in `min_y max_x (y^T M)_x`.
pub fn minimax_rows<S: LpScalar>(payoff: &[Vec<S>]) -> Option<(S, Vec<S>)> {
    let rows = payoff.len();
    let cols = payoff.first()?.len();
    let transposed: Vec<Vec<S>> = (0..cols)
        .map(|x| (0..rows).map(|r| payoff[r][x].neg()).collect())
        .collect();
    // min_y max_x y^T M = -max_y min_x y^T (-M)
    let (v, y) = maximin_value(&transposed)?;
    Some((v.neg(), y))
}

/// [`maximin_value`] in floating point, redone in exact arithmetic if roundoff makes
/// the float tableau report no solution.
pub fn maximin_value_f64(payoff: &[Vec<f64>]) -> Option<(f64, Vec<f64>)> {
    maximin_value(payoff).or_else(|| exact_game(payoff, maximin_value))
}

/// [`minimax_rows`] with the same exact fallback.
pub fn minimax_rows_f64(payoff: &[Vec<f64>]) -> Option<(f64, Vec<f64>)> {
    minimax_rows(payoff).or_else(|| exact_game(payoff, minimax_rows))
}

fn exact_game(
    payoff: &[Vec<f64>],
    solve: fn(&[Vec<Rational>]) -> Option<(Rational, Vec<Rational>)>,
) -> Option<(f64, Vec<f64>)> {
    let exact: Vec<Vec<Rational>> = payoff
        .iter()
        .map(|row| row.iter().map(|&x| Rational::from_float(x)).collect::<Option<_>>())
        .collect::<Option<_>>()?;
    let (v, w) = solve(&exact)?;
    Some((rational::to_f64(&v), w.iter().map(rational::to_f64).collect()))
}
