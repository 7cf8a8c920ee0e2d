//! Brute-force re-checks for small instances, independent of the solvers.
//!
//! [`grid_maximize_q`] sweeps a grid over all lotteries; [`certify`] recomputes envy and
//! the weak-Pareto gap of a certificate in exact rational arithmetic, the gap as a linear
//! program over every allocation.

use num_traits::{One, Signed, Zero};
use rayon::prelude::*;

use crate::error::{FairDivError, Result};
use crate::instance::DeterministicSpace;
use crate::lp::maximin_value;
use crate::preferences::{Lottery, Preference};
use crate::qsolver::{q_objective, solve_q, SolverConfig, WeightVector};
use crate::rational::{self, Rational};
use crate::sperner::FairCertificate;

/// Largest space [`grid_maximize_q`] sweeps.
pub const MAX_GRID_ALLOCATIONS: usize = 6;
/// Largest space [`certify`] solves exactly.
pub const MAX_EXACT_ALLOCATIONS: usize = 2_000;
pub const DEFAULT_RESOLUTION: usize = 64;
/// How far a certificate's stored values may sit from the recomputed ones.
pub const STORED_VALUE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    Grid,
    ExhaustiveVertex,
    Lp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub method: OracleMethod,
    pub best_value: f64,
    pub witness: Lottery,
    pub agrees_with_solver: bool,
    pub discrepancy: f64,
    /// What `discrepancy` was compared against.
    pub tolerance: f64,
}

impl OracleReport {
    pub fn to_key_values(&self) -> String {
        format!(
            "method={:?}\nbest_value={:e}\nagrees_with_solver={}\ndiscrepancy={:e}\ntolerance={:e}\n",
            self.method, self.best_value, self.agrees_with_solver, self.discrepancy, self.tolerance
        )
    }
}

/// Bound on how much `Q` changes per unit of ℓ1 distance between lotteries:
/// `Σ_j λ_j·range_j/2 + 2δN`. Utilities move by at most half their range per unit since
/// a lottery difference sums to zero; each `‖m_j‖²` moves by at most 2.
pub fn q_lipschitz(prefs: &[Preference], lambda: &[f64], delta: f64) -> f64 {
    let utility: f64 = prefs.iter().zip(lambda).map(|(p, l)| l * p.range() / 2.0).sum();
    utility + 2.0 * delta * prefs.len() as f64
}

/// Every composition of `total` into `parts` nonnegative integers, the first fixed to `first`.
fn compositions(parts: usize, total: usize, first: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut c = vec![0; parts];
    c[0] = first;
    fn rec(i: usize, left: usize, c: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i + 1 == c.len() {
            c[i] = left;
            out.push(c.clone());
            return;
        }
        for x in 0..=left {
            c[i] = x;
            rec(i + 1, left - x, c, out);
        }
    }
    if parts == 1 {
        out.push(vec![total]);
    } else {
        rec(1, total - first, &mut c, &mut out);
    }
    out
}

/// Best `Q` over lotteries with weights in multiples of `1/resolution`, compared with
/// [`solve_q`]. They agree when they differ by at most the solver's duality gap plus the
/// grid slack `L·|X|/resolution` (every lottery is within ℓ1 distance `|X|/resolution`
/// of the grid; `L` from [`q_lipschitz`]).
pub fn grid_maximize_q(
    space: &DeterministicSpace,
    prefs: &[Preference],
    lambda: &WeightVector,
    delta: f64,
    resolution: usize,
) -> Result<OracleReport> {
    let m = space.len();
    if m > MAX_GRID_ALLOCATIONS {
        return Err(FairDivError::TooLarge(format!(
            "{m} allocations; the grid oracle takes at most {MAX_GRID_ALLOCATIONS}"
        )));
    }
    if resolution == 0 {
        return Err(FairDivError::InvalidConfig("grid resolution must be positive".into()));
    }
    let lam = lambda.to_f64();
    let r = resolution as f64;
    // sweep in parallel over the first coordinate; the reduction keeps the earliest
    // point among equal values so the witness does not depend on scheduling
    let best = (0..=resolution)
        .into_par_iter()
        .map(|first| -> Result<(f64, Vec<usize>)> {
            let mut best: Option<(f64, Vec<usize>)> = None;
            for c in compositions(m, resolution, first) {
                let support = c.iter().enumerate().map(|(x, &k)| (x, k as f64 / r)).collect();
                let p = Lottery::normalized(support, m)?;
                let (q, _) = q_objective(space, prefs, &lam, delta, &p)?;
                if best.as_ref().map_or(true, |b| q > b.0) {
                    best = Some((q, c));
                }
            }
            Ok(best.expect("at least one grid point"))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(None::<(f64, Vec<usize>)>, |acc, b| match acc {
            Some(a) if a.0 >= b.0 => Some(a),
            _ => Some(b),
        })
        .expect("nonempty sweep");
    let witness = Lottery::normalized(
        best.1.iter().enumerate().map(|(x, &k)| (x, k as f64 / r)).collect(),
        m,
    )?;
    // the tolerance below absorbs whatever gap the reference solve ends with
    let mut sol = None;
    for tol in [1e-12, 1e-10, 1e-8] {
        match solve_q(space, prefs, lambda, &SolverConfig::new(delta, tol, 200_000)?) {
            Err(e @ FairDivError::NonConvergence { .. }) => sol = Some(Err(e)),
            other => {
                sol = Some(other);
                break;
            }
        }
    }
    let sol = sol.expect("at least one tolerance")?;
    let slack = q_lipschitz(prefs, &lam, delta) * m as f64 / r;
    let tolerance = sol.duality_gap.max(0.0) + slack + 1e-12;
    let discrepancy = (best.0 - sol.q_value).abs();
    Ok(OracleReport {
        method: OracleMethod::Grid,
        best_value: best.0,
        witness,
        agrees_with_solver: discrepancy <= tolerance,
        discrepancy,
        tolerance,
    })
}

/// The rational a float's shortest decimal form denotes, so `0.45` is `9/20`.
pub fn exact(x: f64) -> Result<Rational> {
    rational::parse(&format!("{x:e}"))
}

/// Utility of each agent for each agent's marginal, `table[j][k] = U_j(p^k)`, exactly.
fn utility_table(
    space: &DeterministicSpace,
    prefs: &[Preference],
    support: &[(usize, Rational)],
) -> Result<(Vec<Vec<Rational>>, Vec<Vec<Vec<Rational>>>)> {
    let n = space.n_agents();
    let mut marg = vec![vec![Rational::zero(); space.n_items()]; n];
    for (idx, w) in support {
        for (k, &item) in space.allocation(*idx).iter().enumerate() {
            marg[k][item] += w;
        }
    }
    let indices = prefs
        .iter()
        .map(|p| {
            p.indices()
                .iter()
                .map(|u| u.iter().map(|&x| exact(x)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let table = (0..n)
        .map(|j| {
            (0..n)
                .map(|k| {
                    indices[j]
                        .iter()
                        .map(|u| u.iter().zip(&marg[k]).map(|(a, b)| a * b).sum::<Rational>())
                        .min()
                        .expect("at least one index")
                })
                .collect()
        })
        .collect();
    Ok((table, indices))
}

/// Exact envy matrix and weak-Pareto gap of a lottery, with the improving lottery.
pub fn exact_envy_and_gap(
    space: &DeterministicSpace,
    prefs: &[Preference],
    p: &Lottery,
) -> Result<(Vec<Vec<Rational>>, Rational, Vec<(usize, Rational)>)> {
    if prefs.len() != space.n_agents() || prefs.iter().any(|q| q.n_items() != space.n_items()) {
        return Err(FairDivError::DimensionMismatch("preferences do not match the space".into()));
    }
    let m = space.len();
    if m > MAX_EXACT_ALLOCATIONS {
        return Err(FairDivError::TooLarge(format!(
            "{m} allocations; exact certification takes at most {MAX_EXACT_ALLOCATIONS}"
        )));
    }
    let mut support = p
        .support()
        .iter()
        .map(|&(idx, w)| Ok((idx, exact(w)?)))
        .collect::<Result<Vec<_>>>()?;
    if support.iter().any(|(idx, _)| *idx >= m) {
        return Err(FairDivError::InvalidLottery("allocation index out of range".into()));
    }
    let total: Rational = support.iter().map(|(_, w)| w).sum();
    for (_, w) in support.iter_mut() {
        *w /= &total;
    }
    let (table, indices) = utility_table(space, prefs, &support)?;
    let n = space.n_agents();
    let envy = (0..n)
        .map(|j| (0..n).map(|k| if j == k { Rational::zero() } else { &table[j][k] - &table[j][j] }).collect())
        .collect();
    // max_q min_{j,k} u_jk·q − U_j(p) over all allocations
    let payoff: Vec<Vec<Rational>> = (0..n)
        .flat_map(|j| indices[j].iter().map(move |u| (j, u)))
        .map(|(j, u)| {
            (0..m)
                .map(|x| &u[space.allocation(x)[j]] - &table[j][j])
                .collect()
        })
        .collect();
    let (gap, w) = maximin_value(&payoff)
        .ok_or_else(|| FairDivError::Certification(vec!["weak-Pareto program has no solution".into()]))?;
    let witness = w.into_iter().enumerate().filter(|(_, v)| v.is_positive()).collect();
    Ok((envy, gap, witness))
}

/// Recomputes a certificate's envy and weak-Pareto gap exactly and checks
/// `max_envy ≤ ε` and `wpe_gap ≤ ε + δN`, and that the stored values match the
/// recomputed ones within [`STORED_VALUE_TOL`]. Every failed check is listed in the error.
pub fn certify(
    space: &DeterministicSpace,
    prefs: &[Preference],
    cert: &FairCertificate,
    eps: f64,
) -> Result<OracleReport> {
    let (envy, gap, witness) = exact_envy_and_gap(space, prefs, &cert.lottery)?;
    let max_envy = envy
        .iter()
        .flatten()
        .max()
        .cloned()
        .unwrap_or_else(Rational::zero);
    let (envy_f, gap_f) = (rational::to_f64(&max_envy), rational::to_f64(&gap));
    let n = space.n_agents() as f64;
    let wpe_bound = eps + cert.delta_final * n;
    let mut violations = Vec::new();
    if envy_f > eps {
        let (j, k) = (0..envy.len())
            .flat_map(|j| (0..envy.len()).map(move |k| (j, k)))
            .find(|&(j, k)| envy[j][k] == max_envy)
            .expect("max is attained");
        violations.push(format!(
            "agent {} envies agent {} by {envy_f:e} > eps {eps:e}",
            j + 1,
            k + 1
        ));
    }
    if gap_f > wpe_bound {
        violations.push(format!("weak-Pareto gap {gap_f:e} > eps + delta*N = {wpe_bound:e}"));
    }
    let discrepancy = (envy_f - cert.max_envy).abs().max((gap_f - cert.wpe_gap).abs());
    if discrepancy > STORED_VALUE_TOL {
        violations.push(format!(
            "stored max_envy {:e} / wpe_gap {:e} differ from recomputed {envy_f:e} / {gap_f:e}",
            cert.max_envy, cert.wpe_gap
        ));
    }
    if !violations.is_empty() {
        return Err(FairDivError::Certification(violations));
    }
    let total: Rational = witness.iter().map(|(_, w): &(usize, Rational)| w).sum();
    debug_assert!(total.is_one());
    Ok(OracleReport {
        method: OracleMethod::Lp,
        best_value: gap_f,
        witness: Lottery::normalized(
            witness.iter().map(|(x, w)| (*x, rational::to_f64(w))).collect(),
            space.len(),
        )?,
        agrees_with_solver: true,
        discrepancy,
        tolerance: STORED_VALUE_TOL,
    })
}

/// Best `Σ_j λ_j U_j` over single allocations; for expected-utility profiles this is the
/// welfare optimum over all lotteries.
pub fn best_vertex_welfare(
    space: &DeterministicSpace,
    prefs: &[Preference],
    lambda: &WeightVector,
) -> Result<OracleReport> {
    let lam = lambda.to_f64();
    let mut best = (0, f64::NEG_INFINITY);
    for x in 0..space.len() {
        let (_, w) = q_objective(space, prefs, &lam, 0.0, &Lottery::point(x))?;
        if w > best.1 {
            best = (x, w);
        }
    }
    Ok(OracleReport {
        method: OracleMethod::ExhaustiveVertex,
        best_value: best.1,
        witness: Lottery::point(best.0),
        agrees_with_solver: true,
        discrepancy: 0.0,
        tolerance: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gen_cake_space, gen_hz};
    use crate::preferences::max_envy;
    use crate::rational::ratio;

    #[test]
    fn exact_parses_shortest_decimal() {
        assert_eq!(exact(0.45).unwrap(), ratio(9, 20));
        assert_eq!(exact(-3.0).unwrap(), ratio(-3, 1));
        assert_eq!(exact(1e-3).unwrap(), ratio(1, 1000));
    }

    #[test]
    fn compositions_count() {
        let total: usize = (0..=4).map(|f| compositions(3, 4, f).len()).sum();
        assert_eq!(total, 15);
        assert_eq!(compositions(1, 4, 4), vec![vec![4]]);
    }

    #[test]
    fn single_allocation_grid() {
        let space = gen_cake_space(1, 1).unwrap();
        let prefs = vec![Preference::eu(vec![1.0; space.n_items()])];
        assert_eq!(space.len(), 1);
        let r = grid_maximize_q(&space, &prefs, &WeightVector::uniform(1), 0.1, 8).unwrap();
        assert_eq!(r.witness, Lottery::point(0));
        assert!(r.agrees_with_solver);
    }

    #[test]
    fn symmetric_two_allocations_midpoint() {
        let space = gen_hz(2).unwrap();
        let same = Preference::eu(vec![1.0, 0.0]);
        let prefs = vec![same.clone(), same];
        let r = grid_maximize_q(&space, &prefs, &WeightVector::uniform(2), 0.05, 64).unwrap();
        assert_eq!(r.witness.support(), &[(0, 0.5), (1, 0.5)]);
        assert!(r.agrees_with_solver, "{r:?}");
    }

    #[test]
    fn grid_refuses_large_spaces() {
        let space = gen_hz(4).unwrap();
        let prefs = vec![Preference::eu(vec![0.0; 4]); 4];
        assert!(matches!(
            grid_maximize_q(&space, &prefs, &WeightVector::uniform(4), 0.1, 4),
            Err(FairDivError::TooLarge(_))
        ));
    }

    #[test]
    fn exact_envy_matches_float() {
        let space = gen_hz(2).unwrap();
        let prefs = vec![Preference::eu(vec![0.3, 0.9]), Preference::eu(vec![0.6, 0.2])];
        let p = Lottery::new(vec![(0, 0.25), (1, 0.75)], 2).unwrap();
        let (envy, gap, _) = exact_envy_and_gap(&space, &prefs, &p).unwrap();
        let top = envy.iter().flatten().max().unwrap();
        assert!((rational::to_f64(top) - max_envy(&space, &p, &prefs).unwrap()).abs() < 1e-15);
        // the point mass on (item 2, item 1) gives both agents their favorite
        assert!(gap.is_positive());
    }
}
