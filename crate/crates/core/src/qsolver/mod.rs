//! Regularized welfare maximization over lotteries.
//!
//! `Q(p) = Σ λ_j U_j(p) − δ G(p)` with `G(p) = Σ_j |p^j|²`. The objective depends on `p`
//! only through the marginal profile, so the solvers work on the marginal polytope (the
//! convex hull of allocation indicator vectors) and keep the lottery as the explicit
//! convex combination of vertices they visit.

mod corral;
mod maxmin;

use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{FairDivError, Result};
use crate::instance::DeterministicSpace;
use crate::lp::{maximin_value_f64, minimax_rows_f64};
use crate::preferences::{marginals, utility, Lottery, Marginal, MarginalProfile, Preference};
use crate::rational::{self, Rational};

/// Pareto weights: exact rationals on the simplex.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "WeightRepr", into = "WeightRepr")]
pub struct WeightVector {
    weights: Vec<Rational>,
}

#[derive(Serialize, Deserialize)]
#[serde(transparent)]
struct WeightRepr(#[serde(with = "rational::serde_rational::vec")] Vec<Rational>);

impl TryFrom<WeightRepr> for WeightVector {
    type Error = FairDivError;
    fn try_from(r: WeightRepr) -> Result<Self> {
        WeightVector::new(r.0)
    }
}

impl From<WeightVector> for WeightRepr {
    fn from(w: WeightVector) -> Self {
        WeightRepr(w.weights)
    }
}

impl WeightVector {
    pub fn new(weights: Vec<Rational>) -> Result<Self> {
        if weights.is_empty() {
            return Err(FairDivError::InvalidWeights("empty weight vector".into()));
        }
        if weights.iter().any(|w| w.is_negative()) {
            return Err(FairDivError::InvalidWeights("negative weight".into()));
        }
        let total: Rational = weights.iter().sum();
        if !total.is_one() {
            return Err(FairDivError::InvalidWeights(format!(
                "weights sum to {}, not 1",
                rational::format(&total)
            )));
        }
        Ok(WeightVector { weights })
    }

    /// Parses `w1,w2,...` where each entry is a fraction or a decimal literal.
    pub fn parse(s: &str) -> Result<Self> {
        let weights = s
            .split(',')
            .map(rational::parse)
            .collect::<Result<Vec<_>>>()?;
        WeightVector::new(weights)
    }

    pub fn uniform(n: usize) -> Self {
        WeightVector {
            weights: vec![rational::ratio(1, n as i64); n],
        }
    }

    pub fn vertex(n: usize, j: usize) -> Self {
        let mut weights = vec![Rational::zero(); n];
        weights[j] = Rational::one();
        WeightVector { weights }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Rational] {
        &self.weights
    }

    pub fn weight(&self, j: usize) -> &Rational {
        &self.weights[j]
    }

    /// Agents with positive weight (the carrier).
    pub fn support(&self) -> Vec<usize> {
        (0..self.weights.len())
            .filter(|&j| self.weights[j].is_positive())
            .collect()
    }

    pub fn in_support(&self, j: usize) -> bool {
        self.weights[j].is_positive()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.weights.iter().map(rational::to_f64).collect()
    }
}

impl fmt::Display for WeightVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.weights.iter().map(rational::format).collect();
        write!(f, "({})", parts.join(", "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub delta: f64,
    pub opt_tol: f64,
    pub max_iters: usize,
}

impl SolverConfig {
    pub fn new(delta: f64, opt_tol: f64, max_iters: usize) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(FairDivError::InvalidConfig(format!("delta must be positive, got {delta}")));
        }
        if !(opt_tol > 0.0 && opt_tol.is_finite()) {
            return Err(FairDivError::InvalidConfig(format!(
                "opt_tol must be positive, got {opt_tol}"
            )));
        }
        if max_iters == 0 {
            return Err(FairDivError::InvalidConfig("max_iters must be positive".into()));
        }
        Ok(SolverConfig {
            delta,
            opt_tol,
            max_iters,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub gap: f64,
    pub q_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QSolution {
    pub lottery: Lottery,
    pub marginals: MarginalProfile,
    pub q_value: f64,
    pub welfare: f64,
    pub duality_gap: f64,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
}

/// `G = Σ_j Σ_y m_j(y)²`.
pub fn regularizer_g(ms: &[Marginal]) -> f64 {
    ms.iter()
        .map(|m| m.weights.iter().map(|x| x * x).sum::<f64>())
        .sum()
}

/// Gradient of `G` with respect to each marginal: `2 m_j`.
pub fn regularizer_gradient(ms: &[Marginal]) -> Vec<Vec<f64>> {
    ms.iter()
        .map(|m| m.weights.iter().map(|x| 2.0 * x).collect())
        .collect()
}

/// Allocation maximizing `Σ_j scores[j][x_j]`; ties go to the lowest index.
pub fn linear_oracle(space: &DeterministicSpace, scores: &[Vec<f64>]) -> Result<usize> {
    if scores.len() != space.n_agents() || scores.iter().any(|s| s.len() != space.n_items()) {
        return Err(FairDivError::DimensionMismatch(format!(
            "scores must be {} x {}",
            space.n_agents(),
            space.n_items()
        )));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (idx, alloc) in space.allocations().iter().enumerate() {
        let v: f64 = alloc.iter().zip(scores).map(|(&y, s)| s[y]).sum();
        if v > best.1 {
            best = (idx, v);
        }
    }
    Ok(best.0)
}

/// `(Q, Σ λ_j U_j)` of a lottery.
pub fn q_objective(
    space: &DeterministicSpace,
    prefs: &[Preference],
    lambda: &[f64],
    delta: f64,
    p: &Lottery,
) -> Result<(f64, f64)> {
    let ms = marginals(space, p)?;
    q_from_marginals(prefs, lambda, delta, &ms)
}

pub fn q_from_marginals(
    prefs: &[Preference],
    lambda: &[f64],
    delta: f64,
    ms: &[Marginal],
) -> Result<(f64, f64)> {
    let mut welfare = 0.0;
    for ((pref, m), l) in prefs.iter().zip(ms).zip(lambda) {
        if *l != 0.0 {
            welfare += l * utility(pref, m)?;
        }
    }
    Ok((welfare - delta * regularizer_g(ms), welfare))
}

fn check_inputs(space: &DeterministicSpace, prefs: &[Preference], n_weights: usize) -> Result<()> {
    if prefs.len() != space.n_agents() || n_weights != space.n_agents() {
        return Err(FairDivError::DimensionMismatch(format!(
            "{} agents, {} preferences, {} weights",
            space.n_agents(),
            prefs.len(),
            n_weights
        )));
    }
    if let Some(p) = prefs.iter().find(|p| p.n_items() != space.n_items()) {
        return Err(FairDivError::DimensionMismatch(format!(
            "preference covers {} items, space has {}",
            p.n_items(),
            space.n_items()
        )));
    }
    Ok(())
}

pub fn solve_q(
    space: &DeterministicSpace,
    prefs: &[Preference],
    lambda: &WeightVector,
    cfg: &SolverConfig,
) -> Result<QSolution> {
    solve_q_from(space, prefs, lambda, cfg, None)
}

/// As [`solve_q`], starting the vertex iteration at allocation `start` when given.
pub fn solve_q_from(
    space: &DeterministicSpace,
    prefs: &[Preference],
    lambda: &WeightVector,
    cfg: &SolverConfig,
    start: Option<usize>,
) -> Result<QSolution> {
    check_inputs(space, prefs, lambda.dim())?;
    if let Some(s) = start {
        if s >= space.len() {
            return Err(FairDivError::InvalidConfig(format!("start vertex {s} out of range")));
        }
    }
    let lam = lambda.to_f64();
    let out = maxmin::solve(space, prefs, &lam, cfg, start)?;
    if out.gap > cfg.opt_tol {
        return Err(FairDivError::NonConvergence {
            iters: out.iterations,
            last_gap: out.gap,
        });
    }
    let support: Vec<(usize, f64)> = out
        .corral
        .atoms
        .iter()
        .copied()
        .zip(out.corral.weights.iter().copied())
        .collect();
    let lottery = Lottery::normalized(support, space.len())?;
    let ms = marginals(space, &lottery)?;
    let (q_value, welfare) = q_from_marginals(prefs, &lam, cfg.delta, &ms)?;
    Ok(QSolution {
        lottery,
        marginals: ms,
        q_value,
        welfare,
        duality_gap: out.gap,
        iterations: out.iterations,
        trace: out.trace,
    })
}

/// Weak-Pareto gap with the improving lottery that attains it.
#[derive(Debug, Clone, PartialEq)]
pub struct WpeAnalysis {
    /// `max_q min_j U_j(q) − U_j(p)`, attained by `witness`.
    pub gap: f64,
    /// Dual bound: the true maximum lies in `[gap, upper]`.
    pub upper: f64,
    pub witness: Lottery,
}

/// `max_{q ∈ Δ(X)} min_j (U_j(q) − U_j(p))`; `p` is ε-weakly Pareto efficient iff this is ≤ ε.
pub fn wpe_gap(space: &DeterministicSpace, prefs: &[Preference], p: &Lottery, tol: f64) -> Result<f64> {
    Ok(wpe_analysis(space, prefs, p, tol)?.gap)
}

/// The improvement game `max_w min_r (a_r·w − b_r)` over rows `r = (agent, index)`,
/// solved by column generation: restricted games over a growing vertex set, priced with
/// the linear oracle under the rows' dual weights.
pub fn wpe_analysis(
    space: &DeterministicSpace,
    prefs: &[Preference],
    p: &Lottery,
    tol: f64,
) -> Result<WpeAnalysis> {
    check_inputs(space, prefs, prefs.len())?;
    let ms = marginals(space, p)?;
    let base: Vec<f64> = prefs
        .iter()
        .zip(&ms)
        .map(|(pref, m)| utility(pref, m))
        .collect::<Result<_>>()?;
    let rows: Vec<(usize, usize)> = prefs
        .iter()
        .enumerate()
        .flat_map(|(j, pref)| (0..pref.indices().len()).map(move |k| (j, k)))
        .collect();
    let payoff = |r: (usize, usize), x: usize| {
        let (j, k) = r;
        prefs[j].indices()[k][space.allocation(x)[j]] - base[j]
    };

    let mut cols: Vec<usize> = Vec::new();
    let zero = vec![vec![0.0; space.n_items()]; space.n_agents()];
    for &(j, k) in &rows {
        let mut scores = zero.clone();
        scores[j].clone_from(&prefs[j].indices()[k]);
        let x = linear_oracle(space, &scores)?;
        if !cols.contains(&x) {
            cols.push(x);
        }
    }
    loop {
        let matrix: Vec<Vec<f64>> = rows
            .iter()
            .map(|&r| cols.iter().map(|&x| payoff(r, x)).collect())
            .collect();
        let (value, y) = minimax_rows_f64(&matrix).ok_or_else(|| FairDivError::NonConvergence {
            iters: cols.len(),
            last_gap: f64::NAN,
        })?;
        let mut scores = zero.clone();
        for (&(j, k), &yr) in rows.iter().zip(&y) {
            for (s, u) in scores[j].iter_mut().zip(&prefs[j].indices()[k]) {
                *s += yr * u;
            }
        }
        let x = linear_oracle(space, &scores)?;
        let priced: f64 = rows.iter().zip(&y).map(|(&r, &yr)| yr * payoff(r, x)).sum();
        if priced <= value + tol || cols.contains(&x) {
            let (gap, w) = maximin_value_f64(&matrix).ok_or_else(|| FairDivError::NonConvergence {
                iters: cols.len(),
                last_gap: f64::NAN,
            })?;
            let support = cols.iter().copied().zip(w).filter(|(_, w)| *w > 0.0).collect();
            return Ok(WpeAnalysis {
                gap,
                upper: priced.max(gap),
                witness: Lottery::normalized(support, space.len())?,
            });
        }
        cols.push(x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gen_hz, DeterministicSpace};
    use crate::rational::ratio;

    fn names(v: &[&[&str]]) -> Vec<Vec<String>> {
        v.iter().map(|t| t.iter().map(|s| s.to_string()).collect()).collect()
    }

    #[test]
    fn weight_vector_rejects_bad_sums() {
        assert!(WeightVector::new(vec![ratio(1, 2), ratio(1, 3)]).is_err());
        assert!(WeightVector::new(vec![ratio(3, 2), ratio(-1, 2)]).is_err());
        let w = WeightVector::parse("0.25,3/4").unwrap();
        assert_eq!(w.support(), vec![0, 1]);
        assert_eq!(WeightVector::vertex(3, 1).support(), vec![1]);
    }

    #[test]
    fn weight_vector_serializes_as_strings() {
        let w = WeightVector::new(vec![ratio(1, 3), ratio(2, 3)]).unwrap();
        let s = serde_json::to_string(&w).unwrap();
        assert_eq!(s, r#"["1/3","2/3"]"#);
        assert_eq!(serde_json::from_str::<WeightVector>(&s).unwrap(), w);
        assert!(serde_json::from_str::<WeightVector>(r#"["1/3","1/3"]"#).is_err());
    }

    #[test]
    fn regularizer_examples() {
        let point = |n: usize, i: usize| {
            let mut w = vec![0.0; n];
            w[i] = 1.0;
            Marginal { weights: w }
        };
        assert_eq!(regularizer_g(&[point(3, 0), point(3, 2), point(3, 1)]), 3.0);
        let half = Marginal {
            weights: vec![0.5, 0.5],
        };
        assert_eq!(regularizer_g(&[half.clone(), half]), 1.0);
    }

    #[test]
    fn oracle_examples() {
        let hz = gen_hz(2).unwrap();
        let favor = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        let x = linear_oracle(&hz, &favor).unwrap();
        assert_eq!(hz.tuple_names(x), vec!["A", "B"]);
        assert_eq!(linear_oracle(&hz, &[vec![0.0; 2], vec![0.0; 2]]).unwrap(), 0);
        let single = DeterministicSpace::from_tuples("one", 1, names(&[&["z"]])).unwrap();
        assert_eq!(linear_oracle(&single, &[vec![5.0]]).unwrap(), 0);
    }

    #[test]
    fn dictator_weight_gives_top_item() {
        let hz = gen_hz(2).unwrap();
        let prefs = vec![Preference::eu(vec![0.2, 0.9]), Preference::eu(vec![0.7, 0.1])];
        let cfg = SolverConfig::new(1e-3, 1e-10, 10_000).unwrap();
        let sol = solve_q(&hz, &prefs, &WeightVector::vertex(2, 0), &cfg).unwrap();
        assert!((sol.marginals[0].weights[1] - 1.0).abs() < 1e-9);
        assert!(sol.duality_gap <= 1e-10);
    }

    #[test]
    fn symmetric_maxmin_agents_get_equal_utility() {
        let hz = gen_hz(2).unwrap();
        let pref = Preference::maxmin(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let prefs = vec![pref.clone(), pref.clone()];
        let cfg = SolverConfig::new(0.05, 1e-10, 10_000).unwrap();
        let sol = solve_q(&hz, &prefs, &WeightVector::uniform(2), &cfg).unwrap();
        let u: Vec<f64> = sol
            .marginals
            .iter()
            .map(|m| utility(&pref, m).unwrap())
            .collect();
        assert!((u[0] - u[1]).abs() < 1e-8);
        assert!((u[0] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn q_value_matches_recomputation() {
        let hz = gen_hz(3).unwrap();
        let prefs = vec![
            Preference::eu(vec![0.3, 0.5, 0.1]),
            Preference::maxmin(vec![vec![0.9, 0.2, 0.4], vec![0.1, 0.8, 0.3]]).unwrap(),
            Preference::eu(vec![0.6, 0.6, 0.0]),
        ];
        let lambda = WeightVector::new(vec![ratio(1, 2), ratio(1, 3), ratio(1, 6)]).unwrap();
        let cfg = SolverConfig::new(0.01, 1e-10, 10_000).unwrap();
        let sol = solve_q(&hz, &prefs, &lambda, &cfg).unwrap();
        let (q, w) = q_objective(&hz, &prefs, &lambda.to_f64(), 0.01, &sol.lottery).unwrap();
        assert!((q - sol.q_value).abs() < 1e-10);
        assert!((w - sol.welfare).abs() < 1e-10);
    }

    #[test]
    fn wpe_gap_examples() {
        // two allocations, the second dominates the first for both agents
        let space = DeterministicSpace::from_tuples(
            "dominance",
            2,
            names(&[&["lo", "lo"], &["hi", "hi"]]),
        )
        .unwrap();
        let prefs = vec![Preference::eu(vec![1.0, 0.0]), Preference::eu(vec![0.7, 0.2])];
        let lo = space.index_of_names(&["lo".into(), "lo".into()]).unwrap();
        let gap = wpe_gap(&space, &prefs, &Lottery::point(lo), 1e-12).unwrap();
        assert!((gap - 0.5).abs() < 1e-12, "{gap}");

        let single = DeterministicSpace::from_tuples("one", 1, names(&[&["z"]])).unwrap();
        let g = wpe_gap(&single, &[Preference::eu(vec![1.0])], &Lottery::point(0), 1e-12).unwrap();
        assert_eq!(g, 0.0);
    }
}
