//! Cake cutting on a cake split into finitely many interval cells.
//!
//! A [`SimpleAllocation`] gives every agent a constant share of each cell; the shares of a
//! cell sum to one. Such fractional allocations are the expected outcome of lotteries over
//! honest partitions (each cell to one agent), and the decompositions here recover such a
//! lottery exactly. Everything is exact rational arithmetic.

use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, Signed, Zero};

use crate::error::{FairDivError, Result};
use crate::instance::{parse_set_name, DeterministicSpace};
use crate::preferences::{Lottery, Preference};
use crate::rational::{self, Rational};

/// Largest column count `N^I` the Farkas system is built for.
pub const MAX_FARKAS_COLUMNS: usize = 100_000;

/// Per-agent masses of each cell, `masses[j][i] = μ_j(E_i)`.
///
/// Cells flagged as atoms carry their mass at a point rather than spread over the cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellMeasure {
    masses: Vec<Vec<Rational>>,
    atoms: Vec<bool>,
}

impl CellMeasure {
    pub fn new(masses: Vec<Vec<Rational>>, atoms: Vec<bool>) -> Result<Self> {
        let cells = atoms.len();
        if masses.is_empty() || cells == 0 {
            return Err(FairDivError::InvalidInstance("measure needs an agent and a cell".into()));
        }
        for (j, row) in masses.iter().enumerate() {
            if row.len() != cells {
                return Err(FairDivError::DimensionMismatch(format!(
                    "agent {} has {} cell masses, expected {cells}",
                    j + 1,
                    row.len()
                )));
            }
            if let Some(i) = row.iter().position(|m| m.is_negative()) {
                return Err(FairDivError::InvalidInstance(format!(
                    "negative mass for agent {} on cell {}",
                    j + 1,
                    i + 1
                )));
            }
        }
        Ok(CellMeasure { masses, atoms })
    }

    /// Atomless measure.
    pub fn atomless(masses: Vec<Vec<Rational>>) -> Result<Self> {
        let cells = masses.first().map_or(0, Vec::len);
        Self::new(masses, vec![false; cells])
    }

    pub fn n_agents(&self) -> usize {
        self.masses.len()
    }

    pub fn n_cells(&self) -> usize {
        self.atoms.len()
    }

    pub fn mass(&self, agent: usize, cell: usize) -> &Rational {
        &self.masses[agent][cell]
    }

    pub fn masses(&self) -> &[Vec<Rational>] {
        &self.masses
    }

    pub fn atoms(&self) -> &[bool] {
        &self.atoms
    }

    pub fn total(&self, agent: usize) -> Rational {
        self.masses[agent].iter().sum()
    }
}

/// Constant shares `values[j][i]` of agent `j` on cell `i`, with cell widths on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleAllocation {
    values: Vec<Vec<Rational>>,
    widths: Vec<Rational>,
}

impl SimpleAllocation {
    pub fn new(values: Vec<Vec<Rational>>, widths: Vec<Rational>) -> Result<Self> {
        let cells = widths.len();
        if values.is_empty() || cells == 0 {
            return Err(FairDivError::InvalidInstance("allocation needs an agent and a cell".into()));
        }
        if values.iter().any(|row| row.len() != cells) {
            return Err(FairDivError::DimensionMismatch(format!(
                "every agent needs {cells} cell shares"
            )));
        }
        if widths.iter().any(|w| !w.is_positive()) {
            return Err(FairDivError::InvalidInstance("cell widths must be positive".into()));
        }
        if widths.iter().sum::<Rational>() != Rational::one() {
            return Err(FairDivError::InvalidInstance("cell widths must sum to 1".into()));
        }
        for (j, row) in values.iter().enumerate() {
            if let Some(i) = row.iter().position(|v| v.is_negative() || *v > Rational::one()) {
                return Err(FairDivError::NotPartitionOfUnity(format!(
                    "share {} of agent {} on cell {} is outside [0, 1]",
                    rational::format(&row[i]),
                    j + 1,
                    i + 1
                )));
            }
        }
        for i in 0..cells {
            let sum: Rational = values.iter().map(|row| &row[i]).sum();
            if !sum.is_one() {
                return Err(FairDivError::NotPartitionOfUnity(format!(
                    "shares of cell {} sum to {}",
                    i + 1,
                    rational::format(&sum)
                )));
            }
        }
        Ok(SimpleAllocation { values, widths })
    }

    /// `n_cells` cells of equal width.
    pub fn equal_widths(n_cells: usize) -> Vec<Rational> {
        vec![rational::ratio(1, n_cells as i64); n_cells]
    }

    pub fn from_partition(p: &IndicatorPartition, n_agents: usize, widths: Vec<Rational>) -> Result<Self> {
        Self::new(p.matrix(n_agents), widths)
    }

    pub fn n_agents(&self) -> usize {
        self.values.len()
    }

    pub fn n_cells(&self) -> usize {
        self.widths.len()
    }

    pub fn value(&self, agent: usize, cell: usize) -> &Rational {
        &self.values[agent][cell]
    }

    pub fn values(&self) -> &[Vec<Rational>] {
        &self.values
    }

    pub fn widths(&self) -> &[Rational] {
        &self.widths
    }

    /// The partition this allocation is, if every share is 0 or 1.
    pub fn as_partition(&self) -> Option<IndicatorPartition> {
        let assignment = (0..self.n_cells())
            .map(|i| (0..self.n_agents()).find(|&j| self.values[j][i].is_one()))
            .collect::<Option<Vec<_>>>()?;
        Some(IndicatorPartition { assignment })
    }
}

/// A deterministic partition: `assignment[i]` is the agent receiving cell `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndicatorPartition {
    assignment: Vec<usize>,
}

impl IndicatorPartition {
    pub fn new(assignment: Vec<usize>, n_agents: usize) -> Result<Self> {
        if let Some(&agent) = assignment.iter().find(|&&a| a >= n_agents) {
            return Err(FairDivError::AgentOutOfRange { agent, n_agents });
        }
        Ok(IndicatorPartition { assignment })
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn agent_of(&self, cell: usize) -> usize {
        self.assignment[cell]
    }

    pub fn cells_of(&self, agent: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == agent).collect()
    }

    /// 0/1 share matrix, `n_agents × n_cells`.
    pub fn matrix(&self, n_agents: usize) -> Vec<Vec<Rational>> {
        (0..n_agents)
            .map(|j| {
                self.assignment
                    .iter()
                    .map(|&a| if a == j { Rational::one() } else { Rational::zero() })
                    .collect()
            })
            .collect()
    }
}

/// Agents of each cell, 1-based, e.g. `1,2,1`.
impl fmt::Display for IndicatorPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.assignment.iter().map(|a| (a + 1).to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// A lottery over partitions: positive weights summing to one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    terms: Vec<(Rational, IndicatorPartition)>,
}

impl Decomposition {
    pub fn terms(&self) -> &[(Rational, IndicatorPartition)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn weight_sum(&self) -> Rational {
        self.terms.iter().map(|(w, _)| w).sum()
    }

    /// `Σ_k a_k · indicator(term_k)`.
    pub fn reconstruct(&self, n_agents: usize, n_cells: usize) -> Vec<Vec<Rational>> {
        let mut out = vec![vec![Rational::zero(); n_cells]; n_agents];
        for (w, p) in &self.terms {
            for (i, &j) in p.assignment.iter().enumerate() {
                out[j][i] += w;
            }
        }
        out
    }

    /// Exact check that this is a valid decomposition of `f`.
    pub fn reproduces(&self, f: &SimpleAllocation) -> bool {
        self.terms.iter().all(|(w, p)| w.is_positive() && p.assignment.len() == f.n_cells())
            && self.weight_sum().is_one()
            && self.reconstruct(f.n_agents(), f.n_cells()) == f.values
    }

    /// Rows `weight,assignment`.
    pub fn to_rows(&self) -> String {
        let mut out = String::from("weight,assignment\n");
        for (w, p) in &self.terms {
            out.push_str(&format!("{},\"{p}\"\n", rational::format(w)));
        }
        out
    }
}

/// `ν(f; μ)[j][l] = Σ_i f^i_j · μ_l(E_i)`: agent `l`'s value for agent `j`'s share.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NuMatrix {
    pub entries: Vec<Vec<Rational>>,
}

impl NuMatrix {
    pub fn to_f64(&self) -> Vec<Vec<f64>> {
        self.entries
            .iter()
            .map(|row| row.iter().map(rational::to_f64).collect())
            .collect()
    }

    /// Largest entrywise difference.
    pub fn distance(&self, other: &NuMatrix) -> f64 {
        self.entries
            .iter()
            .flatten()
            .zip(other.entries.iter().flatten())
            .map(|(a, b)| rational::to_f64(&(a - b)).abs())
            .fold(0.0, f64::max)
    }
}

pub fn nu_matrix(f: &SimpleAllocation, mu: &CellMeasure) -> Result<NuMatrix> {
    if f.n_agents() != mu.n_agents() || f.n_cells() != mu.n_cells() {
        return Err(FairDivError::DimensionMismatch(format!(
            "allocation is {}x{}, measure is {}x{}",
            f.n_agents(),
            f.n_cells(),
            mu.n_agents(),
            mu.n_cells()
        )));
    }
    let entries = (0..f.n_agents())
        .map(|j| {
            (0..mu.n_agents())
                .map(|l| (0..f.n_cells()).map(|i| &f.values[j][i] * &mu.masses[l][i]).sum())
                .collect()
        })
        .collect();
    Ok(NuMatrix { entries })
}

/// A deterministic partition of refined cells, from [`dww_atomless_to_partition`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefinedPartition {
    pub partition: IndicatorPartition,
    pub widths: Vec<Rational>,
    /// The measure restricted to the refined cells (densities are constant per source cell).
    pub measure: CellMeasure,
    /// Source cell of each refined cell.
    pub source: Vec<usize>,
}

impl RefinedPartition {
    pub fn allocation(&self) -> Result<SimpleAllocation> {
        SimpleAllocation::from_partition(&self.partition, self.measure.n_agents(), self.widths.clone())
    }
}

/// Splits each cell into consecutive subintervals of width fractions `f^i_1, …, f^i_N`,
/// the `j`-th going to agent `j`. With constant densities each agent's mass on a
/// subinterval is proportional to its width, so `ν` is unchanged. Zero-width pieces are
/// dropped. Refuses measures with atoms.
pub fn dww_atomless_to_partition(f: &SimpleAllocation, mu: &CellMeasure) -> Result<RefinedPartition> {
    if f.n_agents() != mu.n_agents() || f.n_cells() != mu.n_cells() {
        return Err(FairDivError::DimensionMismatch("allocation and measure disagree".into()));
    }
    let atoms: Vec<usize> = (0..mu.n_cells()).filter(|&i| mu.atoms[i]).map(|i| i + 1).collect();
    if !atoms.is_empty() {
        return Err(FairDivError::AtomicMeasure(atoms));
    }
    let n = f.n_agents();
    let (mut assignment, mut widths, mut source) = (Vec::new(), Vec::new(), Vec::new());
    let mut masses = vec![Vec::new(); n];
    for i in 0..f.n_cells() {
        for j in 0..n {
            let share = &f.values[j][i];
            if share.is_zero() {
                continue;
            }
            assignment.push(j);
            widths.push(share * &f.widths[i]);
            source.push(i);
            for (l, row) in masses.iter_mut().enumerate() {
                row.push(share * &mu.masses[l][i]);
            }
        }
    }
    let cells = assignment.len();
    Ok(RefinedPartition {
        partition: IndicatorPartition { assignment },
        widths,
        measure: CellMeasure::new(masses, vec![false; cells])?,
        source,
    })
}

/// Two agents: sort agent 1's shares `α` ascending; the terms have weights
/// `α_(1), α_(2) − α_(1), …, 1 − α_(I)` and agent 1 gets the cells from the current
/// sorted position on (all cells, then fewer, down to none). Zero weights are dropped.
pub fn decompose_two_agents(f: &SimpleAllocation) -> Result<Decomposition> {
    if f.n_agents() != 2 {
        return Err(FairDivError::NotTwoAgents(f.n_agents()));
    }
    let cells = f.n_cells();
    let alpha = &f.values[0];
    let mut order: Vec<usize> = (0..cells).collect();
    order.sort_by(|&a, &b| alpha[a].cmp(&alpha[b]).then(a.cmp(&b)));
    let mut terms = Vec::new();
    let mut prev = Rational::zero();
    for k in 0..=cells {
        let level = if k < cells { alpha[order[k]].clone() } else { Rational::one() };
        let w = &level - &prev;
        prev = level;
        if w.is_zero() {
            continue;
        }
        let mut assignment = vec![1; cells];
        for &i in &order[k..] {
            assignment[i] = 0;
        }
        terms.push((w, IndicatorPartition { assignment }));
    }
    Ok(Decomposition { terms })
}

/// Greedy peeling: each cell goes to its smallest-index agent with a positive remaining
/// share; the term's weight is the smallest of those shares. Subtracting it and
/// rescaling by `1/(1 − a)` leaves a partition of unity with at least one fewer positive
/// entry, so there are at most `I·(N−1) + 1` terms.
pub fn decompose_general(f: &SimpleAllocation) -> Result<Decomposition> {
    let (n, cells) = (f.n_agents(), f.n_cells());
    let mut rest = f.values.clone();
    let mut scale = Rational::one();
    let mut terms = Vec::new();
    loop {
        let assignment: Vec<usize> = (0..cells)
            .map(|i| {
                (0..n).find(|&j| rest[j][i].is_positive()).ok_or_else(|| {
                    FairDivError::NotPartitionOfUnity(format!("cell {} has no positive share", i + 1))
                })
            })
            .collect::<Result<_>>()?;
        let a = (0..cells)
            .map(|i| rest[assignment[i]][i].clone())
            .min()
            .expect("at least one cell");
        terms.push((&scale * &a, IndicatorPartition { assignment: assignment.clone() }));
        if a.is_one() {
            break;
        }
        let keep = Rational::one() - &a;
        for (i, &j) in assignment.iter().enumerate() {
            rest[j][i] -= &a;
        }
        for row in rest.iter_mut() {
            for x in row.iter_mut() {
                *x /= &keep;
            }
        }
        scale *= keep;
    }
    Ok(Decomposition { terms })
}

/// Every assignment of `n_cells` cells to `n_agents` agents, cell 0 most significant.
pub fn all_partitions(n_agents: usize, n_cells: usize) -> Vec<IndicatorPartition> {
    crate::instance::cake_assignments(n_agents, n_cells)
        .into_iter()
        .map(|assignment| IndicatorPartition { assignment })
        .collect()
}

/// Solves `P a = f, a ≥ 0` over all `N^I` partition columns by an exact phase-one simplex.
///
/// Columns are priced implicitly: a partition's reduced cost is a sum of per-cell terms,
/// so the best column takes the best agent for each cell. The ratio test is
/// lexicographic, which rules out cycling. Rows are the shares of agents `1..N−1` per
/// cell plus `Σ a = 1`; agent `N`'s rows follow from the column sums.
pub fn farkas_feasibility(f: &SimpleAllocation) -> Result<Decomposition> {
    let (n, cells) = (f.n_agents(), f.n_cells());
    let columns = (n as u128).checked_pow(cells as u32);
    if columns.map_or(true, |c| c > MAX_FARKAS_COLUMNS as u128) {
        return Err(FairDivError::TooLarge(format!("{n}^{cells} partition columns")));
    }
    let row_of = |j: usize, i: usize| j * cells + i;
    let m = (n - 1) * cells + 1;
    let column = |p: &IndicatorPartition| -> Vec<Rational> {
        let mut c = vec![Rational::zero(); m];
        for (i, &j) in p.assignment.iter().enumerate() {
            if j + 1 < n {
                c[row_of(j, i)] = Rational::one();
            }
        }
        c[m - 1] = Rational::one();
        c
    };
    let mut b: Vec<Rational> = (0..n - 1)
        .flat_map(|j| f.values[j].iter().cloned())
        .collect();
    b.push(Rational::one());

    // basis starts with the artificial variables (identity); entries are Left(artificial)
    // or Right(partition)
    #[derive(Clone)]
    enum Var {
        Artificial(usize),
        Column(IndicatorPartition),
    }
    let mut basis: Vec<Var> = (0..m).map(Var::Artificial).collect();
    let mut binv: Vec<Vec<Rational>> = (0..m)
        .map(|r| (0..m).map(|c| if r == c { Rational::one() } else { Rational::zero() }).collect())
        .collect();
    let mut x = b;
    loop {
        // duals of max −Σ artificials: y = c_B B^{-1}
        let cost = |v: &Var| if matches!(v, Var::Artificial(_)) { -Rational::one() } else { Rational::zero() };
        let y: Vec<Rational> = (0..m)
            .map(|c| (0..m).map(|r| cost(&basis[r]) * &binv[r][c]).sum())
            .collect();
        // reduced cost of a partition: −(y_sum + Σ_i y[row(p_i, i)]), agent N contributing 0
        let mut assignment = Vec::with_capacity(cells);
        let mut best = -y[m - 1].clone();
        for i in 0..cells {
            let mut pick = (n - 1, Rational::zero());
            for j in 0..n - 1 {
                let v = -y[row_of(j, i)].clone();
                if v > pick.1 {
                    pick = (j, v);
                }
            }
            assignment.push(pick.0);
            best += pick.1;
        }
        if !best.is_positive() {
            break;
        }
        let entering = IndicatorPartition { assignment };
        let col = column(&entering);
        let d: Vec<Rational> = (0..m)
            .map(|r| (0..m).map(|c| &binv[r][c] * &col[c]).sum())
            .collect();
        // lexicographic ratio test on (x_r, B^{-1}_r) / d_r
        let mut leave: Option<usize> = None;
        for r in (0..m).filter(|&r| d[r].is_positive()) {
            leave = Some(match leave {
                None => r,
                Some(q) => {
                    let key = |k: usize| {
                        std::iter::once(&x[k] / &d[k])
                            .chain(binv[k].iter().map(|v| v / &d[k]))
                            .collect::<Vec<_>>()
                    };
                    if key(r) < key(q) {
                        r
                    } else {
                        q
                    }
                }
            });
        }
        let Some(r) = leave else {
            return Err(FairDivError::FarkasViolation("phase-one program is unbounded".into()));
        };
        let p = d[r].clone();
        let pivot_row: Vec<Rational> = binv[r].iter().map(|v| v / &p).collect();
        let pivot_x = &x[r] / &p;
        for k in 0..m {
            if k == r || d[k].is_zero() {
                continue;
            }
            for c in 0..m {
                let sub = &d[k] * &pivot_row[c];
                binv[k][c] -= sub;
            }
            let sub = &d[k] * &pivot_x;
            x[k] -= sub;
        }
        binv[r] = pivot_row;
        x[r] = pivot_x;
        basis[r] = Var::Column(entering);
    }
    let mut terms = Vec::new();
    for (v, value) in basis.into_iter().zip(x) {
        match v {
            Var::Artificial(row) if value.is_positive() => {
                return Err(FairDivError::FarkasViolation(format!(
                    "row {} cannot be met by any mixture of partitions",
                    row + 1
                )));
            }
            Var::Column(p) if value.is_positive() => terms.push((value, p)),
            _ => {}
        }
    }
    terms.sort_by(|a, b| a.1.cmp(&b.1));
    Ok(Decomposition { terms })
}

/// Stirling numbers of the second kind `S(i, m)` for `i ≤ max_i`, by
/// `S(i, m) = m·S(i−1, m) + S(i−1, m−1)`.
pub fn stirling2_table(max_i: usize) -> Vec<Vec<BigUint>> {
    let mut s = vec![vec![BigUint::zero(); max_i + 1]; max_i + 1];
    s[0][0] = BigUint::one();
    for i in 1..=max_i {
        for m in 1..=i {
            s[i][m] = BigUint::from(m) * &s[i - 1][m] + &s[i - 1][m - 1];
        }
    }
    s
}

/// `Σ_{m=1}^{min(I,N)} S(I, m) · N!/(N−m)!`: partitions of the cells into `m` nonempty
/// blocks, each block given to a distinct agent. Equals `N^I`.
pub fn stirling_column_count(n_cells: usize, n_agents: usize) -> BigUint {
    let s = stirling2_table(n_cells);
    let mut total = BigUint::zero();
    let mut falling = BigUint::one();
    for m in 1..=n_cells.min(n_agents) {
        falling *= BigUint::from(n_agents - m + 1);
        total += &s[n_cells][m] * &falling;
    }
    total
}

/// `count(I − ξ) = N · count(I − ξ − 1)`; `None` unless `I − ξ − 1 ≥ 1`.
pub fn stirling_step_identity(n_cells: usize, xi: usize, n_agents: usize) -> Option<bool> {
    let lower = n_cells.checked_sub(xi + 1).filter(|&k| k >= 1)?;
    Some(stirling_column_count(lower + 1, n_agents) == BigUint::from(n_agents) * stirling_column_count(lower, n_agents))
}

/// The cells (0-based) an item of a cake space stands for.
fn item_cells(space: &DeterministicSpace, item: usize, n_cells: usize) -> Result<BTreeSet<usize>> {
    let name = space.items().name(item);
    let cells = parse_set_name(name)
        .ok_or_else(|| FairDivError::InvalidInstance(format!("item `{name}` is not a cell set")))?;
    if cells.iter().any(|&c| c == 0 || c > n_cells) {
        return Err(FairDivError::DimensionMismatch(format!(
            "item `{name}` mentions a cell outside 1..={n_cells}"
        )));
    }
    Ok(cells.into_iter().map(|c| c - 1).collect())
}

/// Linear cake utilities as expected-utility preferences on a cake space: an agent values
/// a cell set at its total mass.
pub fn cake_bridge(space: &DeterministicSpace, mu: &CellMeasure) -> Result<Vec<Preference>> {
    if space.n_agents() != mu.n_agents() {
        return Err(FairDivError::DimensionMismatch(format!(
            "space has {} agents, measure {}",
            space.n_agents(),
            mu.n_agents()
        )));
    }
    let sets = (0..space.n_items())
        .map(|item| item_cells(space, item, mu.n_cells()))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..mu.n_agents())
        .map(|j| {
            Preference::eu(
                sets.iter()
                    .map(|set| rational::to_f64(&set.iter().map(|&i| mu.mass(j, i)).sum::<Rational>()))
                    .collect(),
            )
        })
        .collect())
}

/// Share of each cell each agent gets under a lottery over a cake space's partitions,
/// `f_j(i) = Σ_x P(x)·[x gives cell i to j]`. Weights are taken exactly and rescaled to
/// sum to one.
pub fn cell_shares(
    space: &DeterministicSpace,
    weights: &[(usize, Rational)],
    widths: Vec<Rational>,
) -> Result<SimpleAllocation> {
    let (n, cells) = (space.n_agents(), widths.len());
    let total: Rational = weights.iter().map(|(_, w)| w).sum();
    if !total.is_positive() || weights.iter().any(|(_, w)| w.is_negative()) {
        return Err(FairDivError::InvalidLottery("weights must be nonnegative with positive sum".into()));
    }
    let mut values = vec![vec![Rational::zero(); cells]; n];
    for (idx, w) in weights {
        if *idx >= space.len() {
            return Err(FairDivError::InvalidLottery(format!("allocation {idx} out of range")));
        }
        let mut covered = vec![false; cells];
        for (j, &item) in space.allocation(*idx).iter().enumerate() {
            for i in item_cells(space, item, cells)? {
                if covered[i] {
                    return Err(FairDivError::InvalidInstance(format!("cell {} assigned twice", i + 1)));
                }
                covered[i] = true;
                values[j][i] += w / &total;
            }
        }
        if let Some(i) = covered.iter().position(|c| !c) {
            return Err(FairDivError::InvalidInstance(format!("cell {} left unassigned", i + 1)));
        }
    }
    SimpleAllocation::new(values, widths)
}

/// [`cell_shares`] of a floating-point lottery.
pub fn lottery_shares(space: &DeterministicSpace, p: &Lottery, widths: Vec<Rational>) -> Result<SimpleAllocation> {
    let weights = p
        .support()
        .iter()
        .map(|&(idx, w)| Ok((idx, rational::from_f64(w)?)))
        .collect::<Result<Vec<_>>>()?;
    cell_shares(space, &weights, widths)
}
