//! Sperner search over Pareto weights.
//!
//! Each weight vector is labeled by an agent in its support who is envy-free at the
//! regularized welfare optimum for those weights. A completely labeled cell of a
//! barycentric subdivision has, for every agent, a nearby weight at which that agent is
//! envy-free; shrinking the cell pins down weights at which everybody is (approximately)
//! envy-free. The search recurses into one completely labeled cell per round.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use num_traits::Zero;
use rayon::prelude::*;

use crate::error::{FairDivError, Result};
use crate::instance::{validate_space, DeterministicSpace};
use crate::preferences::{envy_from_marginals, EnvyMatrix, Lottery, Preference};
use crate::qsolver::{solve_q, wpe_analysis, QSolution, SolverConfig, WeightVector};
use crate::rational::{self, Rational};

/// Optimality tolerance used for every Q-solve inside the search.
pub const SEARCH_OPT_TOL: f64 = 1e-11;
/// Iteration cap for those solves.
pub const SEARCH_MAX_ITERS: usize = 200_000;
/// Looser optimality tolerances, tried in order, when a labeling solve stalls above
/// SEARCH_OPT_TOL.
pub const RELAXED_OPT_TOLS: [f64; 2] = [1e-8, 1e-6];
/// Mesh targets stop here; below this the float solves cannot tell cells apart.
pub const MIN_MESH: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Simplex {
    vertices: Vec<WeightVector>,
}

impl Simplex {
    pub fn new(vertices: Vec<WeightVector>) -> Result<Self> {
        let n = vertices.first().map(WeightVector::dim).unwrap_or(0);
        if n == 0 || vertices.iter().any(|v| v.dim() != n) {
            return Err(FairDivError::DimensionMismatch("simplex vertices".into()));
        }
        // all vertices lie on Σλ = 1, so affine independence is linear independence
        let rows: Vec<Vec<Rational>> = vertices.iter().map(|v| v.weights().to_vec()).collect();
        if rank(rows) != vertices.len() {
            return Err(FairDivError::InvalidConfig("simplex vertices are affinely dependent".into()));
        }
        Ok(Simplex { vertices })
    }

    /// The weight simplex itself, with vertex `j` the point mass on agent `j`.
    pub fn standard(n: usize) -> Self {
        Simplex {
            vertices: (0..n).map(|j| WeightVector::vertex(n, j)).collect(),
        }
    }

    pub fn vertices(&self) -> &[WeightVector] {
        &self.vertices
    }

    pub fn barycenter(&self) -> WeightVector {
        barycenter(self.vertices.iter())
    }

    pub fn diameter(&self) -> f64 {
        let mut best = Rational::zero();
        for (a, u) in self.vertices.iter().enumerate() {
            for v in &self.vertices[a + 1..] {
                let d = sq_dist(u, v);
                if d > best {
                    best = d;
                }
            }
        }
        rational::to_f64(&best).sqrt()
    }
}

fn barycenter<'a>(vs: impl Iterator<Item = &'a WeightVector>) -> WeightVector {
    let vs: Vec<&WeightVector> = vs.collect();
    let n = vs[0].dim();
    let k = Rational::from_integer((vs.len() as i64).into());
    let weights = (0..n)
        .map(|i| vs.iter().map(|v| v.weight(i)).sum::<Rational>() / &k)
        .collect();
    WeightVector::new(weights).expect("barycenter of simplex points is on the simplex")
}

fn sq_dist(u: &WeightVector, v: &WeightVector) -> Rational {
    u.weights()
        .iter()
        .zip(v.weights())
        .map(|(a, b)| {
            let d = a - b;
            &d * &d
        })
        .sum()
}

fn rank(mut m: Vec<Vec<Rational>>) -> usize {
    let cols = m.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..cols {
        let Some(piv) = (r..m.len()).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, piv);
        for i in r + 1..m.len() {
            if !m[i][c].is_zero() {
                let f = &m[i][c] / &m[r][c];
                for cc in c..cols {
                    let sub = &f * &m[r][cc];
                    m[i][cc] -= sub;
                }
            }
        }
        r += 1;
    }
    r
}

/// A set of simplices with a vertex labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledComplex {
    simplices: Vec<Simplex>,
    labels: BTreeMap<WeightVector, usize>,
    mesh: f64,
}

impl LabeledComplex {
    pub fn from_simplex(s: Simplex) -> Self {
        let mesh = s.diameter();
        LabeledComplex {
            simplices: vec![s],
            labels: BTreeMap::new(),
            mesh,
        }
    }

    pub fn simplices(&self) -> &[Simplex] {
        &self.simplices
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    pub fn labels(&self) -> &BTreeMap<WeightVector, usize> {
        &self.labels
    }

    pub fn label(&self, v: &WeightVector) -> Option<usize> {
        self.labels.get(v).copied()
    }

    /// Distinct vertices in lexicographic order.
    pub fn vertices(&self) -> Vec<WeightVector> {
        let set: BTreeSet<&WeightVector> = self.simplices.iter().flat_map(|s| &s.vertices).collect();
        set.into_iter().cloned().collect()
    }

    /// Assigns a label; it must lie in the vertex's support (a proper labeling).
    pub fn set_label(&mut self, v: WeightVector, label: usize) -> Result<()> {
        if label >= v.dim() || !v.in_support(label) {
            return Err(FairDivError::SpernerViolation(format!(
                "label {label} is outside the support of vertex {v}"
            )));
        }
        self.labels.insert(v, label);
        Ok(())
    }

    /// Labels every vertex with `f`, evaluated in parallel.
    pub fn label_with<F>(&mut self, f: F) -> Result<()>
    where
        F: Fn(&WeightVector) -> Result<usize> + Sync,
    {
        let vs = self.vertices();
        let labels: Vec<usize> = vs.par_iter().map(&f).collect::<Result<_>>()?;
        for (v, l) in vs.into_iter().zip(labels) {
            self.set_label(v, l)?;
        }
        Ok(())
    }
}

/// One barycentric round: each simplex is replaced by the `n!` simplices spanned by the
/// barycenters of a maximal chain of its faces. Labels are cleared.
pub fn barycentric_subdivide(c: &LabeledComplex) -> LabeledComplex {
    let mut simplices = Vec::new();
    for s in &c.simplices {
        let n = s.vertices.len();
        let mut cache: HashMap<Vec<usize>, WeightVector> = HashMap::new();
        for perm in permutations(n) {
            let mut chain = Vec::with_capacity(n);
            for k in 1..=n {
                let mut face: Vec<usize> = perm[..k].to_vec();
                face.sort_unstable();
                let b = cache
                    .entry(face.clone())
                    .or_insert_with(|| barycenter(face.iter().map(|&i| &s.vertices[i])))
                    .clone();
                chain.push(b);
            }
            simplices.push(Simplex { vertices: chain });
        }
    }
    let mesh = simplices.iter().map(Simplex::diameter).fold(0.0, f64::max);
    LabeledComplex {
        simplices,
        labels: BTreeMap::new(),
        mesh,
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Simplices whose labels cover every agent. Errors if none exist or a vertex is unlabeled.
pub fn find_completely_labeled(c: &LabeledComplex) -> Result<Vec<Simplex>> {
    let mut out = Vec::new();
    for s in &c.simplices {
        let n = s.vertices.len();
        let mut seen = vec![false; s.vertices[0].dim()];
        for v in &s.vertices {
            let l = c.label(v).ok_or_else(|| {
                FairDivError::SpernerViolation(format!("vertex {v} is unlabeled"))
            })?;
            seen[l] = true;
        }
        if seen.iter().filter(|&&x| x).count() == n && n == seen.len() {
            out.push(s.clone());
        }
    }
    if out.is_empty() {
        return Err(FairDivError::SpernerViolation(
            "no completely labeled simplex".into(),
        ));
    }
    Ok(out)
}

/// Smallest-index supported agent whose envy row is at most `envy_tol`.
///
/// Retries once with a tenfold tighter optimality tolerance before giving up.
pub fn lucky_label(
    lambda: &WeightVector,
    space: &DeterministicSpace,
    prefs: &[Preference],
    cfg: &SolverConfig,
    envy_tol: f64,
) -> Result<usize> {
    let mut cfg = *cfg;
    for attempt in 0..2 {
        let sol = solve_q(space, prefs, lambda, &cfg)?;
        let env = envy_from_marginals(prefs, &sol.marginals)?;
        if let Some(j) = lambda.support().into_iter().find(|&j| env.row_max(j) <= envy_tol) {
            return Ok(j);
        }
        if attempt == 1 {
            return Err(FairDivError::LuckyViolation {
                tol: envy_tol,
                envy: env.entries,
            });
        }
        cfg.opt_tol /= 10.0;
    }
    unreachable!()
}

/// Mesh targets `diam(Δ) · ((N−1)/N)^k`, down to [`MIN_MESH`].
pub fn default_schedule(n_agents: usize) -> Vec<f64> {
    if n_agents < 2 {
        return Vec::new();
    }
    let factor = (n_agents as f64 - 1.0) / n_agents as f64;
    let mut c = 2f64.sqrt();
    let mut out = Vec::new();
    while c > MIN_MESH {
        c *= factor;
        out.push(c);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairCertificate {
    pub lambda_bar: WeightVector,
    pub lottery: Lottery,
    pub max_envy: f64,
    pub wpe_gap: f64,
    pub delta_final: f64,
    pub mesh_final: f64,
    pub subdivision_rounds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRound {
    pub round: usize,
    pub mesh: f64,
    pub n_vertices: usize,
    pub n_completely_labeled: usize,
    pub candidate_lambda: WeightVector,
    pub max_envy: f64,
    /// Vertices where no supported agent met the labeling tolerance.
    pub forced_labels: usize,
    /// Door-walk steps taken to reach this round's cell; 0 when it is a child of the
    /// previous one.
    pub walk_steps: usize,
}

impl TraceRound {
    pub const CSV_HEADER: &'static str =
        "round,mesh,n_vertices,n_completely_labeled,candidate_lambda,max_envy,forced_labels,walk_steps";

    pub fn to_csv(&self) -> String {
        let lam: Vec<String> = self.candidate_lambda.to_f64().iter().map(|x| format!("{x:.12}")).collect();
        format!(
            "{},{:e},{},{},{},{:e},{},{}",
            self.round,
            self.mesh,
            self.n_vertices,
            self.n_completely_labeled,
            lam.join(";"),
            self.max_envy,
            self.forced_labels,
            self.walk_steps
        )
    }
}

/// Everything the refinement produced, for tracing and plotting.
#[derive(Debug, Clone)]
pub struct Refinement {
    pub lambda: WeightVector,
    pub solution: QSolution,
    pub max_envy: f64,
    pub mesh: f64,
    pub rounds: usize,
    pub trace: Vec<TraceRound>,
    /// The labeled complex of each round, in order.
    pub complexes: Vec<LabeledComplex>,
}

struct Labeler<'a> {
    space: &'a DeterministicSpace,
    prefs: &'a [Preference],
    cfg: SolverConfig,
    envy_tol: f64,
    memo: Mutex<HashMap<WeightVector, Arc<(QSolution, EnvyMatrix)>>>,
}

impl<'a> Labeler<'a> {
    fn solve(&self, lambda: &WeightVector) -> Result<Arc<(QSolution, EnvyMatrix)>> {
        if let Some(hit) = self.memo.lock().expect("memo poisoned").get(lambda) {
            return Ok(hit.clone());
        }
        let sol = match solve_q(self.space, self.prefs, lambda, &self.cfg) {
            // the labels only need the envy sign up to envy_tol; the returned lottery is
            // re-checked on its own marginals, so a slightly looser solve is harmless
            Err(FairDivError::NonConvergence { .. }) => {
                let mut last = None;
                for tol in RELAXED_OPT_TOLS {
                    let loose = SolverConfig::new(self.cfg.delta, tol, self.cfg.max_iters)?;
                    match solve_q(self.space, self.prefs, lambda, &loose) {
                        Err(e @ FairDivError::NonConvergence { .. }) => last = Some(Err(e)),
                        other => {
                            last = Some(other);
                            break;
                        }
                    }
                }
                last.expect("at least one relaxed tolerance")?
            }
            other => other?,
        };
        let env = envy_from_marginals(self.prefs, &sol.marginals)?;
        let entry = Arc::new((sol, env));
        self.memo
            .lock()
            .expect("memo poisoned")
            .insert(lambda.clone(), entry.clone());
        Ok(entry)
    }

    /// The supported agent with the least envy margin `max_{k≠j} envy(j, k)`, ties to the
    /// smallest index. It is envy-free within tolerance whenever any supported agent is;
    /// if the finite-precision solve leaves none, `forced = true`.
    ///
    /// Unlike the smallest-index rule, this label changes only where two margins cross,
    /// so label regions meet at points where every agent is envy-free instead of along
    /// thin bands where only one of them is.
    fn label(&self, v: &WeightVector) -> Result<(usize, bool)> {
        let support = v.support();
        if support.len() == 1 {
            return Ok((support[0], false));
        }
        let entry = self.solve(v)?;
        let margin = |j: usize| {
            entry.1.entries[j]
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &e)| e)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let (j, m) = support
            .iter()
            .map(|&j| (j, margin(j)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("nonempty support");
        Ok((j, m > self.envy_tol))
    }
}

/// Door-walk steps one descent may spend on cells with no completely labeled child.
pub const MAX_WALK_STEPS: usize = 4_000;
/// Cap on the lattice points used to seed those walks.
pub const MAX_START_POINTS: usize = 200;

/// A cell of the Freudenthal triangulation of the weight simplex with grid `1/d`, in
/// partial-sum coordinates `y_i = d·(λ_0 + … + λ_i)` for `i < N−1`: vertex 0 is `base` and
/// vertex `k+1` is vertex `k` plus the unit vector `e_{perm[k]}`. The simplex is the region
/// `0 ≤ y_0 ≤ … ≤ y_{N−2} ≤ d`, a union of such cells.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct GridCell {
    base: Vec<i64>,
    perm: Vec<usize>,
}

impl GridCell {
    /// The cell containing the interior point `p`.
    fn containing(p: &WeightVector, d: i64) -> GridCell {
        let m = p.dim() - 1;
        let scale = Rational::from_integer(d.into());
        let mut acc = Rational::zero();
        let mut base = Vec::with_capacity(m);
        let mut frac = Vec::with_capacity(m);
        for i in 0..m {
            acc += p.weight(i);
            let y = &acc * &scale;
            let b = y.floor();
            frac.push(&y - &b);
            base.push(rational::to_f64(&b) as i64);
        }
        let mut perm: Vec<usize> = (0..m).collect();
        // ties (y_i = y_j mod 1) put the larger index first so every vertex stays ordered
        perm.sort_by(|&a, &b| frac[b].cmp(&frac[a]).then(b.cmp(&a)));
        GridCell { base, perm }
    }

    fn points(&self) -> Vec<Vec<i64>> {
        let mut v = self.base.clone();
        let mut out = vec![v.clone()];
        for &i in &self.perm {
            v[i] += 1;
            out.push(v.clone());
        }
        out
    }

    fn inside(&self, d: i64) -> bool {
        self.points().iter().all(|y| {
            y.first().map_or(true, |&y0| y0 >= 0)
                && y.windows(2).all(|w| w[0] <= w[1])
                && y.last().map_or(true, |&yl| yl <= d)
        })
    }

    fn vertices(&self, d: i64) -> Vec<WeightVector> {
        self.points()
            .into_iter()
            .map(|y| {
                let mut prev = 0;
                let mut w: Vec<Rational> = y
                    .iter()
                    .map(|&yi| {
                        let x = rational::ratio(yi - prev, d);
                        prev = yi;
                        x
                    })
                    .collect();
                w.push(rational::ratio(d - prev, d));
                WeightVector::new(w).expect("grid points lie on the simplex")
            })
            .collect()
    }

    /// The cell across the facet opposite vertex `k`, and the position of its new vertex.
    fn pivot(&self, k: usize) -> (GridCell, usize) {
        let m = self.perm.len();
        let mut c = self.clone();
        if k == 0 {
            c.base[self.perm[0]] += 1;
            c.perm.rotate_left(1);
            (c, m)
        } else if k == m {
            c.base[self.perm[m - 1]] -= 1;
            c.perm.rotate_right(1);
            (c, 0)
        } else {
            c.perm.swap(k - 1, k);
            (c, k)
        }
    }
}

/// Whether dropping vertex `k` leaves exactly the labels other than `missing`.
fn is_door(labels: &[usize], k: usize, missing: usize) -> bool {
    let rest: BTreeSet<usize> = labels
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != k)
        .map(|(_, &l)| l)
        .collect();
    rest.len() == labels.len() - 1 && !rest.contains(&missing)
}

/// Recursive Sperner refinement toward weights whose Q-solution is ε-envy-free.
pub fn refine_to_lambda(
    space: &DeterministicSpace,
    prefs: &[Preference],
    delta: f64,
    eps: f64,
    schedule: &[f64],
) -> Result<(WeightVector, QSolution)> {
    let r = refine(space, prefs, delta, eps, schedule)?;
    Ok((r.lambda, r.solution))
}

/// One Sperner door path through the grid: the current cell and the vertex position
/// it was entered through.
struct Walker {
    cell: GridCell,
    entry: usize,
    missing: usize,
    seen: BTreeSet<GridCell>,
}

impl Labeler<'_> {
    fn labels_of(&self, vertices: &[WeightVector]) -> Result<Vec<usize>> {
        vertices.iter().map(|v| Ok(self.label(v)?.0)).collect()
    }

    /// A completely labeled grid cell, other than those in `used`, found by door paths
    /// (facets labeled with every agent but one) started from the grid cells covering
    /// `region`, tried from grid `1/d` up to coarser grids, `max_steps` in all. Paths
    /// advance in turn, one cell each, so a long path cannot starve a short one. Returns
    /// the cell and the number of steps taken.
    fn grid_walk(
        &self,
        region: &Simplex,
        mut d: i64,
        used: &BTreeSet<Simplex>,
        max_steps: usize,
    ) -> Result<Option<(Simplex, usize)>> {
        let n = region.vertices.len();
        let is_full = |labels: &[usize]| labels.iter().collect::<BTreeSet<_>>().len() == n;
        let mut total = 0;
        while d >= 1 && total < max_steps {
            // a lattice in the region about twice as fine as the grid, within a cap
            let mut per_side = (2.0 * region.diameter() * d as f64).ceil().max(1.0) as usize;
            while per_side > 1 && binomial(per_side + n - 1, n - 1) > MAX_START_POINTS {
                per_side -= 1;
            }
            let cells: BTreeSet<GridCell> = lattice(region, per_side)
                .iter()
                .map(|p| GridCell::containing(p, d))
                .filter(|c| c.inside(d))
                .collect();
            let mut walkers = Vec::new();
            for cell in cells {
                let vertices = cell.vertices(d);
                let labels = self.labels_of(&vertices)?;
                if is_full(&labels) {
                    let simplex = Simplex { vertices };
                    if !used.contains(&simplex) {
                        return Ok(Some((simplex, total)));
                    }
                }
                for missing in 0..n {
                    for entry in (0..n).filter(|&k| is_door(&labels, k, missing)) {
                        walkers.push(Walker {
                            cell: cell.clone(),
                            entry,
                            missing,
                            seen: BTreeSet::from([cell.clone()]),
                        });
                    }
                }
            }
            let mut steps = 0;
            while !walkers.is_empty() && total + steps < max_steps {
                let mut alive = Vec::with_capacity(walkers.len());
                for mut w in walkers {
                    let labels = self.labels_of(&w.cell.vertices(d))?;
                    let Some(exit) = (0..n).find(|&k| k != w.entry && is_door(&labels, k, w.missing)) else {
                        continue;
                    };
                    steps += 1;
                    let (next, entry) = w.cell.pivot(exit);
                    if !next.inside(d) || !w.seen.insert(next.clone()) {
                        continue;
                    }
                    let vertices = next.vertices(d);
                    let labels = self.labels_of(&vertices)?;
                    if is_full(&labels) {
                        let simplex = Simplex { vertices };
                        if used.contains(&simplex) {
                            continue;
                        }
                        return Ok(Some((simplex, total + steps)));
                    }
                    w.cell = next;
                    w.entry = entry;
                    alive.push(w);
                }
                walkers = alive;
            }
            total += steps;
            d /= 2;
        }
        Ok(None)
    }
}

/// Points `Σ c_i v_i / s` of `region` for nonnegative integers `c` summing to `s`.
fn lattice(region: &Simplex, s: usize) -> Vec<WeightVector> {
    let n = region.vertices.len();
    let mut out = Vec::new();
    let mut c = vec![0usize; n];
    fn rec(i: usize, left: usize, c: &mut Vec<usize>, region: &Simplex, s: usize, out: &mut Vec<WeightVector>) {
        let n = c.len();
        if i + 1 == n {
            c[i] = left;
            let dim = region.vertices[0].dim();
            let w = (0..dim)
                .map(|k| {
                    c.iter()
                        .zip(&region.vertices)
                        .map(|(&ci, v)| v.weight(k) * Rational::from_integer((ci as i64).into()))
                        .sum::<Rational>()
                        / Rational::from_integer((s as i64).into())
                })
                .collect();
            out.push(WeightVector::new(w).expect("convex combination of simplex points"));
            return;
        }
        for x in 0..=left {
            c[i] = x;
            rec(i + 1, left - x, c, region, s, out);
        }
    }
    rec(0, s, &mut c, region, s, &mut out);
    out
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Rounds a descent may go without lowering the best envy before it is abandoned.
pub const STALL_ROUNDS: usize = 8;
/// Coarsest and finest grids `1/2^p` tried by the face-path fallback.
pub const PATH_GRID_EXPONENTS: std::ops::RangeInclusive<u32> = 3..=22;
/// Steps allowed on one face path.
pub const MAX_PATH_STEPS: usize = 200_000;

/// How a face path entered its current cell.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Entry {
    /// Up from its facet on the next lower face.
    Below,
    /// Down from the cell of the next higher face it is a facet of.
    Above,
    /// Across the facet opposite this vertex position.
    Facet(usize),
}

impl Labeler<'_> {
    /// Sperner's path through the grid `1/d`, restricted to the faces
    /// `Δ_0 ⊂ Δ_1 ⊂ … ⊂ Δ` spanned by the first `k+1` corners. A `k`-cell of `Δ_k` is on the
    /// path when its labels include `0..k`; it moves up to `Δ_{k+1}` when they are exactly
    /// `0..=k`, otherwise across a facet labeled `0..k`, which may lie in `Δ_{k−1}`. Every
    /// cell has two such moves except the corner `e_0` and the completely labeled cells of
    /// `Δ`, so the path from `e_0` ends at one of those.
    fn face_path(&self, n: usize, d: i64, max_steps: usize) -> Result<Option<(GridCell, usize)>> {
        let m = n - 1;
        let mut cell = GridCell { base: vec![d; m], perm: Vec::new() };
        let mut entry = Entry::Below;
        for steps in 0..max_steps {
            let k = cell.perm.len();
            let vertices = cell.vertices(d);
            let labels = self.labels_of(&vertices)?;
            let present: BTreeSet<usize> = labels.iter().copied().collect();
            let exit = if (0..=k).all(|l| present.contains(&l)) {
                if k == m {
                    return Ok(Some((cell, steps)));
                }
                if entry != Entry::Above {
                    let mut base = cell.base.clone();
                    base[k] -= 1;
                    let mut perm = vec![k];
                    perm.extend(&cell.perm);
                    cell = GridCell { base, perm };
                    entry = Entry::Below;
                    continue;
                }
                labels.iter().position(|&l| l == k).expect("label k present")
            } else {
                let entered = match entry {
                    Entry::Below => 0,
                    Entry::Facet(p) => p,
                    Entry::Above => {
                        return Err(FairDivError::SpernerViolation("face path descended into an incomplete cell".into()))
                    }
                };
                let facet_is_door = |q: usize| {
                    let rest: BTreeSet<usize> =
                        labels.iter().enumerate().filter(|&(i, _)| i != q).map(|(_, &l)| l).collect();
                    rest.len() == k && rest.iter().copied().eq(0..k)
                };
                (0..=k)
                    .find(|&q| q != entered && facet_is_door(q))
                    .ok_or_else(|| FairDivError::SpernerViolation("face path has no exit door".into()))?
            };
            // the facet opposite vertex 0 lies in Δ_{k−1} when its vertices all have y_{k−1} = d
            if k >= 1 && exit == 0 && cell.perm[0] == k - 1 && cell.base[k - 1] == d - 1 {
                cell.base[k - 1] += 1;
                cell.perm.remove(0);
                entry = Entry::Above;
            } else {
                let (next, pos) = cell.pivot(exit);
                if !next.inside(d) {
                    return Err(FairDivError::SpernerViolation("face path left the simplex; labeling is not proper".into()));
                }
                cell = next;
                entry = Entry::Facet(pos);
            }
        }
        Ok(None)
    }
}

impl Labeler<'_> {
    /// Moves off completely labeled cells that touch a corner `e_j` of the simplex. Near a
    /// corner the other weights are far above δ on coarse grids, so the corner label and
    /// its neighbors' labels differ and the corner cell looks completely labeled without
    /// being close to envy-free. The door path missing `j` leaves through the facet
    /// opposite the corner and ends at another completely labeled cell, or on the
    /// boundary (`None`).
    fn leave_corners(&self, mut cell: GridCell, d: i64, max_steps: usize) -> Result<Option<(GridCell, usize)>> {
        let mut steps = 0;
        let mut seen = BTreeSet::new();
        loop {
            let vertices = cell.vertices(d);
            let Some(corner) = vertices.iter().position(|v| v.support().len() == 1) else {
                return Ok(Some((cell, steps)));
            };
            if !seen.insert(cell.clone()) {
                return Ok(None);
            }
            let labels = self.labels_of(&vertices)?;
            let missing = labels[corner];
            let mut exit = corner;
            loop {
                if steps >= max_steps {
                    return Ok(None);
                }
                steps += 1;
                let (next, entry) = cell.pivot(exit);
                if !next.inside(d) {
                    return Ok(None);
                }
                cell = next;
                let labels = self.labels_of(&cell.vertices(d))?;
                if labels.iter().collect::<BTreeSet<_>>().len() == labels.len() {
                    break;
                }
                exit = (0..labels.len())
                    .find(|&k| k != entry && is_door(&labels, k, missing))
                    .ok_or_else(|| FairDivError::SpernerViolation("door path has no exit".into()))?;
            }
        }
    }
}

/// Mutable state of one refinement run.
struct Search<'a> {
    labeler: Labeler<'a>,
    n: usize,
    eps: f64,
    trace: Vec<TraceRound>,
    complexes: Vec<LabeledComplex>,
    best: (WeightVector, f64),
    used: BTreeSet<Simplex>,
    rounds_left: usize,
}

impl Search<'_> {
    /// Records `cell` as the current candidate; returns the result if it is ε-envy-free.
    fn visit(&mut self, cell: &Simplex, round: TraceRound) -> Result<Option<Refinement>> {
        let lambda = cell.barycenter();
        let entry = self.labeler.solve(&lambda)?;
        let envy = entry.1.max();
        self.trace.push(TraceRound {
            round: self.trace.len(),
            candidate_lambda: lambda.clone(),
            max_envy: envy,
            ..round
        });
        if envy < self.best.1 {
            self.best = (lambda.clone(), envy);
        }
        if envy > self.eps {
            return Ok(None);
        }
        Ok(Some(Refinement {
            lambda,
            solution: entry.0.clone(),
            max_envy: envy,
            mesh: cell.diameter(),
            rounds: self.trace.len() - 1,
            trace: std::mem::take(&mut self.trace),
            complexes: std::mem::take(&mut self.complexes),
        }))
    }

    /// Barycentric descent from `cell`, each round into the completely labeled child whose
    /// barycenter is least envious, with a grid door walk when no child is completely
    /// labeled. Gives up after [`STALL_ROUNDS`] rounds without a new best envy.
    fn descend(&mut self, mut cell: Simplex) -> Result<Option<Refinement>> {
        let n = self.n;
        let mut since_best = 0;
        let mut walk_left = MAX_WALK_STEPS;
        while self.rounds_left > 0 && since_best < STALL_ROUNDS {
            self.rounds_left -= 1;
            let mut complex = barycentric_subdivide(&LabeledComplex::from_simplex(cell.clone()));
            let forced = Mutex::new(0usize);
            let labeler = &self.labeler;
            complex.label_with(|v| {
                let (l, f) = labeler.label(v)?;
                if f {
                    *forced.lock().expect("counter poisoned") += 1;
                }
                Ok(l)
            })?;
            let full: Vec<usize> = (0..complex.simplices.len())
                .filter(|&i| {
                    let labels: BTreeSet<usize> =
                        complex.simplices[i].vertices.iter().filter_map(|v| complex.label(v)).collect();
                    labels.len() == n
                })
                .collect();
            // the least envious barycenter; ties to the lexicographically smallest
            let mut scored = Vec::with_capacity(full.len());
            for &i in &full {
                let b = complex.simplices[i].barycenter();
                let envy = self.labeler.solve(&b)?.1.max();
                scored.push((envy, b, i));
            }
            let (next, walk_steps) = match scored
                .iter()
                .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)))
            {
                Some(&(_, _, i)) => (complex.simplices[i].clone(), 0),
                None => {
                    // grid fine enough that its cells are no larger than the children
                    let target = complex.mesh() / (n as f64).sqrt();
                    let d = (1.0 / target).log2().ceil().clamp(0.0, 52.0).exp2() as i64;
                    self.used.insert(cell.clone());
                    match self.labeler.grid_walk(&cell, d, &self.used, walk_left)? {
                        Some(found) => {
                            walk_left -= found.1;
                            found
                        }
                        None => return Ok(None),
                    }
                }
            };
            let round = TraceRound {
                round: 0,
                mesh: complex.mesh(),
                n_vertices: complex.vertices().len(),
                n_completely_labeled: full.len(),
                candidate_lambda: WeightVector::uniform(n),
                max_envy: 0.0,
                forced_labels: forced.into_inner().expect("counter poisoned"),
                walk_steps,
            };
            self.complexes.push(complex);
            cell = next;
            let before = self.best.1;
            if let Some(done) = self.visit(&cell, round)? {
                return Ok(Some(done));
            }
            since_best = if self.best.1 < before { 0 } else { since_best + 1 };
            if cell.diameter() < MIN_MESH {
                return Ok(None);
            }
        }
        Ok(None)
    }
}

/// As [`refine_to_lambda`], keeping the trace and per-round complexes.
///
/// Round `k` moves one subdivision level deeper, into the completely labeled child of
/// the current cell whose barycenter is least envious. The labeling is only guaranteed
/// proper on the whole simplex, so sometimes no child is completely labeled; the round
/// then follows Sperner door paths through a Freudenthal grid of about the children's
/// size, starting around the current cell, and continues from the completely labeled
/// grid cell where a path ends.
///
/// If that descent stalls, Sperner's path along the nested faces of a grid on the whole
/// simplex (which always ends in a completely labeled cell) picks a new starting cell,
/// on grids `1/8, 1/16, …`, and the descent resumes from there. `schedule.len()` bounds
/// the number of descent rounds.
pub fn refine(
    space: &DeterministicSpace,
    prefs: &[Preference],
    delta: f64,
    eps: f64,
    schedule: &[f64],
) -> Result<Refinement> {
    if schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(FairDivError::InvalidConfig("mesh schedule must be strictly decreasing".into()));
    }
    if !(eps > 0.0) {
        return Err(FairDivError::InvalidConfig(format!("eps must be positive, got {eps}")));
    }
    let n = space.n_agents();
    let labeler = Labeler {
        space,
        prefs,
        cfg: SolverConfig::new(delta, SEARCH_OPT_TOL, SEARCH_MAX_ITERS)?,
        envy_tol: eps / 4.0,
        memo: Mutex::new(HashMap::new()),
    };
    let whole = Simplex::standard(n);
    let mut search = Search {
        labeler,
        n,
        eps,
        trace: Vec::new(),
        complexes: Vec::new(),
        best: (whole.barycenter(), f64::INFINITY),
        used: BTreeSet::new(),
        rounds_left: schedule.len(),
    };
    let first = TraceRound {
        round: 0,
        mesh: whole.diameter(),
        n_vertices: n,
        n_completely_labeled: 1,
        candidate_lambda: whole.barycenter(),
        max_envy: 0.0,
        forced_labels: 0,
        walk_steps: 0,
    };
    if let Some(done) = search.visit(&whole, first)? {
        return Ok(done);
    }
    if let Some(done) = search.descend(whole.clone())? {
        return Ok(done);
    }
    if n > 1 {
        for p in PATH_GRID_EXPONENTS {
            if search.rounds_left == 0 {
                break;
            }
            let d = 1i64 << p;
            let Some((cell, steps)) = search.labeler.face_path(n, d, MAX_PATH_STEPS)? else {
                break;
            };
            let Some((cell, more)) = search.labeler.leave_corners(cell, d, MAX_PATH_STEPS)? else {
                continue;
            };
            let (cell, steps) = (Simplex { vertices: cell.vertices(d) }, steps + more);
            let round = TraceRound {
                round: 0,
                mesh: cell.diameter(),
                n_vertices: 0,
                n_completely_labeled: 1,
                candidate_lambda: whole.barycenter(),
                max_envy: 0.0,
                forced_labels: 0,
                walk_steps: steps,
            };
            if let Some(done) = search.visit(&cell, round)? {
                return Ok(done);
            }
            if let Some(done) = search.descend(cell)? {
                return Ok(done);
            }
        }
    }
    Err(FairDivError::RefinementFailure {
        best_lambda: search.best.0.to_f64(),
        max_envy: search.best.1,
    })
}

/// Outcome of [`solve_fair_detailed`].
#[derive(Debug, Clone)]
pub struct FairRun {
    pub certificate: FairCertificate,
    pub refinement: Refinement,
}

/// An ε-envy-free lottery that is weakly Pareto efficient up to `ε + δN`, with `δ = ε/N`.
pub fn solve_fair(space: &DeterministicSpace, prefs: &[Preference], eps: f64) -> Result<FairCertificate> {
    Ok(solve_fair_detailed(space, prefs, eps)?.certificate)
}

pub fn solve_fair_detailed(space: &DeterministicSpace, prefs: &[Preference], eps: f64) -> Result<FairRun> {
    let report = validate_space(space);
    if let Some(w) = report.witness {
        return Err(FairDivError::InvarianceViolation(format!(
            "allocation ({}) has no swap of agents {} and {}",
            w.missing.join(", "),
            w.i + 1,
            w.j + 1
        )));
    }
    if prefs.len() != space.n_agents() {
        return Err(FairDivError::DimensionMismatch(format!(
            "{} preferences for {} agents",
            prefs.len(),
            space.n_agents()
        )));
    }
    let n = space.n_agents();
    // max G = N at point masses, so δN bounds the regularization bias
    let delta = eps / n as f64;
    let refinement = refine(space, prefs, delta, eps, &default_schedule(n))?;
    let lottery = refinement.solution.lottery.clone();
    let envy = envy_from_marginals(prefs, &refinement.solution.marginals)?.max();
    let wpe = wpe_analysis(space, prefs, &lottery, 1e-12)?.gap;
    let bound = eps + delta * n as f64;
    if wpe > bound {
        return Err(FairDivError::WpeCheckFailure { gap: wpe, bound });
    }
    if envy > eps {
        return Err(FairDivError::RefinementFailure {
            best_lambda: refinement.lambda.to_f64(),
            max_envy: envy,
        });
    }
    Ok(FairRun {
        certificate: FairCertificate {
            lambda_bar: refinement.lambda.clone(),
            lottery,
            max_envy: envy,
            wpe_gap: wpe,
            delta_final: delta,
            mesh_final: refinement.mesh,
            subdivision_rounds: refinement.rounds,
        },
        refinement,
    })
}

const PALETTE: [&str; 3] = ["#d95f02", "#1b9e77", "#7570b3"];

/// SVG of the labeled subdivisions of a three-agent run; completely labeled cells outlined.
pub fn plot_svg(refinement: &Refinement) -> Result<String> {
    let n = refinement.lambda.dim();
    if n != 3 {
        return Err(FairDivError::DimensionMismatch(format!(
            "plotting needs 3 agents, got {n}"
        )));
    }
    let (w, h, pad) = (600.0, 540.0, 30.0);
    let corners = [(pad, h - pad), (w - pad, h - pad), (w / 2.0, pad)];
    let xy = |v: &WeightVector| {
        let l = v.to_f64();
        let x: f64 = (0..3).map(|i| l[i] * corners[i].0).sum();
        let y: f64 = (0..3).map(|i| l[i] * corners[i].1).sum();
        (x, y)
    };
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let outline = |s: &Simplex, stroke: &str, width: f64, out: &mut String| {
        let pts: Vec<String> = s
            .vertices()
            .iter()
            .map(|v| {
                let (x, y) = xy(v);
                format!("{x:.3},{y:.3}")
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polygon points="{}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#,
            pts.join(" ")
        );
    };
    outline(&Simplex::standard(3), "black", 1.5, &mut out);
    for complex in &refinement.complexes {
        for s in complex.simplices() {
            outline(s, "#999999", 0.4, &mut out);
        }
        if let Ok(full) = find_completely_labeled(complex) {
            for s in &full {
                outline(s, "black", 1.2, &mut out);
            }
        }
        for (v, &l) in complex.labels() {
            let (x, y) = xy(v);
            let _ = writeln!(
                out,
                r#"<circle cx="{x:.3}" cy="{y:.3}" r="3" fill="{}"/>"#,
                PALETTE[l]
            );
        }
    }
    let (x, y) = xy(&refinement.lambda);
    let _ = writeln!(
        out,
        r#"<circle cx="{x:.3}" cy="{y:.3}" r="5" fill="none" stroke="red" stroke-width="1.5"/>"#
    );
    for (j, c) in corners.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="14" fill="{}">agent {}</text>"#,
            c.0 - 20.0,
            if j == 2 { c.1 - 8.0 } else { c.1 + 20.0 },
            PALETTE[j],
            j + 1
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}
