//! Finite deterministic-allocation spaces and the generators for the standard settings.
//!
//! A [`DeterministicSpace`] is an explicit list of feasible joint allocations. Each
//! allocation is an `n_agents`-tuple of item identifiers drawn from a shared
//! [`ItemSpace`]. Allocations are stored in canonical (lexicographic) order so that
//! the coordinate-swap lookup used by permutation-invariance checks and by the swap
//! operator is a binary search.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{FairDivError, Result};
use crate::rational::{format as fmt_rational, ratio};

/// Upper bound on the number of joint allocations a generator may enumerate.
pub const MAX_ALLOCATIONS: usize = 2_000_000;

/// Index of an item inside an [`ItemSpace`].
pub type ItemId = usize;

/// Ordered list of distinct item identifiers shared by all agents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemSpace {
    items: Vec<String>,
}

impl ItemSpace {
    fn from_names(names: impl IntoIterator<Item = String>) -> Self {
        let set: BTreeSet<String> = names.into_iter().collect();
        Self {
            items: set.into_iter().collect(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.items.len()
    }

    pub fn name(&self, id: ItemId) -> &str {
        &self.items[id]
    }

    pub fn id(&self, name: &str) -> Option<ItemId> {
        self.items
            .binary_search_by(|probe| probe.as_str().cmp(name))
            .ok()
    }

    pub fn names(&self) -> &[String] {
        &self.items
    }
}

/// A finite, nonempty set of feasible joint allocations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterministicSpace {
    name: String,
    n_agents: usize,
    items: ItemSpace,
    allocations: Vec<Vec<ItemId>>,
}

impl DeterministicSpace {
    /// Builds a space from allocation tuples given by item name.
    ///
    /// Fails on an empty list, on tuples of the wrong length, and on duplicate tuples.
    pub fn from_tuples(
        name: impl Into<String>,
        n_agents: usize,
        tuples: Vec<Vec<String>>,
    ) -> Result<Self> {
        let name = name.into();
        if n_agents == 0 {
            return Err(FairDivError::InvalidInstance("at least one agent is required".into()));
        }
        if tuples.is_empty() {
            return Err(FairDivError::EmptySpace(format!("`{name}` has no feasible allocation")));
        }
        if let Some(bad) = tuples.iter().find(|t| t.len() != n_agents) {
            return Err(FairDivError::InvalidInstance(format!(
                "allocation {bad:?} has {} coordinates, expected {n_agents}",
                bad.len()
            )));
        }
        let items = ItemSpace::from_names(tuples.iter().flatten().cloned());
        let mut allocations: Vec<Vec<ItemId>> = tuples
            .iter()
            .map(|t| t.iter().map(|s| items.id(s).expect("item collected above")).collect())
            .collect();
        allocations.sort_unstable();
        if let Some(w) = allocations.windows(2).find(|w| w[0] == w[1]) {
            let names: Vec<&str> = w[0].iter().map(|&i| items.name(i)).collect();
            return Err(FairDivError::InvalidInstance(format!(
                "duplicate allocation {names:?}"
            )));
        }
        Ok(Self {
            name,
            n_agents,
            items,
            allocations,
        })
    }

    fn from_unique_tuples(name: &str, n_agents: usize, tuples: Vec<Vec<String>>) -> Result<Self> {
        if tuples.len() > MAX_ALLOCATIONS {
            return Err(FairDivError::TooLarge(format!(
                "{name}: {} allocations exceed the limit of {MAX_ALLOCATIONS}",
                tuples.len()
            )));
        }
        Self::from_tuples(name, n_agents, tuples)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn items(&self) -> &ItemSpace {
        &self.items
    }

    pub fn n_items(&self) -> usize {
        self.items.dimension()
    }

    pub fn len(&self) -> usize {
        self.allocations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.allocations.is_empty()
    }

    pub fn allocation(&self, idx: usize) -> &[ItemId] {
        &self.allocations[idx]
    }

    pub fn allocations(&self) -> &[Vec<ItemId>] {
        &self.allocations
    }

    /// Item names of allocation `idx`, agent by agent.
    pub fn tuple_names(&self, idx: usize) -> Vec<String> {
        self.allocations[idx]
            .iter()
            .map(|&i| self.items.name(i).to_string())
            .collect()
    }

    pub fn index_of(&self, tuple: &[ItemId]) -> Option<usize> {
        self.allocations
            .binary_search_by(|probe| probe.as_slice().cmp(tuple))
            .ok()
    }

    pub fn index_of_names(&self, names: &[String]) -> Result<usize> {
        let ids = names
            .iter()
            .map(|n| self.items.id(n).ok_or_else(|| FairDivError::UnknownItem(n.clone())))
            .collect::<Result<Vec<_>>>()?;
        self.index_of(&ids).ok_or_else(|| {
            FairDivError::InvalidLottery(format!("allocation {names:?} is not in the space"))
        })
    }

    /// Index of the allocation obtained by exchanging the coordinates of agents `i` and `j`.
    pub fn swapped_index(&self, idx: usize, i: usize, j: usize) -> Option<usize> {
        let mut t = self.allocations[idx].clone();
        t.swap(i, j);
        self.index_of(&t)
    }

    pub fn check_agent(&self, agent: usize) -> Result<()> {
        if agent >= self.n_agents {
            return Err(FairDivError::AgentOutOfRange {
                agent,
                n_agents: self.n_agents,
            });
        }
        Ok(())
    }

    /// SHA-256 over the canonical content of the space, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.name.as_bytes());
        h.update([0]);
        h.update((self.n_agents as u64).to_le_bytes());
        for item in self.items.names() {
            h.update(item.as_bytes());
            h.update([0]);
        }
        for a in &self.allocations {
            for &i in a {
                h.update((i as u64).to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A coordinate swap that leaves the feasible set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapWitness {
    /// The swapped tuple that is missing from the space.
    pub missing: Vec<String>,
    pub i: usize,
    pub j: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub permutation_invariant: bool,
    pub witness: Option<SwapWitness>,
    pub projections_equal: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.permutation_invariant && self.projections_equal
    }

    pub fn to_key_values(&self) -> String {
        let mut out = format!(
            "permutation_invariant={}\nprojections_equal={}\n",
            self.permutation_invariant, self.projections_equal
        );
        match &self.witness {
            Some(w) => out.push_str(&format!(
                "witness=({})\nwitness_agents={},{}\n",
                w.missing.join(","),
                w.i,
                w.j
            )),
            None => out.push_str("witness=none\n"),
        }
        out
    }
}

/// Checks closure under every coordinate swap and equality of the agents' projections.
///
/// The witness is the first missing swapped tuple, scanning allocations in canonical
/// order and agent pairs `(i, j)` with `i < j`.
pub fn validate_space(space: &DeterministicSpace) -> ValidationReport {
    let n = space.n_agents();
    let mut witness = None;
    'outer: for idx in 0..space.len() {
        for i in 0..n {
            for j in i + 1..n {
                if space.swapped_index(idx, i, j).is_none() {
                    let mut missing = space.tuple_names(idx);
                    missing.swap(i, j);
                    witness = Some(SwapWitness { missing, i, j });
                    break 'outer;
                }
            }
        }
    }
    let projections: Vec<HashSet<ItemId>> = (0..n)
        .map(|j| space.allocations().iter().map(|a| a[j]).collect())
        .collect();
    let projections_equal = projections.windows(2).all(|w| w[0] == w[1]);
    ValidationReport {
        permutation_invariant: witness.is_none(),
        witness,
        projections_equal,
    }
}

/// Whether the tuple `names` is feasible and its `(i, j)` swap is not.
pub fn is_swap_violation(space: &DeterministicSpace, names: &[String], i: usize, j: usize) -> bool {
    let Ok(idx) = space.index_of_names(names) else {
        return false;
    };
    space.swapped_index(idx, i, j).is_none()
}

fn letter_name(k: usize, n: usize) -> String {
    if n <= 26 {
        ((b'A' + k as u8) as char).to_string()
    } else {
        format!("o{k:04}")
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for k in 0..used.len() {
            if !used[k] {
                used[k] = true;
                prefix.push(k);
                rec(prefix, used, out);
                prefix.pop();
                used[k] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// House allocation: all assignments of `n` distinct objects to `n` agents.
pub fn gen_hz(n: usize) -> Result<DeterministicSpace> {
    if n == 0 {
        return Err(FairDivError::InvalidInstance("gen_hz needs n >= 1".into()));
    }
    if (1..=n).product::<usize>() > MAX_ALLOCATIONS {
        return Err(FairDivError::TooLarge(format!("{n}! permutations")));
    }
    let tuples = permutations(n)
        .into_iter()
        .map(|p| p.into_iter().map(|k| letter_name(k, n)).collect())
        .collect();
    DeterministicSpace::from_unique_tuples(&format!("hz({n})"), n, tuples)
}

fn bundle_name(b: &[usize]) -> String {
    let parts: Vec<String> = b.iter().map(|x| x.to_string()).collect();
    format!("[{}]", parts.join(","))
}

/// Bundles `b <= supply` componentwise with total size at most `cap`.
fn bundles(supply: &[usize], cap: usize) -> Vec<Vec<usize>> {
    fn rec(supply: &[usize], cap: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == supply.len() {
            out.push(cur.clone());
            return;
        }
        let used: usize = cur.iter().sum();
        let limit = supply[cur.len()].min(cap - used);
        for x in 0..=limit {
            cur.push(x);
            rec(supply, cap, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(supply, cap, &mut Vec::new(), &mut out);
    out
}

/// All tuples of bundles whose componentwise sum stays within `supply`.
fn joint_bundles(name: &str, n_agents: usize, supply: &[usize], cap: usize) -> Result<DeterministicSpace> {
    if n_agents == 0 {
        return Err(FairDivError::InvalidInstance(format!("{name}: no agents")));
    }
    let per_agent = bundles(supply, cap);
    let names: Vec<String> = per_agent.iter().map(|b| bundle_name(b)).collect();
    let mut out: Vec<Vec<String>> = Vec::new();
    let mut remaining = supply.to_vec();
    let mut cur: Vec<usize> = Vec::with_capacity(n_agents);

    fn rec(
        per_agent: &[Vec<usize>],
        names: &[String],
        n_agents: usize,
        remaining: &mut Vec<usize>,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<String>>,
    ) -> bool {
        if cur.len() == n_agents {
            out.push(cur.iter().map(|&b| names[b].clone()).collect());
            return out.len() <= MAX_ALLOCATIONS;
        }
        for (k, b) in per_agent.iter().enumerate() {
            if b.iter().zip(remaining.iter()).all(|(x, r)| x <= r) {
                for (r, x) in remaining.iter_mut().zip(b) {
                    *r -= x;
                }
                cur.push(k);
                let ok = rec(per_agent, names, n_agents, remaining, cur, out);
                cur.pop();
                for (r, x) in remaining.iter_mut().zip(b) {
                    *r += x;
                }
                if !ok {
                    return false;
                }
            }
        }
        true
    }

    if !rec(&per_agent, &names, n_agents, &mut remaining, &mut cur, &mut out) {
        return Err(FairDivError::TooLarge(format!(
            "{name}: more than {MAX_ALLOCATIONS} allocations"
        )));
    }
    DeterministicSpace::from_unique_tuples(name, n_agents, out)
}

/// Multi-unit demand: each agent takes at most `k` units in total, jointly within `supply`.
pub fn gen_multiunit(n_agents: usize, supply: &[usize], k: usize) -> Result<DeterministicSpace> {
    if k == 0 {
        return Err(FairDivError::InvalidInstance("gen_multiunit needs k >= 1".into()));
    }
    let supply_s: Vec<String> = supply.iter().map(|s| s.to_string()).collect();
    joint_bundles(
        &format!("multiunit({n_agents};{};{k})", supply_s.join(",")),
        n_agents,
        supply,
        k,
    )
}

/// Differentiated goods: integer bundles over `endowment.len()` characteristics with
/// total size at most `cap`, jointly bounded by `endowment`.
pub fn gen_differentiated(
    n_agents: usize,
    endowment: &[usize],
    cap: usize,
) -> Result<DeterministicSpace> {
    let nu: Vec<String> = endowment.iter().map(|s| s.to_string()).collect();
    joint_bundles(
        &format!("differentiated({n_agents};{};{cap})", nu.join(",")),
        n_agents,
        endowment,
        cap,
    )
}

fn set_name(set: &BTreeSet<usize>) -> String {
    let parts: Vec<String> = set.iter().map(|x| x.to_string()).collect();
    format!("{{{}}}", parts.join(","))
}

/// Parses a `{1,3}`-style item name back into its element set.
pub fn parse_set_name(name: &str) -> Option<BTreeSet<usize>> {
    let inner = name.strip_prefix('{')?.strip_suffix('}')?;
    if inner.is_empty() {
        return Some(BTreeSet::new());
    }
    inner.split(',').map(|p| p.trim().parse().ok()).collect()
}

/// Listed partitions of items `1..=n_items`, each distributed to the agents in every order.
///
/// Every partition must have exactly one block per agent; blocks may be empty.
pub fn gen_partition_family(
    n_agents: usize,
    n_items: usize,
    partitions: &[Vec<Vec<usize>>],
) -> Result<DeterministicSpace> {
    if n_agents == 0 {
        return Err(FairDivError::InvalidInstance("no agents".into()));
    }
    let mut tuples: BTreeSet<Vec<String>> = BTreeSet::new();
    for (t, part) in partitions.iter().enumerate() {
        if part.len() != n_agents {
            return Err(FairDivError::InvalidInstance(format!(
                "partition {t} has {} blocks, expected {n_agents}",
                part.len()
            )));
        }
        let mut seen = BTreeSet::new();
        let mut blocks = Vec::with_capacity(n_agents);
        for block in part {
            let set: BTreeSet<usize> = block.iter().copied().collect();
            for &e in &set {
                if e == 0 || e > n_items {
                    return Err(FairDivError::InvalidInstance(format!(
                        "partition {t}: item {e} outside 1..={n_items}"
                    )));
                }
                if !seen.insert(e) {
                    return Err(FairDivError::InvalidInstance(format!(
                        "partition {t}: item {e} appears in two blocks"
                    )));
                }
            }
            blocks.push(set_name(&set));
        }
        for perm in permutations(n_agents) {
            tuples.insert(perm.iter().map(|&k| blocks[k].clone()).collect());
        }
    }
    DeterministicSpace::from_unique_tuples(
        &format!("partition_family({n_agents};{n_items};{})", partitions.len()),
        n_agents,
        tuples.into_iter().collect(),
    )
}

/// Cake cells `1..=n_cells`, every assignment of cells to agents; an agent's item is its cell set.
pub fn gen_cake_space(n_agents: usize, n_cells: usize) -> Result<DeterministicSpace> {
    if n_agents == 0 || n_cells == 0 {
        return Err(FairDivError::InvalidInstance(
            "gen_cake_space needs at least one agent and one cell".into(),
        ));
    }
    let total = (n_agents as u128).checked_pow(n_cells as u32);
    if total.map_or(true, |t| t > MAX_ALLOCATIONS as u128) {
        return Err(FairDivError::TooLarge(format!("{n_agents}^{n_cells} assignments")));
    }
    let tuples = cake_assignments(n_agents, n_cells)
        .into_iter()
        .map(|assign| {
            (0..n_agents)
                .map(|j| {
                    let set: BTreeSet<usize> = assign
                        .iter()
                        .enumerate()
                        .filter(|(_, &a)| a == j)
                        .map(|(i, _)| i + 1)
                        .collect();
                    set_name(&set)
                })
                .collect()
        })
        .collect();
    DeterministicSpace::from_unique_tuples(&format!("cake({n_agents};{n_cells})"), n_agents, tuples)
}

/// All maps `cell -> agent`, in mixed-radix order with cell 0 most significant.
pub fn cake_assignments(n_agents: usize, n_cells: usize) -> Vec<Vec<usize>> {
    let total = n_agents.pow(n_cells as u32);
    (0..total)
        .map(|mut code| {
            let mut a = vec![0; n_cells];
            for slot in a.iter_mut().rev() {
                *slot = code % n_agents;
                code /= n_agents;
            }
            a
        })
        .collect()
}

/// Parameters of the truncated airport-slot economy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotParams {
    pub n_airlines: usize,
    pub m_airports: usize,
    pub horizon: usize,
    /// Maximum movements per period across airports, per airline.
    pub fleet_cap: usize,
    /// Minimum movements per airport in each activity window.
    pub min_activity: usize,
    /// Window length parameter: windows are `[t, t + window]` for `t = 0, window, 2·window, ...`.
    pub window: usize,
    /// Aircraft stock per airport at period 0, identical for every airline.
    pub initial_stock: Vec<usize>,
    /// Joint slot capacity, indexed by period then airport.
    pub slot_supply: Vec<Vec<usize>>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Movement {
    Idle,
    Arrival,
    Departure,
}

impl Movement {
    fn symbol(self) -> char {
        match self {
            Movement::Idle => '.',
            Movement::Arrival => 'a',
            Movement::Departure => 'd',
        }
    }
}

/// Joint slot schedules over a finite horizon.
///
/// Each airline has, per period and airport, at most one slot, used for an arrival or a
/// departure. Feasibility per airline: fleet cap per period, minimum activity per window
/// and airport, nonnegative stock under the stock-flow equation. Jointly, slot usage is
/// bounded by `slot_supply`.
pub fn gen_slots(p: &SlotParams) -> Result<DeterministicSpace> {
    let (h, m) = (p.horizon, p.m_airports);
    if p.n_airlines == 0 || m == 0 || h == 0 {
        return Err(FairDivError::InvalidInstance(
            "gen_slots needs airlines, airports and a positive horizon".into(),
        ));
    }
    if p.window == 0 {
        return Err(FairDivError::InvalidInstance("activity window must be >= 1".into()));
    }
    if p.initial_stock.len() != m {
        return Err(FairDivError::InvalidInstance(format!(
            "initial_stock has {} entries, expected {m}",
            p.initial_stock.len()
        )));
    }
    if p.slot_supply.len() != h || p.slot_supply.iter().any(|row| row.len() != m) {
        return Err(FairDivError::InvalidInstance(format!(
            "slot_supply must be {h} periods x {m} airports"
        )));
    }
    let cells = h * m;
    if 3f64.powi(cells as i32) > MAX_ALLOCATIONS as f64 {
        return Err(FairDivError::TooLarge(format!("3^{cells} candidate schedules")));
    }

    let moves = [Movement::Idle, Movement::Arrival, Movement::Departure];
    let mut schedules: Vec<Vec<Movement>> = Vec::new();
    for mut code in 0..3usize.pow(cells as u32) {
        let mut s = Vec::with_capacity(cells);
        for _ in 0..cells {
            s.push(moves[code % 3]);
            code /= 3;
        }
        schedules.push(s);
    }
    let used = |s: &[Movement], n: usize, l: usize| (s[n * m + l] != Movement::Idle) as usize;
    schedules.retain(|s| {
        for n in 0..h {
            if (0..m).map(|l| used(s, n, l)).sum::<usize>() > p.fleet_cap {
                return false;
            }
            if (0..m).any(|l| used(s, n, l) > p.slot_supply[n][l]) {
                return false;
            }
        }
        for l in 0..m {
            let mut t = 0;
            while t < h {
                let end = (t + p.window).min(h - 1);
                let activity: usize = (t..=end).map(|n| used(s, n, l)).sum();
                if activity < p.min_activity {
                    return false;
                }
                t += p.window;
            }
            let mut stock = p.initial_stock[l] as i64;
            for n in 0..h {
                match s[n * m + l] {
                    Movement::Arrival => stock += 1,
                    Movement::Departure => stock -= 1,
                    Movement::Idle => {}
                }
                if stock < 0 {
                    return false;
                }
            }
        }
        true
    });
    if schedules.is_empty() {
        return Err(FairDivError::EmptySpace(format!(
            "no single-airline schedule meets fleet cap {}, minimum activity {} per window of {} \
             and the stock-flow constraint over horizon {h}",
            p.fleet_cap, p.min_activity, p.window
        )));
    }
    let names: Vec<String> = schedules
        .iter()
        .map(|s| {
            (0..h)
                .map(|n| (0..m).map(|l| s[n * m + l].symbol()).collect::<String>())
                .collect::<Vec<_>>()
                .join("|")
        })
        .collect();

    let mut out: Vec<Vec<String>> = Vec::new();
    let mut load = vec![0usize; cells];
    let mut cur = Vec::with_capacity(p.n_airlines);
    fn rec(
        p: &SlotParams,
        schedules: &[Vec<Movement>],
        names: &[String],
        load: &mut [usize],
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<String>>,
    ) -> bool {
        if cur.len() == p.n_airlines {
            out.push(cur.iter().map(|&k| names[k].clone()).collect());
            return out.len() <= MAX_ALLOCATIONS;
        }
        let m = p.m_airports;
        for (k, s) in schedules.iter().enumerate() {
            let fits = s
                .iter()
                .enumerate()
                .all(|(c, mv)| *mv == Movement::Idle || load[c] < p.slot_supply[c / m][c % m]);
            if !fits {
                continue;
            }
            for (c, mv) in s.iter().enumerate() {
                load[c] += (*mv != Movement::Idle) as usize;
            }
            cur.push(k);
            let ok = rec(p, schedules, names, load, cur, out);
            cur.pop();
            for (c, mv) in s.iter().enumerate() {
                load[c] -= (*mv != Movement::Idle) as usize;
            }
            if !ok {
                return false;
            }
        }
        true
    }
    if !rec(p, &schedules, &names, &mut load, &mut cur, &mut out) {
        return Err(FairDivError::TooLarge(format!("more than {MAX_ALLOCATIONS} joint schedules")));
    }
    if out.is_empty() {
        return Err(FairDivError::EmptySpace(
            "joint slot supply admits no schedule profile".into(),
        ));
    }
    DeterministicSpace::from_unique_tuples(
        &format!("slots({};{m};{h})", p.n_airlines),
        p.n_airlines,
        out,
    )
}

/// Two-consumer leisure/consumption economy on a uniform grid; not permutation-invariant.
///
/// Leisure takes values `k/(grid-1)` in `[0, 1]`, consumption the same grid up to `11/10`.
/// The technology constraint `z1 + z2 <= (1 - l1) + (1 - l2)/10` is checked exactly.
pub fn gen_pazner_schmeidler(grid: usize) -> Result<DeterministicSpace> {
    if grid < 2 {
        return Err(FairDivError::InvalidInstance("grid needs at least 2 points".into()));
    }
    let s = (grid - 1) as i64;
    let z_max = (11 * s) / 10;
    let mut points = Vec::new();
    for l in 0..=s {
        for z in 0..=z_max {
            points.push((l, z));
        }
    }
    let name = |l: i64, z: i64| {
        format!("({},{})", fmt_rational(&ratio(l, s)), fmt_rational(&ratio(z, s)))
    };
    let mut tuples = Vec::new();
    for &(l1, z1) in &points {
        for &(l2, z2) in &points {
            if 10 * (z1 + z2) <= 10 * (s - l1) + (s - l2) {
                tuples.push(vec![name(l1, z1), name(l2, z2)]);
            }
        }
    }
    DeterministicSpace::from_unique_tuples(&format!("pazner_schmeidler({grid})"), 2, tuples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn hz_counts_and_validates() {
        assert_eq!(gen_hz(1).unwrap().len(), 1);
        assert_eq!(gen_hz(3).unwrap().len(), 6);
        let s4 = gen_hz(4).unwrap();
        assert_eq!(s4.len(), 24);
        assert!(validate_space(&s4).passed());
        assert!(validate_space(&gen_hz(2).unwrap()).permutation_invariant);
        assert!(gen_hz(0).is_err());
    }

    #[test]
    fn canonical_order_puts_a_to_agent_one_first() {
        let s = gen_hz(2).unwrap();
        assert_eq!(s.tuple_names(0), names(&["A", "B"]));
        assert_eq!(s.tuple_names(1), names(&["B", "A"]));
    }

    #[test]
    fn multiunit_counts_match_enumeration() {
        assert_eq!(gen_multiunit(2, &[1], 1).unwrap().len(), 3);
        assert_eq!(gen_multiunit(2, &[2], 2).unwrap().len(), 6);
        // bundles of size <= 1 from {a, b}: nobody, a or b each; both agents cannot take the
        // same single copy, so 9 - 2 = 7
        assert_eq!(gen_multiunit(2, &[1, 1], 1).unwrap().len(), 7);
        assert!(gen_multiunit(2, &[1], 0).is_err());
    }

    #[test]
    fn differentiated_counts() {
        assert_eq!(gen_differentiated(2, &[1], 1).unwrap().len(), 3);
        assert_eq!(gen_differentiated(2, &[1, 1], 2).unwrap().len(), 9);
        let zero = gen_differentiated(2, &[3, 1], 0).unwrap();
        assert_eq!(zero.len(), 1);
        assert_eq!(zero.tuple_names(0), names(&["[0,0]", "[0,0]"]));
    }

    #[test]
    fn partition_family_counts_and_errors() {
        assert_eq!(gen_partition_family(2, 2, &[vec![vec![1], vec![2]]]).unwrap().len(), 2);
        let two = vec![vec![vec![1], vec![2, 3]], vec![vec![1, 2], vec![3]]];
        assert_eq!(gen_partition_family(2, 3, &two).unwrap().len(), 4);
        let s = gen_partition_family(3, 3, &[vec![vec![1], vec![2], vec![3]]]).unwrap();
        assert_eq!(s.len(), 6);
        assert!(validate_space(&s).passed());
        let overlap = gen_partition_family(2, 3, &[vec![vec![1, 2], vec![2]]]);
        assert!(matches!(overlap, Err(FairDivError::InvalidInstance(_))));
        assert!(gen_partition_family(2, 2, &[vec![vec![1], vec![5]]]).is_err());
        assert!(gen_partition_family(2, 2, &[vec![vec![1]]]).is_err());
    }

    #[test]
    fn cake_space_counts() {
        assert_eq!(gen_cake_space(2, 3).unwrap().len(), 8);
        assert_eq!(gen_cake_space(1, 4).unwrap().len(), 1);
        let s = gen_cake_space(3, 2).unwrap();
        assert_eq!(s.len(), 9);
        assert!(validate_space(&s).passed());
        assert_eq!(parse_set_name("{1,3}").unwrap(), [1, 3].into_iter().collect());
        assert!(parse_set_name("{}").unwrap().is_empty());
    }

    fn slot_params(n: usize, h: usize, l_min: usize, supply: usize) -> SlotParams {
        SlotParams {
            n_airlines: n,
            m_airports: 1,
            horizon: h,
            fleet_cap: 1,
            min_activity: l_min,
            window: 1,
            initial_stock: vec![1],
            slot_supply: vec![vec![supply]; h],
        }
    }

    #[test]
    fn slots_single_airline_filters_negative_stock() {
        // 3 movement states per period, 9 patterns; only departure-departure drains the
        // single initial aircraft below zero
        let s = gen_slots(&slot_params(1, 2, 0, 1)).unwrap();
        assert_eq!(s.len(), 8);
        assert!(s.items().id("d|d").is_none());
        assert!(s.items().id("d|a").is_some());
    }

    #[test]
    fn slots_infeasible_activity_is_an_error() {
        let err = gen_slots(&slot_params(1, 2, 3, 1)).unwrap_err();
        assert!(matches!(err, FairDivError::EmptySpace(_)));
    }

    #[test]
    fn slots_two_symmetric_airlines_validate() {
        let mut p = slot_params(2, 2, 0, 1);
        p.window = 2;
        let s = gen_slots(&p).unwrap();
        assert!(validate_space(&s).passed());
    }

    #[test]
    fn pazner_schmeidler_is_not_permutation_invariant() {
        let s = gen_pazner_schmeidler(11).unwrap();
        let report = validate_space(&s);
        assert!(!report.permutation_invariant);
        let w = report.witness.expect("witness present when invariance fails");
        assert!(!s.items().names().is_empty());
        let mut feasible = w.missing.clone();
        feasible.swap(w.i, w.j);
        assert!(is_swap_violation(&s, &feasible, w.i, w.j));
        // the textbook pair: ((0,1/2),(1,1/2)) is feasible, its swap is not
        let textbook = names(&["(0,1/2)", "(1,1/2)"]);
        assert!(is_swap_violation(&s, &textbook, 0, 1));
    }

    #[test]
    fn explicit_one_sided_space_reports_missing_swap() {
        let s = DeterministicSpace::from_tuples("x", 2, vec![names(&["A", "B"])]).unwrap();
        let r = validate_space(&s);
        assert!(!r.permutation_invariant);
        assert_eq!(r.witness.unwrap().missing, names(&["B", "A"]));
        assert!(!r.projections_equal);
    }

    #[test]
    fn empty_and_duplicate_inputs_are_rejected() {
        assert!(matches!(
            DeterministicSpace::from_tuples("x", 2, vec![]),
            Err(FairDivError::EmptySpace(_))
        ));
        let dup = vec![names(&["A", "B"]), names(&["A", "B"])];
        assert!(DeterministicSpace::from_tuples("x", 2, dup).is_err());
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(gen_hz(3).unwrap(), gen_hz(3).unwrap());
        assert_eq!(gen_hz(3).unwrap().digest(), gen_hz(3).unwrap().digest());
        assert_ne!(gen_hz(3).unwrap().digest(), gen_hz(2).unwrap().digest());
    }
}
