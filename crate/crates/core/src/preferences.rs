//! Lotteries over a deterministic space, their marginals, agent preferences and envy.
//!
//! Agents care only about their own marginal. Expected-utility agents evaluate a
//! marginal by one vNM index; maxmin agents take the minimum over several.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{FairDivError, Result};
use crate::instance::{DeterministicSpace, ItemSpace};

/// Tolerance on lottery and marginal total mass.
pub const MASS_TOL: f64 = 1e-12;

/// A finitely supported distribution over allocation indices, sorted by index.
#[derive(Debug, Clone, PartialEq)]
pub struct Lottery {
    support: Vec<(usize, f64)>,
}

impl Lottery {
    /// Validates and canonicalizes `(allocation index, weight)` pairs.
    ///
    /// Zero weights are dropped. Indices must be distinct and below `n_allocations`.
    pub fn new(mut support: Vec<(usize, f64)>, n_allocations: usize) -> Result<Self> {
        if support.iter().any(|&(_, w)| !(w >= 0.0) || !w.is_finite()) {
            return Err(FairDivError::InvalidLottery("weights must be finite and >= 0".into()));
        }
        if let Some(&(idx, _)) = support.iter().find(|&&(i, _)| i >= n_allocations) {
            return Err(FairDivError::InvalidLottery(format!(
                "allocation index {idx} out of range ({n_allocations} allocations)"
            )));
        }
        support.sort_by_key(|&(i, _)| i);
        if support.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(FairDivError::InvalidLottery("repeated allocation index".into()));
        }
        support.retain(|&(_, w)| w > 0.0);
        let total: f64 = support.iter().map(|&(_, w)| w).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(FairDivError::InvalidLottery(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { support })
    }

    /// Like [`Lottery::new`] but rescales the weights to sum to one first.
    pub fn normalized(support: Vec<(usize, f64)>, n_allocations: usize) -> Result<Self> {
        let total: f64 = support.iter().map(|&(_, w)| w).sum();
        if !(total > 0.0) {
            return Err(FairDivError::InvalidLottery("no positive weight".into()));
        }
        Self::new(
            support.into_iter().map(|(i, w)| (i, w / total)).collect(),
            n_allocations,
        )
    }

    pub fn point(idx: usize) -> Self {
        Self {
            support: vec![(idx, 1.0)],
        }
    }

    pub fn support(&self) -> &[(usize, f64)] {
        &self.support
    }

    pub fn weight(&self, idx: usize) -> f64 {
        self.support
            .binary_search_by_key(&idx, |&(i, _)| i)
            .map_or(0.0, |k| self.support[k].1)
    }

    /// `alpha * p + (1 - alpha) * q`.
    pub fn mix(alpha: f64, p: &Lottery, q: &Lottery) -> Lottery {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for &(i, w) in &p.support {
            *acc.entry(i).or_default() += alpha * w;
        }
        for &(i, w) in &q.support {
            *acc.entry(i).or_default() += (1.0 - alpha) * w;
        }
        Lottery {
            support: acc.into_iter().filter(|&(_, w)| w > 0.0).collect(),
        }
    }

    fn check_space(&self, space: &DeterministicSpace) -> Result<()> {
        match self.support.last() {
            Some(&(i, _)) if i >= space.len() => Err(FairDivError::InvalidLottery(format!(
                "allocation index {i} out of range ({} allocations)",
                space.len()
            ))),
            _ => Ok(()),
        }
    }
}

/// Probability mass of each item, indexed like the space's [`ItemSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal {
    pub weights: Vec<f64>,
}

impl Marginal {
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn as_map(&self, items: &ItemSpace) -> BTreeMap<String, f64> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(i, &w)| (items.name(i).to_string(), w))
            .collect()
    }
}

pub type MarginalProfile = Vec<Marginal>;

pub fn marginal(space: &DeterministicSpace, p: &Lottery, j: usize) -> Result<Marginal> {
    space.check_agent(j)?;
    p.check_space(space)?;
    let mut weights = vec![0.0; space.n_items()];
    for &(idx, w) in p.support() {
        weights[space.allocation(idx)[j]] += w;
    }
    Ok(Marginal { weights })
}

pub fn marginals(space: &DeterministicSpace, p: &Lottery) -> Result<MarginalProfile> {
    (0..space.n_agents()).map(|j| marginal(space, p, j)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreferenceKind {
    #[serde(alias = "EU")]
    Eu,
    #[serde(alias = "MAXMIN")]
    Maxmin,
}

/// Utility indices of one agent over the item space.
#[derive(Debug, Clone, PartialEq)]
pub struct Preference {
    kind: PreferenceKind,
    indices: Vec<Vec<f64>>,
}

impl Preference {
    pub fn eu(index: Vec<f64>) -> Self {
        Self {
            kind: PreferenceKind::Eu,
            indices: vec![index],
        }
    }

    pub fn maxmin(indices: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(PreferenceKind::Maxmin, indices)
    }

    pub fn new(kind: PreferenceKind, indices: Vec<Vec<f64>>) -> Result<Self> {
        if indices.is_empty() {
            return Err(FairDivError::InvalidPreference("at least one index is required".into()));
        }
        if kind == PreferenceKind::Eu && indices.len() != 1 {
            return Err(FairDivError::InvalidPreference(
                "expected-utility preferences take exactly one index".into(),
            ));
        }
        let d = indices[0].len();
        if indices.iter().any(|u| u.len() != d) {
            return Err(FairDivError::InvalidPreference("indices differ in length".into()));
        }
        if indices.iter().flatten().any(|x| !x.is_finite()) {
            return Err(FairDivError::InvalidPreference("non-finite utility value".into()));
        }
        Ok(Self { kind, indices })
    }

    /// Builds dense indices from item-name maps; every item of the space must be valued.
    pub fn from_maps(
        kind: PreferenceKind,
        maps: &[BTreeMap<String, f64>],
        items: &ItemSpace,
    ) -> Result<Self> {
        let indices = maps
            .iter()
            .map(|m| {
                items
                    .names()
                    .iter()
                    .map(|name| m.get(name).copied().ok_or_else(|| FairDivError::MissingItem(name.clone())))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(kind, indices)
    }

    pub fn kind(&self) -> PreferenceKind {
        self.kind
    }

    pub fn indices(&self) -> &[Vec<f64>] {
        &self.indices
    }

    pub fn n_items(&self) -> usize {
        self.indices[0].len()
    }

    /// Largest minus smallest value over all indices.
    pub fn range(&self) -> f64 {
        let (lo, hi) = self
            .indices
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        hi - lo
    }
}

fn dot(u: &[f64], m: &[f64]) -> f64 {
    u.iter().zip(m).map(|(a, b)| a * b).sum()
}

/// Utility of a marginal: inner product for EU, minimum inner product for maxmin.
pub fn utility(pref: &Preference, m: &Marginal) -> Result<f64> {
    if pref.n_items() != m.weights.len() {
        return Err(FairDivError::DimensionMismatch(format!(
            "preference covers {} items, marginal has {}",
            pref.n_items(),
            m.weights.len()
        )));
    }
    Ok(pref
        .indices
        .iter()
        .map(|u| dot(u, &m.weights))
        .fold(f64::INFINITY, f64::min))
}

/// Exchange of agents `i` and `j`: pushforward of `p` under the coordinate swap.
pub fn swap(space: &DeterministicSpace, p: &Lottery, i: usize, j: usize) -> Result<Lottery> {
    space.check_agent(i)?;
    space.check_agent(j)?;
    p.check_space(space)?;
    let mut support = Vec::with_capacity(p.support().len());
    for &(idx, w) in p.support() {
        let target = space.swapped_index(idx, i, j).ok_or_else(|| {
            let mut t = space.tuple_names(idx);
            t.swap(i, j);
            FairDivError::InvarianceViolation(format!("{t:?} missing"))
        })?;
        support.push((target, w));
    }
    support.sort_by_key(|&(k, _)| k);
    Ok(Lottery { support })
}

/// Entry `(j, k)` is how much agent `j` prefers `k`'s marginal to its own.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvyMatrix {
    pub entries: Vec<Vec<f64>>,
}

impl EnvyMatrix {
    pub fn row_max(&self, j: usize) -> f64 {
        self.entries[j].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max(&self) -> f64 {
        (0..self.entries.len())
            .map(|j| self.row_max(j))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let n = self.entries.len();
        let mut out = String::from("agent");
        for k in 0..n {
            out.push_str(&format!(",{k}"));
        }
        out.push('\n');
        for (j, row) in self.entries.iter().enumerate() {
            out.push_str(&j.to_string());
            for x in row {
                out.push_str(&format!(",{x}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn envy_from_marginals(prefs: &[Preference], ms: &[Marginal]) -> Result<EnvyMatrix> {
    if prefs.len() != ms.len() {
        return Err(FairDivError::DimensionMismatch(format!(
            "{} preferences for {} agents",
            prefs.len(),
            ms.len()
        )));
    }
    let n = ms.len();
    let mut entries = vec![vec![0.0; n]; n];
    for (j, pref) in prefs.iter().enumerate() {
        let own = utility(pref, &ms[j])?;
        for k in 0..n {
            if k != j {
                entries[j][k] = utility(pref, &ms[k])? - own;
            }
        }
    }
    Ok(EnvyMatrix { entries })
}

pub fn envy_matrix(
    space: &DeterministicSpace,
    p: &Lottery,
    prefs: &[Preference],
) -> Result<EnvyMatrix> {
    envy_from_marginals(prefs, &marginals(space, p)?)
}

/// Largest envy entry; `p` is ε-envy-free iff this is at most ε.
pub fn max_envy(space: &DeterministicSpace, p: &Lottery, prefs: &[Preference]) -> Result<f64> {
    Ok(envy_matrix(space, p, prefs)?.max())
}
