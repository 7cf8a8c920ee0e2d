//! JSON file formats: instances, preferences, lotteries, solver results, certificates
//! and cakes.
//!
//! Exact quantities (weights, cake shares) are written as `"p/q"` strings and read from
//! strings or numbers; floats are written in shortest round-trip form.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cake::{CellMeasure, SimpleAllocation};
use crate::error::{FairDivError, Result};
use crate::instance::{
    gen_cake_space, gen_differentiated, gen_hz, gen_multiunit, gen_partition_family, gen_pazner_schmeidler,
    gen_slots, DeterministicSpace, SlotParams,
};
use crate::preferences::{Lottery, Preference, PreferenceKind};
use crate::qsolver::{QSolution, WeightVector};
use crate::rational::{self, Rational};
use crate::sperner::FairCertificate;

fn parse_json<T: DeserializeOwned>(what: &str, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| FairDivError::Parse(format!("{what}: {e}")))
}

fn params<T: DeserializeOwned>(kind: &str, v: Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| FairDivError::Parse(format!("params of `{kind}`: {e}")))
}

/// `{"kind": ..., "params": {...}, "explicit_allocations": [[...], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub kind: String,
    #[serde(default)]
    pub params: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit_allocations: Option<Vec<Vec<String>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HzParams {
    n_agents: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MultiunitParams {
    n_agents: usize,
    supply: Vec<usize>,
    k: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DifferentiatedParams {
    n_agents: usize,
    endowment: Vec<usize>,
    cap: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionParams {
    n_agents: usize,
    n_items: usize,
    partitions: Vec<Vec<Vec<usize>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CakeParams {
    n_agents: usize,
    n_cells: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridParams {
    grid: usize,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ExplicitParams {
    #[serde(default)]
    name: Option<String>,
}

impl InstanceFile {
    pub fn parse(text: &str) -> Result<Self> {
        parse_json("instance file", text)
    }

    pub fn build(&self) -> Result<DeterministicSpace> {
        let kind = self.kind.as_str();
        if kind != "explicit" && self.explicit_allocations.is_some() {
            return Err(FairDivError::InvalidInstance(format!(
                "explicit_allocations is only read with kind \"explicit\", not \"{kind}\""
            )));
        }
        let p = self.params.clone();
        match kind {
            "hz" => gen_hz(params::<HzParams>(kind, p)?.n_agents),
            "multiunit" => {
                let q: MultiunitParams = params(kind, p)?;
                gen_multiunit(q.n_agents, &q.supply, q.k)
            }
            "differentiated" => {
                let q: DifferentiatedParams = params(kind, p)?;
                gen_differentiated(q.n_agents, &q.endowment, q.cap)
            }
            "partition_family" => {
                let q: PartitionParams = params(kind, p)?;
                gen_partition_family(q.n_agents, q.n_items, &q.partitions)
            }
            "cake" => {
                let q: CakeParams = params(kind, p)?;
                gen_cake_space(q.n_agents, q.n_cells)
            }
            "slots" => gen_slots(&params::<SlotParams>(kind, p)?),
            "pazner_schmeidler" => gen_pazner_schmeidler(params::<GridParams>(kind, p)?.grid),
            "explicit" => {
                let q: ExplicitParams = if p.is_null() { ExplicitParams::default() } else { params(kind, p)? };
                let tuples = self
                    .explicit_allocations
                    .clone()
                    .ok_or_else(|| FairDivError::InvalidInstance("kind \"explicit\" needs explicit_allocations".into()))?;
                let n = tuples.first().map_or(0, Vec::len);
                DeterministicSpace::from_tuples(q.name.unwrap_or_else(|| "explicit".into()), n, tuples)
            }
            other => Err(FairDivError::InvalidInstance(format!("unknown instance kind `{other}`"))),
        }
    }
}

pub fn read_instance(text: &str) -> Result<DeterministicSpace> {
    InstanceFile::parse(text)?.build()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum IndexMaps {
    One(BTreeMap<String, f64>),
    Many(Vec<BTreeMap<String, f64>>),
}

/// One agent's record: `{"kind": "eu" | "maxmin", "index": {item: value} | [{...}, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PreferenceRecord {
    kind: PreferenceKind,
    index: IndexMaps,
}

/// Preferences file: a list of per-agent records, in agent order.
pub fn read_preferences(text: &str, space: &DeterministicSpace) -> Result<Vec<Preference>> {
    let records: Vec<PreferenceRecord> = parse_json("preference file", text)?;
    if records.len() != space.n_agents() {
        return Err(FairDivError::DimensionMismatch(format!(
            "{} preference records for {} agents",
            records.len(),
            space.n_agents()
        )));
    }
    records
        .into_iter()
        .map(|r| {
            let maps = match r.index {
                IndexMaps::One(m) => vec![m],
                IndexMaps::Many(ms) => ms,
            };
            Preference::from_maps(r.kind, &maps, space.items())
        })
        .collect()
}

pub fn write_preferences(prefs: &[Preference], space: &DeterministicSpace) -> String {
    let records: Vec<PreferenceRecord> = prefs
        .iter()
        .map(|p| {
            let maps = p
                .indices()
                .iter()
                .map(|u| space.items().names().iter().cloned().zip(u.iter().copied()).collect())
                .collect();
            PreferenceRecord {
                kind: p.kind(),
                index: IndexMaps::Many(maps),
            }
        })
        .collect();
    to_json(&records)
}

/// A support entry; the allocation is named by `index` (0-based), by its item tuple, or
/// both (which must agree).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LotteryEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocation: Option<Vec<String>>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LotteryFile {
    pub support: Vec<LotteryEntry>,
}

impl LotteryFile {
    pub fn from_lottery(p: &Lottery, space: &DeterministicSpace) -> Self {
        LotteryFile {
            support: p
                .support()
                .iter()
                .map(|&(idx, weight)| LotteryEntry {
                    index: Some(idx),
                    allocation: Some(space.tuple_names(idx)),
                    weight,
                })
                .collect(),
        }
    }

    pub fn to_lottery(&self, space: &DeterministicSpace) -> Result<Lottery> {
        let support = self
            .support
            .iter()
            .map(|e| {
                let idx = match (&e.index, &e.allocation) {
                    (Some(i), None) => *i,
                    (None, Some(names)) => space.index_of_names(names)?,
                    (Some(i), Some(names)) => {
                        let by_name = space.index_of_names(names)?;
                        if by_name != *i {
                            return Err(FairDivError::InvalidLottery(format!(
                                "index {i} does not name allocation ({})",
                                names.join(",")
                            )));
                        }
                        by_name
                    }
                    (None, None) => {
                        return Err(FairDivError::InvalidLottery("entry names no allocation".into()))
                    }
                };
                Ok((idx, e.weight))
            })
            .collect::<Result<Vec<_>>>()?;
        Lottery::new(support, space.len())
    }
}

pub fn read_lottery(text: &str, space: &DeterministicSpace) -> Result<Lottery> {
    parse_json::<LotteryFile>("lottery file", text)?.to_lottery(space)
}

pub fn write_lottery(p: &Lottery, space: &DeterministicSpace) -> String {
    to_json(&LotteryFile::from_lottery(p, space))
}

/// Result of `maximize`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QSolutionFile {
    pub instance_digest: String,
    pub lambda: WeightVector,
    pub delta: f64,
    pub lottery: LotteryFile,
    /// Per agent, item → probability (zero entries omitted).
    pub marginals: Vec<BTreeMap<String, f64>>,
    pub q_value: f64,
    pub welfare: f64,
    pub duality_gap: f64,
    pub iterations: usize,
}

pub fn write_qsolution(sol: &QSolution, space: &DeterministicSpace, lambda: &WeightVector, delta: f64) -> String {
    to_json(&QSolutionFile {
        instance_digest: space.digest(),
        lambda: lambda.clone(),
        delta,
        lottery: LotteryFile::from_lottery(&sol.lottery, space),
        marginals: sol.marginals.iter().map(|m| m.as_map(space.items())).collect(),
        q_value: sol.q_value,
        welfare: sol.welfare,
        duality_gap: sol.duality_gap,
        iterations: sol.iterations,
    })
}

/// A [`FairCertificate`] tied to its instance by digest, with the ε it was issued for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateFile {
    pub instance_digest: String,
    pub eps: f64,
    pub lambda_bar: WeightVector,
    pub lottery: LotteryFile,
    pub max_envy: f64,
    pub wpe_gap: f64,
    pub delta_final: f64,
    pub mesh_final: f64,
    pub subdivision_rounds: usize,
}

impl CertificateFile {
    pub fn new(cert: &FairCertificate, space: &DeterministicSpace, eps: f64) -> Self {
        CertificateFile {
            instance_digest: space.digest(),
            eps,
            lambda_bar: cert.lambda_bar.clone(),
            lottery: LotteryFile::from_lottery(&cert.lottery, space),
            max_envy: cert.max_envy,
            wpe_gap: cert.wpe_gap,
            delta_final: cert.delta_final,
            mesh_final: cert.mesh_final,
            subdivision_rounds: cert.subdivision_rounds,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        parse_json("certificate file", text)
    }

    /// The certificate, after checking it was issued for `space`.
    pub fn to_certificate(&self, space: &DeterministicSpace) -> Result<FairCertificate> {
        let digest = space.digest();
        if digest != self.instance_digest {
            return Err(FairDivError::Certification(vec![format!(
                "certificate is for instance {}, not {digest}",
                self.instance_digest
            )]));
        }
        Ok(FairCertificate {
            lambda_bar: self.lambda_bar.clone(),
            lottery: self.lottery.to_lottery(space)?,
            max_envy: self.max_envy,
            wpe_gap: self.wpe_gap,
            delta_final: self.delta_final,
            mesh_final: self.mesh_final,
            subdivision_rounds: self.subdivision_rounds,
        })
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }
}

/// `{"widths": [...], "masses": [[...] per agent], "atoms": [...], "allocation": [[...] per agent]}`.
///
/// Widths default to equal cells and atoms to none; `allocation` (each agent's share of
/// each cell) is needed only for `decompose`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CakeFile {
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_vec")]
    pub widths: Option<Vec<Rational>>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_matrix")]
    pub masses: Option<Vec<Vec<Rational>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_matrix")]
    pub allocation: Option<Vec<Vec<Rational>>>,
}

impl CakeFile {
    pub fn parse(text: &str) -> Result<Self> {
        parse_json("cake file", text)
    }

    fn n_cells(&self) -> Option<usize> {
        self.widths
            .as_ref()
            .map(Vec::len)
            .or_else(|| self.masses.as_ref().and_then(|m| m.first()).map(Vec::len))
            .or_else(|| self.allocation.as_ref().and_then(|m| m.first()).map(Vec::len))
    }

    pub fn widths(&self) -> Result<Vec<Rational>> {
        match (&self.widths, self.n_cells()) {
            (Some(w), _) => Ok(w.clone()),
            (None, Some(n)) => Ok(SimpleAllocation::equal_widths(n)),
            (None, None) => Err(FairDivError::InvalidInstance("cake file gives no cells".into())),
        }
    }

    pub fn measure(&self) -> Result<CellMeasure> {
        let masses = self
            .masses
            .clone()
            .ok_or_else(|| FairDivError::InvalidInstance("cake file has no masses".into()))?;
        let cells = self.widths()?.len();
        CellMeasure::new(masses, self.atoms.clone().unwrap_or_else(|| vec![false; cells]))
    }

    pub fn simple_allocation(&self) -> Result<SimpleAllocation> {
        let values = self
            .allocation
            .clone()
            .ok_or_else(|| FairDivError::InvalidInstance("cake file has no allocation".into()))?;
        SimpleAllocation::new(values, self.widths()?)
    }
}

mod opt_vec {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<Rational>>, s: S) -> std::result::Result<S::Ok, S::Error> {
        let strs: Option<Vec<String>> = v.as_ref().map(|v| v.iter().map(rational::format).collect());
        strs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Vec<Rational>>, D::Error> {
        #[derive(Deserialize)]
        struct W(#[serde(with = "rational::serde_rational::vec")] Vec<Rational>);
        Ok(Option::<W>::deserialize(d)?.map(|w| w.0))
    }
}

mod opt_matrix {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<Vec<Vec<Rational>>>, s: S) -> std::result::Result<S::Ok, S::Error> {
        let strs: Option<Vec<Vec<String>>> = m
            .as_ref()
            .map(|m| m.iter().map(|r| r.iter().map(rational::format).collect()).collect());
        strs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Vec<Vec<Rational>>>, D::Error> {
        #[derive(Deserialize)]
        struct W(#[serde(with = "rational::serde_rational::matrix")] Vec<Vec<Rational>>);
        Ok(Option::<W>::deserialize(d)?.map(|w| w.0))
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
    s.push('\n');
    s
}
