#![allow(dead_code)]

use fairdiv::instance::{
    gen_cake_space, gen_differentiated, gen_hz, gen_multiunit, gen_partition_family, gen_slots,
    DeterministicSpace, SlotParams,
};
use fairdiv::cake::{CellMeasure, SimpleAllocation};
use fairdiv::preferences::{Lottery, Preference};
use fairdiv::rational::ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Utilities on a coarse grid keep instances readable when a case fails.
pub fn random_index(rng: &mut ChaCha8Rng, n_items: usize) -> Vec<f64> {
    (0..n_items).map(|_| rng.gen_range(0..=20) as f64 / 20.0).collect()
}

pub fn random_pref(rng: &mut ChaCha8Rng, n_items: usize, maxmin: bool) -> Preference {
    if maxmin {
        let k = rng.gen_range(2..=3);
        Preference::maxmin((0..k).map(|_| random_index(rng, n_items)).collect()).unwrap()
    } else {
        Preference::eu(random_index(rng, n_items))
    }
}

/// Mixed EU / maxmin profile for `space`; roughly a third of agents are maxmin.
pub fn random_prefs(rng: &mut ChaCha8Rng, space: &DeterministicSpace) -> Vec<Preference> {
    (0..space.n_agents())
        .map(|_| {
            let maxmin = rng.gen_bool(0.35);
            random_pref(rng, space.n_items(), maxmin)
        })
        .collect()
}

pub fn slots_small(n_airlines: usize) -> DeterministicSpace {
    gen_slots(&SlotParams {
        n_airlines,
        m_airports: 2,
        horizon: 2,
        fleet_cap: 1,
        min_activity: 0,
        window: 1,
        initial_stock: vec![1, 0],
        slot_supply: vec![vec![1, 1], vec![1, 1]],
    })
    .unwrap()
}

/// One space from each generator family, chosen by `which`.
pub fn corpus_space(rng: &mut ChaCha8Rng, which: usize) -> DeterministicSpace {
    match which % 6 {
        0 => gen_hz(rng.gen_range(2..=4)).unwrap(),
        1 => {
            let objects = rng.gen_range(1..=3);
            let supply: Vec<usize> = (0..objects).map(|_| rng.gen_range(1..=2)).collect();
            gen_multiunit(rng.gen_range(2..=3), &supply, rng.gen_range(1..=2)).unwrap()
        }
        2 => {
            let n_agents = rng.gen_range(2..=3);
            let n_items = rng.gen_range(n_agents..=4);
            let mut parts = Vec::new();
            for _ in 0..rng.gen_range(1..=3) {
                parts.push(random_partition(rng, n_agents, n_items));
            }
            gen_partition_family(n_agents, n_items, &parts).unwrap()
        }
        3 => gen_cake_space(rng.gen_range(2..=3), rng.gen_range(1..=3)).unwrap(),
        4 => slots_small(rng.gen_range(2..=3)),
        _ => {
            let k = rng.gen_range(1..=2);
            let endowment: Vec<usize> = (0..k).map(|_| rng.gen_range(1..=2)).collect();
            gen_differentiated(rng.gen_range(2..=3), &endowment, rng.gen_range(1..=2)).unwrap()
        }
    }
}

fn random_partition(rng: &mut ChaCha8Rng, n_agents: usize, n_items: usize) -> Vec<Vec<usize>> {
    let mut items: Vec<usize> = (1..=n_items).collect();
    items.shuffle(rng);
    let mut blocks = vec![Vec::new(); n_agents];
    for (pos, item) in items.into_iter().enumerate() {
        // first n_agents items seed every block so none is empty
        let b = if pos < n_agents { pos } else { rng.gen_range(0..n_agents) };
        blocks[b].push(item);
    }
    for b in blocks.iter_mut() {
        b.sort();
    }
    blocks
}

/// Random rational point on the simplex with denominator `den`.
pub fn random_simplex_point(rng: &mut ChaCha8Rng, n: usize, den: i64) -> Vec<i64> {
    let mut cuts: Vec<i64> = (0..n - 1).map(|_| rng.gen_range(0..=den)).collect();
    cuts.sort();
    let mut out = Vec::with_capacity(n);
    let mut prev = 0;
    for c in cuts {
        out.push(c - prev);
        prev = c;
    }
    out.push(den - prev);
    out
}

/// Lottery with dyadic weights `k/den` (`den` a power of two), so sums of weights and of
/// their squares are exact in floating point.
pub fn random_lottery(rng: &mut ChaCha8Rng, space: &DeterministicSpace, den: i64) -> Lottery {
    let support = rng.gen_range(1..=space.len().min(5));
    let mut idx: Vec<usize> = (0..space.len()).collect();
    idx.shuffle(rng);
    let parts = random_simplex_point(rng, support, den);
    Lottery::new(
        idx.into_iter().zip(parts).map(|(i, k)| (i, k as f64 / den as f64)).collect(),
        space.len(),
    )
    .unwrap()
}

/// Rational partition of unity: every cell's shares are multiples of `1/den` summing to one.
pub fn random_allocation(rng: &mut ChaCha8Rng, n_agents: usize, n_cells: usize, den: i64) -> SimpleAllocation {
    let mut values = vec![Vec::with_capacity(n_cells); n_agents];
    for _ in 0..n_cells {
        for (row, k) in values.iter_mut().zip(random_simplex_point(rng, n_agents, den)) {
            row.push(ratio(k, den));
        }
    }
    let widths = random_simplex_point(rng, n_cells, 4 * n_cells as i64)
        .iter()
        .map(|&k| ratio(k + 1, 5 * n_cells as i64))
        .collect();
    SimpleAllocation::new(values, widths).unwrap()
}

/// Atomless measure with small integer masses per agent and cell.
pub fn random_measure(rng: &mut ChaCha8Rng, n_agents: usize, n_cells: usize) -> CellMeasure {
    CellMeasure::atomless(
        (0..n_agents)
            .map(|_| (0..n_cells).map(|_| ratio(rng.gen_range(0..=9), 3)).collect())
            .collect(),
    )
    .unwrap()
}
