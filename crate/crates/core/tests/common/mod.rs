//! Test-only oracles. They read observations through the public cell API and
//! share no code with the library's dynamic program.
#![allow(dead_code)]

use std::collections::BTreeSet;

use tomguard::env::{Action, CellView, Observation};

/// Value of every first action by enumerating all `5^horizon` action
/// sequences. A move that leaves the window or enters an off-grid cell keeps
/// the agent where it is.
pub fn brute_values(obs: &Observation, gamma: f64, horizon: usize) -> [f64; 5] {
    let r = obs.radius() as i64;
    let mut uncovered = BTreeSet::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if obs.cell(dx, dy) == Some(CellView::Uncovered) {
                uncovered.insert((dx, dy));
            }
        }
    }
    let mut out = [0.0; 5];
    for (i, first) in Action::ALL.iter().enumerate() {
        let mut best = f64::NEG_INFINITY;
        let mut seq = vec![*first];
        enumerate(obs, r, gamma, horizon, &uncovered, &mut seq, &mut best);
        out[i] = best;
    }
    out
}

fn enumerate(
    obs: &Observation,
    r: i64,
    gamma: f64,
    horizon: usize,
    uncovered: &BTreeSet<(i64, i64)>,
    seq: &mut Vec<Action>,
    best: &mut f64,
) {
    if seq.len() == horizon {
        *best = best.max(rollout(obs, r, gamma, uncovered, seq));
        return;
    }
    for a in Action::ALL {
        seq.push(a);
        enumerate(obs, r, gamma, horizon, uncovered, seq, best);
        seq.pop();
    }
}

fn rollout(
    obs: &Observation,
    r: i64,
    gamma: f64,
    uncovered: &BTreeSet<(i64, i64)>,
    seq: &[Action],
) -> f64 {
    let mut left = uncovered.clone();
    let (mut x, mut y) = (0i64, 0i64);
    let mut total = 0.0;
    let mut discount = 1.0;
    for a in seq {
        let (dx, dy) = match a {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
            Action::Stay => (0, 0),
        };
        let (nx, ny) = (x + dx, y + dy);
        let inside =
            nx.abs() <= r && ny.abs() <= r && obs.cell(nx, ny) != Some(CellView::OutOfBounds);
        if inside {
            x = nx;
            y = ny;
        }
        if left.remove(&(x, y)) {
            total += discount;
        }
        discount *= gamma;
    }
    total
}

/// First index of the maximum, scanning in action order.
pub fn first_max(values: &[f64; 5]) -> usize {
    let mut best = 0;
    for i in 1..5 {
        if values[i] > values[best] {
            best = i;
        }
    }
    best
}

/// `KL(P || Q)` where P is the softmax of `values / temperature` and Q is P with
/// the greedy and observed entries exchanged, evaluated in the plain
/// probability domain.
pub fn kl_swapped(values: &[f64; 5], observed: usize, temperature: f64) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = values
        .iter()
        .map(|v| ((v - m) / temperature).exp())
        .collect();
    let z: f64 = w.iter().sum();
    let p: Vec<f64> = w.iter().map(|x| x / z).collect();
    let mut q = p.clone();
    q.swap(first_max(values), observed);
    p.iter().zip(&q).map(|(pi, qi)| pi * (pi / qi).ln()).sum()
}
