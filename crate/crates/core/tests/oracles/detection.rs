//! Brute-force AP reference shared by the core tests and the acceptance suite.
//!
//! Ranks are computed by explicit pairwise counting and the interpolated
//! precision at each cutoff by an explicit suffix maximum, so nothing here
//! reuses the evaluator's sort or envelope pass.

#![allow(dead_code)]

use nuce_core::detection::{iou, DetectionSet};

/// (image index, prediction index within image) in ranked order.
fn ranked(sets: &[DetectionSet]) -> Vec<(usize, usize)> {
    let flat: Vec<(usize, usize, f64)> = sets
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            s.predictions
                .iter()
                .enumerate()
                .map(move |(j, p)| (i, j, p.confidence))
        })
        .collect();
    let mut slots: Vec<Option<(usize, usize)>> = vec![None; flat.len()];
    for (pos, &(i, j, c)) in flat.iter().enumerate() {
        let higher = flat.iter().filter(|f| f.2 > c).count();
        let tied_before = flat[..pos].iter().filter(|f| f.2 == c).count();
        slots[higher + tied_before] = Some((i, j));
    }
    slots.into_iter().map(|s| s.unwrap()).collect()
}

pub fn brute_force_ap(sets: &[DetectionSet], thresh: f64) -> f64 {
    let total_gt: usize = sets.iter().map(|s| s.ground_truth.len()).sum();
    assert!(total_gt > 0);
    let order = ranked(sets);
    let mut taken: Vec<Vec<bool>> = sets
        .iter()
        .map(|s| vec![false; s.ground_truth.len()])
        .collect();
    let mut hits = Vec::new();
    for &(i, j) in &order {
        let pb = sets[i].predictions[j].bbox;
        let mut choice: Option<usize> = None;
        for g in 0..sets[i].ground_truth.len() {
            if taken[i][g] {
                continue;
            }
            let v = iou(&pb, &sets[i].ground_truth[g]);
            if v < thresh {
                continue;
            }
            let better = match choice {
                None => true,
                Some(c) => v > iou(&pb, &sets[i].ground_truth[c]),
            };
            if better {
                choice = Some(g);
            }
        }
        if let Some(g) = choice {
            taken[i][g] = true;
        }
        hits.push(choice.is_some());
    }
    let n = hits.len();
    let prec_at = |k: usize| {
        let tp = hits[..k].iter().filter(|&&h| h).count();
        tp as f64 / k as f64
    };
    let rec_at = |k: usize| {
        let tp = hits[..k].iter().filter(|&&h| h).count();
        tp as f64 / total_gt as f64
    };
    let mut ap = 0.0;
    for k in 1..=n {
        let dr = rec_at(k) - if k == 1 { 0.0 } else { rec_at(k - 1) };
        if dr > 0.0 {
            let best = (k..=n).map(prec_at).fold(0.0, f64::max);
            ap += dr * best;
        }
    }
    ap
}
