#![allow(dead_code)]

use std::collections::BTreeSet;

use maskedit::rfcover::{LayerSpec, RFParams};

pub fn valid_stack(layers: &[LayerSpec], n: usize) -> bool {
    sizes(layers, n).is_some()
}

fn sizes(layers: &[LayerSpec], n: usize) -> Option<Vec<usize>> {
    let mut out = vec![n];
    for l in layers {
        let padded = out.last().unwrap() + 2 * l.padding;
        if padded < l.kernel {
            return None;
        }
        out.push((padded - l.kernel) / l.stride + 1);
    }
    Some(out)
}

/// Input coordinates reached from top pixel `top`, padding treated as more input.
pub fn trace_infinite(layers: &[LayerSpec], top: i64) -> BTreeSet<i64> {
    let mut cur: BTreeSet<i64> = [top].into();
    for l in layers.iter().rev() {
        cur = cur
            .iter()
            .flat_map(|&o| (0..l.kernel as i64).map(move |t| o * l.stride as i64 - l.padding as i64 + t))
            .collect();
    }
    cur
}

/// Real input pixels top pixel `top` depends on; padding contributes nothing.
pub fn trace_finite(layers: &[LayerSpec], n: usize, top: usize) -> BTreeSet<usize> {
    let s = sizes(layers, n).unwrap();
    let mut cur: BTreeSet<i64> = [top as i64].into();
    for (i, l) in layers.iter().enumerate().rev() {
        let below = s[i] as i64;
        cur = cur
            .iter()
            .flat_map(|&o| (0..l.kernel as i64).map(move |t| o * l.stride as i64 - l.padding as i64 + t))
            .filter(|&d| d >= 0 && d < below)
            .collect();
    }
    cur.into_iter().map(|d| d as usize).collect()
}

/// Smallest number of top pixels whose clipped fields cover every input pixel.
pub fn exhaustive_minimum(rf: RFParams, n: usize, f: usize) -> Option<usize> {
    assert!(n <= 32 && f <= 32);
    let masks: Vec<u32> = (0..f)
        .map(|i| {
            let lo = i as i64 * rf.jump + rf.start;
            (lo..lo + rf.size)
                .filter(|&c| c >= 0 && c < n as i64)
                .fold(0u32, |m, c| m | (1 << c))
        })
        .collect();
    let full: u32 = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    if masks.iter().fold(0, |a, m| a | m) != full {
        return None;
    }
    let widest = masks.iter().map(|m| m.count_ones() as usize).max().unwrap_or(0);
    let lower = n.div_ceil(widest);
    (lower..=f).find(|&k| combos_cover(&masks, k, full))
}

fn combos_cover(masks: &[u32], k: usize, full: u32) -> bool {
    let mut suffix = vec![0u32; masks.len() + 1];
    for i in (0..masks.len()).rev() {
        suffix[i] = suffix[i + 1] | masks[i];
    }
    fn go(masks: &[u32], suffix: &[u32], start: usize, left: usize, acc: u32, full: u32) -> bool {
        if acc == full {
            return true;
        }
        if left == 0 || acc | suffix[start] != full {
            return false;
        }
        (start..=masks.len() - left).any(|i| go(masks, suffix, i + 1, left - 1, acc | masks[i], full))
    }
    go(masks, &suffix, 0, k, 0, full)
}
