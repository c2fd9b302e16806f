use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    /// Shots projected onto the positive direction of the axis.
    pub hits: u64,
    pub shots: u64,
}

impl Counts {
    pub fn fraction(&self) -> f64 {
        self.hits as f64 / self.shots as f64
    }
}

/// Projection counts along ±X, ±Y and Z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ProjectionCounts {
    pub plus_x: Counts,
    pub minus_x: Counts,
    pub plus_y: Counts,
    pub minus_y: Counts,
    /// Hits are shots found up.
    pub z: Counts,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochEstimate {
    pub vector: [f64; 3],
    /// Vector length clipped to `[0, 1]`.
    pub purity: f64,
    /// Length before clipping.
    pub norm: f64,
    pub clipped: bool,
}

/// `⟨X⟩ = P(+X) − P(−X)`, `⟨Y⟩` likewise, `⟨Z⟩ = 2 P(↑) − 1`.
pub fn bloch_vector(c: &ProjectionCounts) -> Result<BlochEstimate> {
    if [c.plus_x, c.minus_x, c.plus_y, c.minus_y, c.z].iter().any(|k| k.shots == 0) {
        return Err(Error::Analysis("every tomography axis needs at least one shot".into()));
    }
    let vector = [
        c.plus_x.fraction() - c.minus_x.fraction(),
        c.plus_y.fraction() - c.minus_y.fraction(),
        2.0 * c.z.fraction() - 1.0,
    ];
    let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(BlochEstimate { vector, purity: norm.min(1.0), norm, clipped: norm > 1.0 })
}

/// Bloch-vector length with the binomial shot-noise bias removed,
/// `sqrt(max(0, |v|² − Σ Var vᵢ))`. Unlike the plain norm it tends to zero
/// for a fully dephased state.
pub fn debiased_length(c: &ProjectionCounts) -> Result<f64> {
    let b = bloch_vector(c)?;
    let var = |k: &Counts| {
        let p = k.fraction();
        p * (1.0 - p) / (k.shots.max(2) - 1) as f64
    };
    let noise = var(&c.plus_x) + var(&c.minus_x) + var(&c.plus_y) + var(&c.minus_y) + 4.0 * var(&c.z);
    Ok((b.norm * b.norm - noise).max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub threshold: f64,
    pub visibility: f64,
}

/// Threshold maximising `P(low ≤ t) + P(high > t) − 1`, scanned over the
/// midpoints of the sorted unique signal values.
pub fn optimal_threshold(low: &[f64], high: &[f64]) -> Result<Threshold> {
    if low.is_empty() || high.is_empty() {
        return Err(Error::Analysis("threshold search needs two non-empty histograms".into()));
    }
    let mut all: Vec<(f64, bool)> = low.iter().map(|&v| (v, false)).chain(high.iter().map(|&v| (v, true))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nl, nh) = (low.len() as f64, high.len() as f64);
    // threshold below everything: all labelled high
    let mut best = Threshold { threshold: all[0].0 - 1.0, visibility: 0.0 };
    let (mut cl, mut ch) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let v = all[i].0;
        while i < all.len() && all[i].0 == v {
            if all[i].1 {
                ch += 1;
            } else {
                cl += 1;
            }
            i += 1;
        }
        let vis = cl as f64 / nl - ch as f64 / nh;
        if vis > best.visibility {
            let next = if i < all.len() { all[i].0 } else { v + 1.0 };
            best = Threshold { threshold: 0.5 * (v + next), visibility: vis };
        }
    }
    Ok(best)
}

/// Removes `2π` jumps between consecutive phases.
pub fn unwrap_phases(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let mut shift = 0.0;
    for (i, &p) in phases.iter().enumerate() {
        if i > 0 {
            let d = p - phases[i - 1];
            if d > PI {
                shift -= TAU;
            } else if d < -PI {
                shift += TAU;
            }
        }
        out.push(p + shift);
    }
    out
}
