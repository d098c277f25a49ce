//! Binomial probabilities and the scan of `sqrt(n) P(Z = k)` over the
//! central window used by the failure lower bound.
//!
//! The pmf uses the saddle-point form
//! `P(Z = k) = sqrt(n / (2π k (n−k))) exp(−[stirlerr terms] − bd0(k, np) − bd0(n−k, nq))`,
//! which keeps relative accuracy near machine precision for large `n`;
//! plain log-gamma differences lose several digits to cancellation there.

use serde::Serialize;

use crate::error::{param, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln k! − ((k + 1/2) ln k − k + ln sqrt(2π))`, the Stirling remainder.
fn stirlerr(k: u64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if k <= 15 {
        let kf = k as f64;
        let ln_fact: f64 = (2..=k).map(|i| (i as f64).ln()).sum();
        return ln_fact - ((kf + 0.5) * kf.ln() - kf + LN_SQRT_2PI);
    }
    let kf = k as f64;
    let kk = kf * kf;
    (S0 - (S1 - (S2 - (S3 - S4 / kk) / kk) / kk) / kk) / kf
}

/// `x ln(x/np) + np − x`, evaluated without cancellation when `x ≈ np`.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let next = s + ej / f64::from(2 * j + 1);
            if next == s {
                return next;
            }
            s = next;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

/// `P(Z = k)` for `Z ~ Bin(n, p)`.
pub fn binom_pmf(n: u64, p: f64, k: u64) -> Result<f64> {
    if k > n {
        return param(format!("k = {k} exceeds n = {n}"));
    }
    if !(0.0..=1.0).contains(&p) {
        return param(format!("p = {p} is not a probability"));
    }
    let q = 1.0 - p;
    if p == 0.0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    if q == 0.0 {
        return Ok(if k == n { 1.0 } else { 0.0 });
    }
    let nf = n as f64;
    if k == 0 {
        if n == 0 {
            return Ok(1.0);
        }
        let lc = if p < 0.1 { -bd0(nf, nf * q) - nf * p } else { nf * q.ln() };
        return Ok(lc.exp());
    }
    if k == n {
        let lc = if q < 0.1 { -bd0(nf, nf * p) - nf * q } else { nf * p.ln() };
        return Ok(lc.exp());
    }
    let kf = k as f64;
    let lc = stirlerr(n) - stirlerr(k) - stirlerr(n - k) - bd0(kf, nf * p) - bd0(nf - kf, nf * q);
    let lf = 2.0 * LN_SQRT_2PI + kf.ln() + (-kf / nf).ln_1p();
    Ok((lc - 0.5 * lf).exp())
}

/// `sqrt(n) P(Z = n/2)` at `p = 1/2`, for even `n`.
pub fn central_value(n: u64) -> Result<f64> {
    if !n.is_multiple_of(2) {
        return param(format!("central value needs even n, got {n}"));
    }
    Ok((n as f64).sqrt() * binom_pmf(n, 0.5, n / 2)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FloorMode {
    /// Endpoints of the `p` window plus `k/n` when inside it. Since the pmf
    /// increases on `(0, k/n)` and decreases on `(k/n, 1)`, its minimum over
    /// an interval sits at an endpoint, so this is exact.
    Exact,
    /// A uniform grid of the given number of points (at least 201) plus the
    /// endpoints.
    Grid(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FloorReport {
    pub n: u64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub mode: FloorMode,
    pub k_min: u64,
    pub k_max: u64,
    pub p_min: f64,
    pub p_max: f64,
    pub points_scanned: usize,
    /// `min sqrt(n) P(Z = k)` over the scanned `(k, p)` pairs.
    pub min_value: f64,
    pub argmin_k: u64,
    pub argmin_p: f64,
}

/// `k` window `|k − n/2| ≤ min{a sqrt(n), n/2}`.
pub fn k_window(n: u64, a: f64) -> (u64, u64) {
    let nf = n as f64;
    let half_width = (a * nf.sqrt()).min(nf / 2.0);
    let lo = (nf / 2.0 - half_width).ceil().max(0.0) as u64;
    let hi = ((nf / 2.0 + half_width).floor() as u64).min(n);
    (lo, hi)
}

/// `p` window `|p − 1/2| ≤ min{b / sqrt(n), c}`.
pub fn p_window(n: u64, b: f64, c: f64) -> (f64, f64) {
    let r = (b / (n as f64).sqrt()).min(c);
    (0.5 - r, 0.5 + r)
}

pub fn pmf_floor(n: u64, a: f64, b: f64, c: f64, mode: FloorMode) -> Result<FloorReport> {
    if n == 0 {
        return param("n must be positive");
    }
    if !(a > 0.0 && b > 0.0) {
        return param(format!("a and b must be positive, got a = {a}, b = {b}"));
    }
    if !(c > 0.0 && c < 0.5) {
        return param(format!("c must lie in (0, 1/2), got {c}"));
    }
    let (k_min, k_max) = k_window(n, a);
    let (p_min, p_max) = p_window(n, b, c);
    let grid: Vec<f64> = match mode {
        FloorMode::Exact => vec![p_min, p_max],
        FloorMode::Grid(points) => {
            if points < 201 {
                return param(format!("grid mode needs at least 201 points, got {points}"));
            }
            let mut g: Vec<f64> =
                (0..points).map(|i| p_min + (p_max - p_min) * i as f64 / (points - 1) as f64).collect();
            g.push(p_min);
            g.push(p_max);
            g
        }
    };
    let root = (n as f64).sqrt();
    let mut best = (f64::INFINITY, k_min, p_min);
    let mut scanned = 0;
    for k in k_min..=k_max {
        let mode_p = k as f64 / n as f64;
        let extra = (mode == FloorMode::Exact && (p_min..=p_max).contains(&mode_p)).then_some(mode_p);
        for p in grid.iter().copied().chain(extra) {
            let v = root * binom_pmf(n, p, k)?;
            scanned += 1;
            if v < best.0 {
                best = (v, k, p);
            }
        }
    }
    Ok(FloorReport {
        n,
        a,
        b,
        c,
        mode,
        k_min,
        k_max,
        p_min,
        p_max,
        points_scanned: scanned,
        min_value: best.0,
        argmin_k: best.1,
        argmin_p: best.2,
    })
}
