//! SNAIL nonlinear inductive element.
//!
//! The loop holds `n_array` large junctions in one arm and a single small
//! junction (critical current `alpha * i_crit`) in the other. Energies are
//! expressed in units of the large-junction Josephson energy, phases in
//! radians, external flux as `2π Φ/Φ₀`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reduced flux quantum ħ/2e in webers.
pub const REDUCED_FLUX_QUANTUM: f64 = 2.067_833_848_461_929e-15 / (2.0 * PI);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SnailError {
    #[error("invalid SNAIL parameters: {0}")]
    InvalidParams(&'static str),
    #[error("potential has no stable minimum at phi_ext = {phi_ext}")]
    NoMinimum { phi_ext: f64 },
    #[error("c4 does not change sign over (0, 2π)")]
    NoRoot,
    #[error("non-positive curvature c2 = {0}")]
    NonPositiveCurvature(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnailParams {
    pub n_array: u32,
    pub alpha: f64,
    /// Critical current of one large junction, amperes.
    pub i_crit: f64,
    /// External flux, radians.
    pub phi_ext: f64,
}

impl SnailParams {
    pub fn new(n_array: u32, alpha: f64, i_crit: f64, phi_ext: f64) -> Result<Self, SnailError> {
        let p = Self {
            n_array,
            alpha,
            i_crit,
            phi_ext,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SnailError> {
        if self.n_array < 1 {
            return Err(SnailError::InvalidParams("n_array must be >= 1"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(SnailError::InvalidParams("alpha must lie in (0, 1]"));
        }
        if !(self.i_crit > 0.0) || !self.i_crit.is_finite() {
            return Err(SnailError::InvalidParams("i_crit must be positive"));
        }
        if !self.phi_ext.is_finite() {
            return Err(SnailError::InvalidParams("phi_ext must be finite"));
        }
        Ok(())
    }

    pub fn with_flux(&self, phi_ext: f64) -> Self {
        Self { phi_ext, ..*self }
    }

    fn n(&self) -> f64 {
        f64::from(self.n_array)
    }
}

/// Taylor expansion of the potential about its minimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnailExpansion {
    pub phi_min: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

/// `U(φ) = −α cos φ − n cos((φ_ext − φ)/n)`.
pub fn snail_potential(phase: f64, p: &SnailParams) -> f64 {
    let n = p.n();
    -p.alpha * phase.cos() - n * ((p.phi_ext - phase) / n).cos()
}

/// Derivatives of the potential of order 1 through 4 at `phase`.
fn potential_derivatives(phase: f64, p: &SnailParams) -> [f64; 4] {
    let n = p.n();
    let u = (p.phi_ext - phase) / n;
    let (s, c) = phase.sin_cos();
    let (su, cu) = u.sin_cos();
    [
        p.alpha * s - su,
        p.alpha * c + cu / n,
        -p.alpha * s + su / (n * n),
        -p.alpha * c - cu / (n * n * n),
    ]
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Locates the global potential minimum within one phase period and returns
/// the Taylor coefficients there.
pub fn snail_expansion(p: &SnailParams) -> Result<SnailExpansion, SnailError> {
    p.validate()?;
    let period = 2.0 * PI * p.n();
    // Centre the window on the symmetric point so phi_ext = 0 gives phi_min = 0.
    let centre = p.phi_ext / (p.n() + 1.0);
    let samples = 512usize;
    let step = period / samples as f64;
    let start = centre - 0.5 * period;

    // Coarse scan for local minima; tie-break by lowest energy.
    let energy = |x: f64| snail_potential(x, p);
    let grid: Vec<f64> = (0..samples + 2).map(|i| energy(start + (i as f64 - 1.0) * step)).collect();
    let mut best: Option<(f64, f64)> = None;
    for i in 1..=samples {
        if grid[i] <= grid[i - 1] && grid[i] <= grid[i + 1] {
            let x = start + (i as f64 - 1.0) * step;
            let xm = golden_section(energy, x - step, x + step, 1e-9);
            let em = energy(xm);
            if best.map_or(true, |(_, e)| em < e) {
                best = Some((xm, em));
            }
        }
    }
    let (mut x, _) = best.ok_or(SnailError::NoMinimum { phi_ext: p.phi_ext })?;

    // Newton refinement on U'(φ) = 0.
    for _ in 0..50 {
        let d = potential_derivatives(x, p);
        if d[1] <= 0.0 {
            return Err(SnailError::NoMinimum { phi_ext: p.phi_ext });
        }
        let dx = d[0] / d[1];
        x -= dx;
        if dx.abs() < 1e-15 {
            break;
        }
    }
    let d = potential_derivatives(x, p);
    if d[1] <= 0.0 {
        return Err(SnailError::NoMinimum { phi_ext: p.phi_ext });
    }
    Ok(SnailExpansion {
        phi_min: x,
        c2: d[1] / 2.0,
        c3: d[2] / 6.0,
        c4: d[3] / 24.0,
    })
}

fn c4_at(p: &SnailParams, phi_ext: f64) -> Result<f64, SnailError> {
    Ok(snail_expansion(&p.with_flux(phi_ext))?.c4)
}

/// Kerr-free external flux: first root of `c4(φ_ext)` in (0, 2π).
pub fn kerr_free_flux(p: &SnailParams) -> Result<f64, SnailError> {
    kerr_free_flux_with_scan(p, 10_000)
}

pub fn kerr_free_flux_with_scan(p: &SnailParams, scan_points: usize) -> Result<f64, SnailError> {
    p.validate()?;
    let two_pi = 2.0 * PI;
    let h = two_pi / (scan_points as f64 + 1.0);
    let mut prev_x = h;
    let mut prev = c4_at(p, prev_x)?;
    for i in 2..=scan_points {
        let x = i as f64 * h;
        let cur = c4_at(p, x)?;
        if prev == 0.0 {
            return Ok(prev_x);
        }
        if prev.signum() != cur.signum() {
            let (mut lo, mut hi, mut flo) = (prev_x, x, prev);
            while hi - lo > 1e-13 {
                let mid = 0.5 * (lo + hi);
                let fm = c4_at(p, mid)?;
                if fm == 0.0 {
                    return Ok(mid);
                }
                if fm.signum() == flo.signum() {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            return Ok(0.5 * (lo + hi));
        }
        prev_x = x;
        prev = cur;
    }
    Err(SnailError::NoRoot)
}

/// Small-signal inductance of the SNAIL at its expansion point, henries.
pub fn snail_inductance(exp: &SnailExpansion, p: &SnailParams) -> Result<f64, SnailError> {
    if !(exp.c2 > 0.0) {
        return Err(SnailError::NonPositiveCurvature(exp.c2));
    }
    Ok(REDUCED_FLUX_QUANTUM / p.i_crit / (2.0 * exp.c2))
}
