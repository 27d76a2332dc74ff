//! Tapered π-cell matching networks and their tuning.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ladder::{
    abcd_to_s, bloch_impedance, matching_network_abcd, rpm_shunt_admittance, unit_cell_abcd, CellTopology,
    LadderParams, TaperCell, TwoPortABCD,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("invalid taper: {0}")]
    InvalidTaper(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub f_lo: f64,
    pub f_hi: f64,
}

impl Band {
    pub const SIGNAL: Band = Band { f_lo: 4e9, f_hi: 8e9 };

    pub fn centre(&self) -> f64 {
        0.5 * (self.f_lo + self.f_hi)
    }

    pub fn sample(&self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![self.centre()];
        }
        (0..n)
            .map(|i| self.f_lo + (self.f_hi - self.f_lo) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaperSpec {
    pub cells: Vec<TaperCell>,
    pub band: Band,
    pub n_eval: usize,
}

impl TaperSpec {
    pub fn new(cells: Vec<TaperCell>) -> Self {
        Self {
            cells,
            band: Band::SIGNAL,
            n_eval: 201,
        }
    }

    pub fn validate(&self) -> Result<(), OptimizeError> {
        if self.cells.iter().any(|c| !(c.l > 0.0 && c.c > 0.0)) {
            return Err(OptimizeError::InvalidTaper("element values must be positive"));
        }
        if !(self.band.f_lo < self.band.f_hi) || self.band.f_lo <= 0.0 {
            return Err(OptimizeError::InvalidTaper("need 0 < f_lo < f_hi"));
        }
        if self.n_eval < 1 {
            return Err(OptimizeError::InvalidTaper("n_eval must be >= 1"));
        }
        Ok(())
    }

    fn to_log(&self) -> Vec<f64> {
        self.cells
            .iter()
            .map(|c| c.l.ln())
            .chain(self.cells.iter().map(|c| c.c.ln()))
            .collect()
    }

    fn from_log(&self, x: &[f64]) -> Self {
        let n = self.cells.len();
        Self {
            cells: (0..n).map(|i| TaperCell { l: x[i].exp(), c: x[n + i].exp() }).collect(),
            ..self.clone()
        }
    }
}

/// Input taper, `N` chain cells and the mirrored taper at one frequency.
pub fn matched_chain_abcd(f: f64, taper: &[TaperCell], p: &LadderParams) -> TwoPortABCD {
    let t = matching_network_abcd(f, taper);
    let chain = unit_cell_abcd(f, p, CellTopology::Pi).pow(p.n_cells);
    t * chain * t.flipped()
}

/// Largest `|s11|` of the matched chain over the band samples.
pub fn reflection_objective(t: &TaperSpec, p: &LadderParams) -> f64 {
    t.band
        .sample(t.n_eval)
        .into_iter()
        .map(|f| match abcd_to_s(&matched_chain_abcd(f, &t.cells, p), p.z0) {
            Ok(s) => s.get(0, 0).norm(),
            Err(_) => 1.0,
        })
        .fold(0.0, f64::max)
}

/// Geometric impedance steps from `z0` to the chain's image impedance at
/// band centre, each cell keeping the chain's per-cell phase velocity.
pub fn taper_init(n_cells: usize, p: &LadderParams) -> TaperSpec {
    let band = Band::SIGNAL;
    let f0 = band.centre();
    let w = 2.0 * PI * f0;
    let z_img = bloch_impedance(f0, p).re;
    let c_eff = rpm_shunt_admittance(f0, p).im / w;
    let lc = (p.l * c_eff).sqrt();
    let cells = (1..=n_cells)
        .map(|k| {
            let z = p.z0 * (z_img / p.z0).powf(k as f64 / (n_cells as f64 + 1.0));
            TaperCell { l: z * lc, c: lc / z }
        })
        .collect();
    TaperSpec {
        cells,
        band,
        n_eval: 201,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOutcome {
    pub taper: TaperSpec,
    pub objective: f64,
    pub initial_objective: f64,
    pub iterations: usize,
    /// Iteration budget ran out before the simplex met `tol`.
    pub max_iter_exceeded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Deterministic Nelder–Mead. The initial simplex steps each coordinate by
/// `step`; vertices are ordered with a stable sort so ties resolve by index.
pub fn nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    tol: f64,
    max_iter: usize,
) -> SimplexResult {
    let n = x0.len();
    if n == 0 {
        return SimplexResult {
            x: vec![],
            value: f(x0),
            iterations: 0,
            converged: true,
        };
    }
    let mut pts: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    pts.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = f(&x);
        pts.push((x, v));
    }
    let order = |pts: &mut Vec<(Vec<f64>, f64)>| pts.sort_by(|a, b| a.1.total_cmp(&b.1));
    order(&mut pts);
    let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect() };

    let mut it = 0;
    let mut converged = false;
    while it < max_iter {
        let spread = pts[n].1 - pts[0].1;
        let size = pts[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&pts[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= tol && size <= tol.sqrt() {
            converged = true;
            break;
        }
        it += 1;
        let mut centroid = vec![0.0; n];
        for (x, _) in &pts[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let worst = pts[n].clone();
        let xr = lerp(&centroid, &worst.0, -1.0);
        let fr = f(&xr);
        if fr < pts[0].1 {
            let xe = lerp(&centroid, &worst.0, -2.0);
            let fe = f(&xe);
            pts[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < pts[n - 1].1 {
            pts[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let xc = lerp(&centroid, &xr, 0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = lerp(&centroid, &worst.0, 0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < worst.1.min(fr) {
                pts[n] = (xc, fc);
            } else {
                let best = pts[0].0.clone();
                for p in pts.iter_mut().skip(1) {
                    p.0 = lerp(&best, &p.0, 0.5);
                    p.1 = f(&p.0);
                }
            }
        }
        order(&mut pts);
    }
    let (x, value) = pts.swap_remove(0);
    SimplexResult {
        x,
        value,
        iterations: it,
        converged,
    }
}

pub fn optimize_matching(
    init: &TaperSpec,
    p: &LadderParams,
    tol: f64,
    max_iter: usize,
) -> Result<OptimizeOutcome, OptimizeError> {
    init.validate()?;
    let initial_objective = reflection_objective(init, p);
    let obj = |x: &[f64]| reflection_objective(&init.from_log(x), p);
    let r = nelder_mead(obj, &init.to_log(), 0.1, tol, max_iter);
    // the simplex keeps its best vertex, so this only guards against NaN
    let (taper, objective) = if r.value <= initial_objective {
        (init.from_log(&r.x), r.value)
    } else {
        (init.clone(), initial_objective)
    };
    Ok(OptimizeOutcome {
        taper,
        objective,
        initial_objective,
        iterations: r.iterations,
        max_iter_exceeded: !r.converged,
    })
}
