//! Three-wave-mixing coupled-mode propagation along the chain.
//!
//! Each tone carries a complex wave amplitude `A(x) = a(x)·e^{-jkx}` whose
//! squared modulus is a photon flux. The slowly varying envelopes `a` obey
//!
//! ```text
//! a_s' = κ a_p a_i* e^{-jΔk x}        a_i' = κ a_p a_s* e^{-jΔk x}
//! a_p' = −κ* a_s a_i e^{+jΔk x}       (only with pump depletion)
//! ```
//!
//! with `κ = −j g0 w(f_s)` and `Δk = k_p − k_s − k_i`. The optional
//! up-converted tones `f_s + f_p`, `f_i + f_p` couple through the analogous
//! sum-frequency terms and are switched off above cutoff.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ladder::{
    cutoff_frequency, dispersion_k, rpm_shunt_admittance, upconversion_suppressed, LadderParams, C64,
};

const J: C64 = C64::new(0.0, 1.0);
const ZERO: C64 = C64::new(0.0, 0.0);

/// Largest steps-per-cell the convergence check will try.
pub const MAX_STEPS_PER_CELL: usize = 64;
/// Relative change allowed between a step and its halving.
pub const STEP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CmeError {
    #[error("invalid tones: {0}")]
    InvalidTones(&'static str),
    #[error("invalid CME configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("step too coarse: relative change {change:e} at {steps} steps per cell")]
    StepTooCoarse { steps: usize, change: f64 },
    #[error("amplitudes overflowed at {steps} steps per cell")]
    NonFinite { steps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToneSet {
    pub f_s: f64,
    pub f_i: f64,
    pub f_p: f64,
    pub f_sh: Option<f64>,
    pub f_ih: Option<f64>,
}

impl ToneSet {
    pub fn new(f_s: f64, f_p: f64) -> Result<Self, CmeError> {
        if !(f_s > 0.0 && f_s < f_p) || !f_p.is_finite() {
            return Err(CmeError::InvalidTones("need 0 < f_s < f_p"));
        }
        Ok(Self {
            f_s,
            f_i: f_p - f_s,
            f_p,
            f_sh: None,
            f_ih: None,
        })
    }

    pub fn with_upconversion(mut self) -> Self {
        self.f_sh = Some(self.f_s + self.f_p);
        self.f_ih = Some(self.f_i + self.f_p);
        self
    }
}

/// Dispersion seen by the coupled-mode solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispersionModel {
    /// Bloch wavenumbers of the loaded chain.
    Ladder(LadderParams),
    /// `k = slope·f` with an extra `pump_offset` on the pump tone; used for
    /// analytic checks where the mismatch must be set by hand.
    Linear {
        slope: f64,
        pump_offset: f64,
        cutoff: f64,
        n_cells: usize,
    },
}

impl DispersionModel {
    pub fn k(&self, f: f64) -> C64 {
        match self {
            DispersionModel::Ladder(p) => dispersion_k(f, p),
            DispersionModel::Linear { slope, .. } => C64::new(slope * f, 0.0),
        }
    }

    fn k_pump(&self, f_p: f64) -> C64 {
        match self {
            DispersionModel::Linear { pump_offset, .. } => self.k(f_p) + pump_offset,
            _ => self.k(f_p),
        }
    }

    pub fn cutoff(&self) -> f64 {
        match self {
            DispersionModel::Ladder(p) => cutoff_frequency(p),
            DispersionModel::Linear { cutoff, .. } => *cutoff,
        }
    }

    pub fn n_cells(&self) -> usize {
        match self {
            DispersionModel::Ladder(p) => p.n_cells,
            DispersionModel::Linear { n_cells, .. } => *n_cells,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmeConfig {
    pub dispersion: DispersionModel,
    /// Per-cell mixing strength per unit pump amplitude.
    pub g0: f64,
    pub f_p: f64,
    pub pump_depletion: bool,
    pub include_upconversion: bool,
    pub steps_per_cell: usize,
}

impl CmeConfig {
    pub fn new(ladder: LadderParams, g0: f64, f_p: f64) -> Self {
        Self {
            dispersion: DispersionModel::Ladder(ladder),
            g0,
            f_p,
            pump_depletion: false,
            include_upconversion: false,
            steps_per_cell: 8,
        }
    }

    pub fn validate(&self) -> Result<(), CmeError> {
        if !(self.g0 >= 0.0) || !self.g0.is_finite() {
            return Err(CmeError::InvalidConfig("g0 must be real and >= 0"));
        }
        if self.steps_per_cell < 1 {
            return Err(CmeError::InvalidConfig("steps_per_cell must be >= 1"));
        }
        if !(self.f_p > 0.0) {
            return Err(CmeError::InvalidConfig("pump frequency must be positive"));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.dispersion.n_cells()
    }

    pub fn ladder(&self) -> Option<&LadderParams> {
        match &self.dispersion {
            DispersionModel::Ladder(p) => Some(p),
            _ => None,
        }
    }
}

/// Wave amplitudes of every tone at one position.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Amplitudes {
    pub s: C64,
    pub i: C64,
    pub p: C64,
    pub sh: C64,
    pub ih: C64,
}

impl Amplitudes {
    fn to_array(self) -> [C64; 5] {
        [self.s, self.i, self.p, self.sh, self.ih]
    }

    fn from_array(v: [C64; 5]) -> Self {
        Self {
            s: v[0],
            i: v[1],
            p: v[2],
            sh: v[3],
            ih: v[4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeState {
    pub tones: ToneSet,
    pub amplitudes: Amplitudes,
    /// Cell coordinate.
    pub position: f64,
}

impl ModeState {
    pub fn new(tones: ToneSet, amplitudes: Amplitudes) -> Self {
        Self {
            tones,
            amplitudes,
            position: 0.0,
        }
    }
}

/// Δk = k_p − k_s − k_i from the real parts of the wavenumbers.
pub fn phase_mismatch(tones: &ToneSet, p: &LadderParams) -> f64 {
    (dispersion_k(tones.f_p, p) - dispersion_k(tones.f_s, p) - dispersion_k(tones.f_i, p)).re
}

/// Relative 3WM strength across the band, unity at `f_p/2`.
pub fn coupling_weight(tones: &ToneSet) -> f64 {
    (tones.f_s * tones.f_i).sqrt() / (tones.f_p / 2.0)
}

#[derive(Debug, Clone, Copy)]
struct Model {
    k: [C64; 5],
    kappa: C64,
    kappa_sh: C64,
    kappa_ih: C64,
    depletion: bool,
}

impl Model {
    fn build(tones: &ToneSet, cfg: &CmeConfig, counter_pump: bool) -> Self {
        let d = &cfg.dispersion;
        let mut k_p = d.k_pump(tones.f_p);
        if counter_pump {
            k_p = -k_p;
        }
        let g = cfg.g0 * coupling_weight(tones);
        let up = upconversion_suppressed(tones.f_s, tones.f_p, d.cutoff());
        let active = |f: Option<f64>, suppressed: bool| cfg.include_upconversion && f.is_some() && !suppressed;
        let k_opt = |f: Option<f64>| f.map_or(ZERO, |f| d.k(f));
        Self {
            k: [d.k(tones.f_s), d.k(tones.f_i), k_p, k_opt(tones.f_sh), k_opt(tones.f_ih)],
            kappa: -J * g,
            kappa_sh: if active(tones.f_sh, up.signal_up) { -J * cfg.g0 } else { ZERO },
            kappa_ih: if active(tones.f_ih, up.idler_up) { -J * cfg.g0 } else { ZERO },
            depletion: cfg.pump_depletion && !counter_pump,
        }
    }

    fn rhs(&self, x: f64, a: &[C64; 5]) -> [C64; 5] {
        let [s, i, p, sh, ih] = *a;
        let k = &self.k;
        let dk = k[2] - k[0] - k[1];
        let e = (-J * dk * x).exp();
        let ec = (J * dk * x).exp();
        let mut out = [ZERO; 5];
        out[0] = self.kappa * p * i.conj() * e;
        out[1] = self.kappa * p * s.conj() * e;
        if self.depletion {
            out[2] = -self.kappa.conj() * s * i * ec;
        }
        if self.kappa_sh != ZERO {
            let du = k[2] + k[0] - k[3];
            let (eu, euc) = ((-J * du * x).exp(), (J * du * x).exp());
            let ku = self.kappa_sh;
            out[3] = ku * p * s * eu;
            out[0] -= ku.conj() * p.conj() * sh * euc;
            if self.depletion {
                out[2] -= ku.conj() * s.conj() * sh * euc;
            }
        }
        if self.kappa_ih != ZERO {
            let du = k[2] + k[1] - k[4];
            let (eu, euc) = ((-J * du * x).exp(), (J * du * x).exp());
            let ku = self.kappa_ih;
            out[4] = ku * p * i * eu;
            out[1] -= ku.conj() * p.conj() * ih * euc;
            if self.depletion {
                out[2] -= ku.conj() * i.conj() * ih * euc;
            }
        }
        out
    }

    fn to_envelope(&self, full: &[C64; 5], x: f64) -> [C64; 5] {
        let mut a = *full;
        for (v, k) in a.iter_mut().zip(self.k.iter()) {
            *v *= (J * k * x).exp();
        }
        a
    }

    fn to_full(&self, env: &[C64; 5], x: f64) -> [C64; 5] {
        let mut a = *env;
        for (v, k) in a.iter_mut().zip(self.k.iter()) {
            *v *= (-J * k * x).exp();
        }
        a
    }

    /// Fixed-step RK4 over `n_cells`, recording full amplitudes at every cell
    /// boundary when `record` is given.
    fn integrate(
        &self,
        start: &[C64; 5],
        x0: f64,
        n_cells: usize,
        steps: usize,
        mut record: Option<&mut Vec<[C64; 5]>>,
    ) -> [C64; 5] {
        let h = 1.0 / steps as f64;
        let mut y = self.to_envelope(start, x0);
        if let Some(r) = record.as_deref_mut() {
            r.push(*start);
        }
        let add = |a: &[C64; 5], b: &[C64; 5], s: f64| {
            let mut o = *a;
            for (v, w) in o.iter_mut().zip(b.iter()) {
                *v += w * s;
            }
            o
        };
        for cell in 0..n_cells {
            for step in 0..steps {
                let x = x0 + cell as f64 + step as f64 * h;
                let k1 = self.rhs(x, &y);
                let k2 = self.rhs(x + h / 2.0, &add(&y, &k1, h / 2.0));
                let k3 = self.rhs(x + h / 2.0, &add(&y, &k2, h / 2.0));
                let k4 = self.rhs(x + h, &add(&y, &k3, h));
                for t in 0..5 {
                    y[t] += (k1[t] + 2.0 * k2[t] + 2.0 * k3[t] + k4[t]) * (h / 6.0);
                }
            }
            if let Some(r) = record.as_deref_mut() {
                r.push(self.to_full(&y, x0 + cell as f64 + 1.0));
            }
        }
        self.to_full(&y, x0 + n_cells as f64)
    }
}

fn relative_change(a: &[C64; 5], b: &[C64; 5]) -> f64 {
    let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm() / y.norm().max(1e-9 * scale))
        .fold(0.0, f64::max)
}

/// Integrates with step halving until two successive resolutions agree.
fn converged(
    model: &Model,
    start: &[C64; 5],
    x0: f64,
    n_cells: usize,
    steps: usize,
) -> Result<([C64; 5], usize), CmeError> {
    let mut s = steps;
    let mut coarse = model.integrate(start, x0, n_cells, s, None);
    loop {
        let fine = model.integrate(start, x0, n_cells, 2 * s, None);
        if fine.iter().any(|z| !z.is_finite()) {
            return Err(CmeError::NonFinite { steps: 2 * s });
        }
        let change = relative_change(&coarse, &fine);
        if change <= STEP_TOLERANCE {
            return Ok((fine, 2 * s));
        }
        if 2 * s > MAX_STEPS_PER_CELL {
            return Err(CmeError::StepTooCoarse { steps: 2 * s, change });
        }
        s *= 2;
        coarse = fine;
    }
}

/// Propagates `input` forward over `n_cells` cells.
pub fn propagate(input: &ModeState, cfg: &CmeConfig, n_cells: usize) -> Result<ModeState, CmeError> {
    cfg.validate()?;
    let model = Model::build(&input.tones, cfg, false);
    let (out, _) = converged(&model, &input.amplitudes.to_array(), input.position, n_cells, cfg.steps_per_cell)?;
    Ok(ModeState {
        tones: input.tones,
        amplitudes: Amplitudes::from_array(out),
        position: input.position + n_cells as f64,
    })
}

/// Full-amplitude trajectory sampled at each cell boundary, at the
/// resolution the convergence check settled on.
pub fn trajectory(input: &ModeState, cfg: &CmeConfig, n_cells: usize) -> Result<Vec<Amplitudes>, CmeError> {
    cfg.validate()?;
    let model = Model::build(&input.tones, cfg, false);
    let start = input.amplitudes.to_array();
    let (_, steps) = converged(&model, &start, input.position, n_cells, cfg.steps_per_cell)?;
    let mut rec = Vec::with_capacity(n_cells + 1);
    model.integrate(&start, input.position, n_cells, steps, Some(&mut rec));
    Ok(rec.into_iter().map(Amplitudes::from_array).collect())
}

fn seed_state(f_s: f64, pump: C64, signal: C64, cfg: &CmeConfig) -> Result<ModeState, CmeError> {
    let mut tones = ToneSet::new(f_s, cfg.f_p)?;
    if cfg.include_upconversion {
        tones = tones.with_upconversion();
    }
    Ok(ModeState::new(
        tones,
        Amplitudes {
            s: signal,
            p: pump,
            ..Default::default()
        },
    ))
}

fn seed_amplitude(pump_amp: f64) -> f64 {
    // |a_s|² stays at 1e-8 of the pump flux
    if pump_amp > 0.0 {
        1e-4 * pump_amp
    } else {
        1e-6
    }
}

pub fn signal_gain_db(f_s: f64, pump_amp: f64, cfg: &CmeConfig) -> Result<f64, CmeError> {
    if pump_amp == 0.0 || cfg.g0 == 0.0 {
        // nothing couples, so the signal passes untouched
        ToneSet::new(f_s, cfg.f_p)?;
        cfg.validate()?;
        return Ok(0.0);
    }
    let seed = seed_amplitude(pump_amp);
    let st = seed_state(f_s, C64::new(pump_amp, 0.0), C64::new(seed, 0.0), cfg)?;
    let out = propagate(&st, cfg, cfg.n_cells())?;
    Ok(10.0 * (out.amplitudes.s.norm_sqr() / (seed * seed)).log10())
}

/// Generated idler phase at the output for a signal of phase `phase_s`
/// injected with a pump of phase `phase_p`.
pub fn idler_output_phase(
    phase_s: f64,
    phase_p: f64,
    f_s: f64,
    pump_amp: f64,
    cfg: &CmeConfig,
) -> Result<f64, CmeError> {
    let seed = seed_amplitude(pump_amp);
    let st = seed_state(
        f_s,
        C64::from_polar(pump_amp, phase_p),
        C64::from_polar(seed, phase_s),
        cfg,
    )?;
    let out = propagate(&st, cfg, cfg.n_cells())?;
    Ok(out.amplitudes.i.arg())
}

/// Undepleted-pump transfer matrix over `(A_s, A_i*)` from the input end to
/// the output end for a co-propagating pump of complex amplitude `pump`
/// (referenced to the input end).
pub fn forward_transfer(f_s: f64, pump: C64, cfg: &CmeConfig) -> Result<Matrix2<C64>, CmeError> {
    transfer(f_s, pump, cfg, false)
}

/// Transfer matrix for waves travelling against the pump. The pump amplitude
/// is referenced to the end where it enters, which is where the waves leave.
pub fn reverse_transfer(f_s: f64, pump: C64, cfg: &CmeConfig) -> Result<Matrix2<C64>, CmeError> {
    transfer(f_s, pump, cfg, true)
}

fn transfer(f_s: f64, pump: C64, cfg: &CmeConfig, counter: bool) -> Result<Matrix2<C64>, CmeError> {
    let mut cfg = *cfg;
    cfg.pump_depletion = false;
    cfg.validate()?;
    let n = cfg.n_cells();
    let tones = ToneSet::new(f_s, cfg.f_p)?;
    let tones = if cfg.include_upconversion { tones.with_upconversion() } else { tones };
    let model = Model::build(&tones, &cfg, counter);
    // In the counter-propagating frame the pump enters at y = 0 with the
    // phase it has at the far end.
    let p0 = if counter { pump * (J * model.k[2] * n as f64).exp() } else { pump };
    let mut m = Matrix2::zeros();
    for col in 0..2 {
        let mut start = [ZERO; 5];
        start[2] = p0;
        if col == 0 {
            start[0] = C64::new(1.0, 0.0);
        } else {
            start[1] = C64::new(1.0, 0.0);
        }
        let (out, _) = converged(&model, &start, 0.0, n, cfg.steps_per_cell)?;
        // a unit A_i is also a unit A_i*
        m[(0, col)] = out[0];
        m[(1, col)] = out[1].conj();
    }
    Ok(m)
}

/// Idler power leaving the input end, relative to a signal launched into the
/// output end against the pump.
pub fn reverse_gain_db(f_s: f64, pump_amp: f64, cfg: &CmeConfig) -> Result<f64, CmeError> {
    let m = reverse_transfer(f_s, C64::new(pump_amp, 0.0), cfg)?;
    Ok(10.0 * m[(1, 0)].norm_sqr().log10())
}

/// Series-impedance perturbation per cell that a linear chain would need to
/// reproduce the local complex signal wavenumber of the pumped solution.
pub fn pumpistor_delta_z(f_s: f64, pump_amp: f64, cfg: &CmeConfig) -> Result<C64, CmeError> {
    let p = *cfg
        .ladder()
        .ok_or(CmeError::InvalidConfig("pumpistor needs the ladder dispersion"))?;
    let n = cfg.n_cells();
    let st = seed_state(f_s, C64::new(pump_amp, 0.0), C64::new(seed_amplitude(pump_amp), 0.0), cfg)?;
    let traj = trajectory(&st, cfg, n)?;
    let ratio = traj[n].s / traj[n - 1].s;
    let k_eff = J * ratio.ln();
    let y = rpm_shunt_admittance(f_s, &p);
    let z_eff = 2.0 * (k_eff.cos() - 1.0) / y;
    Ok(z_eff - J * 2.0 * PI * f_s * p.l)
}

/// Pump amplitude whose gain at `f_s` equals `target_db` within ±`tol_db`,
/// by bisection on the monotone gain curve.
pub fn pump_for_gain(target_db: f64, f_s: f64, cfg: &CmeConfig, tol_db: f64) -> Result<f64, CmeError> {
    let mut hi = 0.01;
    while signal_gain_db(f_s, hi, cfg)? < target_db {
        hi *= 2.0;
        if hi > 100.0 {
            return Err(CmeError::InvalidConfig("gain target unreachable"));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let g = signal_gain_db(f_s, mid, cfg)?;
        if (g - target_db).abs() <= tol_db * 1e-3 {
            return Ok(mid);
        }
        if g < target_db {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `g0` giving `target_db` at `f_s` for pump amplitude `pump_amp`.
pub fn calibrate_g0(target_db: f64, f_s: f64, pump_amp: f64, cfg: &CmeConfig) -> Result<f64, CmeError> {
    let unit = CmeConfig { g0: 1.0, ..*cfg };
    // gain depends on g0·pump only while the pump is undepleted
    Ok(pump_for_gain(target_db, f_s, &unit, 0.1)? / pump_amp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(dk: f64, n: usize) -> CmeConfig {
        CmeConfig {
            dispersion: DispersionModel::Linear {
                slope: 1e-10,
                pump_offset: dk,
                cutoff: 1e12,
                n_cells: n,
            },
            g0: 1.0,
            f_p: 12e9,
            pump_depletion: false,
            include_upconversion: false,
            steps_per_cell: 8,
        }
    }

    fn state(f_s: f64, pump: C64, s: C64, cfg: &CmeConfig) -> ModeState {
        seed_state(f_s, pump, s, cfg).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn tone_set_rules() {
        let t = ToneSet::new(5e9, 12e9).unwrap().with_upconversion();
        assert_eq!(t.f_s + t.f_i, t.f_p);
        assert_eq!(t.f_sh, Some(17e9));
        assert_eq!(t.f_ih, Some(19e9));
        assert!(ToneSet::new(13e9, 12e9).is_err());
    }

    #[test]
    fn zero_coupling_only_advances_phase() {
        let cfg = CmeConfig { g0: 0.0, ..linear(0.0, 37) };
        let a0 = C64::from_polar(0.3, 0.4);
        let st = state(5e9, C64::new(0.1, 0.0), a0, &cfg);
        let out = propagate(&st, &cfg, 37).unwrap();
        let k = 1e-10 * 5e9;
        let expect = a0 * (-J * k * 37.0).exp();
        assert!((out.amplitudes.s - expect).norm() < 1e-14);
        assert_eq!(out.amplitudes.i, ZERO);
        assert_eq!(out.position, 37.0);
    }

    #[test]
    fn phase_matched_cosh_sinh() {
        let n = 100;
        let cfg = linear(0.0, n);
        for &gx in &[0.0, 0.5, 2.0, 4.0, 6.0] {
            let pump = gx / n as f64;
            let st = state(6e9, C64::new(pump, 0.0), C64::new(1.0, 0.0), &cfg);
            let out = propagate(&st, &cfg, n).unwrap();
            let (s, i) = (out.amplitudes.s.norm(), out.amplitudes.i.norm());
            assert!(rel(s, gx.cosh()) < 1e-6, "gx={gx}");
            if gx > 0.0 {
                assert!(rel(i, gx.sinh()) < 1e-6, "gx={gx}");
            }
        }
    }

    #[test]
    fn mismatched_gain_formula() {
        let n = 100;
        for &dk in &[0.02, 0.05, 0.1, 0.15] {
            let cfg = linear(dk, n);
            let g = 0.04;
            let out = propagate(&state(6e9, C64::new(g, 0.0), C64::new(1.0, 0.0), &cfg), &cfg, n).unwrap();
            let gp2 = g * g - dk * dk / 4.0;
            let x = n as f64;
            let oracle = if gp2 > 0.0 {
                let gp = gp2.sqrt();
                1.0 + (g / gp).powi(2) * (gp * x).sinh().powi(2)
            } else {
                let gp = (-gp2).sqrt();
                1.0 + (g / gp).powi(2) * (gp * x).sin().powi(2)
            };
            assert!(rel(out.amplitudes.s.norm_sqr(), oracle) < 1e-6, "dk={dk}");
        }
    }

    #[test]
    fn manley_rowe_with_depletion() {
        let n = 100;
        let cfg = CmeConfig {
            pump_depletion: true,
            ..linear(0.03, n)
        };
        let st = state(6e9, C64::new(0.05, 0.0), C64::new(0.01, 0.0), &cfg);
        let traj = trajectory(&st, &cfg, n).unwrap();
        let d0 = traj[0].s.norm_sqr() - traj[0].i.norm_sqr();
        let e0 = traj[0].p.norm_sqr() + traj[0].s.norm_sqr();
        for a in &traj {
            assert!((a.s.norm_sqr() - a.i.norm_sqr() - d0).abs() < 1e-9);
            assert!((a.p.norm_sqr() + a.s.norm_sqr() - e0).abs() < 1e-9);
        }
        // pump actually depletes
        assert!(traj[n].p.norm_sqr() < 0.99 * traj[0].p.norm_sqr());
    }

    #[test]
    fn step_doubling_is_converged_at_default() {
        let cfg = linear(0.02, 100);
        let st = state(6e9, C64::new(0.05, 0.0), C64::new(1.0, 0.0), &cfg);
        let m = Model::build(&st.tones, &cfg, false);
        let a = m.integrate(&st.amplitudes.to_array(), 0.0, 100, 8, None);
        let b = m.integrate(&st.amplitudes.to_array(), 0.0, 100, 16, None);
        assert!(relative_change(&a, &b) < 1e-8);
    }

    #[test]
    fn overflow_reported() {
        let cfg = CmeConfig { g0: 40.0, ..linear(0.0, 100) };
        let st = state(6e9, C64::new(1.0, 0.0), C64::new(1.0, 0.0), &cfg);
        assert!(matches!(propagate(&st, &cfg, 100), Err(CmeError::NonFinite { .. })));
    }

    #[test]
    fn coarse_steps_reported() {
        let cfg = CmeConfig {
            steps_per_cell: 1,
            ..linear(0.0, 10)
        };
        // g·h ≈ 5 per step is far outside RK4's accuracy
        let st = state(6e9, C64::new(5.0, 0.0), C64::new(1.0, 0.0), &cfg);
        assert!(matches!(propagate(&st, &cfg, 10), Err(CmeError::StepTooCoarse { .. })));
    }

    #[test]
    fn idler_phase_rule() {
        let cfg = linear(0.0, 50);
        let f = 6e9;
        let phase = |s: f64, p: f64| idler_output_phase(s, p, f, 0.04, &cfg).unwrap();
        let wrap = |x: f64| (x + PI).rem_euclid(2.0 * PI) - PI;
        let base = phase(0.0, 0.0);
        let k = 1e-10 * 6e9 * 50.0;
        assert!(wrap(base - (-PI / 2.0 - k)).abs() < 1e-9);
        assert!(wrap(phase(PI / 2.0, 0.0) - base + PI / 2.0).abs() < 1e-9);
        assert!(wrap(phase(PI / 2.0, PI / 2.0) - base).abs() < 1e-9);
        assert!(wrap(phase(0.0, PI) - base - PI).abs() < 1e-9);
    }

    #[test]
    fn gain_symmetric_for_symmetric_dispersion() {
        let cfg = linear(0.01, 100);
        for &f in &[3e9, 4.5e9, 5.5e9] {
            let a = signal_gain_db(f, 0.03, &cfg).unwrap();
            let b = signal_gain_db(12e9 - f, 0.03, &cfg).unwrap();
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_pump_gives_unity() {
        let cfg = linear(0.05, 100);
        assert!(signal_gain_db(6e9, 0.0, &cfg).unwrap().abs() < 1e-12);
        assert_eq!(reverse_gain_db(6e9, 0.0, &cfg).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn transfer_matrix_linear_in_inputs() {
        let cfg = linear(0.02, 100);
        let m = forward_transfer(5e9, C64::new(0.03, 0.01), &cfg).unwrap();
        let (as0, ai0) = (C64::new(0.3, -0.2), C64::new(-0.1, 0.4));
        let st = ModeState::new(
            ToneSet::new(5e9, 12e9).unwrap(),
            Amplitudes {
                s: as0,
                i: ai0,
                p: C64::new(0.03, 0.01),
                ..Default::default()
            },
        );
        let out = propagate(&st, &cfg, 100).unwrap();
        let v = m * nalgebra::Vector2::new(as0, ai0.conj());
        assert!((v[0] - out.amplitudes.s).norm() < 1e-6 * out.amplitudes.s.norm());
        assert!((v[1] - out.amplitudes.i.conj()).norm() < 1e-6 * out.amplitudes.i.norm());
    }

    #[test]
    fn upconversion_only_below_cutoff() {
        let mut cfg = linear(0.0, 100);
        cfg.include_upconversion = true;
        let st = state(6e9, C64::new(0.03, 0.0), C64::new(1.0, 0.0), &cfg);
        // cutoff 1 THz: sum tones propagate and take power
        let out = propagate(&st, &cfg, 100).unwrap();
        assert!(out.amplitudes.sh.norm() > 1e-3);
        // cutoff 16 GHz: 18 GHz tones are suppressed
        if let DispersionModel::Linear { ref mut cutoff, .. } = cfg.dispersion {
            *cutoff = 16e9;
        }
        let out = propagate(&st, &cfg, 100).unwrap();
        assert_eq!(out.amplitudes.sh, ZERO);
        assert_eq!(out.amplitudes.ih, ZERO);
    }
}
