//! Baseline device assembly: SNAIL bias → cell inductance → chain → coupling.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cme::{calibrate_g0, CmeConfig, CmeError};
use crate::ladder::{dispersion_k, LadderError, LadderParams, TaperCell};
use crate::optimize::{optimize_matching, reflection_objective, taper_init, OptimizeError, TaperSpec};
use crate::snail::{kerr_free_flux, snail_expansion, snail_inductance, SnailError, SnailExpansion, SnailParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error(transparent)]
    Snail(#[from] SnailError),
    #[error(transparent)]
    Ladder(#[from] LadderError),
    #[error(transparent)]
    Cme(#[from] CmeError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
}

/// Physical inputs of the amplifier. Defaults are the reference design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceConfig {
    pub n_array: u32,
    pub alpha: f64,
    pub i_crit: f64,
    /// External flux; `None` selects the Kerr-free point.
    pub phi_ext: Option<f64>,
    /// `C + Cc`, with `Cc = C/10` and `Cosc = C`.
    pub c_total: f64,
    pub f_res: f64,
    pub n_cells: usize,
    pub z0: f64,
    /// Cutoff the SNAIL inductance is rescaled to; `None` keeps it as derived.
    pub target_cutoff: Option<f64>,
    /// Explicit cell inductance, bypassing the SNAIL.
    pub l_override: Option<f64>,
    pub f_p: f64,
    /// Pump amplitude (in units of `i_crit`) that yields `cal_gain_db` at `cal_freq`.
    pub cal_pump: f64,
    pub cal_gain_db: f64,
    pub cal_freq: f64,
    pub taper_cells: usize,
    pub taper_max_iter: usize,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            n_array: 2,
            alpha: 0.44,
            i_crit: 1e-6,
            phi_ext: None,
            c_total: 386e-15,
            f_res: 11.8e9,
            n_cells: 100,
            z0: 50.0,
            target_cutoff: Some(16e9),
            l_override: None,
            f_p: 12.15e9,
            cal_pump: 85e-9 / 1e-6,
            cal_gain_db: 20.0,
            cal_freq: 6e9,
            taper_cells: 4,
            taper_max_iter: 3000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub snail: SnailParams,
    pub expansion: SnailExpansion,
    /// Inductance straight from the SNAIL curvature.
    pub l_snail: f64,
    pub ladder: LadderParams,
    pub cme: CmeConfig,
    /// `g0 / |c3|`.
    pub coupling_per_c3: f64,
    pub taper: Vec<TaperCell>,
    pub taper_objective: f64,
    pub cal_pump: f64,
}

/// `L` that puts the plain-chain cutoff `1/(π√(LC))` at `f_c`.
pub fn inductance_for_cutoff(c: f64, f_c: f64) -> f64 {
    1.0 / (PI * PI * f_c * f_c * c)
}

pub fn build_device(cfg: &DeviceConfig) -> Result<Device, DeviceError> {
    let mut snail = SnailParams::new(cfg.n_array, cfg.alpha, cfg.i_crit, cfg.phi_ext.unwrap_or(0.0))?;
    if cfg.phi_ext.is_none() {
        snail.phi_ext = kerr_free_flux(&snail)?;
    }
    let expansion = snail_expansion(&snail)?;
    let l_snail = snail_inductance(&expansion, &snail)?;
    let c = cfg.c_total / 1.1;
    let l = match (cfg.l_override, cfg.target_cutoff) {
        (Some(l), _) => l,
        (None, Some(fc)) => inductance_for_cutoff(c, fc),
        (None, None) => l_snail,
    };
    let ladder = LadderParams::from_total_capacitance(l, cfg.c_total, cfg.f_res, cfg.n_cells, cfg.z0);
    ladder.validate()?;

    let base = CmeConfig::new(ladder, 1.0, cfg.f_p);
    let g0 = calibrate_g0(cfg.cal_gain_db, cfg.cal_freq, cfg.cal_pump, &base)?;
    let cme = CmeConfig { g0, ..base };

    let (taper, taper_objective) = if cfg.taper_cells == 0 {
        (vec![], reflection_objective(&TaperSpec::new(vec![]), &ladder))
    } else {
        let init = taper_init(cfg.taper_cells, &ladder);
        let out = optimize_matching(&init, &ladder, 1e-10, cfg.taper_max_iter)?;
        (out.taper.cells, out.objective)
    };

    Ok(Device {
        snail,
        expansion,
        l_snail,
        ladder,
        cme,
        coupling_per_c3: g0 / expansion.c3.abs(),
        taper,
        taper_objective,
        cal_pump: cfg.cal_pump,
    })
}

/// Change of the per-cell signal phase, in degrees, when the flux bias is
/// off by the fraction `delta_field`.
pub fn flux_mismatch_phase(delta_field: f64, f: f64, p: &LadderParams, snail: &SnailParams) -> Result<f64, SnailError> {
    let nominal = snail_expansion(snail)?;
    let shifted = snail_expansion(&snail.with_flux(snail.phi_ext * (1.0 + delta_field)))?;
    if !(shifted.c2 > 0.0) {
        return Err(SnailError::NonPositiveCurvature(shifted.c2));
    }
    let q = LadderParams {
        l: p.l * nominal.c2 / shifted.c2,
        ..*p
    };
    Ok((dispersion_k(f, &q) - dispersion_k(f, p)).re.to_degrees())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cme::signal_gain_db;
    use crate::ladder::{cutoff_frequency, rpm_resonance};

    #[test]
    fn baseline_calibration() {
        let d = build_device(&DeviceConfig {
            taper_cells: 0,
            ..Default::default()
        })
        .unwrap();
        assert!((d.snail.phi_ext - 2.709_225_801_3).abs() < 1e-8);
        assert!((d.expansion.c2 - 0.169_706).abs() < 1e-5);
        assert!((d.expansion.c3 + 0.053_151).abs() < 1e-5);
        assert!((d.l_snail - 0.9696e-9).abs() < 1e-12);
        assert!((d.ladder.l - 1.127_887_2e-9).abs() < 1e-15);
        assert!((cutoff_frequency(&d.ladder) - 16e9).abs() < 2e3);
        assert!((rpm_resonance(&d.ladder).unwrap() - 11.8e9).abs() < 1e3);
        let g = signal_gain_db(6e9, d.cal_pump, &d.cme).unwrap();
        assert!((g - 20.0).abs() < 1e-3, "{g}");
        assert!(d.coupling_per_c3 > 0.0);
    }

    #[test]
    fn snail_derived_cutoff_near_target() {
        let d = build_device(&DeviceConfig {
            taper_cells: 0,
            target_cutoff: None,
            ..Default::default()
        })
        .unwrap();
        let fc = cutoff_frequency(&d.ladder);
        // independent script: 17.26 GHz before rescaling
        assert!((fc - 17.26e9).abs() < 0.02e9, "{fc}");
        assert!((fc / 16e9 - 1.0).abs() < 0.25);
    }

    #[test]
    fn flux_mismatch_scale() {
        let d = build_device(&DeviceConfig {
            taper_cells: 0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(flux_mismatch_phase(0.0, 6e9, &d.ladder, &d.snail).unwrap(), 0.0);
        let deg = flux_mismatch_phase(0.01, 6e9, &d.ladder, &d.snail).unwrap();
        assert!(deg.abs() >= 1.0 && deg.abs() <= 4.0, "{deg}");
        assert!((deg.abs() * 100.0) > 90.0 && (deg.abs() * 100.0) < 360.0);
    }
}
