//! The amplifier as a cross-frequency two-port.
//!
//! Channels at each port are `(A_s, A_i*)`: the signal at `f_s` and the
//! conjugated idler at `f_i = f_p − f_s`. The block is the Redheffer star
//! product of three layers, input taper, pumped chain and output taper, each
//! written in the chain's Bloch reference so the bare chain is reflectionless
//! and all reflection comes from the interfaces. The output interface sees
//! the pumped Bloch impedance, which is where the pump-on mismatch enters.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use super::NetError;
use crate::cme::{forward_transfer, pumpistor_delta_z, reverse_transfer, CmeConfig};
use crate::device::Device;
use crate::ladder::{
    abcd_to_s_ref, bloch_impedance, image_impedance, matching_network_abcd, rpm_shunt_admittance, LadderParams,
    TaperCell, TwoPortABCD, C64,
};
use crate::optimize::matched_chain_abcd;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwpaModel {
    pub cme: CmeConfig,
    pub taper: Vec<TaperCell>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PumpDirection {
    /// Enters at port 1.
    Forward,
    Backward,
}

/// Pump wave incident on the block, as resolved by the pump pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpState {
    pub amplitude: C64,
    pub direction: PumpDirection,
}

impl PumpState {
    pub fn off() -> Self {
        Self {
            amplitude: ZERO,
            direction: PumpDirection::Forward,
        }
    }
}

/// 2×2 channel blocks `[[S11, S12], [S21, S22]]` of one layer.
pub(crate) type Layer = [[Matrix2<C64>; 2]; 2];

impl TwpaModel {
    pub fn new(cme: CmeConfig, taper: Vec<TaperCell>) -> Self {
        Self { cme, taper }
    }

    pub fn from_device(d: &Device) -> Self {
        Self::new(d.cme, d.taper.clone())
    }

    pub fn ladder(&self) -> Result<&LadderParams, NetError> {
        self.cme
            .ladder()
            .ok_or_else(|| NetError::InvalidGraph("amplifier needs the ladder dispersion".into()))
    }

    pub fn f_p(&self) -> f64 {
        self.cme.f_p
    }

    /// Pump-off S-matrix of taper + chain + mirrored taper in `z0`.
    pub fn linear_s(&self, f: f64) -> Result<[[C64; 2]; 2], NetError> {
        let p = self.ladder()?;
        let z0 = C64::new(p.z0, 0.0);
        Ok(abcd_to_s_ref(&matched_chain_abcd(f, &self.taper, p), z0, z0)?)
    }

    fn input_interface(&self, f: f64) -> Result<[[C64; 2]; 2], NetError> {
        let p = self.ladder()?;
        let t = matching_network_abcd(f, &self.taper);
        Ok(abcd_to_s_ref(&t, C64::new(p.z0, 0.0), bloch_impedance(f, p))?)
    }

    fn output_interface(&self, f: f64, z_bloch: C64) -> Result<[[C64; 2]; 2], NetError> {
        let p = self.ladder()?;
        let t = matching_network_abcd(f, &self.taper).flipped();
        Ok(abcd_to_s_ref(&t, z_bloch, C64::new(p.z0, 0.0))?)
    }

    /// Pump amplitude reaching the chain per unit pump incident on the block.
    pub fn pump_entry_transmission(&self) -> Result<C64, NetError> {
        Ok(self.input_interface(self.f_p())?[1][0])
    }

    /// Bloch impedance of a cell whose series arm carries the pumpistor.
    fn pumped_bloch_impedance(&self, f: f64, pump_amp: f64) -> Result<C64, NetError> {
        let p = self.ladder()?;
        if pump_amp == 0.0 {
            return Ok(bloch_impedance(f, p));
        }
        // the idler is the signal of the mirrored tone pair
        let dz = pumpistor_delta_z(f, pump_amp, &self.cme)?;
        let z = C64::new(0.0, 2.0 * PI * f * p.l) + dz;
        let half = TwoPortABCD::shunt(rpm_shunt_admittance(f, p) / 2.0, f);
        Ok(image_impedance(&(half * TwoPortABCD::series(z, f) * half)))
    }
}

/// `diag(x(f_s), conj(x(f_i)))` for each entry of a per-tone two-port.
fn channel_layer(s: [[C64; 2]; 2], i: [[C64; 2]; 2]) -> Layer {
    let d = |r: usize, c: usize| Matrix2::new(s[r][c], ZERO, ZERO, i[r][c].conj());
    [[d(0, 0), d(0, 1)], [d(1, 0), d(1, 1)]]
}

/// Redheffer star product: `a`'s port 2 joined to `b`'s port 1.
pub(crate) fn star(a: &Layer, b: &Layer) -> Result<Layer, NetError> {
    let id = Matrix2::identity();
    let singular = || NetError::SingularNetwork { residual: f64::INFINITY };
    let l = (id - b[0][0] * a[1][1]).try_inverse().ok_or_else(singular)?;
    let r = (id - a[1][1] * b[0][0]).try_inverse().ok_or_else(singular)?;
    Ok([
        [a[0][0] + a[0][1] * l * b[0][0] * a[1][0], a[0][1] * l * b[0][1]],
        [b[1][0] * r * a[1][0], b[1][1] + b[1][0] * r * a[1][1] * b[0][1]],
    ])
}

/// Block for a forward pump of real amplitude `chain_pump` at the chain
/// entry. Other phases and the backward direction follow from [`orient`].
pub(crate) fn core(model: &TwpaModel, f_s: f64, chain_pump: f64) -> Result<Layer, NetError> {
    let f_i = model.f_p() - f_s;
    let pump = C64::new(chain_pump, 0.0);
    let mf = forward_transfer(f_s, pump, &model.cme)?;
    let mb = reverse_transfer(f_s, pump, &model.cme)?;
    let zero = Matrix2::zeros();
    let chain: Layer = [[zero, mb], [mf, zero]];
    let inp = channel_layer(model.input_interface(f_s)?, model.input_interface(f_i)?);
    let out = channel_layer(
        model.output_interface(f_s, model.pumped_bloch_impedance(f_s, chain_pump)?)?,
        model.output_interface(f_i, model.pumped_bloch_impedance(f_i, chain_pump)?)?,
    );
    star(&star(&inp, &chain)?, &out)
}

/// Applies the pump phase `phi` at the chain entry and the pump direction.
///
/// A pump `e^{jφ}` maps onto the zero-phase problem through
/// `A_i* → e^{-jφ} A_i*`, so every channel block becomes `Λ M Λ⁻¹`.
pub(crate) fn orient(core: &Layer, phi: f64, direction: PumpDirection) -> DMatrix<C64> {
    let rot = C64::from_polar(1.0, -phi);
    let lam = [C64::new(1.0, 0.0), rot, C64::new(1.0, 0.0), rot];
    let mut m = DMatrix::zeros(4, 4);
    for (bi, row) in core.iter().enumerate() {
        for (bj, blk) in row.iter().enumerate() {
            let (pi, pj) = match direction {
                PumpDirection::Forward => (bi, bj),
                PumpDirection::Backward => (1 - bi, 1 - bj),
            };
            for r in 0..2 {
                for c in 0..2 {
                    let (gr, gc) = (2 * pi + r, 2 * pj + c);
                    m[(gr, gc)] = lam[gr] * blk[(r, c)] / lam[gc];
                }
            }
        }
    }
    m
}

/// 4×4 block over `(port1 s, port1 i*, port2 s, port2 i*)`.
pub fn twpa_block(model: &TwpaModel, f_s: f64, pump: Option<&PumpState>) -> Result<DMatrix<C64>, NetError> {
    let pump = pump.ok_or_else(|| NetError::PumpNotResolved("amplifier block requested before the pump pass".into()))?;
    let at_chain = pump.amplitude * model.pump_entry_transmission()?;
    let c = core(model, f_s, at_chain.norm())?;
    Ok(orient(&c, at_chain.arg(), pump.direction))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{build_device, DeviceConfig};
    use std::sync::OnceLock;

    fn model() -> &'static TwpaModel {
        static M: OnceLock<TwpaModel> = OnceLock::new();
        M.get_or_init(|| TwpaModel::from_device(&build_device(&DeviceConfig::default()).unwrap()))
    }

    fn forward(a: C64) -> PumpState {
        PumpState {
            amplitude: a,
            direction: PumpDirection::Forward,
        }
    }

    #[test]
    fn needs_resolved_pump() {
        assert!(matches!(twpa_block(model(), 6e9, None), Err(NetError::PumpNotResolved(_))));
    }

    #[test]
    fn unpumped_block_is_the_linear_chain() {
        let m = model();
        let f_s = 5.3e9;
        let b = twpa_block(m, f_s, Some(&PumpState::off())).unwrap();
        let s = m.linear_s(f_s).unwrap();
        let i = m.linear_s(m.f_p() - f_s).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                assert!((b[(2 * r, 2 * c)] - s[r][c]).norm() < 1e-9);
                assert!((b[(2 * r + 1, 2 * c + 1)] - i[r][c].conj()).norm() < 1e-9);
                assert!(b[(2 * r, 2 * c + 1)].norm() < 1e-12 && b[(2 * r + 1, 2 * c)].norm() < 1e-12);
            }
        }
    }

    #[test]
    fn star_with_identity_layer() {
        let id = Matrix2::identity();
        let z = Matrix2::zeros();
        let thru: Layer = [[z, id], [id, z]];
        let a: Layer = [
            [Matrix2::new(C64::new(0.1, 0.2), ZERO, ZERO, C64::new(0.0, -0.3)), id * C64::new(0.9, 0.0)],
            [id * C64::new(0.0, 0.9), Matrix2::from_element(C64::new(0.05, 0.0))],
        ];
        let s = star(&a, &thru).unwrap();
        let t = star(&thru, &a).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                assert!((s[r][c] - a[r][c]).norm() < 1e-15);
                assert!((t[r][c] - a[r][c]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn chain_layers_compose_like_the_cascade() {
        // star of the three unpumped layers must equal the ABCD cascade
        let m = model();
        let f = 7.1e9;
        let c = core(m, f, 0.0).unwrap();
        let s = m.linear_s(f).unwrap();
        assert!((c[0][0][(0, 0)] - s[0][0]).norm() < 1e-9);
        assert!((c[1][0][(0, 0)] - s[1][0]).norm() < 1e-9);
        assert!((c[1][1][(0, 0)] - s[1][1]).norm() < 1e-9);
    }

    #[test]
    fn pump_phase_rotation_matches_direct_runs() {
        let m = model();
        let (f_s, amp, phi) = (5.5e9, 0.08, 0.9);
        let direct = forward_transfer(f_s, C64::from_polar(amp, phi), &m.cme).unwrap();
        let zero = forward_transfer(f_s, C64::new(amp, 0.0), &m.cme).unwrap();
        let lam = Matrix2::new(C64::new(1.0, 0.0), ZERO, ZERO, C64::from_polar(1.0, -phi));
        let rotated = lam * zero * lam.try_inverse().unwrap();
        assert!((direct - rotated).norm() < 1e-9 * direct.norm());
    }

    #[test]
    fn quarter_turn_of_the_pump() {
        let m = model();
        let f_s = 6.2e9;
        let a = twpa_block(m, f_s, Some(&forward(C64::new(0.085, 0.0)))).unwrap();
        let b = twpa_block(m, f_s, Some(&forward(C64::from_polar(0.085, PI / 2.0)))).unwrap();
        // signal through: unchanged
        assert!((a[(2, 0)] - b[(2, 0)]).norm() < 1e-12 * a[(2, 0)].norm());
        // generated idler: A_i* picks up −90°, so A_i picks up +90°
        let di = (b[(3, 0)].conj() / a[(3, 0)].conj()).arg();
        assert!((di - PI / 2.0).abs() < 1e-9, "{di}");
    }

    #[test]
    fn idler_phase_rule() {
        let m = model();
        let f_s = 6.7e9;
        let (phs, php) = (0.3, 1.1);
        let b0 = twpa_block(m, f_s, Some(&forward(C64::new(0.085, 0.0)))).unwrap();
        let b1 = twpa_block(m, f_s, Some(&forward(C64::from_polar(0.085, php)))).unwrap();
        // signal e^{jφs} in the signal channel, idler read back unconjugated
        let idler = |b: &DMatrix<C64>, ph: f64| (b[(3, 0)] * C64::from_polar(1.0, ph)).conj();
        let shift = (idler(&b1, phs) / idler(&b0, 0.0)).arg();
        assert!((shift - (php - phs)).abs() < 1e-9, "{shift}");
    }

    #[test]
    fn backward_pump_swaps_ports() {
        let m = model();
        let f_s = 4.8e9;
        let a = C64::from_polar(0.07, 0.4);
        let fw = twpa_block(m, f_s, Some(&forward(a))).unwrap();
        let bw = twpa_block(
            m,
            f_s,
            Some(&PumpState {
                amplitude: a,
                direction: PumpDirection::Backward,
            }),
        )
        .unwrap();
        let sw = [2, 3, 0, 1];
        for r in 0..4 {
            for c in 0..4 {
                assert!((fw[(r, c)] - bw[(sw[r], sw[c])]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn pumped_block_amplifies_forward_only() {
        let m = model();
        let b = twpa_block(m, 6e9, Some(&forward(C64::new(0.085, 0.0)))).unwrap();
        let g = 10.0 * b[(2, 0)].norm_sqr().log10();
        assert!(g > 15.0 && g < 25.0, "{g}");
        let rev = 10.0 * b[(0, 2)].norm_sqr().log10();
        assert!(rev.abs() < 1.0, "{rev}");
    }
}
