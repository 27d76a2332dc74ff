//! Frequency-domain S-matrices of the passive peripheral parts.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ladder::{SMatrix, C64};

const Z0: f64 = 50.0;

/// Skew of the second output port: extra phase on everything leaving it and
/// a power split tilted towards it by `amp_err_db`. Built this way the coupler
/// stays lossless; the phase error then appears with opposite signs when
/// driven from the two input ports.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Imbalance {
    /// Radians.
    pub phase_err: f64,
    pub amp_err_db: f64,
}

impl Imbalance {
    pub fn is_ideal(&self) -> bool {
        self.phase_err == 0.0 && self.amp_err_db == 0.0
    }

    /// `(first-port amplitude, second-port amplitude, second-port phasor)`.
    fn split(&self) -> (f64, f64, C64) {
        let r = 10f64.powf(self.amp_err_db / 20.0);
        let norm = (1.0 + r * r).sqrt();
        (1.0 / norm, r / norm, C64::from_polar(1.0, self.phase_err))
    }
}

fn symmetric(n: usize, entries: &[(usize, usize, C64)]) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(n, n);
    for &(i, j, v) in entries {
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    m
}

/// Quadrature coupler. Ports 1, 2 face ports 3, 4; 1→3 and 2→4 are the
/// through paths, 1→4 and 2→3 the coupled ones.
pub fn hybrid90_s(imb: Imbalance) -> SMatrix {
    let (a, b, skew) = imb.split();
    let j = C64::new(0.0, 1.0);
    let m = symmetric(
        4,
        &[(0, 2, C64::new(a, 0.0)), (1, 2, j * b), (0, 3, j * b * skew), (1, 3, a * skew)],
    );
    SMatrix::new(m, 0.0, Z0)
}

/// 180° hybrid with sum port 1 and difference port 2 feeding ports 3, 4.
pub fn hybrid180_s(imb: Imbalance) -> SMatrix {
    let (a, b, skew) = imb.split();
    let m = symmetric(
        4,
        &[(0, 2, C64::new(a, 0.0)), (1, 2, C64::new(b, 0.0)), (0, 3, b * skew), (1, 3, -a * skew)],
    );
    SMatrix::new(m, 0.0, Z0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "order")]
pub enum DiplexerModel {
    Brickwall,
    Butterworth(u32),
}

/// Low-branch power transmission.
fn low_power(f: f64, transition: f64, model: DiplexerModel) -> f64 {
    match model {
        DiplexerModel::Brickwall => {
            if f < transition {
                1.0
            } else {
                0.0
            }
        }
        DiplexerModel::Butterworth(n) => 1.0 / (1.0 + (f / transition).powi(2 * n as i32)),
    }
}

/// Ports: 0 common, 1 low band, 2 high band. The two branches are
/// complementary so the matrix is lossless for every model.
pub fn diplexer_s(f: f64, transition: f64, model: DiplexerModel) -> SMatrix {
    let pl = low_power(f, transition, model);
    let a = pl.sqrt();
    let b = (1.0 - pl).sqrt();
    let r = |x: f64| C64::new(x, 0.0);
    let m = DMatrix::from_row_slice(
        3,
        3,
        &[r(0.0), r(a), r(b), r(a), r(b * b), r(-a * b), r(b), r(-a * b), r(a * a)],
    );
    SMatrix::new(m, f, Z0)
}

/// Two equal waves meant to combine in a quadrature coupler, one of them
/// off by `phase_err`: returns (power in the intended port, power in the
/// other port) for unit total input.
pub fn coupler_combining(phase_err: f64) -> (f64, f64) {
    let s = hybrid90_s(Imbalance::default());
    let a1 = C64::new(FRAC_1_SQRT_2, 0.0);
    let a2 = C64::new(0.0, -FRAC_1_SQRT_2) * C64::from_polar(1.0, phase_err);
    let b3 = s.get(2, 0) * a1 + s.get(2, 1) * a2;
    let b4 = s.get(3, 0) * a1 + s.get(3, 1) * a2;
    (b3.norm_sqr(), b4.norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn apply(s: &SMatrix, a: &[C64]) -> Vec<C64> {
        let v = nalgebra::DVector::from_column_slice(a);
        (&s.entries * v).iter().copied().collect()
    }

    #[test]
    fn quadrature_split() {
        let s = hybrid90_s(Imbalance::default());
        let one = C64::new(1.0, 0.0);
        let z = C64::new(0.0, 0.0);
        let b = apply(&s, &[one, z, z, z]);
        assert!(b[0].norm() < 1e-15 && b[1].norm() < 1e-15);
        assert!((b[2] - FRAC_1_SQRT_2).norm() < 1e-15);
        assert!((b[3] - C64::new(0.0, FRAC_1_SQRT_2)).norm() < 1e-15);
        assert!(s.is_unitary(1e-12));
    }

    #[test]
    fn quadrature_combine() {
        let s = hybrid90_s(Imbalance::default());
        // inputs in the coupler's own quadrature come out of one port
        let b = apply(&s, &[C64::new(1.0, 0.0), C64::new(0.0, -1.0), C64::default(), C64::default()]);
        assert!((b[2].norm_sqr() - 2.0).abs() < 1e-12);
        assert!(b[3].norm() < 1e-15);
    }

    #[test]
    fn thirty_degree_imbalance() {
        let (good, bad) = coupler_combining(30f64.to_radians());
        let loss = -10.0 * good.log10();
        let wrong = 10.0 * bad.log10();
        assert!((loss - 0.3011).abs() < 1e-4, "{loss}");
        assert!((wrong + 11.74).abs() < 0.01, "{wrong}");
        assert!((good - 15f64.to_radians().cos().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn skewed_couplers_stay_lossless() {
        let imb = Imbalance {
            phase_err: 30f64.to_radians(),
            amp_err_db: 0.5,
        };
        for s in [hybrid90_s(imb), hybrid180_s(imb)] {
            assert!(s.is_unitary(1e-12));
        }
        let s = hybrid90_s(imb);
        let rel = |out: usize, inp: usize, other: usize| (s.get(out, inp) / s.get(other, inp)).arg().to_degrees();
        assert!((rel(3, 0, 2) - 120.0).abs() < 1e-9);
        assert!((rel(2, 1, 3) - 60.0).abs() < 1e-9);
        let ratio = 10.0 * (s.get(3, 0).norm_sqr() / s.get(2, 0).norm_sqr()).log10();
        assert!((ratio - 0.5).abs() < 1e-9);
    }

    #[test]
    fn magic_tee() {
        let s = hybrid180_s(Imbalance::default());
        assert!(s.is_unitary(1e-12));
        let one = C64::new(1.0, 0.0);
        let z = C64::default();
        let sum = apply(&s, &[one, z, z, z]);
        assert!((sum[2] - sum[3]).norm() < 1e-15 && (sum[2].norm_sqr() - 0.5).abs() < 1e-15);
        let diff = apply(&s, &[z, one, z, z]);
        assert!((diff[2] + diff[3]).norm() < 1e-15 && (diff[2].norm_sqr() - 0.5).abs() < 1e-15);
        let back = apply(&s, &[z, z, one, one]);
        assert!((back[0].norm_sqr() - 2.0).abs() < 1e-12 && back[1].norm() < 1e-15);
    }

    #[test]
    fn diplexer_routing() {
        let lo = diplexer_s(6e9, 9e9, DiplexerModel::Brickwall);
        assert_eq!(lo.get(1, 0), C64::new(1.0, 0.0));
        assert_eq!(lo.get(2, 0), C64::new(0.0, 0.0));
        let hi = diplexer_s(12e9, 9e9, DiplexerModel::Brickwall);
        assert_eq!(hi.get(2, 0), C64::new(1.0, 0.0));
        let x = diplexer_s(9e9, 9e9, DiplexerModel::Butterworth(5));
        assert!((10.0 * x.get(1, 0).norm_sqr().log10() + 3.0103).abs() < 1e-3);
        assert!((10.0 * x.get(2, 0).norm_sqr().log10() + 3.0103).abs() < 1e-3);
        for f in [1e9, 8.9e9, 9e9, 12e9] {
            for m in [DiplexerModel::Brickwall, DiplexerModel::Butterworth(3)] {
                assert!(diplexer_s(f, 9e9, m).is_unitary(1e-12));
            }
        }
    }

    #[test]
    fn butterworth_rejection_improves_with_order() {
        let leak = |n| diplexer_s(12.15e9, 9e9, DiplexerModel::Butterworth(n)).get(1, 0).norm_sqr();
        let l: Vec<f64> = (1..=7).map(leak).collect();
        assert!(l.iter().all(|&x| x > 0.0));
        assert!(l.windows(2).all(|w| w[1] < w[0]));
    }
}
