//! Pump-off linear analysis of the LC chain: ABCD algebra, dispersion,
//! cutoff, RPM resonance and reflection.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex64;

const J: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LadderError {
    #[error("invalid ladder parameters: {0}")]
    InvalidParams(&'static str),
    #[error("cascade frequency mismatch: {0} Hz vs {1} Hz")]
    FrequencyMismatch(f64, f64),
    #[error("ABCD to S conversion is singular")]
    SingularConversion,
    #[error("empty cascade")]
    EmptyCascade,
}

/// Element values of one chain cell. `cc = 0` detaches the RPM branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderParams {
    pub l: f64,
    pub c: f64,
    pub cc: f64,
    pub cosc: f64,
    pub losc: f64,
    pub n_cells: usize,
    pub z0: f64,
}

impl LadderParams {
    pub fn validate(&self) -> Result<(), LadderError> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !pos(self.l) || !pos(self.c) || !pos(self.z0) {
            return Err(LadderError::InvalidParams("L, C and z0 must be positive"));
        }
        if !(self.cc >= 0.0) || !self.cc.is_finite() {
            return Err(LadderError::InvalidParams("Cc must be non-negative"));
        }
        if self.cc > 0.0 && (!pos(self.cosc) || !pos(self.losc)) {
            return Err(LadderError::InvalidParams("Cosc and Losc must be positive"));
        }
        if self.n_cells < 1 {
            return Err(LadderError::InvalidParams("N must be >= 1"));
        }
        Ok(())
    }

    /// Baseline cell from the main inductance and the total shunt capacitance
    /// `C + Cc`, with `Cc = C/10`, `Cosc = C` and `Losc` placed so the RPM
    /// pole sits at `f_res`.
    pub fn from_total_capacitance(l: f64, c_total: f64, f_res: f64, n_cells: usize, z0: f64) -> Self {
        let c = c_total / 1.1;
        let cc = c / 10.0;
        let cosc = c;
        Self {
            l,
            c,
            cc,
            cosc,
            losc: calibrate_losc(f_res, cc, cosc),
            n_cells,
            z0,
        }
    }

    pub fn without_rpm(&self) -> Self {
        Self { cc: 0.0, ..*self }
    }

    pub fn has_rpm(&self) -> bool {
        self.cc > 0.0
    }
}

/// `Losc` that places the shunt-branch pole at `f_res`.
pub fn calibrate_losc(f_res: f64, cc: f64, cosc: f64) -> f64 {
    let w = 2.0 * PI * f_res;
    1.0 / (w * w * (cc + cosc))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellTopology {
    Asymmetric,
    Pi,
    Tee,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPortABCD {
    pub a: C64,
    pub b: C64,
    pub c: C64,
    pub d: C64,
    pub frequency: f64,
}

impl TwoPortABCD {
    pub fn new(a: C64, b: C64, c: C64, d: C64, frequency: f64) -> Self {
        Self { a, b, c, d, frequency }
    }

    pub fn identity(frequency: f64) -> Self {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        Self::new(one, zero, zero, one, frequency)
    }

    pub fn series(z: C64, frequency: f64) -> Self {
        Self {
            b: z,
            ..Self::identity(frequency)
        }
    }

    pub fn shunt(y: C64, frequency: f64) -> Self {
        Self {
            c: y,
            ..Self::identity(frequency)
        }
    }

    pub fn determinant(&self) -> C64 {
        self.a * self.d - self.b * self.c
    }

    pub fn inverse(&self) -> Self {
        let det = self.determinant();
        Self::new(self.d / det, -self.b / det, -self.c / det, self.a / det, self.frequency)
    }

    /// The same network seen from the other side.
    pub fn flipped(&self) -> Self {
        Self::new(self.d, self.b, self.c, self.a, self.frequency)
    }

    pub fn pow(&self, mut n: usize) -> Self {
        let mut acc = Self::identity(self.frequency);
        let mut base = *self;
        while n > 0 {
            if n & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            n >>= 1;
        }
        acc
    }

    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        [(self.a - o.a), (self.b - o.b), (self.c - o.c), (self.d - o.d)]
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

impl Mul for TwoPortABCD {
    type Output = TwoPortABCD;
    fn mul(self, r: TwoPortABCD) -> TwoPortABCD {
        TwoPortABCD::new(
            self.a * r.a + self.b * r.c,
            self.a * r.b + self.b * r.d,
            self.c * r.a + self.d * r.c,
            self.c * r.b + self.d * r.d,
            self.frequency,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SMatrix {
    pub entries: DMatrix<C64>,
    pub frequency: f64,
    pub z0: f64,
}

impl SMatrix {
    pub fn new(entries: DMatrix<C64>, frequency: f64, z0: f64) -> Self {
        Self { entries, frequency, z0 }
    }

    pub fn ports(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.entries[(i, j)]
    }

    /// `max |S^H S − I|` entrywise.
    pub fn unitarity_error(&self) -> f64 {
        let n = self.ports();
        let p = self.entries.adjoint() * &self.entries;
        let mut err: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((p[(i, j)] - target).norm());
            }
        }
        err
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_error() <= tol
    }

    pub fn max_singular_value(&self) -> f64 {
        self.entries
            .clone()
            .singular_values()
            .iter()
            .copied()
            .fold(0.0, f64::max)
    }

    pub fn is_passive(&self, tol: f64) -> bool {
        self.max_singular_value() <= 1.0 + tol
    }
}

fn omega(f: f64) -> f64 {
    2.0 * PI * f
}

/// Shunt admittance of one cell: main capacitor plus the RPM branch
/// (coupling capacitor in series with the parallel Losc‖Cosc tank).
pub fn rpm_shunt_admittance(f: f64, p: &LadderParams) -> C64 {
    let w = omega(f);
    if !p.has_rpm() || f == 0.0 {
        return J * w * p.c;
    }
    // Multiplying numerator and denominator by ω·Losc keeps everything finite
    // away from the pole; an exact hit is nudged by 1 Hz.
    let mut w = w;
    let mut den = w * w * p.losc * (p.cc + p.cosc) - 1.0;
    if den == 0.0 {
        w = omega(f + 1.0);
        den = w * w * p.losc * (p.cc + p.cosc) - 1.0;
    }
    let branch = w * p.cc * (w * w * p.losc * p.cosc - 1.0) / den;
    J * (w * p.c + branch)
}

pub fn unit_cell_abcd(f: f64, p: &LadderParams, topo: CellTopology) -> TwoPortABCD {
    let z = J * omega(f) * p.l;
    let y = rpm_shunt_admittance(f, p);
    cell_abcd(z, y, f, topo)
}

fn cell_abcd(z: C64, y: C64, f: f64, topo: CellTopology) -> TwoPortABCD {
    let one = C64::new(1.0, 0.0);
    match topo {
        CellTopology::Asymmetric => TwoPortABCD::new(one + z * y, z, y, one, f),
        CellTopology::Pi => {
            let t = one + z * y / 2.0;
            TwoPortABCD::new(t, z, y * (one + z * y / 4.0), t, f)
        }
        CellTopology::Tee => {
            let t = one + z * y / 2.0;
            TwoPortABCD::new(t, z * (one + z * y / 4.0), y, t, f)
        }
    }
}

pub fn cascade(cells: &[TwoPortABCD]) -> Result<TwoPortABCD, LadderError> {
    let first = cells.first().ok_or(LadderError::EmptyCascade)?;
    let mut acc = TwoPortABCD::identity(first.frequency);
    for c in cells {
        if c.frequency != first.frequency {
            return Err(LadderError::FrequencyMismatch(first.frequency, c.frequency));
        }
        acc = acc * *c;
    }
    Ok(acc)
}

pub fn abcd_to_s(m: &TwoPortABCD, z0: f64) -> Result<SMatrix, LadderError> {
    let den = m.a + m.b / z0 + m.c * z0 + m.d;
    if den.norm() < 1e-300 || !den.is_finite() {
        return Err(LadderError::SingularConversion);
    }
    let s11 = (m.a + m.b / z0 - m.c * z0 - m.d) / den;
    let s12 = 2.0 * m.determinant() / den;
    let s21 = C64::new(2.0, 0.0) / den;
    let s22 = (-m.a + m.b / z0 - m.c * z0 + m.d) / den;
    let entries = DMatrix::from_row_slice(2, 2, &[s11, s12, s21, s22]);
    Ok(SMatrix::new(entries, m.frequency, z0))
}

/// S-parameters with distinct (possibly complex) reference impedances on
/// the two ports, as `[[s11, s12], [s21, s22]]`.
pub fn abcd_to_s_ref(m: &TwoPortABCD, z1: C64, z2: C64) -> Result<[[C64; 2]; 2], LadderError> {
    let den = m.a * z2 + m.b + m.c * z1 * z2 + m.d * z1;
    if den.norm() < 1e-300 || !den.is_finite() {
        return Err(LadderError::SingularConversion);
    }
    let root = (z1 * z2).sqrt();
    Ok([
        [
            (m.a * z2 + m.b - m.c * z1 * z2 - m.d * z1) / den,
            2.0 * m.determinant() * root / den,
        ],
        [2.0 * root / den, (-m.a * z2 + m.b - m.c * z1 * z2 + m.d * z1) / den],
    ])
}

pub fn s_to_abcd(s: &SMatrix) -> Result<TwoPortABCD, LadderError> {
    let (s11, s12, s21, s22) = (s.get(0, 0), s.get(0, 1), s.get(1, 0), s.get(1, 1));
    if s21.norm() < 1e-300 {
        return Err(LadderError::SingularConversion);
    }
    let z0 = s.z0;
    let one = C64::new(1.0, 0.0);
    let den = 2.0 * s21;
    Ok(TwoPortABCD::new(
        ((one + s11) * (one - s22) + s12 * s21) / den,
        z0 * ((one + s11) * (one + s22) - s12 * s21) / den,
        ((one - s11) * (one - s22) - s12 * s21) / (z0 * den),
        ((one - s11) * (one + s22) + s12 * s21) / den,
        s.frequency,
    ))
}

/// Bloch wavenumber per cell from `cos k = (A + D)/2`.
///
/// Branch: `Re k ∈ [0, π]`, `Im k ≤ 0` so `e^{-jk}` decays along the chain.
pub fn dispersion_k(f: f64, p: &LadderParams) -> C64 {
    let cell = unit_cell_abcd(f, p, CellTopology::Pi);
    bloch_k((cell.a + cell.d) / 2.0)
}

pub(crate) fn bloch_k(t: C64) -> C64 {
    // The lossless trace is real; keep the complex path for pumped cells.
    if t.im.abs() <= 1e-12 * t.re.abs().max(1.0) {
        let x = t.re;
        if x.abs() <= 1.0 {
            C64::new(x.acos(), 0.0)
        } else if x > 1.0 {
            C64::new(0.0, -x.acosh())
        } else {
            C64::new(PI, -(-x).acosh())
        }
    } else {
        let k = t.acos();
        if k.im > 0.0 {
            -k
        } else {
            k
        }
    }
}

/// Bloch impedance `√(B/C)` of the symmetric π cell.
pub fn bloch_impedance(f: f64, p: &LadderParams) -> C64 {
    let cell = unit_cell_abcd(f, p, CellTopology::Pi);
    image_impedance(&cell)
}

/// Image impedance of a symmetric two-port, branch with `Re ≥ 0`.
pub fn image_impedance(cell: &TwoPortABCD) -> C64 {
    let z = (cell.b / cell.c).sqrt();
    if z.re < 0.0 {
        -z
    } else {
        z
    }
}

/// Upper passband edge of the plain LC skeleton, bisected to 1 kHz.
pub fn cutoff_frequency(p: &LadderParams) -> f64 {
    let plain = p.without_rpm();
    let beyond = |f: f64| {
        let cell = unit_cell_abcd(f, &plain, CellTopology::Pi);
        ((cell.a + cell.d) / 2.0).re.abs() > 1.0
    };
    let mut hi = 1e9;
    while !beyond(hi) {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > 1e3 {
        let mid = 0.5 * (lo + hi);
        if beyond(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Closed-form edge `1/(π√(LC))` of the plain chain.
pub fn cutoff_closed_form(p: &LadderParams) -> f64 {
    1.0 / (PI * (p.l * p.c).sqrt())
}

/// Pole of the RPM shunt branch, root-found to 1 kHz.
pub fn rpm_resonance(p: &LadderParams) -> Option<f64> {
    if !p.has_rpm() {
        return None;
    }
    // Series resonance of Cc with the tank: ω²·Losc·(Cc + Cosc) = 1.
    let g = |f: f64| {
        let w = omega(f);
        w * w * p.losc * (p.cc + p.cosc) - 1.0
    };
    let (mut lo, mut hi) = (1.0, 1e9);
    while g(hi) < 0.0 {
        hi *= 2.0;
    }
    while hi - lo > 1e3 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// `s11` of the `N`-cell chain between `z0` loads.
pub fn chain_reflection(f: f64, p: &LadderParams, topo: CellTopology) -> C64 {
    chain_reflection_both(f, p, topo).0
}

/// `(s11, s22)`: reflection seen from each end of the chain.
pub fn chain_reflection_both(f: f64, p: &LadderParams, topo: CellTopology) -> (C64, C64) {
    let chain = unit_cell_abcd(f, p, topo).pow(p.n_cells);
    match abcd_to_s(&chain, p.z0) {
        Ok(s) => (s.get(0, 0), s.get(1, 1)),
        Err(_) => (C64::new(1.0, 0.0), C64::new(1.0, 0.0)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Upconversion {
    /// `f_s + f_p` lies at or above cutoff.
    pub signal_up: bool,
    /// `f_i + f_p` lies at or above cutoff.
    pub idler_up: bool,
}

pub fn upconversion_suppressed(f_s: f64, f_p: f64, f_c: f64) -> Upconversion {
    Upconversion {
        signal_up: f_s + f_p >= f_c,
        idler_up: (f_p - f_s) + f_p >= f_c,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaperCell {
    pub l: f64,
    pub c: f64,
}

/// Cascade of symmetric π cells with per-cell element values.
pub fn matching_network_abcd(f: f64, cells: &[TaperCell]) -> TwoPortABCD {
    let w = omega(f);
    cells.iter().fold(TwoPortABCD::identity(f), |acc, t| {
        acc * cell_abcd(J * w * t.l, J * w * t.c, f, CellTopology::Pi)
    })
}
