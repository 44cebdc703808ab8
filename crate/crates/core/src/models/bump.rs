//! Spherical bump `H(A) = |A|^2 h1(A_1/|A|) h2(A_2/|A|)` supported on pairs of
//! columns inside a cone around the third axis.

use std::f64::consts::PI;
use std::sync::Arc;

use super::{Growth, Lagrangian};
use crate::error::{Error, Result};
use crate::numerics::{norm3, Matrix};

const THETA_MIN: f64 = PI / 32.0;
const THETA_MAX: f64 = 7.0 * PI / 32.0;
const PHI_MAX: f64 = 3.0 * PI / 16.0;
const PHI_HALF_WIDTH: f64 = 0.555;

/// Piecewise-linear hat on `[left, right]` with value 1 at `peak`, convolved
/// with the triweight kernel of radius `eps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hat {
    pub left: f64,
    pub peak: f64,
    pub right: f64,
    pub eps: f64,
}

fn mollified_ramp(y: f64, eps: f64) -> f64 {
    if eps == 0.0 {
        return y.max(0.0);
    }
    let v = (y / eps).clamp(-1.0, 1.0);
    let v2 = v * v;
    let p0 = 35.0 / 32.0 * (v - v * v2 + 0.6 * v * v2 * v2 - v * v2 * v2 * v2 / 7.0 + 16.0 / 35.0);
    let p1 = -35.0 / 256.0 * (1.0 - v2).powi(4);
    y * p0 - eps * p1
}

impl Hat {
    pub fn new(left: f64, peak: f64, right: f64, eps: f64) -> Result<Self> {
        if !(left < peak && peak < right) || !(eps >= 0.0) {
            return Err(Error::Construction(format!(
                "hat needs left < peak < right and eps >= 0, got ({left}, {peak}, {right}), eps {eps}"
            )));
        }
        Ok(Hat { left, peak, right, eps })
    }

    pub fn support(&self) -> (f64, f64) {
        (self.left - self.eps, self.right + self.eps)
    }

    pub fn eval(&self, y: f64) -> f64 {
        let (lo, hi) = self.support();
        if y <= lo || y >= hi {
            return 0.0;
        }
        let a = 1.0 / (self.peak - self.left);
        let b = 1.0 / (self.right - self.peak);
        let e = self.eps;
        let v = a * mollified_ramp(y - self.left, e) - (a + b) * mollified_ramp(y - self.peak, e)
            + b * mollified_ramp(y - self.right, e);
        v.clamp(0.0, 1.0)
    }
}

/// Polar and azimuthal angle of a nonzero vector.
pub fn spherical_angles(p: [f64; 3]) -> (f64, f64) {
    let r = norm3(p);
    ((p[2] / r).clamp(-1.0, 1.0).acos(), p[1].atan2(p[0]))
}

#[derive(Clone, Debug)]
pub struct BumpH {
    pub k: f64,
    pub eps: f64,
    theta: Hat,
    phi1: Hat,
    phi2: Hat,
}

/// Builds `H` with exponent `k > 2` and mollification radius `eps`.
pub fn build_bump_h(k: f64, eps: f64) -> Result<BumpH> {
    if !(k > 2.0) {
        return Err(Error::Construction(format!("exponent k must exceed 2, got {k}")));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Construction(format!("mollify radius must be positive, got {eps}")));
    }
    let h = BumpH {
        k,
        eps,
        theta: Hat::new(PI / 16.0, PI / 6.0, 3.0 * PI / 16.0, eps)?,
        phi1: Hat::new(-PHI_HALF_WIDTH, PI / 6.0, PHI_HALF_WIDTH, eps)?,
        phi2: Hat::new(-PHI_HALF_WIDTH, 0.0, PHI_HALF_WIDTH, eps)?,
    };
    let (t0, t1) = h.theta.support();
    if t0 <= THETA_MIN || t1 >= THETA_MAX {
        return Err(Error::Construction(format!(
            "polar support [{t0:.4}, {t1:.4}] leaves ({THETA_MIN:.4}, {THETA_MAX:.4}); reduce the radius"
        )));
    }
    for hat in [&h.phi1, &h.phi2] {
        let (p0, p1) = hat.support();
        if p0 <= -PHI_MAX || p1 >= PHI_MAX {
            return Err(Error::Construction(format!(
                "azimuthal support [{p0:.4}, {p1:.4}] leaves (-{PHI_MAX:.4}, {PHI_MAX:.4}); reduce the radius"
            )));
        }
    }
    let (a, b) = (PI / 6.0, PI / 6.0);
    if !(h.tent1(a, b) > h.tent2(a, b)) || !(h.tent2(a, 0.0) > h.tent1(a, 0.0)) {
        return Err(Error::Construction(format!(
            "mollified tents no longer separate the probe directions at radius {eps}"
        )));
    }
    Ok(h)
}

impl BumpH {
    pub fn tent1(&self, theta: f64, phi: f64) -> f64 {
        self.theta.eval(theta) * self.phi1.eval(phi)
    }

    pub fn tent2(&self, theta: f64, phi: f64) -> f64 {
        self.theta.eval(theta) * self.phi2.eval(phi)
    }

    pub fn eval(&self, a: &Matrix) -> f64 {
        let n2 = a.norm_sq();
        if n2 == 0.0 {
            return 0.0;
        }
        let n = n2.sqrt();
        let (c1, c2) = (a.column3(0), a.column3(1));
        let (r1, r2) = (norm3(c1), norm3(c2));
        if r1 == 0.0 || r2 == 0.0 {
            return 0.0;
        }
        let (th1, ph1) = spherical_angles(c1);
        let (th2, ph2) = spherical_angles(c2);
        let t = self.tent1(th1, ph1) * self.tent2(th2, ph2);
        if t == 0.0 {
            return 0.0;
        }
        n2 * (r1 / n).powf(self.k + 1.0) * (r2 / n).powf(self.k + 1.0) * t
    }
}

/// Matrix with columns `(1/2, 0, sqrt3/2)` and `(sqrt3/4, 1/4, sqrt3/2)`.
pub fn probe_matrix_d() -> Matrix {
    let r3 = 3.0f64.sqrt();
    Matrix::from_columns(&[&[0.5, 0.0, r3 / 2.0], &[r3 / 4.0, 0.25, r3 / 2.0]]).unwrap()
}

/// `g + amplitude * H`.
pub struct BumpedDominance {
    pub base: Arc<dyn Lagrangian>,
    pub h: BumpH,
    pub amplitude: f64,
}

impl BumpedDominance {
    pub fn new(base: Arc<dyn Lagrangian>, h: BumpH, amplitude: f64) -> Result<Self> {
        if base.target_dim() != 3 || base.source_dim() != 2 {
            return Err(Error::Dimension("bumped density needs a 3 x 2 base".into()));
        }
        if !(amplitude >= 0.0) {
            return Err(Error::InvalidParameter(format!("amplitude must be >= 0, got {amplitude}")));
        }
        Ok(BumpedDominance { base, h, amplitude })
    }
}

impl Lagrangian for BumpedDominance {
    fn name(&self) -> String {
        format!("{}+{}H", self.base.name(), self.amplitude)
    }
    fn source_dim(&self) -> usize {
        2
    }
    fn target_dim(&self) -> usize {
        3
    }
    fn eval(&self, x: &[f64], s: &[f64], a: &Matrix) -> f64 {
        self.base.eval(x, s, a) + self.amplitude * self.h.eval(a)
    }
    fn growth(&self) -> Growth {
        let g = self.base.growth();
        Growth { c1: g.c1, c2: g.c2 + self.amplitude, p: g.p }
    }
    fn periodic_x(&self) -> bool {
        self.base.periodic_x()
    }
    fn periodic_s(&self) -> bool {
        self.base.periodic_s()
    }
    fn depends_on_x(&self) -> bool {
        self.base.depends_on_x()
    }
    fn depends_on_s(&self) -> bool {
        self.base.depends_on_s()
    }
}
