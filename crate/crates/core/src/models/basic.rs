use std::f64::consts::PI;
use std::sync::Arc;

use super::{Growth, Lagrangian};
use crate::numerics::Matrix;

/// `scale * |A|^2`.
#[derive(Clone, Debug)]
pub struct Dirichlet {
    n: usize,
    m: usize,
    scale: f64,
}

impl Dirichlet {
    pub fn new(n: usize, m: usize) -> Self {
        Self::scaled(n, m, 1.0)
    }

    pub fn scaled(n: usize, m: usize, scale: f64) -> Self {
        assert!(scale > 0.0);
        Dirichlet { n, m, scale }
    }
}

impl Lagrangian for Dirichlet {
    fn name(&self) -> String {
        "dirichlet".into()
    }
    fn source_dim(&self) -> usize {
        self.m
    }
    fn target_dim(&self) -> usize {
        self.n
    }
    fn eval(&self, _x: &[f64], _s: &[f64], a: &Matrix) -> f64 {
        self.scale * a.norm_sq()
    }
    fn growth(&self) -> Growth {
        Growth { c1: self.scale, c2: self.scale, p: 2.0 }
    }
    fn depends_on_x(&self) -> bool {
        false
    }
    fn depends_on_s(&self) -> bool {
        false
    }
    fn gradient(&self, _x: &[f64], _s: &[f64], a: &Matrix, ds: &mut [f64], da: &mut Matrix) -> bool {
        ds.fill(0.0);
        for (d, v) in da.data_mut().iter_mut().zip(a.data()) {
            *d = 2.0 * self.scale * v;
        }
        true
    }
    fn has_gradient(&self) -> bool {
        true
    }
}

fn layer_coefficient(x: f64, low: f64, high: f64) -> f64 {
    if x - x.floor() < 0.5 {
        low
    } else {
        high
    }
}

/// `a(x_1) |A|^2` with `a = low` on `[0, 1/2)` and `high` on `[1/2, 1)`,
/// repeated with period 1.
#[derive(Clone, Debug)]
pub struct Layered1d {
    pub low: f64,
    pub high: f64,
    n: usize,
    m: usize,
}

impl Layered1d {
    pub fn new() -> Self {
        Layered1d { low: 1.0, high: 2.0, n: 1, m: 1 }
    }

    /// Same layering in `x_1`, embedded in `n` components and `m` directions.
    pub fn with_shape(n: usize, m: usize) -> Self {
        Layered1d { n, m, ..Self::new() }
    }

    pub fn coefficient(&self, x: &[f64]) -> f64 {
        layer_coefficient(x[0], self.low, self.high)
    }
}

impl Default for Layered1d {
    fn default() -> Self {
        Self::new()
    }
}

impl Lagrangian for Layered1d {
    fn name(&self) -> String {
        "layered-1d".into()
    }
    fn source_dim(&self) -> usize {
        self.m
    }
    fn target_dim(&self) -> usize {
        self.n
    }
    fn eval(&self, x: &[f64], _s: &[f64], a: &Matrix) -> f64 {
        self.coefficient(x) * a.norm_sq()
    }
    fn growth(&self) -> Growth {
        Growth { c1: self.low.min(self.high), c2: self.low.max(self.high), p: 2.0 }
    }
    fn depends_on_x(&self) -> bool {
        true
    }
    fn depends_on_s(&self) -> bool {
        false
    }
    fn gradient(&self, x: &[f64], _s: &[f64], a: &Matrix, ds: &mut [f64], da: &mut Matrix) -> bool {
        ds.fill(0.0);
        let c = 2.0 * self.coefficient(x);
        for (d, v) in da.data_mut().iter_mut().zip(a.data()) {
            *d = c * v;
        }
        true
    }
    fn has_gradient(&self) -> bool {
        true
    }
    fn smooth_away_from(&self) -> &str {
        "jumps in x at the layer interfaces (smooth in s and A)"
    }
}

/// `a(x) |A|^2` on a 2D checkerboard of half-unit squares, `a = low` where
/// `floor(2 x_1) + floor(2 x_2)` is even and `high` otherwise.
#[derive(Clone, Debug)]
pub struct Checkerboard {
    pub low: f64,
    pub high: f64,
}

impl Checkerboard {
    pub fn new() -> Self {
        Checkerboard { low: 1.0, high: 2.0 }
    }

    pub fn coefficient(&self, x: &[f64]) -> f64 {
        let k = (2.0 * x[0]).floor() as i64 + (2.0 * x[1]).floor() as i64;
        if k.rem_euclid(2) == 0 {
            self.low
        } else {
            self.high
        }
    }
}

impl Default for Checkerboard {
    fn default() -> Self {
        Self::new()
    }
}

impl Lagrangian for Checkerboard {
    fn name(&self) -> String {
        "checkerboard".into()
    }
    fn source_dim(&self) -> usize {
        2
    }
    fn target_dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64], _s: &[f64], a: &Matrix) -> f64 {
        self.coefficient(x) * a.norm_sq()
    }
    fn growth(&self) -> Growth {
        Growth { c1: self.low.min(self.high), c2: self.low.max(self.high), p: 2.0 }
    }
    fn depends_on_x(&self) -> bool {
        true
    }
    fn depends_on_s(&self) -> bool {
        false
    }
    fn gradient(&self, x: &[f64], _s: &[f64], a: &Matrix, ds: &mut [f64], da: &mut Matrix) -> bool {
        ds.fill(0.0);
        let c = 2.0 * self.coefficient(x);
        for (d, v) in da.data_mut().iter_mut().zip(a.data()) {
            *d = c * v;
        }
        true
    }
    fn has_gradient(&self) -> bool {
        true
    }
    fn smooth_away_from(&self) -> &str {
        "jumps in x along the checkerboard edges (smooth in s and A)"
    }
}

/// Isotropic Riemannian density `b(s) |A|^2` with `b(s) = 1.5 + cos(2 pi s_1)`.
#[derive(Clone, Debug)]
pub struct OscillatingIso {
    n: usize,
}

impl OscillatingIso {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        OscillatingIso { n }
    }

    pub fn coefficient(s: &[f64]) -> f64 {
        1.5 + (2.0 * PI * s[0]).cos()
    }
}

impl Lagrangian for OscillatingIso {
    fn name(&self) -> String {
        "riemannian-iso".into()
    }
    fn source_dim(&self) -> usize {
        2
    }
    fn target_dim(&self) -> usize {
        self.n
    }
    fn eval(&self, _x: &[f64], s: &[f64], a: &Matrix) -> f64 {
        Self::coefficient(s) * a.norm_sq()
    }
    fn growth(&self) -> Growth {
        Growth { c1: 0.5, c2: 2.5, p: 2.0 }
    }
    fn depends_on_x(&self) -> bool {
        false
    }
    fn depends_on_s(&self) -> bool {
        true
    }
    fn gradient(&self, _x: &[f64], s: &[f64], a: &Matrix, ds: &mut [f64], da: &mut Matrix) -> bool {
        ds.fill(0.0);
        ds[0] = -2.0 * PI * (2.0 * PI * s[0]).sin() * a.norm_sq();
        let b = 2.0 * Self::coefficient(s);
        for (d, v) in da.data_mut().iter_mut().zip(a.data()) {
            *d = b * v;
        }
        true
    }
    fn has_gradient(&self) -> bool {
        true
    }
}

/// `f = 1` if `s` is an integer vector and `2` otherwise: periodic in `s` but
/// not uniformly almost periodic. Not coercive (`c1 = 0`).
#[derive(Clone, Debug)]
pub struct NonuapIndicator;

impl Lagrangian for NonuapIndicator {
    fn name(&self) -> String {
        "nonuap-indicator".into()
    }
    fn source_dim(&self) -> usize {
        2
    }
    fn target_dim(&self) -> usize {
        2
    }
    fn eval(&self, _x: &[f64], s: &[f64], _a: &Matrix) -> f64 {
        if s.iter().all(|v| v.fract() == 0.0) {
            1.0
        } else {
            2.0
        }
    }
    fn growth(&self) -> Growth {
        Growth { c1: 0.0, c2: 2.0, p: 2.0 }
    }
    fn depends_on_x(&self) -> bool {
        false
    }
    fn depends_on_s(&self) -> bool {
        true
    }
    fn smooth_away_from(&self) -> &str {
        "discontinuous at every integer point of s"
    }
    fn is_regular(&self, _x: &[f64], _s: &[f64], _a: &Matrix) -> bool {
        false
    }
}

/// `f(x / eps, s / eps, A)`.
pub struct Oscillating {
    inner: Arc<dyn Lagrangian>,
    eps: f64,
}

impl Oscillating {
    pub fn new(inner: Arc<dyn Lagrangian>, eps: f64) -> Self {
        assert!(eps > 0.0);
        Oscillating { inner, eps }
    }

    fn scaled(&self, v: &[f64]) -> Vec<f64> {
        v.iter().map(|t| t / self.eps).collect()
    }
}

impl Lagrangian for Oscillating {
    fn name(&self) -> String {
        format!("{}@eps={}", self.inner.name(), self.eps)
    }
    fn source_dim(&self) -> usize {
        self.inner.source_dim()
    }
    fn target_dim(&self) -> usize {
        self.inner.target_dim()
    }
    fn eval(&self, x: &[f64], s: &[f64], a: &Matrix) -> f64 {
        self.inner.eval(&self.scaled(x), &self.scaled(s), a)
    }
    fn growth(&self) -> Growth {
        self.inner.growth()
    }
    fn periodic_x(&self) -> bool {
        // period eps; integer periodic only when 1/eps is an integer
        !self.inner.depends_on_x() || (1.0 / self.eps).fract() == 0.0
    }
    fn periodic_s(&self) -> bool {
        !self.inner.depends_on_s() || (1.0 / self.eps).fract() == 0.0
    }
    fn depends_on_x(&self) -> bool {
        self.inner.depends_on_x()
    }
    fn depends_on_s(&self) -> bool {
        self.inner.depends_on_s()
    }
    fn gradient(&self, x: &[f64], s: &[f64], a: &Matrix, ds: &mut [f64], da: &mut Matrix) -> bool {
        if !self.inner.gradient(&self.scaled(x), &self.scaled(s), a, ds, da) {
            return false;
        }
        ds.iter_mut().for_each(|d| *d /= self.eps);
        true
    }
    fn has_gradient(&self) -> bool {
        self.inner.has_gradient()
    }
    fn smooth_away_from(&self) -> &str {
        self.inner.smooth_away_from()
    }
    fn is_regular(&self, x: &[f64], s: &[f64], a: &Matrix) -> bool {
        self.inner.is_regular(&self.scaled(x), &self.scaled(s), a)
    }
}

/// `f(x + shift, s, A)`: moves the periodic cell origin.
pub struct Shifted {
    inner: Arc<dyn Lagrangian>,
    shift: Vec<f64>,
}

impl Shifted {
    pub fn new(inner: Arc<dyn Lagrangian>, shift: Vec<f64>) -> Self {
        assert_eq!(shift.len(), inner.source_dim());
        Shifted { inner, shift }
    }

    fn moved(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.shift).map(|(a, b)| a + b).collect()
    }
}

impl Lagrangian for Shifted {
    fn name(&self) -> String {
        format!("{}+shift", self.inner.name())
    }
    fn source_dim(&self) -> usize {
        self.inner.source_dim()
    }
    fn target_dim(&self) -> usize {
        self.inner.target_dim()
    }
    fn eval(&self, x: &[f64], s: &[f64], a: &Matrix) -> f64 {
        self.inner.eval(&self.moved(x), s, a)
    }
    fn growth(&self) -> Growth {
        self.inner.growth()
    }
    fn periodic_x(&self) -> bool {
        self.inner.periodic_x()
    }
    fn periodic_s(&self) -> bool {
        self.inner.periodic_s()
    }
    fn depends_on_x(&self) -> bool {
        self.inner.depends_on_x()
    }
    fn depends_on_s(&self) -> bool {
        self.inner.depends_on_s()
    }
    fn gradient(&self, x: &[f64], s: &[f64], a: &Matrix, ds: &mut [f64], da: &mut Matrix) -> bool {
        self.inner.gradient(&self.moved(x), s, a, ds, da)
    }
    fn has_gradient(&self) -> bool {
        self.inner.has_gradient()
    }
    fn smooth_away_from(&self) -> &str {
        self.inner.smooth_away_from()
    }
    fn is_regular(&self, x: &[f64], s: &[f64], a: &Matrix) -> bool {
        self.inner.is_regular(&self.moved(x), s, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layered_coefficient_is_half_and_half() {
        let l = Layered1d::new();
        assert_eq!(l.coefficient(&[0.0]), 1.0);
        assert_eq!(l.coefficient(&[0.49]), 1.0);
        assert_eq!(l.coefficient(&[0.5]), 2.0);
        assert_eq!(l.coefficient(&[1.25]), 1.0);
        assert_eq!(l.coefficient(&[-0.25]), 2.0);
    }

    #[test]
    fn checkerboard_pattern() {
        let c = Checkerboard::new();
        assert_eq!(c.coefficient(&[0.25, 0.25]), 1.0);
        assert_eq!(c.coefficient(&[0.75, 0.25]), 2.0);
        assert_eq!(c.coefficient(&[0.75, 0.75]), 1.0);
        assert_eq!(c.coefficient(&[-0.25, 0.25]), 2.0);
    }

    #[test]
    fn indicator_values() {
        let a = Matrix::zeros(2, 2);
        assert_eq!(NonuapIndicator.eval(&[0.3, 0.1], &[3.0, -2.0], &a), 1.0);
        assert_eq!(NonuapIndicator.eval(&[0.3, 0.1], &[3.0, 2f64.sqrt()], &a), 2.0);
    }

    #[test]
    fn oscillating_wrapper_scales_arguments() {
        let inner: Arc<dyn Lagrangian> = Arc::new(Layered1d::new());
        let w = Oscillating::new(inner.clone(), 0.25);
        let a: Matrix = "1".parse().unwrap();
        assert_eq!(w.eval(&[0.1], &[0.0], &a), inner.eval(&[0.4], &[0.0], &a));
        assert_eq!(w.eval(&[0.2], &[0.0], &a), 2.0);
        assert!(w.periodic_x());
        assert!(!Oscillating::new(inner, 0.3).periodic_x());
    }
}
