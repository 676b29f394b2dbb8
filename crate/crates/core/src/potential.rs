//! The nonlinearity `W`, its growth bounds, and the Nemytskii operator
//! `B_W(u, lambda) = lambda + u - W'(u)` with its derivative.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::manifold::Torus;
use crate::scalar::Scalar;

/// Closed-form families of `W`.
#[derive(Clone, Debug, PartialEq)]
pub enum Nonlinearity<T> {
    /// `W(t) = (t^2 - 1)^2 / 4`.
    DoubleWell,
    /// `W(t) = sum_i c_i t^i`, coefficients low to high.
    Polynomial(Vec<T>),
    /// `W(t) = e^t`; violates every polynomial growth bound.
    Exponential,
}

/// A potential with its growth exponent `p` and constants `K1`, `K2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential<T> {
    pub nonlinearity: Nonlinearity<T>,
    pub p: T,
    pub k1: T,
    pub k2: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Order {
    Value,
    First,
    Second,
}

impl Order {
    pub fn from_index(order: u8) -> Result<Self> {
        match order {
            0 => Ok(Order::Value),
            1 => Ok(Order::First),
            2 => Ok(Order::Second),
            _ => Err(Error::InvalidArgument(format!("derivative order must be 0, 1 or 2, got {order}"))),
        }
    }
}

/// Outcome of the growth check on a finite sample range.
#[derive(Clone, Debug, PartialEq)]
pub struct GrowthReport<T> {
    pub ok: bool,
    /// `max |W'(t)| / (K1 (1 + |t|^{p-1}))` and the analogous `W''` ratio.
    pub worst_ratio: T,
    /// Sample where the worst ratio occurred.
    pub worst_t: T,
    /// Whether `2 < p < p_n` holds for the manifold dimension.
    pub exponent_ok: bool,
    /// `p_n` (`None` stands for infinity).
    pub critical_exponent: Option<T>,
    pub range: (T, T),
}

fn horner<T: Scalar>(coeffs: &[T], t: T) -> T {
    coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * t + c)
}

fn derive<T: Scalar>(coeffs: &[T]) -> Vec<T> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, &c)| c * T::of_usize(i))
        .collect()
}

impl<T: Scalar> Potential<T> {
    /// The canonical double-well with `p = 4`, `K1 = K2 = 3`.
    pub fn double_well() -> Self {
        Self {
            nonlinearity: Nonlinearity::DoubleWell,
            p: T::lit(4.0),
            k1: T::lit(3.0),
            k2: T::lit(3.0),
        }
    }

    /// Polynomial `W` with `K1`, `K2` fitted as the exact sample maxima of the
    /// growth ratios over `range` (`samples` points).
    pub fn polynomial(coeffs: Vec<T>, p: Option<T>, range: (T, T), samples: usize) -> Result<Self> {
        let degree = coeffs.iter().rposition(|&c| c != T::zero()).unwrap_or(0);
        if degree < 2 {
            return Err(Error::InvalidArgument("polynomial potential must have degree >= 2".into()));
        }
        let p = p.unwrap_or_else(|| T::of_usize(degree.max(3)));
        let mut pot = Self {
            nonlinearity: Nonlinearity::Polynomial(coeffs),
            p,
            k1: T::one(),
            k2: T::one(),
        };
        let (r1, r2) = pot.ratios(range, samples.max(2));
        pot.k1 = r1.0.max(T::eps());
        pot.k2 = r2.0.max(T::eps());
        Ok(pot)
    }

    pub fn exponential(p: T, k1: T, k2: T) -> Self {
        Self {
            nonlinearity: Nonlinearity::Exponential,
            p,
            k1,
            k2,
        }
    }

    pub fn w(&self, t: T) -> T {
        match &self.nonlinearity {
            Nonlinearity::DoubleWell => {
                let s = t * t - T::one();
                s * s * T::lit(0.25)
            }
            Nonlinearity::Polynomial(c) => horner(c, t),
            Nonlinearity::Exponential => t.exp(),
        }
    }

    pub fn dw(&self, t: T) -> T {
        match &self.nonlinearity {
            Nonlinearity::DoubleWell => t * t * t - t,
            Nonlinearity::Polynomial(c) => horner(&derive(c), t),
            Nonlinearity::Exponential => t.exp(),
        }
    }

    pub fn d2w(&self, t: T) -> T {
        match &self.nonlinearity {
            Nonlinearity::DoubleWell => T::lit(3.0) * t * t - T::one(),
            Nonlinearity::Polynomial(c) => horner(&derive(&derive(c)), t),
            Nonlinearity::Exponential => t.exp(),
        }
    }

    /// `W`, `W'` or `W''` at `t`.
    pub fn eval(&self, t: T, order: Order) -> T {
        match order {
            Order::Value => self.w(t),
            Order::First => self.dw(t),
            Order::Second => self.d2w(t),
        }
    }

    fn ratios(&self, range: (T, T), samples: usize) -> ((T, T), (T, T)) {
        let (lo, hi) = range;
        let mut worst1 = (T::zero(), lo);
        let mut worst2 = (T::zero(), lo);
        for i in 0..samples {
            let t = lo + (hi - lo) * T::of_usize(i) / T::of_usize(samples - 1);
            let a = t.abs();
            let r1 = self.dw(t).abs() / (self.k1 * (T::one() + a.powf(self.p - T::one())));
            let r2 = self.d2w(t).abs() / (self.k2 * (T::one() + a.powf(self.p - T::lit(2.0))));
            // NaN or inf ratios count as violations
            if !(r1 <= worst1.0) {
                worst1 = (if r1.is_finite() { r1 } else { T::max_value().unwrap_or(r1) }, t);
            }
            if !(r2 <= worst2.0) {
                worst2 = (if r2.is_finite() { r2 } else { T::max_value().unwrap_or(r2) }, t);
            }
        }
        (worst1, worst2)
    }

    /// Checks both growth bounds on `samples` points of `range` and
    /// `2 < p < p_n` for manifold dimension `n`. Advisory: a violation is
    /// reported, not raised.
    pub fn validate_growth(&self, n: usize, range: (T, T), samples: usize) -> Result<GrowthReport<T>> {
        if samples < 100 {
            return Err(Error::InvalidArgument(format!("at least 100 samples required, got {samples}")));
        }
        if !(range.0 < range.1) {
            return Err(Error::InvalidArgument("empty sample range".into()));
        }
        let critical = critical_exponent::<T>(n);
        let exponent_ok = self.p > T::lit(2.0) && critical.is_none_or(|pn| self.p < pn);
        let (r1, r2) = self.ratios(range, samples);
        let (worst_ratio, worst_t) = if r1.0 >= r2.0 { r1 } else { r2 };
        Ok(GrowthReport {
            ok: exponent_ok && worst_ratio <= T::one() + T::lit(1e-12),
            worst_ratio,
            worst_t,
            exponent_ok,
            critical_exponent: critical,
            range,
        })
    }
}

/// `p_n = 2n/(n-2)` for `n >= 3`, infinite (`None`) for `n = 2`.
pub fn critical_exponent<T: Scalar>(n: usize) -> Option<T> {
    if n <= 2 {
        None
    } else {
        Some(T::of_usize(2 * n) / T::of_usize(n - 2))
    }
}

/// Galerkin projection onto the band in the metric's mass form:
/// the field `b` with `int b w dmu_g = sum_x rho f w` for every band-limited `w`.
pub(crate) fn project_metric<T: Scalar>(torus: &Torus<T>, padded: &[T]) -> Result<DVector<T>> {
    if torus.has_constant_metric() {
        Ok(torus.grid().basis_from_padded(padded))
    } else {
        torus.mass_solve(&torus.weighted_projection(padded))
    }
}

/// `B_W(u, lambda) = lambda + u - W'(u)`, projected onto the band with 2x
/// oversampling.
pub fn nemytskii_b<T: Scalar>(torus: &Torus<T>, pot: &Potential<T>, u: &Field<T>, lambda: T) -> Result<Field<T>> {
    check_field(torus, u)?;
    let pu = u.padded();
    let vals: Vec<T> = pu.iter().map(|&x| lambda + x - pot.dw(x)).collect();
    Ok(Field::from_basis(torus.grid(), &project_metric(torus, &vals)?))
}

/// `dB_W(u, lambda)[v, Lambda] = Lambda + v - v W''(u)`, projected like
/// [`nemytskii_b`].
pub fn nemytskii_db<T: Scalar>(
    torus: &Torus<T>,
    pot: &Potential<T>,
    u: &Field<T>,
    v: &Field<T>,
    big_lambda: T,
) -> Result<Field<T>> {
    check_field(torus, u)?;
    check_field(torus, v)?;
    let pu = u.padded();
    let pv = v.padded();
    let vals: Vec<T> = pu
        .iter()
        .zip(&pv)
        .map(|(&x, &y)| big_lambda + y - y * pot.d2w(x))
        .collect();
    Ok(Field::from_basis(torus.grid(), &project_metric(torus, &vals)?))
}

pub(crate) fn check_field<T: Scalar>(torus: &Torus<T>, u: &Field<T>) -> Result<()> {
    if **u.grid() == **torus.grid() {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}
