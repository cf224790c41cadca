//! Scalar abstraction shared by the numerical kernels.
//!
//! Every kernel that is differentiated by the Laplace machinery (forward
//! recursions, emission densities, FEM assembly, factorizations) is written
//! against [`Real`], which is implemented for `f32`, `f64` and the forward-mode
//! [`Dual`] number. Nesting `Dual<Dual<f64>>` yields second derivatives.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign};

use num_traits::{Float, Num, NumAssign, One, Zero};

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

pub trait Real: Num + NumAssign + Neg<Output = Self> + Copy + PartialOrd + Debug + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    /// Primal value with all derivative parts dropped.
    fn value(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn abs(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// `ln(erfc(self))`, accurate far into the upper tail.
    fn ln_erfc(self) -> Self;

    fn is_finite(self) -> bool {
        self.value().is_finite()
    }

    fn max_of(self, other: Self) -> Self {
        if other.value() > self.value() {
            other
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other.value() < self.value() {
            other
        } else {
            self
        }
    }
}

macro_rules! impl_real_float {
    ($t:ty) => {
        impl Real for $t {
            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn value(self) -> f64 {
                self as f64
            }
            #[inline]
            fn exp(self) -> Self {
                Float::exp(self)
            }
            #[inline]
            fn ln(self) -> Self {
                Float::ln(self)
            }
            #[inline]
            fn sqrt(self) -> Self {
                Float::sqrt(self)
            }
            #[inline]
            fn sin(self) -> Self {
                Float::sin(self)
            }
            #[inline]
            fn cos(self) -> Self {
                Float::cos(self)
            }
            #[inline]
            fn abs(self) -> Self {
                Float::abs(self)
            }
            #[inline]
            fn powi(self, n: i32) -> Self {
                Float::powi(self, n)
            }
            #[inline]
            fn ln_erfc(self) -> Self {
                ln_erfc_f64(self as f64) as $t
            }
        }
    };
}

impl_real_float!(f64);
impl_real_float!(f32);

/// `ln(erfc(z))` for `f64`.
///
/// Below `z = 2` the direct `erfc` is accurate (it never underflows there);
/// above it the scaled complement `erfcx(z) = exp(z²) erfc(z)` is evaluated by
/// its continued fraction, so that the result stays finite for any finite `z`.
pub fn ln_erfc_f64(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z < 2.0 {
        libm::erfc(z).ln()
    } else {
        -z * z + erfcx_cf(z).ln()
    }
}

// Lentz evaluation of erfc(z) exp(z²) sqrt(pi) = 1/(z + (1/2)/(z + 1/(z + (3/2)/(z + ...)))).
fn erfcx_cf(z: f64) -> f64 {
    let tiny = 1e-300;
    let mut f = z;
    let mut c = z;
    let mut d = 0.0;
    for n in 1..500 {
        let a = n as f64 / 2.0;
        d = z + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = z + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / (f * std::f64::consts::PI.sqrt())
}

/// Forward-mode dual number `re + eps·ε` with `ε² = 0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Real> Dual<T> {
    pub fn new(re: T, eps: T) -> Self {
        Dual { re, eps }
    }

    pub fn constant(re: T) -> Self {
        Dual { re, eps: T::zero() }
    }

    pub fn variable(re: T) -> Self {
        Dual { re, eps: T::one() }
    }

    #[inline]
    fn chain(self, re: T, deriv: T) -> Self {
        Dual { re, eps: self.eps * deriv }
    }
}

pub type Dual64 = Dual<f64>;

impl<T: Real> PartialEq for Dual<T> {
    fn eq(&self, other: &Self) -> bool {
        self.re == other.re
    }
}

impl<T: Real> PartialOrd for Dual<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.re.partial_cmp(&other.re)
    }
}

impl<T: Real> Zero for Dual<T> {
    fn zero() -> Self {
        Dual::constant(T::zero())
    }
    fn is_zero(&self) -> bool {
        self.re.is_zero() && self.eps.is_zero()
    }
}

impl<T: Real> One for Dual<T> {
    fn one() -> Self {
        Dual::constant(T::one())
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Dual { re: self.re + o.re, eps: self.eps + o.eps }
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Dual { re: self.re - o.re, eps: self.eps - o.eps }
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Dual { re: self.re * o.re, eps: self.eps * o.re + self.re * o.eps }
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = T::one() / o.re;
        let re = self.re * inv;
        Dual { re, eps: (self.eps - re * o.eps) * inv }
    }
}

impl<T: Real> Rem for Dual<T> {
    type Output = Self;
    fn rem(self, o: Self) -> Self {
        let re = self.re % o.re;
        // d/dx (x mod y) = 1 away from the jumps
        let q = (self.re - re) / o.re;
        Dual { re, eps: self.eps - q * o.eps }
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual { re: -self.re, eps: -self.eps }
    }
}

macro_rules! assign_op {
    ($tr:ident, $f:ident, $op:tt) => {
        impl<T: Real> $tr for Dual<T> {
            #[inline]
            fn $f(&mut self, o: Self) {
                *self = *self $op o;
            }
        }
    };
}
assign_op!(AddAssign, add_assign, +);
assign_op!(SubAssign, sub_assign, -);
assign_op!(MulAssign, mul_assign, *);
assign_op!(DivAssign, div_assign, /);
assign_op!(RemAssign, rem_assign, %);

impl<T: Real> Num for Dual<T> {
    type FromStrRadixErr = String;
    fn from_str_radix(s: &str, radix: u32) -> std::result::Result<Self, String> {
        if radix != 10 {
            return Err(format!("unsupported radix {radix}"));
        }
        s.trim().parse::<f64>().map(|v| Dual::constant(T::from_f64(v))).map_err(|e| e.to_string())
    }
}

impl<T: Real> Real for Dual<T> {
    fn from_f64(v: f64) -> Self {
        Dual::constant(T::from_f64(v))
    }
    fn value(self) -> f64 {
        self.re.value()
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.re.ln(), T::one() / self.re)
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, T::one() / (s + s))
    }
    fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    fn abs(self) -> Self {
        if self.re.value() < 0.0 {
            -self
        } else {
            self
        }
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::one();
        }
        let p = self.re.powi(n - 1);
        self.chain(p * self.re, T::from_f64(n as f64) * p)
    }
    fn ln_erfc(self) -> Self {
        let l = self.re.ln_erfc();
        // d/dz ln erfc(z) = -2/sqrt(pi) exp(-z^2) / erfc(z)
        let d = -T::from_f64(FRAC_2_SQRT_PI) * (-(self.re * self.re) - l).exp();
        self.chain(l, d)
    }
}

/// First and second derivatives of a scalar function of two variables at a point,
/// obtained by nested forward-mode evaluation.
pub fn second_order_2d<F>(f: F, a: f64, b: f64) -> ([f64; 2], [f64; 3], f64)
where
    F: Fn(Dual<Dual64>, Dual<Dual64>) -> Dual<Dual64>,
{
    let seeded = |da: f64, db: f64, dda: f64, ddb: f64| {
        (Dual::new(Dual::new(a, dda), Dual::new(da, 0.0)), Dual::new(Dual::new(b, ddb), Dual::new(db, 0.0)))
    };
    // outer tangent along a, inner along a -> d2/da2
    let (xa, xb) = seeded(1.0, 0.0, 1.0, 0.0);
    let r = f(xa, xb);
    let value = r.re.re;
    let da = r.eps.re;
    let daa = r.eps.eps;
    let (xa, xb) = seeded(0.0, 1.0, 0.0, 1.0);
    let r = f(xa, xb);
    let db = r.eps.re;
    let dbb = r.eps.eps;
    let (xa, xb) = seeded(1.0, 0.0, 0.0, 1.0);
    let r = f(xa, xb);
    let dab = r.eps.eps;
    ([da, db], [daa, dab, dbb], value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_product_rule() {
        let x = Dual64::variable(1.5);
        let y = x * x.sin() + x.exp() / x;
        let h = 1e-6;
        let f = |v: f64| v * v.sin() + v.exp() / v;
        let fd = (f(1.5 + h) - f(1.5 - h)) / (2.0 * h);
        assert!((y.re - f(1.5)).abs() < 1e-14);
        assert!((y.eps - fd).abs() < 1e-8);
    }

    #[test]
    fn nested_dual_second_derivative() {
        let (g, h, v) = second_order_2d(|a, b| a * a * b + b.ln(), 2.0, 3.0);
        assert!((v - (12.0 + 3f64.ln())).abs() < 1e-14);
        assert!((g[0] - 12.0).abs() < 1e-14);
        assert!((g[1] - (4.0 + 1.0 / 3.0)).abs() < 1e-14);
        assert!((h[0] - 6.0).abs() < 1e-14);
        assert!((h[1] - 4.0).abs() < 1e-14);
        assert!((h[2] + 1.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn ln_erfc_is_continuous_across_branch() {
        let below = ln_erfc_f64(2.0 - 1e-12);
        let above = ln_erfc_f64(2.0 + 1e-12);
        assert!((below - above).abs() < 1e-10);
        // reference values: erfc(3) = 2.209049699858544e-05, erfc(0.5) = 0.4795001221869535
        assert!((ln_erfc_f64(3.0) - 2.209049699858544e-05f64.ln()).abs() < 1e-12);
        assert!((ln_erfc_f64(0.5) - 0.4795001221869535f64.ln()).abs() < 1e-14);
        // far tail stays finite: ln erfc(40) ~ -1600 - ln(40 sqrt(pi))
        let t = ln_erfc_f64(40.0);
        assert!(t.is_finite() && (t + 1600.0 + (40.0 * std::f64::consts::PI.sqrt()).ln()).abs() < 1e-3);
    }

    #[test]
    fn ln_erfc_dual_matches_finite_difference() {
        for &z in &[-3.0, -0.2, 0.7, 1.99, 2.5, 8.0] {
            let d = Dual64::variable(z).ln_erfc();
            let h = 1e-6;
            let fd = (ln_erfc_f64(z + h) - ln_erfc_f64(z - h)) / (2.0 * h);
            assert!((d.eps - fd).abs() < 1e-6 * (1.0 + fd.abs()), "z={z}");
        }
    }

    #[test]
    fn f32_kernel_agrees_with_f64() {
        let a: f32 = Real::exp(0.3f32) * Real::ln(2.0f32);
        let b: f64 = Real::exp(0.3f64) * Real::ln(2.0f64);
        assert!((a as f64 - b).abs() < 1e-6);
    }
}
