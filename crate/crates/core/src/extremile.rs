//! Extremile weight machinery.
//!
//! For a level `τ ∈ (0, 1)` the distortion is `K_τ(t) = 1 − (1 − t)^{s(τ)}`
//! below the median and `t^{r(τ)}` above it, with `r(τ) = s(1 − τ) =
//! ln(1/2) / ln τ`. Its derivative `J_τ` is the weight applied to the
//! conditional CDF in the local linear problem. Also provides the standard
//! normal quantile function and the Gaussian extremile moments that drive the
//! level-adaptive bandwidth factor.

use crate::error::{Error, Result};
use crate::quadrature::unit_rule;
use crate::scalar::Scalar;

/// Extremile order, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ExtremileLevel<T: Scalar>(T);

impl<T: Scalar> ExtremileLevel<T> {
    pub fn new(tau: T) -> Result<Self> {
        if tau > T::zero() && tau < T::one() {
            Ok(Self(tau))
        } else {
            Err(Error::Domain(format!("extremile level must lie in (0, 1), got {tau}")))
        }
    }

    pub fn value(self) -> T {
        self.0
    }

    /// The mirrored level `1 − τ`.
    pub fn mirror(self) -> Self {
        Self(T::one() - self.0)
    }

    fn is_upper(self) -> bool {
        self.0 >= T::lit(0.5)
    }
}

/// `r(τ) = ln(1/2) / ln τ`.
pub fn exponent_r<T: Scalar>(tau: ExtremileLevel<T>) -> T {
    T::lit(0.5).ln() / tau.0.ln()
}

/// `s(τ) = r(1 − τ)`.
pub fn exponent_s<T: Scalar>(tau: ExtremileLevel<T>) -> T {
    exponent_r(tau.mirror())
}

fn check_unit<T: Scalar>(t: T) -> Result<()> {
    if t >= T::zero() && t <= T::one() {
        Ok(())
    } else {
        Err(Error::Domain(format!("argument must lie in [0, 1], got {t}")))
    }
}

/// Distortion `K_τ(t)`.
pub fn big_k<T: Scalar>(t: T, tau: ExtremileLevel<T>) -> Result<T> {
    check_unit(t)?;
    Ok(if tau.is_upper() {
        t.powf(exponent_r(tau))
    } else {
        T::one() - (T::one() - t).powf(exponent_s(tau))
    })
}

/// Weight `J_τ(t) = K_τ'(t)`.
///
/// Returns `+∞` where the derivative diverges (an exponent below one at the
/// corresponding endpoint); never NaN on `[0, 1]`.
pub fn little_j<T: Scalar>(t: T, tau: ExtremileLevel<T>) -> Result<T> {
    check_unit(t)?;
    Ok(j_from_parts(t, T::one() - t, tau, exponent_r(tau), exponent_s(tau)))
}

/// `J_τ` with the complement `1 − t` supplied separately.
#[inline]
fn j_from_parts<T: Scalar>(t: T, one_minus_t: T, tau: ExtremileLevel<T>, r: T, s: T) -> T {
    if tau.is_upper() {
        if t == T::zero() && r < T::one() {
            return T::infinity();
        }
        r * t.powf(r - T::one())
    } else {
        if one_minus_t == T::zero() && s < T::one() {
            return T::infinity();
        }
        s * one_minus_t.powf(s - T::one())
    }
}

/// Precomputed `J_τ` evaluator for repeated use at one level.
#[derive(Debug, Clone, Copy)]
pub struct WeightFn<T: Scalar> {
    tau: ExtremileLevel<T>,
    r: T,
    s: T,
}

impl<T: Scalar> WeightFn<T> {
    pub fn new(tau: ExtremileLevel<T>) -> Self {
        Self {
            tau,
            r: exponent_r(tau),
            s: exponent_s(tau),
        }
    }

    /// `J_τ(t)` for `t` already known to lie in `[0, 1]`.
    #[inline]
    pub fn eval(&self, t: T) -> T {
        j_from_parts(t, T::one() - t, self.tau, self.r, self.s)
    }
}

// Wichura's AS241 (PPND16) coefficients.
const A: [f64; 8] = [
    3.387_132_872_796_366_5,
    1.331_416_678_917_843_8e2,
    1.971_590_950_306_551_3e3,
    1.373_169_376_550_946e4,
    4.592_195_393_154_987e4,
    6.726_577_092_700_87e4,
    3.343_057_558_358_813e4,
    2.509_080_928_730_122_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091e1,
    6.871_870_074_920_579e2,
    5.394_196_021_424_751e3,
    2.121_379_430_158_659_7e4,
    3.930_789_580_009_271e4,
    2.872_908_573_572_194_3e4,
    5.226_495_278_852_545e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_546,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    2.417_807_251_774_506e-1,
    2.272_384_498_926_918_4e-2,
    7.745_450_142_783_414e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_759,
    1.676_384_830_183_803_8,
    6.897_673_349_851e-1,
    1.481_039_764_274_800_8e-1,
    1.519_866_656_361_645_7e-2,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_9e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    2.965_605_718_285_048_7e-1,
    2.653_218_952_657_612_4e-2,
    1.242_660_947_388_078_4e-3,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_88e-1,
    1.369_298_809_227_358e-1,
    1.487_536_129_085_061_5e-2,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.044_263_103_389_939_7e-15,
];

#[inline]
fn poly<T: Scalar>(coef: &[f64; 8], x: T) -> T {
    coef.iter().rev().fold(T::zero(), |acc, c| acc * x + T::lit(*c))
}

/// Standard normal quantile `Φ^{-1}(p)` (AS241, about 1e-16 relative error).
pub fn std_normal_quantile<T: Scalar>(p: T) -> Result<T> {
    if !(p > T::zero() && p < T::one()) {
        return Err(Error::Domain(format!("probability must lie in (0, 1), got {p}")));
    }
    Ok(quantile_with_complement(p, T::one() - p))
}

/// `Φ^{-1}(p)` given `p` and `1 − p` computed independently, so tails on
/// either side keep full relative accuracy.
fn quantile_with_complement<T: Scalar>(p: T, q: T) -> T {
    let half = T::lit(0.5);
    let dev = p - half;
    if dev.abs() <= T::lit(0.425) {
        let r = T::lit(0.180625) - dev * dev;
        return dev * poly(&A, r) / poly(&B, r);
    }
    let tail = if dev < T::zero() { p } else { q };
    let mut r = (-tail.ln()).sqrt();
    let z = if r <= T::lit(5.0) {
        r = r - T::lit(1.6);
        poly(&C, r) / poly(&D, r)
    } else {
        r = r - T::lit(5.0);
        poly(&E, r) / poly(&F, r)
    };
    if dev < T::zero() {
        -z
    } else {
        z
    }
}

/// `μ_τ = ∫₀¹ Φ^{-1}(t) J_τ(t) dt` and `V_τ = ∫₀¹ (Φ^{-1}(t) − μ_τ)² J_τ(t) dt`.
fn gaussian_moments<T: Scalar>(tau: ExtremileLevel<T>) -> (T, T) {
    let j = WeightFn::new(tau);
    let mut total = T::zero();
    let mut mean = T::zero();
    let mut second = T::zero();
    for node in unit_rule() {
        let lower = T::lit(node.lower);
        let (t, q) = if node.upper_half {
            (T::one() - lower, lower)
        } else {
            (lower, T::one() - lower)
        };
        let z = quantile_with_complement(t, q);
        let w = T::lit(node.weight) * j_from_parts(t, q, j.tau, j.r, j.s);
        total = total + w;
        mean = mean + w * z;
        second = second + w * z * z;
    }
    // ∫(z − μ)² J = ∫z² J − 2μ ∫z J + μ² ∫J
    let var = second - T::lit(2.0) * mean * mean + mean * mean * total;
    (mean, var)
}

/// Extremile of order `τ` of a standard Gaussian.
pub fn gaussian_extremile<T: Scalar>(tau: ExtremileLevel<T>) -> T {
    gaussian_moments(tau).0
}

/// Level-dependent bandwidth multiplier `[4τ(1−τ) V_τ J_τ(τ)²]^{1/5}`.
pub fn adaptive_factor<T: Scalar>(tau: ExtremileLevel<T>) -> T {
    if tau.0 == T::lit(0.5) {
        // 4·¼·Var(Z)·1² in closed form
        return T::one();
    }
    let (_, var) = gaussian_moments(tau);
    let t = tau.0;
    let jt = WeightFn::new(tau).eval(t);
    (T::lit(4.0) * t * (T::one() - t) * var * jt * jt).powf(T::lit(0.2))
}
