use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::scalar::Scalar;

/// Kernel profile evaluated on nonnegative scaled distances `u = d / h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelSpec {
    /// `¾(1 − u²)` on `[0, 1)`.
    #[default]
    Epanechnikov,
    /// `exp(−u²/2) / √(2π)`, positive everywhere.
    Gaussian,
    /// `1` on `[0, 1)`.
    Uniform,
}

impl KernelSpec {
    #[inline]
    pub fn eval<T: Scalar>(self, u: T) -> T {
        match self {
            KernelSpec::Epanechnikov => {
                if u < T::one() {
                    T::lit(0.75) * (T::one() - u * u)
                } else {
                    T::zero()
                }
            }
            KernelSpec::Gaussian => {
                (-(u * u) * T::lit(0.5)).exp() * T::lit(0.398_942_280_401_432_7)
            }
            KernelSpec::Uniform => {
                if u < T::one() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    /// Weight of an observation at distance `d` for bandwidth `h`.
    #[inline]
    pub fn weight<T: Scalar>(self, d: T, h: T) -> T {
        self.eval(d / h)
    }

    pub fn has_compact_support(self) -> bool {
        !matches!(self, KernelSpec::Gaussian)
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelSpec::Epanechnikov => "epanechnikov",
            KernelSpec::Gaussian => "gaussian",
            KernelSpec::Uniform => "uniform",
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "epanechnikov" => Ok(KernelSpec::Epanechnikov),
            "gaussian" => Ok(KernelSpec::Gaussian),
            "uniform" => Ok(KernelSpec::Uniform),
            other => Err(Error::Domain(format!("unknown kernel {other:?}"))),
        }
    }
}
