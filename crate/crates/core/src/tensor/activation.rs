use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Silu,
}

/// Branch-free `exp` that the compiler can vectorize. Inputs are clamped to
/// `[-708, 709]`; relative error stays within a few ulp.
#[inline]
pub fn fast_exp(x: f64) -> f64 {
    const LOG2E: f64 = std::f64::consts::LOG2_E;
    const LN2_HI: f64 = 6.931_471_803_691_238_164_9e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
    // 1.5 * 2^52: adding it rounds to an integer held in the low mantissa bits.
    const SHIFT: f64 = 6_755_399_441_055_744.0;
    let x = x.max(-708.0).min(709.0);
    let t = x * LOG2E + SHIFT;
    let n = t - SHIFT;
    let r = (x - n * LN2_HI) - n * LN2_LO;
    let p = 1.0 / 479_001_600.0 + r * (1.0 / 6_227_020_800.0);
    let p = 1.0 / 39_916_800.0 + r * p;
    let p = 1.0 / 3_628_800.0 + r * p;
    let p = 1.0 / 362_880.0 + r * p;
    let p = 1.0 / 40_320.0 + r * p;
    let p = 1.0 / 5_040.0 + r * p;
    let p = 1.0 / 720.0 + r * p;
    let p = 1.0 / 120.0 + r * p;
    let p = 1.0 / 24.0 + r * p;
    let p = 1.0 / 6.0 + r * p;
    let p = 0.5 + r * p;
    let p = 1.0 + r * p;
    let p = 1.0 + r * p;
    let k = t.to_bits().wrapping_sub(SHIFT.to_bits()).wrapping_add(1023) << 52;
    p * f64::from_bits(k)
}

/// `tanh` through [`fast_exp`], with a Taylor branch near zero where
/// `1 - e^{-2|x|}` would cancel.
#[inline]
pub fn fast_tanh(x: f64) -> f64 {
    let a = x.abs();
    let e = fast_exp(-2.0 * a);
    let big = ((1.0 - e) / (1.0 + e)).copysign(x);
    let x2 = x * x;
    let small = x * (1.0 + x2 * (-1.0 / 3.0 + x2 * (2.0 / 15.0 + x2 * (-17.0 / 315.0))));
    if a < 0.01 {
        small
    } else {
        big
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + fast_exp(-x))
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => fast_tanh(x),
            Activation::Silu => x * sigmoid(x),
        }
    }

    /// Derivative at `x`, given `y = apply(x)`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Silu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
        }
    }

    /// `apply` over a slice; the per-kind loops vectorize.
    pub fn apply_all(self, xs: &[f64]) -> Vec<f64> {
        match self {
            Activation::Identity => xs.to_vec(),
            Activation::Relu => xs.iter().map(|&x| x.max(0.0)).collect(),
            Activation::Tanh => xs.iter().map(|&x| fast_tanh(x)).collect(),
            Activation::Silu => xs.iter().map(|&x| x * sigmoid(x)).collect(),
        }
    }

    /// `g * derivative(x, y)` elementwise.
    pub fn backprop(self, xs: &[f64], ys: &[f64], gs: &[f64]) -> Vec<f64> {
        let it = xs.iter().zip(ys).zip(gs);
        match self {
            Activation::Silu => it
                .map(|((&x, _), &g)| {
                    let s = sigmoid(x);
                    g * (s * (1.0 + x * (1.0 - s)))
                })
                .collect(),
            Activation::Tanh => it.map(|((_, &y), &g)| g * (1.0 - y * y)).collect(),
            _ => it.map(|((&x, &y), &g)| g * self.derivative(x, y)).collect(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Silu => "silu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "linear" | "none" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "silu" | "swish" => Ok(Activation::Silu),
            _ => Err(Error::UnknownActivation(s.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_tanh_matches_std() {
        let mut x = -30.0;
        while x < 30.0 {
            let (a, b) = (fast_tanh(x), x.tanh());
            // Relative accuracy degrades to absolute ~1e-17 just above the Taylor branch.
            assert!(
                (a - b).abs() <= 4.0 * f64::EPSILON * b.abs().max(0.05),
                "{x}: {a} vs {b}"
            );
            x += 0.00731;
        }
        for x in [0.0, 1e-300, -1e-12, 0.00999, 0.01, -0.0100001] {
            let (a, b) = (fast_tanh(x), x.tanh());
            assert!(
                (a - b).abs() <= 4.0 * f64::EPSILON * b.abs().max(0.05),
                "{x}: {a} vs {b}"
            );
        }
        assert_eq!(fast_tanh(1e4), 1.0);
        assert_eq!(fast_tanh(-1e4), -1.0);
    }

    #[test]
    fn fast_exp_matches_std() {
        let mut x = -745.0;
        while x < 709.0 {
            let (a, b) = (fast_exp(x), x.exp());
            if x >= -708.0 {
                assert!((a - b).abs() <= 4.0 * f64::EPSILON * b, "{x}: {a} vs {b}");
            }
            x += 0.0137;
        }
        assert_eq!(fast_exp(0.0), 1.0);
        assert!(fast_exp(-1e4) < 1e-307);
        assert!(fast_exp(1e4).is_finite());
    }

    #[test]
    fn fixed_points() {
        assert_eq!(Activation::Tanh.apply(0.0), 0.0);
        assert_eq!(Activation::Relu.apply(-1.0), 0.0);
        assert_eq!(Activation::Silu.apply(0.0), 0.0);
        assert_eq!(Activation::Identity.apply(0.123), 0.123);
    }

    #[test]
    fn silu_slope_at_zero() {
        let h = 1e-6;
        let a = Activation::Silu;
        let fd = (a.apply(h) - a.apply(-h)) / (2.0 * h);
        assert!((fd - 0.5).abs() < 1e-9);
        assert!((a.derivative(0.0, 0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn derivatives_match_differences() {
        for act in [Activation::Tanh, Activation::Silu, Activation::Identity] {
            for &x in &[-2.0, -0.3, 0.7, 1.9] {
                let h = 1e-6;
                let fd = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                assert!((fd - act.derivative(x, act.apply(x))).abs() < 1e-8, "{act}");
            }
        }
    }

    #[test]
    fn parse() {
        assert_eq!("SiLU".parse::<Activation>().unwrap(), Activation::Silu);
        assert!(matches!(
            "gelu".parse::<Activation>(),
            Err(Error::UnknownActivation(_))
        ));
    }
}
