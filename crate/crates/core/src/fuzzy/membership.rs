use serde::{Deserialize, Serialize};

/// Parametric fuzzy set over a numeric universe.
///
/// Serialized as `{"shape": "triangular", "params": [a, b, c]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", content = "params", rename_all = "snake_case")]
pub enum MembershipFunction {
    /// Feet at `a` and `c`, peak at `b`.
    Triangular(f64, f64, f64),
    /// Feet at `a` and `d`, plateau on `[b, c]`.
    Trapezoidal(f64, f64, f64, f64),
    /// `(mean, sigma)`.
    Gaussian(f64, f64),
}

impl MembershipFunction {
    pub fn triangular(a: f64, b: f64, c: f64) -> Self {
        Self::Triangular(a, b, c)
    }

    pub fn trapezoidal(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self::Trapezoidal(a, b, c, d)
    }

    pub fn gaussian(mean: f64, sigma: f64) -> Self {
        Self::Gaussian(mean, sigma)
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Self::Triangular(a, b, c) => vec![a, b, c],
            Self::Trapezoidal(a, b, c, d) => vec![a, b, c, d],
            Self::Gaussian(m, s) => vec![m, s],
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if self.params().iter().any(|p| !p.is_finite()) {
            return Err("membership parameters must be finite".into());
        }
        match *self {
            Self::Triangular(a, b, c) => {
                if !(a <= b && b <= c && a < c) {
                    return Err(format!(
                        "triangular({a}, {b}, {c}) requires a <= b <= c and a < c"
                    ));
                }
            }
            Self::Trapezoidal(a, b, c, d) => {
                if !(a <= b && b <= c && c <= d && a < d) {
                    return Err(format!(
                        "trapezoidal({a}, {b}, {c}, {d}) requires a <= b <= c <= d and a < d"
                    ));
                }
            }
            Self::Gaussian(_, sigma) => {
                if sigma <= 0.0 {
                    return Err(format!("gaussian sigma {sigma} must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Degree of membership of `x`, always in `[0, 1]`. Coinciding feet and
    /// shoulders (`a == b`) give a vertical edge that takes the plateau value.
    pub fn eval(&self, x: f64) -> f64 {
        if x.is_nan() {
            return 0.0;
        }
        let y = match *self {
            Self::Triangular(a, b, c) => trapezoid(x, a, b, b, c),
            Self::Trapezoidal(a, b, c, d) => trapezoid(x, a, b, c, d),
            Self::Gaussian(mean, sigma) => {
                let z = (x - mean) / sigma;
                (-0.5 * z * z).exp()
            }
        };
        y.clamp(0.0, 1.0)
    }
}

fn trapezoid(x: f64, a: f64, b: f64, c: f64, d: f64) -> f64 {
    if x < a || x > d {
        0.0
    } else if x >= b && x <= c {
        1.0
    } else if x < b {
        (x - a) / (b - a)
    } else {
        (d - x) / (d - c)
    }
}
