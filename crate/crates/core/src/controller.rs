//! Adaptive-gain controllers: the control matrix selecting which payoff
//! entries the gain augments, the adaptation function driving the gain, and
//! the hypothesis checks of the three convergence guarantees.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameClass, PayoffMatrix};

/// A `{0,1}` matrix; entry `(i,j)` set means payoff `(i,j)` receives `+g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ControlMatrix {
    bits: [[bool; 2]; 2],
}

impl ControlMatrix {
    pub const ZERO: ControlMatrix = ControlMatrix { bits: [[false, false], [false, false]] };

    /// Rewards action 2 played against action 1 (entry `c`).
    pub const G1: ControlMatrix = ControlMatrix { bits: [[false, false], [true, false]] };

    /// Rewards mutual action 2 (entry `d`).
    pub const G2: ControlMatrix = ControlMatrix { bits: [[false, false], [false, true]] };

    /// Builds a matrix from entries that must each be exactly 0 or 1.
    pub fn from_entries(g11: u8, g12: u8, g21: u8, g22: u8) -> Result<Self> {
        let bit = |v: u8| match v {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(Error::InvalidInput(format!("control matrix entries must be 0 or 1, got {v}"))),
        };
        Ok(Self { bits: [[bit(g11)?, bit(g12)?], [bit(g21)?, bit(g22)?]] })
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        if self.bits[row][col] {
            1.0
        } else {
            0.0
        }
    }

    /// `(G11, G12, G21, G22)` as floats.
    pub fn entries(&self) -> [f64; 4] {
        [self.entry(0, 0), self.entry(0, 1), self.entry(1, 0), self.entry(1, 1)]
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }
}

impl fmt::Display for ControlMatrix {
    /// Row-major bit string, e.g. `0010` for G1.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.bits {
            for b in row {
                f.write_str(if b { "1" } else { "0" })?;
            }
        }
        Ok(())
    }
}

impl FromStr for ControlMatrix {
    type Err = Error;

    /// Accepts `g1`, `g2`, `none`/`zero`, or a 4-character row-major bit string.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "g1" => Ok(Self::G1),
            "g2" => Ok(Self::G2),
            "none" | "zero" => Ok(Self::ZERO),
            bits if bits.len() == 4 && bits.chars().all(|c| c == '0' || c == '1') => {
                let v: Vec<u8> = bits.bytes().map(|b| b - b'0').collect();
                Self::from_entries(v[0], v[1], v[2], v[3])
            }
            other => Err(Error::InvalidInput(format!(
                "control matrix must be g1, g2, none or four 0/1 digits, got {other:?}"
            ))),
        }
    }
}

/// Adaptation function family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adaptation {
    /// `phi(x) = k (x - h)`
    Linear,
    /// `phi(x) = k x^h`
    Power,
    /// `phi(x) = 0`; the gain stays at its initial value.
    None,
}

impl fmt::Display for Adaptation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Adaptation::Linear => "phi1",
            Adaptation::Power => "phi2",
            Adaptation::None => "none",
        })
    }
}

impl FromStr for Adaptation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "phi1" | "linear" => Ok(Adaptation::Linear),
            "phi2" | "power" => Ok(Adaptation::Power),
            "none" => Ok(Adaptation::None),
            other => Err(Error::InvalidInput(format!(
                "adaptation family must be phi1, phi2 or none, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerSpec {
    pub control_matrix: ControlMatrix,
    pub family: Adaptation,
    /// Rate of adaptation.
    pub k: f64,
    /// Decay threshold for [`Adaptation::Linear`], sensitivity exponent for
    /// [`Adaptation::Power`].
    pub h: f64,
    /// Initial gain.
    pub g0: f64,
}

impl ControllerSpec {
    pub fn new(control_matrix: ControlMatrix, family: Adaptation, k: f64, h: f64, g0: f64) -> Result<Self> {
        let spec = Self { control_matrix, family, k, h, g0 };
        spec.validate()?;
        Ok(spec)
    }

    /// No control: zero control matrix, frozen zero gain.
    pub fn uncontrolled() -> Self {
        Self { control_matrix: ControlMatrix::ZERO, family: Adaptation::None, k: 0.0, h: 0.0, g0: 0.0 }
    }

    /// `(G1, phi1)`, the coordination-game design.
    pub fn coordination(k: f64, h: f64, g0: f64) -> Result<Self> {
        Self::new(ControlMatrix::G1, Adaptation::Linear, k, h, g0)
    }

    /// `(G2, phi2)`, the design for dominant-strategy and anti-coordination games.
    pub fn power(k: f64, h: f64, g0: f64) -> Result<Self> {
        Self::new(ControlMatrix::G2, Adaptation::Power, k, h, g0)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.k, self.h, self.g0].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("controller parameters must be finite".into()));
        }
        match self.family {
            Adaptation::None => {
                if self.g0 < 0.0 {
                    return Err(Error::InvalidInput(format!("g0 must be >= 0, got {}", self.g0)));
                }
            }
            Adaptation::Linear | Adaptation::Power => {
                for (name, v) in [("k", self.k), ("h", self.h), ("g0", self.g0)] {
                    if v <= 0.0 {
                        return Err(Error::InvalidInput(format!("{name} must be > 0, got {v}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Adaptation function value at `x`.
    pub fn phi(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::InvalidInput(format!("x must lie in [0,1], got {x}")));
        }
        Ok(self.phi_unchecked(x))
    }

    #[inline]
    pub(crate) fn phi_unchecked(&self, x: f64) -> f64 {
        match self.family {
            Adaptation::Linear => self.k * (x - self.h),
            Adaptation::Power => self.k * power(x, self.h),
            Adaptation::None => 0.0,
        }
    }

    /// `d phi / dx`; `None` where it does not exist (`phi2` with `h < 1` at `x = 0`).
    pub(crate) fn phi_derivative(&self, x: f64) -> Option<f64> {
        match self.family {
            Adaptation::Linear => Some(self.k),
            Adaptation::None => Some(0.0),
            Adaptation::Power => {
                if x > 0.0 {
                    Some(self.k * self.h * power(x, self.h - 1.0))
                } else if self.h > 1.0 {
                    Some(0.0)
                } else if self.h == 1.0 {
                    Some(self.k)
                } else {
                    None
                }
            }
        }
    }
}

/// `x^h` as `exp(h ln x)`, with value 0 at `x = 0`.
#[inline]
fn power(x: f64, h: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (h * x.ln()).exp()
    }
}

/// Nominal payoff plus `G g`.
pub fn effective_payoff(nominal: &PayoffMatrix, spec: &ControllerSpec, g: f64) -> Result<PayoffMatrix> {
    if !(g >= 0.0) || !g.is_finite() {
        return Err(Error::InvalidInput(format!("gain must be finite and >= 0, got {g}")));
    }
    Ok(effective_payoff_unchecked(nominal, &spec.control_matrix, g))
}

#[inline]
pub(crate) fn effective_payoff_unchecked(nominal: &PayoffMatrix, gm: &ControlMatrix, g: f64) -> PayoffMatrix {
    let [g11, g12, g21, g22] = gm.entries();
    PayoffMatrix {
        a: nominal.a + g11 * g,
        b: nominal.b + g12 * g,
        c: nominal.c + g21 * g,
        d: nominal.d + g22 * g,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Theorem {
    /// Coordination game, `(G1, phi1)`, `0 < h < beta/(alpha+beta)`: `x -> 0` and `g -> 0`.
    Thm1,
    /// Dominant action 1, `(G2, phi2)`, `k > alpha`: `x -> 0` and `g` converges.
    Thm2,
    /// Anti-coordination, `(G2, phi2)`: `x -> 0` and `g` converges.
    Thm3,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityVerdict {
    pub theorem: Theorem,
    pub satisfied: bool,
    pub detail: String,
}

/// Checks whether `(game, spec)` meets the hypotheses of one of the three
/// guarantees. The theorem is picked from the game class; `detail` lists
/// every violated condition.
pub fn check_validity(game: &GameClass, spec: &ControllerSpec) -> ValidityVerdict {
    let mut violations = Vec::new();
    let mut require = |ok: bool, what: String| {
        if !ok {
            violations.push(what);
        }
    };
    let theorem = match *game {
        GameClass::Coordination { alpha, beta, .. } => {
            let bound = beta / (alpha + beta);
            require(spec.family == Adaptation::Linear, format!("family is {}, need phi1", spec.family));
            require(
                spec.control_matrix == ControlMatrix::G1,
                format!("control matrix is {}, need G1 (0010)", spec.control_matrix),
            );
            require(spec.k > 0.0, format!("k={} must be > 0", spec.k));
            require(
                spec.h > 0.0 && spec.h < bound,
                format!("h={} must lie in (0, beta/(alpha+beta)) = (0, {bound})", spec.h),
            );
            Theorem::Thm1
        }
        GameClass::DominantAction1 { alpha, .. } => {
            require(spec.family == Adaptation::Power, format!("family is {}, need phi2", spec.family));
            require(
                spec.control_matrix == ControlMatrix::G2,
                format!("control matrix is {}, need G2 (0001)", spec.control_matrix),
            );
            require(spec.k > alpha, format!("k={} must exceed alpha={alpha}", spec.k));
            require(spec.h > 0.0, format!("h={} must be > 0", spec.h));
            Theorem::Thm2
        }
        GameClass::AntiCoordination { .. } => {
            require(spec.family == Adaptation::Power, format!("family is {}, need phi2", spec.family));
            require(
                spec.control_matrix == ControlMatrix::G2,
                format!("control matrix is {}, need G2 (0001)", spec.control_matrix),
            );
            require(spec.k > 0.0, format!("k={} must be > 0", spec.k));
            require(spec.h > 0.0, format!("h={} must be > 0", spec.h));
            Theorem::Thm3
        }
        GameClass::DominantAction2 { .. } | GameClass::Degenerate { .. } => {
            return ValidityVerdict {
                theorem: Theorem::NotApplicable,
                satisfied: false,
                detail: format!("no convergence guarantee covers a {} game", game.name()),
            };
        }
    };
    if spec.family != Adaptation::None {
        require(spec.g0 > 0.0, format!("g0={} must be > 0", spec.g0));
    }
    let satisfied = violations.is_empty();
    let detail = if satisfied {
        format!("{theorem:?} hypotheses hold")
    } else {
        violations.join("; ")
    };
    ValidityVerdict { theorem, satisfied, detail }
}
