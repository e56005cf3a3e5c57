//! Symmetric 2x2 matrix games: payoff representation, classification into
//! coordination / dominant-strategy / anti-coordination games, rewards and
//! the mixed Nash equilibrium.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Payoff matrix `[[a, b], [c, d]]`.
///
/// `a` is the payoff of action 1 against action 1, `b` of action 1 against
/// action 2, `c` of action 2 against action 1 and `d` of action 2 against 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffMatrix {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl PayoffMatrix {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let m = Self { a, b, c, d };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.a, self.b, self.c, self.d].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "payoff entries must be finite, got {self}"
            )))
        }
    }

    /// Entries in row-major order.
    pub fn entries(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    /// Coordination game with `a - c = alpha`, `d - b = beta`.
    pub fn coordination(alpha: f64, beta: f64) -> Self {
        Self { a: alpha, b: 0.0, c: 0.0, d: beta }
    }

    /// Dominant-strategy game where action 1 dominates: `a - c = alpha`, `b - d = beta`.
    pub fn dominant_action1(alpha: f64, beta: f64) -> Self {
        Self { a: alpha, b: beta, c: 0.0, d: 0.0 }
    }

    /// Dominant-strategy game where action 2 dominates: `d - b = alpha`, `c - a = beta`.
    pub fn dominant_action2(alpha: f64, beta: f64) -> Self {
        Self { a: 0.0, b: 0.0, c: beta, d: alpha }
    }

    /// Anti-coordination game with `c - a = alpha`, `b - d = beta`.
    pub fn anti_coordination(alpha: f64, beta: f64) -> Self {
        Self { a: 0.0, b: beta, c: alpha, d: 0.0 }
    }

    /// Adds `e1` to the first column and `e2` to the second.
    pub fn column_shifted(&self, e1: f64, e2: f64) -> Self {
        Self { a: self.a + e1, b: self.b + e2, c: self.c + e1, d: self.d + e2 }
    }

    /// Swaps the labels of the two actions (rows and columns).
    pub fn relabeled(&self) -> Self {
        Self { a: self.d, b: self.c, c: self.b, d: self.a }
    }
}

impl fmt::Display for PayoffMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{}, {}], [{}, {}]]", self.a, self.b, self.c, self.d)
    }
}

/// Which boundary of the game taxonomy a degenerate matrix sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Degeneracy {
    /// `a = c`
    ColumnOne,
    /// `d = b`
    ColumnTwo,
    /// both `a = c` and `d = b`
    Both,
}

impl fmt::Display for Degeneracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Degeneracy::ColumnOne => f.write_str("a=c"),
            Degeneracy::ColumnTwo => f.write_str("d=b"),
            Degeneracy::Both => f.write_str("a=c, d=b"),
        }
    }
}

/// Classification verdict together with the constants that parametrise each class.
///
/// `alpha` and `beta` are always the positive payoff gaps of the class:
///
/// | class              | alpha   | beta    |
/// |--------------------|---------|---------|
/// | coordination       | `a - c` | `d - b` |
/// | dominant action 1  | `a - c` | `b - d` |
/// | dominant action 2  | `d - b` | `c - a` |
/// | anti-coordination  | `c - a` | `b - d` |
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum GameClass {
    Coordination { alpha: f64, beta: f64, mixed_ne: f64 },
    DominantAction1 { alpha: f64, beta: f64 },
    DominantAction2 { alpha: f64, beta: f64 },
    AntiCoordination { alpha: f64, beta: f64, mixed_ne: f64 },
    Degenerate { on: Degeneracy },
}

impl GameClass {
    pub fn alpha(&self) -> Option<f64> {
        match *self {
            GameClass::Coordination { alpha, .. }
            | GameClass::DominantAction1 { alpha, .. }
            | GameClass::DominantAction2 { alpha, .. }
            | GameClass::AntiCoordination { alpha, .. } => Some(alpha),
            GameClass::Degenerate { .. } => None,
        }
    }

    pub fn beta(&self) -> Option<f64> {
        match *self {
            GameClass::Coordination { beta, .. }
            | GameClass::DominantAction1 { beta, .. }
            | GameClass::DominantAction2 { beta, .. }
            | GameClass::AntiCoordination { beta, .. } => Some(beta),
            GameClass::Degenerate { .. } => None,
        }
    }

    pub fn mixed_ne(&self) -> Option<f64> {
        match *self {
            GameClass::Coordination { mixed_ne, .. }
            | GameClass::AntiCoordination { mixed_ne, .. } => Some(mixed_ne),
            _ => None,
        }
    }

    /// Short lowercase name, e.g. `"coordination"`.
    pub fn name(&self) -> &'static str {
        match self {
            GameClass::Coordination { .. } => "coordination",
            GameClass::DominantAction1 { .. } | GameClass::DominantAction2 { .. } => {
                "dominant-strategy"
            }
            GameClass::AntiCoordination { .. } => "anti-coordination",
            GameClass::Degenerate { .. } => "degenerate",
        }
    }

    /// Nash equilibria in pure strategies, as action profiles.
    pub fn pure_nash_equilibria(&self) -> Vec<(u8, u8)> {
        match self {
            GameClass::Coordination { .. } => vec![(1, 1), (2, 2)],
            GameClass::DominantAction1 { .. } => vec![(1, 1)],
            GameClass::DominantAction2 { .. } => vec![(2, 2)],
            GameClass::AntiCoordination { .. } => vec![(1, 2), (2, 1)],
            GameClass::Degenerate { .. } => Vec::new(),
        }
    }

    pub fn same_variant(&self, other: &GameClass) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }
}

impl fmt::Display for GameClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ne_list = |f: &mut fmt::Formatter<'_>, ne: &[(u8, u8)]| {
            let parts: Vec<String> = ne.iter().map(|(i, j)| format!("({i},{j})")).collect();
            f.write_str(&parts.join(","))
        };
        match *self {
            GameClass::Coordination { alpha, beta, mixed_ne }
            | GameClass::AntiCoordination { alpha, beta, mixed_ne } => {
                write!(
                    f,
                    "{}, alpha={alpha}, beta={beta}, x*={mixed_ne}, pure NE ",
                    self.name()
                )?;
                ne_list(f, &self.pure_nash_equilibria())
            }
            GameClass::DominantAction1 { alpha, beta }
            | GameClass::DominantAction2 { alpha, beta } => {
                write!(f, "dominant-strategy, alpha={alpha}, beta={beta}, unique NE ")?;
                ne_list(f, &self.pure_nash_equilibria())
            }
            GameClass::Degenerate { on } => write!(f, "degenerate ({on})"),
        }
    }
}

/// Classifies a game by the signs of `a - c` and `d - b`.
///
/// Comparisons are exact: a matrix with `a == c` or `d == b` is reported as
/// [`GameClass::Degenerate`].
pub fn classify(m: &PayoffMatrix) -> GameClass {
    let PayoffMatrix { a, b, c, d } = *m;
    let degenerate = match (a == c, d == b) {
        (true, true) => Some(Degeneracy::Both),
        (true, false) => Some(Degeneracy::ColumnOne),
        (false, true) => Some(Degeneracy::ColumnTwo),
        (false, false) => None,
    };
    if let Some(on) = degenerate {
        return GameClass::Degenerate { on };
    }
    match (d > b, a > c) {
        (true, true) => {
            let (alpha, beta) = (a - c, d - b);
            GameClass::Coordination { alpha, beta, mixed_ne: beta / (alpha + beta) }
        }
        (false, true) => GameClass::DominantAction1 { alpha: a - c, beta: b - d },
        (true, false) => GameClass::DominantAction2 { alpha: d - b, beta: c - a },
        (false, false) => {
            let (alpha, beta) = (c - a, b - d);
            GameClass::AntiCoordination { alpha, beta, mixed_ne: beta / (alpha + beta) }
        }
    }
}

/// Mixed Nash equilibrium `x* = (d - b) / (a + d - b - c)`.
///
/// Only defined for coordination and anti-coordination games.
pub fn mixed_ne(m: &PayoffMatrix) -> Result<f64> {
    m.validate()?;
    classify(m).mixed_ne().ok_or_else(|| {
        Error::InvalidInput(format!(
            "mixed NE is only defined for coordination and anti-coordination games, {m} is {}",
            classify(m).name()
        ))
    })
}

/// Rewards `(r1, r2) = A (x, 1 - x)` of the two actions in a population with
/// a fraction `x` of action-1 players.
pub fn reward_vector(x: f64, m: &PayoffMatrix) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidInput(format!("x must lie in [0,1], got {x}")));
    }
    Ok(rewards_unchecked(x, m))
}

#[inline]
pub(crate) fn rewards_unchecked(x: f64, m: &PayoffMatrix) -> (f64, f64) {
    (m.a * x + m.b * (1.0 - x), m.c * x + m.d * (1.0 - x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pm(a: f64, b: f64, c: f64, d: f64) -> PayoffMatrix {
        PayoffMatrix::new(a, b, c, d).unwrap()
    }

    /// Root of r1 - r2 on (0,1) by bisection.
    fn bisect_equal_rewards(m: &PayoffMatrix) -> f64 {
        let diff = |x: f64| {
            let (r1, r2) = rewards_unchecked(x, m);
            r1 - r2
        };
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        assert!(diff(lo) * diff(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if diff(lo) * diff(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn classify_examples() {
        let g = classify(&pm(1.0, 0.0, 0.0, 1.0));
        assert_eq!(g, GameClass::Coordination { alpha: 1.0, beta: 1.0, mixed_ne: 0.5 });

        let g = classify(&pm(1.0, 3.0, 0.0, 2.0));
        assert_eq!(g, GameClass::DominantAction1 { alpha: 1.0, beta: 1.0 });

        let g = classify(&pm(0.0, 1.0, 1.0, 0.0));
        assert_eq!(g.mixed_ne(), Some(0.5));
        assert!(matches!(g, GameClass::AntiCoordination { .. }));

        let g = classify(&pm(1.0, 2.0, 1.0, 3.0));
        assert_eq!(g, GameClass::Degenerate { on: Degeneracy::ColumnOne });
    }

    #[test]
    fn classify_dominant_action2_and_boundaries() {
        assert!(matches!(
            classify(&pm(0.0, 0.0, 1.0, 1.0)),
            GameClass::DominantAction2 { alpha, beta } if alpha == 1.0 && beta == 1.0
        ));
        assert_eq!(
            classify(&pm(2.0, 1.0, 0.0, 1.0)),
            GameClass::Degenerate { on: Degeneracy::ColumnTwo }
        );
        assert_eq!(
            classify(&pm(1.0, 1.0, 1.0, 1.0)),
            GameClass::Degenerate { on: Degeneracy::Both }
        );
    }

    #[test]
    fn mixed_ne_matches_bisection_oracle() {
        let m = pm(3.0, 0.0, 0.0, 1.0);
        let oracle = bisect_equal_rewards(&m);
        assert_relative_eq!(oracle, 0.25, epsilon = 1e-14);
        assert_relative_eq!(mixed_ne(&m).unwrap(), oracle, epsilon = 1e-14);

        let m = pm(0.0, 2.0, 1.0, 0.0);
        let oracle = bisect_equal_rewards(&m);
        assert_relative_eq!(oracle, 2.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(mixed_ne(&m).unwrap(), oracle, epsilon = 1e-14);

        assert_eq!(mixed_ne(&pm(1.0, 0.0, 0.0, 1.0)).unwrap(), 0.5);
    }

    #[test]
    fn mixed_ne_rejects_other_classes() {
        assert!(mixed_ne(&pm(1.0, 3.0, 0.0, 2.0)).is_err());
        assert!(mixed_ne(&pm(0.0, 0.0, 1.0, 1.0)).is_err());
        assert!(mixed_ne(&pm(1.0, 2.0, 1.0, 3.0)).is_err());
    }

    #[test]
    fn reward_vector_examples() {
        let pd = pm(1.0, 3.0, 0.0, 2.0);
        assert_eq!(reward_vector(1.0, &pd).unwrap(), (1.0, 0.0));
        assert_eq!(reward_vector(0.0, &pd).unwrap(), (3.0, 2.0));
        assert_eq!(reward_vector(0.5, &pm(0.0, 1.0, 1.0, 0.0)).unwrap(), (0.5, 0.5));
        assert!(reward_vector(1.5, &pd).is_err());
        assert!(reward_vector(-0.1, &pd).is_err());
        assert!(reward_vector(f64::NAN, &pd).is_err());
    }

    #[test]
    fn rejects_non_finite_entries() {
        assert!(PayoffMatrix::new(f64::NAN, 0.0, 0.0, 1.0).is_err());
        assert!(PayoffMatrix::new(0.0, f64::INFINITY, 0.0, 1.0).is_err());
    }

    #[test]
    fn display_strings() {
        assert_eq!(
            classify(&pm(1.0, 0.0, 0.0, 1.0)).to_string(),
            "coordination, alpha=1, beta=1, x*=0.5, pure NE (1,1),(2,2)"
        );
        assert_eq!(
            classify(&pm(1.0, 3.0, 0.0, 2.0)).to_string(),
            "dominant-strategy, alpha=1, beta=1, unique NE (1,1)"
        );
        assert_eq!(classify(&pm(1.0, 2.0, 1.0, 3.0)).to_string(), "degenerate (a=c)");
    }

    #[test]
    fn constructors_hit_their_class() {
        assert!(matches!(
            classify(&PayoffMatrix::coordination(2.0, 0.5)),
            GameClass::Coordination { alpha, beta, .. } if alpha == 2.0 && beta == 0.5
        ));
        assert!(matches!(
            classify(&PayoffMatrix::dominant_action1(2.0, 0.5)),
            GameClass::DominantAction1 { alpha, beta } if alpha == 2.0 && beta == 0.5
        ));
        assert!(matches!(
            classify(&PayoffMatrix::dominant_action2(2.0, 0.5)),
            GameClass::DominantAction2 { alpha, beta } if alpha == 2.0 && beta == 0.5
        ));
        assert!(matches!(
            classify(&PayoffMatrix::anti_coordination(2.0, 0.5)),
            GameClass::AntiCoordination { alpha, beta, .. } if alpha == 2.0 && beta == 0.5
        ));
    }

    fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
        match (a, b) {
            (Some(a), Some(b)) => (a - b).abs() <= tol * (1.0 + a.abs()),
            (None, None) => true,
            _ => false,
        }
    }

    proptest! {
        #[test]
        fn column_shift_invariance(
            a in -5i32..5, b in -5i32..5, c in -5i32..5, d in -5i32..5,
            e1 in -10i32..10, e2 in -10i32..10, x in 0.0f64..=1.0,
        ) {
            // Integer entries keep a=c and d=b ties exact after the shift.
            let m = pm(a.into(), b.into(), c.into(), d.into());
            let shifted = m.column_shifted(e1.into(), e2.into());
            let (g0, g1) = (classify(&m), classify(&shifted));
            prop_assert!(g0.same_variant(&g1));
            prop_assert!(close(g0.alpha(), g1.alpha(), 1e-12));
            prop_assert!(close(g0.beta(), g1.beta(), 1e-12));
            prop_assert!(close(g0.mixed_ne(), g1.mixed_ne(), 1e-12));
            let (r1, r2) = rewards_unchecked(x, &m);
            let (s1, s2) = rewards_unchecked(x, &shifted);
            prop_assert!(((r1 - r2) - (s1 - s2)).abs() <= 1e-12);
        }

        #[test]
        fn relabel_swaps_roles(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0, d in -5.0f64..5.0) {
            let m = pm(a, b, c, d);
            let (g0, g1) = (classify(&m), classify(&m.relabeled()));
            match g0 {
                GameClass::Coordination { .. } | GameClass::AntiCoordination { .. } => {
                    prop_assert!(g0.same_variant(&g1));
                    prop_assert!(close(g0.alpha(), g1.beta(), 1e-12));
                    prop_assert!(close(g0.beta(), g1.alpha(), 1e-12));
                    prop_assert!(close(g0.mixed_ne().map(|x| 1.0 - x), g1.mixed_ne(), 1e-12));
                }
                GameClass::DominantAction1 { .. } => {
                    prop_assert!(matches!(g1, GameClass::DominantAction2 { .. }), "{g0} relabeled to {g1}");
                }
                GameClass::DominantAction2 { .. } => {
                    prop_assert!(matches!(g1, GameClass::DominantAction1 { .. }), "{g0} relabeled to {g1}");
                }
                GameClass::Degenerate { .. } => {
                    prop_assert!(matches!(g1, GameClass::Degenerate { .. }), "{g0} relabeled to {g1}");
                }
            }
        }

        #[test]
        fn rewards_equal_at_mixed_ne(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0, d in -5.0f64..5.0) {
            let m = pm(a, b, c, d);
            if let Ok(x) = mixed_ne(&m) {
                let (r1, r2) = reward_vector(x, &m).unwrap();
                prop_assert!((r1 - r2).abs() <= 1e-12 * (1.0 + r1.abs()));
            }
        }
    }
}
