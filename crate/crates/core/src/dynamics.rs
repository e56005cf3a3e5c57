//! The controlled planar system
//!
//! ```text
//! x' = x (1 - x) [ (a + d - b - c) x + b - d + (G11 - G21) g x + (G12 - G22) g (1 - x) ]
//! g' = phi(x) g
//! ```
//!
//! on the domain `[0,1] x [0,inf)`, its Jacobian, and the equilibria with
//! their linear stability.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::controller::ControllerSpec;
use crate::error::{Error, Result};
use crate::game::{classify, GameClass, PayoffMatrix};

/// `|Re(lambda)|` below this is treated as zero.
pub const HYPERBOLICITY_TOL: f64 = 1e-9;

/// Population share `x` of action 1 and controller gain `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub x: f64,
    pub g: f64,
}

impl SystemState {
    pub fn new(x: f64, g: f64) -> Self {
        Self { x, g }
    }

    pub fn in_domain(&self) -> bool {
        (0.0..=1.0).contains(&self.x) && self.g >= 0.0 && self.g.is_finite()
    }

    pub fn check_domain(&self) -> Result<()> {
        if self.in_domain() {
            Ok(())
        } else {
            Err(Error::OutsideDomain { x: self.x, g: self.g })
        }
    }
}

impl fmt::Display for SystemState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(x={}, g={})", self.x, self.g)
    }
}

/// Nominal game plus adaptive-gain controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlledSystem {
    nominal: PayoffMatrix,
    spec: ControllerSpec,
    class: GameClass,
}

impl ControlledSystem {
    pub fn new(nominal: PayoffMatrix, spec: ControllerSpec) -> Result<Self> {
        nominal.validate()?;
        spec.validate()?;
        Ok(Self { nominal, spec, class: classify(&nominal) })
    }

    /// The replicator equation without control.
    pub fn uncontrolled(nominal: PayoffMatrix) -> Result<Self> {
        Self::new(nominal, ControllerSpec::uncontrolled())
    }

    pub fn nominal(&self) -> &PayoffMatrix {
        &self.nominal
    }

    pub fn spec(&self) -> &ControllerSpec {
        &self.spec
    }

    pub fn class(&self) -> &GameClass {
        &self.class
    }

    pub fn initial_state(&self, x0: f64) -> SystemState {
        SystemState::new(x0, self.spec.g0)
    }

    /// `(s, b - d, G11 - G21, G12 - G22)` with `s = a + d - b - c`.
    #[inline]
    fn coefficients(&self) -> (f64, f64, f64, f64) {
        let PayoffMatrix { a, b, c, d } = self.nominal;
        let [g11, g12, g21, g22] = self.spec.control_matrix.entries();
        (a + d - b - c, b - d, g11 - g21, g12 - g22)
    }

    /// Reward difference `r1 - r2` under the effective payoff at `(x, g)`.
    #[inline]
    pub(crate) fn advantage(&self, x: f64, g: f64) -> f64 {
        let (s, bd, u, w) = self.coefficients();
        s * x + bd + u * g * x + w * g * (1.0 - x)
    }

    /// Field evaluation without domain checks. `phi` is evaluated at `x`
    /// clamped to `[0,1]` so that Runge-Kutta stages grazing the boundary
    /// stay well defined.
    #[inline]
    pub(crate) fn field(&self, x: f64, g: f64) -> (f64, f64) {
        let dx = x * (1.0 - x) * self.advantage(x, g);
        let dg = self.spec.phi_unchecked(x.clamp(0.0, 1.0)) * g;
        (dx, dg)
    }

    pub fn vector_field(&self, s: SystemState) -> Result<(f64, f64)> {
        s.check_domain()?;
        Ok(self.field(s.x, s.g))
    }

    /// Analytic Jacobian `[[dx'/dx, dx'/dg], [dg'/dx, dg'/dg]]`.
    pub fn jacobian(&self, s: SystemState) -> Result<[[f64; 2]; 2]> {
        s.check_domain()?;
        let dphi = self.spec.phi_derivative(s.x).ok_or(Error::NotDifferentiable {
            x: s.x,
            reason: "x^h with h < 1 has no derivative at x = 0",
        })?;
        let (s_coef, _, u, w) = self.coefficients();
        let SystemState { x, g } = s;
        let p = self.advantage(x, g);
        let dp_dx = s_coef + (u - w) * g;
        let dp_dg = u * x + w * (1.0 - x);
        Ok([
            [(1.0 - 2.0 * x) * p + x * (1.0 - x) * dp_dx, x * (1.0 - x) * dp_dg],
            [dphi * g, self.spec.phi_unchecked(x)],
        ])
    }

    /// Upper bound on the modulus of the Jacobian's eigenvalues, used to pick
    /// stable Runge-Kutta substeps. Finite even where the Jacobian is not.
    pub(crate) fn stiffness_bound(&self, x: f64, g: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        if x == 0.0 || x == 1.0 {
            // x' vanishes identically on the boundary lines.
            return self.spec.phi_unchecked(x).abs();
        }
        let (s_coef, _, u, w) = self.coefficients();
        let p = self.advantage(x, g);
        // Triangle bound on dx'/dx = (1-2x) p + x(1-x) dp/dx. The derivative
        // itself can vanish mid-switch while the flow is still fast.
        let fxx = p.abs() + x * (1.0 - x) * (s_coef + (u - w) * g).abs();
        let phi = self.spec.phi_unchecked(x);
        // The product of the off-diagonal terms stays finite as x -> 0 even
        // when dphi/dx blows up, since dx'/dg carries a factor x.
        let coupling = match self.spec.phi_derivative(x) {
            Some(dphi) => (x * (1.0 - x) * (u * x + w * (1.0 - x)) * dphi * g).abs(),
            None => 0.0,
        };
        fxx.abs().max(phi.abs()) + coupling.sqrt()
    }

    /// Equilibria of the field on the domain.
    ///
    /// Enumerates the `g = 0` slice (roots of the cubic `x (1 - x) (s x + b - d)`)
    /// and, for `phi1`, the interior point on the line `x = h`. Sets where the
    /// field vanishes for every gain are reported as [`EquilibriumSet::GainRay`].
    pub fn find_equilibria(&self) -> Vec<EquilibriumReport> {
        let (s, bd, u, w) = self.coefficients();
        let mut out = Vec::new();
        let control_term = |x: f64| u * x + w * (1.0 - x);

        // x = 0 and x = 1 are invariant for every g.
        for x in [0.0, 1.0] {
            let set = if self.spec.phi_unchecked(x) == 0.0 {
                EquilibriumSet::GainRay
            } else {
                EquilibriumSet::Point
            };
            out.push(self.report(SystemState::new(x, 0.0), set));
        }

        // Interior roots of s x + (b - d) on g = 0.
        if s == 0.0 && bd == 0.0 {
            out.push(self.report(SystemState::new(0.5, 0.0), EquilibriumSet::StateSegment));
        } else if s != 0.0 {
            let x_star = -bd / s;
            if x_star > 0.0 && x_star < 1.0 {
                let set = if self.spec.phi_unchecked(x_star) == 0.0 && control_term(x_star) == 0.0 {
                    EquilibriumSet::GainRay
                } else {
                    EquilibriumSet::Point
                };
                out.push(self.report(SystemState::new(x_star, 0.0), set));
            }
        }

        // phi1 vanishes on x = h; the advantage is affine in g there.
        if self.spec.family == crate::controller::Adaptation::Linear {
            let h = self.spec.h;
            let denom = control_term(h);
            if h > 0.0 && h < 1.0 && denom != 0.0 {
                let g_star = -(s * h + bd) / denom;
                if g_star > 0.0 && g_star.is_finite() {
                    out.push(self.report(SystemState::new(h, g_star), EquilibriumSet::Point));
                }
            }
        }

        out.sort_by(|p, q| {
            p.point.x.total_cmp(&q.point.x).then(p.point.g.total_cmp(&q.point.g))
        });
        out
    }

    fn report(&self, point: SystemState, set: EquilibriumSet) -> EquilibriumReport {
        let eigenvalues = self.jacobian(point).ok().map(|j| eigenvalues_2x2(&j));
        let stability = eigenvalues.map_or(Stability::NonHyperbolic, |ev| Stability::classify(&ev));
        EquilibriumReport { point, eigenvalues, stability, set }
    }
}

/// Linear stability of an equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    StableNode,
    Saddle,
    Source,
    NonHyperbolic,
}

impl Stability {
    pub fn classify(eigenvalues: &[Complex64; 2]) -> Self {
        let (r0, r1) = (eigenvalues[0].re, eigenvalues[1].re);
        if r0.abs() < HYPERBOLICITY_TOL || r1.abs() < HYPERBOLICITY_TOL {
            Stability::NonHyperbolic
        } else if r0 < 0.0 && r1 < 0.0 {
            Stability::StableNode
        } else if r0 > 0.0 && r1 > 0.0 {
            Stability::Source
        } else {
            Stability::Saddle
        }
    }
}

/// Shape of the equilibrium set a report stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumSet {
    /// An isolated point.
    Point,
    /// `{x} x [0, inf)`: every gain is an equilibrium; the report is evaluated at `g = 0`.
    GainRay,
    /// `[0,1] x {0}`: the whole zero-gain slice; reported at `x = 0.5`.
    StateSegment,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumReport {
    pub point: SystemState,
    /// `None` where the Jacobian does not exist.
    pub eigenvalues: Option<[Complex64; 2]>,
    pub stability: Stability,
    pub set: EquilibriumSet,
}

/// Eigenvalues of a real 2x2 matrix, ordered by real part then imaginary part.
pub fn eigenvalues_2x2(m: &[[f64; 2]; 2]) -> [Complex64; 2] {
    let half_trace = 0.5 * (m[0][0] + m[1][1]);
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = Complex64::new(half_trace * half_trace - det, 0.0).sqrt();
    let mut ev = [half_trace - disc, half_trace + disc];
    ev.sort_by(|p, q| p.re.total_cmp(&q.re).then(p.im.total_cmp(&q.im)));
    ev
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::ControllerSpec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn controlled_coordination() -> ControlledSystem {
        ControlledSystem::new(
            PayoffMatrix::coordination(1.0, 1.0),
            ControllerSpec::coordination(1.0, 0.4, 0.2).unwrap(),
        )
        .unwrap()
    }

    fn pd_controlled(k: f64, h: f64) -> ControlledSystem {
        ControlledSystem::new(
            PayoffMatrix::new(1.0, 3.0, 0.0, 2.0).unwrap(),
            ControllerSpec::power(k, h, 0.2).unwrap(),
        )
        .unwrap()
    }

    /// x' = x(1-x)((alpha+beta)x - beta - g x), g' = k g (x - h)
    fn coordination_specialised(alpha: f64, beta: f64, k: f64, h: f64, x: f64, g: f64) -> (f64, f64) {
        (x * (1.0 - x) * ((alpha + beta) * x - beta - g * x), k * g * (x - h))
    }

    /// x' = x(1-x)(alpha x + (beta - g)(1-x)), g' = k g x^h
    fn dominant_specialised(alpha: f64, beta: f64, k: f64, h: f64, x: f64, g: f64) -> (f64, f64) {
        (x * (1.0 - x) * (alpha * x + (beta - g) * (1.0 - x)), k * g * x.powf(h))
    }

    /// x' = x(1-x)(beta - (alpha+beta)x - g(1-x)), g' = k g x^h
    fn anti_specialised(alpha: f64, beta: f64, k: f64, h: f64, x: f64, g: f64) -> (f64, f64) {
        (x * (1.0 - x) * (beta - (alpha + beta) * x - g * (1.0 - x)), k * g * x.powf(h))
    }

    #[test]
    fn field_example_hand_evaluated() {
        let (dx, dg) = controlled_coordination().vector_field(SystemState::new(0.6, 1.0)).unwrap();
        assert_relative_eq!(dx, -0.096, epsilon = 1e-15);
        assert_relative_eq!(dg, 0.2, epsilon = 1e-15);
    }

    #[test]
    fn boundaries_are_invariant() {
        for sys in [controlled_coordination(), pd_controlled(2.0, 1.0)] {
            for g in [0.0, 0.3, 7.0, 1e6] {
                assert_eq!(sys.vector_field(SystemState::new(0.0, g)).unwrap().0, 0.0);
                assert_eq!(sys.vector_field(SystemState::new(1.0, g)).unwrap().0, 0.0);
            }
        }
    }

    #[test]
    fn minority_mixed_ne_is_rest_point() {
        let sys = ControlledSystem::uncontrolled(PayoffMatrix::new(0.0, 1.0, 1.0, 0.0).unwrap()).unwrap();
        assert_eq!(sys.vector_field(SystemState::new(0.5, 0.0)).unwrap().0, 0.0);
    }

    #[test]
    fn rejects_states_outside_domain() {
        let sys = controlled_coordination();
        assert!(sys.vector_field(SystemState::new(1.1, 0.0)).is_err());
        assert!(sys.vector_field(SystemState::new(0.5, -1.0)).is_err());
        assert!(sys.jacobian(SystemState::new(-0.1, 0.0)).is_err());
    }

    #[test]
    fn specialisations_agree_on_grid() {
        let cases: Vec<(ControlledSystem, Box<dyn Fn(f64, f64) -> (f64, f64)>)> = vec![
            (controlled_coordination(), Box::new(|x, g| coordination_specialised(1.0, 1.0, 1.0, 0.4, x, g))),
            (
                ControlledSystem::new(
                    PayoffMatrix::coordination(2.0, 0.5),
                    ControllerSpec::coordination(0.7, 0.1, 0.2).unwrap(),
                )
                .unwrap(),
                Box::new(|x, g| coordination_specialised(2.0, 0.5, 0.7, 0.1, x, g)),
            ),
            (pd_controlled(2.0, 1.0), Box::new(|x, g| dominant_specialised(1.0, 1.0, 2.0, 1.0, x, g))),
            (
                ControlledSystem::new(
                    PayoffMatrix::dominant_action1(0.5, 2.0),
                    ControllerSpec::power(1.5, 0.5, 0.2).unwrap(),
                )
                .unwrap(),
                Box::new(|x, g| dominant_specialised(0.5, 2.0, 1.5, 0.5, x, g)),
            ),
            (
                ControlledSystem::new(
                    PayoffMatrix::new(0.0, 1.0, 1.0, 0.0).unwrap(),
                    ControllerSpec::power(0.1, 1.0, 0.1).unwrap(),
                )
                .unwrap(),
                Box::new(|x, g| anti_specialised(1.0, 1.0, 0.1, 1.0, x, g)),
            ),
        ];
        for (sys, special) in &cases {
            for i in 0..10 {
                for j in 0..10 {
                    let x = i as f64 / 9.0;
                    let g = j as f64 * 0.7;
                    let (dx, dg) = sys.vector_field(SystemState::new(x, g)).unwrap();
                    let (ex, eg) = special(x, g);
                    assert!((dx - ex).abs() <= 1e-12, "dx mismatch at ({x},{g}): {dx} vs {ex}");
                    assert!((dg - eg).abs() <= 1e-12, "dg mismatch at ({x},{g}): {dg} vs {eg}");
                }
            }
        }
    }

    #[test]
    fn jacobian_examples() {
        let sys = controlled_coordination();
        let j = sys.jacobian(SystemState::new(0.0, 0.0)).unwrap();
        assert_relative_eq!(j[0][0], -1.0, epsilon = 1e-15);
        assert_eq!(j[0][1], 0.0);
        assert_eq!(j[1][0], 0.0);
        assert_relative_eq!(j[1][1], -0.4, epsilon = 1e-15);

        let ev = eigenvalues_2x2(&sys.jacobian(SystemState::new(1.0, 0.0)).unwrap());
        assert_relative_eq!(ev[0].re, -1.0, epsilon = 1e-15);
        assert_relative_eq!(ev[1].re, 0.6, epsilon = 1e-15);
    }

    #[test]
    fn jacobian_rejects_non_differentiable_point() {
        let sys = pd_controlled(2.0, 0.5);
        assert!(matches!(
            sys.jacobian(SystemState::new(0.0, 1.0)),
            Err(Error::NotDifferentiable { .. })
        ));
        assert!(sys.jacobian(SystemState::new(0.1, 1.0)).is_ok());
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let systems = [controlled_coordination(), pd_controlled(2.0, 1.0), pd_controlled(1.3, 0.6), pd_controlled(3.0, 2.5)];
        let step = 1e-6;
        for n in 0..100 {
            let sys = &systems[n % systems.len()];
            let s = SystemState::new(rng.random_range(0.05..0.95), rng.random_range(0.05..5.0));
            let j = sys.jacobian(s).unwrap();
            let fd = |dx: f64, dg: f64| {
                let p = sys.field(s.x + dx, s.g + dg);
                let m = sys.field(s.x - dx, s.g - dg);
                ((p.0 - m.0) / (2.0 * step), (p.1 - m.1) / (2.0 * step))
            };
            let (fxx, fgx) = fd(step, 0.0);
            let (fxg, fgg) = fd(0.0, step);
            for (analytic, numeric) in [(j[0][0], fxx), (j[1][0], fgx), (j[0][1], fxg), (j[1][1], fgg)] {
                let scale = analytic.abs().max(1.0);
                assert!((analytic - numeric).abs() / scale < 1e-5, "{analytic} vs {numeric} at {s}");
            }
        }
    }

    #[test]
    fn coordination_controller_equilibria() {
        let eq = controlled_coordination().find_equilibria();
        let summary: Vec<(f64, f64, Stability)> = eq.iter().map(|e| (e.point.x, e.point.g, e.stability)).collect();
        assert_eq!(
            summary,
            vec![
                (0.0, 0.0, Stability::StableNode),
                (0.5, 0.0, Stability::Source),
                (1.0, 0.0, Stability::Saddle),
            ]
        );
        assert!(eq.iter().all(|e| e.set == EquilibriumSet::Point));
    }

    #[test]
    fn coordination_controller_equilibria_general_alpha_beta() {
        let sys = ControlledSystem::new(
            PayoffMatrix::coordination(2.0, 1.0),
            ControllerSpec::coordination(0.5, 0.2, 0.3).unwrap(),
        )
        .unwrap();
        let xs: Vec<f64> = sys.find_equilibria().iter().map(|e| e.point.x).collect();
        assert_eq!(xs.len(), 3);
        assert_eq!(xs[0], 0.0);
        assert_relative_eq!(xs[1], 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(xs[2], 1.0);
    }

    #[test]
    fn uncontrolled_coordination_equilibria() {
        let sys = ControlledSystem::uncontrolled(PayoffMatrix::coordination(1.0, 1.0)).unwrap();
        let eq = sys.find_equilibria();
        let xs: Vec<f64> = eq.iter().map(|e| e.point.x).collect();
        assert_eq!(xs, vec![0.0, 0.5, 1.0]);
        assert!(eq.iter().all(|e| e.set == EquilibriumSet::GainRay));
        // The g-direction is neutral without control.
        assert!(eq.iter().all(|e| e.stability == Stability::NonHyperbolic));
    }

    #[test]
    fn power_controller_has_gain_ray_at_zero() {
        let sys = pd_controlled(2.0, 1.0);
        for g in [0.0, 0.5, 3.0, 100.0] {
            assert_eq!(sys.vector_field(SystemState::new(0.0, g)).unwrap(), (0.0, 0.0));
        }
        let eq = sys.find_equilibria();
        let ray = eq.iter().find(|e| e.point.x == 0.0).unwrap();
        assert_eq!(ray.set, EquilibriumSet::GainRay);
        assert_eq!(ray.stability, Stability::NonHyperbolic);
        let one = eq.iter().find(|e| e.point.x == 1.0).unwrap();
        assert_eq!(one.set, EquilibriumSet::Point);
    }

    #[test]
    fn interior_phi1_equilibrium_when_it_exists() {
        // beta/(alpha+beta) = 0.5 < h: the line x = h carries a positive-gain rest point.
        let sys = ControlledSystem::new(
            PayoffMatrix::coordination(1.0, 1.0),
            ControllerSpec::coordination(1.0, 0.6, 0.2).unwrap(),
        )
        .unwrap();
        let interior: Vec<_> = sys.find_equilibria().into_iter().filter(|e| e.point.g > 0.0).collect();
        assert_eq!(interior.len(), 1);
        let p = interior[0].point;
        assert_eq!(p.x, 0.6);
        let (dx, dg) = sys.vector_field(p).unwrap();
        assert!(dx.abs() < 1e-14 && dg.abs() < 1e-14);
    }

    #[test]
    fn eigenvalues_complex_pair() {
        let ev = eigenvalues_2x2(&[[0.0, -1.0], [1.0, 0.0]]);
        assert_relative_eq!(ev[0].im, -1.0);
        assert_relative_eq!(ev[1].im, 1.0);
        assert_eq!(Stability::classify(&ev), Stability::NonHyperbolic);
        let ev = eigenvalues_2x2(&[[-1.0, -2.0], [2.0, -1.0]]);
        assert_eq!(Stability::classify(&ev), Stability::StableNode);
    }

    proptest! {
        #[test]
        fn boundaries_invariant_for_any_game(
            a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0, d in -5.0f64..5.0,
            power in any::<bool>(), k in 0.01f64..5.0, h in 0.1f64..2.0, g in 0.0f64..100.0,
        ) {
            let spec = if power {
                ControllerSpec::power(k, h, 1.0).unwrap()
            } else {
                ControllerSpec::coordination(k, h.min(0.99), 1.0).unwrap()
            };
            let sys = ControlledSystem::new(PayoffMatrix::new(a, b, c, d).unwrap(), spec).unwrap();
            prop_assert_eq!(sys.vector_field(SystemState::new(0.0, g)).unwrap().0, 0.0);
            prop_assert_eq!(sys.vector_field(SystemState::new(1.0, g)).unwrap().0, 0.0);
        }

        #[test]
        fn relabel_antisymmetry_uncontrolled(
            a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0, d in -5.0f64..5.0, x in 0.0f64..=1.0,
        ) {
            let m = PayoffMatrix::new(a, b, c, d).unwrap();
            let f = ControlledSystem::uncontrolled(m).unwrap();
            let ft = ControlledSystem::uncontrolled(m.relabeled()).unwrap();
            let lhs = ft.vector_field(SystemState::new(1.0 - x, 0.0)).unwrap().0;
            let rhs = f.vector_field(SystemState::new(x, 0.0)).unwrap().0;
            prop_assert!((lhs + rhs).abs() <= 1e-12);
        }

        #[test]
        fn power_gain_never_decreases(
            k in 0.01f64..10.0, h in 0.1f64..3.0, x in 0.0f64..=1.0, g in 0.0f64..100.0,
        ) {
            let sys = ControlledSystem::new(
                PayoffMatrix::new(1.0, 3.0, 0.0, 2.0).unwrap(),
                ControllerSpec::power(k, h, 1.0).unwrap(),
            ).unwrap();
            prop_assert!(sys.vector_field(SystemState::new(x, g)).unwrap().1 >= 0.0);
        }
    }
}
