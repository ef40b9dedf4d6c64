//! Problem data `(ε, ν, q, f)` for `-ε Δu + q u = f(x, u)` and the built-in
//! catalog.

use std::fmt;
use std::sync::Arc;

use crate::error::{LmmgError, Result};
use crate::mesh::{Point, Rectangle};

/// A nonlinearity `f(x, t)` together with `∂f/∂t` and `F(x, t) = ∫₀ᵗ f(x, s) ds`.
pub trait Nonlinearity: Send + Sync + fmt::Debug {
    fn value(&self, x: Point, t: f64) -> f64;
    fn derivative(&self, x: Point, t: f64) -> f64;
    fn antiderivative(&self, x: Point, t: f64) -> f64;
    /// Quadrature exactness needed for `∫ f(x, u) v` with P1 `u`, `v`.
    fn quadrature_degree(&self) -> usize;
}

/// `f(x, t) = |x|^k t³`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedCubic {
    pub exponent: u32,
}

impl WeightedCubic {
    pub fn cubic() -> Self {
        WeightedCubic { exponent: 0 }
    }

    pub fn henon() -> Self {
        WeightedCubic { exponent: 9 }
    }

    #[inline]
    pub fn weight(&self, x: Point) -> f64 {
        let r2 = x[0] * x[0] + x[1] * x[1];
        match self.exponent {
            0 => 1.0,
            k if k % 2 == 0 => r2.powi(k as i32 / 2),
            k => r2.powi(k as i32 / 2) * r2.sqrt(),
        }
    }
}

impl Nonlinearity for WeightedCubic {
    #[inline]
    fn value(&self, x: Point, t: f64) -> f64 {
        self.weight(x) * t * t * t
    }

    #[inline]
    fn derivative(&self, x: Point, t: f64) -> f64 {
        3.0 * self.weight(x) * t * t
    }

    #[inline]
    fn antiderivative(&self, x: Point, t: f64) -> f64 {
        0.25 * self.weight(x) * t * t * t * t
    }

    fn quadrature_degree(&self) -> usize {
        // u³ v is degree 4; the non-polynomial Hénon weight gets headroom
        if self.exponent == 0 {
            6
        } else {
            10
        }
    }
}

type ScalarField = Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>;

/// User-supplied nonlinearity from closures.
#[derive(Clone)]
pub struct ClosureNonlinearity {
    pub f: ScalarField,
    pub f_t: ScalarField,
    pub antiderivative: ScalarField,
    pub degree: usize,
}

impl fmt::Debug for ClosureNonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClosureNonlinearity").field("degree", &self.degree).finish_non_exhaustive()
    }
}

impl Nonlinearity for ClosureNonlinearity {
    fn value(&self, x: Point, t: f64) -> f64 {
        (self.f)(x, t)
    }

    fn derivative(&self, x: Point, t: f64) -> f64 {
        (self.f_t)(x, t)
    }

    fn antiderivative(&self, x: Point, t: f64) -> f64 {
        (self.antiderivative)(x, t)
    }

    fn quadrature_degree(&self) -> usize {
        self.degree
    }
}

/// The reaction coefficient `q`.
#[derive(Clone)]
pub enum Reaction {
    Constant(f64),
    Field(Arc<dyn Fn(Point) -> f64 + Send + Sync>),
}

impl Reaction {
    #[inline]
    pub fn at(&self, x: Point) -> f64 {
        match self {
            Reaction::Constant(c) => *c,
            Reaction::Field(q) => q(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Reaction::Constant(c) if *c == 0.0)
    }
}

impl fmt::Debug for Reaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reaction::Constant(c) => write!(f, "Constant({c})"),
            Reaction::Field(_) => f.write_str("Field(..)"),
        }
    }
}

/// `-ε Δu + q u = f(x, u)` on a rectangle with `u = 0` on the boundary.
///
/// `ν` is the reaction floor entering the ε-inner product
/// `(u, v)_ε = ε ∫∇u·∇v + ν ∫uv`; the bound `ν ≤ q ≤ c_ν ν` is expected when
/// `ν > 0`.
#[derive(Debug, Clone)]
pub struct SemilinearProblem {
    pub name: String,
    pub epsilon: f64,
    pub nu: f64,
    pub c_nu: f64,
    pub reaction: Reaction,
    pub nonlinearity: Arc<dyn Nonlinearity>,
    pub domain: Rectangle,
    pub quad_degree: usize,
}

impl SemilinearProblem {
    pub fn new<N: Nonlinearity + 'static>(
        name: impl Into<String>,
        epsilon: f64,
        reaction: f64,
        nonlinearity: N,
        domain: Rectangle,
    ) -> Result<Self> {
        let degree = nonlinearity.quadrature_degree();
        let p = SemilinearProblem {
            name: name.into(),
            epsilon,
            nu: 0.0,
            c_nu: 0.0,
            reaction: Reaction::Constant(0.0),
            nonlinearity: Arc::new(nonlinearity),
            domain,
            quad_degree: degree,
        };
        p.with_epsilon(epsilon)?.with_reaction(reaction)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(LmmgError::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    /// Constant reaction `q ≡ c`; sets `ν = c`, `c_ν = 1`.
    pub fn with_reaction(mut self, c: f64) -> Result<Self> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(LmmgError::InvalidInput(format!("reaction must be nonnegative, got {c}")));
        }
        self.reaction = Reaction::Constant(c);
        self.nu = c;
        self.c_nu = if c > 0.0 { 1.0 } else { 0.0 };
        Ok(self)
    }

    pub fn with_domain(mut self, domain: Rectangle) -> Self {
        self.domain = domain;
        self
    }

    pub fn with_quad_degree(mut self, degree: usize) -> Self {
        self.quad_degree = degree;
        self
    }

    #[inline]
    pub fn f(&self, x: Point, t: f64) -> f64 {
        self.nonlinearity.value(x, t)
    }

    #[inline]
    pub fn f_t(&self, x: Point, t: f64) -> f64 {
        self.nonlinearity.derivative(x, t)
    }

    #[inline]
    pub fn big_f(&self, x: Point, t: f64) -> f64 {
        self.nonlinearity.antiderivative(x, t)
    }

    #[inline]
    pub fn q(&self, x: Point) -> f64 {
        self.reaction.at(x)
    }

    /// Samples the structural hypotheses on a grid and returns (and logs) a
    /// message per violated one. These are analytic assumptions, so nothing
    /// here aborts.
    pub fn check_hypotheses(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        let lo = self.domain.lo;
        let (w, h) = (self.domain.width(), self.domain.height());
        let samples: Vec<Point> = (0..25)
            .map(|k| {
                let (i, j) = ((k / 5) as f64, (k % 5) as f64);
                [lo[0] + (i + 0.5) / 5.0 * w, lo[1] + (j + 0.5) / 5.0 * h]
            })
            .collect();
        let ts: Vec<f64> = (-12..=12).map(|k| 10f64.powf(k as f64 / 4.0)).collect();

        for &x in &samples {
            if self.f(x, 0.0).abs() > 1e-14 {
                warnings.push(format!("f({x:?}, 0) = {} is not zero", self.f(x, 0.0)));
                break;
            }
        }
        'mono: for &x in &samples {
            for sign in [-1.0, 1.0] {
                let mut prev = f64::NEG_INFINITY;
                let mut grid: Vec<f64> = ts.iter().map(|t| sign * t).collect();
                grid.sort_by(f64::total_cmp);
                for t in grid {
                    let r = self.f(x, t) / t.abs();
                    if r < prev - 1e-12 * prev.abs() {
                        warnings.push(format!("f(x, t)/|t| is not increasing at x = {x:?}, t = {t}"));
                        break 'mono;
                    }
                    prev = r;
                }
            }
        }
        'fd: for &x in &samples {
            for &t in &[-2.0, -0.5, 0.3, 1.0, 3.0] {
                let h = 1e-5 * (1.0 + f64::abs(t));
                let fd = (self.big_f(x, t + h) - self.big_f(x, t - h)) / (2.0 * h);
                let f = self.f(x, t);
                if (fd - f).abs() > 1e-5 * (1.0 + f.abs()) {
                    warnings.push(format!("F is not an antiderivative of f at x = {x:?}, t = {t}"));
                    break 'fd;
                }
                let fd_t = (self.f(x, t + h) - self.f(x, t - h)) / (2.0 * h);
                let ft = self.f_t(x, t);
                if (fd_t - ft).abs() > 1e-5 * (1.0 + ft.abs()) {
                    warnings.push(format!("f_t is not the derivative of f at x = {x:?}, t = {t}"));
                    break 'fd;
                }
            }
        }
        if self.nu > 0.0 {
            for &x in &samples {
                let q = self.q(x);
                if q < self.nu || q > self.c_nu * self.nu {
                    warnings.push(format!(
                        "q({x:?}) = {q} outside [nu, c_nu nu] = [{}, {}]",
                        self.nu,
                        self.c_nu * self.nu
                    ));
                    break;
                }
            }
        }
        for w in &warnings {
            log::warn!("{}: {w}", self.name);
        }
        warnings
    }
}

pub const BUILTIN_NAMES: [&str; 4] = ["lane_emden", "henon", "henon_perturbed", "lane_emden_perturbed"];

/// Looks up a built-in problem by name.
pub fn builtin_problem(name: &str) -> Result<SemilinearProblem> {
    let unit = Rectangle::unit();
    match name {
        "lane_emden" => SemilinearProblem::new(name, 1.0, 0.0, WeightedCubic::cubic(), unit),
        "henon" => {
            SemilinearProblem::new(name, 1.0, 0.0, WeightedCubic::henon(), Rectangle::symmetric())
        }
        "henon_perturbed" => SemilinearProblem::new(name, 1e-3, 1.0, WeightedCubic::henon(), unit),
        "lane_emden_perturbed" => {
            SemilinearProblem::new(name, 1e-8, 1.0, WeightedCubic::cubic(), unit)
        }
        other => Err(LmmgError::UnknownProblem(other.to_string())),
    }
}

pub fn builtin_problems() -> Vec<SemilinearProblem> {
    BUILTIN_NAMES.iter().map(|n| builtin_problem(n).expect("catalog entries are valid")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_values() {
        let le = builtin_problem("lane_emden").unwrap();
        assert_eq!(le.f([0.3, 0.3], 2.0), 8.0);
        assert_eq!(le.big_f([0.3, 0.3], 2.0), 4.0);
        assert_eq!((le.epsilon, le.nu), (1.0, 0.0));

        let h = builtin_problem("henon").unwrap();
        let expected = 2f64.sqrt().powi(9);
        assert!((h.f([1.0, 1.0], 1.0) - expected).abs() < 1e-12);
        assert!((expected - 22.627).abs() < 1e-3);
        assert_eq!(h.domain, Rectangle::symmetric());

        let lp = builtin_problem("lane_emden_perturbed").unwrap();
        assert_eq!(lp.epsilon, 1e-8);
        assert_eq!((lp.nu, lp.q([0.5, 0.5])), (1.0, 1.0));

        let hp = builtin_problem("henon_perturbed").unwrap();
        assert_eq!((hp.epsilon, hp.nu), (1e-3, 1.0));
        assert_eq!(hp.quad_degree, 10);
    }

    #[test]
    fn unknown_name() {
        assert_eq!(
            builtin_problem("allen_cahn").unwrap_err(),
            LmmgError::UnknownProblem("allen_cahn".into())
        );
    }

    #[test]
    fn builtins_satisfy_hypotheses() {
        for p in builtin_problems() {
            assert!(p.check_hypotheses().is_empty(), "{}", p.name);
        }
    }

    #[test]
    fn bad_nonlinearity_is_reported() {
        let g = ClosureNonlinearity {
            f: Arc::new(|_, t| 1.0 + t),
            f_t: Arc::new(|_, _| 1.0),
            antiderivative: Arc::new(|_, t| t * t),
            degree: 4,
        };
        let p = SemilinearProblem::new("bad", 1.0, 0.0, g, Rectangle::unit()).unwrap();
        let w = p.check_hypotheses();
        assert!(w.iter().any(|m| m.contains("not zero")));
        assert!(w.iter().any(|m| m.contains("antiderivative")));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(builtin_problem("lane_emden").unwrap().with_epsilon(0.0).is_err());
        assert!(builtin_problem("lane_emden").unwrap().with_reaction(-1.0).is_err());
    }
}
