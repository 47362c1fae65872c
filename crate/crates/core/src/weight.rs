//! Carleman weights `r = e^{s φ}`, `φ = e^{λ ϕ}`,
//! `ϕ = |x - x*|² - β |t - (T+1)|² + M`, and the admissibility regime.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Grid, Stagger};

/// Largest exponent whose `exp` is finite.
pub fn max_exponent() -> f64 {
    f64::MAX.ln()
}

/// `exp(e)`, refusing to saturate.
pub fn checked_exp(e: f64) -> Result<f64> {
    if e.is_nan() || e > max_exponent() {
        return Err(Error::WeightOverflow { exponent: e });
    }
    Ok(e.exp())
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightParams {
    pub s: f64,
    pub lambda: f64,
    pub beta: f64,
    pub xstar: f64,
    /// Additive constant in `ϕ`; unrelated to the mesh size.
    pub mconst: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub epsilon: f64,
    /// Constant in front of `ε dx²` in the time step condition.
    #[serde(default = "one")]
    pub dt_multiplier: f64,
}

impl WeightParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("s", self.s),
            ("lambda", self.lambda),
            ("beta", self.beta),
            ("xstar", self.xstar),
            ("mconst", self.mconst),
            ("T", self.t_final),
            ("epsilon", self.epsilon),
            ("dt_multiplier", self.dt_multiplier),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        // s = 0 is allowed: it switches the weight off, which tests rely on
        if self.s < 0.0 {
            return Err(Error::invalid("s", "must be non-negative"));
        }
        if self.lambda <= 0.0 {
            return Err(Error::invalid("lambda", "must be positive"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid("beta", "must lie in (0, 1)"));
        }
        if self.xstar <= 1.0 {
            return Err(Error::invalid("xstar", "must exceed 1"));
        }
        if self.t_final <= 0.0 {
            return Err(Error::invalid("T", "must be positive"));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::invalid("epsilon", "must lie in (0, 1]"));
        }
        if self.dt_multiplier <= 0.0 {
            return Err(Error::invalid("dt_multiplier", "must be positive"));
        }
        Ok(())
    }

    pub fn phi(&self, x: f64, t: f64) -> f64 {
        let a = x - self.xstar;
        let b = t - (self.t_final + 1.0);
        a * a - self.beta * b * b + self.mconst
    }

    pub fn dphi_dx(&self, x: f64) -> f64 {
        2.0 * (x - self.xstar)
    }

    pub fn dphi_dt(&self, t: f64) -> f64 {
        2.0 * self.beta * (self.t_final + 1.0 - t)
    }

    /// `l = s e^{λ ϕ}`.
    pub fn l(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.s * checked_exp(self.lambda * self.phi(x, t))?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightValues {
    pub phi: f64,
    pub varphi: f64,
    pub l: f64,
    pub r: f64,
    pub rho: f64,
    pub dphi_dx: f64,
    pub dphi_dt: f64,
}

impl WeightValues {
    /// `r² = e^{2l}`, computed without squaring a possibly huge `r`.
    pub fn r2(&self) -> Result<f64> {
        checked_exp(2.0 * self.l)
    }
}

pub fn eval_weights(params: &WeightParams, x: f64, t: f64) -> Result<WeightValues> {
    let phi = params.phi(x, t);
    let varphi = checked_exp(params.lambda * phi)?;
    let l = params.s * varphi;
    Ok(WeightValues {
        phi,
        varphi,
        l,
        r: checked_exp(l)?,
        rho: (-l).exp(),
        dphi_dx: params.dphi_dx(x),
        dphi_dt: params.dphi_dt(t),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Condition {
    pub pass: bool,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    /// `T - sup_{x in (0,1)} |x - x*| / β`; must be positive.
    pub t_condition: Condition,
    /// `s dx`, compared against `ε`.
    pub sdx_condition: Condition,
    /// `dt / (c ε dx²)`, compared against 1.
    pub dt_condition: Condition,
    pub phi_positive: bool,
    pub phi_min: f64,
    pub overall: bool,
}

pub fn check_admissible(params: &WeightParams, grid: &Grid) -> AdmissibilityReport {
    let sup = params.xstar.abs().max((1.0 - params.xstar).abs());
    let margin = params.t_final - sup / params.beta;
    let sdx = params.s * grid.dx();
    let dt_ratio = grid.dt() / (params.dt_multiplier * params.epsilon * grid.dx() * grid.dx());

    let mut phi_min = f64::INFINITY;
    for sx in [Stagger::Primal, Stagger::Dual] {
        let (jlo, jhi) = match sx {
            Stagger::Primal => (0, grid.m() as i64 + 1),
            Stagger::Dual => (0, grid.m() as i64),
        };
        for st in [Stagger::Primal, Stagger::Dual] {
            let (nlo, nhi) = match st {
                Stagger::Primal => (0, grid.n() as i64 + 1),
                Stagger::Dual => (0, grid.n() as i64),
            };
            for j in jlo..=jhi {
                let x = grid.space_coord(sx, j);
                for n in nlo..=nhi {
                    phi_min = phi_min.min(params.phi(x, grid.time_coord(st, n)));
                }
            }
        }
    }

    let t_condition = Condition {
        pass: margin > 0.0,
        value: margin,
    };
    let sdx_condition = Condition {
        pass: sdx <= params.epsilon,
        value: sdx,
    };
    let dt_condition = Condition {
        pass: dt_ratio <= 1.0,
        value: dt_ratio,
    };
    let phi_positive = phi_min > 0.0;
    AdmissibilityReport {
        t_condition,
        sdx_condition,
        dt_condition,
        phi_positive,
        phi_min,
        overall: t_condition.pass && sdx_condition.pass && dt_condition.pass && phi_positive,
    }
}

pub mod order {
    //! Empirical convergence orders of discrete weight derivatives.

    use std::fmt;
    use std::str::FromStr;

    use serde::Serialize;

    use super::WeightParams;
    use crate::error::{Error, Result};
    use crate::mesh::Grid;

    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
    pub enum AsymptoticExprId {
        /// `r A_x D_x ρ - r ∂_x ρ`
        RAxDxRho,
        /// `A_x D_x (r A_x D_x ρ) - ∂_x (r ∂_x ρ)`
        AxDxRAxDxRho,
        /// `A_t D_t (r A_x D_x ρ) - ∂_t (r ∂_x ρ)`
        AtDtRAxDxRho,
        /// `A_x D_x (r D_t ρ) - ∂_x (r ∂_t ρ)`
        AxDxRDtRho,
    }

    impl AsymptoticExprId {
        pub const ALL: [AsymptoticExprId; 4] = [
            AsymptoticExprId::RAxDxRho,
            AsymptoticExprId::AxDxRAxDxRho,
            AsymptoticExprId::AtDtRAxDxRho,
            AsymptoticExprId::AxDxRDtRho,
        ];

        pub fn label(&self) -> &'static str {
            match self {
                AsymptoticExprId::RAxDxRho => "r_axdx_rho",
                AsymptoticExprId::AxDxRAxDxRho => "axdx_r_axdx_rho",
                AsymptoticExprId::AtDtRAxDxRho => "atdt_r_axdx_rho",
                AsymptoticExprId::AxDxRDtRho => "axdx_r_dt_rho",
            }
        }
    }

    impl fmt::Display for AsymptoticExprId {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str(self.label())
        }
    }

    impl FromStr for AsymptoticExprId {
        type Err = Error;

        fn from_str(s: &str) -> Result<Self> {
            Self::ALL
                .into_iter()
                .find(|e| e.label() == s)
                .ok_or_else(|| Error::invalid("expr", format!("unknown expression `{s}`")))
        }
    }

    #[derive(Debug, Clone, PartialEq, Serialize)]
    pub struct OrderEstimate {
        pub expr: AsymptoticExprId,
        /// Least-squares slope of `ln residual` against `ln dx`.
        pub order: f64,
        /// RMS deviation of the log residuals from the fitted line.
        pub fit_residual: f64,
        pub dx: Vec<f64>,
        pub residuals: Vec<f64>,
    }

    /// Discrete and exact values of one expression at a point.
    struct Evaluator<'a> {
        p: &'a WeightParams,
        h: f64,
        k: f64,
    }

    impl Evaluator<'_> {
        // r(a) ρ(b) = e^{l(a) - l(b)}
        fn r_rho(&self, xa: f64, ta: f64, xb: f64, tb: f64) -> Result<f64> {
            super::checked_exp(self.p.l(xa, ta)? - self.p.l(xb, tb)?)
        }

        fn r_axdx_rho(&self, x: f64, t: f64) -> Result<f64> {
            let h = self.h;
            Ok((self.r_rho(x, t, x + h, t)? - self.r_rho(x, t, x - h, t)?) / (2.0 * h))
        }

        fn r_atdt_rho(&self, x: f64, t: f64) -> Result<f64> {
            let k = self.k;
            Ok((self.r_rho(x, t, x, t + k)? - self.r_rho(x, t, x, t - k)?) / (2.0 * k))
        }

        fn slv(&self, x: f64, t: f64) -> Result<f64> {
            let p = self.p;
            Ok(p.s * p.lambda * super::checked_exp(p.lambda * p.phi(x, t))?)
        }

        fn residual(&self, expr: AsymptoticExprId, x: f64, t: f64) -> Result<f64> {
            let (h, k, p) = (self.h, self.k, self.p);
            let gx = p.dphi_dx(x);
            let gt = p.dphi_dt(t);
            let slv = self.slv(x, t)?;
            Ok(match expr {
                AsymptoticExprId::RAxDxRho => self.r_axdx_rho(x, t)? + slv * gx,
                AsymptoticExprId::AxDxRAxDxRho => {
                    let d = (self.r_axdx_rho(x + h, t)? - self.r_axdx_rho(x - h, t)?) / (2.0 * h);
                    d + slv * (p.lambda * gx * gx + 2.0)
                }
                AsymptoticExprId::AtDtRAxDxRho => {
                    let d = (self.r_axdx_rho(x, t + k)? - self.r_axdx_rho(x, t - k)?) / (2.0 * k);
                    d + slv * p.lambda * gx * gt
                }
                AsymptoticExprId::AxDxRDtRho => {
                    let d = (self.r_atdt_rho(x + h, t)? - self.r_atdt_rho(x - h, t)?) / (2.0 * h);
                    d + slv * p.lambda * gx * gt
                }
            })
        }
    }

    /// Estimates the convergence order of `expr` over a refinement sequence.
    ///
    /// Residuals are max-abs over the interior nodes of the coarsest grid,
    /// evaluated with each level's steps.
    pub fn estimate_order(expr: AsymptoticExprId, params: &WeightParams, levels: &[Grid]) -> Result<OrderEstimate> {
        params.validate()?;
        if levels.len() < 3 {
            return Err(Error::invalid("levels", "need at least 3 refinement levels"));
        }
        if levels.windows(2).any(|w| w[1].dx() >= w[0].dx()) {
            return Err(Error::invalid("levels", "dx must decrease strictly"));
        }
        let coarse = levels[0];
        let scale = params.s * coarse.dx().max(coarse.dt());
        if scale > 1.0 {
            return Err(Error::invalid(
                "levels",
                format!("max(s dx, s dt) = {scale} exceeds 1 on the coarsest level"),
            ));
        }

        let mut residuals = Vec::with_capacity(levels.len());
        for g in levels {
            let ev = Evaluator {
                p: params,
                h: g.dx(),
                k: g.dt(),
            };
            let mut worst = 0.0f64;
            for j in 1..=coarse.m() as i64 {
                for n in 1..=coarse.n() as i64 {
                    let r = ev.residual(expr, coarse.x(j), coarse.t(n))?;
                    if !r.is_finite() {
                        return Err(Error::WeightOverflow {
                            exponent: f64::INFINITY,
                        });
                    }
                    worst = worst.max(r.abs());
                }
            }
            residuals.push(worst);
        }
        if residuals[0] < 1e3 * f64::EPSILON {
            return Err(Error::DegenerateOrder { residual: residuals[0] });
        }

        let dx: Vec<f64> = levels.iter().map(|g| g.dx()).collect();
        let xs: Vec<f64> = dx.iter().map(|h| h.ln()).collect();
        let ys: Vec<f64> = residuals.iter().map(|r| r.max(f64::MIN_POSITIVE).ln()).collect();
        let (slope, fit_residual) = linear_fit(&xs, &ys);
        Ok(OrderEstimate {
            expr,
            order: slope,
            fit_residual,
            dx,
            residuals,
        })
    }

    /// Least-squares slope and RMS misfit.
    fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let slope = sxy / sxx;
        let icpt = my - slope * mx;
        let ss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum();
        (slope, (ss / n).sqrt())
    }

}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> WeightParams {
        WeightParams {
            s: 1.0,
            lambda: 1.0,
            beta: 0.5,
            xstar: 1.5,
            mconst: 10.0,
            t_final: 2.0,
            epsilon: 0.5,
            dt_multiplier: 1.0,
        }
    }

    #[test]
    fn closed_form_values() {
        let p = WeightParams { s: 1e-3, ..params() };
        let w = eval_weights(&p, 0.0, 0.0).unwrap();
        assert_eq!(w.phi, 7.75);
        let w = eval_weights(&p, p.xstar, p.t_final + 1.0).unwrap();
        assert_eq!(w.phi, p.mconst);
        let w = eval_weights(&WeightParams { s: 0.0, ..p }, 0.3, 0.7).unwrap();
        assert_eq!((w.r, w.rho), (1.0, 1.0));
    }

    #[test]
    fn r_rho_reciprocal() {
        let p = WeightParams {
            mconst: 2.0,
            ..params()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let x = rng.random_range(0.0..=1.0);
            let t = rng.random_range(0.0..=p.t_final);
            let w = eval_weights(&p, x, t).unwrap();
            assert!((w.r * w.rho - 1.0).abs() <= 1e-14);
            assert!(w.dphi_dt > 0.0);
            assert!(w.dphi_dx < 0.0);
        }
    }

    #[test]
    fn overflow_is_an_error() {
        let p = WeightParams { s: 1e3, ..params() };
        match eval_weights(&p, 0.0, 0.0) {
            Err(Error::WeightOverflow { exponent }) => assert!(exponent > max_exponent()),
            other => panic!("unexpected {other:?}"),
        }
        let p = WeightParams { s: 0.2, ..params() };
        let w = eval_weights(&p, 0.0, 0.0).unwrap();
        assert!(w.r.is_finite());
        assert!(w.r2().is_err());
    }

    #[test]
    fn phi_monotonicity() {
        let p = params();
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let t = p.t_final + 1.0 - i as f64 * 0.05;
            let v = p.phi(0.5, t);
            assert!(v < prev);
            prev = v;
        }
        let mut prev = f64::NEG_INFINITY;
        for i in 0..50 {
            let x = p.xstar - i as f64 * 0.05;
            let v = p.phi(x, 1.0);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn admissibility_examples() {
        let p = WeightParams {
            t_final: 3.0,
            ..params()
        };
        let g = Grid::new(9, 100, 3.0).unwrap();
        let rep = check_admissible(&p, &g);
        // sup |x - x*| = 1.5, so T must exceed 3
        assert!(rep.t_condition.value.abs() < 1e-15);
        assert!(!rep.t_condition.pass);

        // s dx = 100 * 0.01 = 1 = ε: passes at the boundary
        let p = WeightParams {
            s: 100.0,
            epsilon: 1.0,
            t_final: 3.5,
            ..params()
        };
        let g = Grid::new(99, 35_000, 3.5).unwrap();
        let rep = check_admissible(&p, &g);
        assert!(rep.sdx_condition.pass);
        assert!((rep.sdx_condition.value - 1.0).abs() < 1e-12);

        // dt = 0.001 > 0.5 * 0.0001
        let p = WeightParams {
            epsilon: 0.5,
            t_final: 1.0,
            ..params()
        };
        let g = Grid::new(99, 1000, 1.0).unwrap();
        let rep = check_admissible(&p, &g);
        assert!(!rep.dt_condition.pass);
        assert!(!rep.overall);
    }

    #[test]
    fn admissible_configuration() {
        let p = WeightParams {
            s: 2.0,
            lambda: 0.1,
            beta: 0.5,
            xstar: 1.5,
            mconst: 11.0,
            t_final: 3.5,
            epsilon: 0.5,
            dt_multiplier: 1.0,
        };
        let g = Grid::new(15, 1792, 3.5).unwrap();
        let rep = check_admissible(&p, &g);
        assert!(rep.overall, "{rep:?}");
        let bad = WeightParams { mconst: 0.0, ..p };
        assert!(!check_admissible(&bad, &g).phi_positive);
    }

    #[test]
    fn validation() {
        assert!(params().validate().is_ok());
        for bad in [
            WeightParams { beta: 1.0, ..params() },
            WeightParams { xstar: 1.0, ..params() },
            WeightParams {
                lambda: 0.0,
                ..params()
            },
            WeightParams { s: -1.0, ..params() },
            WeightParams {
                epsilon: 0.0,
                ..params()
            },
            WeightParams {
                t_final: f64::NAN,
                ..params()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidArgument { .. })));
        }
    }
}
