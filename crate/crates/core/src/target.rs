//! Continuous targets `f: X -> R^m`.
//!
//! Built-in targets and their Lipschitz constants (Euclidean norms):
//!
//! | name            | dims      | map                                                   | Lipschitz |
//! |-----------------|-----------|-------------------------------------------------------|-----------|
//! | `identity`      | d -> d    | `x`                                                   | 1         |
//! | `sine_wave`     | d -> d    | `sin(2 pi x_j)` per coordinate                        | 2 pi      |
//! | `gaussian_bump` | d -> 1    | `exp(-|x - 0.5|^2 / (2 * 0.2^2))`                     | 5 e^-1/2  |
//! | `rotation`      | d -> d    | rotate `(x_1, x_2)` by 1 radian, other coordinates fixed (d >= 2) | 1 |
//! | `swiss_roll_2d` | 1 -> 2    | `u (cos u, sin u) / (3 pi)` with `u = 1.5 pi (1 + 2 t)` | sqrt(1 + (4.5 pi)^2) |

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::expr::{parse_expr, Expr};
use crate::map::{check_dim, VectorMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Identity,
    SineWave,
    GaussianBump,
    Rotation,
    SwissRoll2d,
}

impl Builtin {
    pub const NAMES: [&'static str; 5] = ["identity", "sine_wave", "gaussian_bump", "rotation", "swiss_roll_2d"];

    pub fn from_name(name: &str) -> Option<Builtin> {
        Some(match name {
            "identity" => Builtin::Identity,
            "sine_wave" => Builtin::SineWave,
            "gaussian_bump" => Builtin::GaussianBump,
            "rotation" => Builtin::Rotation,
            "swiss_roll_2d" => Builtin::SwissRoll2d,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Identity => "identity",
            Builtin::SineWave => "sine_wave",
            Builtin::GaussianBump => "gaussian_bump",
            Builtin::Rotation => "rotation",
            Builtin::SwissRoll2d => "swiss_roll_2d",
        }
    }

    /// Documented Lipschitz constant.
    pub fn lipschitz(self) -> f64 {
        match self {
            Builtin::Identity | Builtin::Rotation => 1.0,
            Builtin::SineWave => 2.0 * PI,
            Builtin::GaussianBump => 5.0 * (-0.5f64).exp(),
            Builtin::SwissRoll2d => (1.0 + (4.5 * PI).powi(2)).sqrt(),
        }
    }

    fn eval(self, x: &[f64]) -> Vec<f64> {
        match self {
            Builtin::Identity => x.to_vec(),
            Builtin::SineWave => x.iter().map(|v| (2.0 * PI * v).sin()).collect(),
            Builtin::GaussianBump => {
                let r2: f64 = x.iter().map(|v| (v - 0.5) * (v - 0.5)).sum();
                vec![(-r2 / (2.0 * 0.2 * 0.2)).exp()]
            }
            Builtin::Rotation => {
                let (s, c) = 1.0f64.sin_cos();
                let mut y = x.to_vec();
                y[0] = c * x[0] - s * x[1];
                y[1] = s * x[0] + c * x[1];
                y
            }
            Builtin::SwissRoll2d => {
                let u = 1.5 * PI * (1.0 + 2.0 * x[0]);
                let scale = u / (3.0 * PI);
                vec![scale * u.cos(), scale * u.sin()]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetBody {
    Exprs(Vec<Expr>),
    Builtin(Builtin),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetFunction {
    dim_in: usize,
    dim_out: usize,
    body: TargetBody,
}

impl TargetFunction {
    pub fn body(&self) -> &TargetBody {
        &self.body
    }

    /// Short label used in reports.
    pub fn id(&self) -> String {
        match &self.body {
            TargetBody::Builtin(b) => b.name().to_string(),
            TargetBody::Exprs(es) => {
                let parts: Vec<String> = es.iter().map(|e| e.to_string()).collect();
                format!("[{}]", parts.join(", "))
            }
        }
    }
}

pub fn parse_target<S: AsRef<str>>(sources: &[S], dim_in: usize) -> Result<TargetFunction> {
    if sources.is_empty() {
        return Err(Error::InvalidArgument("target needs at least one expression".into()));
    }
    if dim_in == 0 {
        return Err(Error::InvalidArgument("dim_in must be positive".into()));
    }
    let exprs = sources
        .iter()
        .map(|s| parse_expr(s.as_ref(), dim_in))
        .collect::<Result<Vec<_>>>()?;
    Ok(TargetFunction {
        dim_in,
        dim_out: exprs.len(),
        body: TargetBody::Exprs(exprs),
    })
}

pub fn builtin_target(name: &str, dim: usize) -> Result<TargetFunction> {
    let b = Builtin::from_name(name).ok_or_else(|| Error::UnknownBuiltin(name.to_string()))?;
    if dim == 0 {
        return Err(Error::InvalidArgument("dim must be positive".into()));
    }
    let (dim_in, dim_out) = match b {
        Builtin::Identity | Builtin::SineWave => (dim, dim),
        Builtin::GaussianBump => (dim, 1),
        Builtin::Rotation => {
            if dim < 2 {
                return Err(Error::InvalidArgument("rotation needs dim >= 2".into()));
            }
            (dim, dim)
        }
        Builtin::SwissRoll2d => {
            if dim != 1 {
                return Err(Error::InvalidArgument("swiss_roll_2d takes dim = 1".into()));
            }
            (1, 2)
        }
    };
    Ok(TargetFunction {
        dim_in,
        dim_out,
        body: TargetBody::Builtin(b),
    })
}

pub fn eval_target(target: &TargetFunction, point: &[f64]) -> Result<Vec<f64>> {
    target.eval(point)
}

impl VectorMap for TargetFunction {
    fn dim_in(&self) -> usize {
        self.dim_in
    }

    fn dim_out(&self) -> usize {
        self.dim_out
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim_in, x.len())?;
        match &self.body {
            TargetBody::Exprs(es) => es.iter().enumerate().map(|(k, e)| e.eval(x, k)).collect(),
            TargetBody::Builtin(b) => Ok(b.eval(x)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::distance;
    use crate::rng::SplitMix64;

    #[test]
    fn expression_targets() {
        let t = parse_target(&["1+2*3"], 1).unwrap();
        assert_eq!(eval_target(&t, &[0.4]).unwrap(), vec![7.0]);

        let t = parse_target(&["x1^2"], 1).unwrap();
        assert_eq!(eval_target(&t, &[0.5]).unwrap(), vec![0.25]);

        let t = parse_target(&["x1+x2", "x1-x2"], 2).unwrap();
        assert_eq!((t.dim_in(), t.dim_out()), (2, 2));
        assert_eq!(eval_target(&t, &[2.0, 1.0]).unwrap(), vec![3.0, 1.0]);

        let t = parse_target(&["log(x1)"], 1).unwrap();
        assert!(matches!(eval_target(&t, &[0.0]), Err(Error::DomainError { .. })));
        assert!(matches!(
            eval_target(&t, &[0.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));

        assert!(matches!(
            parse_target(&["x3"], 2),
            Err(Error::VariableOutOfRange { .. })
        ));
        assert!(parse_target::<&str>(&[], 1).is_err());
    }

    #[test]
    fn builtins() {
        let t = builtin_target("identity", 3).unwrap();
        assert_eq!(eval_target(&t, &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);

        let t = builtin_target("sine_wave", 1).unwrap();
        assert!((eval_target(&t, &[0.25]).unwrap()[0] - 1.0).abs() < 1e-15);

        assert!(matches!(builtin_target("nope", 1), Err(Error::UnknownBuiltin(_))));
        assert!(builtin_target("rotation", 1).is_err());
        assert!(builtin_target("swiss_roll_2d", 2).is_err());

        let t = builtin_target("rotation", 2).unwrap();
        let y = eval_target(&t, &[1.0, 0.0]).unwrap();
        assert!((y[0] - 1.0f64.cos()).abs() < 1e-15 && (y[1] - 1.0f64.sin()).abs() < 1e-15);

        let t = builtin_target("gaussian_bump", 2).unwrap();
        assert_eq!(eval_target(&t, &[0.5, 0.5]).unwrap(), vec![1.0]);
    }

    #[test]
    fn builtin_lipschitz_spot_checks() {
        for name in Builtin::NAMES {
            let b = Builtin::from_name(name).unwrap();
            let dim = if b == Builtin::SwissRoll2d { 1 } else { 2 };
            let t = builtin_target(name, dim).unwrap();
            let mut rng = SplitMix64::new(11);
            for _ in 0..1000 {
                let x: Vec<f64> = (0..dim).map(|_| rng.next_f64()).collect();
                let y: Vec<f64> = x.iter().map(|v| (v + 1e-4 * rng.normal()).clamp(0.0, 1.0)).collect();
                let dx = distance(&x, &y);
                if dx == 0.0 {
                    continue;
                }
                let dy = distance(&t.eval(&x).unwrap(), &t.eval(&y).unwrap());
                assert!(
                    dy / dx <= b.lipschitz() * (1.0 + 1e-6),
                    "{name}: ratio {} exceeds {}",
                    dy / dx,
                    b.lipschitz()
                );
            }
        }
    }
}
