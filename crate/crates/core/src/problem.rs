//! Problem descriptions and the built-in catalog of manufactured benchmarks.
//!
//! Every closure receives physical coordinates `[x, y, z]` (stationary problems) or
//! `[x, y, z, t]` (space-time problems).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::sem::{Axis, Grid};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Coefficient {
    Zero,
    Constant(f64),
    Function(ScalarFn),
}

impl Coefficient {
    pub fn func(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient::Function(Arc::new(f))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Coefficient::Zero) || matches!(self, Coefficient::Constant(c) if *c == 0.0)
    }

    pub fn eval(&self, c: &[f64]) -> f64 {
        match self {
            Coefficient::Zero => 0.0,
            Coefficient::Constant(v) => *v,
            Coefficient::Function(f) => f(c),
        }
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Zero => write!(f, "Zero"),
            Coefficient::Constant(v) => write!(f, "Constant({v})"),
            Coefficient::Function(_) => write!(f, "Function"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemKind {
    StationaryDiffusion,
    LinearCdr,
    Semilinear,
}

/// `u_t − ∇·(κ∇u) + b·∇u + c·u (+ u³ − u for the semilinear kind) = f` with Dirichlet
/// data `g` on the spatial boundary and `u₀` at the initial time.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub kind: ProblemKind,
    pub bounds: Vec<(f64, f64)>,
    pub final_time: f64,
    pub kappa: Coefficient,
    pub convection: Vec<Coefficient>,
    pub reaction: Coefficient,
    pub forcing: ScalarFn,
    pub boundary: ScalarFn,
    pub initial: Option<ScalarFn>,
    pub exact: Option<ScalarFn>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("bounds", &self.bounds)
            .field("final_time", &self.final_time)
            .field("kappa", &self.kappa)
            .field("convection", &self.convection)
            .field("reaction", &self.reaction)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    pub fn has_time(&self) -> bool {
        self.kind != ProblemKind::StationaryDiffusion
    }

    pub fn space_dims(&self) -> usize {
        self.bounds.len()
    }

    /// Uniform grid with `n` elements along every axis.
    pub fn grid(&self, n: usize) -> Result<Grid> {
        let space = self
            .bounds
            .iter()
            .map(|&(lo, hi)| Axis::new(n, lo, hi))
            .collect::<Result<Vec<_>>>()?;
        let time = if self.has_time() {
            Some(Axis::new(n, 0.0, self.final_time)?)
        } else {
            None
        };
        let g = Grid { space, time };
        g.check()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() {
            return Err(invalid("problem needs at least one space dimension"));
        }
        if self.has_time() && !(self.final_time > 0.0) {
            return Err(invalid("final time must be positive"));
        }
        if !self.convection.is_empty() && self.convection.len() != self.space_dims() {
            return Err(invalid(
                "convection needs one component per space dimension",
            ));
        }
        if self.kind == ProblemKind::Semilinear
            && (!self.convection.iter().all(|c| c.is_zero()) || !self.reaction.is_zero())
        {
            return Err(invalid(
                "the semilinear kind takes no convection or reaction terms",
            ));
        }
        Ok(())
    }
}

fn s3(c: &[f64]) -> f64 {
    c[0] + c[1] + c[2]
}

/// Stationary diffusion with `κ = 1 + cos(π(x+y))cos(πz)` and
/// `u* = sin(πx)sin(πy)sin(πz)` on the unit cube.
pub fn poisson() -> ProblemSpec {
    let kappa = |c: &[f64]| 1.0 + (PI * (c[0] + c[1])).cos() * (PI * c[2]).cos();
    let exact = |c: &[f64]| (PI * c[0]).sin() * (PI * c[1]).sin() * (PI * c[2]).sin();
    let forcing = move |c: &[f64]| {
        let (x, y, z) = (c[0], c[1], c[2]);
        let (sx, sy, sz) = ((PI * x).sin(), (PI * y).sin(), (PI * z).sin());
        let (cx, cy, cz) = ((PI * x).cos(), (PI * y).cos(), (PI * z).cos());
        let kx = -PI * (PI * (x + y)).sin() * cz;
        let kz = -PI * (PI * (x + y)).cos() * (PI * z).sin();
        let grad_dot = kx * PI * cx * sy * sz + kx * PI * sx * cy * sz + kz * PI * sx * sy * cz;
        -grad_dot + 3.0 * PI * PI * kappa(c) * sx * sy * sz
    };
    ProblemSpec {
        name: "poisson".into(),
        kind: ProblemKind::StationaryDiffusion,
        bounds: vec![(0.0, 1.0); 3],
        final_time: 1.0,
        kappa: Coefficient::func(kappa),
        convection: Vec::new(),
        reaction: Coefficient::Zero,
        forcing: Arc::new(forcing),
        boundary: Arc::new(exact),
        initial: None,
        exact: Some(Arc::new(exact)),
    }
}

/// Space-time convection-diffusion-reaction with `κ = 1 + cos(πx)cos(πy)cos(πz)`,
/// `b = (x, y, z)`, `c = e^{−(x+y+z)}` and `u* = sin(π(t+x+y+z))`.
pub fn cdr() -> ProblemSpec {
    let kappa = |c: &[f64]| 1.0 + (PI * c[0]).cos() * (PI * c[1]).cos() * (PI * c[2]).cos();
    let exact = |c: &[f64]| (PI * (c[3] + s3(c))).sin();
    let forcing = move |c: &[f64]| {
        let (x, y, z) = (c[0], c[1], c[2]);
        let arg = PI * (c[3] + x + y + z);
        let (s, co) = (arg.sin(), arg.cos());
        let (sx, sy, sz) = ((PI * x).sin(), (PI * y).sin(), (PI * z).sin());
        let (cx, cy, cz) = ((PI * x).cos(), (PI * y).cos(), (PI * z).cos());
        let grad_sum = -PI * (sx * cy * cz + cx * sy * cz + cx * cy * sz);
        PI * co * (1.0 - grad_sum + x + y + z)
            + s * (3.0 * PI * PI * kappa(c) + (-(x + y + z)).exp())
    };
    ProblemSpec {
        name: "cdr".into(),
        kind: ProblemKind::LinearCdr,
        bounds: vec![(0.0, 1.0); 3],
        final_time: 1.0,
        kappa: Coefficient::func(kappa),
        convection: vec![
            Coefficient::func(|c: &[f64]| c[0]),
            Coefficient::func(|c: &[f64]| c[1]),
            Coefficient::func(|c: &[f64]| c[2]),
        ],
        reaction: Coefficient::func(|c: &[f64]| (-s3(c)).exp()),
        forcing: Arc::new(forcing),
        boundary: Arc::new(exact),
        initial: Some(Arc::new(move |c: &[f64]| (PI * s3(c)).sin())),
        exact: Some(Arc::new(exact)),
    }
}

/// `u_t − Δu − u + u³ = f` with `u* = Π sin(πx_i)·sin(πt) + Π sin(2πx_i)·sin(2πt)`,
/// homogeneous boundary and initial data.
pub fn semilinear() -> ProblemSpec {
    fn parts(c: &[f64]) -> (f64, f64, f64) {
        let p1 = (PI * c[0]).sin() * (PI * c[1]).sin() * (PI * c[2]).sin();
        let p2 = (2.0 * PI * c[0]).sin() * (2.0 * PI * c[1]).sin() * (2.0 * PI * c[2]).sin();
        (p1, p2, c[3])
    }
    let exact = |c: &[f64]| {
        let (p1, p2, t) = parts(c);
        p1 * (PI * t).sin() + p2 * (2.0 * PI * t).sin()
    };
    let forcing = move |c: &[f64]| {
        let (p1, p2, t) = parts(c);
        let s1 = p1 * (PI * t).sin();
        let s2 = p2 * (2.0 * PI * t).sin();
        let ut = PI * p1 * (PI * t).cos() + 2.0 * PI * p2 * (2.0 * PI * t).cos();
        let u = s1 + s2;
        ut + 3.0 * PI * PI * s1 + 12.0 * PI * PI * s2 - u + u * u * u
    };
    ProblemSpec {
        name: "semilinear".into(),
        kind: ProblemKind::Semilinear,
        bounds: vec![(0.0, 1.0); 3],
        final_time: 1.0,
        kappa: Coefficient::Constant(1.0),
        convection: Vec::new(),
        reaction: Coefficient::Zero,
        forcing: Arc::new(forcing),
        boundary: Arc::new(|_: &[f64]| 0.0),
        initial: Some(Arc::new(|_: &[f64]| 0.0)),
        exact: Some(Arc::new(exact)),
    }
}

/// Space-time problem with constant coefficients and manufactured `u* = sin(π(t+x+y+z))`.
pub fn custom(kappa: f64, b: [f64; 3], c: f64) -> ProblemSpec {
    let exact = |c: &[f64]| (PI * (c[3] + s3(c))).sin();
    let forcing = move |p: &[f64]| {
        let arg = PI * (p[3] + s3(p));
        let (s, co) = (arg.sin(), arg.cos());
        PI * co * (1.0 + b[0] + b[1] + b[2]) + s * (3.0 * PI * PI * kappa + c)
    };
    let coef = |v: f64| {
        if v == 0.0 {
            Coefficient::Zero
        } else {
            Coefficient::Constant(v)
        }
    };
    ProblemSpec {
        name: "custom".into(),
        kind: ProblemKind::LinearCdr,
        bounds: vec![(0.0, 1.0); 3],
        final_time: 1.0,
        kappa: coef(kappa),
        convection: b.iter().map(|&v| coef(v)).collect(),
        reaction: coef(c),
        forcing: Arc::new(forcing),
        boundary: Arc::new(exact),
        initial: Some(Arc::new(move |p: &[f64]| (PI * s3(p)).sin())),
        exact: Some(Arc::new(exact)),
    }
}

/// Stationary diffusion with the given coefficient and zero data; used by rank studies.
pub fn diffusion_only(name: &str, kappa: Coefficient) -> ProblemSpec {
    ProblemSpec {
        name: name.into(),
        kind: ProblemKind::StationaryDiffusion,
        bounds: vec![(0.0, 1.0); 3],
        final_time: 1.0,
        kappa,
        convection: Vec::new(),
        reaction: Coefficient::Zero,
        forcing: Arc::new(|_: &[f64]| 0.0),
        boundary: Arc::new(|_: &[f64]| 0.0),
        initial: None,
        exact: None,
    }
}

/// The diffusion coefficients of the operator rank study, with the truncation
/// tolerance each row uses.
pub fn rank_study_coefficients() -> Vec<(&'static str, Coefficient, f64)> {
    vec![
        ("1", Coefficient::Constant(1.0), 1e-12),
        (
            "1+xyz",
            Coefficient::func(|c: &[f64]| 1.0 + c[0] * c[1] * c[2]),
            1e-12,
        ),
        (
            "1+cos(pi(x+y))cos(pi z)",
            Coefficient::func(|c: &[f64]| 1.0 + (PI * (c[0] + c[1])).cos() * (PI * c[2]).cos()),
            1e-12,
        ),
        (
            "1/(1+x+y+z)",
            Coefficient::func(|c: &[f64]| 1.0 / (1.0 + s3(c))),
            1e-6,
        ),
        (
            "1/(1+x+y+z)",
            Coefficient::func(|c: &[f64]| 1.0 / (1.0 + s3(c))),
            1e-12,
        ),
    ]
}
