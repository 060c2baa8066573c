//! Built-in monotone saddle-point problems and their gradient operators.
//!
//! Both families are linear: `G(z) = M z` with
//!
//! ```text
//! bilinear          L = xᵀAy                 M = [[0, A], [-Aᵀ, 0]]
//! quadratic-saddle  L = ½xᵀPx + xᵀAy - ½yᵀQy  M = [[P, A], [-Aᵀ, Q]]
//! ```
//!
//! so the origin is always a saddle point and the tight Lipschitz constant is
//! the largest singular value of `M`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// A point of `R^n x R^m`, stored as one contiguous vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    coords: Vec<f64>,
    split: usize,
}

impl Point {
    pub fn new(coords: Vec<f64>, n: usize) -> Result<Self> {
        if n == 0 || coords.len() <= n {
            return Err(Error::usage(format!(
                "point of length {} cannot be split into x (n={n}) and a non-empty y",
                coords.len()
            )));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::Domain(format!("coordinate {i} is not finite")));
        }
        Ok(Self { coords, split: n })
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            coords: vec![0.0; n + m],
            split: n,
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn x(&self) -> &[f64] {
        &self.coords[..self.split]
    }

    pub fn y(&self) -> &[f64] {
        &self.coords[self.split..]
    }

    pub fn n(&self) -> usize {
        self.split
    }

    pub fn m(&self) -> usize {
        self.coords.len() - self.split
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.coords)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Bilinear,
    QuadraticSaddle,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemKind::Bilinear => f.write_str("bilinear"),
            ProblemKind::QuadraticSaddle => f.write_str("quadratic-saddle"),
        }
    }
}

/// A linear monotone saddle-point problem with a declared Lipschitz constant
/// and a known saddle point.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    id: String,
    kind: ProblemKind,
    n: usize,
    m: usize,
    coupling: Matrix,
    p: Option<Matrix>,
    q: Option<Matrix>,
    operator: Matrix,
    lipschitz: f64,
    saddle: Point,
}

const SADDLE_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
const LIPSCHITZ_REL_TOL: f64 = 1e-9;

impl ProblemSpec {
    /// `L(x, y) = xᵀAy` with `A` of shape `n x m`.
    pub fn bilinear(a: Matrix) -> Result<Self> {
        let id = format!("bilinear:n={},m={}", a.rows(), a.cols());
        Self::build(id, ProblemKind::Bilinear, a, None, None)
    }

    /// `L(x, y) = ½xᵀPx + xᵀAy - ½yᵀQy` with symmetric PSD `P`, `Q`.
    pub fn quadratic_saddle(p: Matrix, q: Matrix, a: Matrix) -> Result<Self> {
        let id = format!("quadratic-saddle:n={},m={}", a.rows(), a.cols());
        Self::build(id, ProblemKind::QuadraticSaddle, a, Some(p), Some(q))
    }

    fn build(
        id: String,
        kind: ProblemKind,
        a: Matrix,
        p: Option<Matrix>,
        q: Option<Matrix>,
    ) -> Result<Self> {
        let (n, m) = (a.rows(), a.cols());
        if n == 0 || m == 0 {
            return Err(Error::usage("coupling matrix must be at least 1x1"));
        }
        if !a.is_finite() {
            return Err(Error::Domain("coupling matrix has non-finite entries".into()));
        }
        for (name, mat, dim) in [("P", &p, n), ("Q", &q, m)] {
            let Some(mat) = mat else { continue };
            if mat.rows() != dim || mat.cols() != dim {
                return Err(Error::usage(format!(
                    "{name} must be {dim}x{dim}, got {}x{}",
                    mat.rows(),
                    mat.cols()
                )));
            }
            if !mat.is_finite() {
                return Err(Error::Domain(format!("{name} has non-finite entries")));
            }
            let scale = (0..dim)
                .flat_map(|i| mat.row(i).iter().copied())
                .fold(1.0_f64, |acc, v| acc.max(v.abs()));
            if !mat.is_symmetric(1e-12 * scale) {
                return Err(Error::Domain(format!("{name} is not symmetric")));
            }
            let min_eig = linalg::symmetric_min_eigenvalue(mat);
            if min_eig < -PSD_TOL {
                return Err(Error::Domain(format!(
                    "{name} is not positive semidefinite (min eigenvalue {min_eig:e})"
                )));
            }
        }

        let operator = Matrix::from_fn(n + m, n + m, |i, j| match (i < n, j < n) {
            (true, true) => p.as_ref().map_or(0.0, |p| p.get(i, j)),
            (true, false) => a.get(i, j - n),
            (false, true) => -a.get(j, i - n),
            (false, false) => q.as_ref().map_or(0.0, |q| q.get(i - n, j - n)),
        });
        let mut problem = Self {
            id,
            kind,
            n,
            m,
            coupling: a,
            p,
            q,
            operator,
            lipschitz: f64::NAN,
            saddle: Point::zeros(n, m),
        };
        problem.lipschitz = exact_lipschitz(&problem)?;
        if problem.lipschitz <= 0.0 {
            return Err(Error::Domain(
                "operator is identically zero; a positive Lipschitz constant is required".into(),
            ));
        }
        Ok(problem)
    }

    /// Parse a descriptor such as `bilinear:n=1,m=1,a=1` or
    /// `quadratic-saddle:n=5,m=5,p=0.1,q=0.1,seed=11`.
    ///
    /// `a=<s>` gives `A = s·I` (rectangular identity); `seed=<k>` draws a
    /// Gaussian `A` scaled by `1/sqrt(max(n, m))`. `p`/`q` give `P = p·I`,
    /// `Q = q·I` (default 0).
    pub fn parse(descriptor: &str) -> Result<Self> {
        let (kind, params) = descriptor.split_once(':').unwrap_or((descriptor, ""));
        let kind = match kind.trim() {
            "bilinear" => ProblemKind::Bilinear,
            "quadratic-saddle" => ProblemKind::QuadraticSaddle,
            other => return Err(Error::usage(format!("unknown problem kind '{other}'"))),
        };
        let kv = parse_params(params)?;
        let mut n = None;
        let mut m = None;
        let mut a = None;
        let mut p = None;
        let mut q = None;
        let mut seed = None;
        for (key, value) in &kv {
            let num = || {
                value
                    .parse::<f64>()
                    .map_err(|_| Error::usage(format!("'{key}' expects a number, got '{value}'")))
            };
            let count = || {
                value
                    .parse::<usize>()
                    .map_err(|_| Error::usage(format!("'{key}' expects a count, got '{value}'")))
            };
            match key.as_str() {
                "n" => n = Some(count()?),
                "m" => m = Some(count()?),
                "a" => a = Some(num()?),
                "p" if kind == ProblemKind::QuadraticSaddle => p = Some(num()?),
                "q" if kind == ProblemKind::QuadraticSaddle => q = Some(num()?),
                "seed" => {
                    seed = Some(value.parse::<u64>().map_err(|_| {
                        Error::usage(format!("'seed' expects an integer, got '{value}'"))
                    })?)
                }
                other => {
                    return Err(Error::usage(format!(
                        "unknown parameter '{other}' for {kind} problem"
                    )))
                }
            }
        }
        let n = n.unwrap_or(1);
        let m = m.unwrap_or(n);
        if n == 0 || m == 0 {
            return Err(Error::usage("n and m must be at least 1"));
        }
        let coupling = match (a, seed) {
            (Some(_), Some(_)) => {
                return Err(Error::usage("give either 'a' or 'seed' for the coupling, not both"))
            }
            (Some(s), None) => Matrix::scaled_identity(n, m, s),
            (None, Some(seed)) => random_coupling(n, m, seed),
            (None, None) => Matrix::scaled_identity(n, m, 1.0),
        };

        let mut id = format!("{kind}:n={n},m={m}");
        let problem = match kind {
            ProblemKind::Bilinear => {
                push_coupling_id(&mut id, a, seed);
                Self::build(id, kind, coupling, None, None)?
            }
            ProblemKind::QuadraticSaddle => {
                let (p, q) = (p.unwrap_or(0.0), q.unwrap_or(0.0));
                id.push_str(&format!(",p={p},q={q}"));
                push_coupling_id(&mut id, a, seed);
                Self::build(
                    id,
                    kind,
                    coupling,
                    Some(Matrix::scaled_identity(n, n, p)),
                    Some(Matrix::scaled_identity(m, m, q)),
                )?
            }
        };
        Ok(problem)
    }

    /// Stable identifier; descriptor-built problems round-trip through [`ProblemSpec::parse`].
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    pub fn coupling(&self) -> &Matrix {
        &self.coupling
    }

    pub fn p(&self) -> Option<&Matrix> {
        self.p.as_ref()
    }

    pub fn q(&self) -> Option<&Matrix> {
        self.q.as_ref()
    }

    /// The matrix `M` with `G(z) = M z`.
    pub fn operator_matrix(&self) -> &Matrix {
        &self.operator
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn saddle(&self) -> &Point {
        &self.saddle
    }

    /// Declare a Lipschitz constant other than the tight one. It must not
    /// undercut the operator norm.
    pub fn with_declared_lipschitz(self, k: f64) -> Result<Self> {
        let tight = exact_lipschitz(&self)?;
        if !(k.is_finite() && k > 0.0) || k < tight * (1.0 - LIPSCHITZ_REL_TOL) {
            return Err(Error::Domain(format!(
                "declared K={k} is below the operator norm {tight}"
            )));
        }
        Ok(self.with_lipschitz_unchecked(k))
    }

    /// Override `K` without validation. Only for witnessing that the
    /// assumption checker rejects a wrong constant.
    pub fn with_lipschitz_unchecked(mut self, k: f64) -> Self {
        self.lipschitz = k;
        self
    }

    /// Use another zero of `G` as the reference saddle point.
    pub fn with_saddle(mut self, saddle: Point) -> Result<Self> {
        self.check_dims(&saddle)?;
        let g = self.eval_operator(&saddle)?;
        let bound = SADDLE_TOL * 1f64.max(self.lipschitz * saddle.norm());
        if g.norm() > bound {
            return Err(Error::Domain(format!(
                "‖G(z*)‖ = {:e} exceeds {bound:e}",
                g.norm()
            )));
        }
        self.saddle = saddle;
        Ok(self)
    }

    fn check_dims(&self, z: &Point) -> Result<()> {
        if z.n() != self.n || z.m() != self.m {
            return Err(Error::usage(format!(
                "point has shape ({}, {}), problem expects ({}, {})",
                z.n(),
                z.m(),
                self.n,
                self.m
            )));
        }
        Ok(())
    }

    /// `G(z) = (∇ₓL, -∇ᵧL)`.
    pub fn eval_operator(&self, z: &Point) -> Result<Point> {
        self.check_dims(z)?;
        if let Some(i) = z.coords().iter().position(|c| !c.is_finite()) {
            return Err(Error::Domain(format!("coordinate {i} is not finite")));
        }
        let mut out = vec![0.0; self.dim()];
        self.apply(z.coords(), &mut out);
        if let Some(i) = out.iter().position(|c| !c.is_finite()) {
            return Err(Error::Domain(format!("G(z) coordinate {i} overflowed")));
        }
        Ok(Point {
            coords: out,
            split: self.n,
        })
    }

    /// Unchecked `out = G(z)` on raw coordinates; the solver's hot path.
    #[inline]
    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        self.operator.mul_vec_into(z, out);
    }
}

fn push_coupling_id(id: &mut String, a: Option<f64>, seed: Option<u64>) {
    match (a, seed) {
        (_, Some(seed)) => id.push_str(&format!(",seed={seed}")),
        (Some(a), None) => id.push_str(&format!(",a={a}")),
        (None, None) => id.push_str(",a=1"),
    }
}

pub(crate) fn parse_params(params: &str) -> Result<Vec<(String, String)>> {
    params
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|pair| {
            pair.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::usage(format!("expected key=value, got '{pair}'")))
        })
        .collect()
}

/// Seeded Gaussian `n x m` matrix with entries of variance `1/max(n, m)`.
pub fn random_coupling(n: usize, m: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (n.max(m) as f64).sqrt();
    Matrix::from_fn(n, m, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Largest singular value of the operator matrix, by power iteration on `MᵀM`.
pub fn exact_lipschitz(problem: &ProblemSpec) -> Result<f64> {
    spectral_norm(problem.operator_matrix(), 1e-10, 200_000)
}

/// Power iteration for `σ_max(M)`. Stops once the eigen-residual
/// `‖MᵀMv - λv‖ ≤ rel_tol·λ`.
pub fn spectral_norm(m: &Matrix, rel_tol: f64, max_iters: usize) -> Result<f64> {
    if m.is_zero() {
        return Ok(0.0);
    }
    let mt = m.transpose();
    let d = m.cols();
    // Fixed, generic start vector so the result is reproducible.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..d).map(|_| 1.0 + rng.random::<f64>()).collect();
    let nv = linalg::norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let w = mt.mul_vec(&m.mul_vec(&v));
        let lambda = linalg::dot(&v, &w);
        residual = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - lambda * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= rel_tol * lambda {
            return Ok(lambda.sqrt());
        }
        let nw = linalg::norm(&w);
        if nw == 0.0 {
            // start vector in the null space; fall back to a basis vector
            v = (0..d).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
            continue;
        }
        v = w.into_iter().map(|x| x / nw).collect();
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        residual,
    })
}

/// Empirical witness of monotonicity and Lipschitz continuity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub min_monotone_inner_product: f64,
    pub max_lipschitz_ratio: f64,
    pub samples_used: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionTolerances {
    pub monotone: f64,
    pub lipschitz: f64,
}

impl Default for AssumptionTolerances {
    fn default() -> Self {
        Self {
            monotone: 1e-10,
            lipschitz: 1e-9,
        }
    }
}

pub fn validate_assumptions(
    problem: &ProblemSpec,
    sample_count: usize,
    radius: f64,
    seed: u64,
) -> Result<AssumptionReport> {
    validate_assumptions_with(
        problem,
        sample_count,
        radius,
        seed,
        AssumptionTolerances::default(),
    )
}

/// Draws `sample_count` pairs uniformly from the ball of `radius` around the
/// origin and records the worst monotonicity inner product and the worst
/// ratio `‖G(z)-G(w)‖ / (K‖z-w‖)`.
pub fn validate_assumptions_with(
    problem: &ProblemSpec,
    sample_count: usize,
    radius: f64,
    seed: u64,
    tol: AssumptionTolerances,
) -> Result<AssumptionReport> {
    if sample_count == 0 {
        return Err(Error::usage("sample_count must be at least 1"));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::usage("radius must be positive and finite"));
    }
    let d = problem.dim();
    let k = problem.lipschitz();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_inner = f64::INFINITY;
    let mut max_ratio = 0.0_f64;
    let mut used = 0;
    let mut gz = vec![0.0; d];
    let mut gw = vec![0.0; d];
    for _ in 0..sample_count {
        let z = sample_ball(&mut rng, d, radius);
        let w = sample_ball(&mut rng, d, radius);
        let diff = linalg::sub(&z, &w);
        let dn = linalg::norm(&diff);
        if dn < 1e-14 {
            continue;
        }
        problem.apply(&z, &mut gz);
        problem.apply(&w, &mut gw);
        let gdiff = linalg::sub(&gz, &gw);
        min_inner = min_inner.min(linalg::dot(&gdiff, &diff));
        max_ratio = max_ratio.max(linalg::norm(&gdiff) / (k * dn));
        used += 1;
    }
    if used == 0 {
        min_inner = 0.0;
    }
    Ok(AssumptionReport {
        min_monotone_inner_product: min_inner,
        max_lipschitz_ratio: max_ratio,
        samples_used: used,
        pass: min_inner >= -tol.monotone && max_ratio <= 1.0 + tol.lipschitz,
    })
}

fn sample_ball(rng: &mut ChaCha8Rng, d: usize, radius: f64) -> Vec<f64> {
    loop {
        let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = linalg::norm(&dir);
        if n == 0.0 {
            continue;
        }
        let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
        return dir.into_iter().map(|x| x * r / n).collect();
    }
}
