//! Anisotropic integrands `Φ`: support functions of smooth uniformly convex
//! Wulff shapes `K`, with exact first and second derivatives.
//!
//! Three closed-form families are available:
//!
//! - isotropic, `Φ(x) = |x|` (`K` the unit ball);
//! - ellipsoidal, `Φ(x) = √(xᵀQx)` with `Q` symmetric positive definite
//!   (`K = {y : yᵀQ⁻¹y ≤ 1}`);
//! - perturbed isotropic, `Φ(x) = |x|·(1 + a·h(x/|x|))` with
//!   `h(u) = Σᵢ cos(k·uᵢ − θ)`.
//!
//! Every integrand may additionally carry a diagonal sign transform `S`
//! (`Φ_S(x) = Φ(Sx)`, i.e. `K ↦ SK`). This realizes the orientation flip
//! `K ↦ −K` and the reflection across the horizontal hyperplane.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::linalg::{self, sphere_lattice, sym_eigenvalues, tangent_basis};

/// Number of lattice directions used for construction-time convexity checks
/// and curvature bounds.
pub const DEFAULT_LATTICE: usize = 2000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    Isotropic,
    Ellipsoidal {
        /// Row-major `(n+1) × (n+1)` matrix.
        q: Vec<Vec<f64>>,
    },
    PerturbedIsotropic {
        amplitude: f64,
        wavenumber: f64,
        phase: f64,
    },
}

#[derive(Clone, Debug)]
enum Kind {
    Isotropic,
    Ellipsoidal { q: DMatrix<f64> },
    Perturbed { amplitude: f64, wavenumber: f64, phase: f64 },
}

/// A smooth, one-homogeneous, uniformly convex integrand on `ℝ^{n+1}`.
#[derive(Clone, Debug)]
pub struct AnisotropyIntegrand {
    dim: usize,
    kind: Kind,
    signs: Vec<f64>,
}

/// A point of the unit sphere `S^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereDirection(DVector<f64>);

impl SphereDirection {
    pub const TOLERANCE: f64 = 1e-12;

    pub fn new(v: DVector<f64>) -> Result<Self> {
        let norm = v.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > Self::TOLERANCE {
            return Err(Error::Domain(format!(
                "sphere direction must have unit norm, got |x| = {norm}"
            )));
        }
        Ok(Self(v))
    }

    pub fn normalize(v: DVector<f64>) -> Result<Self> {
        let norm = v.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Domain("cannot normalize a zero or non-finite vector".into()));
        }
        Ok(Self(v / norm))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

/// `D²_TΦ(ν)` expressed in an orthonormal basis of `ν^⊥`.
#[derive(Clone, Debug)]
pub struct TangentOperator {
    /// Columns form an orthonormal basis of the tangent space.
    pub basis: DMatrix<f64>,
    /// Matrix of the operator in that basis.
    pub matrix: DMatrix<f64>,
}

impl TangentOperator {
    pub fn eigenvalues(&self) -> Vec<f64> {
        sym_eigenvalues(&self.matrix)
    }

    /// Express an ambient symmetric bilinear form restricted to the tangent
    /// space in the same basis.
    pub fn restrict(&self, ambient: &DMatrix<f64>) -> DMatrix<f64> {
        self.basis.transpose() * ambient * &self.basis
    }
}

/// `φ(z) = Φ(−z, 1)` with its gradient and Hessian.
#[derive(Clone, Debug)]
pub struct GraphIntegrand {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// Eigenvalue range of `D²φ(z)` over the sampled ball `|z| ≤ g`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityBounds {
    pub gradient_bound: f64,
    pub min: f64,
    pub max: f64,
}

impl EllipticityBounds {
    /// The Pucci parameter `λ = min(λ_min, 1/λ_max)`.
    pub fn pucci_lambda(&self) -> f64 {
        self.min.min(1.0 / self.max)
    }

    pub fn contains(&self, eigenvalue: f64, rel_tol: f64) -> bool {
        eigenvalue >= self.min * (1.0 - rel_tol) && eigenvalue <= self.max * (1.0 + rel_tol)
    }
}

fn check_finite(x: &DVector<f64>) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain("non-finite input vector".into()))
    }
}

fn check_nonzero(x: &DVector<f64>, what: &str) -> Result<f64> {
    check_finite(x)?;
    let r = x.norm();
    if r == 0.0 {
        return Err(Error::Domain(format!("{what} is undefined at the origin")));
    }
    Ok(r)
}

impl AnisotropyIntegrand {
    pub fn isotropic(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(param("dim", "ambient dimension must be at least 2"));
        }
        Ok(Self {
            dim,
            kind: Kind::Isotropic,
            signs: vec![1.0; dim],
        })
    }

    pub fn ellipsoidal(q: DMatrix<f64>) -> Result<Self> {
        let dim = q.nrows();
        if dim < 2 || q.ncols() != dim {
            return Err(param("q", "must be a square matrix of size at least 2"));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(param("q", "entries must be finite"));
        }
        if linalg::asymmetry(&q) > 1e-12 * q.norm().max(1.0) {
            return Err(param("q", "must be symmetric"));
        }
        let q = linalg::symmetrize(&q);
        if q.clone().cholesky().is_none() {
            return Err(param("q", "must be positive definite"));
        }
        Ok(Self {
            dim,
            kind: Kind::Ellipsoidal { q },
            signs: vec![1.0; dim],
        })
    }

    /// `Φ(x) = |x|(1 + a Σᵢ cos(k uᵢ − θ))`, `u = x/|x|`.
    ///
    /// Construction fails unless `Φ > 0` and the tangential Hessian is
    /// positive definite on a [`DEFAULT_LATTICE`]-point sphere lattice.
    pub fn perturbed_isotropic(dim: usize, amplitude: f64, wavenumber: f64, phase: f64) -> Result<Self> {
        if dim < 2 {
            return Err(param("dim", "ambient dimension must be at least 2"));
        }
        if !(amplitude.is_finite() && wavenumber.is_finite() && phase.is_finite()) {
            return Err(param("amplitude", "perturbation parameters must be finite"));
        }
        let integrand = Self {
            dim,
            kind: Kind::Perturbed {
                amplitude,
                wavenumber,
                phase,
            },
            signs: vec![1.0; dim],
        };
        let (lo, _) = integrand.curvature_radius_bounds(DEFAULT_LATTICE);
        let min_value = sphere_lattice(dim, DEFAULT_LATTICE)
            .iter()
            .map(|u| integrand.value_unchecked(u))
            .fold(f64::INFINITY, f64::min);
        if !(lo > 0.0 && min_value > 0.0) {
            return Err(Error::Integrity(format!(
                "perturbed integrand with amplitude {amplitude} and wavenumber {wavenumber} is not \
                 uniformly convex (min tangential eigenvalue {lo:.3e}, min value {min_value:.3e})"
            )));
        }
        Ok(integrand)
    }

    pub fn from_family(dim: usize, family: &Family) -> Result<Self> {
        match family {
            Family::Isotropic => Self::isotropic(dim),
            Family::Ellipsoidal { q } => {
                if q.len() != dim || q.iter().any(|row| row.len() != dim) {
                    return Err(param("q", format!("expected a {dim}x{dim} matrix")));
                }
                Self::ellipsoidal(DMatrix::from_fn(dim, dim, |i, j| q[i][j]))
            }
            Family::PerturbedIsotropic {
                amplitude,
                wavenumber,
                phase,
            } => Self::perturbed_isotropic(dim, *amplitude, *wavenumber, *phase),
        }
    }

    pub fn family(&self) -> Family {
        match &self.kind {
            Kind::Isotropic => Family::Isotropic,
            Kind::Ellipsoidal { q } => Family::Ellipsoidal {
                q: (0..self.dim).map(|i| q.row(i).iter().copied().collect()).collect(),
            },
            Kind::Perturbed {
                amplitude,
                wavenumber,
                phase,
            } => Family::PerturbedIsotropic {
                amplitude: *amplitude,
                wavenumber: *wavenumber,
                phase: *phase,
            },
        }
    }

    /// Ambient dimension `n + 1`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Base dimension `n` of graphs over which this integrand acts.
    pub fn base_dim(&self) -> usize {
        self.dim - 1
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    fn with_signs(&self, flip: impl Fn(usize) -> bool) -> Self {
        let mut out = self.clone();
        for (i, s) in out.signs.iter_mut().enumerate() {
            if flip(i) {
                *s = -*s;
            }
        }
        out
    }

    /// `K ↦ −K`: the integrand seen by the same surface with its normal flipped.
    pub fn negated(&self) -> Self {
        self.with_signs(|_| true)
    }

    /// `K ↦ RK` with `R` the reflection across `{x_{n+1} = 0}`.
    pub fn reflected_vertical(&self) -> Self {
        let last = self.dim - 1;
        self.with_signs(|i| i == last)
    }

    /// Integrand solved by `−w` whenever `w` solves the graph equation for
    /// `self`: `Φ'(x', x_{n+1}) = Φ(−x', x_{n+1})`, i.e. `K ↦ −RK`.
    pub fn graph_mirror(&self) -> Self {
        self.negated().reflected_vertical()
    }

    fn apply_signs(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dim, |i, _| self.signs[i] * x[i])
    }

    fn value_unchecked(&self, x: &DVector<f64>) -> f64 {
        let y = self.apply_signs(x);
        match &self.kind {
            Kind::Isotropic => y.norm(),
            Kind::Ellipsoidal { q } => y.dot(&(q * &y)).max(0.0).sqrt(),
            Kind::Perturbed {
                amplitude,
                wavenumber,
                phase,
            } => {
                let r = y.norm();
                if r == 0.0 {
                    return 0.0;
                }
                let h: f64 = y.iter().map(|yi| (wavenumber * yi / r - phase).cos()).sum();
                r * (1.0 + amplitude * h)
            }
        }
    }

    /// `Φ(x)`; zero at the origin by continuity.
    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_len(x)?;
        check_finite(x)?;
        Ok(self.value_unchecked(x))
    }

    fn check_len(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Domain(format!(
                "expected a vector of length {}, got {}",
                self.dim,
                x.len()
            )));
        }
        Ok(())
    }

    /// Gradient and Hessian of the untransformed integrand at `y ≠ 0`.
    fn base_derivatives(&self, y: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.dim;
        match &self.kind {
            Kind::Isotropic => {
                let r = y.norm();
                let u = y / r;
                let p = DMatrix::identity(n, n) - &u * u.transpose();
                (u, p / r)
            }
            Kind::Ellipsoidal { q } => {
                let qy = q * y;
                let phi = y.dot(&qy).sqrt();
                let g = &qy / phi;
                let hess = (q - &g * g.transpose()) / phi;
                (g, hess)
            }
            Kind::Perturbed {
                amplitude,
                wavenumber,
                phase,
            } => {
                let (a, k, theta) = (*amplitude, *wavenumber, *phase);
                let r = y.norm();
                let u = y / r;
                let h: f64 = u.iter().map(|ui| (k * ui - theta).cos()).sum();
                let g = u.map(|ui| -k * (k * ui - theta).sin());
                let big_g = DMatrix::from_diagonal(&u.map(|ui| -k * k * (k * ui - theta).cos()));
                let ug = u.dot(&g);
                let p = DMatrix::identity(n, n) - &u * u.transpose();
                let pg = &g - &u * ug;
                let grad = &u + (&u * h + pg) * a;
                let hess = (&p + (&p * (h - ug) + &p * big_g * &p) * a) / r;
                (grad, hess)
            }
        }
    }

    /// `∇Φ(x)`, zero-homogeneous; undefined at the origin.
    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(x)?;
        check_nonzero(x, "gradient")?;
        let y = self.apply_signs(x);
        let (g, _) = self.base_derivatives(&y);
        Ok(self.apply_signs(&g))
    }

    /// `D²Φ(x)`, symmetric, (−1)-homogeneous and annihilating `x`.
    pub fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_len(x)?;
        check_nonzero(x, "hessian")?;
        let y = self.apply_signs(x);
        let (_, h) = self.base_derivatives(&y);
        Ok(DMatrix::from_fn(self.dim, self.dim, |i, j| {
            self.signs[i] * self.signs[j] * h[(i, j)]
        }))
    }

    /// `D²_TΦ(ν)`, the Hessian restricted to the tangent plane of the sphere
    /// at `ν`. Its inverse is the second fundamental form of `∂K` at `∇Φ(ν)`.
    pub fn tangential_hessian(&self, nu: &SphereDirection) -> Result<TangentOperator> {
        let v = nu.as_vector();
        self.check_len(v)?;
        let hess = self.hessian(v)?;
        let basis = tangent_basis(v);
        let matrix = linalg::symmetrize(&(basis.transpose() * hess * &basis));
        Ok(TangentOperator { basis, matrix })
    }

    /// `∇Φ` applied to unit directions: points of `∂K` whose outer normal is
    /// the input direction.
    pub fn wulff_boundary_map(&self, samples: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        samples
            .iter()
            .map(|s| {
                self.check_len(s)?;
                let norm = s.norm();
                if (norm - 1.0).abs() > SphereDirection::TOLERANCE {
                    return Err(Error::Domain(format!(
                        "boundary map sample must be unit, got |x| = {norm}"
                    )));
                }
                self.gradient(s)
            })
            .collect()
    }

    /// `φ(z) = Φ(−z, 1)` together with `∇φ(z) = −∇'Φ(−z, 1)` and
    /// `D²φ(z) = D²'Φ(−z, 1)` (primes: first `n` components).
    pub fn graph_integrand(&self, z: &[f64]) -> GraphIntegrand {
        let n = self.base_dim();
        assert_eq!(z.len(), n, "gradient vector has wrong length");
        let mut x = DVector::zeros(self.dim);
        for i in 0..n {
            x[i] = -z[i];
        }
        x[n] = 1.0;
        let y = self.apply_signs(&x);
        let value = self.value_unchecked(&x);
        let (g, h) = self.base_derivatives(&y);
        let gradient = DVector::from_fn(n, |i, _| -self.signs[i] * g[i]);
        let hessian = DMatrix::from_fn(n, n, |i, j| self.signs[i] * self.signs[j] * h[(i, j)]);
        GraphIntegrand {
            value,
            gradient,
            hessian,
        }
    }

    /// Only `φ(z)`; cheaper than [`Self::graph_integrand`] in quadrature loops.
    pub fn graph_value(&self, z: &[f64]) -> f64 {
        let n = self.base_dim();
        let mut x = DVector::zeros(self.dim);
        for i in 0..n {
            x[i] = -z[i];
        }
        x[n] = 1.0;
        self.value_unchecked(&x)
    }

    /// Sampled eigenvalue range of `D²φ(z)` over `|z| ≤ g`.
    ///
    /// Samples form polar rings (disk), a uniform segment (`n = 1`) or lattice
    /// directions times radii (`n ≥ 3`); the outer ring sits exactly at `|z| = g`.
    pub fn ellipticity_bounds(&self, gradient_bound: f64) -> Result<EllipticityBounds> {
        if !(gradient_bound > 0.0 && gradient_bound.is_finite()) {
            return Err(param("gradient_bound", "must be positive and finite"));
        }
        let n = self.base_dim();
        let g = gradient_bound;
        let mut points: Vec<Vec<f64>> = Vec::new();
        match n {
            1 => {
                for k in 0..=400 {
                    points.push(vec![-g + 2.0 * g * k as f64 / 400.0]);
                }
            }
            2 => {
                points.push(vec![0.0, 0.0]);
                for ring in 1..=40 {
                    let rad = g * ring as f64 / 40.0;
                    let count = 8 * ring;
                    for k in 0..count {
                        let t = std::f64::consts::TAU * k as f64 / count as f64;
                        points.push(vec![rad * t.cos(), rad * t.sin()]);
                    }
                }
            }
            _ => {
                points.push(vec![0.0; n]);
                for dir in sphere_lattice(n, 400) {
                    for ring in 1..=20 {
                        let rad = g * ring as f64 / 20.0;
                        points.push(dir.iter().map(|d| d * rad).collect());
                    }
                }
            }
        }
        let extremes = |z: &[f64]| {
            let eig = sym_eigenvalues(&self.graph_integrand(z).hessian);
            (eig[0], eig[eig.len() - 1])
        };
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut arg_lo, mut arg_hi) = (points[0].clone(), points[0].clone());
        for z in &points {
            let (a, b) = extremes(z);
            if a <= 0.0 {
                return Err(Error::Integrity(format!("D²φ is not positive definite at z = {z:?} (eigenvalue {a:.3e})")));
            }
            if a < lo {
                (lo, arg_lo) = (a, z.clone());
            }
            if b > hi {
                (hi, arg_hi) = (b, z.clone());
            }
        }
        // Polish both extremes by a compass search inside the ball.
        let step0 = g / 20.0;
        lo = compass_search(arg_lo, step0, g, |z| extremes(z).0);
        hi = -compass_search(arg_hi, step0, g, |z| -extremes(z).1);
        Ok(EllipticityBounds {
            gradient_bound,
            min: lo,
            max: hi,
        })
    }

    /// Range of the eigenvalues of `D²_TΦ` over a sphere lattice; these are
    /// the principal curvature radii of `∂K`.
    pub fn curvature_radius_bounds(&self, lattice: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for nu in sphere_lattice(self.dim, lattice) {
            let hess = match self.hessian(&nu) {
                Ok(h) => h,
                Err(_) => return (f64::NAN, f64::NAN),
            };
            let t = tangent_basis(&nu);
            let eig = sym_eigenvalues(&linalg::symmetrize(&(t.transpose() * hess * &t)));
            lo = lo.min(eig[0]);
            hi = hi.max(eig[eig.len() - 1]);
        }
        (lo, hi)
    }

    /// Largest `|∇Φ(ν)|` over a lattice: radius of a ball containing `K`.
    pub fn outer_radius(&self, lattice: usize) -> f64 {
        sphere_lattice(self.dim, lattice)
            .iter()
            .filter_map(|nu| self.gradient(nu).ok())
            .map(|g| g.norm())
            .fold(0.0, f64::max)
    }
}

/// Minimizes `f` over `|z| ≤ radius` by coordinate steps that halve on failure.
fn compass_search(mut z: Vec<f64>, mut step: f64, radius: f64, f: impl Fn(&[f64]) -> f64) -> f64 {
    let mut best = f(&z);
    while step > 1e-9 * radius.max(1.0) {
        let mut moved = false;
        for i in 0..z.len() {
            for sign in [1.0, -1.0] {
                let mut trial = z.clone();
                trial[i] += sign * step;
                if trial.iter().map(|t| t * t).sum::<f64>() > radius * radius {
                    let norm = trial.iter().map(|t| t * t).sum::<f64>().sqrt();
                    trial.iter_mut().for_each(|t| *t *= radius / norm);
                }
                let v = f(&trial);
                if v < best {
                    (best, z, moved) = (v, trial, true);
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    best
}

/// Finite-difference estimate of the shape operator of `∂K` at `∇Φ(ν)`.
///
/// Moves `ν` along each tangent basis vector, maps through `∇Φ` and inverts
/// the resulting difference quotients. Returned in the basis of
/// [`AnisotropyIntegrand::tangential_hessian`].
pub fn fd_wulff_shape_operator(
    phi: &AnisotropyIntegrand,
    nu: &SphereDirection,
    step: f64,
) -> Result<DMatrix<f64>> {
    let dy = fd_boundary_tangents(phi, nu, step)?;
    let basis = tangent_basis(nu.as_vector());
    let coords = basis.transpose() * dy;
    coords
        .try_inverse()
        .ok_or_else(|| Error::Integrity("boundary map is singular: K is not uniformly convex".into()))
}

/// Central differences of `∇Φ` along the tangent basis at `ν`; the columns
/// span the tangent plane of `∂K` at `∇Φ(ν)`.
pub fn fd_boundary_tangents(
    phi: &AnisotropyIntegrand,
    nu: &SphereDirection,
    step: f64,
) -> Result<DMatrix<f64>> {
    let v = nu.as_vector();
    let basis = tangent_basis(v);
    let k = basis.ncols();
    let mut dy = DMatrix::zeros(phi.dim(), k);
    for a in 0..k {
        let t = basis.column(a).into_owned();
        let plus = (v + &t * step).normalize();
        let minus = (v - &t * step).normalize();
        let d = (phi.gradient(&plus)? - phi.gradient(&minus)?) / (2.0 * step);
        dy.set_column(a, &d);
    }
    Ok(dy)
}

/// Outer unit normal of `∂K` at `∇Φ(ν)` estimated from finite-difference
/// tangents; oriented to have positive inner product with `ν`.
pub fn fd_wulff_normal(phi: &AnisotropyIntegrand, nu: &SphereDirection, step: f64) -> Result<DVector<f64>> {
    let dy = fd_boundary_tangents(phi, nu, step)?;
    let n = phi.dim();
    // The normal spans the kernel of dyᵀ: smallest left singular vector of dy.
    let full = DMatrix::from_fn(n, n, |i, j| if j < dy.ncols() { dy[(i, j)] } else { 0.0 });
    let svd = full.svd(true, false);
    let u = svd.u.ok_or_else(|| Error::Integrity("SVD failed".into()))?;
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let mut normal = u.column(idx).into_owned();
    if normal.dot(nu.as_vector()) < 0.0 {
        normal = -normal;
    }
    Ok(normal)
}

/// Maxima of the identity residuals checked by [`verify_identities`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentityReport {
    pub homogeneity: f64,
    pub hessian_kernel: f64,
    pub normal_identity: f64,
    pub curvature_identity: f64,
    pub calibration_slack_min: f64,
    pub calibration_equality: f64,
    pub curvature_radius_min: f64,
    pub curvature_radius_max: f64,
}

/// Thresholds applied to an [`IdentityReport`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentityTolerances {
    pub homogeneity: f64,
    pub hessian_kernel: f64,
    pub normal_identity: f64,
    pub curvature_identity: f64,
    pub calibration_slack: f64,
}

impl Default for IdentityTolerances {
    fn default() -> Self {
        Self {
            homogeneity: 1e-10,
            hessian_kernel: 1e-8,
            normal_identity: 1e-5,
            curvature_identity: 1e-5,
            calibration_slack: 1e-10,
        }
    }
}

impl IdentityReport {
    /// Named failures; empty when everything holds.
    pub fn failures(&self, tol: &IdentityTolerances) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |ok: bool, name: &str, value: f64, bound: f64| {
            if !ok {
                out.push(format!("{name}: {value:.3e} exceeds {bound:.1e}"));
            }
        };
        check(self.homogeneity <= tol.homogeneity, "one-homogeneity", self.homogeneity, tol.homogeneity);
        check(
            self.hessian_kernel <= tol.hessian_kernel,
            "D²Φ(x)x = 0",
            self.hessian_kernel,
            tol.hessian_kernel,
        );
        check(
            self.normal_identity <= tol.normal_identity,
            "ν_K(∇Φ(x)) = x",
            self.normal_identity,
            tol.normal_identity,
        );
        check(
            self.curvature_identity <= tol.curvature_identity,
            "II_K(∇Φ(x)) = (D²_TΦ)⁻¹(x)",
            self.curvature_identity,
            tol.curvature_identity,
        );
        check(
            self.calibration_slack_min >= -tol.calibration_slack,
            "∇Φ(b)·a ≤ Φ(a)",
            -self.calibration_slack_min,
            tol.calibration_slack,
        );
        out
    }
}

/// Samples the defining identities of a Wulff integrand on deterministic
/// sphere lattices.
///
/// - one-homogeneity at `t ∈ {0.5, 2, 10}` (relative error);
/// - `|D²Φ(x)x| / |D²Φ(x)|`;
/// - the finite-difference outer normal of `∂K` at `∇Φ(x)` against `x`;
/// - `D²_TΦ(ν) · II_K` against the identity, `II_K` by finite differences;
/// - `Φ(a) − ∇Φ(b)·a` over `b_count × a_count` pairs, and its value at `b = a`.
pub fn verify_identities(phi: &AnisotropyIntegrand, b_count: usize, a_count: usize) -> Result<IdentityReport> {
    let dim = phi.dim();
    let dirs = sphere_lattice(dim, b_count);
    let probes = sphere_lattice(dim, a_count);
    let fd_step = 1e-4;

    let mut homogeneity = 0.0_f64;
    let mut kernel = 0.0_f64;
    let mut normal_err = 0.0_f64;
    let mut curvature_err = 0.0_f64;
    let mut lo_r = f64::INFINITY;
    let mut hi_r = f64::NEG_INFINITY;
    for x in &dirs {
        let base = phi.value(x)?;
        for t in [0.5, 2.0, 10.0] {
            let scaled = phi.value(&(x * t))?;
            homogeneity = homogeneity.max((scaled - t * base).abs() / (t * base));
        }
        let hess = phi.hessian(x)?;
        kernel = kernel.max((&hess * x).norm() / hess.norm().max(f64::MIN_POSITIVE));

        let nu = SphereDirection::new(x.clone())?;
        let normal = fd_wulff_normal(phi, &nu, fd_step)?;
        normal_err = normal_err.max((normal - x).norm());

        let dt = phi.tangential_hessian(&nu)?;
        let shape = fd_wulff_shape_operator(phi, &nu, fd_step)?;
        let k = dt.matrix.nrows();
        curvature_err = curvature_err.max((&dt.matrix * shape - DMatrix::<f64>::identity(k, k)).amax());
        let eig = dt.eigenvalues();
        lo_r = lo_r.min(eig[0]);
        hi_r = hi_r.max(eig[k - 1]);
    }

    let grads: Vec<DVector<f64>> = dirs.iter().map(|b| phi.gradient(b)).collect::<Result<_>>()?;
    let mut slack_min = f64::INFINITY;
    let mut equality = 0.0_f64;
    for a in &probes {
        let phi_a = phi.value(a)?;
        for g in &grads {
            slack_min = slack_min.min(phi_a - g.dot(a));
        }
        equality = equality.max((phi_a - phi.gradient(a)?.dot(a)).abs());
    }

    Ok(IdentityReport {
        homogeneity,
        hessian_kernel: kernel,
        normal_identity: normal_err,
        curvature_identity: curvature_err,
        calibration_slack_min: slack_min,
        calibration_equality: equality,
        curvature_radius_min: lo_r,
        curvature_radius_max: hi_r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn ellipsoid_diag(d: &[f64]) -> AnisotropyIntegrand {
        AnisotropyIntegrand::ellipsoidal(DMatrix::from_diagonal(&v(d))).unwrap()
    }

    fn families() -> Vec<AnisotropyIntegrand> {
        let q = DMatrix::from_row_slice(3, 3, &[3.0, 0.4, -0.2, 0.4, 1.5, 0.3, -0.2, 0.3, 0.8]);
        vec![
            AnisotropyIntegrand::isotropic(3).unwrap(),
            AnisotropyIntegrand::ellipsoidal(q).unwrap(),
            AnisotropyIntegrand::perturbed_isotropic(3, 0.03, 2.0, 0.7).unwrap(),
            AnisotropyIntegrand::perturbed_isotropic(3, 0.03, 2.0, 0.7).unwrap().negated(),
            AnisotropyIntegrand::isotropic(2).unwrap(),
        ]
    }

    #[test]
    fn value_examples() {
        let iso = AnisotropyIntegrand::isotropic(3).unwrap();
        assert_eq!(iso.value(&v(&[0.0, 0.0, 1.0])).unwrap(), 1.0);
        let ell = ellipsoid_diag(&[4.0, 1.0, 1.0]);
        assert_eq!(ell.value(&v(&[1.0, 0.0, 0.0])).unwrap(), 2.0);
        assert_eq!(ell.value(&v(&[0.0, 0.0, 0.0])).unwrap(), 0.0);
        assert!(matches!(iso.value(&v(&[f64::NAN, 0.0, 1.0])), Err(Error::Domain(_))));
        for phi in families() {
            let x = DVector::from_fn(phi.dim(), |i, _| 0.3 + 0.2 * i as f64);
            let ratio = phi.value(&(&x * 2.0)).unwrap() / phi.value(&x).unwrap();
            assert_relative_eq!(ratio, 2.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn gradient_examples() {
        let iso = AnisotropyIntegrand::isotropic(3).unwrap();
        assert_eq!(iso.gradient(&v(&[0.0, 0.0, 1.0])).unwrap(), v(&[0.0, 0.0, 1.0]));
        let ell = ellipsoid_diag(&[4.0, 1.0, 1.0]);
        assert_eq!(ell.gradient(&v(&[1.0, 0.0, 0.0])).unwrap(), v(&[2.0, 0.0, 0.0]));
        assert!(matches!(iso.gradient(&v(&[0.0, 0.0, 0.0])), Err(Error::Domain(_))));
        assert!(matches!(iso.hessian(&v(&[0.0, 0.0, 0.0])), Err(Error::Domain(_))));
        for phi in families() {
            let x = DVector::from_fn(phi.dim(), |i, _| 0.5 - 0.4 * i as f64);
            let g1 = phi.gradient(&x).unwrap();
            let g2 = phi.gradient(&(&x * 2.0)).unwrap();
            assert!((g1 - g2).norm() < 1e-14);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_of_value() {
        let step = 1e-6;
        for phi in families() {
            for x in sphere_lattice(phi.dim(), 30) {
                let g = phi.gradient(&x).unwrap();
                for i in 0..phi.dim() {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += step;
                    xm[i] -= step;
                    let fd = (phi.value(&xp).unwrap() - phi.value(&xm).unwrap()) / (2.0 * step);
                    assert!((fd - g[i]).abs() < 1e-8, "component {i}: fd {fd} vs {}", g[i]);
                }
            }
        }
    }

    #[test]
    fn hessian_examples_and_fd_oracle() {
        let iso = AnisotropyIntegrand::isotropic(3).unwrap();
        let h = iso.hessian(&v(&[0.0, 0.0, 1.0])).unwrap();
        let expected = DMatrix::from_diagonal(&v(&[1.0, 1.0, 0.0]));
        assert!((h - expected).norm() < 1e-15);

        for phi in families() {
            for x in sphere_lattice(phi.dim(), 40) {
                let h = phi.hessian(&x).unwrap();
                assert!((&h * &x).norm() <= 1e-10 * h.norm().max(1.0));
                assert!(crate::linalg::asymmetry(&h) < 1e-14);
                let h2 = phi.hessian(&(&x * 2.0)).unwrap();
                assert!((&h * 0.5 - h2).norm() < 1e-13);
            }
        }

        // Central differences of the gradient: error shrinks like step².
        let q = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 0.5]);
        let ell = AnisotropyIntegrand::ellipsoidal(q).unwrap();
        let x = v(&[0.3, -0.5, 0.8]).normalize();
        let h = ell.hessian(&x).unwrap();
        let fd_err = |step: f64| {
            let mut err = 0.0_f64;
            for j in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += step;
                xm[j] -= step;
                let col = (ell.gradient(&xp).unwrap() - ell.gradient(&xm).unwrap()) / (2.0 * step);
                err = err.max((col - h.column(j)).amax());
            }
            err
        };
        let (e1, e2) = (fd_err(1e-2), fd_err(5e-3));
        assert!(e1 < 1e-3);
        let rate = (e1 / e2).log2();
        assert!((rate - 2.0).abs() < 0.2, "fd rate {rate}");
    }

    #[test]
    fn tangential_hessian_isotropic_is_identity() {
        let iso = AnisotropyIntegrand::isotropic(3).unwrap();
        for x in sphere_lattice(3, 25) {
            let t = iso.tangential_hessian(&SphereDirection::new(x).unwrap()).unwrap();
            assert!((t.matrix.clone() - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
            for e in t.eigenvalues() {
                assert_relative_eq!(e, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn tangential_hessian_inverts_wulff_second_fundamental_form() {
        let q = DMatrix::from_row_slice(3, 3, &[4.0, 0.5, 0.0, 0.5, 1.0, 0.2, 0.0, 0.2, 2.0]);
        let ell = AnisotropyIntegrand::ellipsoidal(q).unwrap();
        for x in sphere_lattice(3, 30) {
            let nu = SphereDirection::new(x).unwrap();
            let t = ell.tangential_hessian(&nu).unwrap();
            let shape = fd_wulff_shape_operator(&ell, &nu, 1e-4).unwrap();
            let prod = &t.matrix * shape;
            assert!((prod - DMatrix::<f64>::identity(2, 2)).amax() < 1e-6);
        }
    }

    #[test]
    fn boundary_map_examples() {
        let iso = AnisotropyIntegrand::isotropic(3).unwrap();
        let samples = sphere_lattice(3, 20);
        let images = iso.wulff_boundary_map(&samples).unwrap();
        for (s, y) in samples.iter().zip(&images) {
            assert!((s - y).norm() < 1e-15);
        }
        let ell = ellipsoid_diag(&[4.0, 1.0, 1.0]);
        let qinv = DMatrix::from_diagonal(&v(&[0.25, 1.0, 1.0]));
        for y in ell.wulff_boundary_map(&samples).unwrap() {
            assert!((y.dot(&(&qinv * &y)) - 1.0).abs() < 1e-10);
        }
        let two = vec![v(&[1.0, 0.0, 0.0]), v(&[0.0, 1.0, 0.0])];
        let out = ell.wulff_boundary_map(&two).unwrap();
        assert!((&out[0] - &out[1]).norm() > 0.1);
        assert!(ell.wulff_boundary_map(&[v(&[2.0, 0.0, 0.0])]).is_err());
    }

    #[test]
    fn graph_integrand_examples() {
        let iso = AnisotropyIntegrand::isotropic(3).unwrap();
        let gi = iso.graph_integrand(&[0.0, 0.0]);
        assert_eq!(gi.value, 1.0);
        assert_eq!(gi.gradient.norm(), 0.0);
        assert!((gi.hessian - DMatrix::<f64>::identity(2, 2)).norm() < 1e-15);

        let ell = ellipsoid_diag(&[2.0, 3.0, 5.0]);
        let z = [0.4, -1.2];
        let expected = (2.0 * z[0] * z[0] + 3.0 * z[1] * z[1] + 5.0_f64).sqrt();
        assert_relative_eq!(ell.graph_integrand(&z).value, expected, max_relative = 1e-15);
    }

    #[test]
    fn graph_integrand_derivatives_match_finite_differences() {
        let step = 1e-4;
        for phi in families() {
            let n = phi.base_dim();
            for k in 0..20 {
                let z: Vec<f64> = (0..n).map(|i| ((k * 7 + i * 3) as f64 * 0.37).sin() * 1.5).collect();
                let gi = phi.graph_integrand(&z);
                for i in 0..n {
                    let mut zp = z.clone();
                    let mut zm = z.clone();
                    zp[i] += step;
                    zm[i] -= step;
                    let dv = (phi.graph_value(&zp) - phi.graph_value(&zm)) / (2.0 * step);
                    assert!((dv - gi.gradient[i]).abs() <= 1e-6 * gi.gradient[i].abs().max(1.0));
                    let dg = (phi.graph_integrand(&zp).gradient - phi.graph_integrand(&zm).gradient) / (2.0 * step);
                    for j in 0..n {
                        assert!((dg[j] - gi.hessian[(j, i)]).abs() <= 1e-6 * gi.hessian[(j, i)].abs().max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn ellipticity_bounds_isotropic() {
        let iso = AnisotropyIntegrand::isotropic(3).unwrap();
        let b = iso.ellipticity_bounds(1.0).unwrap();
        assert_relative_eq!(b.min, 2f64.powf(-1.5), max_relative = 1e-12);
        assert_relative_eq!(b.max, 1.0, max_relative = 1e-12);
        let small = iso.ellipticity_bounds(1e-6).unwrap();
        assert_relative_eq!(small.min, 1.0, max_relative = 1e-10);
        assert_relative_eq!(small.max, 1.0, max_relative = 1e-10);
        assert!(iso.ellipticity_bounds(0.0).is_err());
    }

    #[test]
    fn perturbation_that_breaks_convexity_is_rejected() {
        let err = AnisotropyIntegrand::perturbed_isotropic(3, 0.5, 6.0, 0.3).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
    }

    #[test]
    fn non_spd_matrix_is_rejected() {
        let q = DMatrix::from_diagonal(&v(&[1.0, -1.0, 1.0]));
        assert!(AnisotropyIntegrand::ellipsoidal(q).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(AnisotropyIntegrand::ellipsoidal(asym).is_err());
    }

    #[test]
    fn orientation_transforms() {
        let phi = AnisotropyIntegrand::perturbed_isotropic(3, 0.04, 2.0, 0.9).unwrap();
        let x = v(&[0.2, -0.7, 0.4]);
        let neg = phi.negated();
        assert_relative_eq!(neg.value(&x).unwrap(), phi.value(&-&x).unwrap(), max_relative = 1e-15);
        assert!((neg.gradient(&x).unwrap() + phi.gradient(&-&x).unwrap()).norm() < 1e-14);
        let mir = phi.graph_mirror();
        let z = [0.3, -0.1];
        // φ_mirror(z) = Φ(z, 1) = φ(−z)
        assert_relative_eq!(mir.graph_value(&z), phi.graph_value(&[-0.3, 0.1]), max_relative = 1e-15);
        let a = mir.graph_integrand(&z).hessian;
        let b = phi.graph_integrand(&[-0.3, 0.1]).hessian;
        assert!((a - b).norm() < 1e-14);
    }

    #[test]
    fn verify_identities_passes_on_families() {
        for phi in families() {
            let report = verify_identities(&phi, 200, 50).unwrap();
            let failures = report.failures(&IdentityTolerances::default());
            assert!(failures.is_empty(), "{failures:?}");
            assert!(report.calibration_equality < 1e-12);
        }
    }

    #[test]
    fn sphere_direction_validation() {
        assert!(SphereDirection::new(v(&[1.0, 1.0])).is_err());
        assert!(SphereDirection::normalize(v(&[0.0, 0.0])).is_err());
        assert!(SphereDirection::normalize(v(&[3.0, 4.0])).is_ok());
    }
}
