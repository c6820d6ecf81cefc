//! Small dense helpers shared by the geometric modules.

use nalgebra::{DMatrix, DVector};

/// Orthonormal basis of the hyperplane `ν^⊥`, returned as the columns of an
/// `N × (N−1)` matrix.
///
/// Built from the Householder reflection that maps `e_N` to `ν`, so the basis
/// depends smoothly on `ν` away from `ν = −e_N` and is deterministic.
pub fn tangent_basis(nu: &DVector<f64>) -> DMatrix<f64> {
    let n = nu.len();
    let mut e = DVector::zeros(n);
    e[n - 1] = 1.0;
    // Reflect along whichever of ν ∓ e_N is better conditioned.
    let v = if nu[n - 1] >= 0.0 { nu - &e } else { nu + &e };
    let vv = v.dot(&v);
    let mut h = DMatrix::identity(n, n);
    if vv > 1e-300 {
        h -= (&v * v.transpose()) * (2.0 / vv);
    }
    // Column N−1 of H is ±ν; the remaining columns span ν^⊥.
    h.columns(0, n - 1).into_owned()
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let eig = a.clone().symmetric_eigen();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|x, y| x.total_cmp(y));
    vals
}

/// Largest absolute antisymmetric entry `|a_ij − a_ji| / 2`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            worst = worst.max(0.5 * (a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Deterministic pairwise (tree) summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Deterministic point set on the unit sphere `S^{dim−1}`.
///
/// `dim = 2` gives equally spaced angles, `dim = 3` the Fibonacci spiral.
/// Higher dimensions normalize Box–Muller images of a Kronecker sequence.
pub fn sphere_lattice(dim: usize, count: usize) -> Vec<DVector<f64>> {
    assert!(dim >= 2, "sphere lattice needs ambient dimension >= 2");
    let count = count.max(1);
    match dim {
        2 => (0..count)
            .map(|k| {
                let t = std::f64::consts::TAU * (k as f64 + 0.5) / count as f64;
                DVector::from_vec(vec![t.cos(), t.sin()])
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let rho = (1.0 - z * z).max(0.0).sqrt();
                    let t = golden * k as f64;
                    DVector::from_vec(vec![rho * t.cos(), rho * t.sin(), z])
                })
                .collect()
        }
        _ => {
            const PRIMES: [f64; 12] = [2., 3., 5., 7., 11., 13., 17., 19., 23., 29., 31., 37.];
            let m = dim + dim % 2;
            (0..count)
                .map(|k| {
                    let mut v = DVector::zeros(dim);
                    for pair in 0..(m / 2) {
                        let a = ((k as f64 + 1.0) * PRIMES[(2 * pair) % 12].sqrt()).fract();
                        let b = ((k as f64 + 1.0) * PRIMES[(2 * pair + 1) % 12].sqrt()).fract();
                        let rad = (-2.0 * (1.0 - a).max(1e-300).ln()).sqrt();
                        let t = std::f64::consts::TAU * b;
                        v[2 * pair] = rad * t.cos();
                        if 2 * pair + 1 < dim {
                            v[2 * pair + 1] = rad * t.sin();
                        }
                    }
                    let norm = v.norm();
                    v / norm
                })
                .collect()
        }
    }
}
