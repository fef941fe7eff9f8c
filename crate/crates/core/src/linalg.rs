//! Small dense complex matrices for per-bin spatial statistics.
//!
//! Array sizes here are tiny (M ≤ 8, RLS regressors ≤ a few dozen), so plain
//! row-major `Vec`s beat pulling in a general linear-algebra crate.

use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Self {
        let dim = rows.len();
        assert!(rows.iter().all(|r| r.len() == dim), "matrix must be square");
        Self {
            dim,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(*d, 0.0);
        }
        m
    }

    /// `v·vᴴ`
    pub fn outer(v: &[Complex64]) -> Self {
        let mut m = Self::zeros(v.len());
        m.add_outer(v, 1.0);
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    /// `self += scale · v·vᴴ`
    #[inline]
    pub fn add_outer(&mut self, v: &[Complex64], scale: f64) {
        let d = self.dim;
        for i in 0..d {
            let vi = v[i] * scale;
            let row = &mut self.data[i * d..(i + 1) * d];
            for (a, vj) in row.iter_mut().zip(v) {
                *a += vi * vj.conj();
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut m = self.clone();
        m.scale(s);
        m
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        let d = self.dim;
        (0..d)
            .map(|i| {
                self.data[i * d..(i + 1) * d]
                    .iter()
                    .zip(v)
                    .map(|(a, x)| a * x)
                    .sum()
            })
            .collect()
    }

    pub fn conj_transpose(&self) -> Self {
        let d = self.dim;
        let mut m = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                m[(j, i)] = self[(i, j)].conj();
            }
        }
        m
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Real part of the trace.
    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self[(i, i)].re).sum()
    }

    /// `‖A − Aᴴ‖_F`
    pub fn hermitian_defect(&self) -> f64 {
        self.sub(&self.conj_transpose()).frobenius_norm()
    }

    /// Overwrites the lower triangle with the conjugate of the upper one and
    /// zeroes imaginary parts on the diagonal.
    pub fn symmetrize(&mut self) {
        let d = self.dim;
        for i in 0..d {
            self[(i, i)].im = 0.0;
            for j in (i + 1)..d {
                let avg = (self[(i, j)] + self[(j, i)].conj()) * 0.5;
                self[(i, j)] = avg;
                self[(j, i)] = avg.conj();
            }
        }
    }

    fn off_diagonal_norm(&self) -> f64 {
        let d = self.dim;
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    s += self[(i, j)].norm_sqr();
                }
            }
        }
        s.sqrt()
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

pub fn dot_conj(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigendecomposition of a Hermitian matrix. Eigenvalues are sorted in
/// descending order; `vectors[i]` pairs with `values[i]`.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<Complex64>>,
}

impl HermitianEigen {
    pub fn reconstruct(&self) -> CMatrix {
        let d = self.values.len();
        let mut m = CMatrix::zeros(d);
        for (lambda, v) in self.values.iter().zip(&self.vectors) {
            m.add_outer(v, *lambda);
        }
        m
    }
}

/// Cyclic complex Jacobi rotations.
pub fn hermitian_eigen(a: &CMatrix) -> HermitianEigen {
    let d = a.dim();
    let mut work = a.clone();
    work.symmetrize();
    let mut q = CMatrix::identity(d);
    let scale = work.frobenius_norm();

    for _sweep in 0..64 {
        if work.off_diagonal_norm() <= 1e-15 * scale || scale == 0.0 {
            break;
        }
        for p in 0..d {
            for r in (p + 1)..d {
                let apr = work[(p, r)];
                let b = apr.norm();
                if b == 0.0 {
                    continue;
                }
                let phase = apr / b;
                let tau = (work[(r, r)].re - work[(p, p)].re) / (2.0 * b);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // V = diag(1, conj(phase)) · [[c, s], [-s, c]]
                let vpp = Complex64::new(c, 0.0);
                let vpr = Complex64::new(s, 0.0);
                let vrp = -phase.conj() * s;
                let vrr = phase.conj() * c;

                for i in 0..d {
                    let (x, y) = (work[(i, p)], work[(i, r)]);
                    work[(i, p)] = x * vpp + y * vrp;
                    work[(i, r)] = x * vpr + y * vrr;
                }
                for j in 0..d {
                    let (x, y) = (work[(p, j)], work[(r, j)]);
                    work[(p, j)] = vpp.conj() * x + vrp.conj() * y;
                    work[(r, j)] = vpr.conj() * x + vrr.conj() * y;
                }
                work[(p, r)] = ZERO;
                work[(r, p)] = ZERO;
                work[(p, p)].im = 0.0;
                work[(r, r)].im = 0.0;
                for i in 0..d {
                    let (x, y) = (q[(i, p)], q[(i, r)]);
                    q[(i, p)] = x * vpp + y * vrp;
                    q[(i, r)] = x * vpr + y * vrr;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| work[(j, j)].re.total_cmp(&work[(i, i)].re));
    HermitianEigen {
        values: order.iter().map(|&i| work[(i, i)].re).collect(),
        vectors: order
            .iter()
            .map(|&i| (0..d).map(|row| q[(row, i)]).collect())
            .collect(),
    }
}

/// Outcome of [`principal_eigenpair`].
#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vec<Complex64>,
    pub iterations: usize,
    /// True when power iteration missed its residual target and the result
    /// came from the full Jacobi decomposition instead.
    pub used_fallback: bool,
}

pub const POWER_MAX_ITERATIONS: usize = 200;

/// Dominant eigenpair of a Hermitian positive semidefinite matrix by power
/// iteration. Returns `None` for the zero matrix.
pub fn principal_eigenpair(a: &CMatrix) -> Option<Eigenpair> {
    let d = a.dim();
    let trace = a.trace();
    if !(trace > 0.0) || a.frobenius_norm() == 0.0 {
        return None;
    }
    // fixed, generic start direction: never orthogonal to the dominant
    // eigenvector except on a measure-zero set
    let mut v: Vec<Complex64> = (0..d)
        .map(|j| Complex64::from_polar(1.0 + 0.37 * j as f64, 0.7 * j as f64 + 0.3))
        .collect();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);

    let mut value = 0.0;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < POWER_MAX_ITERATIONS {
        iterations += 1;
        let w = a.mul_vec(&v);
        value = dot_conj(&v, &w).re;
        let scale = value.max(trace / d as f64);
        residual = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - vi * value).norm_sqr())
            .sum::<f64>()
            .sqrt()
            / scale;
        if residual <= 1e-12 {
            break;
        }
        let wn = norm(&w);
        if wn == 0.0 {
            break;
        }
        v = w.into_iter().map(|x| x / wn).collect();
    }

    let trustworthy = residual <= 1e-10 && value >= trace / d as f64 * (1.0 - 1e-9);
    if trustworthy {
        return Some(Eigenpair {
            value,
            vector: v,
            iterations,
            used_fallback: false,
        });
    }
    let eig = hermitian_eigen(a);
    Some(Eigenpair {
        value: eig.values[0],
        vector: eig.vectors[0].clone(),
        iterations,
        used_fallback: true,
    })
}
