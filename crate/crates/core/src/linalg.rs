//! Minimal dense linear algebra on row-major `f64` storage.
//!
//! The solvers in this crate need exactly three factorizations: Cholesky for
//! positive-definite systems, a symmetric-indefinite LDLᵀ (Bunch-Kaufman with
//! partial pivoting) for saddle-point systems, and cyclic Jacobi for
//! eigenvalues of small symmetric matrices. All of them declare singularity
//! through an explicit pivot threshold, `PIVOT_RTOL * max|a_ij|`, because the
//! onset of singularity is a quantity this crate measures rather than a
//! nuisance to be papered over.

use thiserror::Error;

/// Relative pivot threshold shared by the factorizations. A factorization
/// fails with [`LinalgError::Singular`] when a pivot magnitude falls below
/// `PIVOT_RTOL` times the max-norm of the input matrix.
pub const PIVOT_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    /// A pivot fell below the threshold; the index is the elimination step.
    #[error("matrix numerically singular at elimination step {0}")]
    Singular(usize),
    #[error("dimension mismatch: {0}")]
    Shape(String),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// xᵀ A y for a square matrix.
    pub fn bilinear_form(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.rows);
        x.iter()
            .zip(0..self.rows)
            .map(|(xi, i)| xi * dot(self.row(i), y))
            .sum()
    }

    /// wᵀ A w.
    pub fn quadratic_form(&self, w: &[f64]) -> f64 {
        self.bilinear_form(w, w)
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Compensated (Neumaier) dot product; used where accumulation over very long
/// series must not lose the last digits.
pub fn compensated_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut sum = 0.0;
    let mut comp = 0.0;
    for (x, y) in a.iter().zip(b) {
        let term = x * y;
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Cholesky factorization A = L Lᵀ of a symmetric positive-definite matrix.
///
/// A pivot `d = a_jj - Σ l_jk²` that falls below `PIVOT_RTOL * max|a_ij|`
/// makes the factorization fail: that is the operational definition of
/// "numerically singular" used by the portfolio solvers.
pub struct Cholesky {
    l: Mat,
}

impl Cholesky {
    pub fn factor(a: &Mat) -> Result<Self, LinalgError> {
        let n = a.rows();
        if a.cols() != n {
            return Err(LinalgError::Shape(format!(
                "cholesky needs a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let tol = PIVOT_RTOL * a.max_abs();
        let mut l = Mat::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > tol) {
                return Err(LinalgError::Singular(j));
            }
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.rows();
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        // forward: L y = b
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.l[(i, k)] * x[k];
            }
            x[i] /= self.l[(i, i)];
        }
        // backward: Lᵀ x = y
        for i in (0..n).rev() {
            for k in i + 1..n {
                x[i] -= self.l[(k, i)] * x[k];
            }
            x[i] /= self.l[(i, i)];
        }
        x
    }

    pub fn lower(&self) -> &Mat {
        &self.l
    }
}

enum PivotStep {
    /// 1x1 pivot at step k; rows/cols k and the stored index were swapped.
    Single { k: usize, swap: usize },
    /// 2x2 pivot block at (k, k+1); rows/cols k+1 and the stored index swapped.
    Pair { k: usize, swap: usize },
}

/// Symmetric-indefinite LDLᵀ factorization with Bunch-Kaufman partial
/// pivoting, for saddle-point (KKT) systems. Only the lower triangle of the
/// input is referenced. Pivot magnitudes below `PIVOT_RTOL * max|a_ij|`
/// report [`LinalgError::Singular`].
pub struct SymmetricIndefinite {
    n: usize,
    a: Mat,
    steps: Vec<PivotStep>,
}

// Bunch-Kaufman pivot selection constant (1 + sqrt(17)) / 8.
const BK_ALPHA: f64 = 0.6403882032022076;

impl SymmetricIndefinite {
    pub fn factor(input: &Mat) -> Result<Self, LinalgError> {
        let n = input.rows();
        if input.cols() != n {
            return Err(LinalgError::Shape(format!(
                "ldlt needs a square matrix, got {}x{}",
                input.rows(),
                input.cols()
            )));
        }
        let scale = input.max_abs();
        if scale == 0.0 && n > 0 {
            return Err(LinalgError::Singular(0));
        }
        let tol = PIVOT_RTOL * scale;
        let mut a = input.clone();
        let mut steps = Vec::new();

        let mut k = 0;
        while k < n {
            let absakk = a[(k, k)].abs();
            let (imax, colmax) = {
                let mut im = k;
                let mut cm = 0.0;
                for i in k + 1..n {
                    let v = a[(i, k)].abs();
                    if v > cm {
                        cm = v;
                        im = i;
                    }
                }
                (im, cm)
            };
            if absakk.max(colmax) < tol || !absakk.is_finite() {
                return Err(LinalgError::Singular(k));
            }

            let mut kstep = 1;
            let mut kp = k;
            if absakk < BK_ALPHA * colmax {
                // inspect row imax to decide between the three pivot kinds
                let mut rowmax = 0.0f64;
                for j in k..imax {
                    rowmax = rowmax.max(a[(imax, j)].abs());
                }
                for i in imax + 1..n {
                    rowmax = rowmax.max(a[(i, imax)].abs());
                }
                if absakk * rowmax >= BK_ALPHA * colmax * colmax {
                    kp = k;
                } else if a[(imax, imax)].abs() >= BK_ALPHA * rowmax {
                    kp = imax;
                } else {
                    kp = imax;
                    kstep = 2;
                }
            }

            let kk = k + kstep - 1;
            if kp != kk {
                sym_swap_lower(&mut a, k, kk, kp);
            }

            if kstep == 1 {
                let d = a[(k, k)];
                if d.abs() < tol {
                    return Err(LinalgError::Singular(k));
                }
                // trailing update A -= w wᵀ / d, then store L(k) = w / d
                for j in k + 1..n {
                    let wj = a[(j, k)];
                    if wj != 0.0 {
                        let f = wj / d;
                        for i in j..n {
                            a[(i, j)] -= a[(i, k)] * f;
                        }
                    }
                }
                for i in k + 1..n {
                    a[(i, k)] /= d;
                }
                steps.push(PivotStep::Single { k, swap: kp });
                k += 1;
            } else {
                // 2x2 block: columns k, k+1 hold W = L D; convert in place
                let d21 = a[(k + 1, k)];
                let d11 = a[(k + 1, k + 1)] / d21;
                let d22 = a[(k, k)] / d21;
                let t = d11 * d22 - 1.0;
                if t == 0.0 || !t.is_finite() {
                    return Err(LinalgError::Singular(k));
                }
                let scale = (1.0 / t) / d21;
                for j in k + 2..n {
                    let wk = scale * (d11 * a[(j, k)] - a[(j, k + 1)]);
                    let wk1 = scale * (d22 * a[(j, k + 1)] - a[(j, k)]);
                    for i in j..n {
                        a[(i, j)] -= a[(i, k)] * wk + a[(i, k + 1)] * wk1;
                    }
                    a[(j, k)] = wk;
                    a[(j, k + 1)] = wk1;
                }
                steps.push(PivotStep::Pair { k, swap: kp });
                k += 2;
            }
        }

        Ok(SymmetricIndefinite { n, a, steps })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(rhs.len(), n);
        let a = &self.a;
        let mut b = rhs.to_vec();

        // forward pass: apply interchanges and L⁻¹, then the block diagonal
        for step in &self.steps {
            match *step {
                PivotStep::Single { k, swap } => {
                    b.swap(k, swap);
                    let bk = b[k];
                    for i in k + 1..n {
                        b[i] -= a[(i, k)] * bk;
                    }
                    b[k] /= a[(k, k)];
                }
                PivotStep::Pair { k, swap } => {
                    b.swap(k + 1, swap);
                    let (bk, bk1) = (b[k], b[k + 1]);
                    for i in k + 2..n {
                        b[i] -= a[(i, k)] * bk + a[(i, k + 1)] * bk1;
                    }
                    let akm1k = a[(k + 1, k)];
                    let akm1 = a[(k, k)] / akm1k;
                    let ak = a[(k + 1, k + 1)] / akm1k;
                    let denom = akm1 * ak - 1.0;
                    let bkm1 = bk / akm1k;
                    let bkk = bk1 / akm1k;
                    b[k] = (ak * bkm1 - bkk) / denom;
                    b[k + 1] = (akm1 * bkk - bkm1) / denom;
                }
            }
        }

        // backward pass: apply L⁻ᵀ and the interchanges in reverse
        for step in self.steps.iter().rev() {
            match *step {
                PivotStep::Single { k, swap } => {
                    let mut s = b[k];
                    for i in k + 1..n {
                        s -= a[(i, k)] * b[i];
                    }
                    b[k] = s;
                    b.swap(k, swap);
                }
                PivotStep::Pair { k, swap } => {
                    let mut s0 = b[k];
                    let mut s1 = b[k + 1];
                    for i in k + 2..n {
                        s0 -= a[(i, k)] * b[i];
                        s1 -= a[(i, k + 1)] * b[i];
                    }
                    b[k] = s0;
                    b[k + 1] = s1;
                    b.swap(k + 1, swap);
                }
            }
        }
        b
    }
}

/// Symmetric interchange of rows/cols `p` and `q` (p < q) of the trailing
/// submatrix starting at `start`, touching only the lower triangle.
fn sym_swap_lower(a: &mut Mat, start: usize, p: usize, q: usize) {
    debug_assert!(start <= p && p < q);
    let n = a.rows();
    for j in start..p {
        let (x, y) = (a[(p, j)], a[(q, j)]);
        a[(p, j)] = y;
        a[(q, j)] = x;
    }
    for i in p + 1..q {
        let (x, y) = (a[(i, p)], a[(q, i)]);
        a[(i, p)] = y;
        a[(q, i)] = x;
    }
    for i in q + 1..n {
        let (x, y) = (a[(i, p)], a[(i, q)]);
        a[(i, p)] = y;
        a[(i, q)] = x;
    }
    let (x, y) = (a[(p, p)], a[(q, q)]);
    a[(p, p)] = y;
    a[(q, q)] = x;
}

/// Solve a symmetric (possibly indefinite) system with one step of iterative
/// refinement. Only the lower triangle of `a` is referenced.
pub fn solve_symmetric(a: &Mat, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let f = SymmetricIndefinite::factor(a)?;
    let mut x = f.solve(b);
    let r = sym_residual(a, &x, b);
    let dx = f.solve(&r);
    for (xi, di) in x.iter_mut().zip(&dx) {
        *xi += di;
    }
    Ok(x)
}

/// b - A x using only the lower triangle of the symmetric matrix `a`.
fn sym_residual(a: &Mat, x: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.rows();
    let mut r = b.to_vec();
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            let v = if j <= i { a[(i, j)] } else { a[(j, i)] };
            s += v * x[j];
        }
        r[i] -= s;
    }
    r
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted in
/// descending order. Adequate for the rank decisions made here; no vectors
/// are accumulated.
pub fn symmetric_eigenvalues(m: &Mat) -> Vec<f64> {
    let n = m.rows();
    assert_eq!(m.cols(), n, "eigenvalues need a square matrix");
    if n == 0 {
        return Vec::new();
    }
    let mut a = m.clone();
    let scale = a.max_abs();
    if scale == 0.0 {
        return vec![0.0; n];
    }
    for _sweep in 0..60 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= 1e-14 * scale * n as f64 {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let (aip, aiq) = (a[(i, p)], a[(i, q)]);
                    a[(i, p)] = c * aip - s * aiq;
                    a[(i, q)] = s * aip + c * aiq;
                }
                for j in 0..n {
                    let (apj, aqj) = (a[(p, j)], a[(q, j)]);
                    a[(p, j)] = c * apj - s * aqj;
                    a[(q, j)] = s * apj + c * aqj;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(|x, y| y.partial_cmp(x).unwrap());
    ev
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> Mat {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = rng.random_range(-1.0..1.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> Mat {
        let g = Mat::from_fn(n + 2, n, |_, _| rng.random_range(-1.0..1.0));
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n + 2 {
                    s += g[(k, i)] * g[(k, j)];
                }
                m[(i, j)] = s / n as f64;
            }
        }
        for i in 0..n {
            m[(i, i)] += 0.1;
        }
        m
    }

    fn full_residual(a: &Mat, x: &[f64], b: &[f64]) -> f64 {
        norm_inf(&sym_residual(a, x, b))
    }

    #[test]
    fn cholesky_solves_known_system() {
        let a = Mat::from_rows(&[&[4.0, 2.0], &[2.0, 3.0]]);
        let f = Cholesky::factor(&a).unwrap();
        let x = f.solve(&[8.0, 7.0]);
        // exact solution (1.25, 1.5)
        assert!((x[0] - 1.25).abs() < 1e-14);
        assert!((x[1] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn cholesky_rejects_rank_deficient() {
        // rank 1
        let a = Mat::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(Cholesky::factor(&a), Err(LinalgError::Singular(_))));
    }

    #[test]
    fn cholesky_random_spd_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1usize, 2, 5, 17, 40] {
            let a = random_spd(n, &mut rng);
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f = Cholesky::factor(&a).unwrap();
            let x = f.solve(&b);
            assert!(full_residual(&a, &x, &b) < 1e-10, "n={n}");
        }
    }

    #[test]
    fn ldlt_solves_random_indefinite_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for n in [1usize, 2, 3, 6, 13, 31, 80] {
            let a = random_symmetric(n, &mut rng);
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = solve_symmetric(&a, &b).unwrap();
            let scale = a.max_abs() * norm_inf(&x) + norm_inf(&b);
            assert!(
                full_residual(&a, &x, &b) <= 1e-12 * scale.max(1.0),
                "n={n} residual too large"
            );
        }
    }

    #[test]
    fn ldlt_solves_saddle_point_systems() {
        // [2I 1; 1ᵀ 0] saddle structure with a zero diagonal corner; forces
        // 2x2 pivots through the zero block.
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for n in [2usize, 4, 9, 25] {
            let spd = random_spd(n, &mut rng);
            let m = n + 1;
            let mut kkt = Mat::zeros(m, m);
            for i in 0..n {
                for j in 0..n {
                    kkt[(i, j)] = 2.0 * spd[(i, j)];
                }
                kkt[(n, i)] = 1.0;
                kkt[(i, n)] = 1.0;
            }
            let mut b = vec![0.0; m];
            b[n] = 1.0;
            let x = solve_symmetric(&kkt, &b).unwrap();
            assert!(full_residual(&kkt, &x, &b) < 1e-10, "n={n}");
        }
    }

    #[test]
    fn ldlt_detects_singular_saddle_point() {
        // sigma of rank 1 embedded in a KKT system with a budget row: the
        // reduced Hessian on the constraint null space is singular for n >= 3
        let n = 4;
        let mut kkt = Mat::zeros(n + 1, n + 1);
        for i in 0..n {
            for j in 0..n {
                kkt[(i, j)] = 2.0; // 2 * (all-ones covariance), rank 1
            }
            kkt[(n, i)] = 1.0;
            kkt[(i, n)] = 1.0;
        }
        let b = vec![0.0, 0.0, 0.0, 0.0, 1.0];
        assert!(matches!(
            solve_symmetric(&kkt, &b),
            Err(LinalgError::Singular(_))
        ));
    }

    #[test]
    fn ldlt_zero_matrix_is_singular() {
        let a = Mat::zeros(3, 3);
        assert!(matches!(
            SymmetricIndefinite::factor(&a),
            Err(LinalgError::Singular(0))
        ));
    }

    #[test]
    fn jacobi_eigenvalues_known_matrix() {
        let a = Mat::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let ev = symmetric_eigenvalues(&a);
        assert!((ev[0] - 3.0).abs() < 1e-12);
        assert!((ev[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn jacobi_eigenvalues_match_trace_and_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 12;
        // rank-3 Gram matrix
        let g = Mat::from_fn(3, n, |_, _| rng.random_range(-1.0..1.0));
        let mut a = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..3 {
                    s += g[(k, i)] * g[(k, j)];
                }
                a[(i, j)] = s;
            }
        }
        let ev = symmetric_eigenvalues(&a);
        let trace: f64 = (0..n).map(|i| a[(i, i)]).sum();
        let sum: f64 = ev.iter().sum();
        assert!((trace - sum).abs() < 1e-9 * trace.abs().max(1.0));
        let positive = ev.iter().filter(|&&e| e > 1e-10 * ev[0]).count();
        assert_eq!(positive, 3);
        assert!(ev.iter().all(|&e| e > -1e-10 * ev[0].max(1.0)));
    }

    #[test]
    fn compensated_dot_matches_plain_on_short_inputs() {
        let a = [1.0, -2.0, 3.0, 0.5];
        let b = [0.25, 4.0, -1.0, 8.0];
        assert_eq!(compensated_dot(&a, &b), dot(&a, &b));
    }

    #[test]
    fn compensated_dot_survives_cancellation() {
        // large terms that cancel; the naive sum loses the trailing 1.0
        let a = [1e16, 1.0, -1e16];
        let b = [1.0, 1.0, 1.0];
        assert_eq!(compensated_dot(&a, &b), 1.0);
    }
}
