use crate::error::{Error, Result};
use crate::linalg::matrix::dot;
use crate::linalg::DenseMatrix;

const MAX_SVD_SWEEPS: usize = 80;

/// Thin singular value decomposition `A = U Σ Vᵀ`.
///
/// For an `m×n` input with `k = min(m, n)`: `u` is `m×k`, `v` is `n×k`, and
/// `singular_values` holds `k` nonincreasing nonnegative values.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub v: DenseMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> DenseMatrix {
        let (m, k) = self.u.shape();
        let n = self.v.rows();
        let mut out = DenseMatrix::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += self.u[(i, p)] * self.singular_values[p] * self.v[(j, p)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    /// Number of singular values above `tol · σ₁`.
    pub fn numerical_rank(&self, tol: f64) -> usize {
        let top = self.singular_values.first().copied().unwrap_or(0.0);
        self.singular_values
            .iter()
            .filter(|&&s| s > tol * top)
            .count()
    }
}

/// One-sided (Hestenes) Jacobi SVD.
///
/// Orthogonalizes the columns of `A` (or `Aᵀ` when `A` is wide) by plane rotations,
/// which is Jacobi diagonalization of `AᵀA` without forming it.
pub fn svd(a: &DenseMatrix) -> Result<Svd> {
    if a.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("svd input".into()));
    }
    if a.cols() > a.rows() {
        let t = svd_tall(&a.transpose())?;
        return Ok(Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        });
    }
    svd_tall(a)
}

fn svd_tall(a: &DenseMatrix) -> Result<Svd> {
    let (m, n) = a.shape();
    // Column-major working copies.
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let eps = f64::EPSILON;
    let mut sweeps = 0;
    loop {
        let mut rotated = false;
        let mut worst = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot(&w[p], &w[q]);
                let coupling = gamma.abs() / (alpha * beta).sqrt();
                worst = worst.max(coupling);
                if coupling <= eps * m as f64 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut w, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        sweeps += 1;
        if !rotated {
            break;
        }
        if sweeps == MAX_SVD_SWEEPS {
            return Err(Error::NoConvergence {
                what: "Jacobi SVD",
                iterations: sweeps,
                residual: worst,
            });
        }
    }

    let norms: Vec<f64> = w.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let top = norms.iter().copied().fold(0.0, f64::max);
    let cutoff = top * eps * m.max(n) as f64;
    let mut u = DenseMatrix::zeros(m, n);
    let mut vm = DenseMatrix::zeros(n, n);
    let mut sv = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        sv.push(sigma);
        for i in 0..n {
            vm[(i, dst)] = v[src][i];
        }
        if sigma > cutoff && sigma > 0.0 {
            for i in 0..m {
                u[(i, dst)] = w[src][i] / sigma;
            }
        } else {
            deficient.push(dst);
        }
    }
    if !deficient.is_empty() {
        complete_orthonormal(&mut u, &deficient);
    }
    Ok(Svd {
        u,
        singular_values: sv,
        v: vm,
    })
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let cp = &mut left[p];
    let cq = &mut right[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fills the listed columns of `u` with unit vectors orthogonal to all other columns,
/// using Gram–Schmidt against the standard basis.
fn complete_orthonormal(u: &mut DenseMatrix, missing: &[usize]) {
    let (m, k) = u.shape();
    let mut filled: Vec<bool> = (0..k).map(|j| !missing.contains(&j)).collect();
    let mut candidate = 0;
    for &j in missing {
        while candidate < m {
            let mut x = vec![0.0; m];
            x[candidate] = 1.0;
            candidate += 1;
            // Two passes of classical Gram-Schmidt for stability.
            for _ in 0..2 {
                for c in 0..k {
                    if !filled[c] {
                        continue;
                    }
                    let col = u.column(c);
                    let proj = dot(&col, &x);
                    for (xi, ci) in x.iter_mut().zip(&col) {
                        *xi -= proj * ci;
                    }
                }
            }
            let norm = dot(&x, &x).sqrt();
            if norm > 1e-8 {
                for i in 0..m {
                    u[(i, j)] = x[i] / norm;
                }
                filled[j] = true;
                break;
            }
        }
    }
}

/// Sum of singular values.
pub fn nuclear_norm(a: &DenseMatrix) -> Result<f64> {
    Ok(svd(a)?.singular_values.iter().sum())
}

/// Effective rank: `exp(H(p))` where `p_i = σ_i / Σσ` and `H` is Shannon entropy.
pub fn effective_rank(a: &DenseMatrix) -> Result<f64> {
    effective_rank_of_spectrum(&svd(a)?.singular_values)
}

pub fn effective_rank_of_spectrum(singular_values: &[f64]) -> Result<f64> {
    let total: f64 = singular_values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("effective rank of an all-zero matrix"));
    }
    let entropy: f64 = singular_values
        .iter()
        .filter(|&&s| s > 0.0)
        .map(|&s| {
            let p = s / total;
            -p * p.ln()
        })
        .sum();
    Ok(entropy.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sym_eig, DEFAULT_EIG_TOL};
    use crate::rng::SplitMix64;

    fn random(rows: usize, cols: usize, rng: &mut SplitMix64) -> DenseMatrix {
        DenseMatrix::from_raw(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect())
    }

    fn check_invariants(a: &DenseMatrix, s: &Svd) {
        let err = s.reconstruct().sub(a).unwrap().frobenius_norm();
        assert!(
            err <= 1e-8 * a.frobenius_norm().max(f64::MIN_POSITIVE),
            "err {err}"
        );
        let k = s.singular_values.len();
        let id = DenseMatrix::identity(k);
        let utu = s.u.transpose().matmul(&s.u).unwrap();
        let vtv = s.v.transpose().matmul(&s.v).unwrap();
        assert!(utu.sub(&id).unwrap().max_abs() <= 1e-10);
        assert!(vtv.sub(&id).unwrap().max_abs() <= 1e-10);
        assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
        assert!(s.singular_values.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn rank_one_outer_product() {
        let u = [1.0, -2.0, 0.5, 3.0];
        let v = [2.0, 1.0, -1.0];
        let a = DenseMatrix::from_raw(
            4,
            3,
            u.iter()
                .flat_map(|x| v.iter().map(move |y| x * y))
                .collect(),
        );
        let s = svd(&a).unwrap();
        assert_eq!(s.singular_values.iter().filter(|&&x| x > 1e-10).count(), 1);
        check_invariants(&a, &s);
    }

    #[test]
    fn identity() {
        let s = svd(&DenseMatrix::identity(5)).unwrap();
        assert!(s.singular_values.iter().all(|&x| (x - 1.0).abs() < 1e-15));
    }

    #[test]
    fn matches_eigenvalues_of_gram() {
        let mut rng = SplitMix64::new(21);
        let a = random(6, 4, &mut rng);
        let s = svd(&a).unwrap();
        let gram = a.transpose().matmul(&a).unwrap();
        let e = sym_eig(&gram, DEFAULT_EIG_TOL).unwrap();
        let mut oracle: Vec<f64> = e.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
        oracle.reverse();
        for (x, y) in s.singular_values.iter().zip(&oracle) {
            assert!((x - y).abs() <= 1e-8, "{x} vs {y}");
        }
        check_invariants(&a, &s);
    }

    #[test]
    fn wide_and_tall_random() {
        let mut rng = SplitMix64::new(22);
        for &(m, n) in &[(1, 1), (3, 8), (8, 3), (30, 30), (40, 25), (12, 50)] {
            let a = random(m, n, &mut rng);
            let s = svd(&a).unwrap();
            assert_eq!(s.u.shape(), (m, m.min(n)));
            assert_eq!(s.v.shape(), (n, m.min(n)));
            check_invariants(&a, &s);
        }
    }

    #[test]
    fn rank_deficient_completion() {
        let mut rng = SplitMix64::new(23);
        let b = random(10, 2, &mut rng);
        let c = random(2, 6, &mut rng);
        let a = b.matmul(&c).unwrap();
        let s = svd(&a).unwrap();
        assert_eq!(s.numerical_rank(1e-10), 2);
        check_invariants(&a, &s);
        let z = svd(&DenseMatrix::zeros(4, 3)).unwrap();
        check_invariants(&DenseMatrix::zeros(4, 3), &z);
    }

    #[test]
    fn nuclear_norm_cases() {
        assert_eq!(nuclear_norm(&DenseMatrix::zeros(3, 3)).unwrap(), 0.0);
        assert!((nuclear_norm(&DenseMatrix::identity(4)).unwrap() - 4.0).abs() < 1e-14);
        assert!((nuclear_norm(&DenseMatrix::from_diag(&[3.0, 1.0])).unwrap() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn nuclear_norm_dominates_frobenius() {
        let mut rng = SplitMix64::new(24);
        let a = random(6, 5, &mut rng);
        assert!(nuclear_norm(&a).unwrap() > a.frobenius_norm() + 1e-6);
        let r1 = random(6, 1, &mut rng)
            .matmul(&random(1, 5, &mut rng))
            .unwrap();
        assert!((nuclear_norm(&r1).unwrap() - r1.frobenius_norm()).abs() < 1e-10);
    }

    #[test]
    fn effective_rank_cases() {
        let n = 6;
        assert!((effective_rank(&DenseMatrix::identity(n)).unwrap() - n as f64).abs() < 1e-12);
        let mut rng = SplitMix64::new(25);
        let r1 = random(5, 1, &mut rng)
            .matmul(&random(1, 4, &mut rng))
            .unwrap();
        assert!((effective_rank(&r1).unwrap() - 1.0).abs() < 1e-9);
        // diag(1, 1, ε): p = (1, 1, ε)/(2+ε); exact entropy formula tends to ln 2.
        let mut prev = 0.0;
        for &eps in &[1e-1, 1e-3, 1e-6, 1e-9] {
            let er = effective_rank(&DenseMatrix::from_diag(&[1.0, 1.0, eps])).unwrap();
            let p = [1.0 / (2.0 + eps), 1.0 / (2.0 + eps), eps / (2.0 + eps)];
            let h: f64 = p.iter().map(|x| -x * x.ln()).sum();
            assert!((er - h.exp()).abs() < 1e-12);
            assert!(er > 2.0);
            if prev > 0.0 {
                assert!(er < prev);
            }
            prev = er;
        }
        assert!((prev - 2.0).abs() < 1e-7);
        assert!(effective_rank(&DenseMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn effective_rank_scale_invariant() {
        let mut rng = SplitMix64::new(26);
        let a = random(7, 5, &mut rng);
        let e1 = effective_rank(&a).unwrap();
        for &c in &[1e-3, 0.5, 7.0, 1e4] {
            assert!((effective_rank(&a.scale(c)).unwrap() - e1).abs() <= 1e-10);
        }
        assert!(e1 >= 1.0 && e1 <= 5.0);
    }
}
