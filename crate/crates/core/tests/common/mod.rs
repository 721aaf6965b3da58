#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Exhaustive QP oracle: the optimum of a strictly convex QP is the
/// equality-constrained minimizer on one face of the feasible set, so the
/// best feasible face minimizer over all subsets of inequality rows is it.
/// Returns `None` when no subset yields a feasible point.
pub fn brute_force_qp(
    h: &DMatrix<f64>,
    q: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    e: &DMatrix<f64>,
    d: &DVector<f64>,
) -> Option<(DVector<f64>, f64)> {
    let n = h.nrows();
    let m = a.nrows();
    assert!(m <= 16, "oracle enumerates 2^m subsets");
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0u32..(1 << m) {
        let rows: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let k = rows.len() + e.nrows();
        if k > n {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(h);
        rhs.rows_mut(0, n).copy_from(&(-q));
        for (j, &r) in rows.iter().enumerate() {
            for c in 0..n {
                kkt[(n + j, c)] = a[(r, c)];
                kkt[(c, n + j)] = a[(r, c)];
            }
            rhs[n + j] = b[r];
        }
        for j in 0..e.nrows() {
            let jj = rows.len() + j;
            for c in 0..n {
                kkt[(n + jj, c)] = e[(j, c)];
                kkt[(c, n + jj)] = e[(j, c)];
            }
            rhs[n + jj] = d[j];
        }
        // Skip faces whose active rows are linearly dependent.
        let svd = kkt.clone().svd(false, false);
        let smax = svd.singular_values.max();
        if svd.singular_values.min() <= 1e-10 * smax.max(1.0) {
            continue;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let z = sol.rows(0, n).into_owned();
        let slack_ok = m == 0 || (a * &z - b).max() <= 1e-9;
        let eq_ok = e.nrows() == 0 || (e * &z - d).amax() <= 1e-9;
        if !(slack_ok && eq_ok) {
            continue;
        }
        let obj = 0.5 * z.dot(&(h * &z)) + q.dot(&z);
        if best.as_ref().is_none_or(|(_, o)| obj < *o) {
            best = Some((z, obj));
        }
    }
    best
}

/// Small deterministic generator so fixtures do not depend on proptest.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut z = self.0;
        z = (z ^ (z >> 33)).wrapping_mul(0xff51afd7ed558ccd);
        z ^ (z >> 33)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + (hi - lo) * u
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn matrix(&mut self, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| self.uniform(-scale, scale))
    }

    pub fn vector(&mut self, n: usize, scale: f64) -> DVector<f64> {
        DVector::from_fn(n, |_, _| self.uniform(-scale, scale))
    }

    /// Symmetric positive definite with eigenvalues bounded below by `floor`.
    pub fn spd(&mut self, n: usize, floor: f64) -> DMatrix<f64> {
        let l = self.matrix(n, n, 1.0);
        &l * l.transpose() + DMatrix::identity(n, n) * floor
    }
}
