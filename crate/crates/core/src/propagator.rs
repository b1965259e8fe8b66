//! Time propagation kernels for `exp(-i H t)` acting on state vectors.
//!
//! Hermitian operators use the Chebyshev polynomial expansion with Bessel
//! coefficients (near machine precision, cost ~ spectral-radius * t matvecs).
//! Non-Hermitian (lossy) operators use an adaptive Arnoldi/Krylov stepper.
//! Both satisfy the same accuracy contract; the caller picks by hermiticity.

use crate::error::{Error, Result};
use crate::op::SparseOp;
use crate::C64;

/// Bessel functions J_0..J_nmax at argument `z >= 0` by Miller's downward
/// recurrence, normalized with `J_0 + 2 sum J_{2k} = 1`.
pub fn bessel_j_sequence(nmax: usize, z: f64) -> Vec<f64> {
    assert!(z >= 0.0);
    if z < 1e-12 {
        let mut out = vec![0.0; nmax + 1];
        out[0] = 1.0;
        if nmax >= 1 {
            out[1] = 0.5 * z;
        }
        return out;
    }
    // Start far enough above both nmax and the turning point n ~ z, where
    // the downward recurrence becomes stable; the Airy region has width
    // ~ z^(1/3).
    let start = nmax.max(z.ceil() as usize) + 40 + (25.0 * z.max(1.0).powf(1.0 / 3.0)) as usize;
    let mut jp = 0.0f64; // J_{n+1}
    let mut j = 1e-300f64; // J_n
    let mut out = vec![0.0; nmax + 1];
    let mut sum = 0.0f64; // J_0 + 2*sum_{even n>0} J_n accumulator
    for n in (0..=start).rev() {
        let jm = (2.0 * (n as f64 + 1.0) / z) * j - jp; // J_n from J_{n+1}, J_{n+2}
        jp = j;
        j = jm;
        if n <= nmax {
            out[n] = j;
        }
        if n % 2 == 0 {
            sum += if n == 0 { j } else { 2.0 * j };
        }
        if j.abs() > 1e250 {
            // rescale everything to avoid overflow
            let s = 1e-250;
            j *= s;
            jp *= s;
            sum *= s;
            for v in out.iter_mut() {
                *v *= s;
            }
        }
    }
    for v in out.iter_mut() {
        *v /= sum;
    }
    out
}

/// Chebyshev propagator for a Hermitian operator with a fixed spectral window.
#[derive(Debug, Clone)]
pub struct ChebyshevProp {
    /// Half-width of the spectral window.
    a: f64,
    /// Center of the spectral window.
    b: f64,
}

impl ChebyshevProp {
    pub fn new(op: &SparseOp) -> ChebyshevProp {
        let (lo, hi) = op.gershgorin_bounds();
        let b = 0.5 * (hi + lo);
        let a = (0.5 * (hi - lo)).max(0.0) * 1.0001 + 1e-12;
        ChebyshevProp { a, b }
    }

    /// psi <- exp(-i op dt) psi, truncating the Bessel tail at relative 1e-14.
    pub fn step(&self, op: &SparseOp, psi: &mut Vec<C64>, dt: f64) {
        debug_assert!(op.is_hermitian());
        let z = self.a * dt;
        let coeff_phase = C64::new(0.0, -self.b * dt).exp();
        if z < 1e-14 {
            for x in psi.iter_mut() {
                *x *= coeff_phase;
            }
            return;
        }
        // Estimate the order: superexponential decay sets in just past n = z.
        let nmax = (z + 30.0 + 12.0 * z.powf(1.0 / 3.0)) as usize;
        let bessel = bessel_j_sequence(nmax, z);
        // Find the cutoff where the tail is negligible.
        let mut cut = nmax;
        while cut > 2 && bessel[cut].abs() < 1e-15 && bessel[cut - 1].abs() < 1e-15 {
            cut -= 1;
        }

        let n = psi.len();
        let inv_a = 1.0 / self.a;
        let shift = self.b;
        // phi_0 = psi, phi_1 = Htilde psi
        let phi0: Vec<C64> = psi.clone();
        let mut phi_prev = phi0.clone();
        let mut phi = {
            let mut h = op.apply(&phi0);
            for (hi_, pi) in h.iter_mut().zip(&phi0) {
                *hi_ = (*hi_ - shift * pi) * inv_a;
            }
            h
        };
        let mut acc: Vec<C64> = phi0.iter().map(|x| x * bessel[0]).collect();
        let mut i_pow = C64::new(0.0, -1.0); // (-i)^n
        for (a_, p) in acc.iter_mut().zip(&phi) {
            *a_ += 2.0 * bessel[1] * i_pow * p;
        }
        let mut hphi = vec![C64::new(0.0, 0.0); n];
        for nn in 2..=cut {
            op.apply_into(&phi, &mut hphi);
            // phi_next = 2*Htilde*phi - phi_prev, reusing phi_prev storage
            for i in 0..n {
                let ht = (hphi[i] - shift * phi[i]) * inv_a;
                let next = 2.0 * ht - phi_prev[i];
                phi_prev[i] = phi[i];
                phi[i] = next;
            }
            i_pow *= C64::new(0.0, -1.0);
            let c = 2.0 * bessel[nn];
            if c.abs() > 1e-300 {
                for (a_, p) in acc.iter_mut().zip(&phi) {
                    *a_ += c * i_pow * p;
                }
            }
        }
        for (out, a_) in psi.iter_mut().zip(&acc) {
            *out = coeff_phase * a_;
        }
    }
}

/// Dense matrix exponential of a small complex matrix by scaling-and-squaring
/// with a Taylor kernel (the Krylov projections are at most ~40x40).
fn expm_small(m: &ndarray::Array2<C64>) -> ndarray::Array2<C64> {
    use ndarray::Array2;
    let n = m.nrows();
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| m[[i, j]].norm()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let s = if norm1 > 0.5 { (norm1 / 0.5).log2().ceil() as u32 } else { 0 };
    let scale = 1.0 / (2.0f64.powi(s as i32));
    let a = m.mapv(|x| x * scale);
    let mut term = Array2::<C64>::eye(n);
    let mut acc = Array2::<C64>::eye(n);
    for k in 1..=24 {
        term = term.dot(&a).mapv(|x| x / (k as f64));
        acc += &term;
    }
    let mut r = acc;
    for _ in 0..s {
        r = r.dot(&r);
    }
    r
}

/// Adaptive Arnoldi propagator for general (possibly non-Hermitian) operators.
#[derive(Debug, Clone)]
pub struct ArnoldiProp {
    pub m: usize,
    pub tol_per_time: f64,
    min_dt: f64,
}

impl ArnoldiProp {
    pub fn new(tol_per_time: f64) -> ArnoldiProp {
        ArnoldiProp { m: 30, tol_per_time, min_dt: 1e-9 }
    }

    /// psi <- exp(-i op dt) psi with local error control; returns the number
    /// of accepted substeps.
    pub fn step(&self, op: &SparseOp, psi: &mut Vec<C64>, dt: f64) -> Result<usize> {
        let mut remaining = dt;
        let mut h_try = dt;
        let mut substeps = 0usize;
        while remaining > 1e-14 * dt.max(1.0) {
            h_try = h_try.min(remaining);
            let (next, err) = self.krylov_apply(op, psi, h_try)?;
            let budget = self.tol_per_time * h_try;
            if err <= budget || h_try <= self.min_dt {
                *psi = next;
                remaining -= h_try;
                substeps += 1;
                if err < 0.1 * budget {
                    h_try *= 1.6;
                }
            } else {
                h_try *= 0.5;
                if h_try < self.min_dt {
                    return Err(Error::Numeric(format!(
                        "Arnoldi step rejected below minimum dt; local error {err:.2e} vs budget {budget:.2e}"
                    )));
                }
            }
        }
        Ok(substeps)
    }

    fn krylov_apply(&self, op: &SparseOp, psi: &[C64], dt: f64) -> Result<(Vec<C64>, f64)> {
        use ndarray::Array2;
        let n = psi.len();
        let beta = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if beta == 0.0 {
            return Ok((psi.to_vec(), 0.0));
        }
        let m = self.m.min(n);
        let mut basis: Vec<Vec<C64>> = Vec::with_capacity(m + 1);
        basis.push(psi.iter().map(|c| c / beta).collect());
        let mut hess = Array2::<C64>::zeros((m + 1, m));
        let mut w = vec![C64::new(0.0, 0.0); n];
        let mut used = m;
        let mut happy = false;
        for j in 0..m {
            op.apply_into(&basis[j], &mut w);
            for (i, b) in basis.iter().enumerate() {
                let hij: C64 = b.iter().zip(&w).map(|(x, y)| x.conj() * y).sum();
                hess[[i, j]] = hij;
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= hij * bi;
                }
            }
            // one reorthogonalization pass
            for (i, b) in basis.iter().enumerate() {
                let c: C64 = b.iter().zip(&w).map(|(x, y)| x.conj() * y).sum();
                hess[[i, j]] += c;
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
            let hnorm = w.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            if j + 1 <= m {
                hess[[j + 1, j]] = C64::new(hnorm, 0.0);
            }
            if hnorm < 1e-12 {
                used = j + 1;
                happy = true;
                break;
            }
            basis.push(w.iter().map(|c| c / hnorm).collect());
        }

        let hm = hess.slice(ndarray::s![..used, ..used]).mapv(|x| x * C64::new(0.0, -dt));
        let e = expm_small(&hm);
        let col = e.column(0);
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (j, b) in basis.iter().take(used).enumerate() {
            let c = beta * col[j];
            for (oi, bi) in out.iter_mut().zip(b) {
                *oi += c * bi;
            }
        }
        let err = if happy {
            0.0
        } else {
            // expokit-style local error estimate
            beta * hess[[used, used - 1]].norm() * col[used - 1].norm() * dt
        };
        Ok((out, err))
    }
}

/// One propagation interface over both kernels.
#[derive(Debug, Clone)]
pub enum Propagator {
    Chebyshev(ChebyshevProp),
    Arnoldi(ArnoldiProp),
}

impl Propagator {
    /// Pick the kernel for an operator: Chebyshev when Hermitian, Arnoldi
    /// otherwise. `tol` is the amplitude-error budget per unit time.
    pub fn for_op(op: &SparseOp, tol: f64) -> Propagator {
        if op.is_hermitian() {
            Propagator::Chebyshev(ChebyshevProp::new(op))
        } else {
            Propagator::Arnoldi(ArnoldiProp::new(tol))
        }
    }

    pub fn step(&self, op: &SparseOp, psi: &mut Vec<C64>, dt: f64) -> Result<()> {
        match self {
            Propagator::Chebyshev(c) => {
                c.step(op, psi, dt);
                Ok(())
            }
            Propagator::Arnoldi(a) => a.step(op, psi, dt).map(|_| ()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bessel_known_values() {
        let j = bessel_j_sequence(6, 1.0);
        assert_abs_diff_eq!(j[0], 0.7651976865579666, epsilon = 1e-13);
        assert_abs_diff_eq!(j[1], 0.4400505857449335, epsilon = 1e-13);
        assert_abs_diff_eq!(j[2], 0.1149034849319005, epsilon = 1e-13);
        let j10 = bessel_j_sequence(10, 10.0);
        assert_abs_diff_eq!(j10[0], -0.2459357644513483, epsilon = 1e-12);
        assert_abs_diff_eq!(j10[5], -0.2340615281867936, epsilon = 1e-12);
        assert_abs_diff_eq!(bessel_j_sequence(0, 1200.0)[0], 0.0147835520016522, epsilon = 1e-12);
        // sum rule at a large argument typical of real steps
        let big = bessel_j_sequence(1500, 1200.0);
        let sum: f64 = big[0] + 2.0 * (1..=750).map(|k| big[2 * k]).sum::<f64>();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-10);
    }

    fn two_level(g: f64) -> SparseOp {
        SparseOp::from_triplets(
            2,
            vec![(0, 1, C64::new(g, 0.0)), (1, 0, C64::new(g, 0.0))],
            true,
        )
    }

    #[test]
    fn chebyshev_matches_rabi_closed_form() {
        let g = 0.7;
        let op = two_level(g);
        let prop = ChebyshevProp::new(&op);
        let mut psi = vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
        let dt = 0.37;
        let mut t = 0.0;
        while t < 20.0 / g {
            prop.step(&op, &mut psi, dt);
            t += dt;
            let expect = (g * t).cos().powi(2);
            assert_abs_diff_eq!(psi[1].norm_sqr(), expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn arnoldi_matches_rabi_closed_form() {
        let g = 0.7;
        let mut op = two_level(g);
        op.set_hermitian(false); // force the Arnoldi path
        let prop = ArnoldiProp::new(1e-10);
        let mut psi = vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
        let dt = 0.5;
        let mut t = 0.0;
        while t < 12.0 / g {
            prop.step(&op, &mut psi, dt).unwrap();
            t += dt;
            let expect = (g * t).cos().powi(2);
            assert_abs_diff_eq!(psi[1].norm_sqr(), expect, epsilon = 1e-8);
        }
    }

    #[test]
    fn uniform_loss_decays_exactly() {
        // H = H_hop - i kappa/2: norm^2 decays as e^{-kappa t} exactly.
        let kappa = 0.3;
        let op = SparseOp::from_triplets(
            3,
            vec![
                (0, 0, C64::new(0.0, -kappa / 2.0)),
                (1, 1, C64::new(0.0, -kappa / 2.0)),
                (2, 2, C64::new(0.0, -kappa / 2.0)),
                (0, 1, C64::new(-1.0, 0.0)),
                (1, 0, C64::new(-1.0, 0.0)),
                (1, 2, C64::new(-1.0, 0.0)),
                (2, 1, C64::new(-1.0, 0.0)),
            ],
            false,
        );
        let prop = ArnoldiProp::new(1e-11);
        let mut psi = vec![
            C64::new(0.6, 0.0),
            C64::new(0.0, 0.8),
            C64::new(0.0, 0.0),
        ];
        let mut t = 0.0;
        for _ in 0..20 {
            prop.step(&op, &mut psi, 0.5).unwrap();
            t += 0.5;
            let n2: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
            assert_abs_diff_eq!(n2, (-kappa * t).exp(), epsilon = 1e-8);
        }
    }

    #[test]
    fn zero_operator_is_identity() {
        let op = SparseOp::from_triplets(4, vec![], true);
        let prop = Propagator::for_op(&op, 1e-10);
        let orig = vec![C64::new(0.5, 0.1), C64::new(0.0, 0.2), C64::new(0.3, 0.0), C64::new(0.0, 0.0)];
        let mut psi = orig.clone();
        prop.step(&op, &mut psi, 3.7).unwrap();
        for (a, b) in psi.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn chebyshev_norm_conservation_long_run() {
        // random-ish Hermitian 40-site ring
        let n = 40;
        let mut tr = Vec::new();
        for i in 0..n {
            let jn = (i + 1) % n;
            tr.push((i, jn, C64::new(-1.0, 0.3 * ((i * 7 % 5) as f64 - 2.0) * 0.1)));
            tr.push((jn, i, C64::new(-1.0, -0.3 * ((i * 7 % 5) as f64 - 2.0) * 0.1)));
            tr.push((i, i, C64::new(0.2 * ((i * 13 % 7) as f64 - 3.0), 0.0)));
        }
        let op = SparseOp::from_triplets(n, tr, true);
        let prop = ChebyshevProp::new(&op);
        let mut psi: Vec<C64> = (0..n).map(|i| C64::new((i as f64 * 0.3).sin(), (i as f64 * 0.17).cos())).collect();
        let norm0: f64 = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        for x in psi.iter_mut() {
            *x /= norm0;
        }
        for _ in 0..10 {
            prop.step(&op, &mut psi, 30.0);
        }
        let n2: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
        assert_abs_diff_eq!(n2, 1.0, epsilon = 1e-10);
    }
}
