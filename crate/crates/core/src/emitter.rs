//! Emitter-bath couplings and decay rates.
//!
//! An emitter couples to sites of the x = 0 boundary column with complex
//! amplitudes g_y. In momentum space the coupling function is
//! `G(k) = (1/sqrt(Ly)) sum_y g_y e^{+i k y}`, matching the Bloch-mode
//! labeling of [`crate::lattice`] (modes with y-dependence `e^{+i k y}`);
//! the two-site footprint (g, g e^{i phi}) gives
//! `|G(k)|^2 = (2 g^2 / Ly)(1 + cos(k + phi))`, so momentum `k_d` is
//! cancelled by the relative phase `phi = pi - k_d`.

use crate::edge_model::EdgeModeModel;
use crate::error::{Error, Result};
use crate::lattice::SiteGrid;
use crate::op::SparseOp;
use crate::spectrum::{gaussian_kernel, BandStructure, EigenSolution, SpectralCurve};
use crate::C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// One coupled site with its complex amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub x: usize,
    pub y: usize,
    pub g: C64,
}

/// Emitter definition: transition energy, coupling footprint, intrinsic loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitterSpec {
    pub omega_e: f64,
    pub gamma_star: f64,
    pub couplings: Vec<Coupling>,
}

impl EmitterSpec {
    /// Local coupling to a single edge site.
    pub fn local(omega_e: f64, y: usize, g: f64) -> EmitterSpec {
        EmitterSpec { omega_e, gamma_star: 0.0, couplings: vec![Coupling { x: 0, y, g: C64::new(g, 0.0) }] }
    }

    pub fn giant(omega_e: f64, couplings: Vec<Coupling>) -> EmitterSpec {
        EmitterSpec { omega_e, gamma_star: 0.0, couplings }
    }

    pub fn with_loss(mut self, gamma_star: f64) -> EmitterSpec {
        self.gamma_star = gamma_star;
        self
    }

    /// Total coupling strength `sqrt(sum |g_y|^2)`.
    pub fn g_tot(&self) -> f64 {
        self.couplings.iter().map(|c| c.g.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.couplings.is_empty() {
            return Err(Error::InvalidSpec("emitter has no couplings".into()));
        }
        if self.couplings.iter().any(|c| c.x != 0) {
            return Err(Error::InvalidSpec("all coupling sites must lie on the x = 0 boundary column".into()));
        }
        let mut ys: Vec<usize> = self.couplings.iter().map(|c| c.y).collect();
        ys.sort_unstable();
        ys.dedup();
        if ys.len() != self.couplings.len() {
            return Err(Error::InvalidSpec("coupling sites must be pairwise distinct".into()));
        }
        if self.gamma_star < 0.0 {
            return Err(Error::InvalidSpec("gamma_star must be >= 0".into()));
        }
        if self.g_tot() == 0.0 {
            return Err(Error::InvalidSpec("total coupling strength must be positive".into()));
        }
        Ok(())
    }

    /// The footprint as a bath-space vector (zero except at coupled sites).
    pub fn footprint_vector(&self, grid: &SiteGrid) -> Result<Vec<C64>> {
        let mut v = vec![C64::new(0.0, 0.0); grid.n_active()];
        for c in &self.couplings {
            let idx = grid
                .index(c.x, c.y)
                .ok_or_else(|| Error::InvalidSpec(format!("coupling site ({}, {}) is a defect", c.x, c.y)))?;
            v[idx] = c.g;
        }
        Ok(v)
    }
}

/// Momentum-space coupling `G(k) = (1/sqrt(Ly)) sum_y g_y e^{+i k y}`
/// evaluated on the given momenta.
pub fn momentum_coupling(em: &EmitterSpec, ly: usize, ks: &[f64]) -> Vec<C64> {
    let norm = 1.0 / (ly as f64).sqrt();
    ks.iter()
        .map(|&k| {
            em.couplings
                .iter()
                .map(|c| c.g * C64::new(0.0, k * c.y as f64).exp())
                .sum::<C64>()
                * norm
        })
        .collect()
}

/// Couplings on `N_k + 1` consecutive edge sites cancelling the listed
/// momenta: `G(k) ~ prod_d (1 + e^{i phi_d} e^{i k})` with `phi_d = pi - k_d`,
/// expanded into elementary symmetric polynomials.
pub fn cancel_couplings(k_cancel: &[f64], g: f64, y0: usize) -> Result<Vec<Coupling>> {
    if k_cancel.is_empty() {
        return Err(Error::InvalidSpec("need at least one momentum to cancel".into()));
    }
    for (i, a) in k_cancel.iter().enumerate() {
        for b in &k_cancel[i + 1..] {
            if (a - b).rem_euclid(2.0 * PI).min((b - a).rem_euclid(2.0 * PI)) < 1e-9 {
                return Err(Error::InvalidSpec(format!("duplicate cancellation momentum {a}")));
            }
        }
    }
    // Polynomial product over (1 + e^{i phi_d} z).
    let mut poly: Vec<C64> = vec![C64::new(1.0, 0.0)];
    for &kd in k_cancel {
        let phase = C64::new(0.0, PI - kd).exp();
        let mut next = vec![C64::new(0.0, 0.0); poly.len() + 1];
        for (m, &c) in poly.iter().enumerate() {
            next[m] += c;
            next[m + 1] += c * phase;
        }
        poly = next;
    }
    Ok(poly
        .into_iter()
        .enumerate()
        .map(|(m, c)| Coupling { x: 0, y: y0 + m, g: g * c })
        .collect())
}

/// Golden-rule decay rate from a full eigensolution:
/// `Gamma(omega) = 2 pi sum_B |sum_y g_y <site_y|E_B>|^2 f_theta(omega - E_B)`.
pub fn golden_rule_curve(
    eig: &EigenSolution,
    grid: &SiteGrid,
    em: &EmitterSpec,
    theta: f64,
    omega_grid: &[f64],
) -> Result<SpectralCurve> {
    let weights = golden_weights(eig, grid, em)?;
    Ok(scaled_weighted_curve(&eig.energies, &weights, omega_grid, theta))
}

pub fn golden_rule_rate(eig: &EigenSolution, grid: &SiteGrid, em: &EmitterSpec, theta: f64) -> Result<f64> {
    Ok(golden_rule_curve(eig, grid, em, theta, &[em.omega_e])?.values[0])
}

fn golden_weights(eig: &EigenSolution, grid: &SiteGrid, em: &EmitterSpec) -> Result<Vec<f64>> {
    let mut site_idx = Vec::with_capacity(em.couplings.len());
    for c in &em.couplings {
        let idx = grid
            .index(c.x, c.y)
            .ok_or_else(|| Error::InvalidSpec(format!("coupling site ({}, {}) is a defect", c.x, c.y)))?;
        site_idx.push((idx, c.g));
    }
    Ok((0..eig.len())
        .map(|b| {
            site_idx
                .iter()
                .map(|&(idx, g)| g * eig.states[[idx, b]])
                .sum::<C64>()
                .norm_sqr()
        })
        .collect())
}

fn scaled_weighted_curve(energies: &[f64], weights: &[f64], omega_grid: &[f64], theta: f64) -> SpectralCurve {
    let mut curve = crate::spectrum::weighted_dos(energies, weights, omega_grid, theta);
    for v in curve.values.iter_mut() {
        *v *= 2.0 * PI;
    }
    curve
}

/// Golden-rule rate on a clean cylinder from its Bloch band structure:
/// the matrix element to mode (k, beta) is `G(k) psi_beta(0)`.
pub fn golden_rule_curve_cylinder(
    band: &BandStructure,
    em: &EmitterSpec,
    theta: f64,
    omega_grid: &[f64],
) -> Result<CylinderRateCurve> {
    em.validate()?;
    let gk = momentum_coupling(em, band.spec.ly, &band.k);
    let mut energies = Vec::with_capacity(band.k.len() * band.lx());
    let mut weights = Vec::with_capacity(energies.capacity());
    for ik in 0..band.k.len() {
        let g2 = gk[ik].norm_sqr();
        for b in 0..band.energies[ik].len() {
            energies.push(band.energies[ik][b]);
            weights.push(g2 * band.edge_weight(ik, b));
        }
    }
    let curve = scaled_weighted_curve(&energies, &weights, omega_grid, theta);
    Ok(CylinderRateCurve { curve, n_states: energies.len() })
}

#[derive(Debug, Clone)]
pub struct CylinderRateCurve {
    pub curve: SpectralCurve,
    pub n_states: usize,
}

/// Golden-rule rate by Chebyshev moments of `f_theta(omega - H)` seeded with
/// the coupling footprint: exact Gaussian smoothing without diagonalization,
/// for disordered or otherwise reduction-less baths.
pub fn golden_rule_curve_moments(
    op: &SparseOp,
    grid: &SiteGrid,
    em: &EmitterSpec,
    theta: f64,
    omega_grid: &[f64],
) -> Result<SpectralCurve> {
    if !op.is_hermitian() {
        return Err(Error::Numeric("moment expansion requires a Hermitian bath".into()));
    }
    let seed = em.footprint_vector(grid)?;
    let g2: f64 = seed.iter().map(|c| c.norm_sqr()).sum();
    if g2 == 0.0 {
        return Ok(SpectralCurve {
            energies: omega_grid.to_vec(),
            values: vec![0.0; omega_grid.len()],
            resolution_warning: false,
        });
    }
    let (lo, hi) = op.gershgorin_bounds();
    let b = 0.5 * (hi + lo);
    let a = (0.5 * (hi - lo)) * 1.001 + 1e-12;
    // Enough moments for the Gaussian's Chebyshev tail to drop below ~1e-12.
    let n_mom = ((4.0 * a / theta) as usize + 40).min(20_000);

    // Moments mu_n = <s|T_n(Htilde)|s> / <s|s>.
    let norm = g2.sqrt();
    let v0: Vec<C64> = seed.iter().map(|c| c / norm).collect();
    let mut v1 = op.apply(&v0);
    for (x, s) in v1.iter_mut().zip(&v0) {
        *x = (*x - b * s) / a;
    }
    let mut mu = Vec::with_capacity(n_mom);
    mu.push(1.0);
    mu.push(dot_re(&v0, &v1));
    let mut prev = v0.clone();
    let mut cur = v1;
    let mut tmp = vec![C64::new(0.0, 0.0); v0.len()];
    for _ in 2..n_mom {
        op.apply_into(&cur, &mut tmp);
        for i in 0..tmp.len() {
            let ht = (tmp[i] - b * cur[i]) / a;
            let next = 2.0 * ht - prev[i];
            prev[i] = cur[i];
            cur[i] = next;
        }
        mu.push(dot_re(&v0, &cur));
    }

    // Chebyshev coefficients of f_theta(omega - a x - b) via Gauss-Chebyshev
    // quadrature, then Gamma = 2 pi g^2 sum_n c_n(omega) mu_n.
    let nq = 2 * n_mom.max(256);
    let nodes: Vec<(f64, Vec<f64>)> = (0..nq)
        .map(|j| {
            let t = PI * (j as f64 + 0.5) / nq as f64;
            (t.cos(), cheb_cos_table(t, n_mom))
        })
        .collect();
    let values: Vec<f64> = omega_grid
        .iter()
        .map(|&w| {
            let mut acc = 0.0;
            for n in 0..n_mom {
                let mut cn = 0.0;
                for (x, tn) in &nodes {
                    cn += gaussian_kernel(w - (a * x + b), theta) * tn[n];
                }
                cn *= if n == 0 { 1.0 } else { 2.0 } / nq as f64;
                acc += cn * mu[n];
            }
            2.0 * PI * g2 * acc
        })
        .collect();
    Ok(SpectralCurve { energies: omega_grid.to_vec(), values, resolution_warning: false })
}

fn cheb_cos_table(t: f64, n: usize) -> Vec<f64> {
    (0..n).map(|m| (m as f64 * t).cos()).collect()
}

fn dot_re(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.conj() * y).re).sum::<f64>()
}

/// Per-channel decay rate of the effective model:
/// `Gamma_l = g^2 |Psi_l(0)|^2 / |v_{g,l}| = 2 g^2 / (lambda_l |v_{g,l}|)`,
/// with the effective `lambda_l = 2/|psi_l(0)|^2` anchored to the measured
/// first-column weight.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChannelRate {
    pub l: usize,
    pub gamma: f64,
    pub v_g: f64,
    /// Effective localization length `2/|psi(0)|^2`.
    pub lambda: f64,
    pub k_e: f64,
    /// Set when omega_e sits within `theta` of the channel's band edge,
    /// where the 1/sqrt divergence makes the value unreliable.
    pub near_edge: bool,
}

pub fn channel_rate(model: &EdgeModeModel, l: usize, omega_e: f64, g: f64, theta: f64) -> Option<ChannelRate> {
    let ch = model.channel(l)?;
    if !ch.active(omega_e) {
        return None;
    }
    let v = ch.group_velocity(omega_e)?;
    let w0 = ch.edge_weight_at(omega_e);
    let gamma = g * g * w0 / v.abs();
    Some(ChannelRate {
        l,
        gamma,
        v_g: v,
        lambda: 2.0 / w0,
        k_e: ch.resonant_momentum(omega_e)?,
        near_edge: (omega_e - ch.omega_l).abs() < theta,
    })
}

/// Total model rate and the active channel breakdown.
pub fn model_rate(model: &EdgeModeModel, omega_e: f64, g: f64, theta: f64) -> (f64, Vec<ChannelRate>) {
    let rates: Vec<ChannelRate> =
        (0..model.channels.len()).filter_map(|l| channel_rate(model, l, omega_e, g, theta)).collect();
    (rates.iter().map(|r| r.gamma).sum(), rates)
}

/// Distinguishability `R_{l,l'} = |v_l - v_l'| / (1/Gamma_l + 1/Gamma_l')`
/// of two active channels (energy units); `R T ~ 1` marks resolvable bins.
pub fn distinguishability(model: &EdgeModeModel, l: usize, lp: usize, omega_e: f64, g: f64) -> Option<f64> {
    if l == lp {
        return Some(0.0);
    }
    let a = channel_rate(model, l, omega_e, g, 0.0)?;
    let b = channel_rate(model, lp, omega_e, g, 0.0)?;
    Some((a.v_g - b.v_g).abs() / (1.0 / a.gamma + 1.0 / b.gamma))
}

/// Wavepacket width under quadratic dispersion:
/// `sigma(t) = sigma_0 sqrt(1 + gamma_dis^2 t^2 / sigma_0^4)`.
pub fn dispersion_broadening(sigma0: f64, gamma_dis: f64, t: f64) -> f64 {
    assert!(sigma0 > 0.0);
    sigma0 * (1.0 + gamma_dis * gamma_dis * t * t / sigma0.powi(4)).sqrt()
}

/// True when dispersion stays negligible up to time `t`:
/// `gamma_dis^2 Gamma^4 t^2 << 1` (threshold 0.01).
pub fn dispersion_negligible(gamma_dis: f64, gamma_l: f64, t: f64) -> bool {
    gamma_dis * gamma_dis * gamma_l.powi(4) * t * t < 1e-2
}

/// Faddeeva function w(z) = exp(-z^2) erfc(-iz) for Im(z) >= 0
/// (Humlicek's w4 rational approximations, ~1e-4 relative accuracy).
fn faddeeva_w(z: C64) -> C64 {
    let t = C64::new(z.im, -z.re); // t = -i z
    let s = z.re.abs() + z.im;
    if s >= 15.0 {
        // region I
        t * 0.5641896 / (0.5 + t * t)
    } else if s >= 5.5 {
        // region II
        let u = t * t;
        t * (1.410474 + u * 0.5641896) / (0.75 + u * (3.0 + u))
    } else if z.im >= 0.195 * z.re.abs() - 0.176 {
        // region III
        (16.4955 + t * (20.20933 + t * (11.96482 + t * (3.778987 + t * 0.5642236))))
            / (16.4955 + t * (38.82363 + t * (39.27121 + t * (21.69274 + t * (6.699398 + t)))))
    } else {
        // region IV
        let u = t * t;
        let num = t
            * (36183.31 - u * (3321.9905 - u * (1540.787 - u * (219.0313 - u * (35.76683 - u * (1.320522 - u * 0.56419))))));
        let den = 32066.6 - u * (24322.84 - u * (9022.228 - u * (2186.181 - u * (364.2191 - u * (61.57037 - u * (1.841439 - u))))));
        (-z * z).exp() - num / den
    }
}

/// Voigt profile: Gaussian of width `sigma` convolved with a Lorentzian of
/// half-width `gamma`, unit-normalized.
pub fn voigt_kernel(x: f64, sigma: f64, gamma: f64) -> f64 {
    assert!(sigma > 0.0 && gamma >= 0.0);
    if gamma == 0.0 {
        return gaussian_kernel(x, sigma);
    }
    let z = C64::new(x, gamma) / (sigma * std::f64::consts::SQRT_2);
    faddeeva_w(z).re / (sigma * (2.0 * PI).sqrt())
}

/// Golden-rule ladder of a cylinder bath with uniform photon loss `kappa`:
/// every eigenvalue acquires `-i kappa/2`, turning the Gaussian probe into a
/// Voigt profile of Lorentzian half-width `kappa/2`.
pub fn golden_rule_curve_cylinder_lossy(
    band: &BandStructure,
    em: &EmitterSpec,
    theta: f64,
    kappa: f64,
    omega_grid: &[f64],
) -> Result<SpectralCurve> {
    em.validate()?;
    let gk = momentum_coupling(em, band.spec.ly, &band.k);
    let mut pairs = Vec::with_capacity(band.k.len() * band.lx());
    for ik in 0..band.k.len() {
        let g2 = gk[ik].norm_sqr();
        for b in 0..band.energies[ik].len() {
            pairs.push((band.energies[ik][b], g2 * band.edge_weight(ik, b)));
        }
    }
    let values: Vec<f64> = omega_grid
        .iter()
        .map(|&w| {
            2.0 * PI
                * pairs
                    .iter()
                    .map(|&(e, wt)| wt * voigt_kernel(w - e, theta, 0.5 * kappa))
                    .sum::<f64>()
        })
        .collect();
    Ok(SpectralCurve { energies: omega_grid.to_vec(), values, resolution_warning: false })
}
