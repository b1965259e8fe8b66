//! Effective multi-mode waveguide description of the chiral edge channels.
//!
//! Each left-localized branch emerging from Landau level l is modeled as
//! `omega_l(k) = omega_LL(l, phi) + a_l (k - k_l)^2` on its own arm of the
//! parabola, with an exponential transverse profile
//! `psi_l(x) = sqrt(2/lambda_l) exp(-x/lambda_l)`. Curvatures, momentum
//! offsets and localization lengths are fitted from the cylinder band
//! structure; Landau energies come from the small-flux expansion.

use crate::error::{Error, Result};
use crate::lattice::Flux;
use crate::spectrum::{self, BandStructure, Side};
use crate::C64;
use serde::Serialize;
use std::f64::consts::PI;

/// Landau-level energy of the small-flux expansion:
/// `omega_a + J [ -4 + 4 pi phi (l + 1/2) - (pi phi)^2 (l^2 + l + 1/2) ]`.
///
/// Accuracy degrades as `phi` grows; the torus band-l center stays within
/// 0.02 J of this value for `phi <= 1/12`, `l <= 2`.
pub fn landau_level_energy(l: usize, flux: Flux, j: f64, omega_a: f64) -> f64 {
    let phi = flux.value();
    let lf = l as f64;
    omega_a + j * (-4.0 + 4.0 * PI * phi * (lf + 0.5) - (PI * phi).powi(2) * (lf * lf + lf + 0.5))
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchSample {
    pub ik: usize,
    pub band: usize,
    /// Momentum, unwrapped to stay continuous along the branch.
    pub k: f64,
    pub omega: f64,
    pub eta: f64,
    /// Index of the bulk gap this sample sits in.
    pub gap: usize,
}

/// A connected in-gap edge branch of one chirality.
#[derive(Debug, Clone, Serialize)]
pub struct Branch {
    pub side: Side,
    /// Gap index the branch terminates in (its vertex gap).
    pub gap: usize,
    /// +1 when omega grows with k along the arm, -1 otherwise.
    pub arm_sign: f64,
    pub samples: Vec<BranchSample>,
}

impl Branch {
    pub fn omega_min(&self) -> f64 {
        self.samples.iter().map(|s| s.omega).fold(f64::INFINITY, f64::min)
    }

    pub fn omega_max(&self) -> f64 {
        self.samples.iter().map(|s| s.omega).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct EdgeModelOptions {
    pub side: Side,
    pub eta_thresh: f64,
    /// Exclusion margin around the Landau levels, capped per gap at 15% of
    /// the gap width (narrow gaps at small flux stay usable).
    pub theta: f64,
    /// Branch-l fits use samples from gaps `l ..= l + fit_gap_span`.
    pub fit_gap_span: usize,
    pub max_channels: usize,
}

impl Default for EdgeModelOptions {
    fn default() -> Self {
        EdgeModelOptions { side: Side::Left, eta_thresh: 0.5, theta: 0.1, fit_gap_span: 3, max_channels: 4 }
    }
}

/// Classify the in-gap, side-filtered samples of a band structure into
/// connected branches, linking across k by eigenvector overlap.
pub fn extract_branches(band: &BandStructure, opts: &EdgeModelOptions) -> Result<Vec<Branch>> {
    let spec = &band.spec;
    let edges = spectrum::bulk_band_edges(spec.flux, spec.j, spec.omega_a)?;
    let gaps = spectrum::gap_windows(&edges);
    let q = spec.flux.q() as usize;
    let n_lower = if spec.flux.is_zero() { 0 } else { ((q - 1) / 2).max(1) };
    // Usable gaps: the lower, well-opened ones.
    let usable: Vec<(usize, f64, f64, f64)> = gaps
        .iter()
        .take(n_lower)
        .enumerate()
        .filter_map(|(g, &(lo, hi))| {
            let width = hi - lo;
            if width <= 0.0 {
                return None;
            }
            let margin = opts.theta.min(0.15 * width);
            (width > 2.5 * margin).then_some((g, lo + margin, hi - margin, margin))
        })
        .collect();
    if usable.is_empty() {
        return Ok(Vec::new());
    }

    let nk = band.k.len();
    let max_skip = 8usize;
    let overlap_gate = 0.6;

    struct Open {
        samples: Vec<BranchSample>,
        last_ik: usize,
    }
    let mut open: Vec<Open> = Vec::new();
    let mut done: Vec<Vec<BranchSample>> = Vec::new();

    let in_gap = |e: f64| -> Option<usize> {
        usable.iter().find(|&&(_, lo, hi, _)| e >= lo && e <= hi).map(|&(g, ..)| g)
    };

    for ik in 0..nk {
        let mut cand: Vec<BranchSample> = Vec::new();
        for (b, &e) in band.energies[ik].iter().enumerate() {
            if let Some(g) = in_gap(e) {
                if opts.side.matches(band.eta[ik][b], opts.eta_thresh) {
                    cand.push(BranchSample { ik, band: b, k: band.k[ik], omega: e, eta: band.eta[ik][b], gap: g });
                }
            }
        }

        // Score all (open, candidate) pairs by eigenvector overlap.
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (oi, o) in open.iter().enumerate() {
            let last = o.samples.last().unwrap();
            for (ci, c) in cand.iter().enumerate() {
                let ov = state_overlap(band, (last.ik, last.band), (c.ik, c.band));
                if ov >= overlap_gate {
                    pairs.push((ov, oi, ci));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let mut open_used = vec![false; open.len()];
        let mut cand_used = vec![false; cand.len()];
        for (_, oi, ci) in pairs {
            if open_used[oi] || cand_used[ci] {
                continue;
            }
            open_used[oi] = true;
            cand_used[ci] = true;
            let mut s = cand[ci].clone();
            let prev_k = open[oi].samples.last().unwrap().k;
            // keep k continuous (the sorted grid never jumps here, but a
            // merged wrap segment can)
            s.k = prev_k + wrap_to_pi(s.k - prev_k);
            open[oi].samples.push(s);
            open[oi].last_ik = ik;
        }
        for (ci, c) in cand.into_iter().enumerate() {
            if !cand_used[ci] {
                open.push(Open { samples: vec![c], last_ik: ik });
            }
        }
        // Retire branches that lost the trail.
        let mut still = Vec::new();
        for o in open.into_iter() {
            if ik - o.last_ik > max_skip {
                done.push(o.samples);
            } else {
                still.push(o);
            }
        }
        open = still;
    }
    done.extend(open.into_iter().map(|o| o.samples));

    // Merge across the Brillouin-zone wrap: a branch ending near k = +pi can
    // continue as one starting near k = -pi.
    let mut merged: Vec<Vec<BranchSample>> = Vec::new();
    let mut taken = vec![false; done.len()];
    for i in 0..done.len() {
        if taken[i] {
            continue;
        }
        let mut cur = done[i].clone();
        taken[i] = true;
        loop {
            let end = cur.last().unwrap().clone();
            if end.ik + max_skip < nk - 1 {
                break;
            }
            let mut best: Option<(f64, usize)> = None;
            for (j, seg) in done.iter().enumerate() {
                if taken[j] {
                    continue;
                }
                let start = &seg[0];
                if start.ik > max_skip {
                    continue;
                }
                let ov = state_overlap(band, (end.ik, end.band), (start.ik, start.band));
                if ov >= overlap_gate && best.map(|(b, _)| ov > b).unwrap_or(true) {
                    best = Some((ov, j));
                }
            }
            match best {
                Some((_, j)) => {
                    taken[j] = true;
                    let mut prev = cur.last().unwrap().k;
                    for s in &done[j] {
                        let mut s = s.clone();
                        s.k = prev + wrap_to_pi(s.k - prev);
                        prev = s.k;
                        cur.push(s);
                    }
                }
                None => break,
            }
        }
        merged.push(cur);
    }

    // Label and orient.
    let mut branches: Vec<Branch> = merged
        .into_iter()
        .filter(|s| s.len() >= 3)
        .map(|samples| {
            let (imin, _) = samples
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.omega.partial_cmp(&b.1.omega).unwrap())
                .unwrap();
            let (imax, _) = samples
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.omega.partial_cmp(&b.1.omega).unwrap())
                .unwrap();
            let gap = samples[imin].gap;
            let arm_sign = (samples[imax].k - samples[imin].k).signum();
            Branch { side: opts.side, gap, arm_sign, samples }
        })
        .collect();
    branches.sort_by(|a, b| (a.gap, a.omega_min()).partial_cmp(&(b.gap, b.omega_min())).unwrap());
    Ok(branches)
}

fn wrap_to_pi(dk: f64) -> f64 {
    let mut d = dk;
    while d > PI {
        d -= 2.0 * PI;
    }
    while d < -PI {
        d += 2.0 * PI;
    }
    d
}

fn state_overlap(band: &BandStructure, a: (usize, usize), b: (usize, usize)) -> f64 {
    let va = band.states[a.0].column(a.1);
    let vb = band.states[b.0].column(b.1);
    va.iter().zip(vb.iter()).map(|(x, y)| x.conj() * y).sum::<C64>().norm()
}

/// Constrained quadratic dispersion fit with the vertex energy pinned to the
/// analytic Landau level: two free parameters (a_l, k_l).
#[derive(Debug, Clone, Serialize)]
pub struct DispersionFit {
    pub a: f64,
    pub k_l: f64,
    /// Mean squared fit residual of the quadratic model.
    pub eps_quad: f64,
    /// Mean squared fit residual of the best linear model on the same window.
    pub eps_lin: f64,
    pub n_samples: usize,
    pub k_span: f64,
    pub ill_conditioned: bool,
}

pub fn fit_dispersion(samples: &[(f64, f64)], vertex_energy: f64) -> Result<DispersionFit> {
    let n = samples.len();
    if n < 8 {
        return Err(Error::InvalidSpec(format!("dispersion fit needs >= 8 samples in the window, got {n}")));
    }
    let kmin = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let kmax = samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let span = kmax - kmin;

    let sse = |kl: f64| -> (f64, f64) {
        let mut su2 = 0.0;
        let mut suw = 0.0;
        for &(k, w) in samples {
            let u = (k - kl) * (k - kl);
            su2 += u * u;
            suw += u * (w - vertex_energy);
        }
        let a = if su2 > 0.0 { suw / su2 } else { 0.0 };
        let mut s = 0.0;
        for &(k, w) in samples {
            let r = w - vertex_energy - a * (k - kl) * (k - kl);
            s += r * r;
        }
        (s, a)
    };

    // Coarse scan then golden-section refinement.
    let lo = kmin - 0.5 - 0.5 * span;
    let hi = kmax + 0.5 + 0.5 * span;
    let m = 1200;
    let mut best = (f64::INFINITY, lo);
    for i in 0..=m {
        let kl = lo + (hi - lo) * i as f64 / m as f64;
        let (s, _) = sse(kl);
        if s < best.0 {
            best = (s, kl);
        }
    }
    let step = (hi - lo) / m as f64;
    let (mut a_, mut b_) = (best.1 - step, best.1 + step);
    let gr = 0.5 * (5.0f64.sqrt() - 1.0);
    let (mut c_, mut d_) = (b_ - gr * (b_ - a_), a_ + gr * (b_ - a_));
    for _ in 0..90 {
        if sse(c_).0 < sse(d_).0 {
            b_ = d_;
        } else {
            a_ = c_;
        }
        c_ = b_ - gr * (b_ - a_);
        d_ = a_ + gr * (b_ - a_);
    }
    let k_l = 0.5 * (a_ + b_);
    let (s_quad, a) = sse(k_l);

    // Plain linear fit on the same window for comparison.
    let (mut sk, mut sw, mut skk, mut skw) = (0.0, 0.0, 0.0, 0.0);
    for &(k, w) in samples {
        sk += k;
        sw += w;
        skk += k * k;
        skw += k * w;
    }
    let nf = n as f64;
    let denom = nf * skk - sk * sk;
    let c1 = if denom.abs() > 0.0 { (nf * skw - sk * sw) / denom } else { 0.0 };
    let c0 = (sw - c1 * sk) / nf;
    let s_lin: f64 = samples.iter().map(|&(k, w)| (w - c0 - c1 * k) * (w - c0 - c1 * k)).sum();

    Ok(DispersionFit {
        a,
        k_l,
        eps_quad: s_quad / nf,
        eps_lin: s_lin / nf,
        n_samples: n,
        k_span: span,
        ill_conditioned: span < 0.2,
    })
}

/// Exponential-profile fit of an in-gap eigenstate's column weights.
#[derive(Debug, Clone, Serialize)]
pub struct LocalizationFit {
    pub lambda: f64,
    pub r_squared: f64,
    pub n_columns: usize,
    /// Set when the profile is a poor exponential (R^2 < 0.9); lambda is
    /// still reported.
    pub non_exponential: bool,
}

/// Fit `w(x) ~ exp(-2x/lambda)` by linear regression of `ln w` over the first
/// `max(3, 3*lambda_hat)` columns.
pub fn fit_localization_length(column_weights: &[f64]) -> Result<LocalizationFit> {
    let lx = column_weights.len();
    if lx < 3 {
        return Err(Error::InvalidSpec("localization fit needs >= 3 columns".into()));
    }
    let w0 = column_weights[0].max(1e-300);
    // Initial estimate from a farther anchor column so transverse nodes of
    // higher channels do not derail the window choice.
    let mut xstar = lx - 1;
    for x in 1..lx {
        if column_weights[x] <= w0 * 1e-4 {
            xstar = x;
            break;
        }
    }
    let wx = column_weights[xstar].max(1e-300);
    let lambda_hat =
        if wx < w0 { (2.0 * xstar as f64 / (w0 / wx).ln()).clamp(0.3, lx as f64) } else { 3.0 };
    let n = ((3.0 * lambda_hat).ceil() as usize).clamp(3, lx / 2);
    let xs: Vec<f64> = (0..n).map(|x| x as f64).collect();
    let ys: Vec<f64> = column_weights[..n].iter().map(|&w| w.max(1e-300).ln()).collect();
    let nf = n as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let slope = (nf * sxy - sx * sy) / (nf * sxx - sx * sx);
    let intercept = (sy - slope * sx) / nf;
    let mean_y = sy / nf;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean_y) * (y - mean_y)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| {
        let f = intercept + slope * x;
        (y - f) * (y - f)
    }).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let lambda = if slope < 0.0 { -2.0 / slope } else { f64::INFINITY };
    Ok(LocalizationFit { lambda, r_squared: r2, n_columns: n, non_exponential: r2 < 0.9 })
}

/// Column weights `sum_y |psi(x, y)|^2` of a chain eigenvector (for Bloch
/// states this is just `|psi(x)|^2`).
pub fn column_weights(state: &[C64], lx: usize, ly: usize) -> Vec<f64> {
    assert_eq!(state.len(), lx * ly);
    (0..lx).map(|x| (0..ly).map(|y| state[x * ly + y].norm_sqr()).sum()).collect()
}

/// Slope of the `k_l(omega_l)` relation across fluxes (mod-2pi unwrapped).
#[derive(Debug, Clone, Serialize)]
pub struct BetaFit {
    pub beta: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    pub n_points: usize,
}

pub fn fit_beta(points: &[(f64, f64)]) -> Result<BetaFit> {
    if points.len() < 4 {
        return Err(Error::InvalidSpec(format!("beta fit needs >= 4 fluxes, got {}", points.len())));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // Unwrap the momenta along increasing omega.
    let mut ks = vec![pts[0].1];
    for i in 1..pts.len() {
        let prev = ks[i - 1];
        let mut k = pts[i].1;
        k += 2.0 * PI * ((prev - k) / (2.0 * PI)).round();
        ks.push(k);
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = ks.iter().sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().zip(&ks).map(|(p, k)| p.0 * k).sum();
    let beta = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - beta * sx) / n;
    let ss: f64 = pts.iter().zip(&ks).map(|(p, k)| {
        let r = k - beta * p.0 - intercept;
        r * r
    }).sum();
    Ok(BetaFit { beta, intercept, residual_rms: (ss / n).sqrt(), n_points: points.len() })
}

/// One fitted topological channel.
#[derive(Debug, Clone, Serialize)]
pub struct Channel {
    /// Channel index in the model (equals `gap` for phi = 1/q).
    pub l: usize,
    /// Gap the branch terminates in.
    pub gap: usize,
    /// Vertex energy (analytic Landau level for p = 1, measured band top
    /// otherwise).
    pub omega_l: f64,
    pub a: f64,
    /// Vertex momentum, wrapped to (-pi, pi].
    pub k_l: f64,
    /// Unwrapped vertex momentum in the branch frame (for root selection).
    pub k_l_unwrapped: f64,
    pub arm_sign: f64,
    pub eps_quad: f64,
    pub eps_lin: f64,
    pub ill_conditioned: bool,
    /// Localization length at the window midpoint.
    pub lambda_ref: f64,
    /// (omega, lambda) samples along the branch, ascending omega.
    pub lambda_samples: Vec<(f64, f64)>,
    /// (omega, |psi(0)|^2) edge-weight samples along the branch, ascending
    /// omega: the first-column anchor with `|psi(0)|^2 = 2/lambda` in the
    /// exponential model.
    pub w0_samples: Vec<(f64, f64)>,
    /// Sampled momentum window (unwrapped branch frame).
    pub k_window: (f64, f64),
    pub omega_window: (f64, f64),
    /// Cross-flux slope of k_l vs omega_l, filled by [`attach_beta`].
    pub beta: Option<f64>,
}

impl Channel {
    pub fn active(&self, omega_e: f64) -> bool {
        let top = self.omega_window.1 + 0.25 * (self.omega_window.1 - self.omega_l).max(0.0);
        omega_e > self.omega_l && omega_e <= top
    }

    /// Resonant momentum on this branch's arm, wrapped to (-pi, pi].
    pub fn resonant_momentum(&self, omega_e: f64) -> Option<f64> {
        if omega_e <= self.omega_l || self.a <= 0.0 {
            return None;
        }
        let k = self.k_l_unwrapped + self.arm_sign * ((omega_e - self.omega_l) / self.a).sqrt();
        Some(wrap_to_pi(k))
    }

    /// Group velocity `2 a (k_e - k_l)` at the resonant momentum.
    pub fn group_velocity(&self, omega_e: f64) -> Option<f64> {
        if omega_e <= self.omega_l || self.a <= 0.0 {
            return None;
        }
        Some(self.arm_sign * 2.0 * (self.a * (omega_e - self.omega_l)).sqrt())
    }

    /// Localization length at energy `omega_e`, interpolated along the branch.
    pub fn lambda_at(&self, omega_e: f64) -> f64 {
        interp(&self.lambda_samples, omega_e).unwrap_or(self.lambda_ref)
    }

    /// Edge weight |psi(0)|^2 at energy `omega_e`, interpolated along the
    /// branch; the effective localization length entering the channel rate
    /// is `2 / w0`.
    pub fn edge_weight_at(&self, omega_e: f64) -> f64 {
        interp(&self.w0_samples, omega_e).unwrap_or(2.0 / self.lambda_ref)
    }

    /// Curvature of the dispersion at resonance, `gamma_dis = 2 a (k_e - k_l)`
    /// magnitude, entering the wavepacket-broadening estimate.
    pub fn dispersion_gamma(&self, omega_e: f64) -> Option<f64> {
        self.group_velocity(omega_e).map(|v| v.abs())
    }
}

fn interp(samples: &[(f64, f64)], x: f64) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    if x <= samples[0].0 {
        return Some(samples[0].1);
    }
    if x >= samples[samples.len() - 1].0 {
        return Some(samples[samples.len() - 1].1);
    }
    match samples.binary_search_by(|probe| probe.0.partial_cmp(&x).unwrap()) {
        Ok(i) => Some(samples[i].1),
        Err(i) => {
            let (x0, y0) = samples[i - 1];
            let (x1, y1) = samples[i];
            Some(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
        }
    }
}

/// Fitted per-channel effective model of one flux.
#[derive(Debug, Clone, Serialize)]
pub struct EdgeModeModel {
    pub flux: Flux,
    pub j: f64,
    pub omega_a: f64,
    pub side: Side,
    pub lx: usize,
    pub ly: usize,
    pub channels: Vec<Channel>,
}

impl EdgeModeModel {
    pub fn channel(&self, l: usize) -> Option<&Channel> {
        self.channels.get(l)
    }

    /// Channels active at `omega_e`, by model index.
    pub fn active_channels(&self, omega_e: f64) -> Vec<usize> {
        (0..self.channels.len()).filter(|&l| self.channels[l].active(omega_e)).collect()
    }
}

/// Fit the effective edge-mode model from a cylinder band structure.
pub fn build_edge_model(band: &BandStructure, opts: &EdgeModelOptions) -> Result<EdgeModeModel> {
    let spec = &band.spec;
    let branches = extract_branches(band, opts)?;
    let edges = spectrum::bulk_band_edges(spec.flux, spec.j, spec.omega_a)?;
    let mut channels = Vec::new();
    for branch in branches.iter().take(opts.max_channels) {
        let vertex = if spec.flux.p() == 1 {
            landau_level_energy(branch.gap, spec.flux, spec.j, spec.omega_a)
        } else {
            edges[branch.gap].1
        };
        let window: Vec<&BranchSample> =
            branch.samples.iter().filter(|s| s.gap <= branch.gap + opts.fit_gap_span).collect();
        let pts: Vec<(f64, f64)> = window.iter().map(|s| (s.k, s.omega)).collect();
        let fit = match fit_dispersion(&pts, vertex) {
            Ok(f) => f,
            Err(_) => continue, // too few in-window samples at this size
        };
        // Localization lengths and first-column anchors along the branch.
        let mut lam: Vec<(f64, f64)> = Vec::new();
        let mut w0s: Vec<(f64, f64)> = Vec::new();
        for s in &window {
            let state = band.states[s.ik].column(s.band);
            let w = column_weights(state.as_slice().unwrap(), spec.lx, 1);
            w0s.push((s.omega, w[0]));
            if let Ok(lf) = fit_localization_length(&w) {
                if lf.lambda.is_finite() {
                    lam.push((s.omega, lf.lambda));
                }
            }
        }
        lam.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        w0s.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let omega_window = (branch.omega_min(), branch.omega_max());
        let lambda_ref = if lam.is_empty() {
            f64::NAN
        } else {
            let mut ls: Vec<f64> = lam.iter().map(|&(_, l)| l).collect();
            ls.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ls[ls.len() / 2]
        };
        let kmin = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let kmax = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        channels.push(Channel {
            l: channels.len(),
            gap: branch.gap,
            omega_l: vertex,
            a: fit.a,
            k_l: wrap_to_pi(fit.k_l),
            k_l_unwrapped: fit.k_l,
            arm_sign: branch.arm_sign,
            eps_quad: fit.eps_quad,
            eps_lin: fit.eps_lin,
            ill_conditioned: fit.ill_conditioned,
            lambda_ref,
            lambda_samples: lam,
            w0_samples: w0s,
            k_window: (kmin, kmax),
            omega_window,
            beta: None,
        });
    }
    Ok(EdgeModeModel {
        flux: spec.flux,
        j: spec.j,
        omega_a: spec.omega_a,
        side: opts.side,
        lx: spec.lx,
        ly: spec.ly,
        channels,
    })
}

/// Fit per-channel beta slopes across a flux sweep and attach them to each
/// model. Returns the fits indexed by channel.
pub fn attach_beta(models: &mut [EdgeModeModel]) -> Result<Vec<BetaFit>> {
    let n_ch = models.iter().map(|m| m.channels.len()).min().unwrap_or(0);
    let mut fits = Vec::new();
    for l in 0..n_ch {
        let pts: Vec<(f64, f64)> = models.iter().map(|m| (m.channels[l].omega_l, m.channels[l].k_l)).collect();
        let fit = fit_beta(&pts)?;
        for m in models.iter_mut() {
            m.channels[l].beta = Some(fit.beta);
        }
        fits.push(fit);
    }
    Ok(fits)
}
