//! Single-excitation dynamics of the coupled emitter-bath system and the
//! observables extracted from the emitted wavepackets.

use crate::edge_model::EdgeModeModel;
use crate::emitter::{self, EmitterSpec};
use crate::error::{Error, Result};
use crate::lattice::{ky_grid, BathOperator, LatticeSpec, SiteGrid};
use crate::op::SparseOp;
use crate::propagator::Propagator;
use crate::C64;
use serde::Serialize;
use std::f64::consts::PI;

/// Emitter + bath Hamiltonian on the (N+1)-dimensional single-excitation
/// sector; the emitter amplitude sits at the last index.
#[derive(Debug, Clone)]
pub struct FullOperator {
    pub op: SparseOp,
    pub grid: SiteGrid,
    pub emitter_index: usize,
    pub bath_spec: LatticeSpec,
    pub emitter: EmitterSpec,
}

/// Block structure: bath | coupling column g_y^* | diagonal omega_e - i Gamma*/2.
pub fn assemble_full(bath: &BathOperator, em: &EmitterSpec) -> Result<FullOperator> {
    let n = bath.dim();
    let e_idx = n;
    let mut triplets: Vec<(usize, usize, C64)> = Vec::with_capacity(bath.op.nnz() + 2 * em.couplings.len() + 1);
    for r in 0..n {
        for (c, v) in bath.op.row(r) {
            triplets.push((r, c, v));
        }
    }
    for c in &em.couplings {
        let idx = bath
            .grid
            .index(c.x, c.y)
            .ok_or_else(|| Error::InvalidSpec(format!("coupling site ({}, {}) is a defect", c.x, c.y)))?;
        triplets.push((e_idx, idx, c.g));
        triplets.push((idx, e_idx, c.g.conj()));
    }
    triplets.push((e_idx, e_idx, C64::new(em.omega_e, -0.5 * em.gamma_star)));
    let hermitian = bath.op.is_hermitian() && em.gamma_star == 0.0;
    let op = SparseOp::from_triplets(n + 1, triplets, hermitian);
    Ok(FullOperator {
        op,
        grid: bath.grid.clone(),
        emitter_index: e_idx,
        bath_spec: bath.spec.clone(),
        emitter: em.clone(),
    })
}

/// Emitter amplitude plus the complex photonic field over active sites.
#[derive(Debug, Clone)]
pub struct SingleExcitationState {
    /// Field amplitudes over active sites, then the emitter amplitude.
    pub amp: Vec<C64>,
    pub time: f64,
}

impl SingleExcitationState {
    /// The ideal pi-pulse initial state |e> x |vac>.
    pub fn excited(n_sites: usize) -> SingleExcitationState {
        let mut amp = vec![C64::new(0.0, 0.0); n_sites + 1];
        amp[n_sites] = C64::new(1.0, 0.0);
        SingleExcitationState { amp, time: 0.0 }
    }

    pub fn n_sites(&self) -> usize {
        self.amp.len() - 1
    }

    pub fn c_e(&self) -> C64 {
        self.amp[self.amp.len() - 1]
    }

    pub fn emitter_pop(&self) -> f64 {
        self.c_e().norm_sqr()
    }

    pub fn field(&self) -> &[C64] {
        &self.amp[..self.amp.len() - 1]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn photon_pop(&self) -> f64 {
        self.field().iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Sampled run record.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub pop_e: Vec<f64>,
    pub norm2: Vec<f64>,
    /// Per-sample |A(0, y)|^2 along the edge, when requested.
    pub edge_pop: Option<Vec<Vec<f64>>>,
    /// Full per-sample states, when requested.
    pub states: Option<Vec<SingleExcitationState>>,
    pub final_state: SingleExcitationState,
}

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    pub t_final: f64,
    pub dt_sample: f64,
    /// Amplitude-error budget per unit time (the global 2-norm error stays
    /// below tol * (1 + t_final)).
    pub tol: f64,
    pub keep_edge: bool,
    pub keep_states: bool,
}

impl EvolveOptions {
    pub fn new(t_final: f64, dt_sample: f64) -> EvolveOptions {
        EvolveOptions { t_final, dt_sample, tol: 1e-9, keep_edge: false, keep_states: false }
    }

    pub fn keeping_edge(mut self) -> EvolveOptions {
        self.keep_edge = true;
        self
    }
}

/// Propagate from `psi0` (default: the excited emitter over vacuum),
/// sampling every `dt_sample`.
pub fn evolve(full: &FullOperator, psi0: Option<&SingleExcitationState>, opts: &EvolveOptions) -> Result<Trajectory> {
    if !(opts.t_final >= 0.0) || !(opts.dt_sample > 0.0) {
        return Err(Error::InvalidSpec("need t_final >= 0 and dt_sample > 0".into()));
    }
    let n = full.grid.n_active();
    let mut state = match psi0 {
        Some(s) => {
            if s.amp.len() != n + 1 {
                return Err(Error::InvalidSpec(format!(
                    "initial state has {} amplitudes, operator needs {}",
                    s.amp.len(),
                    n + 1
                )));
            }
            s.clone()
        }
        None => SingleExcitationState::excited(n),
    };
    state.time = 0.0;
    let prop = Propagator::for_op(&full.op, opts.tol);

    let mut traj = Trajectory {
        times: Vec::new(),
        pop_e: Vec::new(),
        norm2: Vec::new(),
        edge_pop: opts.keep_edge.then(Vec::new),
        states: opts.keep_states.then(Vec::new),
        final_state: state.clone(),
    };
    let record = |s: &SingleExcitationState, traj: &mut Trajectory| {
        traj.times.push(s.time);
        traj.pop_e.push(s.emitter_pop());
        traj.norm2.push(s.norm_sqr());
        if let Some(e) = traj.edge_pop.as_mut() {
            e.push(edge_profile(s, &full.grid));
        }
        if let Some(v) = traj.states.as_mut() {
            v.push(s.clone());
        }
    };
    record(&state, &mut traj);

    let mut t = 0.0;
    while t < opts.t_final - 1e-12 * opts.t_final.max(1.0) {
        let dt = opts.dt_sample.min(opts.t_final - t);
        prop.step(&full.op, &mut state.amp, dt)?;
        t += dt;
        state.time = t;
        record(&state, &mut traj);
    }
    traj.final_state = state;
    Ok(traj)
}

/// |A(0, y)|^2 over the edge column (zero at carved sites).
pub fn edge_profile(state: &SingleExcitationState, grid: &SiteGrid) -> Vec<f64> {
    (0..grid.ly)
        .map(|y| grid.index(0, y).map(|i| state.amp[i].norm_sqr()).unwrap_or(0.0))
        .collect()
}

/// Column-summed photon population per y.
pub fn column_population(state: &SingleExcitationState, grid: &SiteGrid) -> Vec<f64> {
    let mut out = vec![0.0; grid.ly];
    for (idx, &(_, y)) in grid.sites().iter().enumerate() {
        out[y] += state.amp[idx].norm_sqr();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentumRegion {
    /// Transform of the x = 0 column only.
    EdgeColumn,
    /// Column-resolved transform of the full field, summed over x.
    Full,
}

/// Photon population in momentum space, `|Atilde(k_y)|^2` on the ring grid;
/// satisfies Parseval against the transformed region.
pub fn momentum_profile(
    state: &SingleExcitationState,
    grid: &SiteGrid,
    region: MomentumRegion,
) -> (Vec<f64>, Vec<f64>) {
    let ly = grid.ly;
    let ks = ky_grid(ly);
    let norm = 1.0 / (ly as f64).sqrt();
    let columns: Vec<usize> = match region {
        MomentumRegion::EdgeColumn => vec![0],
        MomentumRegion::Full => (0..grid.lx).collect(),
    };
    let mut pk = vec![0.0; ks.len()];
    for &x in &columns {
        let col: Vec<C64> = (0..ly)
            .map(|y| grid.index(x, y).map(|i| state.amp[i]).unwrap_or_else(|| C64::new(0.0, 0.0)))
            .collect();
        for (i, &k) in ks.iter().enumerate() {
            let a: C64 = col
                .iter()
                .enumerate()
                .map(|(y, &c)| c * C64::new(0.0, -k * y as f64).exp())
                .sum();
            pk[i] += (a * norm).norm_sqr();
        }
    }
    (ks, pk)
}

/// Local maxima above `rel_height * max` with prominence at least
/// `rel_prominence * max`, on a circular profile.
pub fn find_peaks(profile: &[f64], rel_height: f64, rel_prominence: f64) -> Vec<usize> {
    let n = profile.len();
    if n < 3 {
        return Vec::new();
    }
    let max = profile.iter().cloned().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let at = |i: isize| profile[i.rem_euclid(n as isize) as usize];
    let mut peaks = Vec::new();
    for i in 0..n as isize {
        let v = at(i);
        if v < rel_height * max {
            continue;
        }
        if v < at(i - 1) || v < at(i + 1) || (v == at(i - 1) && v == at(i + 1)) {
            continue;
        }
        // plateau handling: require strictly greater than some neighbor on
        // each side within the plateau
        let mut l = i - 1;
        while at(l) == v && l > i - n as isize {
            l -= 1;
        }
        let mut r = i + 1;
        while at(r) == v && r < i + n as isize {
            r += 1;
        }
        if at(l) >= v || at(r) >= v {
            continue;
        }
        if i > l + 1 {
            continue; // count each plateau once, at its left end
        }
        // prominence: descend on both sides to the surrounding minima
        let mut lmin = v;
        let mut j = i - 1;
        while j > i - n as isize {
            let u = at(j);
            if u > v {
                break;
            }
            lmin = lmin.min(u);
            j -= 1;
        }
        let mut rmin = v;
        let mut j = i + 1;
        while j < i + n as isize {
            let u = at(j);
            if u > v {
                break;
            }
            rmin = rmin.min(u);
            j += 1;
        }
        if v - lmin.max(rmin) >= rel_prominence * max {
            peaks.push(i as usize);
        }
    }
    peaks
}

/// One extracted time bin.
#[derive(Debug, Clone, Serialize)]
pub struct TimeBin {
    pub channel: usize,
    /// Predicted pulse-front position y_e + v_l T, wrapped into [0, Ly).
    pub center: f64,
    pub half_width: f64,
    /// |c_l|^2: edge population integrated over the bin window.
    pub population: f64,
    pub gamma: f64,
    pub v_g: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimebinResult {
    pub bins: Vec<TimeBin>,
    pub sum_c2: f64,
    /// Photon population outside every window.
    pub residual: f64,
    /// Share of the photonic population living on the x = 0 column.
    pub edge_fraction: f64,
    pub emitter_pop: f64,
    /// Separation criterion R_{l,l'} T >= 1 failed for some active pair.
    pub bins_overlap: bool,
    /// Raw windows overlapped and were watershed-split at midpoints.
    pub clipped: bool,
}

/// Split the emitted photon population of a late-time state into per-channel
/// time bins centered at `y_e + v_{g,l} T` with half-width
/// `max(3/Gamma_l, 3 sigma(T))`.
///
/// Each bin integrates the column-summed population over its y-window: the
/// chiral wavepacket carries its transverse profile `|Psi_l(x)|^2` with it,
/// so the column sum measures `|c_l|^2` without the `|Psi_l(0)|^2` bias an
/// edge-row-only integral would have.
pub fn timebin_amplitudes(
    state: &SingleExcitationState,
    grid: &SiteGrid,
    model: &EdgeModeModel,
    em: &EmitterSpec,
) -> Result<TimebinResult> {
    let t = state.time;
    let ly = grid.ly as f64;
    let omega_e = em.omega_e;
    let y_e = em.couplings.iter().map(|c| c.y as f64).sum::<f64>() / em.couplings.len() as f64;

    // Active channels with their giant-atom-aware couplings.
    let ks_model: Vec<(usize, f64, f64, f64)> = model
        .active_channels(omega_e)
        .into_iter()
        .filter_map(|l| {
            let ch = &model.channels[l];
            let k_e = ch.resonant_momentum(omega_e)?;
            let v = ch.group_velocity(omega_e)?;
            let g_eff2 = ly * emitter::momentum_coupling(em, grid.ly, &[k_e])[0].norm_sqr();
            let gamma = g_eff2 * ch.edge_weight_at(omega_e) / v.abs();
            Some((l, v, gamma, ch.dispersion_gamma(omega_e).unwrap_or(0.0)))
        })
        .collect();
    if ks_model.is_empty() {
        return Err(Error::InvalidSpec(format!("no active channels at omega_e = {omega_e}")));
    }

    // Separation criterion over all pairs.
    let mut bins_overlap = false;
    for i in 0..ks_model.len() {
        for j in i + 1..ks_model.len() {
            let (_, vi, gi, _) = ks_model[i];
            let (_, vj, gj, _) = ks_model[j];
            let r = (vi - vj).abs() / (1.0 / gi + 1.0 / gj);
            if r * t < 1.0 {
                bins_overlap = true;
            }
        }
    }

    struct RawBin {
        l: usize,
        center: f64,
        half: f64,
        gamma: f64,
        v: f64,
    }
    let mut raw: Vec<RawBin> = ks_model
        .iter()
        .map(|&(l, v, gamma, gdis)| {
            let sigma_t = emitter::dispersion_broadening(1.0 / gamma, gdis, t);
            let half = (3.0 / gamma).max(3.0 * sigma_t);
            let center = (y_e + v * t).rem_euclid(ly);
            RawBin { l, center, half, gamma, v }
        })
        .collect();
    raw.sort_by(|a, b| a.center.partial_cmp(&b.center).unwrap());

    // Clip overlapping windows at circular midpoints between adjacent centers.
    let nb = raw.len();
    let mut bounds: Vec<(f64, f64)> = Vec::with_capacity(nb);
    let mut clipped = false;
    for i in 0..nb {
        let b = &raw[i];
        let (mut lo, mut hi) = (b.center - b.half, b.center + b.half);
        if nb > 1 {
            let prev = &raw[(i + nb - 1) % nb];
            let next = &raw[(i + 1) % nb];
            let gap_prev = (b.center - prev.center).rem_euclid(ly);
            let gap_next = (next.center - b.center).rem_euclid(ly);
            let left_mid = b.center - 0.5 * gap_prev;
            let right_mid = b.center + 0.5 * gap_next;
            if lo < left_mid {
                lo = left_mid;
                clipped = true;
            }
            if hi > right_mid {
                hi = right_mid;
                clipped = true;
            }
        } else if b.half * 2.0 >= ly {
            lo = b.center - 0.5 * ly;
            hi = b.center + 0.5 * ly;
            clipped = true;
        }
        bounds.push((lo, hi));
    }

    let profile = column_population(state, grid);
    let edge_total: f64 = edge_profile(state, grid).iter().sum();
    let photon = state.photon_pop();
    let in_window = |y: usize, lo: f64, hi: f64| -> bool {
        let len = (hi - lo).rem_euclid(ly);
        let len = if len == 0.0 && hi > lo { ly } else { len };
        let d = (y as f64 - lo).rem_euclid(ly);
        d <= len
    };
    let mut bins = Vec::with_capacity(nb);
    let mut covered = vec![false; grid.ly];
    for (b, &(lo, hi)) in raw.iter().zip(&bounds) {
        let mut pop = 0.0;
        for (y, &p) in profile.iter().enumerate() {
            if in_window(y, lo, hi) && !covered[y] {
                pop += p;
                covered[y] = true;
            }
        }
        bins.push(TimeBin {
            channel: b.l,
            center: b.center,
            half_width: b.half,
            population: pop,
            gamma: b.gamma,
            v_g: b.v,
        });
    }
    bins.sort_by_key(|b| b.channel);
    let sum_c2: f64 = bins.iter().map(|b| b.population).sum();
    Ok(TimebinResult {
        bins,
        sum_c2,
        residual: photon - sum_c2,
        edge_fraction: if photon > 0.0 { edge_total / photon } else { 0.0 },
        emitter_pop: state.emitter_pop(),
        bins_overlap,
        clipped,
    })
}

/// Ratio of window-integrated edge population, defect over clean, at matched
/// time. The probe window (inclusive y-range on the edge) must not touch the
/// defect.
pub fn transmission_past_defect(
    clean: &SingleExcitationState,
    clean_grid: &SiteGrid,
    carved: &SingleExcitationState,
    carved_grid: &SiteGrid,
    carved_spec: &LatticeSpec,
    window: (usize, usize),
) -> Result<f64> {
    if (clean.time - carved.time).abs() > 1e-9 * clean.time.max(1.0) {
        return Err(Error::InvalidSpec("clean and defect snapshots must be at matched times".into()));
    }
    let (y0, y1) = window;
    if y1 < y0 || y1 >= clean_grid.ly {
        return Err(Error::InvalidSpec(format!("bad probe window ({y0}, {y1})")));
    }
    for r in &carved_spec.defects {
        if r.x[0] == 0 && r.y[0] <= y1 && y0 <= r.y[1] {
            return Err(Error::InvalidSpec("probe window intersects the defect".into()));
        }
    }
    let pc = edge_profile(clean, clean_grid);
    let pd = edge_profile(carved, carved_grid);
    let sc: f64 = pc[y0..=y1].iter().sum();
    let sd: f64 = pd[y0..=y1].iter().sum();
    if sc == 0.0 {
        return Err(Error::Numeric("clean run has no population in the probe window".into()));
    }
    Ok(sd / sc)
}

/// Fraction of edge population on the anti-chiral side of the emitter,
/// excluding a `2/Gamma`-radius core around it. `chiral_sign` is the sign of
/// the model group velocity along y.
pub fn chirality_fraction(
    state: &SingleExcitationState,
    grid: &SiteGrid,
    y_e: usize,
    chiral_sign: f64,
    gamma_total: f64,
) -> f64 {
    let profile = edge_profile(state, grid);
    let ly = grid.ly as f64;
    let core = 2.0 / gamma_total;
    let mut anti = 0.0;
    let mut total = 0.0;
    for (y, &p) in profile.iter().enumerate() {
        let mut d = (y as f64 - y_e as f64).rem_euclid(ly);
        if d > ly / 2.0 {
            d -= ly;
        }
        if d.abs() <= core {
            continue;
        }
        total += p;
        if d * chiral_sign < 0.0 {
            anti += p;
        }
    }
    if total > 0.0 {
        anti / total
    } else {
        0.0
    }
}

/// Position (in sites, circular) of the leading wavefront along the chiral
/// direction from the emitter: the farthest contiguous point where the edge
/// profile stays above `frac * max`. Meaningful before the pulse wraps.
pub fn leading_front(profile: &[f64], y_e: usize, chiral_sign: f64, frac: f64) -> Option<f64> {
    let n = profile.len();
    let max = profile.iter().cloned().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return None;
    }
    let thresh = frac * max;
    let step = if chiral_sign >= 0.0 { 1isize } else { -1isize };
    let mut front = None;
    let mut d = 0isize;
    while d < n as isize {
        let y = (y_e as isize + step * d).rem_euclid(n as isize) as usize;
        if profile[y] >= thresh {
            front = Some(d as f64);
        }
        d += 1;
    }
    front
}

/// Energy expectation <psi|H|psi> / <psi|psi>.
pub fn energy_expectation(op: &SparseOp, state: &SingleExcitationState) -> f64 {
    let hv = op.apply(&state.amp);
    let num: C64 = state.amp.iter().zip(&hv).map(|(a, b)| a.conj() * b).sum();
    num.re / state.norm_sqr()
}

/// Resonant-momentum phase pattern `e^{i k y}` used in tests and probes.
pub fn plane_wave_edge_state(grid: &SiteGrid, k: f64, envelope: impl Fn(usize) -> f64) -> SingleExcitationState {
    let mut amp = vec![C64::new(0.0, 0.0); grid.n_active() + 1];
    for y in 0..grid.ly {
        if let Some(i) = grid.index(0, y) {
            amp[i] = envelope(y) * C64::new(0.0, k * y as f64).exp();
        }
    }
    let norm: f64 = amp.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        for a in amp.iter_mut() {
            *a /= norm;
        }
    }
    SingleExcitationState { amp, time: 0.0 }
}

pub fn wrap_angle(k: f64) -> f64 {
    let mut x = k.rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_real_space, Flux, Rect};
    use approx::assert_abs_diff_eq;

    fn tiny_bath() -> BathOperator {
        build_real_space(&LatticeSpec::cylinder(3, 4, 1.0, Flux::zero())).unwrap()
    }

    #[test]
    fn assemble_rejects_coupling_on_defect() {
        let spec = LatticeSpec::cylinder(4, 6, 1.0, Flux::zero()).with_defect(Rect { x: [0, 0], y: [2, 2] });
        let bath = build_real_space(&spec).unwrap();
        let em = EmitterSpec::local(-3.0, 2, 0.1);
        assert!(assemble_full(&bath, &em).is_err());
        let ok = EmitterSpec::local(-3.0, 4, 0.1);
        assert!(assemble_full(&bath, &ok).is_ok());
    }

    #[test]
    fn zero_coupling_keeps_emitter_population() {
        let bath = tiny_bath();
        let em = EmitterSpec { omega_e: -1.0, gamma_star: 0.0, couplings: vec![] };
        let full = assemble_full(&bath, &em).unwrap();
        let traj = evolve(&full, None, &EvolveOptions::new(10.0, 1.0)).unwrap();
        for &p in &traj.pop_e {
            assert_abs_diff_eq!(p, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn hermitian_flag_tracks_losses() {
        let bath = tiny_bath();
        let em = EmitterSpec::local(0.0, 1, 0.1);
        assert!(assemble_full(&bath, &em).unwrap().op.is_hermitian());
        let lossy = em.clone().with_loss(0.01);
        assert!(!assemble_full(&bath, &lossy).unwrap().op.is_hermitian());
    }

    #[test]
    fn excitation_number_conserved_as_norm() {
        let bath = tiny_bath();
        let em = EmitterSpec::local(0.0, 1, 0.3);
        let full = assemble_full(&bath, &em).unwrap();
        let traj = evolve(&full, None, &EvolveOptions::new(50.0, 2.5)).unwrap();
        for &n2 in &traj.norm2 {
            assert_abs_diff_eq!(n2, 1.0, epsilon = 1e-8);
        }
        // energy expectation drift
        let e0 = em.omega_e; // <H> of the initial state
        let ef = energy_expectation(&full.op, &traj.final_state);
        assert_abs_diff_eq!(ef, e0, epsilon = 1e-6);
    }

    #[test]
    fn edge_and_momentum_profiles_of_point_excitation() {
        let bath = tiny_bath();
        let grid = &bath.grid;
        let mut amp = vec![C64::new(0.0, 0.0); grid.n_active() + 1];
        let y0 = 2;
        amp[grid.index(0, y0).unwrap()] = C64::new(1.0, 0.0);
        let state = SingleExcitationState { amp, time: 0.0 };
        let prof = edge_profile(&state, grid);
        for (y, &p) in prof.iter().enumerate() {
            assert_abs_diff_eq!(p, if y == y0 { 1.0 } else { 0.0 }, epsilon = 1e-15);
        }
        // flat momentum profile for a point source
        let (_, pk) = momentum_profile(&state, grid, MomentumRegion::EdgeColumn);
        for &p in &pk {
            assert_abs_diff_eq!(p, 1.0 / grid.ly as f64, epsilon = 1e-12);
        }
        // Parseval for both regions
        let sum: f64 = pk.iter().sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
        let (_, pk_full) = momentum_profile(&state, grid, MomentumRegion::Full);
        assert_abs_diff_eq!(pk_full.iter().sum::<f64>(), state.photon_pop(), epsilon = 1e-12);
    }

    #[test]
    fn momentum_profile_peaks_at_plane_wave_momentum() {
        let spec = LatticeSpec::cylinder(3, 16, 1.0, Flux::zero());
        let bath = build_real_space(&spec).unwrap();
        let k_target = crate::lattice::ky_grid(16)[11];
        let state = plane_wave_edge_state(&bath.grid, k_target, |_| 1.0);
        let (ks, pk) = momentum_profile(&state, &bath.grid, MomentumRegion::EdgeColumn);
        let imax = (0..ks.len()).max_by(|&a, &b| pk[a].partial_cmp(&pk[b]).unwrap()).unwrap();
        assert_abs_diff_eq!(ks[imax], k_target, epsilon = 1e-12);
        assert_abs_diff_eq!(pk[imax], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn find_peaks_basic_and_circular() {
        let p = [0.0, 1.0, 0.2, 0.0, 0.0, 3.0, 0.1, 0.0];
        let peaks = find_peaks(&p, 0.1, 0.1);
        assert_eq!(peaks, vec![1, 5]);
        // peak across the wrap
        let p = [5.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 4.0];
        let peaks = find_peaks(&p, 0.1, 0.1);
        assert_eq!(peaks, vec![0]);
    }

    #[test]
    fn chirality_fraction_of_synthetic_field() {
        let spec = LatticeSpec::cylinder(3, 40, 1.0, Flux::zero());
        let bath = build_real_space(&spec).unwrap();
        let grid = &bath.grid;
        let y_e = 10usize;
        let mut amp = vec![C64::new(0.0, 0.0); grid.n_active() + 1];
        // all weight ahead of the emitter (chiral side +1), outside the core
        for y in 15..25 {
            amp[grid.index(0, y).unwrap()] = C64::new(0.3, 0.0);
        }
        let state = SingleExcitationState { amp, time: 0.0 };
        assert_abs_diff_eq!(chirality_fraction(&state, grid, y_e, 1.0, 1.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(chirality_fraction(&state, grid, y_e, -1.0, 1.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn transmission_window_validation() {
        let clean_spec = LatticeSpec::cylinder(4, 10, 1.0, Flux::zero());
        let carved_spec = clean_spec.clone().with_defect(Rect { x: [0, 0], y: [4, 5] });
        let clean = build_real_space(&clean_spec).unwrap();
        let carved = build_real_space(&carved_spec).unwrap();
        let mk = |grid: &SiteGrid| {
            let mut amp = vec![C64::new(0.0, 0.0); grid.n_active() + 1];
            if let Some(i) = grid.index(0, 8) {
                amp[i] = C64::new(1.0, 0.0);
            }
            SingleExcitationState { amp, time: 1.0 }
        };
        let sc = mk(&clean.grid);
        let sd = mk(&carved.grid);
        // window intersecting the defect errors out
        assert!(transmission_past_defect(&sc, &clean.grid, &sd, &carved.grid, &carved_spec, (3, 6)).is_err());
        let r = transmission_past_defect(&sc, &clean.grid, &sd, &carved.grid, &carved_spec, (7, 9)).unwrap();
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn no_defect_transmission_is_unity() {
        let spec = LatticeSpec::cylinder(4, 12, 1.0, Flux::new(1, 4).unwrap());
        let bath = build_real_space(&spec).unwrap();
        let em = EmitterSpec::local(-2.0, 3, 0.15);
        let full = assemble_full(&bath, &em).unwrap();
        let traj = evolve(&full, None, &EvolveOptions::new(20.0, 20.0)).unwrap();
        let s = &traj.final_state;
        let r = transmission_past_defect(s, &bath.grid, s, &bath.grid, &spec, (6, 9)).unwrap();
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-12);
    }
}
