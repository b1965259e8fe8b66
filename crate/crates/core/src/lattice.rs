//! Harper-Hofstadter bath Hamiltonians.
//!
//! The bath is a square photonic lattice with nearest-neighbour hopping `J`
//! and a uniform magnetic flux `phi = p/q` per plaquette entering through the
//! Peierls phase `exp(-2*pi*i*phi*x)` on hops along +y. Conventions:
//!
//! * sites are indexed `x * ly + y` (active sites are compacted after defect
//!   removal);
//! * the hop from `(x, y)` to `(x, y+1)` carries amplitude `-J e^{-2 pi i phi x}`,
//!   the hop `(x, y)` to `(x+1, y)` carries `-J`;
//! * the diagonal is `omega_a + delta_omega(site) - i kappa(site)/2`;
//! * momenta label Bloch modes with y-dependence `e^{+i k y}`, so the
//!   Bloch-reduced chain at momentum `k` has diagonal
//!   `omega_a - 2J cos(2 pi phi x + k)`.

use crate::error::{Error, Result};
use crate::op::SparseOp;
use crate::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Identifier of the disorder RNG recorded in run manifests.
pub const DISORDER_RNG_ID: &str = "chacha12";

/// Rational magnetic flux per plaquette, `phi = p/q` in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flux {
    p: u32,
    q: u32,
}

impl Flux {
    pub fn new(p: u32, q: u32) -> Result<Flux> {
        if q == 0 {
            return Err(Error::InvalidSpec("flux denominator q must be >= 1".into()));
        }
        if p >= q {
            return Err(Error::InvalidSpec(format!("flux p/q = {p}/{q} must lie in [0, 1)")));
        }
        if p > 0 && gcd(p, q) != 1 {
            return Err(Error::InvalidSpec(format!("flux p/q = {p}/{q} must be in lowest terms")));
        }
        Ok(Flux { p, q })
    }

    pub fn zero() -> Flux {
        Flux { p: 0, q: 1 }
    }

    /// Parse from the "p/q" form used in configs ("0" is accepted for p = 0).
    pub fn parse(s: &str) -> Result<Flux> {
        let s = s.trim();
        if let Ok(n) = s.parse::<u32>() {
            if n == 0 {
                return Flux::new(0, 1);
            }
            return Err(Error::InvalidSpec(format!("flux '{s}' must be a fraction p/q in [0, 1)")));
        }
        let (p, q) = s
            .split_once('/')
            .ok_or_else(|| Error::InvalidSpec(format!("flux '{s}' is not of the form p/q")))?;
        let p: u32 = p.trim().parse().map_err(|_| Error::InvalidSpec(format!("bad flux numerator '{p}'")))?;
        let q: u32 = q.trim().parse().map_err(|_| Error::InvalidSpec(format!("bad flux denominator '{q}'")))?;
        Flux::new(p, q)
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn value(&self) -> f64 {
        self.p as f64 / self.q as f64
    }

    pub fn is_zero(&self) -> bool {
        self.p == 0
    }
}

impl std::fmt::Display for Flux {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.p, self.q)
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Magnetic length `l_B = 1/sqrt(2 pi phi)` in lattice constants
/// (infinite at zero flux).
pub fn magnetic_length(flux: Flux) -> f64 {
    if flux.is_zero() {
        f64::INFINITY
    } else {
        1.0 / (2.0 * PI * flux.value()).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    Periodic,
}

/// Per-site loss rate map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Kappa {
    Uniform(f64),
    Map(Vec<f64>),
}

impl Kappa {
    pub fn at(&self, full_index: usize) -> f64 {
        match self {
            Kappa::Uniform(k) => *k,
            Kappa::Map(m) => m[full_index],
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Kappa::Uniform(k) => *k == 0.0,
            Kappa::Map(m) => m.iter().all(|&k| k == 0.0),
        }
    }

    pub fn uniform_value(&self) -> Option<f64> {
        match self {
            Kappa::Uniform(k) => Some(*k),
            Kappa::Map(m) => {
                let k0 = *m.first()?;
                m.iter().all(|&k| k == k0).then_some(k0)
            }
        }
    }
}

/// Inclusive rectangle `[x0, x1] x [y0, y1]` of excluded sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: [usize; 2],
    pub y: [usize; 2],
}

impl Rect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x[0] && x <= self.x[1] && y >= self.y[0] && y <= self.y[1]
    }
}

/// Full bath definition: geometry, flux, boundary conditions, disorder,
/// losses and carved defects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub lx: usize,
    pub ly: usize,
    /// Hopping energy; sets the unit scale.
    pub j: f64,
    pub flux: Flux,
    pub boundary_x: Boundary,
    pub boundary_y: Boundary,
    /// On-site cavity energy (energy reference, default 0).
    pub omega_a: f64,
    /// Disorder strength: on-site shifts drawn uniformly from (-sigma, sigma).
    pub sigma: f64,
    pub seed: u64,
    pub kappa: Kappa,
    pub defects: Vec<Rect>,
}

impl LatticeSpec {
    /// Clean cylinder (periodic y, open x), the workhorse geometry.
    pub fn cylinder(lx: usize, ly: usize, j: f64, flux: Flux) -> LatticeSpec {
        LatticeSpec {
            lx,
            ly,
            j,
            flux,
            boundary_x: Boundary::Open,
            boundary_y: Boundary::Periodic,
            omega_a: 0.0,
            sigma: 0.0,
            seed: 0,
            kappa: Kappa::Uniform(0.0),
            defects: Vec::new(),
        }
    }

    /// Clean torus (periodic both axes).
    pub fn torus(lx: usize, ly: usize, j: f64, flux: Flux) -> LatticeSpec {
        LatticeSpec { boundary_x: Boundary::Periodic, ..LatticeSpec::cylinder(lx, ly, j, flux) }
    }

    /// Fully open rectangle.
    pub fn open(lx: usize, ly: usize, j: f64, flux: Flux) -> LatticeSpec {
        LatticeSpec { boundary_y: Boundary::Open, ..LatticeSpec::cylinder(lx, ly, j, flux) }
    }

    pub fn with_disorder(mut self, sigma: f64, seed: u64) -> LatticeSpec {
        self.sigma = sigma;
        self.seed = seed;
        self
    }

    pub fn with_uniform_loss(mut self, kappa: f64) -> LatticeSpec {
        self.kappa = Kappa::Uniform(kappa);
        self
    }

    pub fn with_defect(mut self, rect: Rect) -> LatticeSpec {
        self.defects.push(rect);
        self
    }

    pub fn n_sites(&self) -> usize {
        self.lx * self.ly
    }

    pub fn validate(&self) -> Result<()> {
        if self.lx < 2 || self.ly < 2 {
            return Err(Error::InvalidSpec(format!("lattice {}x{} too small; need >= 2 sites per axis", self.lx, self.ly)));
        }
        if self.j <= 0.0 || !self.j.is_finite() {
            return Err(Error::InvalidSpec("hopping J must be positive and finite".into()));
        }
        if self.sigma < 0.0 {
            return Err(Error::InvalidSpec("disorder strength sigma must be >= 0".into()));
        }
        match &self.kappa {
            Kappa::Uniform(k) if *k < 0.0 => {
                return Err(Error::InvalidSpec("kappa must be >= 0".into()));
            }
            Kappa::Map(m) => {
                if m.len() != self.n_sites() {
                    return Err(Error::InvalidSpec(format!(
                        "kappa map has {} entries, lattice has {} sites",
                        m.len(),
                        self.n_sites()
                    )));
                }
                if m.iter().any(|&k| k < 0.0) {
                    return Err(Error::InvalidSpec("kappa must be >= 0".into()));
                }
            }
            _ => {}
        }
        for r in &self.defects {
            if r.x[0] > r.x[1] || r.y[0] > r.y[1] || r.x[1] >= self.lx || r.y[1] >= self.ly {
                return Err(Error::InvalidSpec(format!(
                    "defect rectangle x={:?} y={:?} outside the {}x{} lattice",
                    r.x, r.y, self.lx, self.ly
                )));
            }
        }
        // The Peierls phase must be single-valued around a periodic x-cycle.
        if self.boundary_x == Boundary::Periodic
            && !self.flux.is_zero()
            && self.lx % self.flux.q() as usize != 0
        {
            return Err(Error::InvalidSpec(format!(
                "periodic x with flux {} requires Lx divisible by q = {}; got Lx = {}",
                self.flux,
                self.flux.q(),
                self.lx
            )));
        }
        Ok(())
    }

    pub fn is_defect(&self, x: usize, y: usize) -> bool {
        self.defects.iter().any(|r| r.contains(x, y))
    }
}

/// Mapping between grid coordinates and compacted active-site indices.
#[derive(Debug, Clone)]
pub struct SiteGrid {
    pub lx: usize,
    pub ly: usize,
    index_of: Vec<Option<usize>>,
    site_of: Vec<(usize, usize)>,
}

impl SiteGrid {
    /// Defect-free grid with the dense `x * ly + y` ordering.
    pub fn dense(lx: usize, ly: usize) -> SiteGrid {
        let site_of: Vec<(usize, usize)> = (0..lx).flat_map(|x| (0..ly).map(move |y| (x, y))).collect();
        let index_of = (0..lx * ly).map(Some).collect();
        SiteGrid { lx, ly, index_of, site_of }
    }

    fn new(spec: &LatticeSpec) -> SiteGrid {
        let mut index_of = vec![None; spec.lx * spec.ly];
        let mut site_of = Vec::new();
        for x in 0..spec.lx {
            for y in 0..spec.ly {
                if !spec.is_defect(x, y) {
                    index_of[x * spec.ly + y] = Some(site_of.len());
                    site_of.push((x, y));
                }
            }
        }
        SiteGrid { lx: spec.lx, ly: spec.ly, index_of, site_of }
    }

    pub fn n_active(&self) -> usize {
        self.site_of.len()
    }

    pub fn index(&self, x: usize, y: usize) -> Option<usize> {
        self.index_of[x * self.ly + y]
    }

    pub fn site(&self, index: usize) -> (usize, usize) {
        self.site_of[index]
    }

    pub fn sites(&self) -> &[(usize, usize)] {
        &self.site_of
    }
}

/// Assembled bath Hamiltonian plus the geometry it acts on.
#[derive(Debug, Clone)]
pub struct BathOperator {
    pub op: SparseOp,
    pub grid: SiteGrid,
    pub spec: LatticeSpec,
    /// Non-fatal observations recorded into run manifests.
    pub warnings: Vec<String>,
}

impl BathOperator {
    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn is_hermitian(&self) -> bool {
        self.op.is_hermitian()
    }
}

/// Deterministic per-site disorder shifts for a full `lx * ly` grid.
///
/// Draws are made in fixed site order from a seeded ChaCha12 stream so that
/// ensembles are replayable; the defect pattern does not shift the draws.
pub fn disorder_shifts(n_sites: usize, sigma: f64, seed: u64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; n_sites];
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..n_sites).map(|_| sigma * (2.0 * rng.random::<f64>() - 1.0)).collect()
}

/// Build the real-space bath Hamiltonian from its spec.
pub fn build_real_space(spec: &LatticeSpec) -> Result<BathOperator> {
    build_real_space_with_gauge_origin(spec, 0)
}

/// As [`build_real_space`], with the Peierls gauge origin shifted to `x0`
/// (the phase becomes `exp(-2 pi i phi (x - x0))`). The spectrum is gauge
/// invariant; the default origin is 0.
pub fn build_real_space_with_gauge_origin(spec: &LatticeSpec, x0: usize) -> Result<BathOperator> {
    spec.validate()?;
    let grid = SiteGrid::new(spec);
    let n = grid.n_active();
    if n == 0 {
        return Err(Error::InvalidSpec("defects exclude every site".into()));
    }
    let phi = spec.flux.value();
    let shifts = disorder_shifts(spec.lx * spec.ly, spec.sigma, spec.seed);
    let lossy = !spec.kappa.is_zero();

    let mut triplets: Vec<(usize, usize, C64)> = Vec::with_capacity(5 * n);
    for idx in 0..n {
        let (x, y) = grid.site(idx);
        let full = x * spec.ly + y;
        let diag = C64::new(spec.omega_a + shifts[full], -0.5 * spec.kappa.at(full));
        triplets.push((idx, idx, diag));

        // Hop towards +x.
        let xp = if x + 1 < spec.lx {
            Some(x + 1)
        } else if spec.boundary_x == Boundary::Periodic && spec.lx > 2 {
            Some(0)
        } else {
            None
        };
        if let Some(xp) = xp {
            if let Some(jdx) = grid.index(xp, y) {
                let amp = C64::new(-spec.j, 0.0);
                triplets.push((jdx, idx, amp));
                triplets.push((idx, jdx, amp.conj()));
            }
        }

        // Hop towards +y, with the Peierls phase of column x.
        let yp = if y + 1 < spec.ly {
            Some(y + 1)
        } else if spec.boundary_y == Boundary::Periodic && spec.ly > 2 {
            Some(0)
        } else {
            None
        };
        if let Some(yp) = yp {
            if let Some(jdx) = grid.index(x, yp) {
                let phase = -2.0 * PI * phi * (x as f64 - x0 as f64);
                let amp = -spec.j * C64::new(0.0, phase).exp();
                triplets.push((jdx, idx, amp));
                triplets.push((idx, jdx, amp.conj()));
            }
        }
    }

    let hermitian = spec.kappa.is_zero();
    let op = SparseOp::from_triplets(n, triplets, hermitian && !lossy);
    let mut warnings = Vec::new();
    if let Some(w) = edge_column_disconnection(spec) {
        warnings.push(w);
    }
    Ok(BathOperator { op, grid, spec: spec.clone(), warnings })
}

/// Warn when defects split the x = 0 edge column into disconnected segments,
/// which blocks the chiral channel an edge-coupled emitter would use.
fn edge_column_disconnection(spec: &LatticeSpec) -> Option<String> {
    let active: Vec<bool> = (0..spec.ly).map(|y| !spec.is_defect(0, y)).collect();
    let holes = active.iter().filter(|a| !**a).count();
    if holes == 0 {
        return None;
    }
    let mut segments = 0usize;
    for y in 0..spec.ly {
        let prev_active = if y == 0 {
            if spec.boundary_y == Boundary::Periodic {
                active[spec.ly - 1]
            } else {
                false
            }
        } else {
            active[y - 1]
        };
        if active[y] && !prev_active {
            segments += 1;
        }
    }
    if spec.boundary_y == Boundary::Periodic && segments == 0 && active.iter().any(|a| *a) {
        segments = 1; // fully active ring, unreachable here since holes > 0
    }
    if segments >= 2 || active.iter().all(|a| !*a) {
        Some(format!(
            "defects disconnect the x=0 edge column into {segments} segments; edge transport past them is blocked"
        ))
    } else {
        Some(format!("defects remove {holes} site(s) from the x=0 edge column"))
    }
}

/// Add i.i.d. uniform(-sigma, sigma) diagonal shifts to an existing operator,
/// deterministic per seed. The Hermitian flag is preserved.
pub fn apply_disorder(bath: &BathOperator, sigma: f64, seed: u64) -> BathOperator {
    let shifts_full = disorder_shifts(bath.spec.lx * bath.spec.ly, sigma, seed);
    let shifts: Vec<f64> = bath
        .grid
        .sites()
        .iter()
        .map(|&(x, y)| shifts_full[x * bath.spec.ly + y])
        .collect();
    let op = bath.op.shifted_diag(&shifts);
    let mut spec = bath.spec.clone();
    spec.sigma = sigma;
    spec.seed = seed;
    BathOperator { op, grid: bath.grid.clone(), spec, warnings: bath.warnings.clone() }
}

/// Momentum grid of a ring of `ly` sites, sorted ascending in `(-pi, pi]`.
pub fn ky_grid(ly: usize) -> Vec<f64> {
    let mut ks: Vec<f64> = (0..ly)
        .map(|j| {
            let k = 2.0 * PI * j as f64 / ly as f64;
            if k > PI + 1e-12 {
                k - 2.0 * PI
            } else {
                k
            }
        })
        .collect();
    ks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ks
}

/// Bloch-reduced Harper chain at momentum `k_y`.
///
/// For a clean lattice that is periodic along y, eigenstates factorize as
/// `psi(x) e^{+i k y}` and the Hamiltonian reduces to a tridiagonal chain of
/// length `Lx` with off-diagonal `-J` and diagonal
/// `omega_a - 2J cos(2 pi phi x + k_y)`. The union of its eigenvalues over
/// the `k_y` grid tiles the cylinder spectrum exactly.
pub fn build_harper_bloch(spec: &LatticeSpec, k_y: f64) -> Result<BathOperator> {
    spec.validate()?;
    if spec.boundary_y != Boundary::Periodic {
        return Err(Error::InvalidSpec("Bloch reduction requires periodic y".into()));
    }
    if spec.sigma != 0.0 {
        return Err(Error::InvalidSpec("Bloch reduction requires a clean lattice (sigma = 0)".into()));
    }
    if !spec.defects.is_empty() {
        return Err(Error::InvalidSpec("Bloch reduction requires a defect-free lattice".into()));
    }
    let kappa = spec
        .kappa
        .uniform_value()
        .ok_or_else(|| Error::InvalidSpec("Bloch reduction requires uniform kappa".into()))?;

    let phi = spec.flux.value();
    let n = spec.lx;
    let mut triplets: Vec<(usize, usize, C64)> = Vec::with_capacity(3 * n);
    for x in 0..n {
        let diag = spec.omega_a - 2.0 * spec.j * (2.0 * PI * phi * x as f64 + k_y).cos();
        triplets.push((x, x, C64::new(diag, -0.5 * kappa)));
        let xp = if x + 1 < n {
            Some(x + 1)
        } else if spec.boundary_x == Boundary::Periodic && n > 2 {
            Some(0)
        } else {
            None
        };
        if let Some(xp) = xp {
            triplets.push((xp, x, C64::new(-spec.j, 0.0)));
            triplets.push((x, xp, C64::new(-spec.j, 0.0)));
        }
    }
    let chain = LatticeSpec { ly: 1, boundary_y: Boundary::Open, ..spec.clone() };
    let grid = SiteGrid::new(&chain);
    let op = SparseOp::from_triplets(n, triplets, kappa == 0.0);
    Ok(BathOperator { op, grid, spec: spec.clone(), warnings: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn flux_validation() {
        assert!(Flux::new(1, 9).is_ok());
        assert!(Flux::new(4, 9).is_ok());
        assert!(Flux::new(2, 4).is_err());
        assert!(Flux::new(9, 9).is_err());
        assert!(Flux::new(0, 1).unwrap().is_zero());
        assert_eq!(Flux::parse("5/14").unwrap(), Flux::new(5, 14).unwrap());
        assert_eq!(Flux::parse("0").unwrap(), Flux::zero());
        assert!(Flux::parse("1.5").is_err());
    }

    #[test]
    fn magnetic_length_values() {
        // l_B / L for the figure's fluxes at L = 48.
        let l = 48.0;
        assert_abs_diff_eq!(magnetic_length(Flux::new(1, 12).unwrap()) / l, 0.03, epsilon = 0.003);
        assert_abs_diff_eq!(magnetic_length(Flux::new(1, 30).unwrap()) / l, 0.05, epsilon = 0.005);
        assert!(magnetic_length(Flux::zero()).is_infinite());
    }

    #[test]
    fn periodic_x_requires_commensurate_lx() {
        let spec = LatticeSpec::torus(10, 12, 1.0, Flux::new(1, 12).unwrap());
        assert!(matches!(build_real_space(&spec), Err(Error::InvalidSpec(_))));
        let spec = LatticeSpec::torus(24, 12, 1.0, Flux::new(1, 12).unwrap());
        assert!(build_real_space(&spec).is_ok());
    }

    #[test]
    fn hop_row_sums_match_coordination() {
        let spec = LatticeSpec::open(4, 5, 1.3, Flux::new(1, 3).unwrap());
        let bath = build_real_space(&spec).unwrap();
        for idx in 0..bath.dim() {
            let (x, y) = bath.grid.site(idx);
            let coord = [x > 0, x + 1 < spec.lx, y > 0, y + 1 < spec.ly].iter().filter(|b| **b).count();
            let hops: f64 = bath.op.row(idx).filter(|&(c, _)| c != idx).map(|(_, v)| v.norm()).sum();
            assert_abs_diff_eq!(hops, spec.j * coord as f64, epsilon = 1e-14);
        }
    }

    #[test]
    fn clean_operator_is_hermitian() {
        let spec = LatticeSpec::cylinder(6, 9, 1.0, Flux::new(2, 9).unwrap());
        let bath = build_real_space(&spec).unwrap();
        assert!(bath.is_hermitian());
        assert_eq!(bath.op.hermiticity_defect(), 0.0);
    }

    #[test]
    fn loss_makes_non_hermitian_diagonal() {
        let spec = LatticeSpec::cylinder(4, 4, 1.0, Flux::zero()).with_uniform_loss(0.1);
        let bath = build_real_space(&spec).unwrap();
        assert!(!bath.is_hermitian());
        assert_abs_diff_eq!(bath.op.diag(0).im, -0.05, epsilon = 1e-15);
    }

    #[test]
    fn disorder_is_deterministic_and_unbiased() {
        let spec = LatticeSpec::cylinder(6, 6, 1.0, Flux::zero());
        let clean = build_real_space(&spec).unwrap();
        let a = apply_disorder(&clean, 0.35, 7);
        let b = apply_disorder(&clean, 0.35, 7);
        for i in 0..a.dim() {
            assert_eq!(a.op.diag(i), b.op.diag(i));
        }
        // sigma = 0 leaves the operator untouched.
        let z = apply_disorder(&clean, 0.0, 7);
        for i in 0..z.dim() {
            assert_eq!(z.op.diag(i), clean.op.diag(i));
        }
        // Statistics over many seeds: mean near 0, variance near sigma^2/3.
        let sigma = 0.35;
        let mut all = Vec::new();
        for seed in 0..100 {
            all.extend(disorder_shifts(36, sigma, seed));
        }
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let var = all.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02, "disorder mean {mean} out of tolerance");
        let target = sigma * sigma / 3.0;
        assert!((var - target).abs() < 0.1 * target, "disorder variance {var} vs {target}");
    }

    #[test]
    fn disorder_via_spec_matches_apply_disorder() {
        let spec = LatticeSpec::cylinder(5, 7, 1.0, Flux::new(1, 5).unwrap()).with_disorder(0.2, 42);
        let direct = build_real_space(&spec).unwrap();
        let clean = build_real_space(&LatticeSpec { sigma: 0.0, ..spec.clone() }).unwrap();
        let shifted = apply_disorder(&clean, 0.2, 42);
        for i in 0..direct.dim() {
            assert_eq!(direct.op.diag(i), shifted.op.diag(i));
        }
    }

    #[test]
    fn defect_removal_is_local() {
        let spec = LatticeSpec::open(5, 5, 1.0, Flux::new(1, 5).unwrap());
        let full = build_real_space(&spec).unwrap();
        let defect = Rect { x: [2, 2], y: [2, 2] };
        let carved = build_real_space(&spec.clone().with_defect(defect)).unwrap();
        assert_eq!(carved.dim(), full.dim() - 1);
        // Every surviving matrix element must be unchanged.
        for idx in 0..carved.dim() {
            let (x, y) = carved.grid.site(idx);
            let fidx = full.grid.index(x, y).unwrap();
            for (c, v) in carved.op.row(idx) {
                let (cx, cy) = carved.grid.site(c);
                let fc = full.grid.index(cx, cy).unwrap();
                assert_eq!(v, full.op.row(fidx).find(|&(cc, _)| cc == fc).unwrap().1);
            }
        }
    }

    #[test]
    fn defect_on_edge_column_warns() {
        let spec = LatticeSpec::open(6, 8, 1.0, Flux::zero()).with_defect(Rect { x: [0, 1], y: [3, 4] });
        let bath = build_real_space(&spec).unwrap();
        assert!(!bath.warnings.is_empty());
        let clean = build_real_space(&LatticeSpec::open(6, 8, 1.0, Flux::zero())).unwrap();
        assert!(clean.warnings.is_empty());
    }

    #[test]
    fn harper_bloch_is_tridiagonal_with_expected_diagonal() {
        let spec = LatticeSpec::cylinder(8, 12, 1.0, Flux::new(1, 4).unwrap());
        let k = 0.7;
        let chain = build_harper_bloch(&spec, k).unwrap();
        assert_eq!(chain.dim(), 8);
        for x in 0..8usize {
            let expect = -2.0 * (2.0 * PI * 0.25 * x as f64 + k).cos();
            assert_abs_diff_eq!(chain.op.diag(x).re, expect, epsilon = 1e-14);
            let offs: Vec<usize> = chain.op.row(x).filter(|&(c, _)| c != x).map(|(c, _)| c).collect();
            for c in offs {
                assert!(c == x + 1 || c + 1 == x);
            }
        }
    }

    #[test]
    fn harper_bloch_zero_flux_is_free_chain() {
        let spec = LatticeSpec::cylinder(6, 10, 1.0, Flux::zero());
        let k = 1.1;
        let chain = build_harper_bloch(&spec, k).unwrap();
        for x in 0..6usize {
            assert_abs_diff_eq!(chain.op.diag(x).re, -2.0 * k.cos(), epsilon = 1e-14);
        }
    }

    #[test]
    fn ky_grid_covers_bz() {
        let ks = ky_grid(8);
        assert_eq!(ks.len(), 8);
        assert!(ks.windows(2).all(|w| w[0] < w[1]));
        assert!(ks.iter().all(|&k| k > -PI - 1e-12 && k <= PI + 1e-12));
    }
}
