//! Single-particle propagators, quasienergy spectra and edge modes.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{build_segment, flat, DriveParams, QuadraticHamiltonian, Species, Sublattice};
use crate::linalg::{eigh, expm_antisymmetric, orthogonality_defect, procrustes, reorthonormalize, Mat, Vector};

/// Pinning tolerance on εT for zero/π classification.
pub const PIN_TOL: f64 = 1e-6;
/// Default number of sites per edge used for edge weights.
pub const N_LOC: usize = 4;

/// Heisenberg action U†γ_aU = Σ_b O_ab γ_b of a Gaussian unitary.
///
/// States transform as M → O M Oᵀ and mode vectors are carried as v → O v.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthogonalPropagator {
    pub o: Mat,
}

impl OrthogonalPropagator {
    pub fn identity(dim: usize) -> Self {
        Self { o: Mat::identity(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.o.nrows()
    }

    /// `self` applied after `first`.
    pub fn after(&self, first: &OrthogonalPropagator) -> OrthogonalPropagator {
        Self { o: &self.o * &first.o }
    }

    pub fn pow(&self, k: usize) -> OrthogonalPropagator {
        let mut out = Self::identity(self.dim());
        for _ in 0..k {
            out = self.after(&out);
        }
        out
    }

    pub fn apply(&self, v: &Vector) -> Vector {
        &self.o * v
    }

    pub fn defect(&self) -> f64 {
        orthogonality_defect(&self.o)
    }

    /// Pulls the matrix back onto the orthogonal group if drift exceeds 1e-12.
    pub fn renormalize(&mut self) {
        if self.defect() > 1e-12 {
            self.o = reorthonormalize(&self.o);
        }
    }
}

/// exp(fraction · A): the Heisenberg map of evolving for `fraction` of one period under H.
pub fn propagate(h: &QuadraticHamiltonian, fraction: f64) -> OrthogonalPropagator {
    OrthogonalPropagator { o: expm_antisymmetric(h.matrix(), fraction) }
}

/// One-period map: half a period of H₁ followed by half a period of H₂.
pub fn floquet_propagator(params: &DriveParams) -> Result<OrthogonalPropagator> {
    let o1 = propagate(&build_segment(params, 1)?, 0.5);
    let o2 = propagate(&build_segment(params, 2)?, 0.5);
    Ok(o2.after(&o1))
}

/// Same for a block-diagonal multi-wire register.
pub fn floquet_propagator_wires(wires: &[DriveParams]) -> Result<OrthogonalPropagator> {
    let h1 = crate::lattice::build_segment_wires(wires, 1)?;
    let h2 = crate::lattice::build_segment_wires(wires, 2)?;
    Ok(propagate(&h2, 0.5).after(&propagate(&h1, 0.5)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PinFlag {
    Zero,
    Pi,
    Bulk,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumEntry {
    /// εT in (−π, π].
    pub eigenphase: f64,
    pub edge_weight: f64,
    pub flag: PinFlag,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub entries: Vec<SpectrumEntry>,
    pub n_loc: usize,
}

impl SpectrumReport {
    pub fn count(&self, flag: PinFlag) -> usize {
        self.entries.iter().filter(|e| e.flag == flag).count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,eigenphase,edge_weight,flag\n");
        for (i, e) in self.entries.iter().enumerate() {
            let flag = match e.flag {
                PinFlag::Zero => "zero",
                PinFlag::Pi => "pi",
                PinFlag::Bulk => "bulk",
            };
            let _ = writeln!(s, "{i},{:.12},{:.12},{flag}", e.eigenphase, e.edge_weight);
        }
        s
    }
}

/// Eigenphases of O with eigenvectors as real invariant directions.
///
/// Returns (θ ≥ 0, unit vector) pairs sorted by θ; a complex pair e^{±iθ}
/// appears as two orthogonal vectors spanning its invariant plane.
fn invariant_directions(o: &Mat) -> Vec<(f64, Vector)> {
    let s = (o + o.transpose()) * 0.5;
    let k = (o - o.transpose()) * 0.5;
    let (c, v) = eigh(&s);
    let mut out: Vec<(f64, Vector)> = (0..c.len())
        .map(|i| {
            let col = v.column(i).into_owned();
            let sin = (&k * &col).norm();
            (sin.atan2(c[i]), col)
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn edge_weight(v: &Vector, n_sites: usize, n_loc: usize) -> f64 {
    let n_loc = n_loc.min(n_sites);
    let wires = v.len() / (4 * n_sites);
    let mut w = 0.0;
    for wire in 0..wires {
        for site in 1..=n_sites {
            if site <= n_loc || site + n_loc > n_sites {
                let base = (wire * n_sites + site - 1) * 4;
                w += (0..4).map(|j| v[base + j] * v[base + j]).sum::<f64>();
            }
        }
    }
    w
}

/// Sorted eigenphases with edge weights and pinning flags.
pub fn spectrum(o: &OrthogonalPropagator, n_sites: usize, n_loc: usize) -> SpectrumReport {
    let dirs = invariant_directions(&o.o);
    // within each cluster of equal |θ| half the directions carry +θ and half −θ
    let mut entries = Vec::with_capacity(dirs.len());
    let mut i = 0;
    while i < dirs.len() {
        let mut j = i + 1;
        while j < dirs.len() && (dirs[j].0 - dirs[i].0).abs() < 1e-9 {
            j += 1;
        }
        let pinned = dirs[i].0 < PIN_TOL || PI - dirs[i].0 < PIN_TOL;
        for (r, (theta, v)) in dirs[i..j].iter().enumerate() {
            let signed = if pinned || r < (j - i) / 2 { *theta } else { -*theta };
            let flag = if *theta < PIN_TOL {
                PinFlag::Zero
            } else if PI - *theta < PIN_TOL {
                PinFlag::Pi
            } else {
                PinFlag::Bulk
            };
            let phase = if flag == PinFlag::Pi { PI } else { signed };
            entries.push(SpectrumEntry { eigenphase: phase, edge_weight: edge_weight(v, n_sites, n_loc), flag });
        }
        i = j;
    }
    entries.sort_by(|a, b| a.eigenphase.total_cmp(&b.eigenphase));
    SpectrumReport { entries, n_loc }
}

/// Names of the six tracked edge modes, in storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModeLabel {
    Zero1L,
    Zero2L,
    PiL,
    Zero1R,
    Zero2R,
    PiR,
}

impl ModeLabel {
    pub const ALL: [ModeLabel; 6] =
        [ModeLabel::Zero1L, ModeLabel::Zero2L, ModeLabel::PiL, ModeLabel::Zero1R, ModeLabel::Zero2R, ModeLabel::PiR];

    pub fn is_pi(self) -> bool {
        matches!(self, ModeLabel::PiL | ModeLabel::PiR)
    }

    pub fn is_left(self) -> bool {
        matches!(self, ModeLabel::Zero1L | ModeLabel::Zero2L | ModeLabel::PiL)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModeLabel::Zero1L => "g01L",
            ModeLabel::Zero2L => "g02L",
            ModeLabel::PiL => "gpiL",
            ModeLabel::Zero1R => "g01R",
            ModeLabel::Zero2R => "g02R",
            ModeLabel::PiR => "gpiR",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|l| l.name() == s)
    }
}

/// Six real unit vectors for γ_{0,1}^L, γ_{0,2}^L, γ_π^L and their right partners.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeModeSet {
    pub vectors: [Vector; 6],
}

impl EdgeModeSet {
    pub fn get(&self, label: ModeLabel) -> &Vector {
        &self.vectors[label as usize]
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    /// Columns in `ModeLabel::ALL` order.
    pub fn matrix(&self) -> Mat {
        Mat::from_columns(&self.vectors)
    }

    fn columns(&self, labels: &[ModeLabel]) -> Mat {
        Mat::from_columns(&labels.iter().map(|l| self.get(*l).clone()).collect::<Vec<_>>())
    }

    /// Places the set on wire `wire` of a `n_wires` register.
    pub fn embed(&self, wire: usize, n_wires: usize) -> EdgeModeSet {
        let d = self.dim();
        let vectors = self.vectors.clone().map(|v| {
            let mut big = Vector::zeros(d * n_wires);
            big.rows_mut(wire * d, d).copy_from(&v);
            big
        });
        EdgeModeSet { vectors }
    }
}

/// The exact ideal-case edge modes.
pub fn ideal_edge_modes(n_sites: usize) -> EdgeModeSet {
    use Species::{Alpha, Beta};
    use Sublattice::{A, B};
    let n = n_sites;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let make = |terms: &[(usize, Sublattice, Species, f64)]| {
        let mut v = Vector::zeros(4 * n);
        for &(site, sub, sp, c) in terms {
            v[flat(n, site, sub, sp)] += c;
        }
        v
    };
    EdgeModeSet {
        vectors: [
            make(&[(1, A, Alpha, 1.0)]),
            make(&[(1, A, Beta, r), (1, B, Alpha, -r)]),
            make(&[(1, A, Beta, r), (1, B, Alpha, r)]),
            make(&[(n, A, Beta, r), (n, B, Alpha, r)]),
            make(&[(n, B, Beta, 1.0)]),
            make(&[(n, A, Beta, r), (n, B, Alpha, -r)]),
        ],
    }
}

const ZERO_LABELS: [ModeLabel; 4] = [ModeLabel::Zero1L, ModeLabel::Zero2L, ModeLabel::Zero1R, ModeLabel::Zero2R];
const PI_LABELS: [ModeLabel; 2] = [ModeLabel::PiL, ModeLabel::PiR];

/// Orthonormal bases of the pinned +1 and −1 eigenspaces of O.
pub fn pinned_subspaces(o: &OrthogonalPropagator, tol: f64) -> (Mat, Mat) {
    let dirs = invariant_directions(&o.o);
    let zero: Vec<Vector> = dirs.iter().filter(|d| d.0 < tol).map(|d| d.1.clone()).collect();
    let pi: Vec<Vector> = dirs.iter().filter(|d| PI - d.0 < tol).map(|d| d.1.clone()).collect();
    let dim = o.dim();
    let to_mat = |v: &[Vector]| if v.is_empty() { Mat::zeros(dim, 0) } else { Mat::from_columns(v) };
    (to_mat(&zero), to_mat(&pi))
}

/// Extracts the six edge modes, gauge-fixed against `reference` (Eq. 14 vectors by default).
pub fn edge_modes(o: &OrthogonalPropagator, n_sites: usize, reference: Option<&EdgeModeSet>) -> Result<EdgeModeSet> {
    let default_ref;
    let reference = match reference {
        Some(r) => r,
        None => {
            default_ref = ideal_edge_modes(n_sites);
            &default_ref
        }
    };
    let (z, p) = pinned_subspaces(o, PIN_TOL);
    if z.ncols() != 4 || p.ncols() != 2 {
        return Err(Error::WrongDegeneracy { expected_zero: 4, expected_pi: 2, found_zero: z.ncols(), found_pi: p.ncols() });
    }
    align(&z, &p, reference)
}

fn align(z: &Mat, p: &Mat, reference: &EdgeModeSet) -> Result<EdgeModeSet> {
    let (zq, smin_z) = procrustes(z, &reference.columns(&ZERO_LABELS));
    let (pq, smin_p) = procrustes(p, &reference.columns(&PI_LABELS));
    let smin = smin_z.min(smin_p);
    if smin < 0.5 {
        return Err(Error::GaugeAmbiguity(smin));
    }
    let mut vectors = reference.vectors.clone();
    for (i, l) in ZERO_LABELS.iter().enumerate() {
        vectors[*l as usize] = zq.column(i).into_owned();
    }
    for (i, l) in PI_LABELS.iter().enumerate() {
        vectors[*l as usize] = pq.column(i).into_owned();
    }
    Ok(EdgeModeSet { vectors })
}

/// Edge modes taken as the four/two eigen-directions closest to +1/−1, without
/// requiring pinning. Used where symmetry-breaking terms split the modes.
pub fn nearest_edge_modes(o: &OrthogonalPropagator, reference: &EdgeModeSet) -> Result<EdgeModeSet> {
    let dirs = invariant_directions(&o.o);
    let n = dirs.len();
    let z = Mat::from_columns(&dirs[..4].iter().map(|d| d.1.clone()).collect::<Vec<_>>());
    let p = Mat::from_columns(&dirs[n - 2..].iter().map(|d| d.1.clone()).collect::<Vec<_>>());
    align(&z, &p, reference)
}

/// Pinned-mode counts on each edge: ((zero_left, pi_left), (zero_right, pi_right)).
pub fn pinned_mode_counts(o: &OrthogonalPropagator, n_sites: usize) -> ((usize, usize), (usize, usize)) {
    let (z, p) = pinned_subspaces(o, PIN_TOL);
    let left_mask = Vector::from_fn(o.dim(), |i, _| if (i / 4) % n_sites < n_sites / 2 { 1.0 } else { 0.0 });
    let split = |q: &Mat| -> (usize, usize) {
        if q.ncols() == 0 {
            return (0, 0);
        }
        let mut w = q.clone();
        for (i, m) in left_mask.iter().enumerate() {
            w.row_mut(i).scale_mut(*m);
        }
        let g = q.transpose() * w;
        let (vals, _) = eigh(&g);
        let left = vals.iter().filter(|&&x| x > 0.5).count();
        (left, q.ncols() - left)
    };
    let (zl, zr) = split(&z);
    let (pl, pr) = split(&p);
    ((zl, pl), (zr, pr))
}

/// Largest |sin εT| of the zero (first) and π (second) sectors, taking the
/// `n_zero` / `n_pi` eigen-directions nearest to ±1.
pub fn sector_splittings(o: &Mat, n_zero: usize, n_pi: usize) -> (f64, f64) {
    let s = (o + o.transpose()) * 0.5;
    let k = (o - o.transpose()) * 0.5;
    let (_, v) = eigh(&s);
    let n = v.ncols();
    let restricted = |cols: std::ops::Range<usize>| -> f64 {
        if cols.is_empty() {
            return 0.0;
        }
        let q = v.columns(cols.start, cols.len()).into_owned();
        let kr = q.transpose() * &k * &q;
        kr.singular_values().max()
    };
    (restricted(n - n_zero..n), restricted(0..n_pi))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct AdiabaticityMetrics {
    pub diabatic_error: f64,
    pub max_splitting: f64,
}

/// Leakage of evolved mode vectors out of the final instantaneous edge subspace.
pub fn diabatic_error(final_modes: &EdgeModeSet, evolved: &[Vector]) -> f64 {
    let q = final_modes.matrix();
    evolved
        .iter()
        .map(|v| 1.0 - (q.transpose() * v).norm_squared() / v.norm_squared())
        .fold(0.0, f64::max)
}

pub fn adiabaticity_metrics(final_modes: &EdgeModeSet, evolved: &[Vector], splittings: &[f64]) -> AdiabaticityMetrics {
    AdiabaticityMetrics {
        diabatic_error: diabatic_error(final_modes, evolved),
        max_splitting: splittings.iter().cloned().fold(0.0, f64::max),
    }
}
