//! Real-space model: parameters, Majorana indexing and quadratic Hamiltonians.
//!
//! Majorana operators are γ^α = c + c† and γ^β = i(c − c†). A quadratic
//! Hamiltonian is stored as a real antisymmetric matrix `A` with
//! H·T = (i/4) γᵀ A γ; constant shifts from normal ordering are dropped.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sublattice {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Species {
    Alpha,
    Beta,
}

/// Position of one Majorana operator in a (possibly multi-wire) register.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MajoranaIndex {
    /// 1-based site.
    pub site: usize,
    pub sublattice: Sublattice,
    pub species: Species,
    pub wire: usize,
}

impl MajoranaIndex {
    pub fn new(site: usize, sublattice: Sublattice, species: Species) -> Self {
        Self { site, sublattice, species, wire: 0 }
    }

    pub fn on_wire(mut self, wire: usize) -> Self {
        self.wire = wire;
        self
    }

    /// Flat position, ordered (wire, site, sublattice, species).
    pub fn flatten(&self, n_sites: usize) -> usize {
        debug_assert!(self.site >= 1 && self.site <= n_sites);
        let sub = match self.sublattice {
            Sublattice::A => 0,
            Sublattice::B => 1,
        };
        let sp = match self.species {
            Species::Alpha => 0,
            Species::Beta => 1,
        };
        ((self.wire * n_sites + self.site - 1) * 2 + sub) * 2 + sp
    }

    pub fn unflatten(index: usize, n_sites: usize) -> Self {
        let sp = if index.is_multiple_of(2) { Species::Alpha } else { Species::Beta };
        let rest = index / 2;
        let sub = if rest.is_multiple_of(2) { Sublattice::A } else { Sublattice::B };
        let rest = rest / 2;
        Self { site: rest % n_sites + 1, sublattice: sub, species: sp, wire: rest / n_sites }
    }
}

/// Shorthand for the flat index on wire 0.
pub fn flat(n_sites: usize, site: usize, sublattice: Sublattice, species: Species) -> usize {
    MajoranaIndex::new(site, sublattice, species).flatten(n_sites)
}

/// Per-site coupling arrays. Segment-1 fields first, then segment 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Field {
    #[serde(rename = "J_intra")]
    HopIntra1,
    #[serde(rename = "J_inter")]
    HopInter1,
    #[serde(rename = "Delta_intra")]
    PairIntra1,
    #[serde(rename = "Delta_inter")]
    PairInter1,
    #[serde(rename = "j_intra")]
    HopIntra2,
    #[serde(rename = "j_inter")]
    HopInter2,
    #[serde(rename = "delta_intra")]
    PairIntra2,
    #[serde(rename = "delta_inter")]
    PairInter2,
}

impl Field {
    pub const ALL: [Field; 8] = [
        Field::HopIntra1,
        Field::HopInter1,
        Field::PairIntra1,
        Field::PairInter1,
        Field::HopIntra2,
        Field::HopInter2,
        Field::PairIntra2,
        Field::PairInter2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::HopIntra1 => "J_intra",
            Field::HopInter1 => "J_inter",
            Field::PairIntra1 => "Delta_intra",
            Field::PairInter1 => "Delta_inter",
            Field::HopIntra2 => "j_intra",
            Field::HopInter2 => "j_inter",
            Field::PairIntra2 => "delta_intra",
            Field::PairInter2 => "delta_inter",
        }
    }

    pub fn segment(self) -> u8 {
        if (self as usize) < 4 {
            1
        } else {
            2
        }
    }

    pub fn is_inter(self) -> bool {
        matches!(self, Field::HopInter1 | Field::PairInter1 | Field::HopInter2 | Field::PairInter2)
    }

    pub fn is_pairing(self) -> bool {
        matches!(self, Field::PairIntra1 | Field::PairInter1 | Field::PairIntra2 | Field::PairInter2)
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Field {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Field::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown field `{s}`")))
    }
}

/// The eight homogeneous amplitudes (all ×T).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Uniform {
    #[serde(rename = "J1")]
    pub j_big1: f64,
    #[serde(rename = "J2")]
    pub j_big2: f64,
    #[serde(rename = "j1")]
    pub j_small1: f64,
    #[serde(rename = "j2")]
    pub j_small2: f64,
    #[serde(rename = "Delta1")]
    pub delta_big1: f64,
    #[serde(rename = "Delta2")]
    pub delta_big2: f64,
    #[serde(rename = "delta1")]
    pub delta_small1: f64,
    #[serde(rename = "delta2")]
    pub delta_small2: f64,
}

impl Uniform {
    pub fn ideal() -> Self {
        Self {
            j_big1: PI / 2.0,
            j_big2: PI / 2.0,
            j_small1: 0.0,
            j_small2: 2.0 * PI,
            delta_big1: PI / 2.0,
            delta_big2: PI / 2.0,
            delta_small1: 0.0,
            delta_small2: 0.0,
        }
    }

    /// Off-ideal point used for the braiding figures.
    pub fn figure4() -> Self {
        Self {
            j_big1: PI / 2.0 + 0.14,
            j_big2: PI / 2.0 + 0.18,
            j_small1: 0.06,
            j_small2: 2.0 * PI + 0.19,
            delta_big1: PI / 2.0 + 0.1,
            delta_big2: PI / 2.0 - 0.24,
            delta_small1: -0.04,
            delta_small2: 0.12,
        }
    }

    pub fn zero() -> Self {
        Self::from_array([0.0; 8])
    }

    /// Order: J1, J2, j1, j2, Delta1, Delta2, delta1, delta2.
    pub fn as_array(&self) -> [f64; 8] {
        [
            self.j_big1,
            self.j_big2,
            self.j_small1,
            self.j_small2,
            self.delta_big1,
            self.delta_big2,
            self.delta_small1,
            self.delta_small2,
        ]
    }

    pub fn from_array(v: [f64; 8]) -> Self {
        Self {
            j_big1: v[0],
            j_big2: v[1],
            j_small1: v[2],
            j_small2: v[3],
            delta_big1: v[4],
            delta_big2: v[5],
            delta_small1: v[6],
            delta_small2: v[7],
        }
    }

    pub const NAMES: [&'static str; 8] = ["J1", "J2", "j1", "j2", "Delta1", "Delta2", "delta1", "delta2"];

    pub fn get(&self, name: &str) -> Option<f64> {
        Self::NAMES.iter().position(|n| *n == name).map(|i| self.as_array()[i])
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let i = Self::NAMES
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown uniform parameter `{name}`")))?;
        let mut v = self.as_array();
        v[i] = value;
        *self = Self::from_array(v);
        Ok(())
    }

    /// Value carried by `field` (intra fields take the index-1 amplitude).
    pub fn field_value(&self, field: Field) -> f64 {
        match field {
            Field::HopIntra1 => self.j_big1,
            Field::HopInter1 => self.j_big2,
            Field::PairIntra1 => self.delta_big1,
            Field::PairInter1 => self.delta_big2,
            Field::HopIntra2 => self.j_small1,
            Field::HopInter2 => self.j_small2,
            Field::PairIntra2 => self.delta_small1,
            Field::PairInter2 => self.delta_small2,
        }
    }
}

/// All drive amplitudes of one wire, per site and dimensionless (×T).
#[derive(Clone, Debug, PartialEq)]
pub struct DriveParams {
    pub n_sites: usize,
    /// Indexed by `Field as usize`; entry `i` belongs to site `i + 1`.
    pub couplings: [Vec<Complex64>; 8],
    /// Segment-2 on-site bias V·T on sublattice A, per site.
    pub bias_a: Vec<f64>,
    /// Same on sublattice B (used by right-edge protocols).
    pub bias_b: Vec<f64>,
    pub mu1: f64,
    pub mu2: f64,
}

impl DriveParams {
    pub fn uniform(n_sites: usize, u: &Uniform) -> Self {
        let couplings = Field::ALL.map(|f| vec![Complex64::new(u.field_value(f), 0.0); n_sites]);
        Self {
            n_sites,
            couplings,
            bias_a: vec![0.0; n_sites],
            bias_b: vec![0.0; n_sites],
            mu1: 0.0,
            mu2: 0.0,
        }
    }

    pub fn ideal(n_sites: usize) -> Self {
        Self::uniform(n_sites, &Uniform::ideal())
    }

    pub fn zero(n_sites: usize) -> Self {
        Self::uniform(n_sites, &Uniform::zero())
    }

    pub fn get(&self, field: Field, site: usize) -> Complex64 {
        self.couplings[field as usize][site - 1]
    }

    pub fn set(&mut self, field: Field, site: usize, value: Complex64) {
        self.couplings[field as usize][site - 1] = value;
    }

    pub fn field(&self, field: Field) -> &[Complex64] {
        &self.couplings[field as usize]
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites == 0 {
            return Err(Error::InvalidInput("N must be at least 1".into()));
        }
        for f in Field::ALL {
            let v = &self.couplings[f as usize];
            if v.len() != self.n_sites {
                return Err(Error::InvalidInput(format!("{f} has {} entries, expected {}", v.len(), self.n_sites)));
            }
            if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidInput(format!("{f} contains a non-finite value")));
            }
        }
        for (name, v) in [("bias_a", &self.bias_a), ("bias_b", &self.bias_b)] {
            if v.len() != self.n_sites {
                return Err(Error::InvalidInput(format!("{name} has {} entries, expected {}", v.len(), self.n_sites)));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} contains a non-finite value")));
            }
        }
        if !self.mu1.is_finite() || !self.mu2.is_finite() {
            return Err(Error::InvalidInput("mu1/mu2 must be finite".into()));
        }
        Ok(())
    }

    /// Recovers the homogeneous amplitudes, or fails if any entry differs.
    ///
    /// Inter-site entries at site N are ignored (open boundary).
    pub fn homogeneous(&self) -> Result<Uniform> {
        let mut vals = [0.0; 8];
        let order = [
            Field::HopIntra1,
            Field::HopInter1,
            Field::HopIntra2,
            Field::HopInter2,
            Field::PairIntra1,
            Field::PairInter1,
            Field::PairIntra2,
            Field::PairInter2,
        ];
        for (slot, f) in order.iter().enumerate() {
            let v = self.field(*f);
            let last = if f.is_inter() && self.n_sites > 1 { self.n_sites - 1 } else { self.n_sites };
            let first = v[0];
            if first.im != 0.0 || v[..last].iter().any(|z| *z != first) {
                return Err(Error::OverridesPresent);
            }
            vals[slot] = first.re;
        }
        if self.bias_a.iter().chain(self.bias_b.iter()).any(|&b| b != 0.0) {
            return Err(Error::OverridesPresent);
        }
        Ok(Uniform::from_array(vals))
    }

    /// Largest entrywise difference to `other` (same size assumed).
    pub fn max_abs_diff(&self, other: &DriveParams) -> f64 {
        let mut m: f64 = 0.0;
        for f in Field::ALL {
            let last = if f.is_inter() { self.n_sites - 1 } else { self.n_sites };
            for i in 0..last {
                m = m.max((self.couplings[f as usize][i] - other.couplings[f as usize][i]).norm());
            }
        }
        for i in 0..self.n_sites {
            m = m.max((self.bias_a[i] - other.bias_a[i]).abs());
            m = m.max((self.bias_b[i] - other.bias_b[i]).abs());
        }
        m.max((self.mu1 - other.mu1).abs()).max((self.mu2 - other.mu2).abs())
    }
}

/// H·T = (i/4) γᵀ A γ with A real antisymmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticHamiltonian {
    a: Mat,
}

impl QuadraticHamiltonian {
    pub fn zeros(dim: usize) -> Self {
        Self { a: Mat::zeros(dim, dim) }
    }

    /// Adds `w` to A[x][y] and −w to A[y][x].
    pub fn add(&mut self, x: usize, y: usize, w: f64) {
        assert_ne!(x, y, "diagonal couplings are not antisymmetric");
        self.a[(x, y)] += w;
        self.a[(y, x)] -= w;
    }

    pub fn coupling(&self, x: usize, y: usize) -> f64 {
        self.a[(x, y)]
    }

    pub fn matrix(&self) -> &Mat {
        &self.a
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Antisymmetric matrix taken from the strict upper triangle of `m`.
    pub fn from_upper(m: &Mat) -> Self {
        let n = m.nrows();
        let mut h = Self::zeros(n);
        for j in 0..n {
            for i in 0..j {
                if m[(i, j)] != 0.0 {
                    h.add(i, j, m[(i, j)]);
                }
            }
        }
        h
    }

    pub fn sum(&self, other: &Self) -> Self {
        Self { a: &self.a + &other.a }
    }

    /// Block-diagonal direct sum over wires.
    pub fn direct_sum(parts: &[QuadraticHamiltonian]) -> Self {
        let dim = parts.iter().map(|p| p.dim()).sum();
        let mut a = Mat::zeros(dim, dim);
        let mut off = 0;
        for p in parts {
            let d = p.dim();
            a.view_mut((off, off), (d, d)).copy_from(&p.a);
            off += d;
        }
        Self { a }
    }

    /// Nonzero upper-triangle couplings as (x, y, weight).
    pub fn nonzero(&self, tol: f64) -> Vec<(usize, usize, f64)> {
        let n = self.dim();
        let mut out = Vec::new();
        for x in 0..n {
            for y in x + 1..n {
                if self.a[(x, y)].abs() > tol {
                    out.push((x, y, self.a[(x, y)]));
                }
            }
        }
        out
    }
}

/// Ladder operator: annihilation or creation on a fermion mode.
#[derive(Clone, Copy)]
enum Ladder {
    C(usize),
    D(usize),
}

impl Ladder {
    /// Majorana expansion: c = (γ^α − iγ^β)/2, c† = (γ^α + iγ^β)/2.
    fn expand(self) -> [(usize, Complex64); 2] {
        match self {
            Ladder::C(m) => [(2 * m, Complex64::new(0.5, 0.0)), (2 * m + 1, Complex64::new(0.0, -0.5))],
            Ladder::D(m) => [(2 * m, Complex64::new(0.5, 0.0)), (2 * m + 1, Complex64::new(0.0, 0.5))],
        }
    }
}

/// Accumulates Σ W_xy γ_x γ_y from ladder bilinears, then converts to A.
struct BilinearBuilder {
    w: Vec<Complex64>,
    dim: usize,
}

impl BilinearBuilder {
    fn new(dim: usize) -> Self {
        Self { w: vec![Complex64::new(0.0, 0.0); dim * dim], dim }
    }

    fn term(&mut self, coef: Complex64, o1: Ladder, o2: Ladder) {
        if coef == Complex64::new(0.0, 0.0) {
            return;
        }
        for (x, cx) in o1.expand() {
            for (y, cy) in o2.expand() {
                self.w[x * self.dim + y] += coef * cx * cy;
            }
        }
    }

    /// t c†_x c_y + h.c.
    fn hop(&mut self, t: Complex64, x: usize, y: usize) {
        self.term(t, Ladder::D(x), Ladder::C(y));
        self.term(t.conj(), Ladder::D(y), Ladder::C(x));
    }

    /// t c†_x c†_y + h.c.
    fn pair(&mut self, t: Complex64, x: usize, y: usize) {
        self.term(t, Ladder::D(x), Ladder::D(y));
        self.term(t.conj(), Ladder::C(y), Ladder::C(x));
    }

    /// v c†_x c_x (the constant v/2 is dropped).
    fn number(&mut self, v: f64, x: usize) {
        self.term(Complex64::new(v, 0.0), Ladder::D(x), Ladder::C(x));
    }

    fn finish(self) -> QuadraticHamiltonian {
        let n = self.dim;
        let mut h = QuadraticHamiltonian::zeros(n);
        for x in 0..n {
            for y in x + 1..n {
                let v = Complex64::new(0.0, -2.0) * (self.w[x * n + y] - self.w[y * n + x]);
                debug_assert!(v.im.abs() < 1e-12, "non-Hermitian bilinear at ({x},{y})");
                if v.re != 0.0 {
                    h.add(x, y, v.re);
                }
            }
        }
        h
    }
}

/// Fermion mode index of (site, sublattice) on wire 0.
fn mode(site: usize, sub: Sublattice) -> usize {
    (site - 1) * 2 + if sub == Sublattice::A { 0 } else { 1 }
}

/// Hamiltonian of one half-period segment.
///
/// Segment 1 holds J, Δ and the μ terms; segment 2 holds j, δ and the on-site
/// bias (+V c†c).
pub fn build_segment(params: &DriveParams, segment: u8) -> Result<QuadraticHamiltonian> {
    params.validate()?;
    let n = params.n_sites;
    let mut b = BilinearBuilder::new(4 * n);
    let i_unit = Complex64::new(0.0, 1.0);
    match segment {
        1 => {
            for i in 1..=n {
                let (a, bb) = (mode(i, Sublattice::A), mode(i, Sublattice::B));
                b.hop(-params.get(Field::HopIntra1, i), bb, a);
                b.pair(params.get(Field::PairIntra1, i), bb, a);
                if i < n {
                    let an = mode(i + 1, Sublattice::A);
                    b.hop(-params.get(Field::HopInter1, i), an, bb);
                    b.pair(params.get(Field::PairInter1, i), an, bb);
                }
            }
            add_break_terms(&mut b, params);
        }
        2 => {
            for i in 1..=n {
                let (a, bb) = (mode(i, Sublattice::A), mode(i, Sublattice::B));
                b.hop(-i_unit * params.get(Field::HopIntra2, i), bb, a);
                b.pair(i_unit * params.get(Field::PairIntra2, i), bb, a);
                if i < n {
                    let an = mode(i + 1, Sublattice::A);
                    b.hop(-i_unit * params.get(Field::HopInter2, i), an, bb);
                    b.pair(i_unit * params.get(Field::PairInter2, i), an, bb);
                }
                b.number(params.bias_a[i - 1], a);
                b.number(params.bias_b[i - 1], bb);
            }
        }
        s => return Err(Error::InvalidInput(format!("segment must be 1 or 2, got {s}"))),
    }
    Ok(b.finish())
}

fn add_break_terms(b: &mut BilinearBuilder, params: &DriveParams) {
    for i in 1..=params.n_sites {
        b.number(params.mu1 + params.mu2, mode(i, Sublattice::A));
        b.number(params.mu1 - params.mu2, mode(i, Sublattice::B));
    }
}

/// The chiral-symmetry-breaking μ terms alone.
pub fn build_break_term(params: &DriveParams) -> Result<QuadraticHamiltonian> {
    params.validate()?;
    let mut b = BilinearBuilder::new(4 * params.n_sites);
    add_break_terms(&mut b, params);
    Ok(b.finish())
}

/// Block-diagonal segment Hamiltonian of several wires.
pub fn build_segment_wires(wires: &[DriveParams], segment: u8) -> Result<QuadraticHamiltonian> {
    let parts = wires.iter().map(|p| build_segment(p, segment)).collect::<Result<Vec<_>>>()?;
    Ok(QuadraticHamiltonian::direct_sum(&parts))
}

/// JSON parameter file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamConfig {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default = "Uniform::ideal")]
    pub uniform: Uniform,
    #[serde(default)]
    pub overrides: Vec<Override>,
    #[serde(default)]
    pub bias: BiasSpec,
    #[serde(default)]
    pub mu1: f64,
    #[serde(default)]
    pub mu2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Override {
    pub site: usize,
    pub field: Field,
    pub value: f64,
    /// Complex phase θ: the entry becomes value·e^{iθ}.
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasEntry {
    pub site: usize,
    #[serde(default = "default_sublattice")]
    pub sublattice: Sublattice,
    pub value: f64,
}

fn default_sublattice() -> Sublattice {
    Sublattice::A
}

/// Either a per-site list (sublattice A) or explicit entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BiasSpec {
    PerSite(Vec<f64>),
    Entries(Vec<BiasEntry>),
}

impl Default for BiasSpec {
    fn default() -> Self {
        BiasSpec::PerSite(Vec::new())
    }
}

impl ParamConfig {
    pub fn ideal(n: usize) -> Self {
        Self {
            n,
            uniform: Uniform::ideal(),
            overrides: Vec::new(),
            bias: BiasSpec::default(),
            mu1: 0.0,
            mu2: 0.0,
        }
    }

    pub fn to_params(&self) -> Result<DriveParams> {
        if self.n == 0 {
            return Err(Error::InvalidInput("N must be at least 1".into()));
        }
        let mut p = DriveParams::uniform(self.n, &self.uniform);
        for o in &self.overrides {
            if o.site == 0 || o.site > self.n {
                return Err(Error::InvalidInput(format!("override site {} outside 1..={}", o.site, self.n)));
            }
            p.set(o.field, o.site, Complex64::from_polar(o.value, o.phase));
        }
        match &self.bias {
            BiasSpec::PerSite(v) => {
                if !v.is_empty() && v.len() != self.n {
                    return Err(Error::InvalidInput(format!("bias has {} entries, expected {}", v.len(), self.n)));
                }
                for (i, &x) in v.iter().enumerate() {
                    p.bias_a[i] = x;
                }
            }
            BiasSpec::Entries(entries) => {
                for e in entries {
                    if e.site == 0 || e.site > self.n {
                        return Err(Error::InvalidInput(format!("bias site {} outside 1..={}", e.site, self.n)));
                    }
                    match e.sublattice {
                        Sublattice::A => p.bias_a[e.site - 1] = e.value,
                        Sublattice::B => p.bias_b[e.site - 1] = e.value,
                    }
                }
            }
        }
        p.mu1 = self.mu1;
        p.mu2 = self.mu2;
        p.validate()?;
        Ok(p)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("parameter file: {e}")))
    }

    /// Canonical JSON (sorted keys).
    pub fn to_json(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string_pretty(&v).expect("value serializes")
    }
}
