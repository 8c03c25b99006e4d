//! Bloch Floquet operators, symmetry checks and the (ν₀, ν_π) winding numbers.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{DriveParams, Uniform};
use crate::linalg::{expm_hermitian, CMat};

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn pauli(which: u8) -> CMat {
    let z = Complex64::new(0.0, 0.0);
    match which {
        0 => CMat::from_row_slice(2, 2, &[ONE, z, z, ONE]),
        1 => CMat::from_row_slice(2, 2, &[z, ONE, ONE, z]),
        2 => CMat::from_row_slice(2, 2, &[z, -I, I, z]),
        _ => CMat::from_row_slice(2, 2, &[ONE, z, z, -ONE]),
    }
}

/// τ_a ⊗ σ_b in the Nambu basis (c_A, c_B, c†_A, c†_B).
fn ts(a: u8, b: u8) -> CMat {
    pauli(a).kronecker(&pauli(b))
}

fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Momentum-space operators for one k.
#[derive(Clone, Debug)]
pub struct BlochOperator {
    pub k: f64,
    pub h1: CMat,
    pub h2: CMat,
    pub f: CMat,
    pub g: CMat,
    pub u: CMat,
}

/// (a − b cos k)σ_y − b sin k σ_x, the shape shared by Δ(k), j(k) and δ(k).
fn odd_form(a: f64, b: f64, k: f64) -> CMat {
    pauli(2) * c(a - b * k.cos()) - pauli(1) * c(b * k.sin())
}

pub fn bloch_uniform(u: &Uniform, mu1: f64, mu2: f64, k: f64) -> BlochOperator {
    let jsig = pauli(1) * c(u.j_big1 + u.j_big2 * k.cos()) - pauli(2) * c(u.j_big2 * k.sin());
    let mu = pauli(0) * c(mu1) + pauli(3) * c(mu2);
    let h1 = -kron(&pauli(3), &jsig)
        + kron(&pauli(2), &odd_form(u.delta_big1, u.delta_big2, k))
        + kron(&pauli(3), &mu);
    let h2 = -kron(&pauli(0), &odd_form(u.j_small1, u.j_small2, k))
        + kron(&pauli(1), &odd_form(u.delta_small1, u.delta_small2, k));
    let e1 = expm_hermitian(&h1, 0.25);
    let e2 = expm_hermitian(&h2, 0.25);
    let f = &e1 * &e2;
    let g = &e2 * &e1;
    let u = &f * &g;
    BlochOperator { k, h1, h2, f, g, u }
}

/// Builds the Bloch operators at momentum k; requires translation-invariant params.
pub fn bloch(params: &DriveParams, k: f64) -> Result<BlochOperator> {
    let u = params.homogeneous()?;
    Ok(bloch_uniform(&u, params.mu1, params.mu2, k))
}

#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct SymmetryReport {
    pub chiral: f64,
    pub particle_hole: f64,
    pub time_reversal: f64,
}

fn cdiff(a: &CMat, b: &CMat) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Max deviation of the chiral, particle-hole and time-reversal relations over `ks`.
pub fn symmetry_check(params: &DriveParams, ks: &[f64]) -> Result<SymmetryReport> {
    let u = params.homogeneous()?;
    let gamma = ts(0, 3);
    let px = ts(1, 0);
    let tr = &gamma * &px;
    let mut rep = SymmetryReport::default();
    for &k in ks {
        let b = bloch_uniform(&u, params.mu1, params.mu2, k);
        let m = bloch_uniform(&u, params.mu1, params.mu2, -k);
        rep.chiral = rep.chiral.max(cdiff(&(&gamma * &b.f * &gamma), &b.g.adjoint()));
        rep.particle_hole = rep.particle_hole.max(cdiff(&(&px * b.u.conjugate() * &px), &m.u));
        rep.time_reversal = rep.time_reversal.max(cdiff(&(&tr * b.u.conjugate() * tr.adjoint()), &m.u.adjoint()));
    }
    Ok(rep)
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct WindingResult {
    pub nu0: i64,
    pub nu_pi: i64,
    /// Distance of the raw windings from the nearest integers.
    pub residuals: (f64, f64),
}

/// Unitary rotating F̂ into the block form where b and d carry the windings.
fn canonical_basis() -> CMat {
    let half = c(0.5);
    let a = (ts(0, 0) + ts(0, 1) + ts(3, 0) - ts(3, 1)) * half;
    let b = (ts(0, 0) + ts(1, 0) + ts(0, 3) - ts(1, 3)) * half;
    a * b
}

fn det2(m: &CMat, r: usize, col: usize) -> Complex64 {
    m[(r, col)] * m[(r + 1, col + 1)] - m[(r, col + 1)] * m[(r + 1, col)]
}

pub fn winding_uniform(u: &Uniform, mu1: f64, mu2: f64, grid: usize) -> Result<WindingResult> {
    if grid < 64 {
        return Err(Error::InvalidInput(format!("grid {grid} < 64")));
    }
    let uc = canonical_basis();
    let uc_dag = uc.adjoint();
    let mut dets = Vec::with_capacity(grid + 1);
    for j in 0..=grid {
        let k = -PI + 2.0 * PI * j as f64 / grid as f64;
        let f = &uc_dag * bloch_uniform(u, mu1, mu2, k).f * &uc;
        let (db, dd) = (det2(&f, 0, 2), det2(&f, 2, 2));
        for d in [db, dd] {
            if d.norm() < 1e-8 {
                return Err(Error::GapClosed { k, det: d.norm() });
            }
        }
        dets.push((db, dd));
    }
    let mut wb = 0.0;
    let mut wd = 0.0;
    let mut worst: f64 = 0.0;
    for w in dets.windows(2) {
        let sb = (w[1].0 / w[0].0).arg();
        let sd = (w[1].1 / w[0].1).arg();
        worst = worst.max(sb.abs()).max(sd.abs());
        wb += sb;
        wd += sd;
    }
    let (wb, wd) = (wb / (2.0 * PI), wd / (2.0 * PI));
    let residuals = ((wb - wb.round()).abs(), (wd - wd.round()).abs());
    // increments near π make the unwrapping ambiguous
    if worst > PI / 2.0 {
        return Err(Error::NonIntegerResult(worst));
    }
    if residuals.0.max(residuals.1) > 1e-6 {
        return Err(Error::NonIntegerResult(residuals.0.max(residuals.1)));
    }
    Ok(WindingResult { nu0: wb.round() as i64, nu_pi: wd.round() as i64, residuals })
}

/// ν₀ and ν_π from the winding of det b(k) and det d(k).
pub fn winding_invariants(params: &DriveParams, grid: usize) -> Result<WindingResult> {
    let u = params.homogeneous()?;
    winding_uniform(&u, params.mu1, params.mu2, grid)
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct PhaseRow {
    pub value: f64,
    pub nu0: Option<i64>,
    pub nu_pi: Option<i64>,
    pub gap_closed: bool,
}

/// Invariants along one Uniform field; gap closings become flagged rows.
pub fn phase_diagram(template: &Uniform, axis: &str, range: (f64, f64), points: usize, grid: usize) -> Result<Vec<PhaseRow>> {
    if template.get(axis).is_none() {
        return Err(Error::InvalidInput(format!("unknown axis `{axis}`")));
    }
    let n = if range.0 == range.1 { 1 } else { points.max(1) };
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let value = if n == 1 { range.0 } else { range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64 };
        let mut u = *template;
        u.set(axis, value)?;
        rows.push(match winding_uniform(&u, 0.0, 0.0, grid) {
            Ok(w) => PhaseRow { value, nu0: Some(w.nu0), nu_pi: Some(w.nu_pi), gap_closed: false },
            Err(Error::GapClosed { .. }) | Err(Error::NonIntegerResult(_)) => {
                PhaseRow { value, nu0: None, nu_pi: None, gap_closed: true }
            }
            Err(e) => return Err(e),
        });
    }
    Ok(rows)
}

pub fn phase_rows_csv(rows: &[PhaseRow]) -> String {
    let mut s = String::from("axis_value,nu0,nu_pi,gap_flag\n");
    let opt = |v: Option<i64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.value, opt(r.nu0), opt(r.nu_pi), u8::from(r.gap_closed)));
    }
    s
}
