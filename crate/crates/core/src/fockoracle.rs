//! Exact many-body reference on the full Fock space (at most 8 fermion modes).
//!
//! Jordan-Wigner order follows the Majorana flattening: fermion mode m carries
//! Majoranas 2m (α) and 2m+1 (β).

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolve::floquet_propagator;
use crate::gaussian::{Choice, CovarianceState, SeededRng};
use crate::lattice::{DriveParams, Field};
use crate::linalg::{eigh_complex, expm_hermitian, CMat, Mat, Vector};

pub const MAX_MODES: usize = 8;

pub type FockState = nalgebra::DVector<Complex64>;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Dense ladder and Majorana operators for `n_modes` fermions.
pub struct FockSpace {
    pub n_modes: usize,
    annihilators: Vec<CMat>,
    majoranas: Vec<CMat>,
}

impl FockSpace {
    pub fn new(n_modes: usize) -> Result<Self> {
        if n_modes > MAX_MODES {
            return Err(Error::TooLarge(n_modes));
        }
        let dim = 1usize << n_modes;
        let mut annihilators = Vec::with_capacity(n_modes);
        for j in 0..n_modes {
            // basis bit j (most significant first) is the occupation of mode j
            let mut c = CMat::zeros(dim, dim);
            let bit = 1usize << (n_modes - 1 - j);
            for s in 0..dim {
                if s & bit != 0 {
                    let before = (s >> (n_modes - j)).count_ones();
                    let sign = if before.is_multiple_of(2) { 1.0 } else { -1.0 };
                    c[(s ^ bit, s)] = Complex64::new(sign, 0.0);
                }
            }
            annihilators.push(c);
        }
        let mut majoranas = Vec::with_capacity(2 * n_modes);
        for c in &annihilators {
            let cd = c.adjoint();
            majoranas.push(c + &cd);
            majoranas.push((c - &cd) * I);
        }
        Ok(Self { n_modes, annihilators, majoranas })
    }

    pub fn dim(&self) -> usize {
        1 << self.n_modes
    }

    pub fn c(&self, m: usize) -> &CMat {
        &self.annihilators[m]
    }

    pub fn cd(&self, m: usize) -> CMat {
        self.annihilators[m].adjoint()
    }

    pub fn majorana(&self, k: usize) -> &CMat {
        &self.majoranas[k]
    }

    /// γ_v = Σ v_k γ_k.
    pub fn majorana_combination(&self, v: &Vector) -> CMat {
        let mut out = CMat::zeros(self.dim(), self.dim());
        for (k, &x) in v.iter().enumerate() {
            if x != 0.0 {
                out += &self.majoranas[k] * Complex64::new(x, 0.0);
            }
        }
        out
    }

    pub fn vacuum(&self) -> FockState {
        let mut v = FockState::zeros(self.dim());
        v[0] = ONE;
        v
    }

    /// (−1)^{total occupation}.
    pub fn parity(&self) -> CMat {
        let d = self.dim();
        CMat::from_fn(d, d, |i, j| if i != j { ZERO } else if i.count_ones() % 2 == 0 { ONE } else { -ONE })
    }

    /// The Gaussian unitary exp(−i H) with H = (i/4) γᵀ A γ.
    pub fn gaussian_unitary(&self, a: &Mat) -> CMat {
        expm_hermitian(&self.quadratic(a), 1.0)
    }

    /// (i/4) γᵀ A γ as a dense matrix.
    pub fn quadratic(&self, a: &Mat) -> CMat {
        let d = self.dim();
        let mut h = CMat::zeros(d, d);
        let n = 2 * self.n_modes;
        for x in 0..n {
            for y in x + 1..n {
                let w = a[(x, y)];
                if w != 0.0 {
                    // (i/4)(A_xy γxγy + A_yx γyγx) = (i/2) A_xy γxγy
                    h += &self.majoranas[x] * &self.majoranas[y] * (I * 0.5 * w);
                }
            }
        }
        h
    }

    /// O_ab = tr(γ_b U†γ_aU)/dim, i.e. U†γ_aU = Σ_b O_ab γ_b.
    pub fn heisenberg_map(&self, u: &CMat) -> Mat {
        let n = 2 * self.n_modes;
        let d = self.dim() as f64;
        let ud = u.adjoint();
        let evolved: Vec<CMat> = self.majoranas.iter().map(|g| &ud * g * u).collect();
        Mat::from_fn(n, n, |a, b| {
            let m = &self.majoranas[b] * &evolved[a];
            m.trace().re / d
        })
    }

    /// M_ab = ⟨(i/2)[γ_a, γ_b]⟩.
    pub fn covariance(&self, psi: &FockState) -> CovarianceState {
        let n = 2 * self.n_modes;
        let mut m = Mat::zeros(n, n);
        let applied: Vec<FockState> = self.majoranas.iter().map(|g| g * psi).collect();
        for a in 0..n {
            for b in a + 1..n {
                // ⟨ψ| i γ_a γ_b |ψ⟩ = i ⟨γ_a ψ | γ_b ψ⟩
                let v = (I * applied[a].dotc(&applied[b])).re;
                m[(a, b)] = v;
                m[(b, a)] = -v;
            }
        }
        CovarianceState::from_matrix_unchecked(m)
    }

    /// Ground state of −(i/4) γᵀ M γ, the pure state with covariance M.
    pub fn state_from_covariance(&self, m: &Mat) -> FockState {
        let h = self.quadratic(&(-m));
        let (_, v) = eigh_complex(&h);
        v.column(0).into_owned()
    }

    /// Projects onto i γ_a γ_b = p; returns the normalized state and the branch probability.
    pub fn project_parity(&self, psi: &FockState, a: &Vector, b: &Vector, p: f64) -> (FockState, f64) {
        let ga = self.majorana_combination(a);
        let gb = self.majorana_combination(b);
        let op = (&ga * &gb) * (I * p);
        let projected = (psi + &op * psi) * Complex64::new(0.5, 0.0);
        let prob = projected.norm_squared();
        let out = if prob > 0.0 { &projected / Complex64::new(prob.sqrt(), 0.0) } else { projected };
        (out, prob)
    }

    /// exp(θ γ_a γ_b) for orthonormal a, b.
    pub fn pair_rotation(&self, theta: f64, a: &Vector, b: &Vector) -> CMat {
        let x = self.majorana_combination(a) * self.majorana_combination(b);
        let d = self.dim();
        CMat::identity(d, d) * Complex64::new(theta.cos(), 0.0) + x * Complex64::new(theta.sin(), 0.0)
    }
}

/// H₁ or H₂ of the listed wires, built directly from ladder operators (constants kept).
pub fn oracle_hamiltonian(space: &FockSpace, wires: &[DriveParams], segment: u8) -> CMat {
    let d = space.dim();
    let mut h = CMat::zeros(d, d);
    let mut offset = 0;
    for p in wires {
        let n = p.n_sites;
        let a = |i: usize| offset + 2 * (i - 1);
        let b = |i: usize| offset + 2 * (i - 1) + 1;
        let add_hop = |h: &mut CMat, t: Complex64, x: usize, y: usize| {
            let term = space.cd(x) * space.c(y) * t;
            *h += &term + term.adjoint();
        };
        let mut pairs: Vec<(Complex64, usize, usize)> = Vec::new();
        for i in 1..=n {
            if segment == 1 {
                add_hop(&mut h, -p.get(Field::HopIntra1, i), b(i), a(i));
                pairs.push((p.get(Field::PairIntra1, i), b(i), a(i)));
                if i < n {
                    add_hop(&mut h, -p.get(Field::HopInter1, i), a(i + 1), b(i));
                    pairs.push((p.get(Field::PairInter1, i), a(i + 1), b(i)));
                }
                h += space.cd(a(i)) * space.c(a(i)) * Complex64::new(p.mu1 + p.mu2, 0.0);
                h += space.cd(b(i)) * space.c(b(i)) * Complex64::new(p.mu1 - p.mu2, 0.0);
            } else {
                add_hop(&mut h, -I * p.get(Field::HopIntra2, i), b(i), a(i));
                pairs.push((I * p.get(Field::PairIntra2, i), b(i), a(i)));
                if i < n {
                    add_hop(&mut h, -I * p.get(Field::HopInter2, i), a(i + 1), b(i));
                    pairs.push((I * p.get(Field::PairInter2, i), a(i + 1), b(i)));
                }
                h += space.cd(a(i)) * space.c(a(i)) * Complex64::new(p.bias_a[i - 1], 0.0);
                h += space.cd(b(i)) * space.c(b(i)) * Complex64::new(p.bias_b[i - 1], 0.0);
            }
        }
        for (t, x, y) in pairs {
            let term = space.cd(x) * space.cd(y) * t;
            h += &term + term.adjoint();
        }
        offset += 2 * n;
    }
    h
}

/// exp(−iH₂T/2)·exp(−iH₁T/2) on the full Fock space.
pub fn oracle_propagator(wires: &[DriveParams]) -> Result<(FockSpace, CMat)> {
    let modes: usize = wires.iter().map(|p| 2 * p.n_sites).sum();
    let space = FockSpace::new(modes)?;
    let h1 = oracle_hamiltonian(&space, wires, 1);
    let h2 = oracle_hamiltonian(&space, wires, 2);
    let u = expm_hermitian(&h2, 0.5) * expm_hermitian(&h1, 0.5);
    Ok((space, u))
}

/// Covariance of a Fock state (free function form).
pub fn oracle_covariance(space: &FockSpace, psi: &FockState) -> CovarianceState {
    space.covariance(psi)
}

/// Largest disagreements between the Gaussian modules and the exact oracle.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct OracleCheck {
    pub n_sites: usize,
    pub draws: usize,
    /// One-period Heisenberg map vs the orthogonal propagator.
    pub heisenberg: f64,
    /// Covariance after ten periods.
    pub evolution: f64,
    /// Post-measurement covariance, both parity branches.
    pub measurement: f64,
}

impl OracleCheck {
    pub fn worst(&self) -> f64 {
        self.heisenberg.max(self.evolution).max(self.measurement)
    }
}

/// Random complex couplings, biases and μ terms for oracle comparisons.
pub fn random_params(n_sites: usize, rng: &mut SeededRng) -> DriveParams {
    let mut p = DriveParams::zero(n_sites);
    let mut draw = |scale: f64| scale * (2.0 * rng.uniform() - 1.0);
    for f in Field::ALL {
        for i in 1..=n_sites {
            let z = Complex64::new(draw(1.5), draw(1.5));
            p.set(f, i, z);
        }
    }
    for i in 0..n_sites {
        p.bias_a[i] = draw(1.0);
        p.bias_b[i] = draw(1.0);
    }
    p.mu1 = draw(0.3);
    p.mu2 = draw(0.3);
    p
}

fn random_unit(n: usize, rng: &mut SeededRng, against: Option<&Vector>) -> Vector {
    let mut v = Vector::from_fn(n, |_, _| 2.0 * rng.uniform() - 1.0);
    if let Some(a) = against {
        v -= a * a.dot(&v);
    }
    v.normalize()
}

/// Compares propagation, evolution and parity measurement with the Fock oracle
/// over `draws` random parameter sets.
pub fn cross_check(n_sites: usize, draws: usize, seed: u64) -> Result<OracleCheck> {
    let mut rng = SeededRng::new(seed);
    let mut out = OracleCheck { n_sites, draws, ..OracleCheck::default() };
    for _ in 0..draws {
        let p = random_params(n_sites, &mut rng);
        let (space, u) = oracle_propagator(std::slice::from_ref(&p))?;
        let o = floquet_propagator(&p)?;
        out.heisenberg = out.heisenberg.max((space.heisenberg_map(&u) - &o.o).amax());

        let n = 2 * space.n_modes;
        let a = Mat::from_fn(n, n, |i, j| if i < j { 2.0 * rng.uniform() - 1.0 } else { 0.0 });
        let a = &a - a.transpose();
        let mut psi = space.gaussian_unitary(&a) * space.vacuum();
        let mut m = space.covariance(&psi);
        for _ in 0..10 {
            psi = &u * psi;
            m = m.evolve(&o);
        }
        out.evolution = out.evolution.max((space.covariance(&psi).matrix() - m.matrix()).amax());

        let va = random_unit(n, &mut rng, None);
        let vb = random_unit(n, &mut rng, Some(&va));
        for outcome in [1i8, -1] {
            let (fock_state, prob) = space.project_parity(&psi, &va, &vb, f64::from(outcome));
            if prob < 1e-6 {
                continue;
            }
            let (_, gauss) = m.measure_parity(&va, &vb, Choice::Forced(outcome))?;
            out.measurement = out.measurement.max((space.covariance(&fock_state).matrix() - gauss.matrix()).amax());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Uniform;

    #[test]
    fn cross_check_small() {
        let c = cross_check(2, 3, 7).unwrap();
        assert!(c.worst() < 1e-8, "{c:?}");
    }

    #[test]
    fn too_many_modes_rejected() {
        assert!(matches!(FockSpace::new(9), Err(Error::TooLarge(9))));
        let p = DriveParams::ideal(5);
        assert!(oracle_propagator(&[p]).is_err());
    }

    #[test]
    fn majoranas_anticommute() {
        let s = FockSpace::new(3).unwrap();
        let d = s.dim();
        for a in 0..6 {
            for b in 0..6 {
                let ac = s.majorana(a) * s.majorana(b) + s.majorana(b) * s.majorana(a);
                let want = if a == b { CMat::identity(d, d) * Complex64::new(2.0, 0.0) } else { CMat::zeros(d, d) };
                assert!((ac - want).camax() < 1e-14);
            }
        }
    }

    #[test]
    fn vacuum_covariance_is_canonical() {
        let s = FockSpace::new(2).unwrap();
        let m = s.covariance(&s.vacuum());
        // c†c = 1/2 − (i/2)γ^αγ^β, so the vacuum has ⟨iγ^αγ^β⟩ = 1
        let mut want = Mat::zeros(4, 4);
        want[(0, 1)] = 1.0;
        want[(1, 0)] = -1.0;
        want[(2, 3)] = 1.0;
        want[(3, 2)] = -1.0;
        assert!((m.matrix() - want).amax() < 1e-14);
    }

    #[test]
    fn single_pair_hopping_closed_form() {
        // N=1, only J_intra: H₁ = −J(c†_B c_A + c†_A c_B); one-particle sector rotates by angle J/2.
        let mut p = DriveParams::zero(1);
        p.set(Field::HopIntra1, 1, Complex64::new(0.8, 0.0));
        let (s, u) = oracle_propagator(&[p]).unwrap();
        // basis |n_A n_B⟩ with A the most significant bit: |10⟩ = 2, |01⟩ = 1
        let t: f64 = 0.4;
        assert!((u[(2, 2)] - Complex64::new(t.cos(), 0.0)).norm() < 1e-14);
        assert!((u[(1, 2)] - Complex64::new(0.0, t.sin())).norm() < 1e-14);
        assert!((u[(0, 0)] - ONE).norm() < 1e-14);
        assert!((u[(3, 3)] - ONE).norm() < 1e-14);
        let par = s.parity();
        assert!((&par * &u - &u * &par).camax() < 1e-14);
    }

    #[test]
    fn ideal_heisenberg_map_matches_orthogonal_propagator() {
        let p = DriveParams::ideal(2);
        let (s, u) = oracle_propagator(std::slice::from_ref(&p)).unwrap();
        let o = floquet_propagator(&p).unwrap();
        assert!((s.heisenberg_map(&u) - o.o).amax() < 1e-10);
    }

    #[test]
    fn state_from_covariance_roundtrip() {
        let p = DriveParams::uniform(2, &Uniform::figure4());
        let (s, u) = oracle_propagator(&[p]).unwrap();
        let psi = &u * s.vacuum();
        let m = s.covariance(&psi);
        let back = s.state_from_covariance(m.matrix());
        assert!((psi.dotc(&back).norm() - 1.0).abs() < 1e-10);
    }
}
