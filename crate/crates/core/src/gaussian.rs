//! Pure fermionic Gaussian states as Majorana covariance matrices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolve::{EdgeModeSet, ModeLabel, OrthogonalPropagator};
use crate::linalg::{eigh, pfaffian, wedge, Mat, Vector};

/// M_ab = ⟨(i/2)[γ_a, γ_b]⟩.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceState {
    m: Mat,
}

/// Seeded generator for measurement outcomes.
pub struct SeededRng {
    seed: u64,
    rng: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }
}

/// How a measurement outcome is chosen.
pub enum Choice<'a> {
    Forced(i8),
    Sample(&'a mut SeededRng),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasurementRecord {
    pub label: String,
    pub outcome: i8,
    /// Probability of the realized (or forced) branch.
    pub probability: f64,
    pub seed: Option<u64>,
    pub forced: bool,
}

/// Logical basis and the |+⟩ product state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum LogicalLabel {
    L00,
    L01,
    L10,
    L11,
    Plus,
}

impl LogicalLabel {
    pub const BASIS: [LogicalLabel; 4] = [LogicalLabel::L00, LogicalLabel::L01, LogicalLabel::L10, LogicalLabel::L11];

    /// (P₀^L, P_π, P₀^R) of the basis states; |n₀ᴸ n_π n₀ᴿ⟩ = |000⟩, |011⟩, |110⟩, |101⟩.
    pub fn parities(self) -> Option<[f64; 3]> {
        match self {
            LogicalLabel::L00 => Some([1.0, 1.0, 1.0]),
            LogicalLabel::L01 => Some([1.0, -1.0, -1.0]),
            LogicalLabel::L10 => Some([-1.0, -1.0, 1.0]),
            LogicalLabel::L11 => Some([-1.0, 1.0, -1.0]),
            LogicalLabel::Plus => None,
        }
    }

    pub fn index(self) -> Option<usize> {
        Self::BASIS.iter().position(|&l| l == self)
    }

    pub fn name(self) -> &'static str {
        match self {
            LogicalLabel::L00 => "00",
            LogicalLabel::L01 => "01",
            LogicalLabel::L10 => "10",
            LogicalLabel::L11 => "11",
            LogicalLabel::Plus => "+",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        let s = s.trim_start_matches('|').trim_end_matches('>').trim_end_matches('⟩');
        [LogicalLabel::L00, LogicalLabel::L01, LogicalLabel::L10, LogicalLabel::L11, LogicalLabel::Plus]
            .into_iter()
            .find(|l| l.name() == s)
    }
}

/// The three parity pairs (P₀^L, P_π, P₀^R).
pub const PARITY_PAIRS: [(ModeLabel, ModeLabel); 3] = [
    (ModeLabel::Zero1L, ModeLabel::Zero2L),
    (ModeLabel::PiL, ModeLabel::PiR),
    (ModeLabel::Zero1R, ModeLabel::Zero2R),
];

impl CovarianceState {
    pub fn from_matrix(m: Mat) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() % 2 == 1 {
            return Err(Error::InvalidInput("covariance must be square with even dimension".into()));
        }
        if (&m + m.transpose()).amax() > 1e-10 {
            return Err(Error::InvalidInput("covariance must be antisymmetric".into()));
        }
        Ok(Self { m })
    }

    pub fn from_matrix_unchecked(m: Mat) -> Self {
        Self { m }
    }

    /// Fock vacuum: ⟨iγ^α_m γ^β_m⟩ = 1 for every mode.
    pub fn vacuum(dim: usize) -> Self {
        let mut m = Mat::zeros(dim, dim);
        for k in 0..dim / 2 {
            m[(2 * k, 2 * k + 1)] = 1.0;
            m[(2 * k + 1, 2 * k)] = -1.0;
        }
        Self { m }
    }

    pub fn matrix(&self) -> &Mat {
        &self.m
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn direct_sum(parts: &[CovarianceState]) -> Self {
        let dim = parts.iter().map(|p| p.dim()).sum();
        let mut m = Mat::zeros(dim, dim);
        let mut off = 0;
        for p in parts {
            let d = p.dim();
            m.view_mut((off, off), (d, d)).copy_from(&p.m);
            off += d;
        }
        Self { m }
    }

    /// ‖M² + I‖_max, zero for pure states.
    pub fn purity_defect(&self) -> f64 {
        let n = self.dim();
        (&self.m * &self.m + Mat::identity(n, n)).amax()
    }

    /// Global fermion parity, the sign of Pf(M).
    pub fn total_parity(&self) -> f64 {
        pfaffian(&self.m).signum()
    }

    /// M → O M Oᵀ.
    pub fn evolve(&self, o: &OrthogonalPropagator) -> Self {
        Self { m: &o.o * &self.m * o.o.transpose() }
    }

    /// ⟨i γ_v γ_w⟩ = vᵀ M w.
    pub fn correlation(&self, v: &Vector, w: &Vector) -> f64 {
        v.dot(&(&self.m * w))
    }

    /// Applies exp(θ γ_a γ_b) for orthonormal a, b.
    ///
    /// Under this unitary γ_a → cos2θ γ_a + sin2θ γ_b, so the state transforms
    /// with R = I + (cos2θ − 1)(aaᵀ + bbᵀ) + sin2θ (abᵀ − baᵀ).
    pub fn apply_pair_rotation(&self, theta: f64, a: &Vector, b: &Vector) -> Self {
        let n = self.dim();
        let (s, c) = (2.0 * theta).sin_cos();
        let r = Mat::identity(n, n) + (a * a.transpose() + b * b.transpose()) * (c - 1.0) + wedge(a, b) * s;
        Self { m: &r * &self.m * r.transpose() }
    }

    /// Projective measurement of i γ_a γ_b (a ⊥ b, unit vectors).
    pub fn measure_parity(&self, a: &Vector, b: &Vector, choice: Choice<'_>) -> Result<(MeasurementRecord, Self)> {
        self.measure_parity_labeled(a, b, choice, "pair")
    }

    pub fn measure_parity_labeled(
        &self,
        a: &Vector,
        b: &Vector,
        choice: Choice<'_>,
        label: &str,
    ) -> Result<(MeasurementRecord, Self)> {
        if a.dot(b).abs() > 1e-8 {
            return Err(Error::InvalidInput("measured modes must be orthogonal".into()));
        }
        let c = self.correlation(a, b).clamp(-1.0, 1.0);
        let (outcome, seed, forced) = match choice {
            Choice::Forced(p) => (if p >= 0 { 1i8 } else { -1i8 }, None, true),
            Choice::Sample(rng) => {
                let p_plus = (1.0 + c) / 2.0;
                let o = if rng.uniform() < p_plus { 1 } else { -1 };
                (o, Some(rng.seed()), false)
            }
        };
        let p = f64::from(outcome);
        let prob = (1.0 + p * c) / 2.0;
        if prob < 1e-12 {
            return Err(Error::ZeroProbabilityBranch(prob));
        }
        let record = MeasurementRecord { label: label.to_string(), outcome, probability: prob, seed, forced };
        Ok((record, self.project(a, b, p)))
    }

    /// Gaussian projection onto i γ_a γ_b = p.
    fn project(&self, a: &Vector, b: &Vector, p: f64) -> Self {
        let n = self.dim();
        let m = &self.m;
        let u = m * a;
        let w = m * b;
        let denom = 1.0 + p * a.dot(&w);
        let q = Mat::identity(n, n) - a * a.transpose() - b * b.transpose();
        let inner = m + (&w * u.transpose() - &u * w.transpose()) * (p / denom);
        let mut out = &q * inner * &q + wedge(a, b) * p;
        out = (&out - out.transpose()) * 0.5;
        Self { m: out }
    }

    /// Measures (iγ_aγ_b)(iγ_cγ_d) when the second factor is already definite.
    ///
    /// The product is then Gaussian-reducible: outcome q fixes iγ_aγ_b = q·⟨iγ_cγ_d⟩.
    pub fn measure_parity_product(
        &self,
        first: (&Vector, &Vector),
        second: (&Vector, &Vector),
        choice: Choice<'_>,
        label: &str,
    ) -> Result<(MeasurementRecord, Self)> {
        let s2 = self.correlation(second.0, second.1);
        if (s2.abs() - 1.0).abs() > 1e-8 {
            return Err(Error::NonGaussian(format!("second factor has ⟨P⟩ = {s2:.3e}, not ±1")));
        }
        let s2 = s2.signum();
        let choice = match choice {
            Choice::Forced(q) => Choice::Forced(if f64::from(q) * s2 >= 0.0 { 1 } else { -1 }),
            other => other,
        };
        let (mut rec, state) = self.measure_parity_labeled(first.0, first.1, choice, label)?;
        rec.outcome = if f64::from(rec.outcome) * s2 >= 0.0 { 1 } else { -1 };
        Ok((rec, state))
    }

    /// Dense matrix in NPY v1.0 layout (little-endian f64, C order).
    pub fn to_npy(&self) -> Vec<u8> {
        let n = self.dim();
        let mut header = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': ({n}, {n}), }}");
        let total = 10 + header.len() + 1;
        let pad = (64 - total % 64) % 64;
        header.push_str(&" ".repeat(pad));
        header.push('\n');
        let mut out = Vec::with_capacity(10 + header.len() + 8 * n * n);
        out.extend_from_slice(b"\x93NUMPY\x01\x00");
        out.extend_from_slice(&(header.len() as u16).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        for i in 0..n {
            for j in 0..n {
                out.extend_from_slice(&self.m[(i, j)].to_le_bytes());
            }
        }
        out
    }

    /// Metadata accompanying `to_npy`.
    pub fn metadata_json(&self, n_sites: usize) -> String {
        let wires = self.dim() / (4 * n_sites);
        serde_json::json!({
            "N": n_sites,
            "W": wires,
            "ordering": "((wire*N + site-1)*2 + sublattice)*2 + species",
            "convention": "M_ab = <(i/2)[g_a, g_b]>",
        })
        .to_string()
    }
}

/// Edge-sector pairings (a, b, ⟨iγ_aγ_b⟩) defining a logical state.
pub fn logical_pairings(label: LogicalLabel) -> Vec<(ModeLabel, ModeLabel, f64)> {
    match label.parities() {
        Some(p) => PARITY_PAIRS.iter().zip(p).map(|(&(a, b), s)| (a, b, s)).collect(),
        None => vec![
            (ModeLabel::Zero1L, ModeLabel::Zero1R, 1.0),
            (ModeLabel::Zero2L, ModeLabel::Zero2R, 1.0),
            (ModeLabel::PiR, ModeLabel::PiL, 1.0),
        ],
    }
}

/// Pure state realizing `label` on the edge modes, with the bulk filled as
/// the ground state of the Floquet generator's antisymmetric part.
pub fn init_logical(label: LogicalLabel, modes: &EdgeModeSet, o: &OrthogonalPropagator) -> Result<CovarianceState> {
    let dim = modes.dim();
    if o.dim() != dim {
        return Err(Error::IncompatibleModes(format!("mode length {dim} vs propagator {}", o.dim())));
    }
    let e = modes.matrix();
    if (e.transpose() * &e - Mat::identity(6, 6)).amax() > 1e-8 {
        return Err(Error::IncompatibleModes("edge modes are not orthonormal".into()));
    }
    for l in ModeLabel::ALL {
        let v = modes.get(l);
        let target = if l.is_pi() { -v } else { v.clone() };
        let r = (o.apply(v) - target).amax();
        if r > 1e-6 {
            return Err(Error::IncompatibleModes(format!("{} is not pinned (residual {r:.2e})", l.name())));
        }
    }
    let mut m = Mat::zeros(dim, dim);
    for (a, b, s) in logical_pairings(label) {
        m += wedge(modes.get(a), modes.get(b)) * s;
    }
    m += bulk_completion(&e, o);
    Ok(CovarianceState { m })
}

fn bulk_completion(edge: &Mat, o: &OrthogonalPropagator) -> Mat {
    let dim = edge.nrows();
    let proj = Mat::identity(dim, dim) - edge * edge.transpose();
    let (vals, vecs) = eigh(&proj);
    let keep: Vec<usize> = (0..dim).filter(|&i| vals[i] > 0.5).collect();
    let p = Mat::from_columns(&keep.iter().map(|&i| vecs.column(i).into_owned()).collect::<Vec<_>>());
    let k = (&o.o - o.o.transpose()) * 0.5;
    let kb = p.transpose() * k * &p;
    let x = kb.transpose() * &kb;
    let (lam, v) = eigh(&x);
    let nb = kb.nrows();
    let mut inv_sqrt = Mat::zeros(nb, nb);
    let mut null: Vec<Vector> = Vec::new();
    for (i, &l) in lam.iter().enumerate() {
        let col = v.column(i).into_owned();
        if l > 1e-10 {
            inv_sqrt += &col * col.transpose() / l.sqrt();
        } else {
            null.push(col);
        }
    }
    let mut mb = &kb * inv_sqrt;
    for pair in null.chunks(2) {
        if let [a, b] = pair {
            mb += wedge(a, b);
        }
    }
    &p * mb * p.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::{floquet_propagator, ideal_edge_modes};
    use crate::fockoracle::FockSpace;
    use crate::lattice::DriveParams;
    use proptest::prelude::*;

    fn ideal(n: usize) -> (EdgeModeSet, OrthogonalPropagator) {
        (ideal_edge_modes(n), floquet_propagator(&DriveParams::ideal(n)).unwrap())
    }

    #[test]
    fn plus_state_correlations() {
        let (e, o) = ideal(6);
        let s = init_logical(LogicalLabel::Plus, &e, &o).unwrap();
        use ModeLabel::*;
        assert!((s.correlation(e.get(Zero1L), e.get(Zero1R)) - 1.0).abs() < 1e-12);
        assert!((s.correlation(e.get(Zero2L), e.get(Zero2R)) - 1.0).abs() < 1e-12);
        assert!((s.correlation(e.get(PiR), e.get(PiL)) - 1.0).abs() < 1e-12);
        assert!(s.correlation(e.get(Zero1L), e.get(Zero2R)).abs() < 1e-12);
        assert!(s.correlation(e.get(Zero1L), e.get(Zero2L)).abs() < 1e-12);
        assert!(s.correlation(e.get(Zero1L), e.get(Zero1L)).abs() < 1e-15);
    }

    #[test]
    fn basis_states_are_pure_with_expected_parities() {
        let (e, o) = ideal(5);
        for label in LogicalLabel::BASIS {
            let s = init_logical(label, &e, &o).unwrap();
            assert!(s.purity_defect() < 1e-10, "{label:?}");
            let want = label.parities().unwrap();
            for (k, (a, b)) in PARITY_PAIRS.iter().enumerate() {
                assert!((s.correlation(e.get(*a), e.get(*b)) - want[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn init_rejects_wrong_propagator() {
        let (e, _) = ideal(4);
        // identity keeps the π modes at +1
        let o = OrthogonalPropagator::identity(16);
        assert!(matches!(init_logical(LogicalLabel::L00, &e, &o), Err(Error::IncompatibleModes(_))));
        let o = OrthogonalPropagator::identity(12);
        assert!(matches!(init_logical(LogicalLabel::L00, &e, &o), Err(Error::IncompatibleModes(_))));
        let mut p = DriveParams::ideal(4);
        p.mu1 = 0.3;
        let o = floquet_propagator(&p).unwrap();
        assert!(matches!(init_logical(LogicalLabel::L00, &e, &o), Err(Error::IncompatibleModes(_))));
    }

    #[test]
    fn measuring_definite_pair_is_trivial_and_idempotent() {
        let s = CovarianceState::vacuum(6);
        let a = Vector::from_fn(6, |i, _| if i == 2 { 1.0 } else { 0.0 });
        let b = Vector::from_fn(6, |i, _| if i == 3 { 1.0 } else { 0.0 });
        let (rec, s2) = s.measure_parity(&a, &b, Choice::Sample(&mut SeededRng::new(1))).unwrap();
        assert_eq!(rec.outcome, 1);
        assert!((rec.probability - 1.0).abs() < 1e-15);
        assert!((s2.matrix() - s.matrix()).amax() < 1e-14);
        assert!(matches!(s.measure_parity(&a, &b, Choice::Forced(-1)), Err(Error::ZeroProbabilityBranch(_))));
    }

    #[test]
    fn measurement_matches_fock_projection() {
        let n = 3;
        let space = FockSpace::new(2 * n).unwrap();
        let p = DriveParams::uniform(n, &crate::lattice::Uniform::figure4());
        let (_, u) = crate::fockoracle::oracle_propagator(&[p]).unwrap();
        let psi = &u * &u * space.vacuum();
        let state = space.covariance(&psi);
        let dim = 4 * n;
        let a = Vector::from_fn(dim, |i, _| if i == 1 { 1.0 } else { 0.0 });
        let b = Vector::from_fn(dim, |i, _| ((i * 7 + 3) % 5) as f64 - 2.0);
        let b = {
            let b = &b - &a * a.dot(&b);
            &b / b.norm()
        };
        for p in [1i8, -1] {
            let (rec, g) = state.measure_parity(&a, &b, Choice::Forced(p)).unwrap();
            let (phi, prob) = space.project_parity(&psi, &a, &b, f64::from(p));
            assert!((rec.probability - prob).abs() < 1e-10);
            assert!((g.matrix() - space.covariance(&phi).matrix()).amax() < 1e-8);
            assert!(g.purity_defect() < 1e-8);
            let (_, again) = g.measure_parity(&a, &b, Choice::Forced(p)).unwrap();
            assert!((again.matrix() - g.matrix()).amax() < 1e-12);
        }
    }

    #[test]
    fn pair_rotation_matches_fock() {
        let space = FockSpace::new(3).unwrap();
        let a = Vector::from_fn(6, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let b = Vector::from_fn(6, |i, _| if i == 3 { 1.0 } else { 0.0 });
        let u = space.pair_rotation(0.37, &a, &b);
        let psi = &u * space.vacuum();
        let g = CovarianceState::vacuum(6).apply_pair_rotation(0.37, &a, &b);
        assert!((g.matrix() - space.covariance(&psi).matrix()).amax() < 1e-12);
    }

    #[test]
    fn sampling_statistics() {
        // state with ⟨iγ0γ1⟩ = cos(2θ) after rotating γ1 into γ2
        let a = Vector::from_fn(4, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let b = Vector::from_fn(4, |i, _| if i == 1 { 1.0 } else { 0.0 });
        let c = Vector::from_fn(4, |i, _| if i == 2 { 1.0 } else { 0.0 });
        let s = CovarianceState::vacuum(4).apply_pair_rotation(0.4, &b, &c);
        let expect = s.correlation(&a, &b);
        let p_plus = (1.0 + expect) / 2.0;
        let trials = 10_000;
        let mut rng = SeededRng::new(2024);
        let plus = (0..trials)
            .filter(|_| s.measure_parity(&a, &b, Choice::Sample(&mut rng)).unwrap().0.outcome == 1)
            .count();
        let sigma = (p_plus * (1.0 - p_plus) / trials as f64).sqrt();
        assert!((plus as f64 / trials as f64 - p_plus).abs() < 3.0 * sigma);
    }

    #[test]
    fn npy_header_is_aligned() {
        let bytes = CovarianceState::vacuum(4).to_npy();
        let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((10 + hlen) % 64, 0);
        assert_eq!(bytes.len(), 10 + hlen + 8 * 16);
    }

    fn random_orthogonal(vals: &[f64], n: usize) -> OrthogonalPropagator {
        let mut a = Mat::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                a[(i, j)] = vals[k % vals.len()];
                a[(j, i)] = -vals[k % vals.len()];
                k += 1;
            }
        }
        OrthogonalPropagator { o: crate::linalg::expm_antisymmetric(&a, 1.0) }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn evolution_preserves_purity_and_parity(vals in proptest::collection::vec(-2.0f64..2.0, 28)) {
            let o = random_orthogonal(&vals, 8);
            let s = CovarianceState::vacuum(8);
            let t = s.evolve(&o);
            prop_assert!(t.purity_defect() < 1e-10);
            prop_assert!((&t.m + t.m.transpose()).amax() < 1e-12);
            prop_assert_eq!(t.total_parity(), s.total_parity());
            let sv = t.m.clone().singular_values();
            prop_assert!(sv.max() <= 1.0 + 1e-9);
        }

        #[test]
        fn measurements_keep_states_pure(vals in proptest::collection::vec(-2.0f64..2.0, 28), p in prop_oneof![Just(1i8), Just(-1i8)]) {
            let o = random_orthogonal(&vals, 8);
            let s = CovarianceState::vacuum(8).evolve(&o);
            let a = Vector::from_fn(8, |i, _| if i == 0 { 1.0 } else { 0.0 });
            let b = Vector::from_fn(8, |i, _| if i == 5 { 1.0 } else { 0.0 });
            if let Ok((_, t)) = s.measure_parity(&a, &b, Choice::Forced(p)) {
                prop_assert!(t.purity_defect() < 1e-8);
                prop_assert!((t.correlation(&a, &b) - f64::from(p)).abs() < 1e-10);
            }
        }
    }
}
