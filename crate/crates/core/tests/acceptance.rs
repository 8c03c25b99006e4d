//! Acceptance criteria. Each test prints one PASS/FAIL line with its tolerance.

use std::io::Write;
use std::time::Instant;

use floquet_braid::evolve::{floquet_propagator, ideal_edge_modes, pinned_mode_counts, ModeLabel};
use floquet_braid::fockoracle::cross_check;
use floquet_braid::gaussian::{init_logical, LogicalLabel, SeededRng};
use floquet_braid::lattice::{DriveParams, Uniform};
use floquet_braid::logic::{
    cnot_two_wire, gate_from_braid, gates, readout, run_algorithm, Algorithm, Backend, BraidLibrary, CnotOutcomes, CnotWires,
};
use floquet_braid::protocols::{base_modes, braid_matrix, builtin_schedule, run, wilson_holonomy, FShape, RunOptions, ScheduleOptions, Sector};
use floquet_braid::topology::winding_uniform;

fn report(id: u32, title: &str, pass: bool, detail: String) {
    // Written to the raw handle so the line shows up without --nocapture.
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {id:>2} [{}] {title}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} failed: {detail}");
}

fn options(n_sites: usize, periods: usize) -> ScheduleOptions {
    let mut o = ScheduleOptions::new(n_sites, periods);
    o.n = 4;
    o.f_shape = FShape::Cosine;
    o
}

#[test]
fn c01_invariant_anchor() {
    let t = Instant::now();
    let w = winding_uniform(&Uniform::ideal(), 0.0, 0.0, 512).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let res = w.residuals.0.max(w.residuals.1);
    let pass = (w.nu0, w.nu_pi) == (2, 1) && res <= 1e-6 && secs < 1.0;
    report(1, "invariant anchor", pass, format!("(nu0, nu_pi) = ({}, {}), residual {res:.1e} <= 1e-6, {secs:.3} s < 1 s", w.nu0, w.nu_pi));
}

#[test]
fn c02_bulk_boundary() {
    let t = Instant::now();
    let n = 60;
    let ideal = Uniform::ideal().as_array();
    let caption = Uniform::figure4().as_array();
    let mut rng = SeededRng::new(2024);
    let mut mismatches = Vec::new();
    for draw in 0..20 {
        let mut v = ideal;
        for (x, (i, c)) in v.iter_mut().zip(ideal.iter().zip(caption)) {
            *x += (c - i).abs() * (2.0 * rng.uniform() - 1.0);
        }
        let u = Uniform::from_array(v);
        let w = winding_uniform(&u, 0.0, 0.0, 512).unwrap();
        let o = floquet_propagator(&DriveParams::uniform(n, &u)).unwrap();
        let (left, right) = pinned_mode_counts(&o, n);
        let want = (w.nu0 as usize, w.nu_pi as usize);
        if left != want || right != want {
            mismatches.push(format!("draw {draw}: {left:?}/{right:?} vs {want:?}"));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = mismatches.is_empty() && secs < 30.0;
    report(2, "bulk-boundary", pass, format!("20 draws at N = {n}, {} mismatches {mismatches:?}, {secs:.1} s < 30 s", mismatches.len()));
}

#[test]
fn c03_edge_mode_exactness() {
    let n = 20;
    let o = floquet_propagator(&DriveParams::ideal(n)).unwrap();
    let modes = ideal_edge_modes(n);
    let worst = ModeLabel::ALL
        .iter()
        .map(|&l| {
            let v = modes.get(l);
            let target = if l.is_pi() { -v } else { v.clone() };
            (o.apply(v) - target).amax()
        })
        .fold(0.0, f64::max);
    report(3, "edge-mode exactness", worst <= 1e-10, format!("max eigen-residual {worst:.1e} <= 1e-10"));
}

#[test]
fn c04_braiding_a() {
    let t = Instant::now();
    let n = 40;
    let params = DriveParams::uniform(n, &Uniform::figure4());
    let sched = builtin_schedule("braidA_left", &options(n, 400)).unwrap();
    let (p0, modes) = base_modes(&sched, &params).unwrap();
    let st = init_logical(LogicalLabel::Plus, &modes, &floquet_propagator(&p0).unwrap()).unwrap();
    let traj = run(&sched, &p0, Some(&st), &modes, RunOptions { splittings: false, stride: 100 }).unwrap();
    use ModeLabel::*;
    let c1 = traj.final_correlation(Zero1L, Zero2R).unwrap().abs();
    let c2 = traj.final_correlation(Zero2L, Zero1R).unwrap().abs();
    let diab = traj.metrics.diabatic_error;
    let secs = t.elapsed().as_secs_f64();
    let pass = c1 >= 0.999 && c2 >= 0.999 && diab <= 1e-3 && secs < 300.0;
    report(
        4,
        "braiding A",
        pass,
        format!("|<g01L g02R>| = {c1:.6}, |<g02L g01R>| = {c2:.6} >= 0.999, diabatic {diab:.1e} <= 1e-3, {secs:.1} s < 300 s"),
    );
}

#[test]
fn c05_braiding_b() {
    let n = 40;
    let params = DriveParams::uniform(n, &Uniform::figure4());
    let sched = builtin_schedule("braidB_left", &options(n, 400)).unwrap();
    let (p0, modes) = base_modes(&sched, &params).unwrap();
    let st = init_logical(LogicalLabel::Plus, &modes, &floquet_propagator(&p0).unwrap()).unwrap();
    let traj = run(&sched, &p0, Some(&st), &modes, RunOptions { splittings: false, stride: 100 }).unwrap();
    use ModeLabel::*;
    let c1 = traj.final_correlation(PiR, Zero2L).unwrap();
    let c2 = traj.final_correlation(PiL, Zero2R).unwrap();
    let dev = (1.0 - c1.abs()).max(1.0 - c2.abs());
    let ideal = braid_matrix(&sched, &DriveParams::ideal(n)).unwrap();
    let split = ideal.max_splitting;
    let pass = dev <= 1e-3 && split <= 1e-6;
    report(
        5,
        "braiding B",
        pass,
        format!("<g_piR g02L> = {c1:+.6}, <g_piL g02R> = {c2:+.6}, distance from +-1 {dev:.1e} <= 1e-3, ideal splitting {split:.1e} <= 1e-6"),
    );
}

#[test]
fn c06_gate_algebra() {
    let n = 12;
    let params = DriveParams::ideal(n);
    let gate = |name: &str| gate_from_braid(&braid_matrix(&builtin_schedule(name, &options(n, 200)).unwrap(), &params).unwrap()).unwrap();
    let (a, b, t) = (gate("braidA_left"), gate("braidB_left"), gate("tgate_left"));
    let z = gates::on_left(&gates::pauli_z());
    let x = gates::on_left(&gates::pauli_x());
    let d = [
        a.gate.pow(2).phase_distance(&z),
        b.gate.phase_distance(&gates::on_left(&gates::hz())),
        t.gate.pow(2).phase_distance(&b.gate),
        b.gate.pow(2).compose(&z).phase_distance(&x),
    ];
    let worst = d.iter().copied().fold(0.0, f64::max);
    report(
        6,
        "gate algebra",
        worst <= 1e-6,
        format!(
            "A^2~Z {:.1e}, B~HZ {:.1e}, T^2~B {:.1e}, B^2 Z~X {:.1e} <= 1e-6 (raw angle deviations A {:.1e}, B {:.1e}, T {:.1e})",
            d[0], d[1], d[2], d[3], a.deviation, b.deviation, t.deviation
        ),
    );
}

#[test]
fn c07_oracle_equivalence() {
    let t = Instant::now();
    let checks = [cross_check(2, 50, 7).unwrap(), cross_check(3, 50, 8).unwrap()];
    let secs = t.elapsed().as_secs_f64();
    let worst = checks.iter().map(|c| c.worst()).fold(0.0, f64::max);
    let pass = worst <= 1e-8 && secs < 60.0;
    report(
        7,
        "oracle equivalence",
        pass,
        format!(
            "N=2: map {:.1e} evol {:.1e} meas {:.1e}; N=3: map {:.1e} evol {:.1e} meas {:.1e}; <= 1e-8, {secs:.1} s < 60 s",
            checks[0].heisenberg, checks[0].evolution, checks[0].measurement, checks[1].heisenberg, checks[1].evolution, checks[1].measurement
        ),
    );
}

#[test]
fn c08_algorithms() {
    let backends = [Backend::LogicalMatrix, Backend::GaussianTrajectory(Box::new(BraidLibrary::build(40, 400).unwrap()))];
    let mut cases = Vec::new();
    for zbar in 0..4 {
        cases.push(Algorithm::Search { zbar });
    }
    for z in 0..4 {
        for k in 0..2 {
            cases.push(Algorithm::DeutschJozsa { z, k });
        }
    }
    let mut failures = Vec::new();
    for backend in &backends {
        for alg in cases.iter().copied() {
            let out = run_algorithm(alg, 2, backend).unwrap();
            let ok = match alg {
                Algorithm::Search { .. } => out.outcome_index == alg.expected(),
                Algorithm::DeutschJozsa { z, .. } => {
                    let want = if z == 0 { "constant" } else { "balanced" };
                    out.outcome_index == alg.expected() && out.classification.as_deref() == Some(want)
                }
            };
            if !ok {
                failures.push(format!("{}: {alg:?} -> {}", out.backend, out.outcome));
            }
        }
    }
    report(
        8,
        "algorithms",
        failures.is_empty(),
        format!("4 search + 8 Deutsch-Jozsa cases on logical_matrix and gaussian_trajectory (N = 40), failures {failures:?}"),
    );
}

#[test]
fn c09_cnot() {
    let w = CnotWires::new(&DriveParams::ideal(3)).unwrap();
    let table = [(LogicalLabel::L00, "00"), (LogicalLabel::L01, "11"), (LogicalLabel::L10, "10"), (LogicalLabel::L11, "01")];
    let mut wrong = Vec::new();
    let mut branches = [false; 2];
    for q in [[1i8, 1], [-1, -1], [1, -1], [-1, 1]] {
        for (input, want) in table {
            let run = cnot_two_wire(&w.prepare(input).unwrap(), &w, CnotOutcomes::Forced(q)).unwrap();
            branches[usize::from(run.p1 * run.p2 < 0)] = true;
            if run.output.as_deref() != Some(want) || !run.is_cnot {
                wrong.push(format!("{} with {q:?} -> {:?}", input.name(), run.output));
            }
        }
    }
    // Empirical branch frequencies against (1 + <Pi>)/2 over 10^3 shots per input.
    let shots = 1000;
    let mut worst_sigma: f64 = 0.0;
    for (input, want) in table {
        let st = w.prepare(input).unwrap();
        let mut plus = [0.0f64; 2];
        let mut mean = [0.0f64; 2];
        let mut var = [0.0f64; 2];
        for seed in 0..shots {
            let mut rng = SeededRng::new(seed);
            let run = cnot_two_wire(&st, &w, CnotOutcomes::Sample(&mut rng)).unwrap();
            if run.output.as_deref() != Some(want) {
                wrong.push(format!("{} seed {seed} -> {:?}", input.name(), run.output));
            }
            for (k, r) in run.records.iter().enumerate() {
                let p_plus = if r.outcome > 0 { r.probability } else { 1.0 - r.probability };
                plus[k] += if r.outcome > 0 { 1.0 } else { 0.0 };
                mean[k] += p_plus;
                var[k] += p_plus * (1.0 - p_plus);
            }
        }
        for k in 0..2 {
            let dev = (plus[k] - mean[k]).abs();
            let sigma = var[k].sqrt();
            let z = if sigma > 0.0 { dev / sigma } else if dev < 1e-9 { 0.0 } else { f64::INFINITY };
            worst_sigma = worst_sigma.max(z);
        }
    }
    let pass = wrong.is_empty() && branches == [true, true] && worst_sigma <= 3.0;
    report(
        9,
        "CNOT",
        pass,
        format!("truth table on 4 inputs, both p1p2 branches, errors {wrong:?}; {shots} shots per input, worst deviation {worst_sigma:.2} sigma <= 3"),
    );
}

#[test]
fn c10_holonomy() {
    let n = 40;
    // Off the ideal point braidA picks up a small converged rotation within the zero sector.
    let params = DriveParams::ideal(n);
    let sched = builtin_schedule("braidA_left", &options(n, 200)).unwrap();
    let h = wilson_holonomy(&sched, &params, Sector::Zero).unwrap();
    let rep = braid_matrix(&sched, &params).unwrap();
    let mut diff: f64 = 0.0;
    for (i, a) in h.labels.iter().enumerate() {
        for (j, b) in h.labels.iter().enumerate() {
            diff = diff.max((h.w[(i, j)] - rep.overlap(*a, *b)).abs());
        }
    }
    let pass = diff <= 1e-2 && h.berry_diagnostic <= 1e-3;
    report(
        10,
        "holonomy",
        pass,
        format!("ideal point, N = 40, 200 samples/step, |W - R| = {diff:.1e} <= 1e-2, Berry diagnostic {:.1e} <= 1e-3", h.berry_diagnostic),
    );
}

#[test]
fn c11_readout() {
    let params = DriveParams::ideal(40);
    let on = readout(&params, 0.1, 0.05).unwrap();
    let off = readout(&params, 0.0, 0.0).unwrap();
    let spread = off.distinguishability.iter().flatten().copied().fold(0.0, f64::max);
    let pass = on.distinct() && off.degenerate();
    report(
        11,
        "readout",
        pass,
        format!(
            "offsets {:?}, min separation {:.2e} > 10 x {:.0e}; unbroken spread {spread:.1e} <= {:.0e}",
            on.offsets, on.min_separation, on.tolerance, off.tolerance
        ),
    );
}
