//! Adiabatic parameter schedules, stroboscopic driving, braid reports and Wilson lines.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{
    adiabaticity_metrics, edge_modes, floquet_propagator, nearest_edge_modes, sector_splittings, AdiabaticityMetrics,
    EdgeModeSet, ModeLabel, OrthogonalPropagator,
};
use crate::gaussian::CovarianceState;
use crate::lattice::{DriveParams, Field};
use crate::linalg::{eigh, procrustes, Mat, Vector};

/// What an assignment writes to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    Coupling { field: Field, site: usize },
    BiasA { site: usize },
    BiasB { site: usize },
    Mu1,
    Mu2,
}

/// value(u) = constant + cos·cos φ + sin·sin φ + f·f(s), coefficients as [re, im].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct Curve {
    #[serde(default)]
    pub constant: [f64; 2],
    #[serde(default)]
    pub cos: [f64; 2],
    #[serde(default)]
    pub sin: [f64; 2],
    #[serde(default)]
    pub f: [f64; 2],
}

fn cx(z: [f64; 2]) -> Complex64 {
    Complex64::new(z[0], z[1])
}

impl Curve {
    fn real(constant: f64, cos: f64, sin: f64, f: f64) -> Self {
        Curve { constant: [constant, 0.0], cos: [cos, 0.0], sin: [sin, 0.0], f: [f, 0.0] }
    }

    pub fn eval(&self, b: Basis) -> Complex64 {
        cx(self.constant) + cx(self.cos) * b.cos + cx(self.sin) * b.sin + cx(self.f) * b.f
    }

    /// −conj of every coefficient.
    fn neg_conj(self) -> Self {
        let m = |z: [f64; 2]| [-z[0], z[1]];
        Curve { constant: m(self.constant), cos: m(self.cos), sin: m(self.sin), f: m(self.f) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub target: Target,
    pub curve: Curve,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cadence {
    EveryPeriod,
    EveryOtherPeriod,
}

/// Progress reparametrization applied before φ = (π/2)·r(u).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ramp {
    #[default]
    Linear,
    Smoothstep,
}

impl Ramp {
    pub fn apply(self, u: f64) -> f64 {
        match self {
            Ramp::Linear => u,
            Ramp::Smoothstep => u * u * (3.0 - 2.0 * u),
        }
    }
}

/// Shape of f(s), monotone from −1 (s = 1) to 1 (s = 0).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FShape {
    #[default]
    Cosine,
    Linear,
}

impl FShape {
    pub fn eval(self, s: f64) -> f64 {
        match self {
            FShape::Cosine => (s * PI).cos(),
            FShape::Linear => 1.0 - 2.0 * s,
        }
    }
}

/// Basis functions at one progress value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Basis {
    pub cos: f64,
    pub sin: f64,
    pub f: f64,
}

impl Basis {
    pub fn at(u: f64, ramp: Ramp, shape: FShape) -> Self {
        let r = ramp.apply(u);
        let phi = FRAC_PI_2 * r;
        Basis { cos: phi.cos(), sin: phi.sin(), f: shape.eval(1.0 - r) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleStep {
    pub name: String,
    /// Periods spent in this step.
    pub duration: usize,
    pub cadence: Cadence,
    #[serde(default)]
    pub ramp: Ramp,
    pub assignments: Vec<Assignment>,
}

impl ScheduleStep {
    /// (u, periods held) for each parameter update.
    pub fn samples(&self) -> Vec<(f64, usize)> {
        match self.cadence {
            Cadence::EveryPeriod => (0..self.duration).map(|m| ((m + 1) as f64 / self.duration as f64, 1)).collect(),
            Cadence::EveryOtherPeriod => {
                let k = self.duration / 2;
                (0..k).map(|m| ((m + 1) as f64 / k as f64, 2)).collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub name: String,
    pub n_sites: usize,
    pub steps: Vec<ScheduleStep>,
    pub closed: bool,
    #[serde(default)]
    pub f_shape: FShape,
    /// The pair of edge modes the schedule is expected to rotate.
    #[serde(default)]
    pub active: Option<(ModeLabel, ModeLabel)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleOptions {
    pub n_sites: usize,
    /// Site offset of the second protocol.
    pub n: usize,
    pub periods_per_step: usize,
    pub f_shape: FShape,
    pub ramp: Ramp,
    pub mu1: f64,
    pub mu2: f64,
}

impl ScheduleOptions {
    pub fn new(n_sites: usize, periods_per_step: usize) -> Self {
        Self { n_sites, n: 4, periods_per_step, f_shape: FShape::Cosine, ramp: Ramp::Linear, mu1: 0.1, mu2: 0.05 }
    }
}

pub const BUILTIN_NAMES: [&str; 7] =
    ["braidA_left", "braidA_right", "braidB_left", "braidB_right", "tgate_left", "tgate_right", "readout"];

fn read(p: &DriveParams, t: Target) -> Complex64 {
    match t {
        Target::Coupling { field, site } => p.get(field, site),
        Target::BiasA { site } => Complex64::new(p.bias_a[site - 1], 0.0),
        Target::BiasB { site } => Complex64::new(p.bias_b[site - 1], 0.0),
        Target::Mu1 => Complex64::new(p.mu1, 0.0),
        Target::Mu2 => Complex64::new(p.mu2, 0.0),
    }
}

fn write(p: &mut DriveParams, t: Target, v: Complex64) {
    match t {
        Target::Coupling { field, site } => p.set(field, site, v),
        Target::BiasA { site } => p.bias_a[site - 1] = v.re,
        Target::BiasB { site } => p.bias_b[site - 1] = v.re,
        Target::Mu1 => p.mu1 = v.re,
        Target::Mu2 => p.mu2 = v.re,
    }
}

impl Schedule {
    pub fn total_periods(&self) -> usize {
        self.steps.iter().map(|s| s.duration).sum()
    }

    pub fn basis(&self, step: &ScheduleStep, u: f64) -> Basis {
        Basis::at(u, step.ramp, self.f_shape)
    }

    pub fn check_targets(&self, params: &DriveParams) -> Result<()> {
        if params.n_sites != self.n_sites {
            return Err(Error::InvalidInput(format!("schedule for N = {} applied to N = {}", self.n_sites, params.n_sites)));
        }
        for step in &self.steps {
            if step.duration == 0 || step.duration % 2 == 1 {
                return Err(Error::OddDuration { name: step.name.clone(), duration: step.duration });
            }
            for a in &step.assignments {
                let ok = match a.target {
                    Target::Coupling { field, site } => site >= 1 && site <= self.n_sites && !(field.is_inter() && site == self.n_sites),
                    Target::BiasA { site } | Target::BiasB { site } => site >= 1 && site <= self.n_sites,
                    _ => true,
                };
                if !ok {
                    return Err(Error::InvalidInput(format!("step `{}` targets a missing site: {:?}", step.name, a.target)));
                }
                if !matches!(a.target, Target::Coupling { .. }) {
                    let v = [a.curve.constant, a.curve.cos, a.curve.sin, a.curve.f];
                    if v.iter().any(|z| z[1] != 0.0) {
                        return Err(Error::InvalidInput("bias and chemical potentials must be real".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Sets every touched entry to its final value, so closed runs start at the loop's base point.
    pub fn anchor(&self, params: &DriveParams) -> Result<DriveParams> {
        self.check_targets(params)?;
        let mut p = params.clone();
        if !self.closed {
            return Ok(p);
        }
        for step in &self.steps {
            let b = self.basis(step, 1.0);
            for a in &step.assignments {
                write(&mut p, a.target, a.curve.eval(b));
            }
        }
        Ok(p)
    }

    /// Checks continuity between steps and, for closed schedules, loop closure.
    pub fn validate(&self, params: &DriveParams) -> Result<()> {
        let start = self.anchor(params)?;
        let mut running = start.clone();
        let mut touched: Vec<Target> = Vec::new();
        for step in &self.steps {
            let b0 = self.basis(step, 0.0);
            for a in &step.assignments {
                let gap = (a.curve.eval(b0) - read(&running, a.target)).norm();
                if gap > 1e-9 {
                    let first = !touched.contains(&a.target);
                    if first && self.closed {
                        return Err(Error::NotClosed(gap));
                    }
                    if !first {
                        return Err(Error::InvalidInput(format!("step `{}` jumps {:?} by {gap:.2e}", step.name, a.target)));
                    }
                }
                touched.push(a.target);
            }
            let b1 = self.basis(step, 1.0);
            for a in &step.assignments {
                write(&mut running, a.target, a.curve.eval(b1));
            }
        }
        if self.closed {
            let d = running.max_abs_diff(&start);
            if d > 1e-12 {
                return Err(Error::NotClosed(d));
            }
        }
        Ok(())
    }

    /// Walks every parameter update: (step index, u, params, periods held).
    pub fn walk(&self, params: &DriveParams, mut visit: impl FnMut(usize, f64, &DriveParams, usize) -> Result<()>) -> Result<DriveParams> {
        let mut p = self.anchor(params)?;
        for (si, step) in self.steps.iter().enumerate() {
            for (u, hold) in step.samples() {
                let b = self.basis(step, u);
                for a in &step.assignments {
                    write(&mut p, a.target, a.curve.eval(b));
                }
                visit(si, u, &p, hold)?;
            }
        }
        Ok(p)
    }

    /// Reflected copy acting on the right edge.
    pub fn mirrored(&self, name: &str) -> Schedule {
        let n = self.n_sites;
        let mut out = self.clone();
        out.name = name.to_string();
        for step in &mut out.steps {
            for a in &mut step.assignments {
                a.target = match a.target {
                    Target::Coupling { field, site } => {
                        let s = if field.is_inter() { n - site } else { n + 1 - site };
                        Target::Coupling { field, site: s }
                    }
                    Target::BiasA { site } => Target::BiasB { site: n + 1 - site },
                    Target::BiasB { site } => Target::BiasA { site: n + 1 - site },
                    t => t,
                };
                if let Target::Coupling { field: Field::PairIntra2 | Field::PairInter2, .. } = a.target {
                    a.curve = a.curve.neg_conj();
                }
            }
        }
        out.active = self.active.map(|(a, b)| (mirror_label(a), mirror_label(b)));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("schedule JSON: {e}")))
    }
}

fn mirror_label(l: ModeLabel) -> ModeLabel {
    match l {
        ModeLabel::Zero1L => ModeLabel::Zero1R,
        ModeLabel::Zero2L => ModeLabel::Zero2R,
        ModeLabel::PiL => ModeLabel::PiR,
        ModeLabel::Zero1R => ModeLabel::Zero1L,
        ModeLabel::Zero2R => ModeLabel::Zero2L,
        ModeLabel::PiR => ModeLabel::PiL,
    }
}

struct StepBuilder {
    name: String,
    duration: usize,
    cadence: Cadence,
    ramp: Ramp,
    assignments: Vec<Assignment>,
}

impl StepBuilder {
    fn new(name: &str, opts: &ScheduleOptions) -> Self {
        Self {
            name: name.into(),
            duration: opts.periods_per_step,
            cadence: Cadence::EveryPeriod,
            ramp: opts.ramp,
            assignments: Vec::new(),
        }
    }

    fn every_other(mut self) -> Self {
        self.cadence = Cadence::EveryOtherPeriod;
        self
    }

    fn set(mut self, field: Field, site: usize, curve: Curve) -> Self {
        self.assignments.push(Assignment { target: Target::Coupling { field, site }, curve });
        self
    }

    fn set_target(mut self, target: Target, curve: Curve) -> Self {
        self.assignments.push(Assignment { target, curve });
        self
    }

    fn build(self) -> ScheduleStep {
        ScheduleStep { name: self.name, duration: self.duration, cadence: self.cadence, ramp: self.ramp, assignments: self.assignments }
    }
}

use Field::{
    HopInter1 as JInter, HopInter2 as SmallJInter, HopIntra1 as JIntra, HopIntra2 as SmallJIntra, PairInter1 as DInter,
    PairInter2 as SmallDInter, PairIntra1 as DIntra, PairIntra2 as SmallDIntra,
};

fn r(constant: f64, cos: f64, sin: f64) -> Curve {
    Curve::real(constant, cos, sin, 0.0)
}

fn braid_a(opts: &ScheduleOptions) -> Vec<ScheduleStep> {
    let h = FRAC_PI_2;
    vec![
        StepBuilder::new("A1", opts)
            .set(SmallJInter, 1, r(PI, PI, 0.0))
            .set(SmallDInter, 1, r(-PI, PI, 0.0))
            .set(SmallJIntra, 1, r(0.0, 0.0, PI))
            .set(SmallDIntra, 1, r(0.0, 0.0, PI))
            .build(),
        StepBuilder::new("A2", opts)
            .set(SmallJInter, 1, r(0.0, PI, 0.0))
            .set(SmallDInter, 1, r(0.0, -PI, 0.0))
            .set(SmallJIntra, 1, r(PI, 0.0, PI))
            .set(SmallDIntra, 1, r(PI, 0.0, -PI))
            .set(JIntra, 1, r(h, 0.0, -h))
            .set(DIntra, 1, r(h, 0.0, h))
            .set(JInter, 1, r(0.0, h, 0.0))
            .set(DInter, 1, r(0.0, h, 0.0))
            .build(),
        StepBuilder::new("A3", opts)
            .set(SmallJIntra, 1, r(PI, PI, 0.0))
            .set(SmallDIntra, 1, r(PI, -PI, 0.0))
            .set(SmallJInter, 1, Curve { sin: [0.0, -PI], ..Curve::default() })
            .set(SmallDInter, 1, Curve { sin: [0.0, PI], ..Curve::default() })
            .build(),
        StepBuilder::new("A4", opts)
            .set(JIntra, 1, r(h, -h, 0.0))
            .set(DIntra, 1, r(h, h, 0.0))
            .build(),
        StepBuilder::new("A5", opts)
            .set(SmallJInter, 1, Curve { sin: [PI, 0.0], cos: [0.0, -PI], ..Curve::default() })
            .set(SmallDInter, 1, Curve { sin: [-PI, 0.0], cos: [0.0, PI], ..Curve::default() })
            .set(JInter, 1, r(0.0, 0.0, h))
            .set(DInter, 1, r(0.0, 0.0, h))
            .build(),
        StepBuilder::new("A6", opts)
            .set(SmallJIntra, 1, r(0.0, PI, 0.0))
            .set(SmallDIntra, 1, r(0.0, PI, 0.0))
            .set(SmallJInter, 1, r(PI, 0.0, PI))
            .set(SmallDInter, 1, r(-PI, 0.0, PI))
            .build(),
    ]
}

fn braid_b_steps(opts: &ScheduleOptions) -> [ScheduleStep; 7] {
    let n = opts.n;
    let h = FRAC_PI_2;
    let open_chain = |name: &str, sites: std::ops::RangeInclusive<usize>| {
        let mut b = StepBuilder::new(name, opts);
        for k in sites {
            b = b
                .set(SmallJInter, k, r(PI, PI, 0.0))
                .set(SmallDInter, k, r(-PI, PI, 0.0))
                .set(SmallJIntra, k, r(0.0, 0.0, PI))
                .set(SmallDIntra, k, r(0.0, 0.0, PI));
        }
        b.build()
    };
    let bias = |name: &str| {
        StepBuilder::new(name, opts)
            .set_target(Target::BiasA { site: n + 1 }, r(0.0, 0.0, 2.0 * PI))
            .set(SmallJInter, n, r(0.0, PI, 0.0))
            .set(SmallDInter, n, r(0.0, -PI, 0.0))
            .build()
    };
    let exchange = |name: &str| {
        let f = |c: f64, fc: f64| Curve::real(c, 0.0, 0.0, fc);
        StepBuilder::new(name, opts)
            .every_other()
            .set_target(Target::BiasA { site: n + 1 }, f(PI, -PI))
            .set(SmallJIntra, n, f(h, -h))
            .set(SmallDIntra, n, f(h, -h))
            .set(SmallJInter, n, f(PI, PI))
            .set(SmallDInter, n, f(0.0, 0.0))
            .build()
    };
    let mut close = StepBuilder::new("B7", opts);
    for k in 1..n {
        close = close
            .set(SmallJInter, k, r(PI, 0.0, PI))
            .set(SmallDInter, k, r(-PI, 0.0, PI))
            .set(SmallJIntra, k, r(0.0, PI, 0.0))
            .set(SmallDIntra, k, r(0.0, PI, 0.0));
    }
    [
        open_chain("B1", 1..=n),
        bias("B2"),
        exchange("B3"),
        open_chain("B4", n..=n),
        bias("B5"),
        exchange("B6"),
        close.build(),
    ]
}

fn readout_steps(opts: &ScheduleOptions) -> Vec<ScheduleStep> {
    vec![StepBuilder::new("ramp", opts)
        .set_target(Target::Mu1, r(opts.mu1, -opts.mu1, 0.0))
        .set_target(Target::Mu2, r(opts.mu2, -opts.mu2, 0.0))
        .build()]
}

/// One of the builtin protocols.
pub fn builtin_schedule(name: &str, opts: &ScheduleOptions) -> Result<Schedule> {
    if opts.periods_per_step == 0 || opts.periods_per_step % 2 == 1 {
        return Err(Error::OddDuration { name: name.into(), duration: opts.periods_per_step });
    }
    let n_sites = opts.n_sites;
    let needs = |min: usize| -> Result<()> {
        if n_sites < min {
            Err(Error::InvalidInput(format!("`{name}` needs at least {min} sites, got {n_sites}")))
        } else {
            Ok(())
        }
    };
    let (base, right) = match name.rsplit_once('_') {
        Some((b, "left")) => (b, false),
        Some((b, "right")) => (b, true),
        _ if name == "readout" => ("readout", false),
        _ => return Err(Error::UnknownName(name.into())),
    };
    let mut sched = match base {
        "braidA" => {
            needs(3)?;
            Schedule {
                name: name.into(),
                n_sites,
                steps: braid_a(opts),
                closed: true,
                f_shape: opts.f_shape,
                active: Some((ModeLabel::Zero1L, ModeLabel::Zero2L)),
            }
        }
        "braidB" | "tgate" => {
            if opts.n < 2 {
                return Err(Error::InvalidInput(format!("site offset n = {} < 2", opts.n)));
            }
            needs(2 * opts.n + 2)?;
            let all = braid_b_steps(opts);
            let steps: Vec<ScheduleStep> = if base == "braidB" {
                all.to_vec()
            } else {
                [0, 1, 2, 6].iter().map(|&i| all[i].clone()).collect()
            };
            Schedule {
                name: name.into(),
                n_sites,
                steps,
                closed: true,
                f_shape: opts.f_shape,
                active: Some((ModeLabel::Zero2L, ModeLabel::PiL)),
            }
        }
        "readout" => Schedule {
            name: name.into(),
            n_sites,
            steps: readout_steps(opts),
            closed: false,
            f_shape: opts.f_shape,
            active: None,
        },
        _ => return Err(Error::UnknownName(name.into())),
    };
    if right {
        sched = sched.mirrored(name);
        // the reflection is not a clean relabeling of the edge modes
        sched.active = sched.active.map(|(a, _)| match a {
            ModeLabel::Zero1R => (ModeLabel::Zero1R, ModeLabel::Zero2R),
            _ => (ModeLabel::Zero1R, ModeLabel::PiR),
        });
    }
    Ok(sched)
}

/// A schedule that holds all parameters fixed for `steps` × `periods` periods.
pub fn frozen_schedule(n_sites: usize, steps: usize, periods: usize) -> Schedule {
    Schedule {
        name: "frozen".into(),
        n_sites,
        steps: (0..steps)
            .map(|i| ScheduleStep {
                name: format!("hold{}", i + 1),
                duration: periods,
                cadence: Cadence::EveryPeriod,
                ramp: Ramp::Linear,
                assignments: Vec::new(),
            })
            .collect(),
        closed: true,
        f_shape: FShape::Cosine,
        active: None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub period: usize,
    pub step: String,
    pub u: f64,
    pub correlations: Vec<f64>,
    pub max_zero_splitting: f64,
    pub max_pi_splitting: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub pairs: Vec<(ModeLabel, ModeLabel)>,
    pub rows: Vec<TrajectoryRow>,
    pub final_state: Option<CovarianceState>,
    /// Probe vectors carried through the schedule, v → O v.
    pub transported: Vec<Vector>,
    /// Product of all one-period maps.
    pub total: OrthogonalPropagator,
    pub final_params: DriveParams,
    pub metrics: AdiabaticityMetrics,
}

impl Trajectory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("period,step,u");
        for (a, b) in &self.pairs {
            let _ = write!(s, ",{}_{}", a.name(), b.name());
        }
        s.push_str(",max_zero_splitting,max_pi_splitting\n");
        for r in &self.rows {
            let _ = write!(s, "{},{},{}", r.period, r.step, r.u);
            for c in &r.correlations {
                let _ = write!(s, ",{c}");
            }
            let _ = writeln!(s, ",{:e},{:e}", r.max_zero_splitting, r.max_pi_splitting);
        }
        s
    }

    /// Final correlation of a listed pair.
    pub fn final_correlation(&self, a: ModeLabel, b: ModeLabel) -> Option<f64> {
        let i = self.pairs.iter().position(|&p| p == (a, b) || p == (b, a))?;
        let sign = if self.pairs[i] == (a, b) { 1.0 } else { -1.0 };
        self.rows.last().map(|r| sign * r.correlations[i])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    /// Record spectra and splittings every period.
    pub splittings: bool,
    /// Keep one row per `stride` parameter updates (the last update is always kept).
    pub stride: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { splittings: true, stride: 1 }
    }
}

/// Drives `params` through the schedule, advancing the state and probe vectors.
pub fn run(
    schedule: &Schedule,
    params: &DriveParams,
    state: Option<&CovarianceState>,
    probes: &EdgeModeSet,
    options: RunOptions,
) -> Result<Trajectory> {
    schedule.validate(params)?;
    let dim = 4 * params.n_sites;
    if probes.dim() != dim {
        return Err(Error::InvalidInput(format!("probe length {} vs {dim}", probes.dim())));
    }
    if let Some(s) = state {
        if s.dim() != dim {
            return Err(Error::InvalidInput(format!("state dimension {} vs {dim}", s.dim())));
        }
    }
    let labels = ModeLabel::ALL;
    let mut pairs = Vec::new();
    for i in 0..6 {
        for j in i + 1..6 {
            pairs.push((labels[i], labels[j]));
        }
    }
    let mut st = state.cloned();
    let mut transported: Vec<Vector> = probes.vectors.to_vec();
    let mut total = OrthogonalPropagator::identity(dim);
    let mut rows = Vec::new();
    let mut splits = Vec::new();
    let mut period = 0;
    let mut update = 0;
    let n_updates: usize = schedule.steps.iter().map(|s| s.samples().len()).sum();
    let final_params = schedule.walk(params, |si, u, p, hold| {
        let o = floquet_propagator(p)?;
        let mut step_map = o.clone();
        if hold == 2 {
            step_map = o.after(&o);
        }
        period += hold;
        update += 1;
        total = step_map.after(&total);
        for v in transported.iter_mut() {
            *v = step_map.apply(v);
        }
        if let Some(s) = st.as_mut() {
            *s = s.evolve(&step_map);
        }
        let (z, pi) = if options.splittings {
            if hold == 2 {
                let (z, _) = sector_splittings(&step_map.o, 6, 0);
                (z, z)
            } else {
                sector_splittings(&o.o, 4, 2)
            }
        } else {
            (0.0, 0.0)
        };
        splits.push(z.max(pi));
        if update % options.stride.max(1) == 0 || update == n_updates {
            let correlations = match &st {
                Some(s) => pairs.iter().map(|(a, b)| s.correlation(probes.get(*a), probes.get(*b))).collect(),
                None => Vec::new(),
            };
            rows.push(TrajectoryRow {
                period,
                step: schedule.steps[si].name.clone(),
                u,
                correlations,
                max_zero_splitting: z,
                max_pi_splitting: pi,
            });
        }
        Ok(())
    })?;
    total.renormalize();
    let o_final = floquet_propagator(&final_params)?;
    let final_modes = nearest_edge_modes(&o_final, probes)?;
    let metrics = adiabaticity_metrics(&final_modes, &transported, &splits);
    if st.is_none() {
        pairs.clear();
    }
    Ok(Trajectory { pairs, rows, final_state: st, transported, total, final_params, metrics })
}

/// Result of transporting the six edge modes around a closed schedule.
#[derive(Clone, Debug, Serialize)]
pub struct BraidReport {
    pub schedule: String,
    /// R_ab = e_aᵀ O_tot e_b over the six edge modes (ModeLabel order): the
    /// component along e_a of the transported e_b.
    pub overlaps: Vec<Vec<f64>>,
    pub active: Option<(ModeLabel, ModeLabel)>,
    /// R restricted to the active pair; column j is the image of mode j.
    pub block: [[f64; 2]; 2],
    pub leakage: f64,
    pub diabatic_error: f64,
    pub max_splitting: f64,
}

impl BraidReport {
    pub fn overlap(&self, a: ModeLabel, b: ModeLabel) -> f64 {
        self.overlaps[a as usize][b as usize]
    }
}

/// Edge modes at the loop's base point, gauge-fixed to the ideal vectors.
pub fn base_modes(schedule: &Schedule, params: &DriveParams) -> Result<(DriveParams, EdgeModeSet)> {
    let p0 = schedule.anchor(params)?;
    let o0 = floquet_propagator(&p0)?;
    let modes = edge_modes(&o0, p0.n_sites, None)?;
    Ok((p0, modes))
}

/// Transports the base-point edge modes around the schedule and summarizes the net rotation.
pub fn braid_matrix(schedule: &Schedule, params: &DriveParams) -> Result<BraidReport> {
    braid_transport(schedule, params).map(|(r, _)| r)
}

/// [`braid_matrix`] together with the full one-loop map O_tot.
pub fn braid_transport(schedule: &Schedule, params: &DriveParams) -> Result<(BraidReport, OrthogonalPropagator)> {
    if !schedule.closed {
        return Err(Error::NotClosed(f64::NAN));
    }
    schedule.validate(params)?;
    let (_, modes) = base_modes(schedule, params)?;
    let traj = run(schedule, params, None, &modes, RunOptions { splittings: true, stride: usize::MAX })?;
    let e = modes.matrix();
    let r = e.transpose() * &traj.total.o * &e;
    let active = schedule.active;
    let in_block = |i: usize| active.is_some_and(|(a, b)| i == a as usize || i == b as usize);
    let mut leakage: f64 = 0.0;
    for i in 0..6 {
        for j in 0..6 {
            if in_block(i) && in_block(j) {
                continue;
            }
            let want = if i == j { 1.0 } else { 0.0 };
            leakage = leakage.max((r[(i, j)] - want).abs());
        }
        leakage = leakage.max(1.0 - r.column(i).norm_squared());
    }
    let block = match active {
        Some((a, b)) => {
            let (a, b) = (a as usize, b as usize);
            [[r[(a, a)], r[(a, b)]], [r[(b, a)], r[(b, b)]]]
        }
        None => [[1.0, 0.0], [0.0, 1.0]],
    };
    if leakage > 1e-2 {
        return Err(Error::LeakageTooLarge(leakage));
    }
    let report = BraidReport {
        schedule: schedule.name.clone(),
        overlaps: (0..6).map(|i| (0..6).map(|j| r[(i, j)]).collect()).collect(),
        active,
        block,
        leakage,
        diabatic_error: traj.metrics.diabatic_error,
        max_splitting: traj.metrics.max_splitting,
    };
    Ok((report, traj.total))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sector {
    Zero,
    Pi,
    Combined,
}

impl Sector {
    pub fn labels(self) -> Vec<ModeLabel> {
        use ModeLabel::*;
        match self {
            Sector::Zero => vec![Zero1L, Zero2L, Zero1R, Zero2R],
            Sector::Pi => vec![PiL, PiR],
            Sector::Combined => ModeLabel::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct HolonomyResult {
    pub sector: Sector,
    pub labels: Vec<ModeLabel>,
    /// W_ab = e_aᵀ T_end[:, b], same orientation as the braid overlaps.
    pub w: Mat,
    /// Accumulated Wilson line at the end of each step, in the initial basis.
    pub per_step: Vec<Mat>,
    /// Distance from W to the nearest signed permutation.
    pub berry_diagnostic: f64,
    pub unitarity_defect: f64,
}

/// Max-abs distance from `w` to the closest signed permutation matrix.
pub fn signed_permutation_distance(w: &Mat) -> f64 {
    let n = w.nrows();
    let mut used = vec![false; n];
    let mut p = Mat::zeros(n, n);
    for i in 0..n {
        let j = (0..n)
            .filter(|&j| !used[j])
            .max_by(|&a, &b| w[(i, a)].abs().total_cmp(&w[(i, b)].abs()))
            .unwrap_or(0);
        used[j] = true;
        p[(i, j)] = w[(i, j)].signum();
    }
    (w - p).amax()
}

fn polar(m: &Mat) -> Mat {
    let svd = m.clone().svd(true, true);
    svd.u.expect("svd u") * svd.v_t.expect("svd v_t")
}

const DIM_TOL: f64 = 1e-3;

/// Discrete Wilson line of a degenerate edge sector along the schedule.
pub fn wilson_holonomy(schedule: &Schedule, params: &DriveParams, sector: Sector) -> Result<HolonomyResult> {
    schedule.validate(params)?;
    let (p0, modes) = base_modes(schedule, params)?;
    let labels = sector.labels();
    let k = labels.len();
    let subspace = |p: &DriveParams| -> Result<Mat> {
        let o = floquet_propagator(p)?;
        let o = if sector == Sector::Combined { o.after(&o) } else { o };
        let s = (&o.o + o.o.transpose()) * 0.5;
        let (vals, v) = eigh(&s);
        let n = vals.len();
        let (count, cols) = match sector {
            Sector::Pi => (vals.iter().filter(|&&x| x < -1.0 + DIM_TOL).count(), 0..k),
            _ => (vals.iter().filter(|&&x| x > 1.0 - DIM_TOL).count(), n - k..n),
        };
        if count != k {
            return Err(Error::SubspaceDimensionChanged { from: k, to: count });
        }
        Ok(v.columns(cols.start, k).into_owned())
    };
    let reference = Mat::from_columns(&labels.iter().map(|l| modes.get(*l).clone()).collect::<Vec<_>>());
    let (q0, _) = procrustes(&subspace(&p0)?, &reference);
    let mut t = q0.clone();
    let mut per_step = Vec::new();
    let mut current = 0;
    schedule.walk(params, |si, _, p, _| {
        if si != current {
            per_step.push(q0.transpose() * &t);
            current = si;
        }
        let q = subspace(p)?;
        t = &q * polar(&(q.transpose() * &t));
        Ok(())
    })?;
    let w = q0.transpose() * &t;
    per_step.push(w.clone());
    let unitarity_defect = (w.transpose() * &w - Mat::identity(k, k)).amax();
    let berry_diagnostic = signed_permutation_distance(&w);
    Ok(HolonomyResult { sector, labels, w, per_step, berry_diagnostic, unitarity_defect })
}
