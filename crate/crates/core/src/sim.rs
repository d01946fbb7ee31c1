//! Ground-truth simulators for the three interacting-system families.
//!
//! Particle systems integrate with velocity Verlet inside a reflecting box;
//! oscillators integrate with classic RK4. Each sample owns a ChaCha stream
//! keyed by `(seed, split, index)`, so samples can be generated in any order.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, RelationGraph, Trajectory};

pub const BOX_HALF_WIDTH: f64 = 5.0;
pub const SPRING_CONSTANT: f64 = 0.1;
pub const CHARGE_STRENGTH: f64 = 1.0;
pub const CHARGE_MIN_DISTANCE: f64 = 0.01;
pub const POSITION_STD: f64 = 0.5;
pub const VELOCITY_NORM: f64 = 0.5;
pub const COUPLING: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("need at least 2 agents, got {0}")]
    TooFewAgents(usize),
    #[error("need at least 2 observed steps, got {0}")]
    TooFewSteps(usize),
    #[error("stride must be at least 1")]
    ZeroStride,
    #[error("integration step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("interaction probability must lie in [0, 1], got {0}")]
    BadProbability(f64),
    #[error("every split needs at least one sample")]
    EmptySplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Springs,
    Charged,
    Kuramoto,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Springs, Family::Charged, Family::Kuramoto];

    pub fn name(self) -> &'static str {
        match self {
            Family::Springs => "springs",
            Family::Charged => "charged",
            Family::Kuramoto => "kuramoto",
        }
    }

    /// Numeric tag used by the binary dataset header.
    pub fn tag(self) -> u32 {
        self as u32
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }

    pub fn feature_dim(self) -> usize {
        match self {
            Family::Springs | Family::Charged => 4,
            Family::Kuramoto => 3,
        }
    }
}

impl core::str::FromStr for Family {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Self::ALL.into_iter().find(|f| f.name() == s).ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub family: Family,
    pub n: usize,
    pub t: usize,
    pub dt: f64,
    pub stride: usize,
    pub interaction_prob: f64,
    pub seed: u64,
}

impl SystemSpec {
    /// Standard constants for `family`.
    pub fn new(family: Family, n: usize, seed: u64) -> Self {
        let (dt, stride) = match family {
            Family::Springs | Family::Charged => (0.001, 100),
            Family::Kuramoto => (0.01, 10),
        };
        Self {
            family,
            n,
            t: 49,
            dt,
            stride,
            interaction_prob: 0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n < 2 {
            return Err(SimError::TooFewAgents(self.n));
        }
        if self.t < 2 {
            return Err(SimError::TooFewSteps(self.t));
        }
        if self.stride == 0 {
            return Err(SimError::ZeroStride);
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::BadStep(self.dt));
        }
        if !(0.0..=1.0).contains(&self.interaction_prob) {
            return Err(SimError::BadProbability(self.interaction_prob));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        self.family.feature_dim()
    }

    /// Simulation time between two observed steps.
    pub fn sample_interval(&self) -> f64 {
        self.dt * self.stride as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

/// Independent RNG stream for one sample.
pub fn sample_rng(seed: u64, split: Split, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((split as u64) << 48) | index);
    rng
}

/// Symmetric graph with each unordered pair present independently with probability `p`.
pub fn random_symmetric_graph<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> RelationGraph {
    let mut g = RelationGraph::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            let t = rng.random_bool(p) as u8;
            g.set(i, j, t);
            g.set(j, i, t);
        }
    }
    g
}

/// Positions and velocities of 2-D point masses.
#[derive(Debug, Clone, PartialEq)]
pub struct Particles {
    pub pos: Vec<[f64; 2]>,
    pub vel: Vec<[f64; 2]>,
}

impl Particles {
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, POSITION_STD).unwrap();
        let std = Normal::new(0.0, 1.0).unwrap();
        let pos = (0..n).map(|_| [normal.sample(rng), normal.sample(rng)]).collect();
        let vel = (0..n)
            .map(|_| {
                let v: [f64; 2] = [std.sample(rng), std.sample(rng)];
                let norm = (v[0] * v[0] + v[1] * v[1]).sqrt().max(f64::MIN_POSITIVE);
                [v[0] * VELOCITY_NORM / norm, v[1] * VELOCITY_NORM / norm]
            })
            .collect();
        Self { pos, vel }
    }

    pub fn momentum(&self) -> [f64; 2] {
        self.vel
            .iter()
            .fold([0.0, 0.0], |p, v| [p[0] + v[0], p[1] + v[1]])
    }
}

/// Pairwise force law between unit masses.
#[derive(Debug, Clone, PartialEq)]
pub enum ForceLaw {
    /// Hooke springs on the edges of a graph with type 1 = spring.
    Springs(RelationGraph),
    /// Coulomb-like interaction between signed charges.
    Charged(Vec<f64>),
}

impl ForceLaw {
    /// Force exerted on `i` by `j`.
    pub fn pair_force(&self, pos: &[[f64; 2]], i: usize, j: usize) -> [f64; 2] {
        let d = [pos[i][0] - pos[j][0], pos[i][1] - pos[j][1]];
        match self {
            ForceLaw::Springs(g) => {
                if g.get(i, j) == 0 {
                    [0.0, 0.0]
                } else {
                    [-SPRING_CONSTANT * d[0], -SPRING_CONSTANT * d[1]]
                }
            }
            ForceLaw::Charged(q) => {
                let r = (d[0] * d[0] + d[1] * d[1]).sqrt().max(CHARGE_MIN_DISTANCE);
                let c = CHARGE_STRENGTH * q[i] * q[j] / (r * r * r);
                [c * d[0], c * d[1]]
            }
        }
    }

    fn forces(&self, pos: &[[f64; 2]], out: &mut [[f64; 2]]) {
        out.iter_mut().for_each(|f| *f = [0.0, 0.0]);
        let n = pos.len();
        for i in 0..n {
            for j in i + 1..n {
                let f = self.pair_force(pos, i, j);
                out[i][0] += f[0];
                out[i][1] += f[1];
                out[j][0] -= f[0];
                out[j][1] -= f[1];
            }
        }
    }

    /// Kinetic energy plus spring potential; `None` for charged systems.
    pub fn spring_energy(&self, p: &Particles) -> Option<f64> {
        let ForceLaw::Springs(g) = self else {
            return None;
        };
        let kinetic: f64 = p.vel.iter().map(|v| 0.5 * (v[0] * v[0] + v[1] * v[1])).sum();
        let mut potential = 0.0;
        for i in 0..p.pos.len() {
            for j in i + 1..p.pos.len() {
                if g.get(i, j) != 0 {
                    let d = [p.pos[i][0] - p.pos[j][0], p.pos[i][1] - p.pos[j][1]];
                    potential += 0.5 * SPRING_CONSTANT * (d[0] * d[0] + d[1] * d[1]);
                }
            }
        }
        Some(kinetic + potential)
    }
}

fn reflect(x: &mut f64, v: &mut f64, half: f64) {
    while x.abs() > half {
        *x = x.signum() * 2.0 * half - *x;
        *v = -*v;
    }
}

/// Integrates `init` and returns `t` snapshots taken every `stride` steps,
/// the first being `init` itself. `walls = None` disables the box.
pub fn integrate_particles(
    law: &ForceLaw,
    init: &Particles,
    dt: f64,
    stride: usize,
    t: usize,
    walls: Option<f64>,
) -> Vec<Particles> {
    let n = init.pos.len();
    let mut p = init.clone();
    let mut f = vec![[0.0; 2]; n];
    law.forces(&p.pos, &mut f);
    let mut out = Vec::with_capacity(t);
    out.push(p.clone());
    for _ in 1..t {
        for _ in 0..stride {
            for i in 0..n {
                for c in 0..2 {
                    p.vel[i][c] += 0.5 * dt * f[i][c];
                    p.pos[i][c] += dt * p.vel[i][c];
                    if let Some(half) = walls {
                        reflect(&mut p.pos[i][c], &mut p.vel[i][c], half);
                    }
                }
            }
            law.forces(&p.pos, &mut f);
            for i in 0..n {
                for c in 0..2 {
                    p.vel[i][c] += 0.5 * dt * f[i][c];
                }
            }
        }
        out.push(p.clone());
    }
    out
}

/// Flattens particle snapshots to `[t, n, 4]` as (x, y, vx, vy).
pub fn particle_states(snapshots: &[Particles]) -> Vec<f64> {
    snapshots
        .iter()
        .flat_map(|s| {
            s.pos
                .iter()
                .zip(&s.vel)
                .flat_map(|(p, v)| [p[0], p[1], v[0], v[1]])
        })
        .collect()
}

/// Phase velocities of coupled oscillators.
pub fn kuramoto_rates(omega: &[f64], phase: &[f64], graph: &RelationGraph, out: &mut [f64]) {
    let n = phase.len();
    for i in 0..n {
        let mut r = omega[i];
        for j in 0..n {
            if j != i && graph.get(j, i) != 0 {
                r += COUPLING * (phase[j] - phase[i]).sin();
            }
        }
        out[i] = r;
    }
}

/// RK4-integrated phases `[t, n]`, sampled every `stride` steps from `phase0`.
pub fn integrate_kuramoto(
    omega: &[f64],
    phase0: &[f64],
    graph: &RelationGraph,
    dt: f64,
    stride: usize,
    t: usize,
) -> Vec<f64> {
    let n = phase0.len();
    let mut phi = phase0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut out = Vec::with_capacity(t * n);
    out.extend_from_slice(&phi);
    for _ in 1..t {
        for _ in 0..stride {
            kuramoto_rates(omega, &phi, graph, &mut k1);
            tmp.iter_mut().zip(&phi).zip(&k1).for_each(|((x, p), k)| *x = p + 0.5 * dt * k);
            kuramoto_rates(omega, &tmp, graph, &mut k2);
            tmp.iter_mut().zip(&phi).zip(&k2).for_each(|((x, p), k)| *x = p + 0.5 * dt * k);
            kuramoto_rates(omega, &tmp, graph, &mut k3);
            tmp.iter_mut().zip(&phi).zip(&k3).for_each(|((x, p), k)| *x = p + dt * k);
            kuramoto_rates(omega, &tmp, graph, &mut k4);
            for i in 0..n {
                phi[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        out.extend_from_slice(&phi);
    }
    out
}

/// Observed features `[t, n, 3]`: (dφ/dt, sin φ, ω).
pub fn kuramoto_features(omega: &[f64], phases: &[f64], graph: &RelationGraph) -> Vec<f64> {
    let n = omega.len();
    let mut rates = vec![0.0; n];
    let mut out = Vec::with_capacity(phases.len() * 3);
    for row in phases.chunks(n) {
        kuramoto_rates(omega, row, graph, &mut rates);
        for i in 0..n {
            out.extend_from_slice(&[rates[i], row[i].sin(), omega[i]]);
        }
    }
    out
}

/// Draws one sample of `spec` from `rng`.
pub fn simulate<R: Rng + ?Sized>(spec: &SystemSpec, rng: &mut R) -> Trajectory {
    let n = spec.n;
    match spec.family {
        Family::Springs => {
            let graph = random_symmetric_graph(n, spec.interaction_prob, rng);
            let init = Particles::random(n, rng);
            let law = ForceLaw::Springs(graph.clone());
            let snaps = integrate_particles(&law, &init, spec.dt, spec.stride, spec.t, Some(BOX_HALF_WIDTH));
            Trajectory {
                states: particle_states(&snaps),
                graph,
            }
        }
        Family::Charged => {
            let q: Vec<f64> = (0..n)
                .map(|_| if rng.random_bool(spec.interaction_prob) { 1.0 } else { -1.0 })
                .collect();
            let mut graph = RelationGraph::empty(n);
            for i in 0..n {
                for j in (0..n).filter(|&j| j != i) {
                    graph.set(i, j, (q[i] * q[j] > 0.0) as u8);
                }
            }
            let init = Particles::random(n, rng);
            let snaps = integrate_particles(
                &ForceLaw::Charged(q),
                &init,
                spec.dt,
                spec.stride,
                spec.t,
                Some(BOX_HALF_WIDTH),
            );
            Trajectory {
                states: particle_states(&snaps),
                graph,
            }
        }
        Family::Kuramoto => {
            let graph = random_symmetric_graph(n, spec.interaction_prob, rng);
            let omega: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..10.0)).collect();
            let phase0: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            let phases = integrate_kuramoto(&omega, &phase0, &graph, spec.dt, spec.stride, spec.t);
            Trajectory {
                states: kuramoto_features(&omega, &phases, &graph),
                graph,
            }
        }
    }
}

pub fn generate_sample(spec: &SystemSpec, split: Split, index: usize) -> Trajectory {
    simulate(spec, &mut sample_rng(spec.seed, split, index as u64))
}

/// Wraps already simulated samples of `spec` into a dataset.
pub fn assemble(spec: &SystemSpec, samples: Vec<Trajectory>) -> Dataset {
    Dataset {
        family: spec.family,
        n: spec.n,
        t: spec.t,
        d: spec.feature_dim(),
        k: 2,
        samples,
    }
}

pub fn generate_split(spec: &SystemSpec, split: Split, count: usize) -> Result<Dataset, SimError> {
    spec.validate()?;
    let samples = (0..count).map(|i| generate_sample(spec, split, i)).collect();
    Ok(assemble(spec, samples))
}

/// Train, validation and test datasets, in that order.
pub fn generate_dataset(spec: &SystemSpec, counts: SplitCounts) -> Result<[Dataset; 3], SimError> {
    if Split::ALL.iter().any(|&s| counts.get(s) == 0) {
        return Err(SimError::EmptySplit);
    }
    Ok([
        generate_split(spec, Split::Train, counts.train)?,
        generate_split(spec, Split::Val, counts.val)?,
        generate_split(spec, Split::Test, counts.test)?,
    ])
}
