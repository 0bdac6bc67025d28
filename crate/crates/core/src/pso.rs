//! Global-best particle swarm optimization over the 33 trapezoid parameters
//! `[U1 D1 C1 … U11 D11 C11]` of the controller's membership functions.
//!
//! Velocity: `V = ωV + c1·r1⊗(pBest − X) + c2·r2⊗(gBest − X)`, then
//! `X = X + V`. The inertia ω falls linearly from `inertia_start` to
//! `inertia_end` over the run. Positions leaving the box are clamped to it
//! and the offending velocity component is zeroed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controllers::{ControllerParams, FuzzyMix};
use crate::fuzzy::{FuzzyEngine, FuzzyError, MembershipSet, Trapezoid, VARIABLE_LAYOUT};
use crate::sim::{self, ConfigError, Scenario, SimMetrics};

pub const TERM_COUNT: usize = 11;
pub const DIMENSIONS: usize = 3 * TERM_COUNT;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PsoError {
    #[error("component {index} = {value} outside [{lo}, {hi}]")]
    Range {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("expected {expected} components, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("membership set contains non-trapezoid terms")]
    NotTrapezoids,
    #[error("invalid swarm configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Scenario(#[from] ConfigError),
    #[error(transparent)]
    Fuzzy(#[from] FuzzyError),
}

/// Search ranges of one trapezoid: `U, D ∈ [0, width/2]`, `C` anywhere in
/// the variable's domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapezoidBounds {
    pub upper: (f64, f64),
    pub spread: (f64, f64),
    pub center: (f64, f64),
}

/// Bounds of the `k`-th term in canonical order (QL, WT, ET, UD).
pub fn trapezoid_bounds(k: usize) -> TrapezoidBounds {
    let mut seen = 0;
    for (_, domain, names) in VARIABLE_LAYOUT {
        if k < seen + names.len() {
            let half = 0.5 * domain.width();
            return TrapezoidBounds {
                upper: (0.0, half),
                spread: (0.0, half),
                center: (domain.lo, domain.hi),
            };
        }
        seen += names.len();
    }
    panic!("term index {k} out of range");
}

/// Per-dimension `(lo, hi)` of the full search box.
pub fn search_bounds() -> Vec<(f64, f64)> {
    (0..TERM_COUNT)
        .flat_map(|k| {
            let b = trapezoid_bounds(k);
            [b.upper, b.spread, b.center]
        })
        .collect()
}

fn check_in_bounds(x: &[f64]) -> Result<(), PsoError> {
    if x.len() != DIMENSIONS {
        return Err(PsoError::Dimension {
            expected: DIMENSIONS,
            got: x.len(),
        });
    }
    for (index, (&value, (lo, hi))) in x.iter().zip(search_bounds()).enumerate() {
        if !(lo..=hi).contains(&value) {
            return Err(PsoError::Range {
                index,
                value,
                lo,
                hi,
            });
        }
    }
    Ok(())
}

pub fn encode(set: &MembershipSet) -> Result<Vec<f64>, PsoError> {
    let traps = set.trapezoids().ok_or(PsoError::NotTrapezoids)?;
    let x: Vec<f64> = traps
        .iter()
        .flat_map(|t| [t.upper, t.spread, t.center])
        .collect();
    check_in_bounds(&x)?;
    Ok(x)
}

pub fn decode(x: &[f64]) -> Result<MembershipSet, PsoError> {
    check_in_bounds(x)?;
    let mut traps = [Trapezoid::new(0.0, 0.0, 0.0); TERM_COUNT];
    for (t, c) in traps.iter_mut().zip(x.chunks_exact(3)) {
        *t = Trapezoid::new(c[0], c[1], c[2]);
    }
    Ok(MembershipSet::from_trapezoids(&traps)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwarmConfig {
    pub particles: usize,
    pub iterations: usize,
    pub inertia_start: f64,
    pub inertia_end: f64,
    pub cognitive: f64,
    pub social: f64,
    pub seed: u64,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self {
            particles: 20,
            iterations: 1000,
            inertia_start: 0.9,
            inertia_end: 0.4,
            cognitive: 2.0,
            social: 2.0,
            seed: 0,
        }
    }
}

impl SwarmConfig {
    pub fn validate(&self) -> Result<(), PsoError> {
        let bad = |m: String| Err(PsoError::Config(m));
        if self.particles < 2 {
            return bad(format!("need at least 2 particles, got {}", self.particles));
        }
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if self.inertia_start < self.inertia_end {
            return bad("inertia must not increase".into());
        }
        if self.cognitive < 0.0 || self.social < 0.0 {
            return bad("acceleration coefficients must be non-negative".into());
        }
        Ok(())
    }

    /// Inertia weight at `iteration` (0-based), linear from start to end.
    pub fn inertia(&self, iteration: usize) -> f64 {
        if self.iterations <= 1 {
            return self.inertia_start;
        }
        let frac = iteration as f64 / (self.iterations - 1) as f64;
        self.inertia_start - (self.inertia_start - self.inertia_end) * frac
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub fitness: f64,
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
}

impl Particle {
    fn new(position: Vec<f64>, velocity: Vec<f64>) -> Self {
        Self {
            best_position: position.clone(),
            position,
            velocity,
            fitness: f64::INFINITY,
            best_fitness: f64::INFINITY,
        }
    }

    fn record(&mut self, fitness: f64) {
        self.fitness = fitness;
        if fitness < self.best_fitness {
            self.best_fitness = fitness;
            self.best_position.clone_from(&self.position);
        }
    }
}

/// Velocity and position update with explicit random factors `r1`, `r2`.
#[allow(clippy::too_many_arguments)]
pub fn update_with(
    p: &mut Particle,
    global_best: &[f64],
    inertia: f64,
    c1: f64,
    c2: f64,
    r1: &[f64],
    r2: &[f64],
    bounds: &[(f64, f64)],
) {
    for d in 0..p.position.len() {
        let x = p.position[d];
        let v = inertia * p.velocity[d]
            + c1 * r1[d] * (p.best_position[d] - x)
            + c2 * r2[d] * (global_best[d] - x);
        let (lo, hi) = bounds[d];
        let moved = x + v;
        if moved < lo || moved > hi {
            p.position[d] = moved.clamp(lo, hi);
            p.velocity[d] = 0.0;
        } else {
            p.position[d] = moved;
            p.velocity[d] = v;
        }
    }
}

/// One swarm update of `p`, drawing fresh uniform `r1, r2 ∈ [0,1)^N`.
pub fn update_particle<R: Rng + ?Sized>(
    p: &mut Particle,
    global_best: &[f64],
    inertia: f64,
    c1: f64,
    c2: f64,
    bounds: &[(f64, f64)],
    rng: &mut R,
) {
    let n = p.position.len();
    let r1: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let r2: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    update_with(p, global_best, inertia, c1, c2, &r1, &r2, bounds);
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub particles: Vec<Particle>,
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
    pub iteration: usize,
}

impl SwarmState {
    fn refresh_global(&mut self) {
        for p in &self.particles {
            if p.best_fitness < self.best_fitness {
                self.best_fitness = p.best_fitness;
                self.best_position.clone_from(&p.best_position);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoResult {
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
    /// gBest fitness after initialization, then after each iteration.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

fn evaluate_all<F>(particles: &mut [Particle], objective: &F)
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let fits: Vec<f64> = particles
        .par_iter()
        .map(|p| {
            let f = objective(&p.position);
            if f.is_nan() {
                f64::INFINITY
            } else {
                f
            }
        })
        .collect();
    for (p, f) in particles.iter_mut().zip(fits) {
        p.record(f);
    }
}

/// Minimizes `objective` over the box `bounds`.
///
/// Particle evaluations within an iteration run in parallel; all random
/// draws happen sequentially on one seeded stream, so results do not depend
/// on scheduling.
pub fn optimize<F>(
    config: &SwarmConfig,
    bounds: &[(f64, f64)],
    objective: F,
) -> Result<PsoResult, PsoError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    optimize_with(config, bounds, objective, |_, _| {})
}

/// [`optimize`] with a callback invoked after every iteration with the
/// iteration number and the swarm.
pub fn optimize_with<F, P>(
    config: &SwarmConfig,
    bounds: &[(f64, f64)],
    objective: F,
    mut progress: P,
) -> Result<PsoResult, PsoError>
where
    F: Fn(&[f64]) -> f64 + Sync,
    P: FnMut(usize, &SwarmState),
{
    config.validate()?;
    if bounds.is_empty()
        || bounds
            .iter()
            .any(|(lo, hi)| lo > hi || lo.is_nan() || hi.is_nan())
    {
        return Err(PsoError::Config(
            "bounds must be non-empty with lo <= hi".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let particles = (0..config.particles)
        .map(|_| {
            let x = bounds
                .iter()
                .map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
                .collect();
            let v = bounds
                .iter()
                .map(|&(lo, hi)| (hi - lo) * (rng.random::<f64>() - 0.5))
                .collect();
            Particle::new(x, v)
        })
        .collect();
    let mut swarm = SwarmState {
        particles,
        best_position: Vec::new(),
        best_fitness: f64::INFINITY,
        iteration: 0,
    };
    evaluate_all(&mut swarm.particles, &objective);
    swarm.best_position = swarm.particles[0].best_position.clone();
    swarm.refresh_global();
    let mut history = Vec::with_capacity(config.iterations + 1);
    history.push(swarm.best_fitness);
    let mut evaluations = config.particles;

    for it in 0..config.iterations {
        let w = config.inertia(it);
        let gbest = swarm.best_position.clone();
        for p in &mut swarm.particles {
            update_particle(
                p,
                &gbest,
                w,
                config.cognitive,
                config.social,
                bounds,
                &mut rng,
            );
        }
        evaluate_all(&mut swarm.particles, &objective);
        evaluations += config.particles;
        swarm.refresh_global();
        swarm.iteration = it + 1;
        history.push(swarm.best_fitness);
        progress(it, &swarm);
    }

    Ok(PsoResult {
        best_position: swarm.best_position,
        best_fitness: swarm.best_fitness,
        history,
        evaluations,
    })
}

/// Weighted sum `w1·vehMiss/vehPass + w2·vehDelay`, with the ratio taken
/// as `vehMiss` when nothing passed.
pub fn fitness_of_metrics(m: &SimMetrics, miss_weight: f64, delay_weight: f64) -> f64 {
    let ratio = if m.veh_pass == 0 {
        m.veh_miss as f64
    } else {
        m.veh_miss as f64 / m.veh_pass as f64
    };
    miss_weight * ratio + delay_weight * m.veh_delay_s
}

/// Traffic objective: each candidate drives FUZZY-MIX over the same
/// training scenarios (same seeds), and the per-scenario fitness values
/// are averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficFitness {
    pub scenarios: Vec<Scenario>,
    pub params: ControllerParams,
    pub miss_weight: f64,
    pub delay_weight: f64,
}

impl TrafficFitness {
    pub const DEFAULT_MISS_WEIGHT: f64 = 1.0;
    pub const DEFAULT_DELAY_WEIGHT: f64 = 1e-8;

    pub fn new(scenarios: Vec<Scenario>, params: ControllerParams) -> Self {
        Self {
            scenarios,
            params,
            miss_weight: Self::DEFAULT_MISS_WEIGHT,
            delay_weight: Self::DEFAULT_DELAY_WEIGHT,
        }
    }

    /// Per-scenario metrics of FUZZY-MIX running `set`.
    pub fn simulate(&self, set: &MembershipSet) -> Result<Vec<SimMetrics>, PsoError> {
        let engine = FuzzyEngine::new(set.clone())?;
        self.scenarios
            .iter()
            .map(|s| {
                let mut ctrl = FuzzyMix::optimized(engine.clone(), self.params);
                Ok(sim::run(s, &mut ctrl)?)
            })
            .collect()
    }

    pub fn evaluate_set(&self, set: &MembershipSet) -> Result<f64, PsoError> {
        let runs = self.simulate(set)?;
        let total: f64 = runs
            .iter()
            .map(|m| fitness_of_metrics(m, self.miss_weight, self.delay_weight))
            .sum();
        Ok(total / runs.len().max(1) as f64)
    }

    pub fn evaluate(&self, position: &[f64]) -> Result<f64, PsoError> {
        self.evaluate_set(&decode(position)?)
    }
}

pub fn fitness(position: &[f64], objective: &TrafficFitness) -> Result<f64, PsoError> {
    objective.evaluate(position)
}

/// Trains membership functions against `objective`, returning the best set
/// found and the optimizer trace.
pub fn train(
    config: &SwarmConfig,
    objective: &TrafficFitness,
) -> Result<(MembershipSet, PsoResult), PsoError> {
    if objective.scenarios.is_empty() {
        return Err(PsoError::Config("no training scenarios".into()));
    }
    for s in &objective.scenarios {
        s.validate()?;
    }
    let bounds = search_bounds();
    let result = optimize(config, &bounds, |x| {
        objective.evaluate(x).unwrap_or(f64::INFINITY)
    })?;
    let set = decode(&result.best_position)?;
    Ok((set, result))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_and_bounds() {
        let b = search_bounds();
        assert_eq!(b.len(), DIMENSIONS);
        assert_eq!(DIMENSIONS, 33);
        assert_eq!(&b[0..3], &[(0.0, 10.0), (0.0, 10.0), (0.0, 20.0)]);
        assert_eq!(&b[9..12], &[(0.0, 50.0), (0.0, 50.0), (0.0, 100.0)]);
        // Terms 7 and 8 (1-based) are the ET terms.
        for k in [6, 7] {
            let t = trapezoid_bounds(k);
            assert_eq!(
                (t.upper, t.spread, t.center),
                ((0.0, 7.5), (0.0, 7.5), (0.0, 15.0))
            );
        }
        assert_eq!(&b[30..33], &[(0.0, 0.5), (0.0, 0.5), (0.0, 1.0)]);
    }

    #[test]
    fn decode_rejects_out_of_range() {
        let mut x: Vec<f64> = search_bounds()
            .iter()
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect();
        assert!(decode(&x).is_ok());
        x[0] = 11.0;
        assert!(matches!(decode(&x), Err(PsoError::Range { index: 0, .. })));
        assert!(matches!(decode(&x[..32]), Err(PsoError::Dimension { .. })));
        assert!(matches!(
            encode(&MembershipSet::hand_crafted()),
            Err(PsoError::NotTrapezoids)
        ));
    }

    #[test]
    fn inertia_schedule() {
        let cfg = SwarmConfig::default();
        assert_eq!(cfg.inertia(0), 0.9);
        assert!((cfg.inertia(cfg.iterations - 1) - 0.4).abs() < 1e-15);
        let cfg = SwarmConfig {
            iterations: 201,
            ..Default::default()
        };
        assert!((cfg.inertia(100) - 0.65).abs() < 1e-15);
    }

    #[test]
    fn fixed_point_update() {
        let mut p = Particle::new(vec![1.0, 2.0], vec![0.0, 0.0]);
        let g = p.position.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        update_particle(&mut p, &g, 0.7, 2.0, 2.0, &[(0.0, 5.0); 2], &mut rng);
        assert_eq!(p.position, vec![1.0, 2.0]);
        assert_eq!(p.velocity, vec![0.0, 0.0]);
    }

    #[test]
    fn cognitive_term_alone() {
        let mut p = Particle::new(vec![1.0, 4.0], vec![3.0, -3.0]);
        p.best_position = vec![2.0, 1.0];
        let wide = [(-10.0, 10.0); 2];
        update_with(
            &mut p,
            &[9.0, 9.0],
            0.0,
            2.0,
            0.0,
            &[1.0, 1.0],
            &[0.5, 0.5],
            &wide,
        );
        assert_eq!(p.velocity, vec![2.0, -6.0]);
        assert_eq!(p.position, vec![3.0, -2.0]);
    }

    #[test]
    fn clamping_zeroes_velocity() {
        let mut p = Particle::new(vec![1.0, 4.0], vec![3.0, -3.0]);
        p.best_position = vec![2.0, 1.0];
        let bounds = [(0.0, 10.0), (-1.0, 10.0)];
        update_with(
            &mut p,
            &[9.0, 9.0],
            0.0,
            2.0,
            0.0,
            &[1.0, 1.0],
            &[0.5, 0.5],
            &bounds,
        );
        assert_eq!(p.position, vec![3.0, -1.0]);
        assert_eq!(p.velocity, vec![2.0, 0.0]);
    }

    #[test]
    fn config_validation() {
        let cfg = SwarmConfig {
            particles: 1,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(PsoError::Config(_))));
        let cfg = SwarmConfig {
            inertia_start: 0.3,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn fitness_arithmetic() {
        let mut m = SimMetrics {
            veh_miss: 0,
            veh_pass: 1000,
            delay_sum: 0,
            veh_delay_s: 30.0,
            arrivals: [0; 8],
            queue_trace: vec![],
        };
        assert!((fitness_of_metrics(&m, 1.0, 1e-8) - 3e-7).abs() < 1e-20);
        m.veh_miss = 69;
        m.veh_pass = 6900;
        let f = fitness_of_metrics(&m, 1.0, 1e-8);
        assert!((f - 0.01 - 3e-7).abs() < 1e-15);
        m.veh_pass = 0;
        assert_eq!(fitness_of_metrics(&m, 1.0, 0.0), 69.0);
    }
}
