//! Euler–Maruyama simulation of the controlled jump-diffusion.
//!
//! Each grid step draws one standard normal per Brownian driver and one
//! Poisson count (plus its marks) per jump source, independent of the
//! policies in force. Two runs that share a seed therefore see identical noise
//! even when their policies differ, which is what paired deviation tests rely on.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Poisson, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ExitRule, ModelSpec, ThresholdPolicy};

/// One executed impulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionEvent {
    /// 1 or 2.
    pub player: u8,
    pub step: usize,
    pub time: f64,
    pub state_before: f64,
    /// `retarget − state_before`.
    pub impulse: f64,
    /// `λ·impulse + κ` under the acting player's policy.
    pub cost: f64,
}

/// Discretized trajectory. `states[k]` is the state at `times[k]` after any
/// interventions made at that grid time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub interventions: Vec<InterventionEvent>,
    /// First grid time the exit rule held, or the horizon.
    pub exit_time: f64,
    pub exited: bool,
    pub seed: u64,
}

impl PathRecord {
    pub fn intervention_count(&self, player: u8) -> usize {
        self.interventions.iter().filter(|e| e.player == player).count()
    }
}

/// Everything needed to simulate one controlled path except the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub model: ModelSpec,
    /// Player 1 and player 2 policies; either may be absent.
    pub policies: [Option<ThresholdPolicy>; 2],
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    #[serde(default)]
    pub exit: ExitRule,
}

impl Simulation {
    /// Checks every precondition, including policy admissibility.
    pub fn validate(&self) -> Result<()> {
        self.validate_structure()?;
        for p in self.policies.iter().flatten() {
            p.validate()?;
        }
        Ok(())
    }

    /// Like [`Simulation::validate`] but accepts degenerate bands; used by the
    /// admissibility detector to exercise chattering policies on purpose.
    pub fn validate_structure(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::input("dt", "must be finite and > 0"));
        }
        if !(self.horizon.is_finite() && self.horizon >= self.dt) {
            return Err(Error::input("horizon", "must be finite and ≥ dt"));
        }
        if self.x0.len() != self.model.dim() {
            return Err(Error::input("x0", format!("needs {} entries", self.model.dim())));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("x0", "entries must be finite"));
        }
        for c in &self.exit.conditions {
            if c.coordinate >= self.model.dim() {
                return Err(Error::input("exit.coordinate", "out of range"));
            }
        }
        if self.exit.holds(&self.x0) {
            return Err(Error::input("x0", "exit condition already holds at t = 0"));
        }
        for (i, p) in self.policies.iter().enumerate() {
            if let Some(p) = p {
                if p.coordinate >= self.model.dim() {
                    return Err(Error::input(format!("policies[{i}].coordinate"), "out of range"));
                }
            }
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        let r = self.horizon / self.dt;
        let n = r.round();
        if (r - n).abs() <= 1e-9 * r.max(1.0) {
            n as usize
        } else {
            r.ceil() as usize
        }
    }
}

/// Deterministic per-path seed: SplitMix64 finalizer applied to
/// `master XOR (index + 1)·0x9E3779B97F4A7C15`.
pub fn path_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ (index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Additive impulse response `Γ(x, z) = x + z`.
#[inline]
pub fn apply_impulse(state: f64, z: f64) -> f64 {
    state + z
}

/// Draws one step of the jump part for `coordinate`.
///
/// Returns `(Σ θ·z over sampled marks, dt·Σ θ·ω·E[z])`; the difference has mean zero.
pub fn sample_jump_increment<R: Rng + ?Sized>(
    model: &ModelSpec,
    coordinate: usize,
    dt: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if !(dt > 0.0) {
        return Err(Error::input("dt", "must be > 0"));
    }
    if coordinate >= model.dim() {
        return Err(Error::input("coordinate", "out of range"));
    }
    let mut inc = 0.0;
    let mut comp = 0.0;
    for src in &model.jumps {
        let theta = src.loading[coordinate];
        comp += dt * theta * src.intensity * src.marks.mean();
        if src.intensity > 0.0 {
            let pois = Poisson::new(src.intensity * dt)
                .map_err(|e| Error::input("jumps.intensity", e.to_string()))?;
            let n = pois.sample(rng) as u64;
            for _ in 0..n {
                inc += theta * src.marks.sample(rng);
            }
        }
    }
    Ok((inc, comp))
}

/// Callbacks driven by [`run_path`].
pub(crate) trait PathObserver {
    fn on_start(&mut self, _x0: &[f64]) {}
    /// `x_prev` is post-intervention at `t_prev`; `x` is pre-intervention at `t`.
    fn on_step(&mut self, _t_prev: f64, _x_prev: &[f64], _t: f64, _x: &[f64]) {}
    fn on_intervention(&mut self, _event: &InterventionEvent) {}
    /// State at grid time `t` after interventions.
    fn on_grid(&mut self, _t: f64, _x: &[f64]) {}
    fn on_end(&mut self, _t: f64, _x: &[f64], _exited: bool) {}
}

struct Prepared {
    poisson: Vec<Option<Poisson<f64>>>,
    last_poisson: Vec<Option<Poisson<f64>>>,
    compensator: Vec<f64>,
    last_compensator: Vec<f64>,
    n_steps: usize,
    last_dt: f64,
}

fn prepare(sim: &Simulation) -> Result<Prepared> {
    let n_steps = sim.n_steps();
    let last_dt = sim.horizon - (n_steps as f64 - 1.0) * sim.dt;
    let last_dt = if last_dt > 0.0 && (last_dt - sim.dt).abs() > 1e-12 * sim.dt {
        last_dt
    } else {
        sim.dt
    };
    let mk = |h: f64| -> Result<Vec<Option<Poisson<f64>>>> {
        sim.model
            .jumps
            .iter()
            .map(|s| {
                if s.intensity > 0.0 {
                    Poisson::new(s.intensity * h)
                        .map(Some)
                        .map_err(|e| Error::input("jumps.intensity", e.to_string()))
                } else {
                    Ok(None)
                }
            })
            .collect()
    };
    let comp = |h: f64| -> Vec<f64> {
        (0..sim.model.dim())
            .map(|i| {
                sim.model
                    .jumps
                    .iter()
                    .map(|s| h * s.loading[i] * s.intensity * s.marks.mean())
                    .sum()
            })
            .collect()
    };
    Ok(Prepared {
        poisson: mk(sim.dt)?,
        last_poisson: mk(last_dt)?,
        compensator: comp(sim.dt),
        last_compensator: comp(last_dt),
        n_steps,
        last_dt,
    })
}

/// Simulates one path, feeding `obs`. Preconditions are the caller's job.
pub(crate) fn run_path<O: PathObserver>(sim: &Simulation, seed: u64, obs: &mut O) -> Result<()> {
    let prep = prepare(sim)?;
    run_prepared(sim, &prep, seed, obs)
}

fn run_prepared<O: PathObserver>(sim: &Simulation, prep: &Prepared, seed: u64, obs: &mut O) -> Result<()> {
    let model = &sim.model;
    let d = model.dim();
    let m = model.n_brownian();
    let mut rng = rng_from_seed(seed);
    let mut x = sim.x0.clone();
    let mut x_prev = x.clone();
    let mut dw = vec![0.0; m];
    let mut jump = vec![0.0; d];
    let mut t_prev = 0.0;

    obs.on_start(&x);
    obs.on_grid(0.0, &x);

    for k in 1..=prep.n_steps {
        let last = k == prep.n_steps;
        let h = if last { prep.last_dt } else { sim.dt };
        let t = if last { sim.horizon } else { k as f64 * sim.dt };
        let sq = h.sqrt();
        for w in dw.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *w = sq * z;
        }
        jump.iter_mut().for_each(|v| *v = 0.0);
        let pois = if last { &prep.last_poisson } else { &prep.poisson };
        for (src, p) in model.jumps.iter().zip(pois) {
            if let Some(p) = p {
                let n = p.sample(&mut rng) as u64;
                for _ in 0..n {
                    let z = src.marks.sample(&mut rng);
                    for i in 0..d {
                        jump[i] += src.loading[i] * z;
                    }
                }
            }
        }
        let comp = if last { &prep.last_compensator } else { &prep.compensator };
        x_prev.copy_from_slice(&x);
        for i in 0..d {
            let mut dx = model.drift[i] * h + jump[i] - comp[i];
            for (s, w) in model.volatility[i].iter().zip(&dw) {
                dx += s * w;
            }
            x[i] += dx;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step: k - 1,
                time: t_prev,
                seed,
                message: format!("state left the reals; last valid state {x_prev:?}"),
            });
        }
        obs.on_step(t_prev, &x_prev, t, &x);

        if sim.exit.holds(&x) {
            obs.on_grid(t, &x);
            obs.on_end(t, &x, true);
            return Ok(());
        }

        for (idx, pol) in sim.policies.iter().enumerate() {
            let Some(pol) = pol else { continue };
            let c = pol.coordinate;
            if pol.triggered(x[c]) {
                let before = x[c];
                let z = pol.retarget - before;
                x[c] = pol.retarget;
                obs.on_intervention(&InterventionEvent {
                    player: idx as u8 + 1,
                    step: k,
                    time: t,
                    state_before: before,
                    impulse: z,
                    cost: pol.cost(z),
                });
            }
        }
        obs.on_grid(t, &x);
        t_prev = t;
    }
    obs.on_end(sim.horizon, &x, false);
    Ok(())
}

pub(crate) struct BatchRunner<'a> {
    sim: &'a Simulation,
    prep: Prepared,
}

impl<'a> BatchRunner<'a> {
    pub(crate) fn new(sim: &'a Simulation) -> Result<Self> {
        Ok(BatchRunner {
            sim,
            prep: prepare(sim)?,
        })
    }

    pub(crate) fn run<O: PathObserver>(&self, seed: u64, obs: &mut O) -> Result<()> {
        run_prepared(self.sim, &self.prep, seed, obs)
    }
}

#[derive(Default)]
struct Recorder {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    events: Vec<InterventionEvent>,
    exit_time: f64,
    exited: bool,
}

impl PathObserver for Recorder {
    fn on_intervention(&mut self, e: &InterventionEvent) {
        self.events.push(e.clone());
    }
    fn on_grid(&mut self, t: f64, x: &[f64]) {
        self.times.push(t);
        self.states.push(x.to_vec());
    }
    fn on_end(&mut self, t: f64, _x: &[f64], exited: bool) {
        self.exit_time = t;
        self.exited = exited;
    }
}

/// Simulates one controlled path and records it in full.
pub fn simulate_path(sim: &Simulation, seed: u64) -> Result<PathRecord> {
    sim.validate()?;
    record(sim, seed)
}

/// As [`simulate_path`] without the policy admissibility check.
pub fn simulate_path_unchecked(sim: &Simulation, seed: u64) -> Result<PathRecord> {
    sim.validate_structure()?;
    record(sim, seed)
}

fn record(sim: &Simulation, seed: u64) -> Result<PathRecord> {
    let mut rec = Recorder::default();
    run_path(sim, seed, &mut rec)?;
    Ok(PathRecord {
        times: rec.times,
        states: rec.states,
        interventions: rec.events,
        exit_time: rec.exit_time,
        exited: rec.exited,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Direction, JumpSource, MarkLaw};

    fn sim1(drift: f64, vol: f64) -> Simulation {
        Simulation {
            model: ModelSpec::one_dim(drift, vol),
            policies: [None, None],
            x0: vec![1.0],
            horizon: 1.0,
            dt: 0.01,
            exit: ExitRule::never(),
        }
    }

    #[test]
    fn deterministic_drift_is_exact_line() {
        let s = sim1(0.5, 0.0);
        let p = simulate_path(&s, 1).unwrap();
        assert_eq!(p.times.len(), 101);
        for (t, x) in p.times.iter().zip(&p.states) {
            assert!((x[0] - (1.0 + 0.5 * t)).abs() < 1e-12);
        }
        assert!(p.interventions.is_empty());
        assert!(!p.exited);
        assert_eq!(p.exit_time, 1.0);
    }

    #[test]
    fn same_seed_same_record() {
        let mut s = sim1(0.5, 1.0);
        s.policies[0] = Some(ThresholdPolicy::new(0, 1.5, 1.0, Direction::Above, 0.2, 0.1).unwrap());
        let a = simulate_path(&s, 99).unwrap();
        let b = simulate_path(&s, 99).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = simulate_path(&s, 100).unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn interventions_land_on_retarget() {
        let mut s = sim1(0.5, 1.0);
        s.horizon = 10.0;
        let pol = ThresholdPolicy::new(0, 1.5, 1.0, Direction::Above, 0.2, 0.1).unwrap();
        s.policies[0] = Some(pol.clone());
        let p = simulate_path(&s, 5).unwrap();
        assert!(!p.interventions.is_empty());
        for e in &p.interventions {
            assert!(e.state_before >= pol.trigger);
            assert_eq!(e.cost, pol.lambda * e.impulse + pol.kappa);
            let k = p.times.iter().position(|&t| t == e.time).unwrap();
            assert_eq!(p.states[k][0], pol.retarget);
        }
    }

    #[test]
    fn exit_stops_the_path() {
        let mut s = sim1(-1.0, 0.0);
        s.horizon = 5.0;
        s.exit = ExitRule::below(0, 0.0);
        let p = simulate_path(&s, 1).unwrap();
        assert!(p.exited);
        assert!((p.exit_time - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_intensity_draws_nothing() {
        let mut m = ModelSpec::one_dim(0.0, 1.0);
        m.jumps.push(JumpSource {
            intensity: 0.0,
            marks: MarkLaw::Constant { value: 1.0 },
            loading: vec![1.0],
        });
        let mut rng = rng_from_seed(1);
        assert_eq!(sample_jump_increment(&m, 0, 0.1, &mut rng).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn path_seeds_are_distinct() {
        let s: std::collections::HashSet<u64> = (0..10_000).map(|i| path_seed(42, i)).collect();
        assert_eq!(s.len(), 10_000);
    }
}
