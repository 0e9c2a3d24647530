//! Monte Carlo payoff estimation, deviation tests, singular-control
//! accounting and admissibility statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::duopoly::DuopolyProblem;
use crate::error::{Error, Result};
use crate::numerics::{mean_and_se, pairwise_sum};
use crate::sde::{path_seed, BatchRunner, InterventionEvent, PathObserver, Simulation};
use crate::zero_sum::ZeroSumProblem;

/// Running reward rate before discounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunningReward {
    Zero,
    /// `Σ wᵢxᵢ + constant`.
    Linear { weights: Vec<f64>, constant: f64 },
}

impl RunningReward {
    pub fn rate(&self, x: &[f64]) -> f64 {
        match self {
            RunningReward::Zero => 0.0,
            RunningReward::Linear { weights, constant } => {
                constant + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            }
        }
    }
}

/// Reward collected at the exit time or the horizon, before discounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerminalReward {
    Zero,
    Constant { value: f64 },
    /// `γ·x₁²·x₂²`.
    ProductSquares { gamma: f64 },
}

impl TerminalReward {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            TerminalReward::Zero => 0.0,
            TerminalReward::Constant { value } => *value,
            TerminalReward::ProductSquares { gamma } => {
                let p: f64 = x.iter().map(|v| v * v).product();
                gamma * p
            }
        }
    }
}

/// Contribution `slope·z + intercept` of each impulse `z` by `player`.
///
/// A charged cost `λz + κ` is `slope = −λ, intercept = −κ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpulseTerm {
    pub player: u8,
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffSpec {
    pub discount_rate: f64,
    pub running: RunningReward,
    pub impulse_terms: Vec<ImpulseTerm>,
    /// Scale impulse contributions by `e^{−r·t}`.
    pub discount_impulses: bool,
    pub terminal: TerminalReward,
}

impl PayoffSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.discount_rate.is_finite() && self.discount_rate >= 0.0) {
            return Err(Error::input("payoff.discount_rate", "must be finite and ≥ 0"));
        }
        for t in &self.impulse_terms {
            if !(t.player == 1 || t.player == 2) {
                return Err(Error::input("payoff.impulse_terms.player", "must be 1 or 2"));
            }
        }
        Ok(())
    }

    fn impulse_value(&self, e: &InterventionEvent) -> f64 {
        let mut v = 0.0;
        for t in &self.impulse_terms {
            if t.player == e.player {
                v += t.slope * e.impulse + t.intercept;
            }
        }
        if self.discount_impulses {
            v * (-self.discount_rate * e.time).exp()
        } else {
            v
        }
    }
}

/// The single payoff of the consumption game: player 1's discounted
/// consumption minus player 2's. Both players' impulses move the state down
/// to a retarget; the consumed amount follows from `x − κ − (1+λ)·amount`.
pub fn consumption_game_payoff(p: &ZeroSumProblem) -> PayoffSpec {
    PayoffSpec {
        discount_rate: p.delta,
        running: RunningReward::Zero,
        impulse_terms: vec![
            ImpulseTerm {
                player: 1,
                slope: -1.0 / (1.0 + p.lambda1),
                intercept: -p.kappa1 / (1.0 + p.lambda1),
            },
            ImpulseTerm {
                player: 2,
                slope: 1.0 / (1.0 + p.lambda2),
                intercept: p.kappa2 / (1.0 + p.lambda2),
            },
        ],
        discount_impulses: true,
        terminal: TerminalReward::Zero,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuopolyPayoffOptions {
    /// Charge impulse costs at `e^{−εt}`; the displayed payoff does not.
    pub discount_costs: bool,
    /// Include the terminal `γ·S₁²S₂²` reward.
    pub terminal: bool,
}

impl Default for DuopolyPayoffOptions {
    fn default() -> Self {
        DuopolyPayoffOptions {
            discount_costs: false,
            terminal: false,
        }
    }
}

/// Firm `firm`'s payoff: discounted `αx_own − βx_rival` less its own impulse costs.
pub fn duopoly_firm_payoff(p: &DuopolyProblem, firm: usize, opts: DuopolyPayoffOptions) -> PayoffSpec {
    let f = &p.firms[firm];
    let mut weights = vec![0.0; 2];
    weights[firm] = f.alpha;
    weights[1 - firm] = -f.beta;
    PayoffSpec {
        discount_rate: p.epsilon,
        running: RunningReward::Linear { weights, constant: 0.0 },
        impulse_terms: vec![ImpulseTerm {
            player: firm as u8 + 1,
            slope: -f.lambda,
            intercept: -f.kappa,
        }],
        discount_impulses: opts.discount_costs,
        terminal: if opts.terminal {
            TerminalReward::ProductSquares { gamma: f.gamma }
        } else {
            TerminalReward::Zero
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffEstimate {
    pub mean: f64,
    pub se: f64,
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
}

struct PayoffObserver<'a> {
    specs: &'a [PayoffSpec],
    running: Vec<f64>,
    impulses: Vec<f64>,
    terminal: Vec<f64>,
}

impl<'a> PayoffObserver<'a> {
    fn new(specs: &'a [PayoffSpec]) -> Self {
        let n = specs.len();
        PayoffObserver {
            specs,
            running: vec![0.0; n],
            impulses: vec![0.0; n],
            terminal: vec![0.0; n],
        }
    }

    fn totals(&self) -> Vec<f64> {
        (0..self.specs.len())
            .map(|i| self.running[i] + self.impulses[i] + self.terminal[i])
            .collect()
    }
}

impl PathObserver for PayoffObserver<'_> {
    fn on_step(&mut self, t_prev: f64, x_prev: &[f64], t: f64, x: &[f64]) {
        let h = t - t_prev;
        for (i, s) in self.specs.iter().enumerate() {
            if matches!(s.running, RunningReward::Zero) {
                continue;
            }
            let a = s.running.rate(x_prev) * (-s.discount_rate * t_prev).exp();
            let b = s.running.rate(x) * (-s.discount_rate * t).exp();
            self.running[i] += 0.5 * h * (a + b);
        }
    }

    fn on_intervention(&mut self, e: &InterventionEvent) {
        for (i, s) in self.specs.iter().enumerate() {
            self.impulses[i] += s.impulse_value(e);
        }
    }

    fn on_end(&mut self, t: f64, x: &[f64], _exited: bool) {
        for (i, s) in self.specs.iter().enumerate() {
            self.terminal[i] = s.terminal.value(x) * (-s.discount_rate * t).exp();
        }
    }
}

/// Per-path payoffs, `out[spec][path]`, for paths `0..n_paths` of `master_seed`.
pub fn payoff_samples(sim: &Simulation, specs: &[PayoffSpec], n_paths: usize, master_seed: u64) -> Result<Vec<Vec<f64>>> {
    sim.validate()?;
    payoff_samples_unchecked(sim, specs, n_paths, master_seed)
}

fn payoff_samples_unchecked(sim: &Simulation, specs: &[PayoffSpec], n_paths: usize, master_seed: u64) -> Result<Vec<Vec<f64>>> {
    if n_paths < 2 {
        return Err(Error::input("n_paths", "must be ≥ 2"));
    }
    for s in specs {
        s.validate()?;
    }
    let runner = BatchRunner::new(sim)?;
    let rows: Vec<Vec<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let seed = path_seed(master_seed, k);
            let mut obs = PayoffObserver::new(specs);
            runner.run(seed, &mut obs)?;
            let v = obs.totals();
            if let Some(bad) = v.iter().find(|p| !p.is_finite()) {
                return Err(Error::NonFinite {
                    step: 0,
                    time: f64::NAN,
                    seed,
                    message: format!("path payoff is {bad}"),
                });
            }
            Ok(v)
        })
        .collect::<Result<_>>()?;
    let mut out = vec![Vec::with_capacity(n_paths); specs.len()];
    for row in rows {
        for (i, v) in row.into_iter().enumerate() {
            out[i].push(v);
        }
    }
    Ok(out)
}

fn summarize(xs: &[f64], dt: f64, seed: u64) -> PayoffEstimate {
    let (mean, se) = mean_and_se(xs);
    PayoffEstimate {
        mean,
        se,
        n_paths: xs.len(),
        dt,
        seed,
    }
}

/// Estimates several payoffs from one batch of paths.
pub fn estimate_payoffs(sim: &Simulation, specs: &[PayoffSpec], n_paths: usize, seed: u64) -> Result<Vec<PayoffEstimate>> {
    let samples = payoff_samples(sim, specs, n_paths, seed)?;
    Ok(samples.iter().map(|s| summarize(s, sim.dt, seed)).collect())
}

pub fn estimate_payoff(sim: &Simulation, spec: &PayoffSpec, n_paths: usize, seed: u64) -> Result<PayoffEstimate> {
    Ok(estimate_payoffs(sim, std::slice::from_ref(spec), n_paths, seed)?[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyField {
    Trigger,
    Retarget,
}

/// Scales one threshold of one player's policy by `1 + rel`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyEdit {
    pub player: u8,
    pub field: PolicyField,
    pub rel: f64,
}

impl PolicyEdit {
    /// Trigger and retarget edits at `±10%` and `±25%`.
    pub fn standard_set(player: u8) -> Vec<PolicyEdit> {
        let mut v = Vec::new();
        for field in [PolicyField::Trigger, PolicyField::Retarget] {
            for rel in [-0.25, -0.10, 0.10, 0.25] {
                v.push(PolicyEdit { player, field, rel });
            }
        }
        v
    }

    pub fn apply(&self, sim: &Simulation) -> Result<Simulation> {
        let idx = match self.player {
            1 => 0,
            2 => 1,
            _ => return Err(Error::input("edit.player", "must be 1 or 2")),
        };
        let mut out = sim.clone();
        let pol = out.policies[idx]
            .as_mut()
            .ok_or_else(|| Error::input("edit.player", "player has no policy to perturb"))?;
        match self.field {
            PolicyField::Trigger => pol.trigger *= 1.0 + self.rel,
            PolicyField::Retarget => pol.retarget *= 1.0 + self.rel,
        }
        pol.validate().map_err(|e| {
            Error::input(
                "perturbations",
                format!("edit {:?} {:+}% of player {} is inadmissible: {e}", self.field, self.rel * 100.0, self.player),
            )
        })?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationEntry {
    pub edit: PolicyEdit,
    pub estimate: PayoffEstimate,
    /// Perturbed minus baseline payoff of the deviating player.
    pub gap: f64,
    pub gap_se: f64,
    /// Gain to the deviator: `gap` for a maximizer, `−gap` for a minimizer.
    pub improvement: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    /// Baseline estimate of each player's payoff.
    pub baseline: [PayoffEstimate; 2],
    pub entries: Vec<DeviationEntry>,
    pub paired: bool,
    pub senses: [Sense; 2],
}

impl DeviationReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.verdict == Verdict::Pass)
    }

    pub fn entries_for(&self, player: u8) -> impl Iterator<Item = &DeviationEntry> {
        self.entries.iter().filter(move |e| e.edit.player == player)
    }
}

/// Significance multiple for deviation verdicts.
pub const SE_MULTIPLE: f64 = 3.0;

/// Perturbs one player's policy at a time, rival fixed, and tests whether the
/// deviating player gains by more than `3·SE`.
///
/// `payoffs[i]` is player `i+1`'s payoff. With `paired`, every run reuses the
/// baseline seeds, so the gap is a per-path difference.
pub fn deviation_test(
    sim: &Simulation,
    payoffs: &[PayoffSpec; 2],
    senses: [Sense; 2],
    edits: &[PolicyEdit],
    n_paths: usize,
    seed: u64,
    paired: bool,
) -> Result<DeviationReport> {
    let base = payoff_samples(sim, payoffs, n_paths, seed)?;
    let baseline = [
        summarize(&base[0], sim.dt, seed),
        summarize(&base[1], sim.dt, seed),
    ];
    let mut entries = Vec::with_capacity(edits.len());
    for (k, edit) in edits.iter().enumerate() {
        let perturbed = edit.apply(sim)?;
        let i = edit.player as usize - 1;
        let run_seed = if paired {
            seed
        } else {
            seed ^ (0xD1B5_4A32_D192_ED03u64.wrapping_mul(k as u64 + 1))
        };
        let spec = std::slice::from_ref(&payoffs[i]);
        let samples = payoff_samples(&perturbed, spec, n_paths, run_seed)?.remove(0);
        let estimate = summarize(&samples, sim.dt, run_seed);
        let (gap, gap_se) = if paired {
            let d: Vec<f64> = samples.iter().zip(&base[i]).map(|(a, b)| a - b).collect();
            mean_and_se(&d)
        } else {
            (
                estimate.mean - baseline[i].mean,
                (estimate.se.powi(2) + baseline[i].se.powi(2)).sqrt(),
            )
        };
        let improvement = match senses[i] {
            Sense::Maximize => gap,
            Sense::Minimize => -gap,
        };
        let verdict = if improvement <= SE_MULTIPLE * gap_se {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        log::debug!("deviation {edit:?}: gap {gap:.6e} ± {gap_se:.2e} → {verdict:?}");
        entries.push(DeviationEntry {
            edit: *edit,
            estimate,
            gap,
            gap_se,
            improvement,
            verdict,
        });
    }
    Ok(DeviationReport {
        baseline,
        entries,
        paired,
        senses,
    })
}

/// Right-continuous nondecreasing step function starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub times: Vec<f64>,
    /// Level from `times[k]` until the next jump.
    pub levels: Vec<f64>,
}

impl StepFunction {
    pub fn at(&self, t: f64) -> f64 {
        match self.times.iter().rposition(|&s| s <= t) {
            Some(k) => self.levels[k],
            None => 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.levels.last().copied().unwrap_or(0.0)
    }
}

/// Singular-control form of an impulse sequence.
///
/// Each impulse `η` at time `ρ` carries the atom `η + κ/λ`, so `∫λ dν` over the
/// atom is `λη + κ`, the impulse cost. Positive atoms make up `ν⁺`, negative
/// ones `ν⁻` (by magnitude).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularRepresentation {
    pub nu_plus: StepFunction,
    pub nu_minus: StepFunction,
    /// `∫λ d(ν⁺ − ν⁻)` up to the exit time.
    pub cost_integral: f64,
    pub lambda: f64,
    pub kappa: f64,
    /// Event times used.
    pub times: Vec<f64>,
}

impl SingularRepresentation {
    /// Cumulative impulse `Σ_{ρ ≤ t} η` recovered from the measures.
    pub fn impulse_level(&self, t: f64) -> f64 {
        let n = self.times.iter().filter(|&&s| s <= t).count() as f64;
        self.nu_plus.at(t) - self.nu_minus.at(t) - self.kappa / self.lambda * n
    }
}

/// Builds `ν±` from `(time, impulse)` events of one player up to `tau_s`.
pub fn singular_representation(events: &[(f64, f64)], lambda: f64, kappa: f64, tau_s: f64) -> Result<SingularRepresentation> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::input("lambda", "must be > 0 for the singular representation"));
    }
    if !kappa.is_finite() {
        return Err(Error::input("kappa", "must be finite"));
    }
    for w in events.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::input("events", "event times must be strictly increasing"));
        }
    }
    let shift = kappa / lambda;
    let mut plus = StepFunction { times: vec![], levels: vec![] };
    let mut minus = StepFunction { times: vec![], levels: vec![] };
    let mut times = Vec::new();
    let mut atoms = Vec::new();
    for &(t, eta) in events.iter().filter(|e| e.0 <= tau_s) {
        let atom = eta + shift;
        times.push(t);
        atoms.push(lambda * atom);
        let (f, a) = if atom >= 0.0 { (&mut plus, atom) } else { (&mut minus, -atom) };
        let prev = f.total();
        f.times.push(t);
        f.levels.push(prev + a);
    }
    Ok(SingularRepresentation {
        nu_plus: plus,
        nu_minus: minus,
        cost_integral: pairwise_sum(&atoms),
        lambda,
        kappa,
        times,
    })
}

/// Impulse-cost accounting `Σ_{ρ ≤ τ}(λη + κ)`, as charged by the payoff estimator.
pub fn impulse_cost_sum(events: &[(f64, f64)], lambda: f64, kappa: f64, tau_s: f64) -> f64 {
    let v: Vec<f64> = events
        .iter()
        .filter(|e| e.0 <= tau_s)
        .map(|&(_, eta)| crate::model::intervention_cost(lambda, kappa, eta))
        .collect();
    pairwise_sum(&v)
}

/// Paths that intervene on more than this fraction of grid steps are flagged as chattering.
pub const CHATTER_FRACTION: f64 = 0.2;

/// Relative spread of mean counts allowed across the dt ladder.
pub const LADDER_TOLERANCE: f64 = 0.10;

/// Refining dt from the coarsest to the finest rung may raise the mean count
/// by at most this factor before the policy is flagged as chattering. A band
/// collapsed onto its trigger intervenes at a rate growing like `1/√dt`.
pub const CHATTER_GROWTH: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityRow {
    pub dt: f64,
    pub mean_count: [f64; 2],
    pub se_count: [f64; 2],
    pub max_count: [usize; 2],
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub rows: Vec<AdmissibilityRow>,
    /// Largest relative spread of mean counts across the ladder, per player.
    pub spread: [f64; 2],
    pub blow_up: bool,
    pub verdict: Verdict,
}

#[derive(Default)]
struct Counter {
    counts: [usize; 2],
}

impl PathObserver for Counter {
    fn on_intervention(&mut self, e: &InterventionEvent) {
        self.counts[e.player as usize - 1] += 1;
    }
}

/// Intervention counts over the horizon for each `dt` in `dts`.
///
/// Runs without the policy admissibility check so degenerate bands can be
/// diagnosed. Chattering marks the policy inadmissible: a path intervening on
/// more than a fifth of all steps, or mean counts growing by more than
/// [`CHATTER_GROWTH`] from the coarsest to the finest `dt`.
pub fn admissibility_stats(sim: &Simulation, dts: &[f64], n_paths: usize, seed: u64) -> Result<AdmissibilityReport> {
    if dts.is_empty() {
        return Err(Error::input("dt ladder", "must not be empty"));
    }
    if n_paths < 2 {
        return Err(Error::input("n_paths", "must be ≥ 2"));
    }
    let mut rows = Vec::new();
    let mut blow_up = false;
    for &dt in dts {
        let mut s = sim.clone();
        s.dt = dt;
        s.validate_structure()?;
        let runner = BatchRunner::new(&s)?;
        let counts: Vec<[usize; 2]> = (0..n_paths as u64)
            .into_par_iter()
            .map(|k| {
                let mut c = Counter::default();
                runner.run(path_seed(seed, k), &mut c)?;
                Ok(c.counts)
            })
            .collect::<Result<_>>()?;
        let steps = s.n_steps();
        let mut mean_count = [0.0; 2];
        let mut se_count = [0.0; 2];
        let mut max_count = [0; 2];
        for p in 0..2 {
            let v: Vec<f64> = counts.iter().map(|c| c[p] as f64).collect();
            let (m, se) = mean_and_se(&v);
            mean_count[p] = m;
            se_count[p] = se;
            max_count[p] = counts.iter().map(|c| c[p]).max().unwrap_or(0);
            if max_count[p] as f64 > CHATTER_FRACTION * steps as f64 {
                blow_up = true;
            }
        }
        rows.push(AdmissibilityRow {
            dt,
            mean_count,
            se_count,
            max_count,
            steps,
        });
    }
    let coarse = rows.iter().max_by(|a, b| a.dt.total_cmp(&b.dt)).expect("non-empty");
    let fine = rows.iter().min_by(|a, b| a.dt.total_cmp(&b.dt)).expect("non-empty");
    for p in 0..2 {
        if fine.mean_count[p] > CHATTER_GROWTH * coarse.mean_count[p].max(1.0 / n_paths as f64) && fine.dt < coarse.dt {
            blow_up = true;
        }
    }
    let mut spread = [0.0; 2];
    for p in 0..2 {
        let lo = rows.iter().map(|r| r.mean_count[p]).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|r| r.mean_count[p]).fold(0.0, f64::max);
        spread[p] = if hi > 0.0 { (hi - lo) / hi } else { 0.0 };
    }
    let verdict = if !blow_up && spread.iter().all(|s| *s < LADDER_TOLERANCE) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(AdmissibilityReport {
        rows,
        spread,
        blow_up,
        verdict,
    })
}
