//! Outcome threshold localisation by bisection, repeated on refined grids.

use chemoflux_core::diagnostics::RunOutcome;
use chemoflux_core::grid::refined_parameters;
use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::scenario::run_scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub enum SweepParam {
    /// Total mass `M`.
    #[serde(rename = "M")]
    Mass,
}

impl std::str::FromStr for SweepParam {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "M" | "mass" => Ok(SweepParam::Mass),
            other => Err(HarnessError::Sweep(format!("unsupported sweep parameter `{other}`"))),
        }
    }
}

impl SweepParam {
    fn apply(&self, config: &mut RunConfig, value: f64) {
        match self {
            SweepParam::Mass => config.mass = value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub bracket: (f64, f64),
    /// Extra levels, each doubling the cell count.
    pub refinements: usize,
    /// Bisection steps per level.
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Probe {
    pub value: f64,
    pub outcome: RunOutcome,
    pub t_final: f64,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SweepLevel {
    pub n: usize,
    pub ratio: f64,
    /// Probes sorted by parameter value.
    pub probes: Vec<Probe>,
    pub bisected: bool,
    /// Final bracket, oriented low to high.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub estimate: Option<f64>,
    pub half_width: Option<f64>,
    /// At most one change of class along the sorted probes.
    pub monotone: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SweepReport {
    pub parameter: SweepParam,
    pub bracket: (f64, f64),
    pub levels: Vec<SweepLevel>,
    /// Estimate on the finest bisected level.
    pub estimate: Option<f64>,
    /// `max(half width, |drift|)` on the finest level.
    pub uncertainty: Option<f64>,
    /// Finest estimate minus the one before it.
    pub drift: Option<f64>,
    pub monotone: bool,
}

fn blows_up(outcome: RunOutcome) -> bool {
    outcome == RunOutcome::Blowup
}

fn probe(config: &RunConfig, param: SweepParam, value: f64) -> Result<Probe> {
    let mut config = config.clone();
    param.apply(&mut config, value);
    let result = run_scenario(&config)?;
    let run = &result.report.run;
    Ok(Probe { value, outcome: run.outcome, t_final: run.t_final, steps: run.steps })
}

fn run_level(config: &RunConfig, spec: &SweepSpec) -> Result<SweepLevel> {
    let (lo, hi) = spec.bracket;
    if lo == hi {
        let p = probe(config, spec.param, lo)?;
        return Ok(SweepLevel {
            n: config.grid.n,
            ratio: config.grid.ratio,
            probes: vec![p],
            bisected: false,
            lower: None,
            upper: None,
            estimate: None,
            half_width: None,
            monotone: true,
            note: Some("degenerate bracket; no bisection".into()),
        });
    }
    let (a, b) = rayon::join(|| probe(config, spec.param, lo), || probe(config, spec.param, hi));
    let mut probes = vec![a?, b?];
    let mut level = SweepLevel {
        n: config.grid.n,
        ratio: config.grid.ratio,
        probes: Vec::new(),
        bisected: false,
        lower: None,
        upper: None,
        estimate: None,
        half_width: None,
        monotone: true,
        note: None,
    };
    if let Some(p) = probes.iter().find(|p| !p.outcome.is_physical()) {
        level.note = Some(format!("numerical failure at {} = {}", spec_name(spec), p.value));
        level.probes = probes;
        return Ok(level);
    }
    let lo_class = blows_up(probes[0].outcome);
    if lo_class == blows_up(probes[1].outcome) {
        level.note = Some(format!(
            "both endpoints classify as {:?}; no bisection",
            probes[0].outcome
        ));
        level.probes = probes;
        return Ok(level);
    }
    let (mut left, mut right) = (lo, hi);
    for _ in 0..spec.iterations {
        let mid = 0.5 * (left + right);
        let p = probe(config, spec.param, mid)?;
        if !p.outcome.is_physical() {
            level.note = Some(format!("numerical failure at {} = {mid}", spec_name(spec)));
            probes.push(p);
            break;
        }
        if blows_up(p.outcome) == lo_class {
            left = mid;
        } else {
            right = mid;
        }
        probes.push(p);
    }
    probes.sort_by(|x, y| x.value.total_cmp(&y.value));
    let changes = probes
        .windows(2)
        .filter(|w| blows_up(w[0].outcome) != blows_up(w[1].outcome))
        .count();
    level.monotone = changes <= 1;
    level.bisected = true;
    level.lower = Some(left.min(right));
    level.upper = Some(left.max(right));
    level.estimate = Some(0.5 * (left + right));
    level.half_width = Some(0.5 * (right - left).abs());
    level.probes = probes;
    Ok(level)
}

fn spec_name(spec: &SweepSpec) -> &'static str {
    match spec.param {
        SweepParam::Mass => "M",
    }
}

/// Bisects the outcome threshold on the base grid and on `refinements` refined
/// grids (`N -> 2N`, `r -> sqrt(r)`, `dt_max -> dt_max / 2`). Levels run in
/// parallel.
pub fn sweep(config: &RunConfig, spec: &SweepSpec) -> Result<SweepReport> {
    let (lo, hi) = spec.bracket;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
        return Err(HarnessError::Sweep(format!("bracket must satisfy 0 < a <= b, got [{lo}, {hi}]")));
    }
    config.validate()?;
    let mut configs = vec![config.clone()];
    for _ in 0..spec.refinements {
        let mut next = configs.last().unwrap().clone();
        let (n, ratio) = refined_parameters(next.grid.n, next.grid.ratio);
        next.grid.n = n;
        next.grid.ratio = ratio;
        next.step.dt_max *= 0.5;
        configs.push(next);
    }
    let levels: Vec<SweepLevel> =
        configs.par_iter().map(|c| run_level(c, spec)).collect::<Result<_>>()?;
    let bisected: Vec<&SweepLevel> = levels.iter().filter(|l| l.bisected).collect();
    let estimate = bisected.last().and_then(|l| l.estimate);
    let drift = match bisected.as_slice() {
        [.., prev, last] => Some(last.estimate.unwrap() - prev.estimate.unwrap()),
        _ => None,
    };
    let uncertainty = bisected
        .last()
        .and_then(|l| l.half_width)
        .map(|hw| hw.max(drift.map_or(0.0, f64::abs)));
    let monotone = levels.iter().all(|l| l.monotone);
    Ok(SweepReport { parameter: spec.param, bracket: spec.bracket, levels, estimate, uncertainty, drift, monotone })
}
