//! Reproducible Monte Carlo experiments and lower-bound constructions.
//!
//! Each experiment turns an [`ExperimentConfig`] into an [`ExperimentReport`]:
//! a CSV-ready table with one row per grid cell plus named pass/fail
//! assertions and report-only diagnostics. Trials run in parallel, each with
//! its own generator derived from `(master_seed, cell, trial)`, and results
//! are collected in trial order, so a report depends only on its config.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{kl, kl_exact, kl_monte_carlo, tv_exact, tv_monte_carlo, tv_sum_stats};
use crate::error::{Error, Result};
use crate::estimate::{estimate_central_ranking, estimate_spread, SampleBatch};
use crate::expfam::{chernoff_tail_bound, OneParamFamily};
use crate::model::{BlockPartition, MallowsBlockModel};
use crate::numeric::{median, tv_pmf};
use crate::perm::Permutation;

/// Largest `m` for which the transposition family is checked by enumeration.
const CENTER_FAMILY_EXACT_MAX_M: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Concentration,
    Recovery,
    SpreadScaling,
    SingleSample,
    FanoBlocks,
    FanoCenters,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Concentration,
        ExperimentKind::Recovery,
        ExperimentKind::SpreadScaling,
        ExperimentKind::SingleSample,
        ExperimentKind::FanoBlocks,
        ExperimentKind::FanoCenters,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Concentration => "concentration",
            ExperimentKind::Recovery => "recovery",
            ExperimentKind::SpreadScaling => "spread_scaling",
            ExperimentKind::SingleSample => "single_sample",
            ExperimentKind::FanoBlocks => "fano_blocks",
            ExperimentKind::FanoCenters => "fano_centers",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::domain(format!("unknown experiment kind {s:?}")))
    }
}

/// Parameters of one experiment run. Field meaning per kind:
///
/// | kind | `m` | `phis` | `n_grid` |
/// |------|-----|--------|----------|
/// | concentration | `[m_kl, m_tv]` | sampling spreads; `phi_alt` alternatives | sample sizes |
/// | recovery | item counts | `[phi]` | extra sizes below `ceil(constant · ln m)` |
/// | spread_scaling | `[m, m_1, m_2, ...]`: main size, then the `n = 1` column | `d` spreads | sample sizes at the main size |
/// | single_sample | item counts | `[phi]` | unused |
/// | fano_blocks | `[m]` | unused; `eps`, `constant = c` | unused |
/// | fano_centers | item counts | `[phi]` | unused |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub m: Vec<usize>,
    pub d: usize,
    pub phis: Vec<f64>,
    #[serde(default)]
    pub phi_alt: Vec<f64>,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub eps: f64,
    #[serde(default)]
    pub constant: f64,
    #[serde(default = "default_mc_draws")]
    pub mc_draws: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_mc_draws() -> usize {
    100_000
}

impl ExperimentConfig {
    /// The grid each experiment is designed around.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let base = ExperimentConfig {
            kind,
            m: vec![],
            d: 1,
            phis: vec![],
            phi_alt: vec![],
            n_grid: vec![1],
            trials: 1,
            master_seed: 0x5eed,
            eps: 0.0,
            constant: 0.0,
            mc_draws: default_mc_draws(),
            output: None,
        };
        match kind {
            ExperimentKind::Concentration => ExperimentConfig {
                m: vec![10, 5],
                phis: vec![0.3, 0.5, 0.7],
                phi_alt: vec![0.4, 0.6, 0.8],
                n_grid: vec![1, 5, 25],
                trials: 10_000,
                ..base
            },
            ExperimentKind::Recovery => ExperimentConfig {
                m: vec![8, 16, 32],
                phis: vec![0.5],
                n_grid: vec![1, 3, 9, 27],
                trials: 200,
                constant: 30.0,
                ..base
            },
            ExperimentKind::SpreadScaling => ExperimentConfig {
                m: vec![20, 40, 160, 640],
                d: 2,
                phis: vec![0.3, 0.6],
                n_grid: vec![10, 40, 160, 640],
                trials: 200,
                ..base
            },
            ExperimentKind::SingleSample => ExperimentConfig {
                m: vec![100, 400, 1600],
                phis: vec![0.5],
                trials: 500,
                ..base
            },
            ExperimentKind::FanoBlocks => ExperimentConfig {
                m: vec![64],
                d: 8,
                eps: 0.05,
                constant: 8.0,
                ..base
            },
            ExperimentKind::FanoCenters => ExperimentConfig {
                m: vec![4, 6],
                phis: vec![0.5],
                mc_draws: 20_000,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::domain("trials must be at least 1"));
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(Error::domain("n grid must be nonempty with positive entries"));
        }
        if self.m.is_empty() || self.m.contains(&0) {
            return Err(Error::domain("m grid must be nonempty with positive entries"));
        }
        for &phi in self.phis.iter().chain(&self.phi_alt) {
            if !(0.0..=1.0).contains(&phi) {
                return Err(Error::domain(format!("spread {phi} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub assertions: Vec<Assertion>,
    /// Report-only quantities, never asserted.
    pub diagnostics: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct Summary<'a> {
    kind: ExperimentKind,
    master_seed: u64,
    passed: bool,
    assertions: &'a [Assertion],
    diagnostics: &'a BTreeMap<String, f64>,
    config: &'a ExperimentConfig,
}

impl ExperimentReport {
    fn new(config: &ExperimentConfig, header: &[&str]) -> Self {
        Self {
            kind: config.kind,
            config: config.clone(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            assertions: Vec::new(),
            diagnostics: BTreeMap::new(),
        }
    }

    fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.assertions.push(Assertion {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    fn note(&mut self, key: impl Into<String>, value: f64) {
        self.diagnostics.insert(key.into(), value);
    }

    /// All assertions hold.
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn assertion(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name == name)
    }

    /// Column values by header name.
    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let idx = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx].as_str()).collect())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(std::io::Error::from)?;
        for r in &self.rows {
            w.write_record(r).map_err(std::io::Error::from)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn summary_json(&self) -> String {
        let s = Summary {
            kind: self.kind,
            master_seed: self.config.master_seed,
            passed: self.passed(),
            assertions: &self.assertions,
            diagnostics: &self.diagnostics,
            config: &self.config,
        };
        serde_json::to_string_pretty(&s).expect("summary serializes")
    }

    /// Writes `<kind>.csv` and `<kind>.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{}.csv", self.kind)), self.to_csv()?)?;
        std::fs::write(dir.join(format!("{}.json", self.kind)), self.summary_json() + "\n")?;
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial` in grid cell `cell`.
pub fn trial_seed(master_seed: u64, cell: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master_seed) ^ cell) ^ trial)
}

pub fn trial_rng(master_seed: u64, cell: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(trial_seed(master_seed, cell, trial))
}

/// Runs `f(trial, rng)` for every trial in parallel; results in trial order.
fn run_trials<T, F>(cfg: &ExperimentConfig, cell: u64, trials: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> T + Sync,
{
    (0..trials as u64)
        .into_par_iter()
        .map(|t| f(&mut trial_rng(cfg.master_seed, cell, t)))
        .collect()
}

fn binomial_se(p: f64, trials: usize) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn ratio_window_ok(r: f64) -> bool {
    (1.4..=2.9).contains(&r)
}

pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    match cfg.kind {
        ExperimentKind::Concentration => run_concentration_check(cfg),
        ExperimentKind::Recovery => run_recovery_sweep(cfg),
        ExperimentKind::SpreadScaling => run_spread_scaling(cfg),
        ExperimentKind::SingleSample => run_single_sample(cfg),
        ExperimentKind::FanoBlocks => run_fano_blocks(cfg),
        ExperimentKind::FanoCenters => run_fano_centers(cfg),
    }
}

/// Empirical frequency of `mean(T)·(θ' - θ) ≥ α̇(θ')·(θ' - θ)` under `n`
/// draws from `model`, over `trials` repetitions.
fn tail_frequency(cfg: &ExperimentConfig, cell: u64, model: &MallowsBlockModel, theta_alt: f64, n: usize) -> Result<f64> {
    let family = model.block_family(0)?;
    let theta = model.phis()[0].ln();
    let threshold = family.alpha_dot(theta_alt);
    let sign = theta_alt - theta;
    let hits = run_trials(cfg, cell, cfg.trials, |rng| {
        let total: u64 = (0..n).map(|_| model.sample_discordance(rng).total()).sum();
        (total as f64 / n as f64 - threshold) * sign >= 0.0
    })
    .into_iter()
    .filter(|&h| h)
    .count();
    Ok(hits as f64 / cfg.trials as f64)
}

/// Tail frequencies of the single-block sufficient statistic against the
/// KL bound `exp(-n KL(P_θ' ‖ P_θ))` and the TV bound `exp(-2n TV²)`.
pub fn run_concentration_check(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let m_kl = cfg.m[0];
    let m_tv = cfg.m.get(1).copied();
    let mut rep = ExperimentReport::new(
        cfg,
        &["bound", "m", "phi", "phi_alt", "n", "empirical", "se", "bound_value", "holds"],
    );
    let mut all_kl = true;
    let mut all_tv = true;
    let mut monotone = true;
    let mut cell = 0u64;
    let mut worst_slack = f64::INFINITY;
    for (label, m) in [("kl", Some(m_kl)), ("tv", m_tv)] {
        let Some(m) = m else { continue };
        for &phi in &cfg.phis {
            let a = MallowsBlockModel::single_parameter(Permutation::identity(m), phi)?;
            let family = a.block_family(0)?;
            for &phi_alt in &cfg.phi_alt {
                let b = a.with_phis(vec![phi_alt])?;
                let tv = if label == "tv" { tv_exact(&b, &a)?.value } else { 0.0 };
                let mut prev_bound = f64::INFINITY;
                for &n in &cfg.n_grid {
                    cell += 1;
                    let bound = if label == "kl" {
                        chernoff_tail_bound(&family, phi.ln(), phi_alt.ln(), n)?
                    } else {
                        (-2.0 * n as f64 * tv * tv).exp()
                    };
                    let freq = tail_frequency(cfg, cell, &a, phi_alt.ln(), n)?;
                    let se = binomial_se(freq, cfg.trials);
                    let holds = freq <= bound + 3.0 * se;
                    worst_slack = worst_slack.min(bound + 3.0 * se - freq);
                    if label == "kl" {
                        all_kl &= holds;
                        monotone &= bound <= prev_bound;
                    } else {
                        all_tv &= holds;
                    }
                    prev_bound = bound;
                    rep.row(vec![
                        label.into(),
                        m.to_string(),
                        phi.to_string(),
                        phi_alt.to_string(),
                        n.to_string(),
                        freq.to_string(),
                        se.to_string(),
                        bound.to_string(),
                        holds.to_string(),
                    ]);
                }
            }
        }
    }
    rep.check("kl_bound_holds", all_kl, "empirical tail ≤ exp(-n KL) + 3 SE in every cell");
    rep.check("kl_bound_nonincreasing_in_n", monotone, "bound nonincreasing along the n grid");
    if m_tv.is_some() {
        rep.check("tv_bound_holds", all_tv, "empirical tail ≤ exp(-2n TV²) + 3 SE in every cell");
    }
    rep.note("worst_slack", worst_slack);
    Ok(rep)
}

/// Central-ranking recovery rate over an `n` grid ending at
/// `ceil(constant · ln m)`, with nested samples per trial.
pub fn run_recovery_sweep(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let phi = *cfg.phis.first().ok_or_else(|| Error::domain("recovery needs one spread"))?;
    if cfg.constant <= 0.0 {
        return Err(Error::domain("recovery needs a positive constant C"));
    }
    let mut rep = ExperimentReport::new(cfg, &["m", "phi", "n", "calibrated", "recovered", "trials", "rate", "se"]);
    let mut calibrated_ok = true;
    let mut monotone = true;
    let mut min_calibrated = f64::INFINITY;
    for (mi, &m) in cfg.m.iter().enumerate() {
        let n_c = (cfg.constant * (m as f64).ln()).ceil().max(1.0) as usize;
        let mut grid: Vec<usize> = cfg.n_grid.iter().copied().filter(|&n| n < n_c).collect();
        grid.push(n_c);
        grid.sort_unstable();
        grid.dedup();
        let n_max = n_c;
        let cell = mi as u64;
        let mut center_rng = trial_rng(cfg.master_seed, cell, u64::MAX);
        let mut order: Vec<usize> = (1..=m).collect();
        order.shuffle(&mut center_rng);
        let model = MallowsBlockModel::single_parameter(Permutation::from_ordering(&order)?, phi)?;
        let outcomes = run_trials(cfg, cell, cfg.trials, |rng| {
            let samples: Vec<Permutation> = (0..n_max).map(|_| model.sample(rng)).collect();
            grid.iter()
                .map(|&n| {
                    let batch = SampleBatch::new(samples[..n].to_vec()).expect("n ≥ 1");
                    estimate_central_ranking(&batch).expect("nonempty batch") == *model.pi0()
                })
                .collect::<Vec<bool>>()
        });
        let mut prev = -1.0;
        for (gi, &n) in grid.iter().enumerate() {
            let hits = outcomes.iter().filter(|o| o[gi]).count();
            let rate = hits as f64 / cfg.trials as f64;
            monotone &= rate >= prev;
            prev = rate;
            if n == n_c {
                calibrated_ok &= rate >= 0.95;
                min_calibrated = min_calibrated.min(rate);
            }
            rep.row(vec![
                m.to_string(),
                phi.to_string(),
                n.to_string(),
                (n == n_c).to_string(),
                hits.to_string(),
                cfg.trials.to_string(),
                rate.to_string(),
                binomial_se(rate, cfg.trials).to_string(),
            ]);
        }
    }
    rep.check(
        "calibrated_recovery",
        calibrated_ok,
        format!("rate ≥ 0.95 at n = ceil({} ln m) for every m; worst {min_calibrated}", cfg.constant),
    );
    rep.check("recovery_nondecreasing_in_n", monotone, "recovery rate nondecreasing along each n grid");

    // point mass: one sample is the center
    let m0 = cfg.m[0];
    let exact = MallowsBlockModel::single_parameter(Permutation::reversal(m0), 0.0)?;
    let ok = run_trials(cfg, 1_000, cfg.trials.min(50), |rng| {
        let batch = SampleBatch::new(vec![exact.sample(rng)]).expect("n = 1");
        estimate_central_ranking(&batch).expect("nonempty") == *exact.pi0()
    })
    .into_iter()
    .all(|x| x);
    rep.check("point_mass_recovered_from_one_sample", ok, "phi = 0, n = 1");

    // negative control: near-uniform, one sample
    let control = MallowsBlockModel::single_parameter(Permutation::identity(8), 0.99)?;
    let hits = run_trials(cfg, 1_001, cfg.trials, |rng| {
        let batch = SampleBatch::new(vec![control.sample(rng)]).expect("n = 1");
        estimate_central_ranking(&batch).expect("nonempty") == *control.pi0()
    })
    .into_iter()
    .filter(|&x| x)
    .count();
    let rate = hits as f64 / cfg.trials as f64;
    rep.note("negative_control_rate", rate);
    rep.check(
        "negative_control_fails",
        rate <= 0.5,
        format!("m = 8, n = 1, phi = 0.99: rate {rate}"),
    );
    Ok(rep)
}

/// Median `‖phi_hat - phi*‖₂` with known center over `trials` batches of size `n`.
fn median_spread_error(cfg: &ExperimentConfig, cell: u64, model: &MallowsBlockModel, n: usize, trials: usize) -> Result<f64> {
    let errs = run_trials(cfg, cell, trials, |rng| -> Result<f64> {
        let batch = SampleBatch::new((0..n).map(|_| model.sample(rng)).collect())?;
        let est = estimate_spread(&batch, model.pi0(), model.partition())?;
        Ok(l2(&est.phi_hat, model.phis()))
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    Ok(median(&errs))
}

fn block_model(m: usize, phis: &[f64], cell: u64, seed: u64) -> Result<MallowsBlockModel> {
    let part = BlockPartition::contiguous(m, phis.len())?;
    let mut rng = trial_rng(seed, cell, u64::MAX);
    let mut order: Vec<usize> = (1..=m).collect();
    order.shuffle(&mut rng);
    MallowsBlockModel::new(Permutation::from_ordering(&order)?, phis.to_vec(), part)
}

fn scaling_assertion(rep: &mut ExperimentReport, name: &str, medians: &[f64]) {
    let ratios: Vec<f64> = medians.windows(2).map(|w| w[0] / w[1]).collect();
    let ok = !ratios.is_empty() && ratios.iter().all(|&r| ratio_window_ok(r));
    for (i, r) in ratios.iter().enumerate() {
        rep.note(format!("{name}_ratio_{i}"), *r);
    }
    rep.check(name, ok, format!("median error ratios {ratios:?} within [1.4, 2.9]"));
}

/// Spread error with known center as `n · m*` grows by factors of 4.
pub fn run_spread_scaling(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    if cfg.phis.len() != cfg.d {
        return Err(Error::domain(format!("need {} spreads, got {}", cfg.d, cfg.phis.len())));
    }
    let mut rep = ExperimentReport::new(cfg, &["series", "m", "m_star", "n", "n_times_m_star", "median_error"]);
    let m_main = cfg.m[0];
    let main = block_model(m_main, &cfg.phis, 0, cfg.master_seed)?;
    let m_star = main.partition().m_star();
    let mut medians = Vec::new();
    for (gi, &n) in cfg.n_grid.iter().enumerate() {
        let med = median_spread_error(cfg, 1 + gi as u64, &main, n, cfg.trials)?;
        medians.push(med);
        rep.row(vec![
            "n_grid".into(),
            m_main.to_string(),
            m_star.to_string(),
            n.to_string(),
            (n * m_star).to_string(),
            med.to_string(),
        ]);
    }
    scaling_assertion(&mut rep, "error_halves_per_4x_n", &medians);

    let mut single = Vec::new();
    for (mi, &m) in cfg.m.iter().enumerate().skip(1) {
        let model = block_model(m, &cfg.phis, 100 + mi as u64, cfg.master_seed)?;
        let ms = model.partition().m_star();
        let med = median_spread_error(cfg, 200 + mi as u64, &model, 1, cfg.trials)?;
        single.push(med);
        rep.row(vec![
            "single_sample".into(),
            m.to_string(),
            ms.to_string(),
            "1".into(),
            ms.to_string(),
            med.to_string(),
        ]);
    }
    if single.len() >= 2 {
        scaling_assertion(&mut rep, "single_sample_error_halves_per_4x_m", &single);
    }

    // large-n sanity
    let sanity = block_model(50, &cfg.phis, 300, cfg.master_seed)?;
    let med = median_spread_error(cfg, 301, &sanity, 10_000, 20)?;
    rep.row(vec![
        "sanity".into(),
        "50".into(),
        sanity.partition().m_star().to_string(),
        "10000".into(),
        (10_000 * sanity.partition().m_star()).to_string(),
        med.to_string(),
    ]);
    rep.check("large_n_error_below_0.02", med < 0.02, format!("m = 50, n = 10^4: median error {med}"));

    let point = block_model(m_main, &vec![0.0; cfg.d], 400, cfg.master_seed)?;
    let med = median_spread_error(cfg, 401, &point, cfg.n_grid[0], 10)?;
    rep.check("point_mass_recovered_exactly", med == 0.0, format!("phi* = 0: median error {med}"));
    Ok(rep)
}

/// One sample, known center: error against `m` for a single spread, plus a
/// four-block check against `3 sqrt(d / m*)`.
pub fn run_single_sample(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let phi = *cfg.phis.first().ok_or_else(|| Error::domain("single_sample needs one spread"))?;
    let mut rep = ExperimentReport::new(cfg, &["d", "m", "m_star", "median_error", "rate_bound"]);
    let mut medians = Vec::new();
    for (mi, &m) in cfg.m.iter().enumerate() {
        let model = block_model(m, &[phi], mi as u64, cfg.master_seed)?;
        let med = median_spread_error(cfg, 10 + mi as u64, &model, 1, cfg.trials)?;
        medians.push(med);
        rep.row(vec![
            "1".into(),
            m.to_string(),
            m.to_string(),
            med.to_string(),
            (1.0 / m as f64).sqrt().to_string(),
        ]);
    }
    scaling_assertion(&mut rep, "error_halves_per_4x_m", &medians);
    let (&m_last, &med_last) = (cfg.m.last().expect("nonempty"), medians.last().expect("nonempty"));
    rep.check(
        "largest_m_error_at_most_0.05",
        med_last <= 0.05,
        format!("m = {m_last}: median error {med_last}"),
    );

    let mixed = [0.2, 0.4, 0.6, 0.8];
    let model = block_model(400, &mixed, 50, cfg.master_seed)?;
    let m_star = model.partition().m_star();
    let med = median_spread_error(cfg, 51, &model, 1, cfg.trials)?;
    let bound = 3.0 * (mixed.len() as f64 / m_star as f64).sqrt();
    rep.row(vec![
        mixed.len().to_string(),
        "400".into(),
        m_star.to_string(),
        med.to_string(),
        (bound / 3.0).to_string(),
    ]);
    rep.check(
        "four_blocks_within_rate",
        med <= bound,
        format!("d = 4, m = 400: median error {med} ≤ {bound}"),
    );
    Ok(rep)
}

/// A binary code of length `d` with minimum Hamming distance `min_distance`.
/// Coordinate `i` of a codeword is bit `d - 1 - i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeBook {
    pub d: usize,
    pub min_distance: usize,
    pub codewords: Vec<u64>,
}

impl CodeBook {
    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn bit(&self, word: usize, coord: usize) -> bool {
        (self.codewords[word] >> (self.d - 1 - coord)) & 1 == 1
    }

    /// Smallest pairwise distance, by direct scan.
    pub fn measured_min_distance(&self) -> usize {
        let mut best = usize::MAX;
        for (i, a) in self.codewords.iter().enumerate() {
            for b in &self.codewords[i + 1..] {
                best = best.min((a ^ b).count_ones() as usize);
            }
        }
        best
    }
}

/// Greedy lexicographic code of length `d` with distance `ceil(d/8)`,
/// stopped once it holds `2^ceil(d/8)` codewords.
pub fn build_code(d: usize) -> Result<CodeBook> {
    if !(8..=64).contains(&d) {
        return Err(Error::domain(format!("code length {d} outside 8..=64")));
    }
    let dist = d.div_ceil(8);
    let target = 1usize << dist;
    let last = if d == 64 { u64::MAX } else { (1u64 << d) - 1 };
    let mut words: Vec<u64> = Vec::with_capacity(target);
    let mut cand = 0u64;
    loop {
        if words.iter().all(|w| (w ^ cand).count_ones() as usize >= dist) {
            words.push(cand);
            if words.len() == target {
                break;
            }
        }
        if cand == last {
            break;
        }
        cand += 1;
    }
    Ok(CodeBook {
        d,
        min_distance: dist,
        codewords: words,
    })
}

/// The block-spread family: one model per codeword, block `i` at spread
/// `1/2` where the codeword has a 1 and `1/2 - c eps / sqrt(m)` where it has a 0.
#[derive(Debug, Clone)]
pub struct BlockFamily {
    pub code: CodeBook,
    pub phi_low: f64,
    pub models: Vec<MallowsBlockModel>,
}

pub fn build_fano_block_family(m: usize, d: usize, eps: f64, c: f64) -> Result<BlockFamily> {
    if d == 0 || !m.is_multiple_of(d) {
        return Err(Error::domain(format!("block count {d} must divide m = {m}")));
    }
    if eps.is_nan() || c.is_nan() || eps <= 0.0 || c <= 0.0 {
        return Err(Error::domain("eps and c must be positive"));
    }
    let phi_low = 0.5 - c * eps / (m as f64).sqrt();
    if phi_low < 0.25 {
        return Err(Error::domain(format!(
            "1/2 - c eps / sqrt(m) = {phi_low} falls below 1/4"
        )));
    }
    let code = build_code(d)?;
    let part = BlockPartition::contiguous(m, d)?;
    let models = (0..code.len())
        .map(|w| {
            let phis = (0..d).map(|i| if code.bit(w, i) { 0.5 } else { phi_low }).collect();
            MallowsBlockModel::new(Permutation::identity(m), phis, part.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockFamily { code, phi_low, models })
}

/// TV between the summed statistics of the blocks where the pair differs in
/// one direction, taking the better of the two directions.
fn grouped_sum_stat_tv(a: &MallowsBlockModel, b: &MallowsBlockModel) -> Result<f64> {
    let mut up = Vec::new();
    let mut down = Vec::new();
    for (i, (&pa, &pb)) in a.phis().iter().zip(b.phis()).enumerate() {
        if pa > pb {
            up.push(i);
        } else if pa < pb {
            down.push(i);
        }
    }
    let mut best = 0.0f64;
    for group in [up, down] {
        if !group.is_empty() {
            let tv = tv_pmf(&a.sum_stat_distribution_over(&group)?, &b.sum_stat_distribution_over(&group)?);
            best = best.max(tv);
        }
    }
    Ok(best)
}

pub fn run_fano_blocks(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let m = cfg.m[0];
    let c = cfg.constant;
    let fam = build_fano_block_family(m, cfg.d, cfg.eps, c)?;
    let kl_bound = 32.0 * c * c * cfg.eps * cfg.eps;
    let mut rep = ExperimentReport::new(
        cfg,
        &["a", "b", "hamming", "kl", "kl_bound", "max_block_tv", "grouped_tv", "target_tv"],
    );
    let target = c * cfg.eps / 2.0;
    let mut kl_ok = true;
    let mut min_grouped = f64::INFINITY;
    for i in 0..fam.models.len() {
        for j in 0..fam.models.len() {
            if i == j {
                continue;
            }
            let (a, b) = (&fam.models[i], &fam.models[j]);
            let k = kl(a, b)?.value;
            kl_ok &= k <= kl_bound;
            let mut max_block = 0.0f64;
            for blk in 0..cfg.d {
                if a.phis()[blk] != b.phis()[blk] {
                    max_block = max_block.max(tv_sum_stats(a, b, blk)?.value);
                }
            }
            let grouped = grouped_sum_stat_tv(a, b)?;
            min_grouped = min_grouped.min(grouped);
            rep.row(vec![
                i.to_string(),
                j.to_string(),
                (fam.code.codewords[i] ^ fam.code.codewords[j]).count_ones().to_string(),
                k.to_string(),
                kl_bound.to_string(),
                max_block.to_string(),
                grouped.to_string(),
                target.to_string(),
            ]);
        }
    }
    let gv_count = 1usize << (cfg.d / 8);
    rep.check(
        "codebook_size",
        fam.code.len() >= gv_count,
        format!("{} codewords ≥ 2^floor(d/8) = {gv_count}", fam.code.len()),
    );
    let measured = fam.code.measured_min_distance();
    rep.check(
        "codebook_min_distance",
        measured >= cfg.d.div_ceil(8),
        format!("minimum distance {measured} ≥ ceil(d/8) = {}", cfg.d.div_ceil(8)),
    );
    rep.check("kl_within_bound", kl_ok, format!("all pairwise KL ≤ 32 c² eps² = {kl_bound}"));
    rep.note("phi_low", fam.phi_low);
    rep.note("min_grouped_tv", min_grouped);
    rep.note("target_tv", target);
    Ok(rep)
}

/// Models centered at the transpositions `(2i-1 2i)`, all with spread `phi`.
pub fn build_fano_center_family(m: usize, phi: f64) -> Result<Vec<MallowsBlockModel>> {
    if m < 4 {
        return Err(Error::domain(format!("transposition family needs m ≥ 4, got {m}")));
    }
    (1..=m / 2)
        .map(|i| MallowsBlockModel::single_parameter(Permutation::transposition(m, 2 * i - 1, 2 * i)?, phi))
        .collect()
}

pub fn run_fano_centers(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let phi = cfg.phis.first().copied().unwrap_or(0.5);
    let kl_bound = 2.0 * std::f64::consts::LN_2;
    let mut rep = ExperimentReport::new(cfg, &["m", "a", "b", "method", "kl", "kl_se", "tv", "tv_se"]);
    let (mut kl_ok, mut tv_ok) = (true, true);
    let mut cell = 0u64;
    for &m in &cfg.m {
        let family = build_fano_center_family(m, phi)?;
        for i in 0..family.len() {
            for j in (i + 1)..family.len() {
                let (a, b) = (&family[i], &family[j]);
                cell += 1;
                let (k, tv, method) = if m <= CENTER_FAMILY_EXACT_MAX_M {
                    (kl_exact(a, b)?, tv_exact(a, b)?, "enumeration")
                } else {
                    let mut rng = trial_rng(cfg.master_seed, cell, 0);
                    (
                        kl_monte_carlo(a, b, cfg.mc_draws, &mut rng)?,
                        tv_monte_carlo(a, b, cfg.mc_draws, &mut rng)?,
                        "monte_carlo",
                    )
                };
                let (kse, tse) = (k.error_bar.unwrap_or(0.0), tv.error_bar.unwrap_or(0.0));
                kl_ok &= k.value <= kl_bound + 3.0 * kse;
                tv_ok &= tv.value >= 0.25 - 3.0 * tse;
                rep.row(vec![
                    m.to_string(),
                    i.to_string(),
                    j.to_string(),
                    method.into(),
                    k.value.to_string(),
                    kse.to_string(),
                    tv.value.to_string(),
                    tse.to_string(),
                ]);
            }
        }
    }
    rep.check("kl_at_most_2ln2", kl_ok, format!("pairwise KL ≤ {kl_bound}"));
    rep.check("tv_at_least_quarter", tv_ok, "pairwise TV ≥ 1/4");
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDeviation {
    pub block: usize,
    pub stages: usize,
    pub mad: f64,
    pub sd: f64,
    /// `mad / sd`; absent for a point mass.
    pub ratio: Option<f64>,
    pub mad_le_sd: bool,
    /// `Σ_j MAD(V_j) / (2 sqrt(2k))` for the block's `k` stages.
    pub tukey_lower: f64,
    pub tukey_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub blocks: Vec<BlockDeviation>,
}

impl DeviationReport {
    pub fn all_hold(&self) -> bool {
        self.blocks.iter().all(|b| b.mad_le_sd && b.tukey_holds)
    }
}

/// Mean absolute deviation against standard deviation for every block's
/// sum statistic, from its exact pmf.
pub fn mad_vs_std_diagnostic(model: &MallowsBlockModel) -> Result<DeviationReport> {
    let mut blocks = Vec::with_capacity(model.d());
    for i in 0..model.d() {
        let pmf = model.sum_stat_distribution(i)?;
        let mean: f64 = pmf.iter().enumerate().map(|(s, p)| s as f64 * p).sum();
        let mad: f64 = pmf.iter().enumerate().map(|(s, p)| p * (s as f64 - mean).abs()).sum();
        let var: f64 = pmf.iter().enumerate().map(|(s, p)| p * (s as f64 - mean).powi(2)).sum();
        let sd = var.sqrt();
        let stages = model.partition().block(i)?;
        let k = stages.len();
        let stage_mads: f64 = stages.iter().map(|&j| model.stage(j).mad()).sum();
        let tukey_lower = stage_mads / (2.0 * (2.0 * k as f64).sqrt());
        let tol = 1e-12 * (1.0 + sd);
        blocks.push(BlockDeviation {
            block: i,
            stages: k,
            mad,
            sd,
            ratio: (sd > 0.0).then(|| mad / sd),
            mad_le_sd: mad <= sd + tol,
            tukey_lower,
            tukey_holds: mad + tol >= tukey_lower,
        });
    }
    Ok(DeviationReport { blocks })
}
