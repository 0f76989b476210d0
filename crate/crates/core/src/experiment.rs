//! Parameter sweeps driven by a TOML file.
//!
//! An experiment varies one quantity over a grid, solves the configured
//! pricing scheme at every grid point and writes one CSV row per point plus a
//! JSON sidecar holding the resolved spec. Output is a pure function of the
//! spec, so reruns are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::caching::CacheSet;
use crate::equilibrium::{solve_delta_default, PriceVector, SystemConfig};
use crate::error::{Error, Result, Violation};
use crate::pricing_differentiated::{p3_objective, solve_algorithm2, solve_p3, DEFAULT_MAX_ITER};
use crate::pricing_uniform::{solve_p2, REGULARITY_GRID};
use crate::simulator::{estimate_profit, SampleMode};
use crate::valuation::{check_regularity, ValuationModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub system: SystemConfig,
    pub sweep: Sweep,
    pub pricing: Pricing,
    #[serde(default)]
    pub simulation: Option<Simulation>,
    #[serde(default)]
    pub solver: SolverSettings,
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: SweepAxis,
    /// Strictly increasing grid.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepAxis {
    /// Fixed price of one program, in s/cycle.
    Price { program: usize },
    /// `f_c`, in cycles/s.
    EdgeFrequency,
    /// Number of devices `M`.
    Wds,
    /// Popularity of one program; the others are rescaled to keep the sum at 1.
    Popularity { program: usize },
}

impl SweepAxis {
    pub fn column(&self) -> String {
        match self {
            SweepAxis::Price { program } => format!("price_{program}"),
            SweepAxis::EdgeFrequency => "edge_frequency".into(),
            SweepAxis::Wds => "wds".into(),
            SweepAxis::Popularity { program } => format!("popularity_{program}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Pricing {
    /// One price for all programs, cache by knapsack.
    Uniform,
    /// Per-program prices. Without `cache` the best cache is searched.
    Differentiated {
        #[serde(default)]
        cache: Option<Vec<usize>>,
    },
    /// Given prices, no optimization. Without `cache` every program is cached.
    FixedPrices {
        prices: Vec<f64>,
        #[serde(default)]
        cache: Option<Vec<usize>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Simulation {
    pub replications: u64,
    pub seed: u64,
    #[serde(default)]
    pub sampling: SampleMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    /// Price tolerance in s/cycle; defaults to `1e-14` times the support width.
    #[serde(default)]
    pub price_tolerance: Option<f64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { price_tolerance: None, max_iter: DEFAULT_MAX_ITER }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    /// CSV file; the sidecar goes next to it with a `.meta.json` extension.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub spec: ExperimentSpec,
    pub warnings: Vec<String>,
}

/// Parses TOML, reporting the failing field path.
pub fn parse_spec(text: &str, path: &Path) -> Result<ExperimentSpec> {
    let parse_error = |field: String, message: String| Error::Parse { path: path.to_path_buf(), field, message };
    let de = toml::de::Deserializer::parse(text).map_err(|e| parse_error(String::new(), e.to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        parse_error(field, e.into_inner().message().to_string())
    })
}

#[derive(Deserialize)]
struct SystemSection {
    system: SystemConfig,
}

/// Reads a system configuration, either a bare file or the `[system]` table
/// of an experiment file.
pub fn load_system(path: &Path) -> Result<SystemConfig> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let parse_error = |field: String, message: String| Error::Parse { path: path.to_path_buf(), field, message };
    let table: toml::Table = toml::from_str(&text).map_err(|e| parse_error(String::new(), e.message().to_string()))?;
    let de = toml::de::Deserializer::parse(&text).map_err(|e| parse_error(String::new(), e.to_string()))?;
    let config = if table.contains_key("system") {
        serde_path_to_error::deserialize::<_, SystemSection>(de).map(|s| s.system)
    } else {
        serde_path_to_error::deserialize::<_, SystemConfig>(de)
    }
    .map_err(|e| {
        let field = e.path().to_string();
        parse_error(field, e.into_inner().message().to_string())
    })?;
    config.validate()?;
    Ok(config)
}

/// Reads, parses and fully validates an experiment file.
pub fn validate_config(path: &Path) -> Result<Validated> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let spec = parse_spec(&text, path)?;
    let warnings = spec.validate()?;
    Ok(Validated { spec, warnings })
}

fn cache_violations(cache: &Option<Vec<usize>>, programs: usize, path: &str) -> Vec<Violation> {
    let Some(cache) = cache else { return Vec::new() };
    let mut out = Vec::new();
    for (i, &j) in cache.iter().enumerate() {
        if j >= programs {
            out.push(Violation::new(format!("{path}[{i}]"), format!("program {j} does not exist")));
        }
    }
    if cache.windows(2).any(|w| w[0] >= w[1]) {
        out.push(Violation::new(path, "must list programs in increasing order without repeats"));
    }
    out
}

impl ExperimentSpec {
    /// Collects every violation, then checks each grid point's system.
    /// Returns warnings that do not prevent a run.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut out = self.system.violations("system");
        let n = self.system.num_programs();

        let values = &self.sweep.values;
        if values.is_empty() {
            out.push(Violation::new("sweep.values", "grid must not be empty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            out.push(Violation::new(format!("sweep.values[{i}]"), "must be finite"));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            out.push(Violation::new("sweep.values", "grid must be strictly increasing"));
        }
        match self.sweep.axis {
            SweepAxis::Price { program } | SweepAxis::Popularity { program } if program >= n => {
                out.push(Violation::new("sweep.axis.program", format!("program {program} does not exist")));
            }
            SweepAxis::Price { .. } if !matches!(self.pricing, Pricing::FixedPrices { .. }) => {
                out.push(Violation::new("sweep.axis", "a price sweep needs the fixed_prices scheme"));
            }
            SweepAxis::Wds if values.iter().any(|&v| !(v >= 1.0 && v.fract() == 0.0 && v <= f64::from(u32::MAX))) => {
                out.push(Violation::new("sweep.values", "device counts must be positive integers"));
            }
            _ => {}
        }

        match &self.pricing {
            Pricing::Uniform => {}
            Pricing::Differentiated { cache } => out.extend(cache_violations(cache, n, "pricing.cache")),
            Pricing::FixedPrices { prices, cache } => {
                if prices.len() != n {
                    out.push(Violation::new("pricing.prices", format!("expected {n} prices, got {}", prices.len())));
                }
                if let Some(i) = prices.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
                    out.push(Violation::new(format!("pricing.prices[{i}]"), "must be finite and >= 0"));
                }
                out.extend(cache_violations(cache, n, "pricing.cache"));
            }
        }

        if let Some(sim) = &self.simulation {
            if sim.replications == 0 {
                out.push(Violation::new("simulation.replications", "must be >= 1"));
            }
            if let SampleMode::Physical(p) = &sim.sampling {
                out.extend(p.violations("simulation.sampling"));
            }
        }
        if let Some(tol) = self.solver.price_tolerance {
            if !(tol.is_finite() && tol > 0.0) {
                out.push(Violation::new("solver.price_tolerance", "must be > 0"));
            }
        }
        if self.solver.max_iter == 0 {
            out.push(Violation::new("solver.max_iter", "must be >= 1"));
        }
        if self.output.path.as_os_str().is_empty() {
            out.push(Violation::new("output.path", "must not be empty"));
        }
        Error::check(out)?;

        for (i, &v) in values.iter().enumerate() {
            let config = self.config_at(v);
            let violations: Vec<Violation> = config
                .violations("system")
                .into_iter()
                .map(|x| Violation::new(format!("sweep.values[{i}] -> {}", x.field), x.constraint))
                .collect();
            Error::check(violations)?;
        }
        if !check_regularity(&self.system.valuation, REGULARITY_GRID)? {
            return Err(Error::invalid("system.valuation", "valuation model is not regular"));
        }

        let mut warnings = Vec::new();
        if let ValuationModel::Uniform { upper, .. } = self.system.valuation {
            for &v in values {
                let fc = self.config_at(v).edge_frequency;
                if upper <= 1.0 / fc {
                    warnings.push(format!(
                        "upper valuation bound {upper:e} <= 1/f_c = {:e} at f_c = {fc:e}: \
                         no device ever offloads and the uniform-price closed form does not apply",
                        1.0 / fc
                    ));
                }
            }
        }
        Ok(warnings)
    }

    /// System at one grid value.
    pub fn config_at(&self, value: f64) -> SystemConfig {
        let mut config = self.system.clone();
        match self.sweep.axis {
            SweepAxis::Price { .. } => {}
            SweepAxis::EdgeFrequency => config.edge_frequency = value,
            SweepAxis::Wds => config.wds = value as u32,
            SweepAxis::Popularity { program } => {
                let programs = &mut config.catalog.programs;
                let rest: f64 =
                    programs.iter().enumerate().filter(|(j, _)| *j != program).map(|(_, p)| p.popularity).sum();
                let others = programs.len().saturating_sub(1) as f64;
                for (j, p) in programs.iter_mut().enumerate() {
                    p.popularity = if j == program {
                        value
                    } else if rest > 0.0 {
                        p.popularity * (1.0 - value) / rest
                    } else {
                        (1.0 - value) / others
                    };
                }
            }
        }
        config
    }

    fn prices_at(&self, value: f64) -> Option<Vec<f64>> {
        let Pricing::FixedPrices { prices, .. } = &self.pricing else { return None };
        let mut prices = prices.clone();
        if let SweepAxis::Price { program } = self.sweep.axis {
            prices[program] = value;
        }
        Some(prices)
    }

    pub fn columns(&self) -> Vec<String> {
        let n = self.system.num_programs();
        let mut cols = vec![self.sweep.axis.column(), "status".into(), "message".into(), "delta".into()];
        cols.extend((0..n).map(|j| format!("price_{j}")));
        cols.extend((0..n).map(|j| format!("offload_{j}")));
        cols.extend((0..n).map(|j| format!("cached_{j}")));
        cols.push("profit".into());
        match self.pricing {
            Pricing::Uniform => cols.push("residual".into()),
            Pricing::Differentiated { .. } => {
                cols.extend(["iterations", "max_residual", "uniform_price", "uniform_profit"].map(String::from));
            }
            Pricing::FixedPrices { .. } => {}
        }
        if self.simulation.is_some() {
            for j in 0..n {
                cols.push(format!("sim_offload_{j}"));
                cols.push(format!("sim_offload_{j}_hw"));
            }
            cols.extend(
                ["sim_profit", "sim_profit_hw", "sim_offloaders", "sim_offloaders_hw", "sim_max_deviation_gain"]
                    .map(String::from),
            );
        }
        cols
    }

    pub fn meta_path(&self, out_dir: Option<&Path>) -> PathBuf {
        self.csv_path(out_dir).with_extension("meta.json")
    }

    pub fn csv_path(&self, out_dir: Option<&Path>) -> PathBuf {
        match out_dir {
            Some(dir) => dir.join(&self.output.path),
            None => self.output.path.clone(),
        }
    }
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

struct Solved {
    delta: f64,
    prices: Vec<f64>,
    offload: Vec<f64>,
    cache: CacheSet,
    profit: f64,
    converged: bool,
    extra: Vec<String>,
}

fn cache_of(n: usize, cache: &Option<Vec<usize>>) -> CacheSet {
    match cache {
        Some(c) => CacheSet::from_indices(n, c),
        None => CacheSet::full(n),
    }
}

fn solve_point(spec: &ExperimentSpec, config: &SystemConfig, value: f64) -> Result<Solved> {
    let n = config.num_programs();
    let tol = spec.solver.price_tolerance.unwrap_or_else(|| config.default_price_tolerance());
    match &spec.pricing {
        Pricing::Uniform => {
            let r = solve_p2(config, tol)?;
            Ok(Solved {
                delta: r.delta,
                prices: vec![r.price; n],
                offload: vec![r.offload_prob; n],
                cache: r.cache,
                profit: r.expected_profit,
                converged: true,
                extra: vec![num(r.residual)],
            })
        }
        Pricing::Differentiated { cache } => {
            let r = match cache {
                Some(c) => solve_algorithm2(config, &CacheSet::from_indices(n, c), None, tol, spec.solver.max_iter)?,
                None => solve_p3(config, tol, spec.solver.max_iter)?,
            };
            let baseline = solve_p2(config, tol)?;
            Ok(Solved {
                delta: r.delta,
                prices: r.prices.into_inner(),
                offload: r.offload_prob,
                cache: r.cache,
                profit: r.expected_profit,
                converged: r.converged,
                extra: vec![
                    r.iterations.to_string(),
                    num(r.max_residual),
                    num(baseline.price),
                    num(baseline.expected_profit),
                ],
            })
        }
        Pricing::FixedPrices { cache, .. } => {
            let cache = cache_of(n, cache);
            let prices =
                PriceVector::with_sentinel(config, &cache, |j| spec.prices_at(value).expect("fixed scheme")[j]);
            let eq = solve_delta_default(config, &prices)?;
            let profit = p3_objective(config, &cache, &prices)?;
            let offload = (0..n).map(|j| if cache.contains(j) { eq.offload_prob[j] } else { 0.0 }).collect();
            Ok(Solved {
                delta: eq.delta,
                prices: prices.into_inner(),
                offload,
                cache,
                profit,
                converged: true,
                extra: Vec::new(),
            })
        }
    }
}

fn evaluate(spec: &ExperimentSpec, value: f64, width: usize) -> Vec<String> {
    let config = spec.config_at(value);
    let axis = match spec.sweep.axis {
        SweepAxis::Wds => (value as u32).to_string(),
        _ => num(value),
    };
    let attempt = || -> Result<Vec<String>> {
        let s = solve_point(spec, &config, value)?;
        let mut row = vec![
            axis.clone(),
            if s.converged { "ok" } else { "not_converged" }.to_string(),
            String::new(),
            num(s.delta),
        ];
        row.extend(s.prices.iter().map(|&p| num(p)));
        row.extend(s.offload.iter().map(|&p| num(p)));
        row.extend(s.cache.members().iter().map(|&m| u8::from(m).to_string()));
        row.push(num(s.profit));
        row.extend(s.extra);
        if let Some(sim) = &spec.simulation {
            let r = estimate_profit(&config, &s.prices, &s.cache, &sim.sampling, sim.replications, sim.seed)?;
            for o in &r.offload {
                row.push(num(o.frequency));
                row.push(num(o.half_width));
            }
            row.extend([
                num(r.profit.mean),
                num(r.profit.half_width),
                num(r.offloaders.mean),
                num(r.offloaders.half_width),
                num(r.max_deviation_gain),
            ]);
        }
        Ok(row)
    };
    attempt().unwrap_or_else(|e| {
        let mut row = vec![axis.clone(), "error".into(), e.to_string()];
        row.resize(width, String::new());
        row
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub csv_path: PathBuf,
    pub meta_path: PathBuf,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Serialize)]
struct Meta<'a> {
    name: &'a str,
    version: &'a str,
    columns: &'a [String],
    resolved_price_tolerance: Option<f64>,
    spec: &'a ExperimentSpec,
}

/// Evaluates the grid without writing anything.
pub fn evaluate_grid(spec: &ExperimentSpec) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    spec.validate()?;
    let columns = spec.columns();
    let rows = spec.sweep.values.par_iter().map(|&v| evaluate(spec, v, columns.len())).collect();
    Ok((columns, rows))
}

/// Runs the sweep and writes the CSV and its sidecar, under `out_dir` if given.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: Option<&Path>) -> Result<ExperimentOutput> {
    let (columns, rows) = evaluate_grid(spec)?;
    let csv_path = spec.csv_path(out_dir);
    let meta_path = spec.meta_path(out_dir);
    if let Some(parent) = csv_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| Error::Io { path: parent.to_path_buf(), source })?;
    }

    let mut writer = csv::Writer::from_path(&csv_path)?;
    writer.write_record(&columns)?;
    for row in &rows {
        writer.write_record(row)?;
    }
    writer.flush().map_err(|source| Error::Io { path: csv_path.clone(), source })?;

    let meta = Meta {
        name: &spec.name,
        version: env!("CARGO_PKG_VERSION"),
        columns: &columns,
        resolved_price_tolerance: match spec.pricing {
            Pricing::FixedPrices { .. } => None,
            _ => Some(spec.solver.price_tolerance.unwrap_or_else(|| spec.system.default_price_tolerance())),
        },
        spec,
    };
    let mut json = serde_json::to_string_pretty(&meta)?;
    json.push('\n');
    fs::write(&meta_path, json).map_err(|source| Error::Io { path: meta_path.clone(), source })?;

    Ok(ExperimentOutput { csv_path, meta_path, columns, rows })
}
