//! Subcommand execution and artifact output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use stochwave::estimator::{martingale_check, MCStatistic};
use stochwave::identities::{identity_residuals, random_closure_function, ResidualStatus};
use stochwave::sde::{path_seed, write_flux_csv, write_terminal_csv, write_trajectory_csv};
use stochwave::weight::order::{estimate_order, AsymptoticExprId};
use stochwave::{carleman_terms, run_ensemble, stability_terms, Error, Grid, ProblemData};

use crate::config::{ConfigError, FieldSpec, RunConfig};

/// Largest identity residual tolerated by `identities`.
pub const IDENTITY_TOLERANCE: f64 = 1e-10;
/// `martingale` fails when `|mean|` exceeds this many standard errors.
pub const MARTINGALE_SIGMAS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Identities,
    WeightsOrder,
    Simulate,
    Carleman,
    Stability,
    Martingale,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Identities => "identities",
            Command::WeightsOrder => "weights-order",
            Command::Simulate => "simulate",
            Command::Carleman => "carleman",
            Command::Stability => "stability",
            Command::Martingale => "martingale",
        }
    }
}

#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Model(Error),
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 3,
            Failure::Model(e) => match e.root() {
                Error::WeightOverflow { .. }
                | Error::DegenerateOrder { .. }
                | Error::SingularUpdate { .. }
                | Error::BlowUp { .. } => 4,
                _ => 3,
            },
            Failure::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "{e}"),
            Failure::Model(e) => write!(f, "{e}"),
            Failure::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Model(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

/// Artifacts were written; `code` is 0, 5 (admissibility) or 6 (check failed).
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

struct Output {
    dir: PathBuf,
    files: Vec<(String, usize)>,
}

impl Output {
    fn new(dir: &Path) -> Result<Output, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, body: &str, rows: usize) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        self.files.push((name.to_string(), rows));
        Ok(())
    }

    /// Row count excludes the header line.
    fn csv(&mut self, name: &str, body: &str) -> Result<(), Failure> {
        let rows = body.lines().count().saturating_sub(1);
        self.put(name, body, rows)
    }

    /// Arrays count their elements, anything else is one row.
    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), Failure> {
        let v = serde_json::to_value(value).map_err(|e| Failure::Io(e.to_string()))?;
        let rows = v.as_array().map_or(1, Vec::len);
        let mut body = serde_json::to_string_pretty(&v).map_err(|e| Failure::Io(e.to_string()))?;
        body.push('\n');
        self.put(name, &body, rows)
    }

    fn finish(
        mut self,
        cmd: Command,
        config_bytes: &[u8],
        overrides: &BTreeMap<&'static str, String>,
    ) -> Result<Vec<PathBuf>, Failure> {
        let hash: String = Sha256::digest(config_bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        let files: Vec<Value> = self
            .files
            .iter()
            .map(|(n, r)| json!({ "file": n, "rows": r }))
            .collect();
        let manifest = json!({
            "subcommand": cmd.name(),
            "config_sha256": hash,
            "overrides": overrides,
            "files": files,
        });
        let mut body = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Io(e.to_string()))?;
        body.push('\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, body).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        let mut out: Vec<PathBuf> = self.files.drain(..).map(|(n, _)| self.dir.join(n)).collect();
        out.push(path);
        Ok(out)
    }
}

fn to_string(write: impl FnOnce(&mut Vec<u8>) -> stochwave::Result<()>) -> Result<String, Failure> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Failure::Io(e.to_string()))
}

/// Runs `cmd` on a validated config; `config_bytes` is hashed into the manifest.
pub fn execute(
    cmd: Command,
    cfg: &RunConfig,
    config_bytes: &[u8],
    overrides: &BTreeMap<&'static str, String>,
) -> Result<Outcome, Failure> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let mut out = Output::new(Path::new(&cfg.output_dir))?;
    let mut summary = Vec::new();
    let code = match cmd {
        Command::Identities => identities(cfg, &grid, &mut out, &mut summary)?,
        Command::WeightsOrder => weights_order(cfg, &grid, &mut out, &mut summary)?,
        Command::Simulate => simulate(cfg, &grid, &mut out, &mut summary)?,
        Command::Carleman => carleman(cfg, &grid, &mut out, &mut summary)?,
        Command::Stability => stability(cfg, &grid, &mut out, &mut summary)?,
        Command::Martingale => martingale(cfg, &grid, &mut out, &mut summary)?,
    };
    let files = out.finish(cmd, config_bytes, overrides)?;
    Ok(Outcome { code, files, summary })
}

fn identities(cfg: &RunConfig, grid: &Grid, out: &mut Output, summary: &mut Vec<String>) -> Result<i32, Failure> {
    let seed = cfg.mc.master_seed;
    let u = random_closure_function(grid, path_seed(seed, 0));
    let v = random_closure_function(grid, path_seed(seed, 1));
    let table = identity_residuals(&u, &v, grid)?;
    let mut csv = String::from("identity,residual,status\n");
    for e in &table.entries {
        match &e.status {
            ResidualStatus::Checked(r) => {
                let status = if *r <= IDENTITY_TOLERANCE { "pass" } else { "fail" };
                let _ = writeln!(csv, "{},{r:e},{status}", e.id);
            }
            ResidualStatus::Skipped(_) => {
                let _ = writeln!(csv, "{},,skipped", e.id);
            }
        }
    }
    out.csv("identities.csv", &csv)?;
    let max = table.max_residual();
    summary.push(format!("max identity residual {max:e} ({} skipped)", table.skipped()));
    Ok(if max > IDENTITY_TOLERANCE { 6 } else { 0 })
}

/// Level `k` refines the configured grid by `2^k` in both directions.
fn order_levels(cfg: &RunConfig, grid: &Grid) -> Result<Vec<Grid>, Failure> {
    (0..cfg.order_levels as u32)
        .map(|k| {
            let f = 1usize << k;
            Ok(Grid::new((grid.m() + 1) * f - 1, grid.n() * f, grid.t_final())?)
        })
        .collect()
}

fn weights_order(cfg: &RunConfig, grid: &Grid, out: &mut Output, summary: &mut Vec<String>) -> Result<i32, Failure> {
    let params = cfg.params();
    let levels = order_levels(cfg, grid)?;
    let mut table = String::from("expr,order,fit_residual\n");
    for expr in AsymptoticExprId::ALL {
        let est = estimate_order(expr, &params, &levels)?;
        let mut csv = String::from("level,M,N,dx,residual\n");
        for (k, (g, r)) in levels.iter().zip(&est.residuals).enumerate() {
            let _ = writeln!(csv, "{k},{},{},{},{r:e}", g.m(), g.n(), g.dx());
        }
        out.csv(&format!("order_{}.csv", expr.label()), &csv)?;
        let _ = writeln!(table, "{},{},{:e}", expr.label(), est.order, est.fit_residual);
        summary.push(format!("{}: order {:.3}", expr.label(), est.order));
    }
    out.csv("orders.csv", &table)?;
    Ok(0)
}

fn ensemble(cfg: &RunConfig, grid: &Grid, data: &ProblemData, seed: u64) -> Result<stochwave::Ensemble, Failure> {
    let coeffs = cfg.coefficients(grid);
    let ens = run_ensemble(data, &coeffs, grid, cfg.mc.paths, seed)?;
    Ok(ens)
}

fn simulate(cfg: &RunConfig, grid: &Grid, out: &mut Output, summary: &mut Vec<String>) -> Result<i32, Failure> {
    let data = cfg.data.build(grid, cfg.g_mode);
    let ens = ensemble(cfg, grid, &data, cfg.mc.master_seed)?;
    let first = &ens.trajectories[0];
    let obs = first.observe()?;
    out.csv("trajectory.csv", &to_string(|w| write_trajectory_csv(first, w))?)?;
    out.csv("flux.csv", &to_string(|w| write_flux_csv(&obs, w))?)?;
    out.csv("terminal.csv", &to_string(|w| write_terminal_csv(&obs, w))?)?;
    let (mean, se) = (ens.mean(), ens.stderr());
    let mut csv = String::from("j,x,n,t,mean,stderr\n");
    for j in mean.space().indices() {
        for n in mean.time().indices() {
            let _ = writeln!(
                csv,
                "{j},{},{n},{},{},{}",
                grid.x(j),
                grid.t(n),
                mean.at(j, n),
                se.at(j, n)
            );
        }
    }
    out.csv("ensemble_mean.csv", &csv)?;
    let info = json!({
        "paths": ens.paths(),
        "master_seed": ens.master_seed,
        "dx": grid.dx(),
        "dt": grid.dt(),
        "cfl_warning": ens.cfl_warning(),
    });
    out.json("simulate.json", &info)?;
    if ens.cfl_warning() {
        summary.push("warning: dt exceeds dx".into());
    }
    summary.push(format!("{} paths on M={}, N={}", ens.paths(), grid.m(), grid.n()));
    Ok(0)
}

fn carleman(cfg: &RunConfig, grid: &Grid, out: &mut Output, summary: &mut Vec<String>) -> Result<i32, Failure> {
    let data = cfg.data.build(grid, cfg.g_mode);
    let ens = ensemble(cfg, grid, &data, cfg.mc.master_seed)?;
    let base = carleman_terms(&ens, &cfg.params(), &data, grid, cfg.weight.kappa)?;
    out.json("carleman.json", &base)?;
    out.csv("carleman.csv", &base.to_csv())?;
    let mut inadmissible = base.inadmissible;
    summary.push(format!("ratio {}", fmt_ratio(base.ratio)));
    if let Some(sw) = &cfg.sweep {
        let mut csv = String::from("sweep_value,term,value,stderr\n");
        let mut reports = Vec::new();
        for &value in &sw.values {
            let w = cfg.weight.with(&sw.parameter, value).expect("validated");
            let rep = carleman_terms(&ens, &w.params(grid.t_final()), &data, grid, w.kappa)?;
            for line in rep.to_csv().lines().skip(1) {
                let _ = writeln!(csv, "{value},{line}");
            }
            inadmissible |= rep.inadmissible;
            summary.push(format!("{}={value}: ratio {}", sw.parameter, fmt_ratio(rep.ratio)));
            reports.push(json!({ "parameter": sw.parameter, "value": value, "report": rep }));
        }
        out.json("carleman_sweep.json", &reports)?;
        out.csv("carleman_sweep.csv", &csv)?;
    }
    if inadmissible {
        summary.push("warning: weight parameters outside the admissible regime".into());
        if cfg.strict_admissibility {
            return Ok(5);
        }
    }
    Ok(0)
}

fn fmt_ratio(r: Option<f64>) -> String {
    r.map_or("undefined".into(), |v| format!("{v:.6e}"))
}

fn stability(cfg: &RunConfig, grid: &Grid, out: &mut Output, summary: &mut Vec<String>) -> Result<i32, Failure> {
    let pair = cfg
        .pair
        .as_ref()
        .ok_or_else(|| ConfigError::at("/pair", "stability needs a second data set"))?;
    let da = cfg.data.build(grid, cfg.g_mode);
    let mut db = pair.data.build(grid, cfg.g_mode);
    // the difference system carries no forcing, so a zero pair forcing inherits
    if pair.data.f == FieldSpec::Zero {
        db.f = da.f.clone();
    }
    let a = ensemble(cfg, grid, &da, cfg.mc.master_seed)?;
    let b = ensemble(cfg, grid, &db, pair.master_seed.unwrap_or(cfg.mc.master_seed))?;
    let rep = stability_terms(&a, &b, &da, &db, grid)?;
    out.json("stability.json", &rep)?;
    out.csv("stability.csv", &rep.to_csv())?;
    summary.push(format!(
        "ratio {}, printed ratio {}",
        fmt_ratio(rep.ratio),
        fmt_ratio(rep.ratio_printed)
    ));
    Ok(0)
}

#[derive(Serialize)]
struct MartingaleReport {
    #[serde(flatten)]
    stat: MCStatistic,
    threshold_sigmas: f64,
    pass: bool,
}

fn martingale(cfg: &RunConfig, grid: &Grid, out: &mut Output, summary: &mut Vec<String>) -> Result<i32, Failure> {
    let data = cfg.data.build(grid, cfg.g_mode);
    let ens = ensemble(cfg, grid, &data, cfg.mc.master_seed)?;
    let stat = martingale_check(&ens)?;
    let pass = stat.mean.abs() <= MARTINGALE_SIGMAS * stat.stderr;
    out.json(
        "martingale.json",
        &MartingaleReport {
            stat,
            threshold_sigmas: MARTINGALE_SIGMAS,
            pass,
        },
    )?;
    summary.push(format!("mean {:e}, stderr {:e}", stat.mean, stat.stderr));
    Ok(if pass { 0 } else { 6 })
}
