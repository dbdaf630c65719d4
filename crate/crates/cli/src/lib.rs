//! The `cbplab` command line: argument parsing, caching and report output.

pub mod cache;
pub mod commands;
pub mod config;
pub mod report;

use cache::{Cache, Lookup};
use cbplab_core::bodies::StarBody;
use cbplab_core::busemann_petty::ConstructOptions;
use cbplab_core::embedding::ScanRules;
use cbplab_core::fourier::DEFAULT_SIGMA;
use cbplab_core::frames::GridSpec;
use cbplab_core::quadrature::Rule;
use cbplab_core::{Error, Result};
use clap::{Args, Parser, Subcommand};
use config::{Job, Overrides, PairSource, RouteChoice, RunConfig};
use report::{write_atomic, Report};
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "cbplab",
    version,
    about = "Sections, volumes and Fourier transforms of R_theta-invariant bodies"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default)]
pub struct Global {
    /// Seed for every sampled rule of the command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Node count for every sampled rule of the command.
    #[arg(long, global = true)]
    pub nodes: Option<u64>,
    /// Size of the worker pool. Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Gap slack for bp-verify and bp-construct, relative route slack for scan.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Report path; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Per-direction CSV table.
    #[arg(long, global = true)]
    pub csv: Option<PathBuf>,
    #[arg(long, global = true)]
    pub no_cache: bool,
    #[arg(long, global = true, env = cache::CACHE_ENV)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Volume of a body.
    Volume {
        #[arg(long, value_parser = body_spec)]
        body: String,
        #[arg(long, value_parser = rule_spec, default_value = "qmc:n=65536,seed=0")]
        rule: Rule,
    },
    /// Parallel section A(u), or Δ^m A at the origin when --m is positive.
    Section {
        #[arg(long, value_parser = body_spec)]
        body: String,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        xi: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, num_args = 2)]
        u: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0)]
        m: usize,
        /// Finite-difference step; defaults to a fraction of the inradius.
        #[arg(long)]
        step: Option<f64>,
        #[arg(long, value_parser = rule_spec, default_value = "qmc:n=65536,seed=0")]
        rule: Rule,
    },
    /// Value of (‖x‖^-p)^ at one direction.
    Ft {
        #[arg(long, value_parser = body_spec)]
        body: String,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        xi: Option<Vec<f64>>,
        #[arg(long)]
        p: f64,
        #[arg(long, value_enum, default_value_t = RouteChoice::Auto)]
        route: RouteChoice,
        #[arg(long, default_value_t = DEFAULT_SIGMA)]
        sigma: f64,
        #[arg(long, value_parser = rule_spec, default_value = "qmc:n=8192,seed=0")]
        rule: Rule,
    },
    /// Sign scan of (‖x‖^-p)^ over a direction grid.
    Scan {
        #[arg(long, value_parser = body_spec)]
        body: String,
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        #[arg(long, value_parser = grid_spec)]
        grid: Option<GridSpec>,
        #[arg(long, value_parser = rule_spec, default_value = "qmc:n=4096,seed=1")]
        rule: Rule,
        /// Rule for the pairing evaluation at the minimum.
        #[arg(long, value_parser = rule_spec, default_value = "qmc:n=8192,seed=2")]
        confirm_rule: Rule,
        #[arg(long, default_value_t = DEFAULT_SIGMA)]
        sigma: f64,
    },
    /// Compares central sections and volumes of K and L.
    BpVerify {
        #[arg(long, value_parser = body_spec, required_unless_present = "pair", conflicts_with = "pair")]
        k: Option<String>,
        #[arg(long, value_parser = body_spec, required_unless_present = "pair", conflicts_with = "pair")]
        l: Option<String>,
        /// Report written by bp-construct; replays its verification.
        #[arg(long)]
        pair: Option<PathBuf>,
        #[arg(long, value_parser = grid_spec)]
        grid: Option<GridSpec>,
        #[arg(long, value_parser = rule_spec)]
        section_rule: Option<Rule>,
        #[arg(long, value_parser = rule_spec)]
        volume_rule: Option<Rule>,
        /// Doubles the node counts of both rules.
        #[arg(long)]
        doubled: bool,
    },
    /// Builds K with smaller central sections than L but larger volume.
    BpConstruct {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 4.0)]
        q: f64,
        #[arg(long, default_value_t = 0.1)]
        width: f64,
        #[arg(long, value_parser = grid_spec)]
        grid: Option<GridSpec>,
    },
}

fn body_spec(s: &str) -> std::result::Result<String, String> {
    StarBody::parse(s).map(|b| b.spec()).map_err(|e| e.to_string())
}

fn rule_spec(s: &str) -> std::result::Result<Rule, String> {
    Rule::parse(s).map_err(|e| e.to_string())
}

fn grid_spec(s: &str) -> std::result::Result<GridSpec, String> {
    GridSpec::parse(s).map_err(|e| e.to_string())
}

fn default_grid(dim: usize) -> Result<GridSpec> {
    GridSpec::parse(&format!("grid:dim={dim},res=12,reduce=orbit,seed=0"))
}

fn direction(xi: Option<Vec<f64>>, dim: usize) -> Result<Vec<f64>> {
    match xi {
        None => {
            let mut e = vec![0.0; dim];
            e[0] = 1.0;
            Ok(e)
        }
        Some(v) if v.len() != dim => Err(Error::Domain(format!(
            "direction has {} coordinates, body lives in dimension {dim}",
            v.len()
        ))),
        Some(v) => commands::normalize(&v),
    }
}

fn body_dim(spec: &str) -> Result<usize> {
    Ok(StarBody::parse(spec)?.dim())
}

impl Cli {
    pub fn into_config(self) -> Result<RunConfig> {
        let g = self.global;
        let mut job = match self.command {
            Command::Volume { body, rule } => Job::Volume { body, rule },
            Command::Section {
                body,
                xi,
                u,
                m,
                step,
                rule,
            } => {
                let dim = body_dim(&body)?;
                let u = u.map(|v| [v[0], v[1]]).unwrap_or([0.0, 0.0]);
                Job::Section {
                    xi: direction(xi, dim)?,
                    body,
                    u,
                    m,
                    step,
                    rule,
                }
            }
            Command::Ft {
                body,
                xi,
                p,
                route,
                sigma,
                rule,
            } => {
                let dim = body_dim(&body)?;
                Job::Ft {
                    xi: direction(xi, dim)?,
                    body,
                    p,
                    route,
                    sigma,
                    rule,
                }
            }
            Command::Scan {
                body,
                p,
                grid,
                rule,
                confirm_rule,
                sigma,
            } => {
                let grid = match grid {
                    Some(g) => g,
                    None => default_grid(body_dim(&body)?)?,
                };
                let mut rules = ScanRules::new(rule, confirm_rule);
                rules.sigma = sigma;
                Job::Scan { body, p, grid, rules }
            }
            Command::BpVerify {
                k,
                l,
                pair,
                grid,
                section_rule,
                volume_rule,
                doubled,
            } => {
                let (k, l, mut rules, stored_grid, source) = match pair {
                    Some(path) => {
                        let text = std::fs::read_to_string(&path)
                            .map_err(|e| Error::Domain(format!("cannot read {}: {e}", path.display())))?;
                        let (hash, pair) = commands::load_pair(&text)?;
                        let stored = serde_json::to_value(&pair.report).expect("reports serialize");
                        (
                            pair.k,
                            pair.l,
                            pair.options.verify,
                            Some(pair.options.grid),
                            Some(PairSource {
                                config_hash: hash,
                                report: stored,
                            }),
                        )
                    }
                    None => {
                        let k = k.expect("clap requires --k");
                        let l = l.expect("clap requires --l");
                        (
                            k,
                            l,
                            cbplab_core::busemann_petty::BpRules::new(Rule::qmc(1 << 14, 3), Rule::qmc(1 << 16, 4)),
                            None,
                            None,
                        )
                    }
                };
                if let Some(r) = section_rule {
                    rules.sections = r;
                }
                if let Some(r) = volume_rule {
                    rules.volume = r;
                }
                if doubled {
                    rules = rules.doubled();
                }
                let grid = match grid.or(stored_grid) {
                    Some(g) => g,
                    None => default_grid(body_dim(&k)?)?,
                };
                Job::BpVerify {
                    k,
                    l,
                    grid,
                    rules,
                    pair: source,
                }
            }
            Command::BpConstruct { n, q, width, grid } => {
                let mut options = ConstructOptions::new(n, q)?;
                options.mollifier_width = width;
                if let Some(grid) = grid {
                    options.grid = grid;
                }
                Job::BpConstruct { options }
            }
        };
        job.apply(&Overrides {
            seed: g.seed,
            nodes: g.nodes,
            tol: g.tol,
        });
        validate_rules(&job)?;
        Ok(RunConfig {
            job,
            out: g.out,
            csv: g.csv,
            cache_dir: if g.no_cache {
                None
            } else {
                cache::default_root(g.cache_dir.as_deref())
            },
            workers: g.workers,
        })
    }
}

fn validate_rules(job: &Job) -> Result<()> {
    let mut job = job.clone();
    for rule in job.rules_mut() {
        Rule::parse(&rule.canonical())?;
    }
    Ok(())
}

/// Computes the report for a config, consulting the cache first.
pub fn run_config(cfg: &RunConfig) -> Result<Report> {
    let hash = cfg.config_hash();
    let cache = cfg.cache_dir.as_ref().map(Cache::new);
    if let Some(c) = &cache {
        match c.get(&hash) {
            Lookup::Hit(mut r) => {
                r.cached = true;
                return Ok(r);
            }
            Lookup::Corrupt(why) => eprintln!("warning: ignoring corrupted cache entry ({why}); recomputing"),
            Lookup::Miss => {}
        }
    }
    let outcome = match cfg.workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))?;
            pool.install(|| commands::execute(&cfg.job))?
        }
        None => commands::execute(&cfg.job)?,
    };
    let report = Report {
        config_hash: hash,
        inputs: cfg.job.clone(),
        status: outcome.status,
        results: outcome.results,
        baselines_checked: outcome.baselines,
        cached: false,
    };
    if let Some(c) = &cache {
        if let Err(e) = c.put(&report) {
            eprintln!("warning: cannot write cache entry under {}: {e}", c.root().display());
        }
    }
    Ok(report)
}

fn emit(cfg: &RunConfig, report: &Report) -> Result<()> {
    let io = |what: &str, e: std::io::Error| Error::Domain(format!("cannot write {what}: {e}"));
    let json = report.to_json();
    match &cfg.out {
        Some(path) => write_atomic(path, json.as_bytes()).map_err(|e| io("report", e))?,
        None => std::io::stdout()
            .write_all(json.as_bytes())
            .map_err(|e| io("report", e))?,
    }
    if let Some(path) = &cfg.csv {
        if let Some(table) = commands::table(&cfg.job, &report.results)? {
            let bytes = table
                .to_csv()
                .map_err(|e| Error::Domain(format!("cannot format csv: {e}")))?;
            write_atomic(path, &bytes).map_err(|e| io("csv", e))?;
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = cli.into_config().and_then(|cfg| {
        let report = run_config(&cfg)?;
        emit(&cfg, &report)?;
        Ok(report.status.exit_code())
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
