//! Command-line pipeline for background intensity estimation: simulate a
//! catalog, fit the hybrid MCMC, resolve label switching, summarize posterior
//! intensity fields, and cluster events from posterior allocations.

mod config;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use bgintensity::catalog::{load_catalog, save_catalog, Catalog};
use bgintensity::cluster::{dahl_select, eigengap_k, similarity_matrix, spectral_cluster};
use bgintensity::draws::{
    read_draws, write_draws, AcceptanceRates, Draw, DrawsHeader, DrawsReader, PosteriorDraws,
    DRAWS_SCHEMA_VERSION,
};
use bgintensity::model::PartitionedData;
use bgintensity::relabel::{apply_relabeling, compute_relabeling};
use bgintensity::sampler::{ChainRunner, Checkpoint, SamplerConfig};
use bgintensity::simulate::simulate_thinning;
use bgintensity::summaries::{field_to_delimited, gamma_summaries, summarize_fields, GridSpec};
use bgintensity::{chain_seed, sha256_hex, Error, Result};
use config::{load_config, RunConfig};

#[derive(Parser)]
#[command(
    name = "bgintensity",
    version,
    about = "Spatio-temporal background intensity estimation for point processes"
)]
struct Cli {
    /// Config file path or bundled preset name (synthetic-paper, mexico-paper)
    #[arg(long, global = true, default_value = "synthetic-paper")]
    config: String,

    /// Output directory; relative catalog and draws paths resolve against it
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Override the sampler seed from the config
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a catalog from the configured intensity by thinning
    Simulate {
        /// Also write each event's generating mixture component
        #[arg(long)]
        labels: bool,
    },
    /// Run the MCMC and write posterior draws (one file per chain)
    Fit {
        /// Number of independent chains with derived seeds
        #[arg(long, default_value_t = 1)]
        chains: usize,
        /// Resume a single chain from a checkpoint file
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Catalog path override
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Resolve label switching in a draws file against its best draw
    Relabel {
        /// Draws file (defaults to <out>/draws-0.jsonl)
        #[arg(long)]
        draws: Option<PathBuf>,
    },
    /// Posterior mean/sd/CV/transparency grids and per-period rate tables
    Summarize {
        #[arg(long)]
        draws: Option<PathBuf>,
        /// Grid resolution override, e.g. 150x120
        #[arg(long)]
        grid: Option<String>,
    },
    /// Cluster events by posterior co-allocation
    Cluster {
        #[arg(long)]
        draws: Option<PathBuf>,
        /// Fixed cluster count (bypasses the eigengap choice)
        #[arg(long)]
        k: Option<usize>,
        /// Largest cluster count scanned by the eigengap heuristic
        #[arg(long)]
        k_max: Option<usize>,
        /// Write the dense similarity matrix (large for big catalogs)
        #[arg(long)]
        dump_similarity: bool,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(err) = run(&cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}

fn run(cli: &Cli) -> Result<()> {
    let mut config = load_config(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.sampler.seed = seed;
    }
    fs::create_dir_all(&cli.out)?;
    let resolved = serde_json::to_string_pretty(&config)?;
    fs::write(cli.out.join("resolved-config.json"), &resolved)?;

    match &cli.command {
        Command::Simulate { labels } => cmd_simulate(&config, &cli.out, *labels),
        Command::Fit {
            chains,
            resume,
            catalog,
        } => cmd_fit(
            &config,
            &cli.out,
            *chains,
            resume.as_deref(),
            catalog.as_deref(),
        ),
        Command::Relabel { draws } => cmd_relabel(&cli.out, draws.as_deref()),
        Command::Summarize { draws, grid } => {
            cmd_summarize(&config, &cli.out, draws.as_deref(), grid.as_deref())
        }
        Command::Cluster {
            draws,
            k,
            k_max,
            dump_similarity,
        } => cmd_cluster(
            &config,
            &cli.out,
            draws.as_deref(),
            *k,
            k_max.unwrap_or(config.cluster_k_max),
            *dump_similarity,
        ),
    }
}

/// Catalog location: explicit config entry (relative paths resolve against
/// the output directory) or the simulate output by default.
fn catalog_path(config: &RunConfig, out: &Path) -> PathBuf {
    let raw = config
        .catalog
        .clone()
        .unwrap_or_else(|| PathBuf::from("catalog.csv"));
    if raw.is_absolute() {
        raw
    } else {
        out.join(raw)
    }
}

fn default_draws_path(out: &Path) -> PathBuf {
    out.join("draws-0.jsonl")
}

fn load_run_catalog(config: &RunConfig, path: &Path) -> Result<Catalog> {
    if !path.exists() {
        return Err(Error::Data(format!(
            "catalog {} not found (run `simulate` first or set config.catalog)",
            path.display()
        )));
    }
    load_catalog(
        path,
        config.window,
        config.horizon_days,
        config.out_of_window,
    )
}

fn cmd_simulate(config: &RunConfig, out: &Path, labels: bool) -> Result<()> {
    let spec = config
        .synthetic
        .as_ref()
        .ok_or_else(|| Error::Config("config.synthetic is required for simulate".into()))?;
    let seed = config.sampler.seed;
    let sim = simulate_thinning(spec, &config.window, config.horizon_days, seed)?;
    let spec_hash = sha256_hex(serde_json::to_string(spec)?.as_bytes());
    let comments = vec![
        format!("experiment = {}", config.experiment),
        format!("seed = {seed}"),
        format!("intensity-hash = {spec_hash}"),
        format!(
            "window = ({}, {}) x ({}, {})",
            config.window.x_min, config.window.x_max, config.window.y_min, config.window.y_max
        ),
        format!("horizon-days = {}", config.horizon_days),
        format!("events = {}", sim.catalog.len()),
    ];
    let path = catalog_path(config, out);
    save_catalog(&path, &sim.catalog, &comments)?;
    log::info!("wrote {} events to {}", sim.catalog.len(), path.display());
    if labels {
        let mut text = String::from("index,component\n");
        for (i, lab) in sim.component_labels.iter().enumerate() {
            text.push_str(&format!("{i},{lab}\n"));
        }
        fs::write(out.join("component-labels.csv"), text)?;
    }
    Ok(())
}

/// Drives one chain to completion, checkpointing on failure.
fn run_chain_to_end(
    runner: &mut ChainRunner<'_>,
    out: &Path,
    chain: usize,
    total: usize,
) -> Result<Vec<Draw>> {
    let mut draws = Vec::new();
    let report_every = (total / 10).max(1);
    while !runner.finished() {
        match runner.step() {
            Ok(Some(draw)) => draws.push(draw),
            Ok(None) => {}
            Err(err) => {
                let cp_path = out.join(format!("checkpoint-{chain}.json"));
                let cp = runner.checkpoint();
                fs::write(&cp_path, serde_json::to_string(&cp)?)?;
                log::error!(
                    "chain {chain} aborted at sweep {}; checkpoint written to {}",
                    runner.completed_sweeps(),
                    cp_path.display()
                );
                return Err(err);
            }
        }
        let s = runner.completed_sweeps();
        if s % report_every == 0 {
            let rates = runner.acceptance();
            log::info!(
                "chain {chain}: sweep {s}/{total}, accept alpha {:.2} beta {:.2}",
                rates.alpha,
                rates.beta_interior
            );
        }
    }
    Ok(draws)
}

fn cmd_fit(
    config: &RunConfig,
    out: &Path,
    chains: usize,
    resume: Option<&Path>,
    catalog_override: Option<&Path>,
) -> Result<()> {
    if chains == 0 {
        return Err(Error::Config("--chains must be at least 1".into()));
    }
    let path = catalog_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| catalog_path(config, out));
    let catalog = load_run_catalog(config, &path)?;
    let catalog_hash = sha256_hex(&fs::read(&path)?);
    let partition = config.partition()?;
    let data = PartitionedData::from_catalog(&catalog, &partition)?;
    log::info!(
        "fitting {} events over {} periods",
        catalog.len(),
        partition.periods()
    );

    let config_hash = sha256_hex(serde_json::to_string(config)?.as_bytes());
    let make_header = |chain: usize, seed: u64| DrawsHeader {
        schema_version: DRAWS_SCHEMA_VERSION,
        seed,
        config_hash: config_hash.clone(),
        hyper: config.hyperparams.clone(),
        partition: partition.clone(),
        n_events: catalog.len(),
        catalog_hash: Some(catalog_hash.clone()),
        chain,
    };

    if let Some(cp_path) = resume {
        if chains != 1 {
            return Err(Error::Config("--resume requires --chains 1".into()));
        }
        let cp: Checkpoint = serde_json::from_str(&fs::read_to_string(cp_path)?)?;
        let draws_path = default_draws_path(out);
        let mut existing = read_draws(&draws_path)?;
        let mut runner =
            ChainRunner::resume(&data, &config.hyperparams, config.sampler.clone(), cp)?;
        let fresh = run_chain_to_end(&mut runner, out, 0, config.sampler.sweeps)?;
        existing.draws.extend(fresh);
        existing.acceptance = Some(runner.acceptance());
        write_draws(&draws_path, &existing)?;
        fs::write(
            out.join("checkpoint-0.json"),
            serde_json::to_string(&runner.checkpoint())?,
        )?;
        log::info!("resumed chain complete: {} draws", existing.draws.len());
        return Ok(());
    }

    // chains run in parallel; all files are written from this thread
    type ChainOutput = (usize, u64, Vec<Draw>, Checkpoint, AcceptanceRates);
    let results: Vec<Result<ChainOutput>> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for c in 0..chains {
            let seed = if c == 0 {
                config.sampler.seed
            } else {
                chain_seed(config.sampler.seed, c)
            };
            let data = &data;
            let hyper = &config.hyperparams;
            let sampler = SamplerConfig {
                seed,
                ..config.sampler.clone()
            };
            let out = out.to_path_buf();
            handles.push(scope.spawn(move || {
                let mut runner = ChainRunner::new(data, hyper, sampler.clone())?;
                let draws = run_chain_to_end(&mut runner, &out, c, sampler.sweeps)?;
                Ok((c, seed, draws, runner.checkpoint(), runner.acceptance()))
            }));
        }
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    });

    for result in results {
        let (c, seed, draws, checkpoint, acceptance) = result?;
        let collection = PosteriorDraws {
            header: make_header(c, seed),
            draws,
            acceptance: Some(acceptance),
            relabeling: None,
        };
        let path = out.join(format!("draws-{c}.jsonl"));
        write_draws(&path, &collection)?;
        fs::write(
            out.join(format!("checkpoint-{c}.json")),
            serde_json::to_string(&checkpoint)?,
        )?;
        log::info!(
            "chain {c}: {} draws written to {}",
            collection.draws.len(),
            path.display()
        );
    }
    Ok(())
}

fn cmd_relabel(out: &Path, draws_path: Option<&Path>) -> Result<()> {
    let path = draws_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_draws_path(out));
    let draws = read_draws(&path)?;
    let relabeling = compute_relabeling(&draws)?;
    let total_mismatch: usize = relabeling.mismatches.iter().sum();
    let relabeled = apply_relabeling(&draws, &relabeling)?;
    let out_path = out.join("draws-relabeled.jsonl");
    write_draws(&out_path, &relabeled)?;
    log::info!(
        "relabeled {} draws against pivot draw {} ({} total mismatches) -> {}",
        relabeled.draws.len(),
        relabeling.pivot_index,
        total_mismatch,
        out_path.display()
    );
    Ok(())
}

fn parse_grid(spec: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = spec.split(['x', 'X']).collect();
    if parts.len() != 2 {
        return Err(Error::Config(format!("--grid expects NXxNY, got '{spec}'")));
    }
    let nx = parts[0]
        .parse()
        .map_err(|_| Error::Config(format!("bad grid width '{}'", parts[0])))?;
    let ny = parts[1]
        .parse()
        .map_err(|_| Error::Config(format!("bad grid height '{}'", parts[1])))?;
    Ok((nx, ny))
}

fn cmd_summarize(
    config: &RunConfig,
    out: &Path,
    draws_path: Option<&Path>,
    grid_override: Option<&str>,
) -> Result<()> {
    let path = draws_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_draws_path(out));
    let (nx, ny) = match grid_override {
        Some(spec) => parse_grid(spec)?,
        None => (config.grid.nx, config.grid.ny),
    };
    let grid = GridSpec::new(config.window, nx, ny)?;

    // grids stream draw by draw; the rate table needs the gammas in memory
    let reader = DrawsReader::open(&path)?;
    let field = summarize_fields(reader.map(|d| d.map(|draw| draw.state)), &grid)?;
    let grid_path = out.join("intensity-grid.csv");
    fs::write(&grid_path, field_to_delimited(&field))?;

    let draws = read_draws(&path)?;
    let summaries = gamma_summaries(&draws, config.gamma_bins)?;
    let gamma_path = out.join("gamma-summary.json");
    fs::write(&gamma_path, serde_json::to_string_pretty(&summaries)?)?;
    log::info!(
        "summarized {} draws over {} periods -> {}, {}",
        field.draws,
        field.periods,
        grid_path.display(),
        gamma_path.display()
    );
    Ok(())
}

fn cmd_cluster(
    config: &RunConfig,
    out: &Path,
    draws_path: Option<&Path>,
    fixed_k: Option<usize>,
    k_max: usize,
    dump_similarity: bool,
) -> Result<()> {
    let path = draws_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_draws_path(out));
    let draws = read_draws(&path)?;
    let cat_path = catalog_path(config, out);
    let catalog = load_run_catalog(config, &cat_path)?;
    if catalog.len() != draws.header.n_events {
        return Err(Error::Data(format!(
            "catalog has {} events but the draws were fit on {}",
            catalog.len(),
            draws.header.n_events
        )));
    }
    if let Some(expected) = &draws.header.catalog_hash {
        let actual = sha256_hex(&fs::read(&cat_path)?);
        if &actual != expected {
            return Err(Error::Data(format!(
                "catalog {} does not match the catalog the draws were fit on",
                cat_path.display()
            )));
        }
    }
    let partition = config.partition()?;

    let sim = similarity_matrix(&draws)?;
    let (dahl_index, dahl_alloc, dahl_loss) = dahl_select(&draws, &sim)?;
    let (k, k_source) = match fixed_k {
        Some(k) => (k, "fixed"),
        None => (eigengap_k(&sim, k_max)?, "eigengap"),
    };
    let labels = spectral_cluster(&sim, k, config.sampler.seed)?;

    let mut text = String::new();
    text.push_str(&format!("# experiment = {}\n", config.experiment));
    text.push_str(&format!("# k = {k}\n"));
    text.push_str(&format!("# k-source = {k_source}\n"));
    text.push_str(&format!(
        "# dahl-draw-index = {dahl_index} (least-squares loss {dahl_loss})\n"
    ));
    text.push_str("index,x,y,t,period,cluster,map_component\n");
    for (i, e) in catalog.events.iter().enumerate() {
        let period = partition.period_of(e.t).unwrap() + 1;
        text.push_str(&format!(
            "{i},{},{},{},{period},{},{}\n",
            e.x, e.y, e.t, labels[i], dahl_alloc[i]
        ));
    }
    let cluster_path = out.join("clusters.csv");
    fs::write(&cluster_path, text)?;
    log::info!(
        "clustered {} events into k={k} groups ({k_source}) -> {}",
        catalog.len(),
        cluster_path.display()
    );

    if dump_similarity {
        fs::write(out.join("similarity.csv"), sim.to_dense_text())?;
    }
    Ok(())
}
