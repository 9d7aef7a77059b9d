use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use plasticlab::bench::{
    read_failed_csv, read_raw_csv, reward_accumulation, run_sweep, write_failed_csv,
    write_raw_csv, write_series_csv, CellKey, CellResult, CellStore, ReportMeta, SweepReport,
};
use plasticlab::config::RunConfig;
use plasticlab::environment::{run_episode, HorizonPolicy, StopReason};
use plasticlab::evolution::{
    derive_seed, initial_theta, write_history_csv, EvolutionStrategy, Objective, RolloutObjective,
};
use plasticlab::genome::{decode_network, Genome};
use plasticlab::network::Backend;
use plasticlab::persist::{
    check_config_hash, load_checkpoint, load_genome, read_json, save_checkpoint, save_genome,
    write_atomic, write_json, PersistError,
};
use plasticlab::TOOL_VERSION;

use crate::failure::{Failure, PARTIAL};
use crate::EvaluateArgs;

fn provenance(hash: &str) -> Vec<String> {
    vec![format!("tool={TOOL_VERSION}"), format!("config_hash={hash}")]
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}

fn write_config_copy(cfg: &RunConfig, hash: &str) -> Result<(), Failure> {
    let mut text: String = provenance(hash).iter().map(|l| format!("# {l}\n")).collect();
    text.push_str(&cfg.to_toml());
    write_atomic(&cfg.output_dir.join("config.toml"), text.as_bytes())?;
    Ok(())
}

pub fn train(path: &Path, resume: bool) -> Result<ExitCode, Failure> {
    let cfg = RunConfig::load(path)?;
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out)?;
    let hash = cfg.hash();
    let spec = cfg.network_spec();
    let objective = RolloutObjective::new(spec, cfg.make_env(), cfg.train.horizon);
    let checkpoint = out.join("checkpoint.json");

    let es = if resume && checkpoint.exists() {
        let body = load_checkpoint(&checkpoint)?;
        check_config_hash(&checkpoint, &hash, &body.config_hash, false)
            .map_err(|e| Failure::config(e.to_string()))?;
        body.layout.check_matches(&objective.layout)?;
        eprintln!("resuming at generation {}", body.state.generation);
        EvolutionStrategy::resume(cfg.es.clone(), body.state)
    } else {
        if resume {
            eprintln!("no checkpoint in {}, starting fresh", out.display());
        }
        EvolutionStrategy::new(cfg.es.clone(), initial_theta(&cfg.es, objective.dimension()))
    };
    let mut es = es.map_err(|e| Failure::config(e.to_string()))?;
    write_config_copy(&cfg, &hash)?;

    let every = cfg.es.checkpoint_every;
    let mut save_error: Option<PersistError> = None;
    es.run(&objective, |es| {
        let s = es.history().last().expect("run reports after each generation");
        eprintln!(
            "gen {:>4}/{} mean {:>9.2} max {:>9.2} min {:>9.2}",
            s.generation + 1,
            cfg.es.generations,
            s.mean,
            s.max,
            s.min
        );
        if every > 0 && es.generation() % every == 0 && save_error.is_none() {
            save_error = save_checkpoint(&checkpoint, &cfg, &objective.layout, es.state()).err();
        }
    });
    if let Some(e) = save_error {
        return Err(e.into());
    }
    if every > 0 {
        save_checkpoint(&checkpoint, &cfg, &objective.layout, es.state())?;
    }

    let genome = Genome::new(objective.layout.clone(), es.theta().to_vec())?;
    save_genome(&out.join("genome.json"), &genome, &hash)?;
    let mut w = create(&out.join("history.csv"))?;
    write_history_csv(es.history(), &mut w, &provenance(&hash))?;
    w.flush()?;
    println!(
        "wrote {} after {} generations",
        out.join("genome.json").display(),
        es.generation()
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct EpisodeRecord {
    index: usize,
    seed: u64,
    length: u64,
    total_reward: f64,
    stop: StopReason,
    censored: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct EvaluationSummary {
    tool_version: &'static str,
    config_hash: String,
    genome: String,
    horizon: HorizonPolicy,
    episodes: Vec<EpisodeRecord>,
    mean_length: f64,
    censored_fraction: f64,
}

pub fn evaluate(args: &EvaluateArgs) -> Result<ExitCode, Failure> {
    let cfg = RunConfig::load(&args.config)?;
    let hash = cfg.hash();
    let (genome, body) = load_genome(&args.genome)?;
    check_config_hash(&args.genome, &hash, &body.config_hash, args.force)?;
    let spec = cfg.network_spec();
    let proto = decode_network(&spec, &genome)?;
    let horizon = match args.horizon {
        Some(0) => return Err(Failure::config("--horizon must be at least 1")),
        Some(t) => HorizonPolicy::Capped(t),
        None => HorizonPolicy::Uncapped {
            safety_limit: args.safety_limit,
        },
    };
    if args.raster.is_some() && spec.backend != Backend::Snn {
        return Err(Failure::config("--raster needs a spiking network (backend = \"snn\")"));
    }
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("eval"));
    fs::create_dir_all(&out)?;
    let make_env = cfg.make_env();
    let seed_of = |k: usize| derive_seed(args.seed, &[k as u64]);
    let mut header = provenance(&hash);
    header.push(format!("genome={}", args.genome.display()));

    let traces: Vec<_> = (0..args.episodes)
        .into_par_iter()
        .map(|k| {
            let mut net = proto.clone();
            let mut env = make_env();
            run_episode(&mut net, &mut env, horizon, seed_of(k))
        })
        .collect();
    let mut episodes = Vec::new();
    for (k, trace) in traces.iter().enumerate() {
        let mut h = header.clone();
        h.push(format!("episode={k} seed={}", seed_of(k)));
        let mut w = create(&out.join(format!("episode-{k:03}.csv")))?;
        trace.write_csv(&mut w, &h)?;
        w.flush()?;
        let s = &trace.summary;
        episodes.push(EpisodeRecord {
            index: k,
            seed: seed_of(k),
            length: s.length,
            total_reward: s.total_reward,
            stop: s.stop,
            censored: s.censored(),
            error: s.error.clone(),
        });
    }

    if let Some(steps) = args.raster {
        let mut net = proto.clone();
        net.record_spikes(true);
        let mut env = make_env();
        run_episode(&mut net, &mut env, HorizonPolicy::Capped(steps), seed_of(0));
        let mut w = create(&out.join("raster.csv"))?;
        for line in &header {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "# internal_steps_per_env_step={}", spec.snn.internal_steps)?;
        writeln!(w, "internal_step,layer,neuron")?;
        for e in net.take_spikes() {
            writeln!(w, "{},{},{}", e.step, e.layer, e.neuron)?;
        }
        w.flush()?;
    }
    if let Some(marker) = args.curve_marker {
        let mut net = proto.clone();
        let mut env = make_env();
        let curve = reward_accumulation(&mut net, &mut env, marker, horizon.limit(), seed_of(0))?;
        let mut w = create(&out.join("curve.csv"))?;
        for line in &header {
            writeln!(w, "# {line}")?;
        }
        curve.write_csv(&mut w)?;
        w.flush()?;
    }

    let n = episodes.len().max(1) as f64;
    let summary = EvaluationSummary {
        tool_version: TOOL_VERSION,
        config_hash: hash,
        genome: args.genome.display().to_string(),
        horizon,
        mean_length: episodes.iter().map(|e| e.length as f64).sum::<f64>() / n,
        censored_fraction: episodes.iter().filter(|e| e.censored).count() as f64 / n,
        episodes,
    };
    write_json(&out.join("summary.json"), &summary)?;
    for e in &summary.episodes {
        println!("episode {:>3}: length {:>8} ({:?})", e.index, e.length, e.stop);
    }
    println!(
        "mean length {:.1}, censored {:.0}%",
        summary.mean_length,
        100.0 * summary.censored_fraction
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize, Deserialize)]
struct CellMarker {
    config_hash: String,
    result: CellResult,
}

/// One JSON marker per finished cell under `<output_dir>/cells`.
struct DirStore {
    dir: PathBuf,
    hash: String,
}

impl DirStore {
    fn path(&self, key: &CellKey) -> PathBuf {
        self.dir.join(format!("{}.json", key.id()))
    }
}

impl CellStore for DirStore {
    fn load(&self, key: &CellKey) -> Option<CellResult> {
        let path = self.path(key);
        if !path.exists() {
            return None;
        }
        match read_json::<CellMarker>(&path) {
            Ok(m) if m.config_hash == self.hash && m.result.key == *key => {
                eprintln!("cell {} already done", key.id());
                Some(m.result)
            }
            Ok(_) => {
                eprintln!("cell {}: marker from another config, recomputing", key.id());
                None
            }
            Err(e) => {
                eprintln!("cell {}: unreadable marker ({e}), recomputing", key.id());
                None
            }
        }
    }

    fn save(&self, result: &CellResult) -> std::io::Result<()> {
        let marker = CellMarker {
            config_hash: self.hash.clone(),
            result: result.clone(),
        };
        write_json(&self.path(&result.key), &marker).map_err(std::io::Error::other)?;
        match &result.failure {
            None => eprintln!("cell {} done", result.key.id()),
            Some(f) => eprintln!("cell {} failed: {f}", result.key.id()),
        }
        Ok(())
    }
}

fn write_report_files(dir: &Path, report: &SweepReport) -> Result<(), Failure> {
    write_json(&dir.join("report.json"), report)?;
    let mut w = create(&dir.join("series.csv"))?;
    write_series_csv(report, &mut w)?;
    w.flush()?;
    Ok(())
}

fn print_report(report: &SweepReport) {
    println!("horizon  evals  censored  mean_lifespan  std");
    for h in &report.horizons {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.1}"));
        println!(
            "{:>7}  {:>5}  {:>8}  {:>13}  {}",
            h.horizon,
            h.evaluations,
            h.censored,
            fmt(h.mean_lifespan),
            fmt(h.std_lifespan)
        );
    }
    match report.regression.slope() {
        Some(a) => println!("fitted slope A = {a:.4}"),
        None => println!("no linear fit: {:?}", report.regression),
    }
    if !report.failed_cells.is_empty() {
        println!("{} failed cell(s)", report.failed_cells.len());
    }
}

pub fn sweep(path: &Path) -> Result<ExitCode, Failure> {
    let cfg = RunConfig::load(path)?;
    let sweep = cfg.sweep_spec()?;
    let hash = cfg.hash();
    let out = cfg.output_dir.clone();
    fs::create_dir_all(out.join("cells"))?;
    write_config_copy(&cfg, &hash)?;
    let spec = cfg.network_spec();
    let meta = ReportMeta {
        tool_version: TOOL_VERSION.into(),
        config_hash: hash.clone(),
        rule: sweep.rule,
        backend: sweep.backend,
        topology: sweep.topology,
        safety_limit: sweep.safety_limit,
    };
    let store = DirStore {
        dir: out.join("cells"),
        hash: hash.clone(),
    };
    let outcome = run_sweep(&sweep, &cfg.es, &spec, &cfg.make_env(), &store, meta.clone())?;

    let mut w = create(&out.join("raw.csv"))?;
    write_raw_csv(&outcome.rows, &meta, &mut w)?;
    w.flush()?;
    let mut w = create(&out.join("failed.csv"))?;
    write_failed_csv(&outcome.report.failed_cells, &mut w)?;
    w.flush()?;
    let layout = plasticlab::genome::Layout::for_network(&spec);
    for cell in outcome.cells.iter().filter(|c| c.failure.is_none()) {
        let genome = Genome::new(layout.clone(), cell.theta.clone())?;
        save_genome(&out.join("genomes").join(format!("{}.json", cell.key.id())), &genome, &hash)?;
    }
    write_report_files(&out, &outcome.report)?;
    print_report(&outcome.report);

    let failed = outcome.failed();
    if failed == 0 {
        Ok(ExitCode::SUCCESS)
    } else if failed == outcome.cells.len() {
        Err(Failure::runtime(format!("all {failed} sweep cells failed")))
    } else {
        eprintln!("{failed} of {} cells failed", outcome.cells.len());
        Ok(ExitCode::from(PARTIAL))
    }
}

pub fn report(dir: &Path) -> Result<ExitCode, Failure> {
    let raw = dir.join("raw.csv");
    let file = File::open(&raw).map_err(|e| Failure::runtime(format!("{}: {e}", raw.display())))?;
    let (meta, rows) = read_raw_csv(BufReader::new(file))?;
    let failed_path = dir.join("failed.csv");
    let failed = if failed_path.exists() {
        read_failed_csv(File::open(&failed_path)?)?
    } else {
        Vec::new()
    };
    let report = SweepReport::from_rows(meta, &rows, &failed);
    write_report_files(dir, &report)?;
    print_report(&report);
    Ok(ExitCode::SUCCESS)
}
