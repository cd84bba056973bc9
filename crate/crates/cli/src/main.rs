use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bayernet::io::{read_cfa, read_rgb, write_cfa, write_rgb};
use bayernet::report::{evaluate, ingest_dataset, model_report, synthetic_set, EvalOptions, Ingested};
use bayernet::search::TrainingOracle;
use bayernet::train::{build_dataset, trace_csv, train};
use bayernet::{
    demosaic_batch, hqli, mosaic, progressive_search, BayerLayout, DemosaicModel, Error, MosaicImage, NetworkSpec,
    Result, SearchBudget, SubNetwork, Target, TrainConfig,
};
use clap::{Args, Parser, Subcommand};

/// Bayer demosaicking with HQLI initialization and residual CNNs.
#[derive(Parser)]
#[command(name = "bayernet", version)]
struct Cli {
    /// Worker threads (defaults to one per core).
    #[arg(long, global = true, env = "BAYERNET_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample an RGB image through a Bayer filter.
    Mosaic {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value = "rggb")]
        layout: BayerLayout,
    },
    /// Interpolate a CFA image with the HQLI filters only.
    Init {
        input: PathBuf,
        output: PathBuf,
        /// Layout for CFA files that do not name one.
        #[arg(long)]
        layout: Option<BayerLayout>,
    },
    /// Demosaic a CFA image, or an RGB image with `--simulate`.
    Demosaic {
        input: PathBuf,
        output: PathBuf,
        /// Model file; the zero-weight default model (plain HQLI) if absent.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Treat the input as ground-truth RGB and mosaic it with this layout first.
        #[arg(long, value_name = "LAYOUT")]
        simulate: Option<BayerLayout>,
        /// Layout for CFA files that do not name one.
        #[arg(long)]
        layout: Option<BayerLayout>,
    },
    /// Train one sub-network and store it in a model file.
    Train(TrainArgs),
    /// Search an architecture for one sub-network.
    Search(SearchArgs),
    /// Score a model on a directory of ground-truth images.
    Eval {
        dir: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "rggb")]
        layout: BayerLayout,
        /// Border pixels excluded from PSNR.
        #[arg(long, default_value_t = 0)]
        crop: usize,
        /// Also write the CSV report here (`-` for stdout instead of the table).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Parameter and FLOP counts of a model.
    Report {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "100x100", value_parser = parse_size)]
        size: (usize, usize),
    },
    /// Write a fresh model file.
    NewModel {
        output: PathBuf,
        /// All-zero weights (demosaics to plain HQLI) instead of He initialization.
        #[arg(long)]
        zeros: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Architecture files replacing the defaults.
        #[arg(long)]
        spec_g: Option<PathBuf>,
        #[arg(long)]
        spec_gr: Option<PathBuf>,
        #[arg(long)]
        spec_gb: Option<PathBuf>,
    },
    /// Print the architecture of one sub-network.
    Spec {
        #[arg(long)]
        target: Target,
        /// Read from this model instead of the defaults.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Generate a synthetic ground-truth set as PNG files.
    Synth {
        dir: PathBuf,
        #[arg(long, default_value_t = 24)]
        count: usize,
        #[arg(long, default_value = "64x64", value_parser = parse_size)]
        size: (usize, usize),
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    target: Target,
    /// Directory of ground-truth training images.
    #[arg(long)]
    data: PathBuf,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Training configuration (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Model providing the other two networks and the default architecture.
    #[arg(long)]
    base: Option<PathBuf>,
    /// Architecture file for the trained network.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Per-epoch loss trace; `<out>.<target>.csv` by default.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    target: Target,
    #[arg(long)]
    data: PathBuf,
    /// Budget file (`max_params`, `max_depth`, `widths`, ...).
    #[arg(long)]
    budget: Option<PathBuf>,
    /// Training configuration used to score each candidate.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Where to write the chosen architecture.
    #[arg(long)]
    out: PathBuf,
    /// Candidate trace CSV; `<out>.trace.csv` by default.
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or("expected HxW, e.g. 100x100")?;
    let n = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad size `{s}`"));
    let (h, w) = (n(h)?, n(w)?);
    if h == 0 || w == 0 {
        return Err("size must be positive".into());
    }
    Ok((h, w))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_model(path: Option<&Path>) -> Result<DemosaicModel> {
    match path {
        Some(p) => DemosaicModel::load(p),
        None => Ok(DemosaicModel::zeros_default()),
    }
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<TrainConfig> {
    let mut cfg = match path {
        Some(p) => TrainConfig::parse(&fs::read_to_string(p)?)?,
        None => TrainConfig::default(),
    };
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Invalid(format!("override `{o}` is not KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_spec(path: &Path, target: Target) -> Result<NetworkSpec> {
    let spec = NetworkSpec::from_text(&fs::read_to_string(path)?)?;
    if spec.target != target {
        return Err(Error::Invalid(format!("{} describes a `{}` network, not `{target}`", path.display(), spec.target)));
    }
    Ok(spec)
}

fn ingest(dir: &Path) -> Result<Ingested> {
    let data = ingest_dataset(dir)?;
    if data.images.is_empty() {
        return Err(Error::EmptyDataset(format!("no usable images in {}", dir.display())));
    }
    log::info!("{}: {} images, {} skipped", dir.display(), data.images.len(), data.skipped.len());
    Ok(data)
}

fn read_input(input: &Path, simulate: Option<BayerLayout>, layout: Option<BayerLayout>) -> Result<MosaicImage> {
    match simulate {
        Some(l) => Ok(mosaic(&read_rgb(input)?, l)),
        None => read_cfa(input, layout),
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Invalid("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Invalid(e.to_string()))?;
    }
    let threads = cli.threads.unwrap_or_else(rayon::current_num_threads);

    match cli.cmd {
        Cmd::Mosaic { input, output, layout } => write_cfa(&output, &mosaic(&read_rgb(&input)?, layout)),
        Cmd::Init { input, output, layout } => write_rgb(&output, &hqli(&read_cfa(&input, layout)?)?),
        Cmd::Demosaic { input, output, model, simulate, layout } => {
            let model = load_model(model.as_deref())?;
            let m = read_input(&input, simulate, layout)?;
            let out = demosaic_batch(std::slice::from_ref(&m), &model, threads)?;
            log::info!("demosaicked {} in {:.3}s", input.display(), out.wall.as_secs_f64());
            let img = out.results.into_iter().next().expect("one result per input")?;
            write_rgb(&output, &img)
        }
        Cmd::Train(a) => cmd_train(a),
        Cmd::Search(a) => cmd_search(a),
        Cmd::Eval { dir, model, layout, crop, csv } => {
            let model = load_model(model.as_deref())?;
            let data = ingest(&dir)?;
            let opts = EvalOptions { layout, crop, threads, seed: None, flags: String::new() };
            let mut report = evaluate(&data.names, &data.images, &model, &opts)?;
            report.skipped.splice(0..0, data.skipped);
            match csv.as_deref() {
                Some(p) if p == Path::new("-") => print!("{}", report.to_csv()),
                Some(p) => {
                    fs::write(p, report.to_csv())?;
                    print!("{}", report.to_table());
                }
                None => print!("{}", report.to_table()),
            }
            Ok(())
        }
        Cmd::Report { model, size } => {
            let model = load_model(model.as_deref())?;
            print!("{}", model_report(&model, size.0, size.1));
            Ok(())
        }
        Cmd::NewModel { output, zeros, seed, spec_g, spec_gr, spec_gb } => {
            let mut specs = Target::ALL.map(NetworkSpec::default_for);
            for (slot, (path, t)) in specs.iter_mut().zip([spec_g, spec_gr, spec_gb].into_iter().zip(Target::ALL)) {
                if let Some(p) = path {
                    *slot = load_spec(&p, t)?;
                }
            }
            let model = if zeros {
                DemosaicModel::from_specs(specs, bayernet::NetworkWeights::zeros)?
            } else {
                DemosaicModel::he_init(specs, seed)?
            };
            model.save(&output)
        }
        Cmd::Spec { target, model } => {
            let spec = match model {
                Some(p) => DemosaicModel::load(&p)?.net(target).spec.clone(),
                None => NetworkSpec::default_for(target),
            };
            print!("{}", spec.to_text());
            Ok(())
        }
        Cmd::Synth { dir, count, size, seed } => {
            fs::create_dir_all(&dir)?;
            for (i, img) in synthetic_set(count, size.0, size.1, seed).iter().enumerate() {
                write_rgb(&dir.join(format!("synth_{i:04}.png")), img)?;
            }
            Ok(())
        }
    }
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref(), &a.overrides)?;
    let mut model = load_model(a.base.as_deref())?;
    let spec = match &a.spec {
        Some(p) => load_spec(p, a.target)?,
        None => model.net(a.target).spec.clone(),
    };
    let data = ingest(&a.data)?;
    let ds = build_dataset(&data.images, a.target, cfg.layout, &cfg)?;
    log::info!("{} training, {} validation examples", ds.train.len(), ds.val.len());
    let out = train(&spec, &ds, &cfg)?;
    *model.net_mut(a.target) = SubNetwork::new(spec, out.weights)?;
    model.save(&a.out)?;
    let trace = a.trace.unwrap_or_else(|| with_suffix(&a.out, &format!(".{}.csv", a.target)));
    fs::write(&trace, trace_csv(&out.trace))?;
    if let Some(last) = out.trace.last() {
        println!("{}: epoch {} train {:.6} val {:.6}", a.target, last.epoch, last.train_loss, last.val_loss);
    }
    Ok(())
}

fn cmd_search(a: SearchArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref(), &a.overrides)?;
    let budget = match &a.budget {
        Some(p) => SearchBudget::parse(&fs::read_to_string(p)?)?,
        None => SearchBudget::default(),
    };
    let data = ingest(&a.data)?;
    let ds = build_dataset(&data.images, a.target, cfg.layout, &cfg)?;
    let oracle = TrainingOracle { data: &ds, cfg };
    let result = progressive_search(a.target, &budget, |s| oracle.eval(s))?;
    fs::write(&a.out, result.spec.to_text())?;
    let trace = a.trace.unwrap_or_else(|| with_suffix(&a.out, ".trace.csv"));
    fs::write(&trace, result.trace_csv())?;
    println!(
        "{}: width {} depth {} params {} after {} candidates",
        a.target,
        result.width,
        result.depth,
        result.params,
        result.trace.len()
    );
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Invalid(_) => 1,
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
