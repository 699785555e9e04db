use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use curvex::config::{KeyValues, Settings};
use curvex::error::{Error, Result};
use curvex::eval::{
    convergence_row, convergence_table, evaluate_rose, RoseCase, CONVERGENCE_HEADER,
    CORRELATION_HEADER,
};
use curvex::io::{read_dataset_csv, write_dataset_csv, write_history_csv, write_json};
use curvex::model::{load_model, load_preprocessor, save_model};
use curvex::pipeline::{
    compare, dataset_kind, default_workers, generate, manifest_path, prepare, train_network,
    write_prepared, Kind, Matrix,
};
use curvex_core::hybrid::Hybrid;
use curvex_core::neural::FrozenNet;
use curvex_core::preprocess::PreprocessorState;

#[derive(Parser)]
#[command(
    name = "curvex",
    version,
    about = "Level-set curvature with a neural error corrector"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Circle,
    Sine,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a circle or sine training dataset.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        eta: Option<u32>,
        /// Multiplies the sample density and the amplitude/tilt counts.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `<out>.manifest.json`.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Balance the sine data, merge it with the circle data, split, and fit
    /// the preprocessor.
    Prepare {
        /// Generated CSVs; each needs its `<csv>.manifest.json` to tell its kind.
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 6)]
        eta: u32,
        #[arg(long)]
        m_iota: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the error network on a prepared directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `history.csv` next to the model.
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        hidden_width: Option<usize>,
        /// Stop after this many seconds and keep the best weights so far.
        #[arg(long)]
        time_limit: Option<f64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Compare baseline and hybrid curvature on a polar rose.
    EvalRose {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        pre: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        eta: u32,
        #[arg(long)]
        a: f64,
        #[arg(long)]
        b: f64,
        #[arg(long, default_value_t = 5)]
        p: u32,
        #[arg(long, default_value_t = 10)]
        nu: u32,
        #[arg(long, default_value_t = curvex::eval::TIMING_REPETITIONS)]
        repetitions: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dump_correlation: Option<PathBuf>,
    },
    /// Rose errors across refinement levels with observed orders.
    Convergence {
        /// Directory with `model_eta<N>.json` and `preprocessor_eta<N>.json`.
        #[arg(long)]
        model_dir: Option<PathBuf>,
        #[arg(long, num_args = 1.., default_values_t = [7, 8, 9, 10])]
        etas: Vec<u32>,
        #[arg(long, default_value_t = 0.120)]
        a: f64,
        #[arg(long, default_value_t = 0.305)]
        b: f64,
        #[arg(long, default_value_t = 5)]
        p: u32,
        #[arg(long, default_value_t = 10)]
        nu: u32,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn key_values(path: Option<&Path>) -> Result<KeyValues> {
    path.map_or_else(|| Ok(KeyValues::default()), KeyValues::read)
}

fn eta_of(h: f64) -> u32 {
    (-h.log2()).round() as u32
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            config,
            kind,
            eta,
            scale,
            seed,
            out,
            manifest,
        } => {
            if !(scale > 0.0 && scale <= 1.0) {
                return Err(Error::Usage("--scale must lie in (0, 1]".into()));
            }
            let kv = key_values(config.as_deref())?;
            let mut cfg = Settings::resolve(&kv, eta)?.gen;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let cfg = cfg.scaled(scale);
            let kind = match kind {
                KindArg::Circle => Kind::Circle,
                KindArg::Sine => Kind::Sine,
            };
            let (ds, m) = generate(kind, &cfg, scale, default_workers())?;
            write_dataset_csv(&ds, &out)?;
            let manifest = manifest
                .unwrap_or_else(|| manifest_path(&out));
            write_json(&m, &manifest)?;
            if m.short_quotas > 0 {
                eprintln!(
                    "warning: {} of {} radii stopped at the draw cap below their quota",
                    m.short_quotas,
                    m.circle.as_ref().map_or(0, |c| c.nc)
                );
            }
            println!(
                "{kind}: {} samples from {} interfaces -> {}",
                m.samples,
                m.interfaces,
                out.display()
            );
        }
        Command::Prepare {
            inputs,
            out,
            eta,
            m_iota,
            seed,
        } => {
            let (mut circles, mut sines) = (Vec::new(), Vec::new());
            for p in &inputs {
                let kind = dataset_kind(p)?;
                let ds = read_dataset_csv(p, eta)?;
                match kind {
                    Kind::Circle => circles.push(ds),
                    Kind::Sine => sines.push(ds),
                }
            }
            let m_iota = m_iota.unwrap_or(Settings::defaults(eta).m_iota);
            let prepared = prepare(circles, sines, eta, m_iota, seed)?;
            let m = write_prepared(&prepared, seed, &out)?;
            println!(
                "circles {} + sines {} (balanced from {}) = {} -> train {} / test {} / valid {} (m_iota {})",
                m.circles, m.balanced_sines, m.sines, m.dataset, m.train, m.test, m.valid, m.m_iota
            );
        }
        Command::Train {
            data,
            config,
            out,
            history,
            seed,
            max_epochs,
            hidden_width,
            time_limit,
            quiet,
        } => {
            let state = load_preprocessor(&data.join("preprocessor.json"))?;
            let eta = eta_of(state.h);
            let kv = key_values(config.as_deref())?;
            let mut s = Settings::resolve(&kv, Some(eta))?;
            if let Some(v) = seed {
                s.train.seed = v;
            }
            if let Some(v) = max_epochs {
                s.train.max_epochs = v;
            }
            if let Some(w) = hidden_width {
                s.widths = [w; 4];
            }
            let train_set =
                Matrix::from_dataset(&read_dataset_csv(&data.join("train.csv"), eta)?, &state);
            let valid_set =
                Matrix::from_dataset(&read_dataset_csv(&data.join("valid.csv"), eta)?, &state);
            let limit = time_limit.map(Duration::from_secs_f64);
            let trained = train_network(
                &state,
                eta,
                s.widths,
                &s.train,
                &train_set,
                &valid_set,
                limit,
                |r| {
                    if !quiet {
                        eprintln!(
                        "epoch {:4}  lr {:.2e}  train rmse {:.3e}  valid mae {:.3e}  maxae {:.3e}",
                        r.epoch, r.lr, r.train_rmse, r.valid_mae, r.valid_maxae
                    );
                    }
                },
            )?;
            save_model(&trained.net, &out)?;
            let history = history.unwrap_or_else(|| out.with_file_name("history.csv"));
            write_history_csv(&trained.history, &history)?;
            let frozen = trained.net.to_f32();
            println!(
                "stopped: {:?} after {} epochs (best {})",
                trained.stop,
                trained.history.len(),
                trained.best_epoch
            );
            println!("{:<6} {:>12} {:>12} {:>12}", "set", "rmse", "mae", "maxae");
            let mut sets = vec![("train", train_set), ("valid", valid_set)];
            let test_path = data.join("test.csv");
            if test_path.exists() {
                sets.push((
                    "test",
                    Matrix::from_dataset(&read_dataset_csv(&test_path, eta)?, &state),
                ));
            }
            for (name, set) in &sets {
                let c = compare(&frozen, set)?;
                for (label, e) in [("numerical", c.baseline), ("network", c.network)] {
                    println!(
                        "{:<6} {:>12.4e} {:>12.4e} {:>12.4e}  {label}",
                        name, e.rmse, e.mae, e.maxae
                    );
                }
            }
        }
        Command::EvalRose {
            model,
            pre,
            config,
            eta,
            a,
            b,
            p,
            nu,
            repetitions,
            out,
            dump_correlation,
        } => {
            let (net, state) = load_pair(&model, &pre)?;
            if net.eta != eta {
                return Err(Error::Usage(format!(
                    "model was trained for eta = {}, not {eta}",
                    net.eta
                )));
            }
            let s = Settings::resolve(&key_values(config.as_deref())?, Some(eta))?;
            let solver = Hybrid::new(&net, &state, s.hk_low, s.hk_up)?;
            let case = RoseCase {
                eta,
                a,
                b,
                petals: p,
            };
            let (report, rows) = evaluate_rose(&case, nu, &solver, repetitions)?;
            write_json(&report, &out)?;
            if let Some(path) = dump_correlation {
                let table: Vec<Vec<f64>> = rows
                    .iter()
                    .map(|r| vec![r.true_hk, r.baseline_hk, r.hybrid_hk])
                    .collect();
                curvex::io::write_table(&CORRELATION_HEADER, &table, &path)?;
            }
            println!(
                "{:<14} {:>4} {:>12} {:>12} {:>12} {:>7} {:>10}",
                "method", "nu", "mae", "maxae", "rmse", "nodes", "time (s)"
            );
            for r in &report.reports {
                println!(
                    "{:<14} {:>4} {:>12.4e} {:>12.4e} {:>12.4e} {:>7} {:>10.4e}",
                    serde_json::to_value(r.method)
                        .unwrap()
                        .as_str()
                        .unwrap_or(""),
                    r.nu,
                    r.mae,
                    r.maxae,
                    r.rmse,
                    r.n_nodes,
                    r.wall_time
                );
            }
        }
        Command::Convergence {
            model_dir,
            etas,
            a,
            b,
            p,
            nu,
            config,
            out,
        } => {
            let kv = key_values(config.as_deref())?;
            let mut rows = Vec::new();
            for &eta in &etas {
                let case = RoseCase {
                    eta,
                    a,
                    b,
                    petals: p,
                };
                let pair = match &model_dir {
                    Some(dir) => {
                        let m = dir.join(format!("model_eta{eta}.json"));
                        let s = dir.join(format!("preprocessor_eta{eta}.json"));
                        if m.exists() && s.exists() {
                            Some(load_pair(&m, &s)?)
                        } else {
                            eprintln!("note: no model for eta = {eta}; baseline only");
                            None
                        }
                    }
                    None => None,
                };
                let row = match &pair {
                    Some((net, state)) => {
                        let s = Settings::resolve(&kv, Some(eta))?;
                        let solver = Hybrid::new(net, state, s.hk_low, s.hk_up)?;
                        convergence_row(&case, nu, Some(&solver))?
                    }
                    None => convergence_row::<FrozenNet>(&case, nu, None)?,
                };
                rows.push(row);
            }
            rows.sort_by_key(|r| r.eta);
            let table = convergence_table(&rows);
            write_string_table(&CONVERGENCE_HEADER, &table, &out)?;
            println!("{}", CONVERGENCE_HEADER.join(","));
            for r in &table {
                println!("{}", r.join(","));
            }
        }
    }
    Ok(())
}

fn load_pair(model: &Path, pre: &Path) -> Result<(FrozenNet, PreprocessorState)> {
    Ok((load_model(model)?.to_f32(), load_preprocessor(pre)?))
}

fn write_string_table(header: &[&str], rows: &[Vec<String>], path: &Path) -> Result<()> {
    let mut text = header.join(",");
    text.push('\n');
    for r in rows {
        text.push_str(&r.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
