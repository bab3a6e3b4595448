//! Command-line front end. Exit codes: 0 success, 1 usage, 2 I/O, 3 numerical.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{Grouping, PipelineConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, mean_abs_error, score_pair, EvalReport};
use crate::io::{read_wav, write_wav, PitchTable, REFERENCE_HEADER, TRAJECTORY_HEADER};
use crate::pipeline::{estimate, Intermediates};
use crate::scenario::Scenario;
use crate::speaker_count::{count_speakers, train_count_model, CountModel};
use crate::spectral::SignalBuffer;

#[derive(Debug, Parser)]
#[command(name = "copitch", version, about = "Two-speaker multipitch estimation with the modified group delay")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// key=value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub fmin: Option<f64>,
    #[arg(long, global = true)]
    pub fmax: Option<f64>,
    /// MODGD compression exponent on the group delay magnitude.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// MODGD exponent on the smoothed spectrum.
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// Stray-value threshold in Hz.
    #[arg(long, global = true)]
    pub rho: Option<f64>,
    #[arg(long = "tmr-db", global = true, allow_hyphen_values = true)]
    pub tmr_db: Option<f64>,
    #[arg(long = "snr-db", global = true, allow_hyphen_values = true)]
    pub snr_db: Option<f64>,
    #[arg(long = "t60-ms", global = true)]
    pub t60_ms: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate two pitch trajectories from a WAV file.
    Estimate {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Write per-frame intermediates into this directory.
        #[arg(long = "dump-intermediates")]
        dump_intermediates: Option<PathBuf>,
        /// Use DP grouping instead of high/low grouping.
        #[arg(long)]
        dp: bool,
    },
    /// Render each scenario source to its own WAV and reference file.
    Synth {
        scenario: PathBuf,
        #[arg(short, long)]
        out_dir: PathBuf,
    },
    /// Render the scenario mixture plus one reference file per source.
    Mix {
        scenario: PathBuf,
        #[arg(short, long)]
        out_dir: PathBuf,
    },
    /// Score a two-track trajectory file against one or two references.
    Eval {
        detected: PathBuf,
        #[arg(required = true, num_args = 1..=2)]
        references: Vec<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Train speaker-count models from a manifest of `label path` lines.
    TrainCount {
        manifest: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Classify the number of speakers in a WAV file.
    Count {
        input: PathBuf,
        #[arg(short, long)]
        model: PathBuf,
    },
    /// Convert an intermediates directory into CSV files.
    Plotdata {
        dump_dir: PathBuf,
        #[arg(short, long)]
        out_dir: PathBuf,
    },
}

pub const DUMP_FILE: &str = "intermediates.json";

impl Cli {
    fn pipeline_config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::from_text(&std::fs::read_to_string(p)?)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
            cfg.gmm.seed = s;
        }
        let r = &mut cfg.engine.range;
        r.f_min = self.fmin.unwrap_or(r.f_min);
        r.f_max = self.fmax.unwrap_or(r.f_max);
        let m = &mut cfg.engine.modgd;
        m.alpha = self.alpha.unwrap_or(m.alpha);
        m.gamma = self.gamma.unwrap_or(m.gamma);
        cfg.post.rho = self.rho.unwrap_or(cfg.post.rho);
        Ok(cfg)
    }

    fn scenario(&self, path: &Path) -> Result<Scenario> {
        let mut s = Scenario::from_text(&std::fs::read_to_string(path)?)?;
        if let Some(v) = self.seed {
            s.seed = v;
        }
        s.tmr_db = self.tmr_db.unwrap_or(s.tmr_db);
        s.snr_db = self.snr_db.unwrap_or(s.snr_db);
        s.t60_ms = self.t60_ms.unwrap_or(s.t60_ms);
        if self.snr_db.is_some() && s.noise.is_none() {
            s.noise = Some(crate::mixture::NoiseKind::White);
        }
        s.validate()?;
        Ok(s)
    }
}

fn write_references(dir: &Path, times: &[f64], refs: &[Vec<f64>]) -> Result<()> {
    for (i, r) in refs.iter().enumerate() {
        PitchTable::new(times.to_vec(), vec![r.clone()])?.write(&dir.join(format!("ref{}.txt", i + 1)), REFERENCE_HEADER)?;
    }
    Ok(())
}

fn csv_rows(rows: &[Vec<f64>], times: &[f64], header_prefix: &str) -> String {
    let width = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut s = String::from("frame,time_sec");
    for j in 0..width {
        write!(s, ",{header_prefix}{j}").unwrap();
    }
    s.push('\n');
    for (k, row) in rows.iter().enumerate() {
        write!(s, "{k},{:.4}", times[k]).unwrap();
        for v in row {
            write!(s, ",{v:.6e}").unwrap();
        }
        s.push('\n');
    }
    s
}

fn report_table(rows: &[(usize, usize, EvalReport)]) -> (String, String) {
    let mut text = format!("{:<8} {:<6} {:>8} {:>8} {:>9} {:>12} {:>9}\n", "speaker", "track", "acc10", "acc20", "e_fs_hz", "mean_err_hz", "n_voiced");
    let mut csv = String::from("speaker,track,accuracy_10,accuracy_20,e_fs_hz,mean_fine_error_hz,n_voiced\n");
    let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| format!("{x:.3}"));
    for (spk, trk, r) in rows {
        writeln!(
            text,
            "{spk:<8} {trk:<6} {:>8.2} {:>8.2} {:>9} {:>12} {:>9}",
            r.accuracy_10,
            r.accuracy_20,
            opt(r.e_fs),
            opt(r.mean_fine_error),
            r.n_voiced
        )
        .unwrap();
        writeln!(csv, "{spk},{trk},{:.4},{:.4},{},{},{}", r.accuracy_10, r.accuracy_20, opt(r.e_fs), opt(r.mean_fine_error), r.n_voiced).unwrap();
    }
    (text, csv)
}

fn check_grid(det: &PitchTable, reference: &PitchTable) -> Result<()> {
    if det.len() != reference.len() || det.times.iter().zip(&reference.times).any(|(a, b)| (a - b).abs() > 1e-3) {
        return Err(Error::invalid("detected and reference files are on different time grids"));
    }
    Ok(())
}

/// Runs one command, writing human-readable output to `out`.
pub fn execute(cli: &Cli, out: &mut String) -> Result<()> {
    match &cli.command {
        Command::Estimate { input, output, dump_intermediates, dp } => {
            let signal = read_wav(input)?;
            let mut cfg = cli.pipeline_config()?;
            if *dp {
                cfg.grouping = Grouping::Dp;
            }
            let est = estimate(&signal, &cfg, dump_intermediates.is_some())?;
            est.to_table().write(output, TRAJECTORY_HEADER)?;
            if let (Some(dir), Some(dump)) = (dump_intermediates, &est.intermediates) {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join(DUMP_FILE), serde_json::to_string(dump)?)?;
            }
            writeln!(out, "{} frames, voiced: track1 {} track2 {}", est.times.len(), est.high.voiced_count(), est.low.voiced_count()).unwrap();
        }
        Command::Synth { scenario, out_dir } | Command::Mix { scenario, out_dir } => {
            let sc = cli.scenario(scenario)?;
            let cfg = cli.pipeline_config()?;
            let r = sc.render(&cfg.frame)?;
            std::fs::create_dir_all(out_dir)?;
            if matches!(cli.command, Command::Synth { .. }) {
                for (i, s) in r.sources.iter().enumerate() {
                    write_wav(&out_dir.join(format!("source{}.wav", i + 1)), s)?;
                }
            } else {
                write_wav(&out_dir.join("mixture.wav"), &r.mixture)?;
            }
            write_references(out_dir, &r.times, &r.references)?;
            writeln!(out, "wrote {} source(s), {} frames of reference", r.sources.len(), r.times.len()).unwrap();
        }
        Command::Eval { detected, references, csv } => {
            let det = PitchTable::read(detected, 2)?;
            let refs: Vec<PitchTable> = references.iter().map(|p| PitchTable::read(p, 1)).collect::<Result<_>>()?;
            refs.iter().try_for_each(|r| check_grid(&det, r))?;
            let tracks = [det.columns[0].as_slice(), det.columns[1].as_slice()];
            let rows = if refs.len() == 2 {
                let p = score_pair(tracks, [&refs[0].columns[0], &refs[1].columns[0]])?;
                vec![(1, p.assignment[0] + 1, p.speakers[0]), (2, p.assignment[1] + 1, p.speakers[1])]
            } else {
                let r = &refs[0].columns[0];
                let k = if mean_abs_error(tracks[1], r)? < mean_abs_error(tracks[0], r)? { 1 } else { 0 };
                vec![(1, k + 1, evaluate(tracks[k], r)?)]
            };
            let (text, table) = report_table(&rows);
            out.push_str(&text);
            if let Some(p) = csv {
                std::fs::write(p, table)?;
            }
        }
        Command::TrainCount { manifest, output } => {
            let cfg = cli.pipeline_config()?;
            let base = manifest.parent().unwrap_or(Path::new("."));
            let mut classes: Vec<(usize, Vec<SignalBuffer>)> = Vec::new();
            for (ln, line) in std::fs::read_to_string(manifest)?.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (label, path) = line
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| Error::format(format!("manifest line {}: expected `label path`", ln + 1)))?;
                let label: usize = label.parse().map_err(|_| Error::format(format!("manifest line {}: bad label", ln + 1)))?;
                let clip = read_wav(&base.join(path.trim()))?;
                match classes.iter_mut().find(|c| c.0 == label) {
                    Some(c) => c.1.push(clip),
                    None => classes.push((label, vec![clip])),
                }
            }
            if classes.is_empty() {
                return Err(Error::invalid("manifest lists no clips"));
            }
            classes.sort_by_key(|c| c.0);
            let (model, reports) = train_count_model(&classes, &cfg.smcc, &cfg.gmm)?;
            std::fs::write(output, model.to_json()?)?;
            for r in &reports {
                writeln!(out, "class {}: {} EM steps, final mean log-likelihood {:.4}", r.model.class_label, r.log_likelihood.len() - 1, r.log_likelihood.last().unwrap()).unwrap();
            }
        }
        Command::Count { input, model } => {
            let m = CountModel::from_json(&std::fs::read_to_string(model)?)?;
            writeln!(out, "{}", count_speakers(&read_wav(input)?, &m)?).unwrap();
        }
        Command::Plotdata { dump_dir, out_dir } => {
            let d: Intermediates = serde_json::from_str(&std::fs::read_to_string(dump_dir.join(DUMP_FILE))?)?;
            std::fs::create_dir_all(out_dir)?;
            let mut traj = String::from("frame,time_sec,f0_track1_hz,f0_track2_hz,label,flux,flatness\n");
            for k in 0..d.times.len() {
                writeln!(traj, "{k},{:.4},{:.3},{:.3},{:?},{:.6e},{:.6e}", d.times[k], d.high[k], d.low[k], d.labels[k], d.flux[k], d.flatness[k]).unwrap();
            }
            std::fs::write(out_dir.join("trajectory.csv"), traj)?;
            std::fs::write(out_dir.join("power_db.csv"), csv_rows(&d.power_db, &d.times, "bin"))?;
            std::fs::write(out_dir.join("flattened.csv"), csv_rows(&d.flattened, &d.times, "bin"))?;
            std::fs::write(out_dir.join("modgd_first.csv"), csv_rows(&d.modgd_first, &d.times, "lag"))?;
            std::fs::write(out_dir.join("modgd_second.csv"), csv_rows(&d.modgd_second, &d.times, "lag"))?;
            writeln!(out, "wrote 5 CSV files with {} frames", d.times.len()).unwrap();
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
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut out = String::new();
    match execute(&cli, &mut out) {
        Ok(()) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
