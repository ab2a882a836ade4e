//! Command-line front end.
//!
//! Settings come from built-in defaults, then an optional flat
//! `key = value` config file, then flags. Sweep results go to the output
//! file or, without `-o`, to stdout as the only payload; progress lines go
//! to stderr.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::analytic::{ber_closed_form, AnalyticParams};
use crate::channel::FadingKind;
use crate::error::{Error, Result};
use crate::estimator::CsiMode;
use crate::harness::{sweep_with_progress, BerRecord, ReceiverMode, SimConfig, StoppingRule, SweepAxis};

pub const EXIT_OK: u8 = 0;
pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

pub const CSV_HEADER: &str = "sweep,value_db,mode,frames,bits,bit_errors,ber";

const DEFAULT_SIR_VALUES: [f64; 7] = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0];
const DEFAULT_EBNO_VALUES: [f64; 11] = [0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0, 21.0, 24.0, 27.0, 30.0];

#[derive(Parser, Debug)]
#[command(
    name = "ofdm-cci",
    version,
    about = "BER simulator for coordinated symbol repetition with ML CCI cancellation"
)]
pub struct CliArgs {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sweep the BS1/BS3 signal-to-interference ratio.
    SweepSir(SweepArgs),
    /// Sweep Eb/N0.
    SweepEbno(SweepArgs),
    /// Print the closed-form BER of the uncancelled system.
    Analytic(AnalyticArgs),
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub settings: Settings,
}

#[derive(Args, Debug)]
pub struct AnalyticArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Eb/N0 in dB.
    #[arg(long, allow_negative_numbers = true)]
    pub ebno: Option<f64>,
    /// Interferer SIRs in dB, comma separated (defaults to SIR12,SIR13).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub sir: Option<Vec<f64>>,
    /// Square QAM order.
    #[arg(long, default_value_t = 4)]
    pub order: u32,
}

/// Every tunable of a simulation run. `None` means "not given here".
#[derive(Args, Debug, Default, Clone, PartialEq)]
pub struct Settings {
    /// Flat `key = value` config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub sir12: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub sir13: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub ebno: Option<f64>,
    /// Swept values in dB, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub values: Option<Vec<f64>>,
    /// flat | multipath | awgn
    #[arg(long)]
    pub channel: Option<FadingKind>,
    /// perfect | ls
    #[arg(long)]
    pub csi: Option<CsiMode>,
    #[arg(long)]
    pub pdp_decay: Option<f64>,
    #[arg(long)]
    pub min_errors: Option<u64>,
    #[arg(long)]
    pub max_frames: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Receiver modes, comma separated: proposed,baseline,analytic
    #[arg(long, value_delimiter = ',')]
    pub modes: Option<Vec<ReceiverMode>>,
    /// Pair subcarrier l with l + offset.
    #[arg(long)]
    pub pair_offset: Option<usize>,
    #[arg(long)]
    pub speed_kmh: Option<f64>,
    #[arg(long)]
    pub carrier_freq_hz: Option<f64>,
    #[arg(long)]
    pub bandwidth_hz: Option<f64>,
    #[arg(short = 'o', long)]
    pub output: Option<PathBuf>,
}

fn parse_value<T: std::str::FromStr>(key: &str, raw: &str, line: usize) -> Result<T> {
    raw.parse().map_err(|_| Error::Config(format!("line {line}: invalid value '{raw}' for '{key}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, raw: &str, line: usize) -> Result<Vec<T>> {
    raw.split(',').map(|v| parse_value(key, v.trim(), line)).collect()
}

impl Settings {
    /// Parses a flat `key = value` file. `#` starts a comment; keys may use
    /// `-` or `_`.
    pub fn parse_file_contents(text: &str) -> Result<Settings> {
        let mut s = Settings::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) =
                content.split_once('=').ok_or_else(|| Error::Config(format!("line {line}: expected 'key = value'")))?;
            let key = key.trim().replace('-', "_");
            let value = value.trim();
            match key.as_str() {
                "sir12" => s.sir12 = Some(parse_value(&key, value, line)?),
                "sir13" => s.sir13 = Some(parse_value(&key, value, line)?),
                "ebno" => s.ebno = Some(parse_value(&key, value, line)?),
                "values" => s.values = Some(parse_list(&key, value, line)?),
                "channel" => s.channel = Some(parse_value(&key, value, line)?),
                "csi" => s.csi = Some(parse_value(&key, value, line)?),
                "pdp_decay" => s.pdp_decay = Some(parse_value(&key, value, line)?),
                "min_errors" => s.min_errors = Some(parse_value(&key, value, line)?),
                "max_frames" => s.max_frames = Some(parse_value(&key, value, line)?),
                "seed" => s.seed = Some(parse_value(&key, value, line)?),
                "workers" => s.workers = Some(parse_value(&key, value, line)?),
                "modes" => s.modes = Some(parse_list(&key, value, line)?),
                "pair_offset" => s.pair_offset = Some(parse_value(&key, value, line)?),
                "speed_kmh" => s.speed_kmh = Some(parse_value(&key, value, line)?),
                "carrier_freq_hz" => s.carrier_freq_hz = Some(parse_value(&key, value, line)?),
                "bandwidth_hz" => s.bandwidth_hz = Some(parse_value(&key, value, line)?),
                "output" => s.output = Some(PathBuf::from(value)),
                other => return Err(Error::Config(format!("line {line}: unknown key '{other}'"))),
            }
        }
        Ok(s)
    }

    pub fn load_file(path: &Path) -> Result<Settings> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Settings::parse_file_contents(&text)
    }

    /// Fills every unset field from `base`.
    pub fn or(self, base: Settings) -> Settings {
        Settings {
            config: self.config.or(base.config),
            sir12: self.sir12.or(base.sir12),
            sir13: self.sir13.or(base.sir13),
            ebno: self.ebno.or(base.ebno),
            values: self.values.or(base.values),
            channel: self.channel.or(base.channel),
            csi: self.csi.or(base.csi),
            pdp_decay: self.pdp_decay.or(base.pdp_decay),
            min_errors: self.min_errors.or(base.min_errors),
            max_frames: self.max_frames.or(base.max_frames),
            seed: self.seed.or(base.seed),
            workers: self.workers.or(base.workers),
            modes: self.modes.or(base.modes),
            pair_offset: self.pair_offset.or(base.pair_offset),
            speed_kmh: self.speed_kmh.or(base.speed_kmh),
            carrier_freq_hz: self.carrier_freq_hz.or(base.carrier_freq_hz),
            bandwidth_hz: self.bandwidth_hz.or(base.bandwidth_hz),
            output: self.output.or(base.output),
        }
    }

    /// Flags layered over the config file named by `--config`, if any.
    pub fn resolve(self) -> Result<Settings> {
        match &self.config {
            Some(path) => {
                let file = Settings::load_file(path)?;
                Ok(self.or(file))
            }
            None => Ok(self),
        }
    }

    pub fn to_config(&self) -> Result<SimConfig> {
        let d = SimConfig::default();
        let frame = match self.pair_offset {
            Some(offset) => d.frame.clone().with_pair_offset(offset)?,
            None => d.frame.clone(),
        };
        let cfg = SimConfig {
            carrier_freq_hz: self.carrier_freq_hz.unwrap_or(d.carrier_freq_hz),
            bandwidth_hz: self.bandwidth_hz.unwrap_or(d.bandwidth_hz),
            speed_kmh: self.speed_kmh.unwrap_or(d.speed_kmh),
            frame,
            channel: self.channel.unwrap_or(d.channel),
            pdp_decay: self.pdp_decay.unwrap_or(d.pdp_decay),
            sir12_db: self.sir12.unwrap_or(d.sir12_db),
            sir13_db: self.sir13.unwrap_or(d.sir13_db),
            ebno_db: self.ebno.unwrap_or(d.ebno_db),
            csi: self.csi.unwrap_or(d.csi),
            modes: self.modes.clone().unwrap_or(d.modes.clone()),
            master_seed: self.seed.unwrap_or(d.master_seed),
            stopping: StoppingRule {
                min_errors: self.min_errors.unwrap_or(d.stopping.min_errors),
                max_frames: self.max_frames.unwrap_or(d.stopping.max_frames),
            },
            workers: self.workers.unwrap_or(d.workers),
            ..d
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn write_csv<W: Write + ?Sized>(records: &[BerRecord], out: &mut W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{},{},{},{},{},{},{}", r.sweep, r.value_db, r.mode, r.frames, r.bits, r.bit_errors, r.ber)?;
    }
    out.flush()
}

fn summary_line(rows: &[BerRecord]) -> String {
    let Some(first) = rows.first() else { return String::new() };
    let parts: Vec<String> = rows
        .iter()
        .map(|r| {
            if r.is_empty_run() {
                format!("{} no frames run", r.mode)
            } else if r.mode.is_simulated() {
                format!("{} ber={:.4e} ({}/{} bits, {} frames)", r.mode, r.ber, r.bit_errors, r.bits, r.frames)
            } else {
                format!("{} ber={:.4e}", r.mode, r.ber)
            }
        })
        .collect();
    format!("{} = {} dB: {}", first.sweep, first.value_db, parts.join("; "))
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::UnsupportedModulation(_) | Error::Domain(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn run_sweep(
    axis: SweepAxis,
    args: SweepArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> std::result::Result<(), Failure> {
    let settings = args.settings.resolve()?;
    let cfg = settings.to_config()?;
    let values = settings.values.clone().unwrap_or_else(|| match axis {
        SweepAxis::Sir13 => DEFAULT_SIR_VALUES.to_vec(),
        SweepAxis::Ebno => DEFAULT_EBNO_VALUES.to_vec(),
    });
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return Err(Failure::Config("--values needs at least one number".into()));
    }

    // open the output before simulating so a bad path fails fast
    let mut file = match &settings.output {
        Some(path) => Some(BufWriter::new(
            File::create(path).map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))?,
        )),
        None => None,
    };

    let records = sweep_with_progress(&cfg, axis, &values, |rows| {
        let _ = writeln!(stderr, "{}", summary_line(rows));
    })
    .map_err(|e| Failure::Runtime(e.to_string()))?;

    let written = match file.as_mut() {
        Some(f) => write_csv(&records, f),
        None => write_csv(&records, stdout),
    };
    written.map_err(|e| Failure::Runtime(format!("writing CSV failed: {e}")))
}

fn run_analytic(args: AnalyticArgs, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    let base = Settings { config: args.config, ..Settings::default() }.resolve()?;
    let cfg = base.to_config()?;
    let params = AnalyticParams {
        order: args.order,
        sir_db: args.sir.unwrap_or_else(|| vec![cfg.sir12_db, cfg.sir13_db]),
        ebno_db: args.ebno.unwrap_or(cfg.ebno_db),
    };
    let ber = ber_closed_form(&params)?;
    writeln!(stdout, "{ber}").map_err(|e| Failure::Runtime(e.to_string()))
}

/// Parses `argv` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match CliArgs::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = write!(stdout, "{e}");
            return EXIT_OK;
        }
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return EXIT_CONFIG;
        }
    };

    let result = match args.command {
        Command::SweepSir(a) => run_sweep(SweepAxis::Sir13, a, stdout, stderr),
        Command::SweepEbno(a) => run_sweep(SweepAxis::Ebno, a, stdout, stderr),
        Command::Analytic(a) => run_analytic(a, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Config(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_CONFIG
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_RUNTIME
        }
    }
}
