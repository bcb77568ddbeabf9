use std::net::SocketAddr;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stimkit_core::calibrate::{GroupingPolicy, PredictionMode};
use stimkit_core::device::{ChannelConfig, ChannelState};
use stimkit_core::{AmplitudeLadder, Category, LevelIndex};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "stimkit", version, about = "Electrotactile stimulation synthesis, calibration and study tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Synthesize one stimulation and report its energy
    Synth(SynthArgs),
    /// Energy of every category at every ladder level
    Profiles(ProfilesArgs),
    /// Predict preferred levels from calibrated reference categories
    Predict(PredictArgs),
    /// Simulate a synthetic cohort and score the predictor on it
    Simulate(SimulateArgs),
    /// Naturalness statistics of a cohort file
    Summarize(SummarizeArgs),
    /// Encode a device command as a hex frame
    Frame(FrameArgs),
    /// Feed a hex frame file through the virtual device
    Replay(ReplayArgs),
    /// Check that every ladder amplitude is realizable with a DAC table
    DacCheck(DacCheckArgs),
    /// Run the session service
    Serve(ServeArgs),
}

/// A ladder level given as an index (`5`) or an amplitude (`1.0mA`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LevelArg {
    Index(usize),
    Amplitude(f64),
}

impl FromStr for LevelArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let lower = s.to_ascii_lowercase();
        if let Some(num) = lower.strip_suffix("ma") {
            let a: f64 = num.trim().parse().map_err(|_| format!("bad amplitude `{s}`"))?;
            return Ok(LevelArg::Amplitude(a));
        }
        s.parse().map(LevelArg::Index).map_err(|_| format!("`{s}` is neither a level index nor an amplitude like 1.0mA"))
    }
}

impl LevelArg {
    pub fn resolve(self, ladder: &AmplitudeLadder) -> CliResult<LevelIndex> {
        match self {
            LevelArg::Index(i) if i < ladder.len() => Ok(LevelIndex(i)),
            LevelArg::Index(i) => Err(CliError::Validation(format!("level {i} outside 0..{}", ladder.len()))),
            LevelArg::Amplitude(a) => ladder
                .find(a, 1e-9)
                .ok_or_else(|| CliError::Validation(format!("{a} mA is not a ladder amplitude"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Grouping {
    Single,
    FrequencyBands,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Mean,
    Matched,
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    /// Which reference each category is predicted from
    #[arg(long, value_enum, default_value = "single")]
    pub grouping: Grouping,
    /// Mean-energy ratio or ratio at one matched level
    #[arg(long, value_enum, default_value = "mean")]
    pub mode: Mode,
    /// Matched level for `--mode matched`; defaults to the reference's own level
    #[arg(long)]
    pub x: Option<LevelArg>,
}

impl PolicyArgs {
    pub fn policy(&self, single: Category) -> GroupingPolicy {
        match self.grouping {
            Grouping::Single => GroupingPolicy::single_reference(single),
            Grouping::FrequencyBands => GroupingPolicy::frequency_bands(),
        }
    }

    pub fn prediction_mode(&self, ladder: &AmplitudeLadder) -> CliResult<PredictionMode> {
        match (self.mode, self.x) {
            (Mode::Mean, None) => Ok(PredictionMode::Mean),
            (Mode::Mean, Some(_)) => Err(CliError::Usage("--x only applies to --mode matched".into())),
            (Mode::Matched, x) => Ok(PredictionMode::Matched(x.map(|x| x.resolve(ladder)).transpose()?)),
        }
    }
}

#[derive(Debug, Args)]
pub struct PatternArgs {
    #[arg(long, default_value = "tonic100")]
    pub category: Category,
    /// Amplitude in mA (peak for amplitude-modulated categories)
    #[arg(long = "amp-mA", conflicts_with = "level")]
    pub amp_ma: Option<f64>,
    /// Ladder level, as an index or e.g. `1.0mA`
    #[arg(long)]
    pub level: Option<LevelArg>,
}

impl PatternArgs {
    pub fn amplitude(&self, ladder: &AmplitudeLadder) -> CliResult<f64> {
        match (self.amp_ma, self.level) {
            (Some(a), _) => Ok(a),
            (None, Some(l)) => Ok(ladder.levels()[l.resolve(ladder)?.0]),
            (None, None) => Err(CliError::Usage("one of --amp-mA or --level is required".into())),
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub pattern: PatternArgs,
    /// Write the sampled signal as CSV
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1_000_000)]
    pub sample_rate: u32,
}

#[derive(Debug, Args)]
pub struct ProfilesArgs {
    /// Output CSV (stdout if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Calibrated reference category; repeat together with --level
    #[arg(long = "ref", required = true)]
    pub references: Vec<Category>,
    /// Selected level of the matching --ref
    #[arg(long = "level", required = true)]
    pub levels: Vec<LevelArg>,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Number of synthetic participants
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub n: u32,
    /// Relative standard deviation of each participant's energy target
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub policy: PolicyArgs,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Cohort file, one session JSON per line
    #[arg(long, required_unless_present = "fixture")]
    pub cohort: Option<PathBuf>,
    /// Use the bundled naturalness fixture instead of a cohort file
    #[arg(long, conflicts_with = "cohort")]
    pub fixture: bool,
    /// Summary CSV (stdout if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write mean/median/quartiles per category
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FrameOp {
    Stimulate,
    Stop,
    SetChannels,
    Ping,
}

/// Switch matrix as `channel:state` pairs, e.g. `0:source,1:sink`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelsArg(pub ChannelConfig);

impl FromStr for ChannelsArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut cfg = ChannelConfig::idle();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (ch, state) = part.split_once(':').ok_or_else(|| format!("expected channel:state, got `{part}`"))?;
            let ch: usize = ch.trim().parse().map_err(|_| format!("bad channel `{ch}`"))?;
            let state = match state.trim().to_ascii_lowercase().as_str() {
                "source" => ChannelState::Source,
                "sink" => ChannelState::Sink,
                "ground" | "gnd" => ChannelState::Ground,
                "nc" | "none" | "open" => ChannelState::NoConnection,
                other => return Err(format!("unknown channel state `{other}`")),
            };
            cfg.set(ch, state).map_err(|e| e.to_string())?;
        }
        Ok(ChannelsArg(cfg))
    }
}

#[derive(Debug, Args)]
pub struct FrameArgs {
    #[arg(long, value_enum, default_value = "stimulate")]
    pub op: FrameOp,
    #[command(flatten)]
    pub pattern: PatternArgs,
    #[arg(long, default_value = "0:source,1:sink")]
    pub channels: ChannelsArg,
    /// DAC table CSV (`code,current_mA`)
    #[arg(long)]
    pub lut: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Newline-delimited hex frames
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub lut: Option<PathBuf>,
    #[arg(long, default_value_t = 1_000_000)]
    pub sample_rate: u32,
}

#[derive(Debug, Args)]
pub struct DacCheckArgs {
    #[arg(long)]
    pub lut: Option<PathBuf>,
    /// Largest acceptable |requested − output|, mA
    #[arg(long, default_value_t = 0.0175)]
    pub tolerance_ma: f64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    #[arg(long, env = "STIMKIT_DATA_DIR", default_value = "./stimkit-data")]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub lut: Option<PathBuf>,
    /// Sample rate used for previews and device playback
    #[arg(long, default_value_t = 1_000_000)]
    pub sample_rate: u32,
    /// Allowed CORS origin; repeatable
    #[arg(long)]
    pub cors: Vec<String>,
}
