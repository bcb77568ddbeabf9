use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use stimkit_core::calibrate::{
    predict_all, score_matrix, write_category_csv, write_participant_csv, write_predictions_csv, CalibrationPoint,
};
use stimkit_core::device::codec::to_hex;
use stimkit_core::device::{can_realize, encode, replay, Command, DacLut, StimCommand, VirtualDevice};
use stimkit_core::energy::{closed_form_energy, signal_energy, write_profiles_csv};
use stimkit_core::signalgen::synthesize;
use stimkit_core::study::fixtures::reference_cohort;
use stimkit_core::study::{
    improvement_report, read_cohort, simulate_cohort, summarize_naturalness, write_cohort, write_stats_csv,
    write_summary_csv, RatingModel, SYNTHETIC_REFERENCE,
};
use stimkit_core::{AmplitudeLadder, PatternSpec, ProfileSet};

use crate::args::{
    DacCheckArgs, FrameArgs, FrameOp, PredictArgs, ProfilesArgs, ReplayArgs, SimulateArgs, SummarizeArgs, SynthArgs,
};
use crate::error::{CliError, CliResult};

pub fn load_lut(path: Option<&Path>) -> CliResult<DacLut> {
    match path {
        None => Ok(DacLut::default()),
        Some(p) => Ok(DacLut::read_csv(BufReader::new(File::open(p)?))?),
    }
}

fn standard_profiles() -> ProfileSet {
    ProfileSet::standard().expect("standard ladder is valid")
}

/// Runs `f` against `path` or, if absent, against `stdout`.
fn with_output(path: Option<&Path>, stdout: &mut dyn Write, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> CliResult<()> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            f(&mut w)?;
            w.flush()?;
        }
        None => f(stdout)?,
    }
    Ok(())
}

pub fn synth(args: &SynthArgs, out: &mut dyn Write) -> CliResult<()> {
    let ladder = AmplitudeLadder::standard();
    let amp = args.pattern.amplitude(&ladder)?;
    let spec = PatternSpec::new(args.pattern.category, amp);
    let sig = synthesize(&spec, args.sample_rate)?;
    if let Some(path) = &args.out {
        sig.write_csv(File::create(path)?)?;
    }
    let energy = signal_energy(&sig);
    writeln!(out, "category     {}", spec.category)?;
    writeln!(out, "amplitude_mA {amp:.3}")?;
    writeln!(out, "samples      {}", sig.len())?;
    writeln!(out, "pulse_pairs  {}", sig.pulse_count())?;
    writeln!(out, "energy_A2s   {:.6e}", energy.a2s())?;
    writeln!(out, "closed_form  {:.6e}", closed_form_energy(&spec)?.a2s())?;
    writeln!(out, "net_charge_As {:.3e}", sig.net_charge_as())?;
    Ok(())
}

pub fn profiles(args: &ProfilesArgs, out: &mut dyn Write) -> CliResult<()> {
    let set = standard_profiles();
    with_output(args.out.as_deref(), out, |w| write_profiles_csv(&set, w))
}

pub fn predict(args: &PredictArgs, out: &mut dyn Write) -> CliResult<()> {
    if args.references.len() != args.levels.len() {
        return Err(CliError::Usage(format!(
            "{} --ref but {} --level; give one level per reference",
            args.references.len(),
            args.levels.len()
        )));
    }
    let ladder = AmplitudeLadder::standard();
    let set = standard_profiles();
    let points = args
        .references
        .iter()
        .zip(&args.levels)
        .map(|(&c, l)| {
            let profile = set.get(c).expect("all categories profiled");
            Ok(CalibrationPoint::from_profile(profile, l.resolve(&ladder)?)?)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let policy = args.policy.policy(args.references[0]);
    let mode = args.policy.prediction_mode(&ladder)?;
    let preds = predict_all(&points, &set, &policy, mode)?;
    with_output(args.out.as_deref(), out, |w| write_predictions_csv(&preds, &set, w))
}

pub fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> CliResult<()> {
    if !(args.noise.is_finite() && args.noise >= 0.0) {
        return Err(CliError::Validation(format!("noise must be finite and >= 0, got {}", args.noise)));
    }
    let ladder = AmplitudeLadder::standard();
    let set = standard_profiles();
    let cohort = simulate_cohort(args.n as usize, args.noise, args.seed, &set, &RatingModel::default());
    let policy = args.policy.policy(SYNTHETIC_REFERENCE);
    let matrix = score_matrix(&cohort, &set, &policy, args.policy.prediction_mode(&ladder)?);

    fs::create_dir_all(&args.out_dir)?;
    let create = |name: &str| -> CliResult<BufWriter<File>> { Ok(BufWriter::new(File::create(args.out_dir.join(name))?)) };
    let mut w = create("cohort.ndjson")?;
    write_cohort(&cohort, &mut w)?;
    w.flush()?;
    write_participant_csv(&matrix, create("r2_by_participant.csv")?)?;
    write_category_csv(&matrix, create("r2_by_category.csv")?)?;

    let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.3}"));
    writeln!(out, "participants        {}", cohort.len())?;
    writeln!(out, "skipped             {}", matrix.skipped.len())?;
    writeln!(out, "participant_avg_r2  {}", fmt(matrix.participant_average))?;
    writeln!(out, "category_avg_r2     {}", fmt(matrix.category_average))?;
    writeln!(out, "wrote               {}", args.out_dir.display())?;
    Ok(())
}

pub fn summarize(args: &SummarizeArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let cohort = match &args.cohort {
        Some(p) => read_cohort(BufReader::new(File::open(p)?))?,
        None => reference_cohort(),
    };
    let summary = summarize_naturalness(&cohort)?;
    let report = improvement_report(&summary)?;
    if let Some(p) = &args.stats {
        write_stats_csv(&summary, BufWriter::new(File::create(p)?))?;
    }
    with_output(args.out.as_deref(), out, |w| write_summary_csv(&summary, w))?;
    // the report goes to stderr when the table occupies stdout
    let sink: &mut dyn Write = if args.out.is_some() { out } else { err };
    writeln!(sink, "best {} vs worst {}: {:.1}%", report.best, report.worst, report.best_vs_worst_percent)?;
    for d in &report.modulated_vs_tonic {
        writeln!(sink, "{} vs {}: {:+.1}%", d.category, d.baseline, d.percent)?;
    }
    Ok(())
}

pub fn frame(args: &FrameArgs, out: &mut dyn Write) -> CliResult<()> {
    let cmd = match args.op {
        FrameOp::Ping => Command::Ping,
        FrameOp::Stop => Command::Stop,
        FrameOp::SetChannels => Command::SetChannels(args.channels.0),
        FrameOp::Stimulate => {
            let lut = load_lut(args.lut.as_deref())?;
            let amp = args.pattern.amplitude(&AmplitudeLadder::standard())?;
            let spec = PatternSpec::new(args.pattern.category, amp);
            Command::Stimulate(StimCommand::from_pattern(&spec, &lut, args.channels.0)?)
        }
    };
    writeln!(out, "{}", to_hex(&encode(&cmd)?))?;
    Ok(())
}

pub fn replay_frames(args: &ReplayArgs, out: &mut dyn Write) -> CliResult<()> {
    let lut = load_lut(args.lut.as_deref())?;
    let mut dev = VirtualDevice::new(lut, args.sample_rate);
    let steps = replay(&mut dev, BufReader::new(File::open(&args.frames)?))?;
    writeln!(out, "line,opcode,channels,pulses,energy_A2s,net_charge_As,stopped_at_s,error")?;
    let mut failures = 0;
    for s in &steps {
        let op = s.opcode.map(|o| format!("{o:?}")).unwrap_or_default();
        let stopped = s.stopped_early.map(|t| format!("{t:.6}")).unwrap_or_default();
        let error = s.error.clone().unwrap_or_default();
        failures += usize::from(s.error.is_some());
        writeln!(
            out,
            "{},{op},{:#010x},{},{:e},{:e},{stopped},\"{}\"",
            s.line,
            s.channels.pack(),
            s.pulses,
            s.energy_a2s,
            s.net_charge_as,
            error.replace('"', "'"),
        )?;
    }
    if failures > 0 {
        return Err(CliError::Validation(format!("{failures} of {} frames rejected", steps.len())));
    }
    Ok(())
}

pub fn dac_check(args: &DacCheckArgs, out: &mut dyn Write) -> CliResult<()> {
    let lut = load_lut(args.lut.as_deref())?;
    writeln!(out, "level_index,requested_mA,code,output_mA,error_mA")?;
    let mut worst = 0.0f64;
    for (j, &a) in AmplitudeLadder::standard().levels().iter().enumerate() {
        let r = can_realize(a, &lut)?;
        worst = worst.max(r.error_ma.abs());
        writeln!(out, "{j},{a:.1},{},{:.6},{:+.6}", r.code, r.output_ma, r.error_ma)?;
    }
    if worst > args.tolerance_ma {
        return Err(CliError::Validation(format!(
            "worst error {worst:.4} mA exceeds tolerance {} mA",
            args.tolerance_ma
        )));
    }
    Ok(())
}
