//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stimkit_core::calibrate::{
    predict_all, predict_by_matched_level, predict_by_mean, score_matrix, CalibrationPoint, GroupingPolicy,
    PredictionMode,
};
use stimkit_core::device::{
    can_realize, decode, encode, execute, ChannelConfig, ChannelState, Command, DacLut, NoStop, StimCommand, StopAt,
    WaveformMode,
};
use stimkit_core::energy::{closed_form_energy, signal_energy, ProfileSet};
use stimkit_core::signalgen::{synthesize, AmplitudeLadder, PatternSpec};
use stimkit_core::study::fixtures::{reference_cohort, REFERENCE_MEANS};
use stimkit_core::study::{
    improvement_report, simulate_cohort, summarize_naturalness, CalibrationAction, RatingModel, SessionRecord,
};
use stimkit_core::{Category, LevelIndex};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

thread_local! {
    /// Largest |Q| seen by the 1 MHz energy sweep, reused by the charge check.
    static SYNTH_CHARGE: std::cell::Cell<Option<f64>> = const { std::cell::Cell::new(None) };
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ladder() -> Vec<f64> {
    AmplitudeLadder::<f64>::standard().levels().to_vec()
}

fn profiles() -> ProfileSet<f64> {
    ProfileSet::standard().unwrap()
}

fn energy_oracle() -> Outcome {
    let start = Instant::now();
    let amps = ladder();
    let per_category: Vec<Result<(f64, f64), String>> = std::thread::scope(|s| {
        let handles: Vec<_> = Category::ALL
            .into_iter()
            .map(|c| {
                let amps = &amps;
                s.spawn(move || {
                    let mut worst = 0.0f64;
                    let mut worst_charge = 0.0f64;
                    for &a in amps {
                        let spec = PatternSpec::new(c, a);
                        let sig = synthesize(&spec, 1_000_000).map_err(|e| e.to_string())?;
                        let numeric = signal_energy(&sig).a2s();
                        let closed = closed_form_energy(&spec).map_err(|e| e.to_string())?.a2s();
                        worst = worst.max((numeric - closed).abs() / closed);
                        worst_charge = worst_charge.max(sig.net_charge_as().abs());
                        if !c.amplitude_modulated() {
                            // every pulse carries a² · 600 µs
                            let hand = sig.pulse_count() as f64 * a * a * 600e-6 * 1e-6;
                            worst = worst.max((closed - hand).abs() / hand);
                        }
                    }
                    Ok((worst, worst_charge))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut worst = 0.0f64;
    let mut charge = 0.0f64;
    for r in per_category {
        let (e, q) = r?;
        worst = worst.max(e);
        charge = charge.max(q);
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-3, || format!("worst relative error {worst:e}"))?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    SYNTH_CHARGE.with(|c| c.set(Some(charge)));
    Ok(format!("208 signals, worst rel. error {worst:.1e}, {:.1} s", elapsed.as_secs_f64()))
}

fn analytic_ratios() -> Outcome {
    let set = profiles();
    let mean = |c| set.get(c).unwrap().mean.a2s();
    let r1 = mean(Category::Tonic100) / mean(Category::Tonic20);
    let r2 = mean(Category::Freq20_100) / mean(Category::Tonic100);
    ensure((r1 - 5.0).abs() <= 1e-9, || format!("tonic ratio {r1}"))?;
    ensure((r2 - 244.0 / 300.0).abs() <= 1e-9, || format!("freq ratio {r2}"))?;
    for (c, n) in [(Category::Tonic100, 300), (Category::Freq20_100, 244), (Category::Freq40_170, 419)] {
        let got = synthesize(&PatternSpec::new(c, 1.0), 1_000_000).unwrap().pulse_count();
        ensure(got == n, || format!("{c}: {got} pulses, expected {n}"))?;
    }
    Ok(format!("ratios {r1:.12} and {r2:.12}; pulses 300/244/419"))
}

fn charge_balance() -> Outcome {
    let mut worst = match SYNTH_CHARGE.with(|c| c.get()) {
        Some(q) => q,
        None => {
            let mut q = 0.0f64;
            for c in Category::ALL {
                for &a in &ladder() {
                    q = q.max(synthesize(&PatternSpec::new(c, a), 1_000_000).unwrap().net_charge_as().abs());
                }
            }
            q
        }
    };
    let lut = DacLut::default();
    let channels = ChannelConfig::experiment_default();
    let mut runs = 0;
    for c in Category::ALL {
        for (j, &a) in ladder().iter().enumerate() {
            let spec = PatternSpec::new(c, a);
            let cmd = StimCommand::from_pattern(&spec, &lut, channels).map_err(|e| e.to_string())?;
            let stop_at = 0.1 * (j as f64 % 30.0) + 0.05;
            for exec in [
                execute::<f64, _>(&cmd, &lut, 200_000, &NoStop),
                execute::<f64, _>(&cmd, &lut, 200_000, &StopAt(stop_at)),
            ] {
                let exec = exec.map_err(|e| e.to_string())?;
                worst = worst.max(exec.signal.net_charge_as().abs());
                runs += 1;
            }
        }
        // and one full-rate early stop per category
        let spec = PatternSpec::new(c, 3.0);
        let cmd = StimCommand::from_pattern(&spec, &lut, channels).map_err(|e| e.to_string())?;
        let exec = execute::<f64, _>(&cmd, &lut, 1_000_000, &StopAt(1.0)).map_err(|e| e.to_string())?;
        worst = worst.max(exec.signal.net_charge_as().abs());
        runs += 1;
    }
    ensure(worst <= 1e-9, || format!("net charge {worst:e} A·s"))?;
    Ok(format!("208 syntheses at 1 MHz + {runs} device runs, max |Q| = {worst:.1e} A·s"))
}

fn prediction_identity() -> Outcome {
    let set = profiles();
    for c in Category::ALL {
        let prof = set.get(c).unwrap();
        for j in 0..26 {
            let p = CalibrationPoint::from_profile(prof, LevelIndex(j)).unwrap();
            let m = predict_by_mean(&p, prof, prof).unwrap();
            let x = predict_by_matched_level(&p, prof, prof, None).unwrap();
            ensure(m.predicted_level == LevelIndex(j) && x.predicted_level == LevelIndex(j), || {
                format!("{c} level {j} self-predicts {:?}/{:?}", m.predicted_level, x.predicted_level)
            })?;
        }
    }
    let proportional: Vec<Category> = Category::ALL.into_iter().filter(|c| !c.amplitude_modulated()).collect();
    let mut worst = 0.0f64;
    let mut pairs = 0;
    for &r in &proportional {
        for &t in &proportional {
            if r == t {
                continue;
            }
            pairs += 1;
            for j in 0..26 {
                let p = CalibrationPoint::from_profile(set.get(r).unwrap(), LevelIndex(j)).unwrap();
                let a = predict_by_mean(&p, set.get(t).unwrap(), set.get(r).unwrap()).unwrap();
                let b = predict_by_matched_level(&p, set.get(t).unwrap(), set.get(r).unwrap(), None).unwrap();
                let (ea, eb) = (a.predicted_energy.a2s(), b.predicted_energy.a2s());
                worst = worst.max((ea - eb).abs() / ea);
            }
        }
    }
    ensure(worst <= 1e-12, || format!("mean vs matched differ by {worst:e}"))?;
    Ok(format!("self-prediction exact; {pairs} pairs agree within {worst:.1e}"))
}

fn zero_noise_recovery() -> Outcome {
    let start = Instant::now();
    let set = profiles();
    let cohort = simulate_cohort(13, 0.0, 7, &set, &RatingModel::default());
    let m = score_matrix(&cohort, &set, &GroupingPolicy::single_reference(Category::Tonic100), PredictionMode::Mean);
    ensure(m.skipped.is_empty(), || format!("skipped {:?}", m.skipped))?;
    let mut lowest = f64::INFINITY;
    for (id, s) in &m.per_participant {
        let v = s.value().ok_or_else(|| format!("{id}: undefined R²"))?;
        lowest = lowest.min(v);
        ensure(v >= 99.0, || format!("{id}: R² {v:.3}%"))?;
    }
    for r in &cohort {
        for (c, p) in &m.predictions[&r.participant_id] {
            ensure(p.predicted_level == r.calibration[c], || {
                format!("{} {c}: predicted {:?}, selected {:?}", r.participant_id, p.predicted_level, r.calibration[c])
            })?;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("13 participants, min R² {lowest:.2}%, all levels recovered, {:.2} s", elapsed.as_secs_f64()))
}

fn noise_monotonicity() -> Outcome {
    let set = profiles();
    let policy = GroupingPolicy::single_reference(Category::Tonic100);
    let averages: Vec<f64> = [0.0, 0.05, 0.1, 0.2]
        .into_iter()
        .map(|sigma| {
            let total: f64 = (0..20u64)
                .map(|draw| {
                    let cohort = simulate_cohort(13, sigma, 1000 + draw, &set, &RatingModel::default());
                    score_matrix(&cohort, &set, &policy, PredictionMode::Mean).participant_average.unwrap_or(f64::NAN)
                })
                .sum();
            total / 20.0
        })
        .collect();
    let strictly = averages.windows(2).all(|w| w[0] > w[1]);
    let shown = averages.iter().map(|a| format!("{a:.2}")).collect::<Vec<_>>().join(" > ");
    ensure(strictly, || format!("averages not strictly decreasing: {averages:?}"))?;
    Ok(format!("mean R² {shown} %"))
}

fn band_non_interference() -> Outcome {
    let set = profiles();
    let cohort = simulate_cohort(20, 0.1, 99, &set, &RatingModel::default());
    let mut compared = 0;
    for mode in [PredictionMode::Mean, PredictionMode::Matched(None)] {
        for r in &cohort {
            let refs: Vec<_> = [Category::Tonic100, Category::Tonic20]
                .into_iter()
                .map(|c| CalibrationPoint::from_profile(set.get(c).unwrap(), r.calibration[&c]).unwrap())
                .collect();
            let single = predict_all(&refs, &set, &GroupingPolicy::single_reference(Category::Tonic100), mode)
                .map_err(|e| e.to_string())?;
            let bands = predict_all(&refs, &set, &GroupingPolicy::frequency_bands(), mode).map_err(|e| e.to_string())?;
            for c in Category::ALL.into_iter().filter(|c| c.frequency_range_hz().1 >= 100) {
                let (s, b) = (&single[&c], &bands[&c]);
                ensure(
                    s.predicted_energy.a2s().to_bits() == b.predicted_energy.a2s().to_bits()
                        && s.predicted_level == b.predicted_level,
                    || format!("{} {c} differs", r.participant_id),
                )?;
                compared += 1;
            }
        }
    }
    Ok(format!("{compared} high-band predictions bit-identical"))
}

fn calibration_effort() -> Outcome {
    let set = profiles();
    let mut session = SessionRecord::new("transcript", 2024);
    for _ in 0..9 {
        session.calibration_step(Category::Tonic100, CalibrationAction::Up).map_err(|e| e.to_string())?;
    }
    session.calibration_step(Category::Tonic100, CalibrationAction::Accept).map_err(|e| e.to_string())?;
    let reference = CalibrationPoint::from_profile(set.get(Category::Tonic100).unwrap(), session.calibration[&Category::Tonic100])
        .map_err(|e| e.to_string())?;
    let preds = predict_all(&[reference], &set, &GroupingPolicy::single_reference(Category::Tonic100), PredictionMode::Mean)
        .map_err(|e| e.to_string())?;
    let levels: BTreeMap<Category, LevelIndex> = preds.iter().map(|(c, p)| (*c, p.predicted_level)).collect();
    session.accept_predictions(&levels).map_err(|e| e.to_string())?;
    session.validate().map_err(|e| e.to_string())?;
    let n = session.interactive_calibrations();
    let pct = session.calibration_reduction_percent();
    ensure(n == 1 && pct == 87.5, || format!("{n} interactive, {pct}%"))?;
    Ok(format!("{n} of 8 categories calibrated interactively, reduction {pct}%"))
}

fn report_formulas() -> Outcome {
    let summary = summarize_naturalness(&reference_cohort()).map_err(|e| e.to_string())?;
    let rep = improvement_report(&summary).map_err(|e| e.to_string())?;
    let mean = |c: Category| REFERENCE_MEANS.iter().find(|(k, _)| *k == c).unwrap().1;
    let checks = [
        ("best vs worst", rep.best_vs_worst_percent, (mean(Category::Freq40_170) - mean(Category::Tonic20)) / 5.0 * 100.0, "6.8"),
        ("amp100 vs tonic100", rep.delta(Category::Amp100).unwrap_or(f64::NAN), (mean(Category::Amp100) - mean(Category::Tonic100)) / 5.0 * 100.0, "2.6"),
        ("amp20 vs tonic20", rep.delta(Category::Amp20).unwrap_or(f64::NAN), (mean(Category::Amp20) - mean(Category::Tonic20)) / 5.0 * 100.0, "5.8"),
    ];
    for (what, got, oracle, shown) in checks {
        ensure((got - oracle).abs() <= 1e-9 && format!("{got:.1}") == shown, || {
            format!("{what}: {got} (oracle {oracle}, expected {shown})")
        })?;
    }
    let expected: Vec<Category> = REFERENCE_MEANS.iter().map(|(c, _)| *c).collect();
    ensure(summary.ranking() == expected, || format!("ranking {:?}", summary.ranking()))?;
    Ok("6.8% / 2.6% / 5.8%, ranking matches".into())
}

fn random_command(rng: &mut ChaCha8Rng) -> Command {
    let channels = ChannelConfig(std::array::from_fn(|_| ChannelState::from_bits(rng.random_range(0..4))));
    match rng.random_range(0..8) {
        0 => Command::Ping,
        1 => Command::Stop,
        2 | 3 => Command::SetChannels(channels),
        _ => {
            let (f0, f1) = (rng.random_range(1..=50_000u16), rng.random_range(1..=50_000u16));
            let (a0, a1) = (rng.random_range(1..=255u16), rng.random_range(1..=255u16));
            let (up, hold, down) = (rng.random_range(0..20_000u16), rng.random_range(1..20_000u16), rng.random_range(0..20_000u16));
            Command::Stimulate(StimCommand {
                mode: [WaveformMode::Biphasic, WaveformMode::BiphasicNegativeFirst, WaveformMode::Monophasic][rng.random_range(0..3)],
                freq_start_hz: f0.min(f1),
                freq_end_hz: f0.max(f1),
                ramp_up_ms: up,
                hold_ms: hold,
                ramp_down_ms: down,
                positive_width_us: rng.random_range(5..=1000),
                negative_width_us: rng.random_range(5..=1000),
                amp_start_code: a0.min(a1),
                amp_end_code: a0.max(a1),
                channels,
                duration_ms: up + hold + down,
            })
        }
    }
}

fn codec() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0DEC);
    for i in 0..1000 {
        let cmd = random_command(&mut rng);
        let frame = encode(&cmd).map_err(|e| format!("command {i}: {e}"))?;
        let back = decode(&frame).map_err(|e| format!("command {i}: {e}"))?;
        ensure(back == cmd, || format!("command {i} did not round-trip"))?;
    }
    let mut accepted = 0;
    let mut out_of_range = 0;
    let fuzz = std::panic::catch_unwind(move || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xF022);
        for i in 0..100_000 {
            let mut frame: Vec<u8> = if i % 2 == 0 {
                (0..rng.random_range(0..40)).map(|_| rng.random()).collect()
            } else {
                // well-formed header with a valid checksum over random content
                let mut f = encode(&random_command(&mut rng)).unwrap().to_vec();
                let k = rng.random_range(3..29);
                f[k] = rng.random();
                f
            };
            if i % 2 == 1 {
                let crc = stimkit_core::device::codec::crc16(&frame[..29]);
                frame[29..].copy_from_slice(&crc.to_le_bytes());
            }
            if let Ok(cmd) = decode(&frame) {
                accepted += 1;
                if let Command::Stimulate(s) = cmd {
                    if s.validate().is_err() {
                        out_of_range += 1;
                    }
                }
            }
        }
        (accepted, out_of_range)
    });
    let (accepted, out_of_range) = fuzz.map_err(|_| "decoder panicked".to_string())?;
    ensure(out_of_range == 0, || format!("{out_of_range} out-of-range commands decoded"))?;
    Ok(format!("1000 round trips; 100000 fuzz frames, {accepted} accepted, 0 panics, 0 out of range"))
}

fn dac_realizability() -> Outcome {
    let lut = DacLut::default();
    let mut worst = 0.0f64;
    for a in ladder() {
        let r = can_realize(a, &lut).map_err(|e| e.to_string())?;
        worst = worst.max(r.error_ma.abs());
    }
    ensure(worst <= 0.0175, || format!("worst error {worst} mA"))?;
    Ok(format!("26 levels, worst error {worst:.4} mA"))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("energy oracle equivalence", energy_oracle),
        ("analytic ratios and pulse counts", analytic_ratios),
        ("charge balance", charge_balance),
        ("prediction identity and agreement", prediction_identity),
        ("zero-noise oracle recovery", zero_noise_recovery),
        ("noise monotonicity", noise_monotonicity),
        ("frequency-grouping non-interference", band_non_interference),
        ("calibration-effort reduction", calibration_effort),
        ("report formulas on naturalness fixture", report_formulas),
        ("codec round trip and fuzz", codec),
        ("DAC realizability", dac_realizability),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
