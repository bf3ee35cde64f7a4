// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed or ran over its time budget.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::RngExt;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use qctl_core::ensemble::{deskew, orchestrate, skew_calibration, worst_misalignment_ps, EnsembleOptions, Role, UnitConfig};
use qctl_core::exec::{run_until_halt, ConstantStimulus, Controller, ControllerConfig, ExecutionTrace, TraceHasher};
use qctl_core::experiments::{
    allxy, calibrate, default_chevron_axes, hahn_echo, qmc_point, rabi_chevron, ramsey, single_channel, ExperimentSetup, Gate, Mode,
    ShotRunner,
};
use qctl_core::isa::{
    assemble, decode, disassemble, encode, read_program, write_program, Instruction, Opcode, Program, NUM_CHANNELS,
};
use qctl_core::measure::{process_rdo, MeasurementUnit, MuTrigger, ReadoutMode, ReadoutParams};
use qctl_core::qubit::QubitParams;
use qctl_core::spectrum::phase_regression_frequency;
use qctl_core::synth::{dequantize, ChannelDspConfig, DspConfig, Iq, SsbModulator};

const FS: f64 = 1e9;
const TWO_32: f64 = 4294967296.0;

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn golden(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Bit packing of the word layout, written out field by field.
fn oracle_word(op: u64, ch: u64, cond: Option<(u64, u64)>, active: bool, slot_or_env: u64, payload: u64) -> u64 {
    let (en, level, bit) = match cond {
        Some((bit, level)) => (1, level, bit),
        None => (0, 0, 0),
    };
    op | ch << 3 | en << 8 | level << 9 | bit << 10 | (active as u64) << 14 | slot_or_env << 15 | payload << 23
}

fn isa_round_trip() -> Outcome {
    let mut rng = common::rng(0x15a);
    let corpus: Vec<Instruction> = (0..100_000).map(|_| common::any_instruction(&mut rng)).collect();
    for (k, i) in corpus.iter().enumerate() {
        let w = encode(i).map_err(|e| format!("instruction {k} {i:?}: {e}"))?;
        let back = decode(w).map_err(|e| format!("word {k} {w:#x}: {e}"))?;
        check(back == *i, || format!("instruction {k}: {i:?} decoded as {back:?}"))?;
    }
    let program = Program::from_instructions(corpus.iter().copied()).map_err(|e| e.to_string())?;
    let text = disassemble(&program);
    let reassembled = assemble(&text).map_err(|e| e.to_string())?;
    check(reassembled == program, || "assemble(disassemble(p)) differs from p".into())?;
    check(disassemble(&reassembled) == text, || "disassembly is not a fixed point".into())?;
    let mut image = Vec::new();
    write_program(&program, &mut image).map_err(|e| e.to_string())?;
    let loaded = read_program(&image[..]).map_err(|e| e.to_string())?;
    check(loaded == program, || "program image round trip differs".into())?;

    let source = std::fs::read_to_string(golden("program.qasm")).map_err(|e| e.to_string())?;
    let frozen = std::fs::read(golden("program.qcp")).map_err(|e| e.to_string())?;
    let g = assemble(&source).map_err(|e| e.to_string())?;
    let mut fresh = Vec::new();
    write_program(&g, &mut fresh).map_err(|e| e.to_string())?;
    check(fresh == frozen, || "golden image changed".into())?;
    check(read_program(&frozen[..]).map_err(|e| e.to_string())? == g, || "golden image decodes to a different program".into())?;
    let word = |n: usize| u64::from_le_bytes(frozen[40 + 8 * n..48 + 8 * n].try_into().unwrap());
    let sta = oracle_word(0, 0, None, true, 0, 16384 | 20 << 16);
    let stap_cond = oracle_word(3, 0, Some((0, 1)), true, 0, 16384 | 20 << 32);
    let long_sta = oracle_word(0, 3, None, true, 0, 32767 | ((3 << 19) | 1 << 21) << 16);
    let wait_max = oracle_word(4, 21, None, true, 0, u32::MAX as u64);
    for (n, expect) in [(1, sta), (6, stap_cond), (8, long_sta), (9, wait_max)] {
        check(word(n) == expect, || format!("golden word {n} is {:#018x}, layout gives {expect:#018x}", word(n)))?;
    }
    Ok(format!("{} instructions, {} words in image, golden stable", corpus.len(), program.instruction_count()))
}

/// Back-to-back active pulses of every kind on all 22 channels.
fn gapless_program(seed: u64) -> (Program, Vec<u64>) {
    let mut rng = common::rng(seed);
    let mut p = Program::new();
    let mut pulse_cycles = Vec::new();
    for ch in 0..NUM_CHANNELS as u8 {
        let mut seq = vec![Instruction::stf(ch, rng.random_range(1..1u32 << 31), 1)];
        let mut total = 0u64;
        for _ in 0..40 {
            let d = rng.random_range(1..=40u32);
            let amp = rng.random_range(8192..30000i16) * if rng.random_bool(0.5) { 1 } else { -1 };
            let i = match rng.random_range(0..5) {
                0 => Instruction::sta(ch, amp, d),
                1 => Instruction::stp(ch, rng.random(), d),
                2 => Instruction::stap(ch, amp, rng.random(), d),
                3 => Instruction::stf(ch, rng.random_range(1..1u32 << 31), d),
                _ => Instruction::wait(ch, d),
            };
            total += d as u64;
            seq.push(i.on());
        }
        if seq[1].opcode != Opcode::Sta && seq[1].opcode != Opcode::Stap {
            seq.insert(1, Instruction::sta(ch, 12000, 3).on());
            total += 3;
        }
        seq.push(Instruction::wait(ch, 4));
        pulse_cycles.push(total);
        p.set_channel(ch, seq).unwrap();
    }
    (p, pulse_cycles)
}

fn timing_determinism() -> Outcome {
    let o = common::ExecOptions {
        cycles: 1_000_000,
        conditionals: true,
        sync: true,
        readout: true,
        max_duration: 2000,
    };
    let program = common::exec_program(0xde7, &o);
    let cfg = common::exec_config();
    let run = || -> Result<([u8; 32], u64), String> {
        let mut ctrl = Controller::load(&program, &cfg).map_err(|e| e.to_string())?;
        let mut mu = MeasurementUnit::new(cfg.readout_table.clone(), 0);
        let mut src = ConstantStimulus {
            levels: common::READOUT_LEVELS.to_vec(),
        };
        let mut h = TraceHasher::default();
        let s = run_until_halt(&mut ctrl, &mut mu, &mut src, &mut h, None).map_err(|e| e.to_string())?;
        check(h.frames() == s.cycles, || "hasher missed frames".into())?;
        Ok((h.finish(), s.cycles))
    };
    let (h1, c1) = run()?;
    let (h2, c2) = run()?;
    check(c1 >= 1_000_000, || format!("only {c1} cycles"))?;
    check(h1 == h2 && c1 == c2, || "trace hashes differ between runs".into())?;

    let (p, pulse_cycles) = gapless_program(0x9a9);
    let mut ctrl = Controller::load(&p, &ControllerConfig::default()).map_err(|e| e.to_string())?;
    let mut trace = ExecutionTrace::default();
    run_until_halt(&mut ctrl, &mut MeasurementUnit::new(vec![], 0), &mut ConstantStimulus::default(), &mut trace, None)
        .map_err(|e| e.to_string())?;
    for ch in 0..NUM_CHANNELS as u8 {
        let s = trace.channel_samples(ch);
        let lit: Vec<usize> = (0..s.len()).filter(|&k| s[k] != (0, 0)).collect();
        let want = 5 * pulse_cycles[ch as usize] as usize;
        check(lit.len() == want, || format!("channel {ch}: {} lit samples, pulses span {want}", lit.len()))?;
        check(lit[0] == 5 && lit[want - 1] == 5 + want - 1, || format!("channel {ch}: a gap inside back-to-back pulses"))?;
    }
    Ok(format!("{c1} cycles, hash {:02x}{:02x}{:02x}{:02x}.. twice; 22 channels gapless", h1[0], h1[1], h1[2], h1[3]))
}

/// Tone at `ftw` on channel 0, `n` samples after the tuning cycle.
fn tone(ftw: u32, n: usize) -> Result<Vec<Complex64>, String> {
    let cycles = (n / 5 + 1) as u32;
    let p = Program::from_instructions([Instruction::stf(0, ftw, 1), Instruction::sta(0, 16384, cycles).on()]).map_err(|e| e.to_string())?;
    let mut ctrl = Controller::load(&p, &ControllerConfig::default()).map_err(|e| e.to_string())?;
    let mut trace = ExecutionTrace::default();
    run_until_halt(&mut ctrl, &mut MeasurementUnit::new(vec![], 0), &mut ConstantStimulus::default(), &mut trace, None)
        .map_err(|e| e.to_string())?;
    Ok(trace.channel_samples(0)[5..5 + n].iter().map(|&(i, q)| Complex64::new(dequantize(i), dequantize(q))).collect())
}

fn nco_fidelity() -> Outcome {
    const N: usize = 1 << 20;
    let freqs: [f64; 13] = [
        1.234567e6, 7.77e6, 31.4159e6, 62.5000003e6, 99.999e6, 123.456789e6, 187.5e6, 250.000123e6, 333.333333e6, 411.1e6,
        499.0e6, -45.678e6, -271.828e6,
    ];
    let fft = FftPlanner::new().plan_fft_forward(N);
    let bin_hz = FS / N as f64;
    let mut worst = 0.0f64;
    for &f in &freqs {
        let ftw = (f.rem_euclid(FS) / FS * TWO_32).round() as u32;
        let mut x = tone(ftw, N)?;
        fft.process(&mut x);
        let peak = (0..N).max_by(|&a, &b| x[a].norm_sqr().total_cmp(&x[b].norm_sqr())).unwrap();
        let expect = f.rem_euclid(FS) / bin_hz;
        let d = (peak as f64 - expect).abs();
        let d = d.min(N as f64 - d);
        worst = worst.max(d);
        check(d <= 1.0, || format!("{f} Hz: peak bin {peak}, expected {expect:.2}"))?;
    }
    let resolution = FS / TWO_32;
    let k = (100e6 / FS * TWO_32).round() as u32;
    let fa = phase_regression_frequency(&tone(k, N)?);
    let fb = phase_regression_frequency(&tone(k + 1, N)?);
    for (ftw, f) in [(k, fa), (k + 1, fb)] {
        let exact = ftw as f64 * FS / TWO_32;
        check((f - exact).abs() < 1e-3, || format!("ftw {ftw}: measured {f} Hz, exact {exact} Hz"))?;
    }
    let step = fb - fa;
    check((step - resolution).abs() < 0.01 * resolution, || format!("adjacent ftw step {step} Hz, resolution {resolution} Hz"))?;
    Ok(format!("13 tones within {worst:.3} bin; adjacent-ftw step {step:.6} Hz (fs/2^32 = {resolution:.6} Hz)"))
}

/// Image-to-tone power ratio of the uncorrected modulator, derived by
/// splitting `cos t + i g sin(t + phi)` into its two rotating terms.
fn analytic_image_dbc(g: f64, phi: f64) -> f64 {
    10.0 * ((1.0 + g * g - 2.0 * g * phi.cos()) / (1.0 + g * g + 2.0 * g * phi.cos())).log10()
}

/// Independent FFT of the modulator output with `qmc` loaded.
fn image_dbc(modulator: &SsbModulator, qmc: qctl_core::synth::QmcParams) -> Result<f64, String> {
    const N: usize = 1 << 16;
    const K: u32 = 3277;
    let mut dsp = DspConfig::default();
    dsp.set(
        0,
        ChannelDspConfig {
            qmc,
            ..Default::default()
        },
    );
    let cfg = ControllerConfig {
        dsp,
        ..Default::default()
    };
    let p = Program::from_instructions([Instruction::stf(0, K << 16, 1), Instruction::sta(0, 16384, (N / 5 + 1) as u32).on()])
        .map_err(|e| e.to_string())?;
    let mut ctrl = Controller::load(&p, &cfg).map_err(|e| e.to_string())?;
    let mut trace = ExecutionTrace::default();
    run_until_halt(&mut ctrl, &mut MeasurementUnit::new(vec![], 0), &mut ConstantStimulus::default(), &mut trace, None)
        .map_err(|e| e.to_string())?;
    let mut x: Vec<Complex64> = trace.channel_samples(0)[5..5 + N]
        .iter()
        .map(|&(i, q)| modulator.apply(Iq::new(dequantize(i), dequantize(q))))
        .collect();
    FftPlanner::new().plan_fft_forward(N).process(&mut x);
    Ok(10.0 * (x[N - K as usize].norm_sqr() / x[K as usize].norm_sqr()).log10())
}

fn qmc_suppression() -> Outcome {
    let (g, skew) = (1.05, 3.0f64);
    let r = qmc_point(g, skew).map_err(|e| e.to_string())?;
    let m = SsbModulator::new(g, skew.to_radians());
    let before = image_dbc(&m, qctl_core::synth::QmcParams::IDENTITY)?;
    let after = image_dbc(&m, m.correction())?;
    let analytic = analytic_image_dbc(g, skew.to_radians());
    check((before - analytic).abs() < 0.1, || format!("uncorrected image {before:.2} dBc, analytic {analytic:.2} dBc"))?;
    check(r.suppression_db >= 60.0, || format!("suppression {:.1} dB", r.suppression_db))?;
    check(before - after >= 60.0, || format!("independent FFT: suppression {:.1} dB", before - after))?;
    Ok(format!(
        "image {:.1} -> {:.1} dBc, suppression {:.1} dB (independent FFT {:.1} dB, analytic uncorrected {analytic:.2} dBc)",
        r.image_dbc_uncorrected,
        r.image_dbc_corrected,
        r.suppression_db,
        before - after
    ))
}

fn noiseless_setup() -> ExperimentSetup {
    ExperimentSetup {
        qubit: QubitParams::default().noiseless(),
        ..Default::default()
    }
}

fn chevron() -> Outcome {
    let setup = noiseless_setup();
    let (det, dur) = default_chevron_axes();
    check(det.len() == 21 && dur.len() == 21, || "grid is not 21 x 21".into())?;
    let r = rabi_chevron(&setup, 0.5, &det, &dur, Mode::Ideal).map_err(|e| e.to_string())?;
    let f_q = setup.qubit.f_qubit_hz;
    let omega = setup.qubit.rabi_rate_per_unit_amplitude_hz * 0.5;
    let mut worst = 0.0f64;
    for (a, d) in det.iter().enumerate() {
        let ftw = ((f_q + d) / FS * TWO_32).round();
        let delta = ftw * FS / TWO_32 - f_q;
        let w = (omega * omega + delta * delta).sqrt();
        for (b, &c) in dur.iter().enumerate() {
            let t = c as f64 * 5e-9;
            let expect = (omega / w).powi(2) * (PI * w * t).sin().powi(2);
            worst = worst.max((r.p1[a][b] - expect).abs());
        }
    }
    check(worst <= 1e-6, || format!("max deviation {worst:e}"))?;
    Ok(format!("441 points, max |sim - closed form| = {worst:.2e}"))
}

fn coherence() -> Outcome {
    let cal = calibrate(&noiseless_setup()).map_err(|e| e.to_string())?;
    let setup = ExperimentSetup {
        qubit: QubitParams {
            readout_visibility: 1.0,
            ..QubitParams::default()
        },
        shots: 10_000,
        seed: 11,
        ..Default::default()
    };
    let delays: Vec<u32> = (0..=60).map(|k| 10 * k).collect();
    let r = ramsey(&setup, &cal, &delays, Mode::MonteCarlo).map_err(|e| e.to_string())?;
    let t2s = r.fit.as_ref().map_err(|e| e.to_string())?.params[2];
    let taus: Vec<u32> = (0..=30).map(|k| 1000 * k).collect();
    let e = hahn_echo(&setup, &cal, &taus, Mode::MonteCarlo).map_err(|e| e.to_string())?;
    let t2e = e.fit.as_ref().map_err(|e| e.to_string())?.params[2];
    let (rs, re) = (t2s / 1.2e-6 - 1.0, t2e / 115e-6 - 1.0);
    let detail = format!("T2* = {:.4} us ({:+.1}%), T2 echo = {:.1} us ({:+.1}%)", t2s * 1e6, 100.0 * rs, t2e * 1e6, 100.0 * re);
    check(rs.abs() <= 0.05 && re.abs() <= 0.10, || detail.clone())?;
    Ok(detail)
}

fn allxy_staircase() -> Outcome {
    let setup = noiseless_setup();
    let cal = calibrate(&setup).map_err(|e| e.to_string())?;
    let r = allxy(&setup, &cal, Mode::Ideal).map_err(|e| e.to_string())?;
    check(r.points.len() == 21, || format!("{} pairs", r.points.len()))?;
    let mut worst = 0.0f64;
    for p in &r.points {
        check([0.0, 0.5, 1.0].contains(&p.ideal), || format!("{}: ideal {}", p.pair, p.ideal))?;
        worst = worst.max((p.measured - p.ideal).abs());
    }
    let steps: Vec<f64> = r.points.iter().map(|p| p.ideal).collect();
    check(steps.windows(2).all(|w| w[0] <= w[1]), || "ideal values are not a staircase".into())?;
    check(worst <= 1e-6, || format!("max deviation {worst:e}"))?;
    Ok(format!("21 pairs, max |measured - ideal| = {worst:.2e}"))
}

fn readout_equivalence() -> Outcome {
    const SHOTS: u64 = 10_000;
    let qubit = QubitParams {
        adc_noise_rms: 0.05,
        ..QubitParams::default()
    };
    let charge = ReadoutParams::charge_sensing(10, 0.25 * 50.0, 0);
    let reflect = ReadoutParams {
        mode: ReadoutMode::Reflectometry,
        threshold: 0.25 * 25.0,
        target_bit: 1,
        readout_ftw: 1 << 28,
        ..charge
    };
    let table = vec![charge, reflect];
    let cfg = ControllerConfig {
        readout_table: table.clone(),
        ..Default::default()
    };
    let cal = calibrate(&noiseless_setup()).map_err(|e| e.to_string())?;
    let ps = cal.pulses(&noiseless_setup());
    let mut seq = ps.allxy([Gate::HalfX, Gate::I]);
    seq.push(Instruction::rdo(0, 0, 10));
    seq.push(ps.allxy([Gate::HalfY, Gate::I])[1]);
    let program = single_channel(0, seq, Some((1, 10)));
    let mut runner = ShotRunner::new(cfg, qubit, 5);
    runner.capture_capacity = 2 * SHOTS as usize;
    let mut checked = 0;
    for replay in [false, true] {
        let r = runner.monte_carlo_with(&program, 0, SHOTS, replay).map_err(|e| e.to_string())?;
        check(r.capture.len() == 2 * SHOTS as usize, || format!("capture holds {} entries", r.capture.len()))?;
        let mut ones = [0u64; 2];
        for e in r.capture.entries() {
            let params = &table[e.slot as usize];
            let t = MuTrigger {
                channel: e.channel,
                slot: e.slot,
                start_cycle: e.start_cycle,
                window_cycles: params.window_cycles,
            };
            let bit = process_rdo(&t, &e.samples, params).map_err(|e| e.to_string())?.bit;
            let hw = r.outcomes[e.shot as usize].get(params.target_bit);
            check(hw == Some(bit), || format!("shot {} slot {}: hardware {hw:?}, offline {bit}", e.shot, e.slot))?;
            ones[params.target_bit as usize] += bit as u64;
            checked += 1;
        }
        check(r.stats.shots() == SHOTS, || format!("{} shots counted", r.stats.shots()))?;
        for b in 0..2u8 {
            let from_outcomes = r.outcomes.iter().filter(|o| o.get(b) == Some(true)).count() as u64;
            let (c0, c1) = r.stats.counts(b);
            check(c0 + c1 == SHOTS && c1 == from_outcomes && c1 == ones[b as usize], || {
                format!("bit {b}: counts ({c0}, {c1}), outcomes {from_outcomes}, offline {}", ones[b as usize])
            })?;
        }
    }
    Ok(format!("{checked} readouts reprocessed offline (engine and replay paths), all bits and marginals agree"))
}

fn active_reset() -> Outcome {
    const SHOTS: u64 = 10_000;
    let v = 0.3;
    let mut setup = noiseless_setup();
    setup.qubit.readout_visibility = v;
    let cal = calibrate(&noiseless_setup()).map_err(|e| e.to_string())?;
    let ps = cal.pulses(&setup);
    let runner = setup.runner();
    let mut lines = Vec::new();
    for (point, (prep, p_prep)) in [(None, 0.0), (Some(Gate::HalfX), 0.5), (Some(Gate::X), 1.0)].into_iter().enumerate() {
        // Branches: true state, reported bit, whether the pi pulse fires.
        let right = (1.0 + v) / 2.0;
        let mut oracle = 0.0;
        for (p_true, excited) in [(p_prep, true), (1.0 - p_prep, false)] {
            for (p_rep, reported) in [(right, excited), (1.0 - right, !excited)] {
                let after = excited != reported;
                oracle += p_true * p_rep * after as u8 as f64;
            }
        }
        let program = single_channel(0, ps.active_reset(prep, 0, setup.readout_window_cycles, 0), None);
        check(!ShotRunner::replayable(&program), || "active reset must run on the engine".into())?;
        let r = runner.monte_carlo(&program, point as u64, SHOTS).map_err(|e| e.to_string())?;
        let sigma = (oracle * (1.0 - oracle) / SHOTS as f64).sqrt();
        let p = r.mean_final_p1;
        check(p <= oracle + 3.0 * sigma && (p - oracle).abs() <= 3.0 * sigma, || {
            format!("prep {prep:?}: P1 after reset {p:.4}, oracle {oracle:.4} +- {:.4}", 3.0 * sigma)
        })?;
        lines.push(format!("{p:.4}"));
    }
    Ok(format!("P1 after reset [{}] vs oracle {:.2} (3 sigma {:.4})", lines.join(", "), (1.0 - v) / 2.0, 3.0 * (0.35f64 * 0.65 / SHOTS as f64).sqrt()))
}

fn multi_controller() -> Outcome {
    let o = common::ExecOptions {
        cycles: 20_000,
        conditionals: false,
        sync: true,
        readout: true,
        max_duration: 300,
    };
    let random = common::exec_program(0x3c, &o);
    let mut program = Program::new();
    for (ch, seq) in random.channels() {
        let mut s = vec![Instruction::stf(ch, 1 << 28, 1), Instruction::sta(ch, 20000, 2).on()];
        s.extend_from_slice(seq);
        program.set_channel(ch, s).unwrap();
    }
    let cfg = common::exec_config();
    let mut ctrl = Controller::load(&program, &cfg).map_err(|e| e.to_string())?;
    let mut single = ExecutionTrace::default();
    let mut src = ConstantStimulus {
        levels: common::READOUT_LEVELS.to_vec(),
    };
    run_until_halt(&mut ctrl, &mut MeasurementUnit::new(cfg.readout_table.clone(), 0), &mut src, &mut single, None)
        .map_err(|e| e.to_string())?;

    let parts = program.partition(3, |c| c as usize * 3 / NUM_CHANNELS);
    let units = |skews: [i64; 3]| -> Vec<UnitConfig> {
        parts
            .iter()
            .enumerate()
            .map(|(k, p)| UnitConfig {
                unit_id: k as u32,
                role: if k == 0 { Role::Conductor } else { Role::Performer },
                clock_skew_ps: skews[k],
                program: p.clone(),
            })
            .collect()
    };
    let opts = EnsembleOptions {
        config: cfg.clone(),
        readout_levels: common::READOUT_LEVELS.to_vec(),
        ..Default::default()
    };
    let aligned = orchestrate(&units([0; 3]), &opts).map_err(|e| e.to_string())?;
    let merged = aligned.merged().map_err(|e| e.to_string())?;
    check(merged.frames == single.frames, || "merged trace differs from the single-controller trace".into())?;
    check(merged.hash() == single.hash(), || "merged hash differs".into())?;

    let skews = [0, 800, -500];
    let cfg_units = units(skews);
    let skewed = orchestrate(&cfg_units, &opts).map_err(|e| e.to_string())?;
    let want: BTreeMap<u32, i64> = (0..3).map(|k| (k as u32, skews[k])).collect();
    let got = skewed.misalignment_ps();
    check(got == want, || format!("measured misalignment {got:?}, configured {want:?}"))?;
    let (e0, e1) = (aligned.edges(), skewed.edges());
    let mut shifted: Vec<_> = e0
        .iter()
        .map(|e| {
            let mut e = *e;
            e.time_ps += skews[e.unit_id as usize];
            e
        })
        .collect();
    shifted.sort();
    check(shifted == e1, || "edges are not shifted by exactly the configured skew".into())?;
    let fixed = deskew(&skewed, &skew_calibration(&cfg_units));
    check(worst_misalignment_ps(&fixed) == 0, || "deskew leaves residual misalignment".into())?;
    check(fixed.merged().map_err(|e| e.to_string())?.frames == single.frames, || "deskewed merge differs".into())?;
    Ok(format!(
        "{} cycles x 22 channels bit-identical; {} edges shifted by {:?} ps exactly",
        single.frames.len(),
        e1.len(),
        skews
    ))
}

/// Name, time budget and check.
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("isa round trip", Duration::from_secs(10), isa_round_trip),
        ("timing determinism", Duration::from_secs(60), timing_determinism),
        ("nco fidelity", Duration::from_secs(30), nco_fidelity),
        ("qmc image suppression", Duration::from_secs(10), qmc_suppression),
        ("rabi chevron", Duration::from_secs(60), chevron),
        ("ramsey and echo", Duration::from_secs(300), coherence),
        ("allxy staircase", Duration::from_secs(30), allxy_staircase),
        ("readout equivalence", Duration::from_secs(60), readout_equivalence),
        ("active reset", Duration::from_secs(120), active_reset),
        ("multi-controller", Duration::from_secs(60), multi_controller),
    ];
    let mut failed = 0;
    for (k, (name, budget, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let r = run();
        let dt = t.elapsed();
        let r = match r {
            Ok(d) if dt > *budget => Err(format!("{d}; took {dt:.1?}, budget {budget:?}")),
            other => other,
        };
        match r {
            Ok(d) => println!("PASS {:>2} {name} ({:.1} s): {d}", k + 1, dt.as_secs_f64()),
            Err(e) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({:.1} s): {e}", k + 1, dt.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
