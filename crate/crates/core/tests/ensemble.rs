// SPDX-License-Identifier: Apache-2.0

mod common;

use proptest::prelude::*;

use qctl_core::ensemble::{deskew, orchestrate, skew_calibration, worst_misalignment_ps, EnsembleOptions, Role, SyncKind, UnitConfig};
use qctl_core::exec::{run_until_halt, ConstantStimulus, Controller, ExecutionTrace};
use qctl_core::isa::{Instruction, Program};
use qctl_core::measure::MeasurementUnit;

fn options(start_cycle: u64) -> EnsembleOptions {
    EnsembleOptions {
        config: common::exec_config(),
        readout_levels: common::READOUT_LEVELS.to_vec(),
        start_cycle,
        ..Default::default()
    }
}

fn opts(cycles: u64) -> common::ExecOptions {
    common::ExecOptions {
        cycles,
        conditionals: false,
        sync: false,
        readout: true,
        max_duration: 60,
    }
}

/// Deals the channels of a program round-robin to one unit per skew. Every
/// channel opens with a marker pulse.
fn split(program: &Program, skews: &[i64]) -> Vec<UnitConfig> {
    let mut units: Vec<Program> = vec![Program::new(); skews.len()];
    for (ch, seq) in program.channels() {
        let mut marked = vec![Instruction::sta(ch, 12000, 2).on()];
        marked.extend(seq.iter().copied());
        units[ch as usize % skews.len()].set_channel(ch, marked).unwrap();
    }
    units
        .into_iter()
        .zip(skews)
        .enumerate()
        .map(|(k, (program, &skew))| UnitConfig {
            unit_id: 10 + k as u32,
            role: if k == 0 { Role::Conductor } else { Role::Performer },
            clock_skew_ps: skew,
            program,
        })
        .collect()
}

#[test]
fn lone_conductor_matches_the_engine() {
    let p = common::exec_program(3, &opts(3000));
    let cfg = common::exec_config();
    let mut ctrl = Controller::load(&p, &cfg).unwrap();
    let mut t = ExecutionTrace::default();
    let mut src = ConstantStimulus {
        levels: common::READOUT_LEVELS.to_vec(),
    };
    run_until_halt(&mut ctrl, &mut MeasurementUnit::new(cfg.readout_table.clone(), 0), &mut src, &mut t, None).unwrap();
    let unit = UnitConfig {
        unit_id: 0,
        role: Role::Conductor,
        clock_skew_ps: 0,
        program: p,
    };
    let e = orchestrate(&[unit], &options(16)).unwrap();
    assert_eq!(e.units.len(), 1);
    assert_eq!(e.units[0].trace, t);
    assert_eq!(e.merged().unwrap(), t);
    assert_eq!(e.protocol.iter().map(|m| m.kind).collect::<Vec<_>>(), vec![SyncKind::Arm, SyncKind::Start]);
}

#[test]
fn start_follows_every_ready() {
    let p = common::exec_program(4, &opts(200));
    let units = split(&p, &[0, 0, 0, 0, 0]);
    let e = orchestrate(&units, &options(40)).unwrap();
    let start = e.protocol.iter().position(|m| m.kind == SyncKind::Start).unwrap();
    let readies: Vec<u32> = e.protocol[..start].iter().filter(|m| m.kind == SyncKind::Ready).map(|m| m.sender).collect();
    assert_eq!(readies.len(), 4);
    assert_eq!(e.protocol[start].start_cycle, 40);
    assert_eq!(start, e.protocol.len() - 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ensemble_is_deterministic_and_skews_are_exact(
        seed in any::<u64>(),
        skews in prop::collection::vec(-4999i64..5000, 1..4),
        start in 1u64..100,
    ) {
        let p = common::exec_program(seed, &opts(400));
        let mut skews = skews;
        skews.insert(0, 0);
        let units = split(&p, &skews);
        let a = orchestrate(&units, &options(start)).unwrap();
        let b = orchestrate(&units, &options(start)).unwrap();
        prop_assert_eq!(&a, &b);

        let m = a.misalignment_ps();
        for u in &units {
            prop_assert_eq!(m[&u.unit_id], u.clock_skew_ps);
        }
        let fixed = deskew(&a, &skew_calibration(&units));
        prop_assert_eq!(worst_misalignment_ps(&fixed), 0);

        let zero: Vec<i64> = skews.iter().map(|_| 0).collect();
        let aligned = orchestrate(&split(&p, &zero), &options(start)).unwrap();
        prop_assert_eq!(fixed.merged().unwrap(), aligned.merged().unwrap());
        prop_assert_eq!(
            fixed.edges().iter().map(|e| e.time_ps).collect::<Vec<_>>(),
            aligned.edges().iter().map(|e| e.time_ps).collect::<Vec<_>>()
        );
    }
}
