// SPDX-License-Identifier: Apache-2.0

//! Cycle-accurate model of an instruction-driven qubit controller.

pub mod ensemble;
pub mod exec;
pub mod experiments;
pub mod isa;
pub mod measure;
pub mod qubit;
pub mod rng;
pub mod spectrum;
pub mod synth;
