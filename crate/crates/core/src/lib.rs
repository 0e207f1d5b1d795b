// SPDX-License-Identifier: Apache-2.0

//! Minimum-path-cover guided path prioritization for a small symbolic
//! execution engine.

pub mod corpus;
pub mod dependence;
pub mod enumerate;
pub mod experiment;
pub mod graph;
pub mod icfg;
pub mod mpc;
pub mod ir;
pub mod searcher;
