//! Graphviz rendering of learned chains.

use std::fmt::Write;

use crate::learner::{Dtmc, LabeledChain, StateTag};

fn quote(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// One node per state and one edge per nonzero transition, both in state
/// order; outcome states are drawn as double circles.
pub fn chain_to_dot(chain: &LabeledChain) -> String {
    let mut out = String::from("digraph dtmc {\n  rankdir=LR;\n");
    for (i, (id, tag)) in chain.states.iter().enumerate() {
        let shape = if *tag == StateTag::Outcome {
            "doublecircle"
        } else {
            "circle"
        };
        let _ = writeln!(out, "  s{i} [label=\"{}\", shape={shape}];", quote(id));
    }
    for p in 0..chain.matrix.m() {
        for (q, &prob) in chain.matrix.row(p).iter().enumerate() {
            if prob > 0.0 {
                let _ = writeln!(out, "  s{p} -> s{q} [label=\"{prob:.4}\"];");
            }
        }
    }
    out.push_str("}\n");
    out
}

pub fn export_dot(dtmc: &Dtmc) -> String {
    chain_to_dot(&dtmc.labeled())
}
