//! Plain-text model dump in an LP-file-like layout, for debugging.
//!
//! ```text
//! Minimize
//!  obj: + 1 v0 - 2 v3
//! Subject To
//!  c0: + 1 v0 + 1 v1 <= 4
//! Bounds
//!  0 <= v0 <= 5
//!  v1 free
//! Binaries
//!  v2 v3
//! End
//! ```
//!
//! Variables are written as `v<index>`; the model-level names follow as
//! `\ name` comment lines in the `Bounds` section.

use std::fmt::Write;

use crate::model::{MilpModel, VarId, VarKind};

pub fn to_lp_string(model: &MilpModel) -> String {
    let mut out = String::new();
    out.push_str("Minimize\n obj:");
    out.push_str(&terms(model.objective()));
    out.push_str("\nSubject To\n");
    for (i, c) in model.constraints().iter().enumerate() {
        let _ = writeln!(out, " c{i}:{} {} {}", terms(&c.coeffs), c.relation.symbol(), c.rhs);
    }
    out.push_str("Bounds\n");
    for (id, v) in model.var_ids().zip(model.variables()) {
        if v.kind == VarKind::Binary {
            continue;
        }
        let _ = writeln!(out, " \\ {id} {}", v.name);
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (false, false) => {
                let _ = writeln!(out, " {id} free");
            }
            (true, false) => {
                let _ = writeln!(out, " {id} >= {}", v.lower);
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= {id} <= {}", v.upper);
            }
            (true, true) => {
                let _ = writeln!(out, " {} <= {id} <= {}", v.lower, v.upper);
            }
        }
    }
    let bins = model.binaries();
    if !bins.is_empty() {
        out.push_str("Binaries\n");
        let names: Vec<String> = bins.iter().map(VarId::to_string).collect();
        let _ = writeln!(out, " {}", names.join(" "));
    }
    out.push_str("End\n");
    out
}

fn terms(coeffs: &[(VarId, f64)]) -> String {
    if coeffs.is_empty() {
        return " 0".to_string();
    }
    let mut s = String::new();
    for &(v, c) in coeffs {
        let sign = if c < 0.0 { '-' } else { '+' };
        let _ = write!(s, " {sign} {} {v}", c.abs());
    }
    s
}
