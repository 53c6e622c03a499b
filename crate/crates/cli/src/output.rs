//! Deterministic result files.
//!
//! Every float is written with twelve fractional digits in scientific
//! notation and no file carries a timestamp, so identical configurations
//! produce byte-identical outputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use thermistor_core::{BoundaryControl, FieldHistory};

/// Writes one `t,x,<name>` row per (time level, node) pair.
pub fn write_field_csv(path: &Path, field_name: &str, u: &FieldHistory) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "t,x,{field_name}")?;
    let nodes = u.mesh().nodes();
    for n in 0..u.num_levels() {
        let t = u.time_at(n);
        for (x, v) in nodes.iter().zip(u.level(n)) {
            writeln!(w, "{t:.12e},{x:.12e},{v:.12e}")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the control: one `t,beta_left,beta_right` row per time level for a
/// trajectory, or a single `beta_constant` row for a scalar control.
pub fn write_beta_csv(path: &Path, beta: &BoundaryControl, dt: f64) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    match beta {
        BoundaryControl::Trajectory { left, right } => {
            writeln!(w, "t,beta_left,beta_right")?;
            for (n, (l, r)) in left.iter().zip(right).enumerate() {
                writeln!(w, "{:.12e},{l:.12e},{r:.12e}", n as f64 * dt)?;
            }
        }
        BoundaryControl::Constant(value) => {
            writeln!(w, "beta_constant")?;
            writeln!(w, "{value:.12e}")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes one `iteration,cost` row per recorded functional value.
pub fn write_cost_history_csv(path: &Path, history: &[f64]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "iteration,cost")?;
    for (i, cost) in history.iter().enumerate() {
        writeln!(w, "{i},{cost:.12e}")?;
    }
    w.flush()?;
    Ok(())
}

/// Serializes `value` as pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}
