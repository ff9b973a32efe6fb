//! CSV and JSON artifacts.

use std::path::Path;

use anyhow::{Context, Result};
use jumpctl_core::simulate::{EnsembleStats, TrajectorySample};
use serde::Serialize;

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn write_csv(
    path: &Path,
    header: &[String],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_ensemble_csv(path: &Path, s: &EnsembleStats) -> Result<()> {
    let nx = s.mean_state.first().map_or(0, Vec::len);
    let nu = s.mean_control.first().map_or(0, Vec::len);
    let nm = s.mode_fraction.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    for i in 1..=nx {
        header.push(format!("mean_x{i}"));
        header.push(format!("std_x{i}"));
    }
    header.push("mean_sq".into());
    header.push("stderr_mean_sq".into());
    for j in 1..=nu {
        header.push(format!("mean_u{j}"));
        header.push(format!("std_u{j}"));
    }
    for name in &s.observable_names {
        header.push(format!("mean_{name}"));
        header.push(format!("std_{name}"));
    }
    for m in 1..=nm {
        header.push(format!("frac_mode{m}"));
    }
    let rows = (0..s.times.len()).map(|k| {
        let mut r = vec![fmt_num(s.times[k])];
        for i in 0..nx {
            r.push(fmt_num(s.mean_state[k][i]));
            r.push(fmt_num(s.std_state[k][i]));
        }
        r.push(fmt_num(s.mean_sq[k]));
        r.push(fmt_num(s.stderr_mean_sq[k]));
        for j in 0..nu {
            r.push(fmt_num(s.mean_control[k][j]));
            r.push(fmt_num(s.std_control[k][j]));
        }
        for o in 0..s.observable_names.len() {
            r.push(fmt_num(s.mean_observables[k][o]));
            r.push(fmt_num(s.std_observables[k][o]));
        }
        for m in 0..nm {
            r.push(fmt_num(s.mode_fraction[k][m]));
        }
        r
    });
    write_csv(path, &header, rows)
}

/// Columns `t, mode, x…, y…, u…` plus any named observables. Modes are 1-based.
pub fn write_sample_csv(
    path: &Path,
    p: &TrajectorySample,
    observable_names: &[String],
) -> Result<()> {
    let nx = p.states.first().map_or(0, Vec::len);
    let ny = p.measurements.first().map_or(0, Vec::len);
    let nu = p.controls.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string(), "mode".to_string()];
    header.extend((1..=nx).map(|i| format!("x{i}")));
    header.extend((1..=ny).map(|i| format!("y{i}")));
    header.extend((1..=nu).map(|i| format!("u{i}")));
    header.extend(observable_names.iter().cloned());
    let rows = (0..p.times.len()).map(|k| {
        let mut r = vec![fmt_num(p.times[k]), (p.modes[k] + 1).to_string()];
        r.extend(p.states[k].iter().map(|&v| fmt_num(v)));
        r.extend(p.measurements[k].iter().map(|&v| fmt_num(v)));
        r.extend(p.controls[k].iter().map(|&v| fmt_num(v)));
        r.extend(p.observables[k].iter().map(|&v| fmt_num(v)));
        r
    });
    write_csv(path, &header, rows)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_num(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(fmt_num(f64::NAN), "NaN");
    }
}
