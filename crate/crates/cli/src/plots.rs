//! Figures built from simulation statistics.

use jumpctl_core::simulate::{EnsembleStats, TrajectorySample};

use crate::svg::{emit_svg, Figure, Panel, Series};

fn column(rows: &[Vec<f64>], i: usize) -> Vec<f64> {
    rows.iter()
        .map(|r| r.get(i).copied().unwrap_or(f64::NAN))
        .collect()
}

fn panel(title: &str, y_label: &str, series: Vec<Series>) -> Panel {
    Panel {
        title: title.into(),
        x_label: "t (s)".into(),
        y_label: y_label.into(),
        series,
    }
}

type BandOf<'a> = &'a dyn Fn(&EnsembleStats) -> (Vec<f64>, Vec<f64>);

/// Spacing error, velocity error and control, mean ± one standard deviation
/// for each named ensemble.
pub fn acc_figure(title: &str, runs: &[(&str, &EnsembleStats)]) -> String {
    let band = |f: BandOf| -> Vec<Series> {
        runs.iter()
            .map(|(name, s)| {
                let (m, sd) = f(s);
                Series::band(*name, s.times.clone(), m, sd)
            })
            .collect()
    };
    let fig = Figure {
        title: title.into(),
        panels: vec![
            panel(
                "Spacing δ1 = p_ego − p_lead",
                "δ1 (m)",
                band(&|s| {
                    (
                        column(&s.mean_observables, 0),
                        column(&s.std_observables, 0),
                    )
                }),
            ),
            panel(
                "Velocity error v_ego − v_lead",
                "m/s",
                band(&|s| (column(&s.mean_state, 1), column(&s.std_state, 1))),
            ),
            panel(
                "Control",
                "u (m/s²)",
                band(&|s| (column(&s.mean_control, 0), column(&s.std_control, 0))),
            ),
        ],
    };
    emit_svg(&fig)
}

/// Mode of one sample path, numbered from 1.
pub fn mode_figure(title: &str, s: &TrajectorySample) -> String {
    let modes = s.modes.iter().map(|&m| (m + 1) as f64).collect();
    emit_svg(&Figure {
        title: title.into(),
        panels: vec![panel(
            "Mode",
            "mode",
            vec![Series::steps("mode", s.times.clone(), modes)],
        )],
    })
}

/// State, control, mean-square and mode-occupancy figures keyed by file name.
pub fn generic_figures(s: &EnsembleStats) -> Vec<(String, String)> {
    let n = s.mean_state.first().map_or(0, Vec::len);
    let m = s.mean_control.first().map_or(0, Vec::len);
    let nm = s.mode_fraction.first().map_or(0, Vec::len);
    let per = |mean: &[Vec<f64>], std: &[Vec<f64>], k: usize, label: &str| -> Vec<Series> {
        (0..k)
            .map(|i| {
                Series::band(
                    format!("{label}{}", i + 1),
                    s.times.clone(),
                    column(mean, i),
                    column(std, i),
                )
            })
            .collect()
    };
    let state = Figure {
        title: "State, mean ± std".into(),
        panels: vec![panel(
            "State",
            "x",
            per(&s.mean_state, &s.std_state, n, "x"),
        )],
    };
    let control = Figure {
        title: "Control, mean ± std".into(),
        panels: vec![panel(
            "Control",
            "u",
            per(&s.mean_control, &s.std_control, m, "u"),
        )],
    };
    let ms = Figure {
        title: "Mean square".into(),
        panels: vec![panel(
            "E[xᵀx] ± standard error",
            "E[xᵀx]",
            vec![Series::band(
                "E[xᵀx]",
                s.times.clone(),
                s.mean_sq.clone(),
                s.stderr_mean_sq.clone(),
            )],
        )],
    };
    let modes = Figure {
        title: "Mode occupancy".into(),
        panels: vec![panel(
            "Fraction of paths per mode",
            "fraction",
            (0..nm)
                .map(|i| {
                    Series::line(
                        format!("mode {}", i + 1),
                        s.times.clone(),
                        column(&s.mode_fraction, i),
                    )
                })
                .collect(),
        )],
    };
    vec![
        ("state.svg".into(), emit_svg(&state)),
        ("control.svg".into(), emit_svg(&control)),
        ("mean_sq.svg".into(), emit_svg(&ms)),
        ("mode.svg".into(), emit_svg(&modes)),
    ]
}
